// sae_lab: experiment driver. Talks to the library through the C API only.
//
// Exit codes: 0 success, 2 usage/config error, 3 data error (missing or
// malformed files, dimension mismatch), 4 numeric failure during training,
// 1 anything else.
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "saelab/c_api.h"

namespace {

struct ConfigDeleter {
  void operator()(saelab_config* c) const { saelab_config_free(c); }
};
using ConfigPtr = std::unique_ptr<saelab_config, ConfigDeleter>;

int report(saelab_status st) {
  if (st != SAELAB_OK)
    std::cerr << "sae_lab: " << saelab_status_name(st) << " error: " << saelab_last_error() << "\n";
  return saelab_exit_code(st);
}

struct Common {
  std::string config;
  std::string out;
  std::optional<unsigned long long> seed;
  std::string preset = "desk";
  std::optional<unsigned> threads;
  bool quiet = false;
};

unsigned resolve_threads(const Common& c) {
  if (c.threads) return *c.threads;
  if (const char* env = std::getenv("SAE_LAB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    std::cerr << "sae_lab: ignoring invalid SAE_LAB_THREADS=" << env << "\n";
  }
  return 1;
}

// Loads --config (or the built-in defaults when none is given and allowed)
// and applies the command-line overrides.
saelab_status make_config(const Common& c, bool config_required, ConfigPtr& out) {
  saelab_config* raw = nullptr;
  saelab_status st;
  if (!c.config.empty())
    st = saelab_config_load(c.config.c_str(), c.preset.c_str(), &raw);
  else if (config_required)
    return SAELAB_ERR_USAGE;
  else
    st = saelab_config_default(&raw);
  if (st != SAELAB_OK) return st;
  out.reset(raw);
  if (c.seed && (st = saelab_config_set_seed(raw, *c.seed)) != SAELAB_OK) return st;
  if ((st = saelab_config_set_threads(raw, resolve_threads(c))) != SAELAB_OK) return st;
  return saelab_config_set_verbose(raw, c.quiet ? 0 : 1);
}

void add_common(CLI::App* sub, Common& c, bool needs_config) {
  auto* opt = sub->add_option("--config", c.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  if (needs_config) opt->required();
  sub->add_option("--out", c.out, "Output directory")->required();
  sub->add_option("--seed", c.seed, "Override the config seed");
  sub->add_option("--preset", c.preset, "Scale preset")->check(CLI::IsMember({"desk", "paper"}));
  sub->add_option("--threads", c.threads, "Worker threads (default: SAE_LAB_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  sub->add_flag("-q,--quiet", c.quiet, "Suppress summaries");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse autoencoder concept-geometry laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", saelab_version());

  Common common;
  std::string data_dir, checkpoint;
  std::optional<double> extent;
  std::optional<std::size_t> resolution;
  std::vector<std::string> runs;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset with train/test splits");
  add_common(gen, common, true);

  auto* train = app.add_subcommand("train", "Train one model per sweep point");
  add_common(train, common, true);
  train->add_option("--data", data_dir, "Dataset directory (default: <out>/data)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a sweep directory");
  add_common(eval, common, false);
  eval->add_option("--checkpoint", checkpoint, "Sweep directory, sweep point or checkpoint")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();

  auto* raster = app.add_subcommand("raster", "Rasterize receptive fields of 2-D models");
  add_common(raster, common, false);
  raster->add_option("--checkpoint", checkpoint, "Sweep directory, sweep point or checkpoint")->required();
  raster->add_option("--data", data_dir, "Dataset directory")->required();
  raster->add_option("--extent", extent, "Grid half-width")->check(CLI::PositiveNumber);
  raster->add_option("--resolution", resolution, "Grid cells per axis")->check(CLI::Range(2, 1 << 14));

  auto* rep = app.add_subcommand("report", "Merge sweep reports into summary tables");
  rep->add_option("runs", runs, "Run or sweep directories")->required();
  rep->add_option("--out", common.out, "Output directory")->required();
  rep->add_flag("-q,--quiet", common.quiet, "Suppress summaries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (rep->parsed()) {
    std::vector<const char*> ptrs;
    for (const auto& r : runs) ptrs.push_back(r.c_str());
    return report(saelab_cmd_report(ptrs.data(), ptrs.size(), common.out.c_str(), common.quiet ? 0 : 1));
  }

  const bool recipe = gen->parsed() || train->parsed();
  ConfigPtr cfg;
  if (saelab_status st = make_config(common, recipe, cfg); st != SAELAB_OK) return report(st);

  if (gen->parsed()) return report(saelab_cmd_gen_data(cfg.get(), common.out.c_str()));
  if (train->parsed())
    return report(saelab_cmd_train(cfg.get(), common.out.c_str(), data_dir.empty() ? nullptr : data_dir.c_str()));
  if (eval->parsed())
    return report(saelab_cmd_eval(cfg.get(), checkpoint.c_str(), data_dir.c_str(), common.out.c_str()));
  if (raster->parsed()) {
    saelab_status st = SAELAB_OK;
    if (extent) st = saelab_config_set_raster_extent(cfg.get(), *extent);
    if (st == SAELAB_OK && resolution) st = saelab_config_set_raster_resolution(cfg.get(), *resolution);
    if (st != SAELAB_OK) return report(st);
    return report(saelab_cmd_raster(cfg.get(), checkpoint.c_str(), data_dir.c_str(), common.out.c_str()));
  }
  return 2;
}
