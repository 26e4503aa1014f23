#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "saelab/error.hpp"
#include "saelab/experiment.hpp"

using namespace saelab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("saelab_exp_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const char* kTiny = R"({"seed": 3, "dataset": {"kind": "separability", "n_per_concept": 200},
  "model": {"arch": "relu", "s": 12},
  "train": {"iterations": 40, "batch_size": 64, "eval_every": 20},
  "sweep": {"param": "gamma", "values": [0.001, 0.1]},
  "eval": {"similarity_per_concept": 10}})";

}  // namespace

TEST_CASE("presets fill in the desk and paper recipes") {
  const auto sep = parse_config(R"({"dataset": {"kind": "separability"}})");
  CHECK(sep.dataset.n_per_concept == 10000);
  CHECK(sep.model.s == 128);
  CHECK(sep.train.batch_size == 512);
  CHECK(sep.train.iterations == 2000);
  CHECK(sep.sweep.param == SweepParam::Gamma);
  CHECK(sep.sweep.values.size() == 5);
  const auto het = parse_config(R"({"dataset": {"kind": "heterogeneity"}, "model": {"arch": "topk"}})");
  CHECK(het.model.s == 512);
  CHECK(het.train.batch_size == 2048);
  CHECK(het.train.iterations == 4000);
  CHECK(het.sweep.param == SweepParam::K);
  CHECK(het.sweep.values == std::vector<double>{4, 8, 16, 32, 64});
  const auto paper = parse_config(R"({"dataset": {"kind": "separability"}})", Preset::Paper);
  CHECK(paper.dataset.n_per_concept == 1000000);
  CHECK(paper.train.iterations == 8000);
  const auto paper_het = parse_config(R"({"dataset": {"kind": "heterogeneity"}})", Preset::Paper);
  CHECK(paper_het.train.iterations == 10000);
  CHECK(parse_preset("paper") == Preset::Paper);
  CHECK_THROWS_AS(parse_preset("huge"), UsageError);
}

TEST_CASE("user values override the preset") {
  const auto c = parse_config(kTiny);
  CHECK(c.seed == 3);
  CHECK(c.model.arch == Arch::Relu);
  CHECK(c.model.s == 12);
  CHECK(c.train.iterations == 40);
  CHECK(c.train.lr_start == 1e-2);
  CHECK(c.sweep.values == std::vector<double>{0.001, 0.1});
  CHECK(c.eval.similarity_per_concept == 10);
}

TEST_CASE("config errors are usage errors") {
  CHECK_THROWS_AS(parse_config("{"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"model": {}})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "spiral"}})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "separability"}, "extra": 1})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "separability"}, "model": {"width": 3}})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "separability"}, "train": {"lr": 3}})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "separability"}, "model": {"s": "big"}})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "separability"}, "sweep": {"values": []}})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "separability"}, "sweep": {"param": "k", "values": [2]}})"),
                  UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "separability"}, "train": {"lr_end": 1}})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "separability"}, "model": {"init_std": 0}})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "external"}})"), UsageError);
  CHECK_THROWS_AS(load_config("no/such/config.json"), Error);
}

TEST_CASE("resolved config survives a json round trip") {
  const auto c = parse_config(kTiny);
  const std::string text = config_to_json(c);
  CHECK(config_to_json(parse_config(text)) == text);
}

TEST_CASE("sweep point names") {
  CHECK(sweep_point_name(SweepParam::Gamma, 0.001) == "gamma_0.001");
  CHECK(sweep_point_name(SweepParam::Gamma, 1e-6) == "gamma_1e-06");
  CHECK(sweep_point_name(SweepParam::K, 16) == "k_16");
}

TEST_CASE("init_std scales the encoder but not the decoder atoms") {
  auto c = parse_config(R"({"dataset": {"kind": "separability", "n_per_concept": 20}, "model": {"arch": "topk",
    "s": 8, "init_std": 4.0}, "sweep": {"param": "k", "values": [2]}})");
  const auto ds = make_dataset(c);
  const SaeModel a = make_model(c, 2, ds);
  c.model.init_std = 1.0;
  const SaeModel b = make_model(c, 2, ds);
  for (std::size_t i = 0; i < a.w.size(); ++i) CHECK(a.w.data()[i] == doctest::Approx(4.0 * b.w.data()[i]));
  CHECK(max_abs_diff(a.dec, b.dec) < 1e-12);
  CHECK(a.k == 2);
}

TEST_CASE("data-seeded prototypes come from training rows") {
  const auto c = parse_config(R"({"dataset": {"kind": "separability", "n_per_concept": 20},
    "model": {"arch": "spade", "s": 8, "prototype_init": "data"}})");
  const auto ds = make_dataset(c);
  const SaeModel m = make_model(c, 0.01, ds);
  CHECK(m.dec == m.w);
  for (std::size_t j = 0; j < m.s; ++j) {
    bool found = false;
    for (std::size_t r = 0; r < ds.size() && !found; ++r) found = ds.x(r, 0) == m.w(0, j) && ds.x(r, 1) == m.w(1, j);
    CHECK(found);
  }
}

TEST_CASE("gen-data, train, eval, raster and report end to end") {
  const auto cfg = parse_config(kTiny);
  const fs::path out = scratch("e2e");
  cmd_gen_data(cfg, out, nullptr);
  const std::string x1 = slurp(out / "data" / "X.saem");
  cmd_gen_data(cfg, out, nullptr);
  CHECK(slurp(out / "data" / "X.saem") == x1);
  CHECK(fs::exists(out / "data" / "train" / "labels.u32"));

  const auto outcomes = cmd_train(cfg, out, std::nullopt, nullptr);
  REQUIRE(outcomes.size() == 2);
  for (const auto& o : outcomes) CHECK(o.ok);
  for (const char* p : {"gamma_0.001", "gamma_0.1"}) {
    CHECK(fs::exists(out / p / "checkpoint" / "model.json"));
    CHECK(fs::exists(out / p / "history.csv"));
    CHECK(fs::exists(out / p / "report.json"));
    CHECK(!fs::exists(out / (std::string(".") + p + ".tmp")));
  }
  CHECK(fs::exists(out / "run_meta.json"));
  CHECK(find_points(out).size() == 2);

  const fs::path ev1 = out / "eval1", ev2 = out / "eval2";
  cmd_eval(out, out / "data", ev1, cfg, nullptr);
  cmd_eval(out, out / "data", ev2, cfg, nullptr);
  for (const auto& e : fs::recursive_directory_iterator(ev1)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), ev1);
    CHECK_MESSAGE(slurp(e.path()) == slurp(ev2 / rel), rel.string());
  }
  CHECK(fs::exists(ev1 / "nmse_vs_l0.csv"));
  CHECK(fs::exists(ev1 / "gamma_0.1" / "f1.csv"));
  CHECK(fs::exists(ev1 / "gamma_0.1" / "data_similarity.saem"));

  auto rcfg = cfg;
  rcfg.raster.resolution = 32;
  cmd_raster(out / "gamma_0.001", out / "data", out / "raster", rcfg, nullptr);
  const auto summary = json::parse(slurp(out / "raster" / "summary.json"));
  CHECK(summary.contains("concepts"));
  const Matrix r0 = read_matrix(out / "raster" / "raster_c0.saem");
  CHECK(r0.rows() == 32);
  CHECK(r0.cols() == 32);

  cmd_report({out}, out / "tables", nullptr);
  CHECK(fs::exists(out / "tables" / "summary.csv"));
  CHECK(fs::exists(out / "tables" / "f1_top.csv"));
  fs::remove_all(out);
}

TEST_CASE("identity-like model evaluates to zero error") {
  const auto cfg = parse_config(R"({"dataset": {"kind": "separability", "n_per_concept": 50},
    "model": {"arch": "relu", "s": 4}})");
  const fs::path out = scratch("identity");
  cmd_gen_data(cfg, out, nullptr);
  // Latents 0/1 pass +x and 2/3 pass -x, the decoder undoes the fixed scale.
  RngStream rng(1);
  SaeModel m = init_model(Arch::Relu, 2, 4, 0, rng);
  m.w = Matrix{{1.0, 0.0, -1.0, 0.0}, {0.0, 1.0, 0.0, -1.0}};
  m.dec = Matrix{{4.0, 0.0, -4.0, 0.0}, {0.0, 4.0, 0.0, -4.0}};
  save_model(m, out / "toy" / "checkpoint");
  cmd_eval(out / "toy", out / "data", out / "toy_eval", cfg, nullptr);
  const auto rep = report_from_json(slurp(out / "toy_eval" / "report.json"));
  for (const auto& c : rep.concepts) CHECK(c.nmse < 1e-24);
  fs::remove_all(out);
}

TEST_CASE("command input errors") {
  const auto cfg = parse_config(kTiny);
  const fs::path out = scratch("errors");
  CHECK_THROWS_AS(cmd_train(cfg, out, out / "nodata", nullptr), IoError);
  cmd_gen_data(cfg, out, nullptr);
  // Heterogeneity model against 2-D data.
  RngStream rng(2);
  save_model(init_model(Arch::Relu, 128, 4, 0, rng), out / "wide" / "checkpoint");
  CHECK_THROWS_AS(cmd_eval(out / "wide", out / "data", out / "ev", cfg, nullptr), InvalidArgument);
  CHECK_THROWS_AS(cmd_raster(out / "wide", out / "data", out / "rs", cfg, nullptr), InvalidArgument);
  fs::remove_all(out);
}

TEST_CASE("a non-finite batch fails only its sweep point and leaves a diagnostic") {
  const auto cfg = parse_config(kTiny);
  const fs::path out = scratch("nan");
  cmd_gen_data(cfg, out, nullptr);
  auto train_set = load_dataset(out / "data" / "train");
  train_set.x(0, 1) = std::numeric_limits<double>::infinity();
  save_dataset(train_set, out / "data" / "train");
  const auto outcomes = cmd_train(cfg, out, std::nullopt, nullptr);
  for (const auto& o : outcomes) {
    CHECK(!o.ok);
    CHECK(o.failed_step >= 0);
    CHECK(!fs::exists(out / o.point));
    const auto diag = json::parse(slurp(out / (o.point + ".diagnostic.json")));
    CHECK(diag.contains("batch_index"));
  }
  fs::remove_all(out);
}
