#include "saelab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "saelab/error.hpp"

namespace saelab {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Separability: return "separability";
    case DatasetKind::Heterogeneity: return "heterogeneity";
    case DatasetKind::External: return "external";
  }
  return "unknown";
}

std::string to_string(SweepParam p) { return p == SweepParam::K ? "k" : "gamma"; }

Preset parse_preset(const std::string& name) {
  if (name == "desk") return Preset::Desk;
  if (name == "paper") return Preset::Paper;
  throw UsageError("unknown preset '" + name + "' (expected desk or paper)");
}

namespace {

DatasetKind parse_kind(const std::string& s) {
  if (s == "separability") return DatasetKind::Separability;
  if (s == "heterogeneity") return DatasetKind::Heterogeneity;
  if (s == "external") return DatasetKind::External;
  throw UsageError("config: unknown dataset kind '" + s + "' (expected separability, heterogeneity or external)");
}

// Preset values that depend on the dataset kind.
json preset_json(DatasetKind kind, Preset preset) {
  const bool het = kind == DatasetKind::Heterogeneity;
  const bool paper = preset == Preset::Paper;
  std::size_t n = paper ? (het ? 6400000 : 1000000) : 10000;
  std::size_t iterations = paper ? (het ? 10000 : 8000) : (het ? 4000 : 2000);
  return {{"dataset", {{"n_per_concept", n}}},
          {"model", {{"s", het ? 512 : 128}}},
          {"train", {{"batch_size", het ? 2048 : 512}, {"iterations", iterations}}}};
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key))
      throw UsageError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config: '" + where + "." + key + "' has the wrong type");
  }
}

std::size_t read_count(const json& obj, const char* key, std::size_t fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw UsageError("config: '" + where + "." + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.kind != DatasetKind::External) {
    if (dataset.n_per_concept < 1) throw UsageError("config: dataset.n_per_concept must be at least 1");
  } else if (dataset.path.empty()) {
    throw UsageError("config: dataset.path is required for kind external");
  }
  if (!(dataset.variance > 0.0)) throw UsageError("config: dataset.variance must be positive");
  if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0))
    throw UsageError("config: dataset.train_fraction must lie in (0, 1)");
  if (model.s < 1) throw UsageError("config: model.s must be at least 1");
  if (!(model.init_std > 0.0) || !std::isfinite(model.init_std))
    throw UsageError("config: model.init_std must be positive");
  if (!(model.options.bandwidth > 0.0)) throw UsageError("config: model.bandwidth must be positive");
  if (sweep.values.empty()) throw UsageError("config: sweep.values must be nonempty");
  for (double v : sweep.values) {
    if (sweep.param == SweepParam::K) {
      if (model.arch != Arch::TopK) throw UsageError("config: a k sweep requires arch topk");
      if (v < 1 || v > static_cast<double>(model.s) || v != std::floor(v))
        throw UsageError("config: sweep k values must be integers in [1, s]");
    } else if (!(v >= 0.0) || !std::isfinite(v)) {
      throw UsageError("config: sweep gamma values must be finite and non-negative");
    }
  }
  if (model.arch == Arch::TopK && sweep.param == SweepParam::Gamma && (model.k < 1 || model.k > model.s))
    throw UsageError("config: model.k must lie in [1, s]");
  try {
    train.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (!(eval.threshold > 0.0)) throw UsageError("config: eval.threshold must be positive");
  if (eval.top_n < 1) throw UsageError("config: eval.top_n must be at least 1");
  if (raster.resolution < 2) throw UsageError("config: raster.resolution must be at least 2");
  if (!(raster.extent > 0.0)) throw UsageError("config: raster.extent must be positive");
  if (threads < 1) throw UsageError("threads must be at least 1");
}

static ExperimentConfig parse_config_impl(const std::string& text, Preset preset) {
  json user;
  try {
    user = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config: not valid JSON: ") + e.what());
  }
  check_keys(user, {"seed", "dataset", "model", "train", "sweep", "eval", "raster"}, "");
  if (!user.contains("dataset") || !user["dataset"].contains("kind"))
    throw UsageError("config: dataset.kind is required");
  check_keys(user["dataset"], {"kind", "n_per_concept", "variance", "train_fraction", "path"}, "dataset");
  std::string kind_name;
  read(user["dataset"], "kind", kind_name, "dataset");
  const DatasetKind kind = parse_kind(kind_name);

  json j = preset_json(kind, preset);
  j.merge_patch(user);

  ExperimentConfig cfg;
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw UsageError("config: 'seed' must be a non-negative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }

  const json& ds = j["dataset"];
  cfg.dataset.kind = kind;
  cfg.dataset.n_per_concept = read_count(ds, "n_per_concept", cfg.dataset.n_per_concept, "dataset");
  read(ds, "variance", cfg.dataset.variance, "dataset");
  read(ds, "train_fraction", cfg.dataset.train_fraction, "dataset");
  std::string path;
  read(ds, "path", path, "dataset");
  cfg.dataset.path = path;

  const json md = j.value("model", json::object());
  check_keys(md, {"arch", "s", "k", "scale_placement", "bandwidth", "kernel", "theta_init", "dead_window",
                  "prototype_init", "init_std"},
             "model");
  if (md.contains("arch")) cfg.model.arch = parse_arch(md["arch"].get<std::string>());
  cfg.model.s = read_count(md, "s", cfg.model.s, "model");
  cfg.model.k = read_count(md, "k", cfg.model.k, "model");
  if (md.contains("scale_placement")) {
    const auto p = md["scale_placement"].get<std::string>();
    if (p != "pre" && p != "post") throw UsageError("config: model.scale_placement must be pre or post");
    cfg.model.options.placement = p == "pre" ? ScalePlacement::PreActivation : ScalePlacement::PostActivation;
  }
  read(md, "bandwidth", cfg.model.options.bandwidth, "model");
  if (md.contains("kernel")) {
    const auto k = md["kernel"].get<std::string>();
    if (k != "rectangular" && k != "silverman") throw UsageError("config: model.kernel must be rectangular or silverman");
    cfg.model.options.kernel = k == "silverman" ? StepKernel::Silverman : StepKernel::Rectangular;
  }
  read(md, "theta_init", cfg.model.options.theta_init, "model");
  cfg.model.options.dead_window =
      static_cast<std::uint32_t>(read_count(md, "dead_window", cfg.model.options.dead_window, "model"));
  read(md, "init_std", cfg.model.init_std, "model");
  if (md.contains("prototype_init")) {
    const auto p = md["prototype_init"].get<std::string>();
    if (p != "normal" && p != "data") throw UsageError("config: model.prototype_init must be normal or data");
    cfg.model.init = p == "data" ? PrototypeInit::Data : PrototypeInit::Normal;
  }

  const json tr = j.value("train", json::object());
  check_keys(tr, {"lr_start", "lr_end", "beta1", "beta2", "eps", "batch_size", "iterations", "clip_norm", "gamma",
                  "gamma_aux", "k_aux", "eval_every"},
             "train");
  read(tr, "lr_start", cfg.train.lr_start, "train");
  read(tr, "lr_end", cfg.train.lr_end, "train");
  read(tr, "beta1", cfg.train.beta1, "train");
  read(tr, "beta2", cfg.train.beta2, "train");
  read(tr, "eps", cfg.train.eps, "train");
  cfg.train.batch_size = read_count(tr, "batch_size", cfg.train.batch_size, "train");
  cfg.train.iterations = read_count(tr, "iterations", cfg.train.iterations, "train");
  read(tr, "clip_norm", cfg.train.clip_norm, "train");
  read(tr, "gamma", cfg.train.gamma, "train");
  read(tr, "gamma_aux", cfg.train.gamma_aux, "train");
  cfg.train.k_aux = read_count(tr, "k_aux", cfg.train.k_aux, "train");
  cfg.train.eval_every = read_count(tr, "eval_every", cfg.train.eval_every, "train");

  const json sw = j.value("sweep", json::object());
  check_keys(sw, {"param", "values"}, "sweep");
  const bool topk = cfg.model.arch == Arch::TopK;
  cfg.sweep.param = topk ? SweepParam::K : SweepParam::Gamma;
  if (sw.contains("param")) {
    const auto p = sw["param"].get<std::string>();
    if (p != "gamma" && p != "k") throw UsageError("config: sweep.param must be gamma or k");
    cfg.sweep.param = p == "k" ? SweepParam::K : SweepParam::Gamma;
  }
  if (sw.contains("values")) {
    read(sw, "values", cfg.sweep.values, "sweep");
  } else if (cfg.sweep.param == SweepParam::K) {
    cfg.sweep.values = {4, 8, 16, 32, 64};
  } else {
    cfg.sweep.values = {1e-6, 1e-4, 1e-2, 1e-1, 1.0};
  }

  const json ev = j.value("eval", json::object());
  check_keys(ev, {"threshold", "top_n", "similarity_per_concept", "samples_per_concept"}, "eval");
  read(ev, "threshold", cfg.eval.threshold, "eval");
  cfg.eval.top_n = read_count(ev, "top_n", cfg.eval.top_n, "eval");
  cfg.eval.similarity_per_concept = read_count(ev, "similarity_per_concept", cfg.eval.similarity_per_concept, "eval");
  cfg.eval_samples_per_concept = read_count(ev, "samples_per_concept", 0, "eval");

  const json rs = j.value("raster", json::object());
  check_keys(rs, {"extent", "resolution", "cone_samples"}, "raster");
  read(rs, "extent", cfg.raster.extent, "raster");
  cfg.raster.resolution = read_count(rs, "resolution", cfg.raster.resolution, "raster");
  cfg.raster.cone_samples = read_count(rs, "cone_samples", cfg.raster.cone_samples, "raster");

  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& text, Preset preset) {
  try {
    return parse_config_impl(text, preset);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path, Preset preset) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), preset);
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["dataset"] = {{"kind", to_string(c.dataset.kind)},
                  {"n_per_concept", c.dataset.n_per_concept},
                  {"variance", c.dataset.variance},
                  {"train_fraction", c.dataset.train_fraction}};
  if (!c.dataset.path.empty()) j["dataset"]["path"] = c.dataset.path.string();
  j["model"] = {{"arch", to_string(c.model.arch)},
                {"s", c.model.s},
                {"k", c.model.k},
                {"scale_placement", c.model.options.placement == ScalePlacement::PreActivation ? "pre" : "post"},
                {"bandwidth", c.model.options.bandwidth},
                {"kernel", c.model.options.kernel == StepKernel::Silverman ? "silverman" : "rectangular"},
                {"theta_init", c.model.options.theta_init},
                {"dead_window", c.model.options.dead_window},
                {"prototype_init", c.model.init == PrototypeInit::Data ? "data" : "normal"},
                {"init_std", c.model.init_std}};
  j["train"] = {{"lr_start", c.train.lr_start},     {"lr_end", c.train.lr_end},
                {"beta1", c.train.beta1},           {"beta2", c.train.beta2},
                {"eps", c.train.eps},               {"batch_size", c.train.batch_size},
                {"iterations", c.train.iterations}, {"clip_norm", c.train.clip_norm},
                {"gamma", c.train.gamma},           {"gamma_aux", c.train.gamma_aux},
                {"k_aux", c.train.k_aux},           {"eval_every", c.train.eval_every}};
  j["sweep"] = {{"param", to_string(c.sweep.param)}, {"values", c.sweep.values}};
  j["eval"] = {{"threshold", c.eval.threshold},
               {"top_n", c.eval.top_n},
               {"similarity_per_concept", c.eval.similarity_per_concept},
               {"samples_per_concept", c.eval_samples_per_concept}};
  j["raster"] = {{"extent", c.raster.extent},
                 {"resolution", c.raster.resolution},
                 {"cone_samples", c.raster.cone_samples}};
  return j.dump(2);
}

std::string sweep_point_name(SweepParam param, double value) {
  char buf[64];
  if (param == SweepParam::K)
    std::snprintf(buf, sizeof buf, "k_%lld", static_cast<long long>(value));
  else
    std::snprintf(buf, sizeof buf, "gamma_%g", value);
  return buf;
}

RngStream data_stream(std::uint64_t seed) { return RngStream(seed).split(1); }
RngStream split_stream(std::uint64_t seed) { return RngStream(seed).split(2); }
RngStream model_stream(std::uint64_t seed) { return RngStream(seed).split(3); }
std::uint64_t train_seed(std::uint64_t seed) { return mix64(seed ^ 0x747261696e000004ULL); }

LabeledDataset make_dataset(const ExperimentConfig& cfg) {
  RngStream rng = data_stream(cfg.seed);
  switch (cfg.dataset.kind) {
    case DatasetKind::Separability: return gen_separability(cfg.dataset.n_per_concept, cfg.dataset.variance, rng);
    case DatasetKind::Heterogeneity: return gen_heterogeneity(cfg.dataset.n_per_concept, rng);
    case DatasetKind::External: return load_dataset(cfg.dataset.path);
  }
  throw UsageError("unknown dataset kind");
}

SaeModel make_model(const ExperimentConfig& cfg, double sweep_value, const LabeledDataset& train_set) {
  std::size_t k = cfg.model.k;
  if (cfg.sweep.param == SweepParam::K) k = static_cast<std::size_t>(sweep_value);
  RngStream rng = model_stream(cfg.seed);
  SaeModel m = init_model(cfg.model.arch, train_set.dim(), cfg.model.s, k, rng, cfg.model.options);
  if (cfg.model.init == PrototypeInit::Data) {
    seed_prototypes(m, train_set.x, rng);
  } else if (cfg.model.init_std != 1.0) {
    for (std::size_t i = 0; i < m.w.rows() * m.w.cols(); ++i) m.w.data()[i] *= cfg.model.init_std;
    if (m.arch == Arch::Spade) m.dec = m.w;
  }
  return m;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
// exception (by index) is rethrown after every worker finishes.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct PointInfo {
  std::string arch;
  std::string param;
  double value = 0.0;
  bool has_value = false;
};

json point_json(const PointInfo& p) {
  json j = {{"arch", p.arch}};
  if (p.has_value) {
    j["param"] = p.param;
    j["value"] = p.value;
  }
  return j;
}

PointInfo read_point_info(const fs::path& point_dir, const SaeModel& m) {
  PointInfo info;
  info.arch = to_string(m.arch);
  const fs::path meta = point_dir / "point.json";
  if (fs::exists(meta)) {
    try {
      const json j = json::parse(read_text(meta));
      if (j.contains("param")) {
        info.param = j["param"].get<std::string>();
        info.value = j["value"].get<double>();
        info.has_value = true;
      }
    } catch (const json::exception& e) {
      throw FormatError("malformed " + meta.string() + ": " + e.what());
    }
  }
  return info;
}

fs::path checkpoint_of(const fs::path& point) {
  return fs::exists(point / "checkpoint" / "model.json") ? point / "checkpoint" : point;
}

fs::path resolve_data_dir(const std::optional<fs::path>& given, const fs::path& base) {
  if (given) return *given;
  for (const fs::path& cand : {base / "data", base.parent_path() / "data"})
    if (fs::exists(cand / "X.saem")) return cand;
  throw IoError("no dataset directory given and none found at " + (base / "data").string());
}

LabeledDataset limit_per_concept(const LabeledDataset& ds, std::size_t n) {
  return n == 0 ? ds : take_per_concept(ds, n);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

LabeledDataset load_eval_split(const fs::path& dir) {
  if (fs::exists(dir / "test" / "X.saem")) return load_dataset(dir / "test");
  return load_dataset(dir);
}

std::vector<fs::path> find_points(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
  if (fs::exists(dir / "model.json") || fs::exists(dir / "checkpoint" / "model.json")) return {dir};
  std::vector<fs::path> points;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_directory() || name.empty() || name.front() == '.') continue;
    if (fs::exists(entry.path() / "checkpoint" / "model.json")) points.push_back(entry.path());
  }
  std::sort(points.begin(), points.end());
  if (points.empty()) throw IoError("no checkpoints found under " + dir.string());
  return points;
}

void cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out, std::ostream* log) {
  cfg.validate();
  const LabeledDataset ds = make_dataset(cfg);
  RngStream rng = split_stream(cfg.seed);
  auto [train_set, test_set] = split(ds, cfg.dataset.train_fraction, rng);
  const fs::path dir = out / "data";
  save_dataset(ds, dir);
  save_dataset(train_set, dir / "train");
  save_dataset(test_set, dir / "test");

  if (!log) return;
  *log << "dataset " << to_string(cfg.dataset.kind) << ": " << ds.size() << " samples, dim " << ds.dim() << ", "
       << ds.num_concepts() << " concepts (train " << train_set.size() << ", test " << test_set.size() << ")\n";
  *log << "concept  count  intrinsic_dim  mean_norm  variance\n";
  const auto counts = ds.concept_counts();
  for (std::size_t c = 0; c < ds.num_concepts(); ++c) {
    const auto rows = ds.rows_of(static_cast<std::uint32_t>(c));
    std::vector<double> mean(ds.dim(), 0.0);
    double norm_sum = 0.0;
    for (auto r : rows) {
      const auto x = ds.x.row(r);
      norm_sum += norm2(x);
      for (std::size_t k = 0; k < ds.dim(); ++k) mean[k] += x[k];
    }
    for (double& v : mean) v /= static_cast<double>(rows.size());
    double var = 0.0;
    for (auto r : rows) {
      const auto x = ds.x.row(r);
      for (std::size_t k = 0; k < ds.dim(); ++k) var += (x[k] - mean[k]) * (x[k] - mean[k]);
    }
    var /= static_cast<double>(rows.size());
    *log << std::setw(7) << c << std::setw(7) << counts[c] << std::setw(15) << ds.concepts[c].intrinsic_dim
         << std::setw(11) << std::setprecision(4) << norm_sum / static_cast<double>(rows.size()) << std::setw(10)
         << var << '\n';
  }
}

std::vector<TrainOutcome> cmd_train(const ExperimentConfig& cfg, const fs::path& out,
                                    const std::optional<fs::path>& data_dir, std::ostream* log) {
  cfg.validate();
  const fs::path data = resolve_data_dir(data_dir, out);
  if (!fs::exists(data / "train" / "X.saem"))
    throw IoError("training split not found: " + (data / "train").string());
  const LabeledDataset train_set = load_dataset(data / "train");
  const LabeledDataset test_set = load_dataset(data / "test");
  const LabeledDataset snapshot_set = take_per_concept(test_set, 1000);
  const LabeledDataset report_set = limit_per_concept(test_set, cfg.eval_samples_per_concept);

  fs::create_directories(out);
  write_text(out / "config.json", config_to_json(cfg));
  const std::string started = utc_timestamp();
  const auto t0 = std::chrono::steady_clock::now();

  const std::size_t count = cfg.sweep.values.size();
  std::vector<TrainOutcome> outcomes(count);
  std::vector<double> seconds(count, 0.0);
  parallel_for(count, cfg.threads, [&](std::size_t p) {
    const double value = cfg.sweep.values[p];
    const std::string name = sweep_point_name(cfg.sweep.param, value);
    TrainOutcome& oc = outcomes[p];
    oc.point = name;
    ExperimentConfig point_cfg = cfg;
    if (cfg.sweep.param == SweepParam::Gamma) point_cfg.train.gamma = value;
    point_cfg.train.seed = train_seed(cfg.seed);

    const auto start = std::chrono::steady_clock::now();
    SaeModel m = make_model(point_cfg, value, train_set);
    const fs::path tmp = out / ("." + name + ".tmp");
    const fs::path final_dir = out / name;
    const fs::path diag = out / (name + ".diagnostic.json");
    fs::remove_all(tmp);
    fs::remove(diag);
    TrainHistory history;
    try {
      history = train(m, train_set, snapshot_set, point_cfg.train);
    } catch (const NumericFailure& e) {
      oc.error = e.what();
      oc.failed_step = e.step();
      write_text(diag, json{{"point", name},
                            {"error", e.what()},
                            {"step", e.step()},
                            {"batch_index", e.batch_index()},
                            {"seed", cfg.seed}}
                           .dump(2));
      return;
    }
    fs::create_directories(tmp);
    save_model(m, tmp / "checkpoint");
    write_history_csv(history, tmp / "history.csv");
    ReportOptions ro = cfg.eval;
    ro.seed = cfg.seed;
    const ReportBundle bundle = build_report(m, report_set, ro);
    write_text(tmp / "report.json", report_to_json(bundle.report));
    write_text(tmp / "point.json", point_json({to_string(m.arch), to_string(cfg.sweep.param), value, true}).dump(2));
    fs::remove_all(final_dir);
    fs::rename(tmp, final_dir);
    oc.ok = true;
    seconds[p] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  json meta = {{"started", started},
               {"finished", utc_timestamp()},
               {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
               {"threads", cfg.threads}};
  json pts = json::array();
  for (std::size_t p = 0; p < count; ++p)
    pts.push_back({{"point", outcomes[p].point}, {"ok", outcomes[p].ok}, {"seconds", seconds[p]}});
  meta["points"] = pts;
  write_text(out / "run_meta.json", meta.dump(2));

  if (log) {
    for (std::size_t p = 0; p < count; ++p) {
      const auto& oc = outcomes[p];
      if (!oc.ok) {
        *log << oc.point << ": FAILED " << oc.error << '\n';
        continue;
      }
      const ConceptReport r = report_from_json(read_text(out / oc.point / "report.json"));
      *log << oc.point << ": " << to_string(cfg.model.arch) << " mean_l0=" << std::setprecision(4) << r.mean_l0
           << " dead=" << r.dead_fraction << " nmse=[";
      for (std::size_t c = 0; c < r.concepts.size(); ++c) *log << (c ? " " : "") << r.concepts[c].nmse;
      *log << "] top_f1=[";
      for (std::size_t c = 0; c < r.concepts.size(); ++c)
        *log << (c ? " " : "") << (r.concepts[c].top_f1.empty() ? 0.0 : r.concepts[c].top_f1.front());
      *log << "]\n";
    }
  }
  return outcomes;
}

void cmd_eval(const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out,
              const ExperimentConfig& cfg, std::ostream* log) {
  const auto points = find_points(checkpoint);
  const bool single = points.size() == 1 && points.front() == checkpoint;
  const LabeledDataset eval_set = limit_per_concept(load_eval_split(data_dir), cfg.eval_samples_per_concept);
  fs::create_directories(out);

  std::vector<std::string> rows(points.size());
  parallel_for(points.size(), cfg.threads, [&](std::size_t p) {
    const SaeModel m = load_model(checkpoint_of(points[p]));
    if (m.d != eval_set.dim())
      throw InvalidArgument("checkpoint dimension " + std::to_string(m.d) + " does not match dataset dimension " +
                            std::to_string(eval_set.dim()));
    const PointInfo info = read_point_info(points[p], m);
    const std::string name = single ? std::string("model") : points[p].filename().string();
    const fs::path dst = single ? out : out / name;
    fs::create_directories(dst);
    ReportOptions ro = cfg.eval;
    ro.seed = cfg.seed;
    const ReportBundle b = build_report(m, eval_set, ro);
    write_text(dst / "report.json", report_to_json(b.report));
    write_text(dst / "point.json", point_json(info).dump(2));
    write_f1_csv(b.f1, dst / "f1.csv");
    if (b.data_sim) {
      write_matrix(dst / "data_similarity.saem", b.data_sim->values);
      std::vector<std::uint32_t> order(b.data_sim->ordering.begin(), b.data_sim->ordering.end());
      write_labels(dst / "data_similarity_order.u32", order);
    }
    if (b.latent_sim) {
      write_matrix(dst / "latent_similarity.saem", b.latent_sim->values);
      std::vector<std::uint32_t> order(b.latent_sim->ordering.begin(), b.latent_sim->ordering.end());
      write_labels(dst / "latent_similarity_order.u32", order);
    }
    std::ostringstream os;
    for (const auto& c : b.report.concepts)
      os << name << ',' << info.arch << ',' << info.param << ',' << (info.has_value ? format_double(info.value) : "")
         << ',' << c.concept_id << ',' << c.intrinsic_dim << ',' << format_double(c.center_norm) << ','
         << format_double(c.l0) << ',' << format_double(c.nmse) << ','
         << format_double(c.top_f1.empty() ? 0.0 : c.top_f1.front()) << '\n';
    rows[p] = os.str();
  });

  std::string csv = "point,arch,param,value,concept,intrinsic_dim,center_norm,l0,nmse,top1_f1\n";
  for (const auto& r : rows) csv += r;
  write_text(out / "nmse_vs_l0.csv", csv);
  if (log) *log << "evaluated " << points.size() << " checkpoint(s) on " << eval_set.size() << " samples -> " << out.string() << '\n';
}

void cmd_raster(const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out,
                const ExperimentConfig& cfg, std::ostream* log) {
  const auto points = find_points(checkpoint);
  const bool single = points.size() == 1 && points.front() == checkpoint;
  const LabeledDataset eval_set = limit_per_concept(load_eval_split(data_dir), cfg.eval_samples_per_concept);
  GridSpec grid;
  grid.x_min = grid.y_min = -cfg.raster.extent;
  grid.x_max = grid.y_max = cfg.raster.extent;
  grid.resolution = cfg.raster.resolution;
  fs::create_directories(out);

  std::vector<std::string> lines(points.size());
  parallel_for(points.size(), cfg.threads, [&](std::size_t p) {
    const SaeModel m = load_model(checkpoint_of(points[p]));
    if (m.d != 2) throw InvalidArgument("raster: model input dimension is " + std::to_string(m.d) + ", expected 2");
    if (eval_set.dim() != 2) throw InvalidArgument("raster: dataset dimension must be 2");
    const PointInfo info = read_point_info(points[p], m);
    const std::string name = single ? std::string("model") : points[p].filename().string();
    const fs::path dst = single ? out : out / name;
    fs::create_directories(dst);

    const Matrix z = encode_batch(m, eval_set.x);
    const F1Table f1 = latent_concept_f1(z, eval_set.labels, eval_set.num_concepts(), cfg.eval.threshold);
    json concepts = json::array();
    std::size_t half_pass = 0, cone_pass = 0;
    for (std::size_t c = 0; c < eval_set.num_concepts(); ++c) {
      const std::size_t latent = top_n_latents(f1, c, 1).front();
      const RasterGrid raster = raster_rf(m, latent, grid);
      write_matrix(dst / ("raster_c" + std::to_string(c) + ".saem"), raster.activations);
      const HalfspaceVerdict hv = rf_halfspace_test(raster);
      half_pass += hv.pass ? 1 : 0;
      json entry = {{"concept", c},
                    {"center_norm", eval_set.concepts[c].norm},
                    {"latent", latent},
                    {"f1", f1.f1(latent, c)},
                    {"raster", "raster_c" + std::to_string(c) + ".saem"},
                    {"halfspace",
                     {{"pass", hv.pass},
                      {"fit_score", hv.fit_score},
                      {"vacuous", hv.vacuous},
                      {"boundary_points", hv.boundary_points}}}};
      if (m.arch == Arch::TopK) {
        RngStream rng = RngStream(cfg.seed).split(100 + c);
        const ConeVerdict cv = rf_cone_test(m, latent, rng, cfg.raster.cone_samples);
        cone_pass += cv.pass ? 1 : 0;
        entry["cone"] = {{"pass", cv.pass}, {"fraction", cv.fraction}, {"vacuous", cv.vacuous}, {"samples", cv.samples}};
      }
      concepts.push_back(entry);
    }
    json summary = point_json(info);
    summary["grid"] = {{"extent", cfg.raster.extent}, {"resolution", cfg.raster.resolution}};
    summary["concepts"] = concepts;
    write_text(dst / "summary.json", summary.dump(2));
    std::ostringstream os;
    os << name << ": halfspace pass " << half_pass << "/" << eval_set.num_concepts();
    if (m.arch == Arch::TopK) os << ", cone pass " << cone_pass << "/" << eval_set.num_concepts();
    lines[p] = os.str();
  });
  if (log)
    for (const auto& l : lines) *log << l << '\n';
}

void cmd_report(const std::vector<fs::path>& runs, const fs::path& out, std::ostream* log) {
  if (runs.empty()) throw UsageError("report: no run directories given");
  struct Entry {
    fs::path dir;
    PointInfo info;
    ConceptReport report;
  };
  std::vector<Entry> entries;
  for (const auto& run : runs) {
    if (!fs::is_directory(run)) throw IoError("run directory not found: " + run.string());
    std::vector<fs::path> dirs;
    if (fs::exists(run / "report.json")) dirs.push_back(run);
    for (const auto& e : fs::directory_iterator(run))
      if (e.is_directory() && fs::exists(e.path() / "report.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      Entry en{d, {}, report_from_json(read_text(d / "report.json"))};
      en.info.arch = en.report.arch;
      if (fs::exists(d / "point.json")) {
        const json j = json::parse(read_text(d / "point.json"));
        if (j.contains("param")) {
          en.info.param = j["param"].get<std::string>();
          en.info.value = j["value"].get<double>();
          en.info.has_value = true;
        }
      }
      entries.push_back(std::move(en));
    }
  }
  if (entries.empty()) throw IoError("report: no report.json files found");
  fs::create_directories(out);

  std::ostringstream f1, fid, sum;
  f1 << "run,arch,param,value,concept,center_norm,rank,latent,f1\n";
  fid << "run,arch,param,value,concept,intrinsic_dim,l0,nmse\n";
  sum << "run,arch,param,value,mean_l0,dead_fraction,data_stable_rank,latent_stable_rank,data_clusters,"
         "mean_off_block_data_similarity\n";
  for (const auto& e : entries) {
    const std::string run = e.dir.string();
    const std::string value = e.info.has_value ? format_double(e.info.value) : "";
    for (const auto& c : e.report.concepts) {
      for (std::size_t r = 0; r < c.top_f1.size(); ++r)
        f1 << run << ',' << e.info.arch << ',' << e.info.param << ',' << value << ',' << c.concept_id << ','
           << format_double(c.center_norm) << ',' << r + 1 << ',' << c.top_latents[r] << ','
           << format_double(c.top_f1[r]) << '\n';
      fid << run << ',' << e.info.arch << ',' << e.info.param << ',' << value << ',' << c.concept_id << ','
          << c.intrinsic_dim << ',' << format_double(c.l0) << ',' << format_double(c.nmse) << '\n';
    }
    const auto& r = e.report;
    sum << run << ',' << e.info.arch << ',' << e.info.param << ',' << value << ',' << format_double(r.mean_l0) << ','
        << format_double(r.dead_fraction) << ',' << format_double(r.data_stable_rank) << ','
        << format_double(r.latent_stable_rank) << ',' << r.data_clusters << ','
        << format_double(r.mean_off_block_data_similarity) << '\n';
  }
  write_text(out / "f1_top.csv", f1.str());
  write_text(out / "nmse_l0.csv", fid.str());
  write_text(out / "summary.csv", sum.str());
  if (log) *log << "merged " << entries.size() << " report(s) -> " << out.string() << '\n';
}

}  // namespace saelab
