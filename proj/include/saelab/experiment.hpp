#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "saelab/dataset.hpp"
#include "saelab/metrics.hpp"
#include "saelab/sae.hpp"
#include "saelab/training.hpp"

namespace saelab {

enum class DatasetKind { Separability, Heterogeneity, External };
enum class PrototypeInit { Normal, Data };
enum class SweepParam { Gamma, K };
enum class Preset { Desk, Paper };

std::string to_string(DatasetKind kind);
std::string to_string(SweepParam p);
Preset parse_preset(const std::string& name);

struct DatasetBlock {
  DatasetKind kind = DatasetKind::Separability;
  std::size_t n_per_concept = 10000;
  double variance = kSeparabilityVariance;
  double train_fraction = 0.7;
  std::filesystem::path path;  // external only
};

struct ModelBlock {
  Arch arch = Arch::Spade;
  std::size_t s = 128;
  std::size_t k = 8;
  PrototypeInit init = PrototypeInit::Normal;
  double init_std = 1.0;  // std of the N(0, .) encoder entries; decoder norms unaffected
  ModelOptions options;
};

struct SweepBlock {
  SweepParam param = SweepParam::Gamma;
  std::vector<double> values;
};

struct RasterBlock {
  double extent = 4.0;
  std::size_t resolution = 256;
  std::size_t cone_samples = 1000;
};

/// One experiment recipe. JSON schema (every key optional unless noted;
/// unknown keys anywhere are rejected):
///   seed: u64
///   dataset: {kind (required): separability|heterogeneity|external,
///             n_per_concept, variance, train_fraction, path}
///   model:   {arch, s, k, scale_placement: pre|post, bandwidth,
///             kernel: rectangular|silverman, theta_init, dead_window,
///             prototype_init: normal|data, init_std}
///   train:   {lr_start, lr_end, beta1, beta2, eps, batch_size, iterations,
///             clip_norm, gamma, gamma_aux, k_aux, eval_every}
///   sweep:   {param: gamma|k, values: [..] (nonempty)}
///   eval:    {threshold, top_n, similarity_per_concept, samples_per_concept}
///   raster:  {extent, resolution, cone_samples}
struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetBlock dataset;
  ModelBlock model;
  TrainConfig train;
  SweepBlock sweep;
  ReportOptions eval;
  std::size_t eval_samples_per_concept = 0;  // 0: whole test split
  RasterBlock raster;
  unsigned threads = 1;

  void validate() const;
};

/// Parses a JSON recipe on top of the preset defaults for its dataset kind.
/// Throws UsageError on malformed input, unknown keys or bad values.
ExperimentConfig parse_config(const std::string& text, Preset preset = Preset::Desk);
ExperimentConfig load_config(const std::filesystem::path& path, Preset preset = Preset::Desk);
std::string config_to_json(const ExperimentConfig& cfg);

/// Directory name of one sweep point, e.g. "gamma_0.001" or "k_16".
std::string sweep_point_name(SweepParam param, double value);

/// Seed streams derived from the top-level seed.
RngStream data_stream(std::uint64_t seed);
RngStream split_stream(std::uint64_t seed);
RngStream model_stream(std::uint64_t seed);
std::uint64_t train_seed(std::uint64_t seed);

LabeledDataset make_dataset(const ExperimentConfig& cfg);
/// Model for one sweep point, before training.
SaeModel make_model(const ExperimentConfig& cfg, double sweep_value, const LabeledDataset& train_set);

struct TrainOutcome {
  std::string point;
  bool ok = false;
  std::string error;
  long failed_step = -1;
};

// Commands. `log` receives human-readable summaries (may be null).
void cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream* log);
/// Returns per-point outcomes; throws only for problems that stop every point.
std::vector<TrainOutcome> cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                    const std::optional<std::filesystem::path>& data_dir, std::ostream* log);
void cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
              const std::filesystem::path& out, const ExperimentConfig& cfg, std::ostream* log);
void cmd_raster(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                const std::filesystem::path& out, const ExperimentConfig& cfg, std::ostream* log);
void cmd_report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out,
                std::ostream* log);

/// Loads `dir/test` when present, otherwise `dir` itself.
LabeledDataset load_eval_split(const std::filesystem::path& dir);
/// Sweep-point directories under `dir` (those holding a checkpoint), sorted by
/// name, or `dir` itself when it is a single point or a bare checkpoint.
std::vector<std::filesystem::path> find_points(const std::filesystem::path& dir);

}  // namespace saelab
