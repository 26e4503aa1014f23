#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "saelab/dataset.hpp"
#include "saelab/sae.hpp"

namespace saelab {

struct TrainConfig {
  double lr_start = 1e-2;
  double lr_end = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 512;
  std::size_t iterations = 2000;
  double clip_norm = 1.0;
  double gamma = 0.0;
  double gamma_aux = 1.0;
  std::size_t k_aux = 0;  // 0 means "same as k"
  std::uint64_t seed = 0;
  std::size_t eval_every = 100;

  void validate() const;
};

struct AdamState {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::uint64_t step = 0;
};

struct EvalRecord {
  std::size_t step = 0;
  LossBreakdown loss;
  std::vector<double> nmse_per_concept;
  std::vector<double> l0_per_concept;
};

struct TrainHistory {
  std::vector<EvalRecord> records;
};

/// lr(t) = lr_end + (lr_start - lr_end) * (1 + cos(pi t / iterations)) / 2.
double cosine_lr(std::size_t t, const TrainConfig& cfg);

/// Rescales all blocks jointly when their global L2 norm exceeds max_norm.
/// Returns the norm before clipping.
double clip_global_norm(std::span<const std::span<double>> grads, double max_norm);
double clip_global_norm(SaeGrads& grads, double max_norm);

AdamState make_adam_state(std::span<const std::span<double>> params);
AdamState make_adam_state(SaeModel& m);

/// Bias-corrected Adam update on arbitrary parameter blocks.
void adam_update(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                 AdamState& state, double lr, const TrainConfig& cfg);

/// Adam on every model block, then decoder renormalization (except SpaDE,
/// whose decoder is unconstrained).
void adam_step(SaeModel& m, const SaeGrads& grads, AdamState& state, double lr, const TrainConfig& cfg);

/// Counts consecutive inactive steps for each latent.
void update_inactive_steps(SaeModel& m, const std::vector<bool>& fired);

using StepObserver = std::function<void(std::size_t step, const LossBreakdown&)>;

/// Mini-batch training. Batches come from a per-epoch permutation derived
/// from cfg.seed; the final partial batch of an epoch is used. A snapshot on
/// `eval` is recorded at step 0 and every eval_every steps. Throws
/// NumericFailure on a non-finite loss or gradient.
TrainHistory train(SaeModel& m, const LabeledDataset& train_set, const LabeledDataset& eval,
                   const TrainConfig& cfg, const StepObserver& observer = {});

EvalRecord evaluate_snapshot(const SaeModel& m, const LabeledDataset& eval, const TrainConfig& cfg,
                             std::size_t step);

/// Columns: step, mse, reg, aux, total, mean_l0, nmse_c{i}..., l0_c{i}...
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace saelab
