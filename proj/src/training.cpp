#include "saelab/training.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "saelab/error.hpp"
#include "saelab/metrics.hpp"

namespace saelab {

void TrainConfig::validate() const {
  require(lr_end > 0.0 && lr_start >= lr_end, "train: need lr_start >= lr_end > 0");
  require(clip_norm > 0.0, "train: clip_norm must be positive");
  require(batch_size >= 1, "train: batch_size must be at least 1");
  require(eval_every >= 1, "train: eval_every must be at least 1");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "train: Adam betas must lie in [0, 1)");
  require(eps >= 0.0, "train: eps must be non-negative");
}

double cosine_lr(std::size_t t, const TrainConfig& cfg) {
  require(t <= cfg.iterations, "cosine_lr: step beyond schedule");
  if (cfg.iterations == 0) return cfg.lr_start;
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(cfg.iterations);
  return cfg.lr_end + 0.5 * (cfg.lr_start - cfg.lr_end) * (1.0 + std::cos(phase));
}

double clip_global_norm(std::span<const std::span<double>> grads, double max_norm) {
  require(max_norm > 0.0, "clip_global_norm: max_norm must be positive");
  double sq = 0.0;
  for (auto block : grads)
    for (double g : block) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto block : grads)
      for (double& g : block) g *= scale;
  }
  return norm;
}

double clip_global_norm(SaeGrads& grads, double max_norm) {
  auto blocks = grad_blocks(grads);
  return clip_global_norm(std::span<const std::span<double>>(blocks), max_norm);
}

AdamState make_adam_state(std::span<const std::span<double>> params) {
  AdamState st;
  for (auto p : params) {
    st.first.emplace_back(p.size(), 0.0);
    st.second.emplace_back(p.size(), 0.0);
  }
  return st;
}

AdamState make_adam_state(SaeModel& m) {
  auto blocks = param_blocks(m);
  return make_adam_state(std::span<const std::span<double>>(blocks));
}

void adam_update(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                 AdamState& state, double lr, const TrainConfig& cfg) {
  require(params.size() == grads.size() && params.size() == state.first.size(),
          "adam_update: block count mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto g = grads[b];
    auto& m1 = state.first[b];
    auto& m2 = state.second[b];
    require(p.size() == g.size() && p.size() == m1.size(), "adam_update: block shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
      m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m1[i] / bc1;
      const double vhat = m2[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void adam_step(SaeModel& m, const SaeGrads& grads, AdamState& state, double lr, const TrainConfig& cfg) {
  auto params = param_blocks(m);
  auto g = grad_blocks(grads);
  adam_update(std::span<const std::span<double>>(params), std::span<const std::span<const double>>(g), state,
              lr, cfg);
  if (m.arch != Arch::Spade) normalize_decoder(m);
}

void update_inactive_steps(SaeModel& m, const std::vector<bool>& fired) {
  for (std::size_t i = 0; i < m.s; ++i) {
    if (fired[i])
      m.inactive_steps[i] = 0;
    else if (m.inactive_steps[i] < UINT32_MAX)
      ++m.inactive_steps[i];
  }
}

namespace {

bool grads_finite(const SaeGrads& g) {
  for (auto block : grad_blocks(g))
    for (double v : block)
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

EvalRecord evaluate_snapshot(const SaeModel& m, const LabeledDataset& eval, const TrainConfig& cfg,
                             std::size_t step) {
  EvalRecord rec;
  rec.step = step;
  rec.loss = loss(m, eval.x, LossSettings{cfg.gamma, cfg.gamma_aux, cfg.k_aux});
  const Matrix z = encode_batch(m, eval.x);
  const Matrix x_hat = reconstruct_batch(m, eval.x);
  rec.nmse_per_concept = normalized_mse_per_concept(eval, x_hat);
  rec.l0_per_concept = l0_per_concept(z, eval.labels, eval.num_concepts(), kActivityThreshold);
  return rec;
}

TrainHistory train(SaeModel& m, const LabeledDataset& train_set, const LabeledDataset& eval,
                   const TrainConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  m.validate();
  require(train_set.size() > 0, "train: training set is empty");
  require(train_set.dim() == m.d, "train: dataset dimension does not match model");

  const RngStream root(cfg.seed);
  const std::size_t n = train_set.size();
  const std::size_t batch = std::min(cfg.batch_size, n);
  const LossSettings settings{cfg.gamma, cfg.gamma_aux, cfg.k_aux};
  AdamState adam = make_adam_state(m);

  TrainHistory history;
  const bool has_eval = eval.size() > 0;
  if (has_eval) history.records.push_back(evaluate_snapshot(m, eval, cfg, 0));

  std::vector<std::size_t> order;
  std::size_t cursor = n;
  std::uint64_t epoch = 0;
  std::size_t batch_in_epoch = 0;
  std::vector<std::size_t> rows;
  for (std::size_t step = 0; step < cfg.iterations; ++step) {
    if (cursor >= n) {
      RngStream stream = root.split(epoch++);
      order = permutation(stream, n);
      cursor = 0;
      batch_in_epoch = 0;
    }
    const std::size_t take = std::min(batch, n - cursor);
    rows.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                order.begin() + static_cast<std::ptrdiff_t>(cursor + take));
    cursor += take;
    const Matrix xb = train_set.x.select_rows(rows);

    LossAndGrad lg = backward(m, xb, settings);
    if (!std::isfinite(lg.loss.total) || !grads_finite(lg.grads)) {
      std::ostringstream msg;
      msg << "non-finite loss or gradient at step " << step << " (epoch " << epoch - 1 << ", batch "
          << batch_in_epoch << ")";
      throw NumericFailure(msg.str(), static_cast<long>(step), static_cast<long>(batch_in_epoch));
    }
    ++batch_in_epoch;
    if (observer) observer(step, lg.loss);

    clip_global_norm(lg.grads, cfg.clip_norm);
    adam_step(m, lg.grads, adam, cosine_lr(step, cfg), cfg);
    update_inactive_steps(m, lg.fired);

    if (has_eval && (step + 1) % cfg.eval_every == 0)
      history.records.push_back(evaluate_snapshot(m, eval, cfg, step + 1));
  }
  return history;
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t concepts = history.records.empty() ? 0 : history.records.front().nmse_per_concept.size();
  out << "step,mse,reg,aux,total,mean_l0";
  for (std::size_t c = 0; c < concepts; ++c) out << ",nmse_c" << c;
  for (std::size_t c = 0; c < concepts; ++c) out << ",l0_c" << c;
  out << '\n';
  out.precision(17);
  for (const auto& r : history.records) {
    out << r.step << ',' << r.loss.mse << ',' << r.loss.reg << ',' << r.loss.aux << ',' << r.loss.total << ','
        << r.loss.mean_l0;
    for (double v : r.nmse_per_concept) out << ',' << v;
    for (double v : r.l0_per_concept) out << ',' << v;
    out << '\n';
  }
}

}  // namespace saelab
