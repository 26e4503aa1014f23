#include "saelab/encoders.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <utility>

#include "saelab/error.hpp"
#include "saelab/rng.hpp"

namespace saelab {

bool ActiveSet::contains(std::size_t i) const {
  return std::binary_search(indices.begin(), indices.end(), i);
}

double step_kernel(StepKernel kernel, double u) {
  switch (kernel) {
    case StepKernel::Rectangular:
      return std::abs(u) <= 0.5 ? 1.0 : 0.0;
    case StepKernel::Silverman: {
      const double a = std::abs(u) / std::numbers::sqrt2;
      return 0.5 * std::exp(-a) * std::sin(a + std::numbers::pi / 4.0);
    }
  }
  return 0.0;
}

void relu_into(std::span<const double> v, std::span<double> z, std::vector<std::size_t>& active) {
  active.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > 0.0) {
      z[i] = v[i];
      active.push_back(i);
    } else {
      z[i] = 0.0;
    }
  }
}

void jumprelu_into(std::span<const double> v, std::span<const double> theta, std::span<double> z,
                   std::vector<std::size_t>& active) {
  active.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > theta[i] && v[i] != 0.0) {
      z[i] = v[i];
      active.push_back(i);
    } else {
      z[i] = 0.0;
    }
  }
}

void topk_into(std::span<const double> v, std::size_t k, std::span<double> z,
               std::vector<std::size_t>& active) {
  active.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    z[i] = 0.0;
    if (v[i] > 0.0) active.push_back(i);
  }
  if (active.size() > k) {
    auto before = [&](std::size_t a, std::size_t b) {
      return v[a] > v[b] || (v[a] == v[b] && a < b);
    };
    std::nth_element(active.begin(), active.begin() + static_cast<std::ptrdiff_t>(k), active.end(), before);
    active.resize(k);
    std::sort(active.begin(), active.end());
  }
  for (auto i : active) z[i] = v[i];
}

void sparsemax_into(std::span<const double> v, std::span<double> z, std::vector<std::size_t>& active) {
  active.clear();
  std::fill(z.begin(), z.end(), 0.0);
  if (v.empty()) return;
  // Support members satisfy v_i > tau >= max(v) - 1, so only those need sorting.
  const double vmax = *std::max_element(v.begin(), v.end());
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] > vmax - 1.0) cand.emplace_back(v[i], i);
  std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  double cumsum = 0.0;
  double support_sum = 0.0;
  std::size_t support = 0;
  for (std::size_t j = 0; j < cand.size(); ++j) {
    cumsum += cand[j].first;
    if (1.0 + static_cast<double>(j + 1) * cand[j].first > cumsum) {
      support = j + 1;
      support_sum = cumsum;
    }
  }
  const double tau = (support_sum - 1.0) / static_cast<double>(support);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double zi = v[i] - tau;
    if (zi > 0.0) {
      z[i] = zi;
      active.push_back(i);
    }
  }
}

Activation relu_fwd(std::span<const double> v) {
  Activation a{std::vector<double>(v.size()), {}};
  relu_into(v, a.z, a.active.indices);
  return a;
}

Activation jumprelu_fwd(std::span<const double> v, const JumpParams& p) {
  require(p.theta.size() == v.size(), "jumprelu_fwd: theta length mismatch");
  require(p.bandwidth > 0.0, "jumprelu_fwd: bandwidth must be positive");
  Activation a{std::vector<double>(v.size()), {}};
  jumprelu_into(v, p.theta, a.z, a.active.indices);
  return a;
}

Activation topk_fwd(std::span<const double> v, std::size_t k) {
  require(k >= 1 && k <= v.size(), "topk_fwd: k out of range");
  Activation a{std::vector<double>(v.size()), {}};
  topk_into(v, k, a.z, a.active.indices);
  return a;
}

Activation sparsemax(std::span<const double> v) {
  Activation a{std::vector<double>(v.size()), {}};
  sparsemax_into(v, a.z, a.active.indices);
  return a;
}

std::vector<double> pairwise_sq_dist(std::span<const double> x, const Matrix& w) {
  require(x.size() == w.rows(), "pairwise_sq_dist: dimension mismatch");
  const std::size_t d = w.rows();
  const std::size_t s = w.cols();
  std::vector<double> xw(s, 0.0), ww(s, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    const auto row = w.row(r);
    for (std::size_t i = 0; i < s; ++i) {
      xw[i] += x[r] * row[i];
      ww[i] += row[i] * row[i];
    }
  }
  const double xx = dot(x, x);
  std::vector<double> out(s);
  for (std::size_t i = 0; i < s; ++i) out[i] = std::max(0.0, xx - 2.0 * xw[i] + ww[i]);
  return out;
}

SpadeOutput spade_encode(std::span<const double> x, const Matrix& w, double lambda) {
  require(lambda > 0.0, "spade_encode: lambda must be positive");
  SpadeOutput out;
  out.dist = pairwise_sq_dist(x, w);
  std::vector<double> v(out.dist.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -lambda * out.dist[i];
  out.act = sparsemax(v);
  return out;
}

std::vector<double> relu_vjp(std::span<const double> v, std::span<const double> grad_z) {
  require(v.size() == grad_z.size(), "relu_vjp: length mismatch");
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) g[i] = v[i] > 0.0 ? grad_z[i] : 0.0;
  return g;
}

std::vector<double> topk_vjp(const ActiveSet& active, std::span<const double> grad_z) {
  std::vector<double> g(grad_z.size(), 0.0);
  for (auto i : active.indices) g[i] = grad_z[i];
  return g;
}

void sparsemax_vjp_into(std::span<const std::size_t> active, std::span<const double> grad_z,
                        std::span<double> grad_v) {
  std::fill(grad_v.begin(), grad_v.end(), 0.0);
  if (active.empty()) return;
  double mean = 0.0;
  for (auto i : active) mean += grad_z[i];
  mean /= static_cast<double>(active.size());
  for (auto i : active) grad_v[i] = grad_z[i] - mean;
}

std::vector<double> sparsemax_vjp(const ActiveSet& active, std::span<const double> grad_z) {
  std::vector<double> g(grad_z.size());
  sparsemax_vjp_into(active.indices, grad_z, g);
  return g;
}

JumpVjp jumprelu_vjp(std::span<const double> v, const JumpParams& p, std::span<const double> grad_z,
                     double grad_l0) {
  require(v.size() == grad_z.size() && v.size() == p.theta.size(), "jumprelu_vjp: length mismatch");
  JumpVjp out{std::vector<double>(v.size(), 0.0), std::vector<double>(v.size(), 0.0)};
  const double eps = p.bandwidth;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const bool on = v[i] > p.theta[i] && v[i] != 0.0;
    if (on) out.grad_v[i] = grad_z[i];
    const double k = step_kernel(p.kernel, (v[i] - p.theta[i]) / eps);
    if (k != 0.0) out.grad_theta[i] = -(v[i] / eps) * k * grad_z[i] - (1.0 / eps) * k * grad_l0;
  }
  return out;
}

SpadeVjp spade_vjp(std::span<const double> x, const Matrix& w, double lambda,
                   std::span<const double> dist, const ActiveSet& active,
                   std::span<const double> grad_z) {
  const std::size_t d = w.rows();
  const std::size_t s = w.cols();
  require(x.size() == d && dist.size() == s && grad_z.size() == s, "spade_vjp: shape mismatch");
  std::vector<double> grad_v(s);
  sparsemax_vjp_into(active.indices, grad_z, grad_v);

  SpadeVjp out{std::vector<double>(d, 0.0), Matrix(d, s), 0.0};
  for (auto i : active.indices) {
    out.grad_lambda -= grad_v[i] * dist[i];
    const double g_dist = -lambda * grad_v[i];
    // d dist_i / d x = 2 (x - W_i), d dist_i / d W_i = -2 (x - W_i)
    for (std::size_t r = 0; r < d; ++r) {
      const double diff = x[r] - w(r, i);
      out.grad_x[r] += 2.0 * g_dist * diff;
      out.grad_w(r, i) -= 2.0 * g_dist * diff;
    }
  }
  return out;
}

std::uint64_t fingerprint(std::span<const double> values) {
  std::uint64_t h = 0x84222325cbf29ce4ULL ^ values.size();
  for (double v : values) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  return h;
}

namespace {

EncoderCache base_cache(EncoderKind kind, std::span<const double> input) {
  EncoderCache c;
  c.kind = kind;
  c.input.assign(input.begin(), input.end());
  return c;
}

}  // namespace

EncoderCache relu_forward_cached(std::span<const double> v) {
  auto c = base_cache(EncoderKind::Relu, v);
  c.output = relu_fwd(v);
  return c;
}

EncoderCache jumprelu_forward_cached(std::span<const double> v, const JumpParams& p) {
  auto c = base_cache(EncoderKind::JumpRelu, v);
  c.output = jumprelu_fwd(v, p);
  c.jump = p;
  return c;
}

EncoderCache topk_forward_cached(std::span<const double> v, std::size_t k) {
  auto c = base_cache(EncoderKind::TopK, v);
  c.output = topk_fwd(v, k);
  c.k = k;
  return c;
}

EncoderCache sparsemax_forward_cached(std::span<const double> v) {
  auto c = base_cache(EncoderKind::Sparsemax, v);
  c.output = sparsemax(v);
  return c;
}

EncoderCache spade_forward_cached(std::span<const double> x, const Matrix& w, double lambda) {
  auto c = base_cache(EncoderKind::Spade, x);
  auto out = spade_encode(x, w, lambda);
  c.output = std::move(out.act);
  c.dist = std::move(out.dist);
  c.prototypes = &w;
  c.prototype_fingerprint = fingerprint(w.values());
  c.lambda = lambda;
  return c;
}

EncoderGrad encoder_vjp(const EncoderCache& cache, std::span<const double> grad_z, double grad_l0) {
  if (grad_z.size() != cache.output.z.size())
    throw ContractViolation("encoder_vjp: gradient length does not match cached forward output");
  EncoderGrad g;
  switch (cache.kind) {
    case EncoderKind::Relu:
      g.grad_input = relu_vjp(cache.input, grad_z);
      break;
    case EncoderKind::TopK:
      g.grad_input = topk_vjp(cache.output.active, grad_z);
      break;
    case EncoderKind::Sparsemax:
      g.grad_input = sparsemax_vjp(cache.output.active, grad_z);
      break;
    case EncoderKind::JumpRelu: {
      auto j = jumprelu_vjp(cache.input, cache.jump, grad_z, grad_l0);
      g.grad_input = std::move(j.grad_v);
      g.grad_theta = std::move(j.grad_theta);
      break;
    }
    case EncoderKind::Spade: {
      if (cache.prototypes == nullptr ||
          fingerprint(cache.prototypes->values()) != cache.prototype_fingerprint)
        throw ContractViolation("encoder_vjp: prototypes changed since the forward pass");
      auto sg = spade_vjp(cache.input, *cache.prototypes, cache.lambda, cache.dist,
                          cache.output.active, grad_z);
      g.grad_input = std::move(sg.grad_x);
      g.grad_w = std::move(sg.grad_w);
      g.grad_lambda = sg.grad_lambda;
      break;
    }
  }
  return g;
}

}  // namespace saelab
