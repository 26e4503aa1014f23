#include "saelab/sae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "saelab/error.hpp"

namespace saelab {

using nlohmann::json;

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::Relu: return "relu";
    case Arch::JumpRelu: return "jumprelu";
    case Arch::TopK: return "topk";
    case Arch::Spade: return "spade";
  }
  return "unknown";
}

Arch parse_arch(const std::string& name) {
  if (name == "relu") return Arch::Relu;
  if (name == "jumprelu") return Arch::JumpRelu;
  if (name == "topk") return Arch::TopK;
  if (name == "spade") return Arch::Spade;
  throw UsageError("unknown architecture '" + name + "' (expected relu, jumprelu, topk or spade)");
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  require(y > 0.0, "softplus_inverse: argument must be positive");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double SaeModel::lambda() const { return arch == Arch::Spade ? softplus(lambda_raw) : fixed_scale(); }

std::vector<bool> SaeModel::dead_mask() const {
  std::vector<bool> dead(s, false);
  for (std::size_t i = 0; i < s && i < inactive_steps.size(); ++i)
    dead[i] = inactive_steps[i] >= options.dead_window;
  return dead;
}

void SaeModel::validate() const {
  require(d >= 1 && s >= 1, "model dimensions must be positive");
  require(w.rows() == d && w.cols() == s, "encoder weight shape mismatch");
  require(dec.rows() == d && dec.cols() == s, "decoder shape mismatch");
  require(b_e.size() == s && theta.size() == s && b_d.size() == d, "bias shape mismatch");
  require(inactive_steps.size() == s, "inactive-step counter shape mismatch");
  if (arch == Arch::TopK) require(k >= 1 && k <= s, "topk: k must lie in [1, s]");
  require(options.bandwidth > 0.0, "bandwidth must be positive");
}

bool operator==(const SaeModel& a, const SaeModel& b) {
  return a.arch == b.arch && a.d == b.d && a.s == b.s && a.k == b.k && a.w == b.w && a.b_e == b.b_e &&
         a.dec == b.dec && a.b_d == b.b_d && a.lambda_raw == b.lambda_raw && a.theta == b.theta &&
         a.inactive_steps == b.inactive_steps && a.options.placement == b.options.placement &&
         a.options.bandwidth == b.options.bandwidth && a.options.kernel == b.options.kernel &&
         a.options.dead_window == b.options.dead_window;
}

SaeModel init_model(Arch arch, std::size_t d, std::size_t s, std::size_t k, RngStream& rng,
                    const ModelOptions& options) {
  require(d >= 1 && s >= 1, "init_model: dimensions must be positive");
  if (arch == Arch::TopK) require(k >= 1 && k <= s, "init_model: k must lie in [1, s]");
  SaeModel m;
  m.arch = arch;
  m.d = d;
  m.s = s;
  m.k = arch == Arch::TopK ? k : 0;
  m.options = options;
  m.w = sample_normal(rng, d, s, 0.0, 1.0);
  m.dec = m.w;
  m.b_e.assign(s, 0.0);
  m.b_d.assign(d, 0.0);
  m.lambda_raw = softplus_inverse(1.0 / (2.0 * static_cast<double>(d)));
  m.theta.assign(s, arch == Arch::JumpRelu ? options.theta_init : 0.0);
  m.inactive_steps.assign(s, 0);
  if (arch != Arch::Spade) normalize_decoder(m);
  return m;
}

void seed_prototypes(SaeModel& m, const Matrix& x, RngStream& rng) {
  require(x.rows() >= 1 && x.cols() == m.d, "seed_prototypes: sample matrix shape mismatch");
  const auto order = permutation(rng, x.rows());
  for (std::size_t i = 0; i < m.s; ++i) {
    const auto src = x.row(order[i % order.size()]);
    for (std::size_t r = 0; r < m.d; ++r) m.w(r, i) = src[r];
  }
  m.dec = m.w;
  if (m.arch != Arch::Spade) normalize_decoder(m);
}

namespace {

struct ScaleFactors {
  double in = 1.0;
  double out = 1.0;
};

ScaleFactors scale_factors(const SaeModel& m) {
  if (m.arch == Arch::Spade) return {};
  const double c = m.fixed_scale();
  return m.options.placement == ScalePlacement::PreActivation ? ScaleFactors{c, 1.0} : ScaleFactors{1.0, c};
}

struct BatchForward {
  std::size_t n = 0;
  Matrix xc;    // x - b_d (relu/jumprelu/topk)
  Matrix pre;   // thresholded quantity v; for spade v = -lambda * dist
  Matrix dist;  // spade only
  Matrix z;     // final codes
  std::vector<std::vector<std::size_t>> active;
  Matrix x_hat;
};

// Accumulates out_row += sum_{i in active} coef_i * dec_t.row(i).
void add_sparse_combination(const Matrix& dec_t, std::span<const std::size_t> active,
                            std::span<const double> coef, std::span<double> out_row) {
  const std::size_t d = dec_t.cols();
  for (auto i : active) {
    const double c = coef[i];
    if (c == 0.0) continue;
    const auto atom = dec_t.row(i);
    for (std::size_t r = 0; r < d; ++r) out_row[r] += c * atom[r];
  }
}

BatchForward forward_batch(const SaeModel& m, const Matrix& x) {
  require(x.cols() == m.d, "input dimension " + std::to_string(x.cols()) +
                               " does not match model dimension " + std::to_string(m.d));
  BatchForward f;
  f.n = x.rows();
  const std::size_t s = m.s;
  const std::size_t d = m.d;
  f.active.resize(f.n);
  f.z = Matrix(f.n, s);

  if (m.arch == Arch::Spade) {
    const double lambda = m.lambda();
    const Matrix xw = matmul(x, m.w);
    std::vector<double> ww(s, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      const auto row = m.w.row(r);
      for (std::size_t i = 0; i < s; ++i) ww[i] += row[i] * row[i];
    }
    f.dist = Matrix(f.n, s);
    f.pre = Matrix(f.n, s);
    for (std::size_t b = 0; b < f.n; ++b) {
      const double xx = dot(x.row(b), x.row(b));
      auto dist = f.dist.row(b);
      auto v = f.pre.row(b);
      const auto xwb = xw.row(b);
      for (std::size_t i = 0; i < s; ++i) {
        dist[i] = std::max(0.0, xx - 2.0 * xwb[i] + ww[i]);
        v[i] = -lambda * dist[i];
      }
      sparsemax_into(v, f.z.row(b), f.active[b]);
    }
  } else {
    const ScaleFactors sc = scale_factors(m);
    f.xc = x;
    for (std::size_t b = 0; b < f.n; ++b) {
      auto row = f.xc.row(b);
      for (std::size_t r = 0; r < d; ++r) row[r] -= m.b_d[r];
    }
    f.pre = matmul(f.xc, m.w);
    const bool bias = m.arch != Arch::TopK;
    for (std::size_t b = 0; b < f.n; ++b) {
      auto v = f.pre.row(b);
      for (std::size_t i = 0; i < s; ++i) v[i] = sc.in * (v[i] + (bias ? m.b_e[i] : 0.0));
      auto z = f.z.row(b);
      switch (m.arch) {
        case Arch::Relu: relu_into(v, z, f.active[b]); break;
        case Arch::JumpRelu: jumprelu_into(v, m.theta, z, f.active[b]); break;
        case Arch::TopK: topk_into(v, m.k, z, f.active[b]); break;
        case Arch::Spade: break;
      }
      if (sc.out != 1.0)
        for (auto i : f.active[b]) z[i] *= sc.out;
    }
  }

  // Reconstruction: dense product when codes are dense, sparse otherwise.
  std::size_t nnz = 0;
  for (const auto& a : f.active) nnz += a.size();
  if (nnz * 8 > f.n * s) {
    f.x_hat = matmul_nt(f.z, m.dec);
  } else {
    f.x_hat = Matrix(f.n, d);
    const Matrix dec_t = m.dec.transposed();
    for (std::size_t b = 0; b < f.n; ++b) add_sparse_combination(dec_t, f.active[b], f.z.row(b), f.x_hat.row(b));
  }
  for (std::size_t b = 0; b < f.n; ++b) {
    auto row = f.x_hat.row(b);
    for (std::size_t r = 0; r < d; ++r) row[r] += m.b_d[r];
  }
  return f;
}

// Top-k_aux positive pre-activations among dead latents.
void select_aux(std::span<const double> v, const std::vector<bool>& dead, std::size_t k_aux,
                std::vector<std::size_t>& out) {
  out.clear();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (dead[i] && v[i] > 0.0) out.push_back(i);
  if (out.size() > k_aux) {
    auto before = [&](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); };
    std::nth_element(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k_aux), out.end(), before);
    out.resize(k_aux);
    std::sort(out.begin(), out.end());
  }
}

std::size_t effective_k_aux(const SaeModel& m, const LossSettings& settings) {
  return settings.k_aux == 0 ? m.k : settings.k_aux;
}

double row_regularizer(const SaeModel& m, const BatchForward& f, std::size_t b) {
  const auto z = f.z.row(b);
  switch (m.arch) {
    case Arch::Relu: {
      double acc = 0.0;
      for (auto i : f.active[b]) acc += z[i];
      return acc;
    }
    case Arch::JumpRelu: return static_cast<double>(f.active[b].size());
    case Arch::TopK: return 0.0;
    case Arch::Spade: {
      double acc = 0.0;
      const auto dist = f.dist.row(b);
      for (auto i : f.active[b]) acc += z[i] * dist[i];
      return acc;
    }
  }
  return 0.0;
}

LossAndGrad evaluate(const SaeModel& m, const Matrix& x, const LossSettings& settings, bool want_grad) {
  require(x.rows() > 0, "loss: batch must be nonempty");
  const BatchForward f = forward_batch(m, x);
  const std::size_t n = f.n;
  const std::size_t d = m.d;
  const std::size_t s = m.s;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double gamma = settings.gamma;
  const double gamma_aux = settings.gamma_aux;

  const bool use_aux = m.arch == Arch::TopK && gamma_aux != 0.0;
  const std::vector<bool> dead = use_aux ? m.dead_mask() : std::vector<bool>{};
  const bool any_dead = use_aux && std::any_of(dead.begin(), dead.end(), [](bool b) { return b; });
  const std::size_t k_aux = m.arch == Arch::TopK ? effective_k_aux(m, settings) : 0;
  const ScaleFactors sc = scale_factors(m);
  const Matrix dec_t = m.dec.transposed();  // s x d, one atom per row

  std::size_t nnz = 0;
  for (const auto& a : f.active) nnz += a.size();
  // Dense codes: batch GEMMs beat per-atom loops.
  const bool dense = nnz * 8 > n * s;

  LossAndGrad out;
  out.fired.assign(s, false);

  double mse = 0.0, reg = 0.0, aux = 0.0, l0 = 0.0;
  std::vector<double> resid(d), q(d), z_aux(s, 0.0);
  std::vector<std::vector<std::size_t>> aux_rows(any_dead ? n : 0);
  Matrix g_xhat(want_grad ? n : 0, d);               // dL/dx_hat, reconstruction plus aux
  Matrix g_aux(want_grad && any_dead ? n : 0, d);    // aux part only

  for (std::size_t b = 0; b < n; ++b) {
    const auto xb = x.row(b);
    const auto zb = f.z.row(b);
    const auto& act = f.active[b];
    for (std::size_t r = 0; r < d; ++r) resid[r] = f.x_hat(b, r) - xb[r];
    double err = 0.0;
    for (double v : resid) err += v * v;
    mse += err;
    reg += row_regularizer(m, f, b);
    l0 += static_cast<double>(act.size());
    for (auto i : act)
      if (zb[i] > kActivityThreshold) out.fired[i] = true;

    bool has_aux = false;
    if (any_dead) {
      auto& idx = aux_rows[b];
      select_aux(f.pre.row(b), dead, k_aux, idx);
      // e = x - x_hat, e_hat = D z_aux; aux = ||e - e_hat||^2
      std::fill(q.begin(), q.end(), 0.0);
      for (auto i : idx) z_aux[i] = sc.out * f.pre(b, i);
      add_sparse_combination(dec_t, idx, z_aux, q);
      for (auto i : idx) z_aux[i] = 0.0;
      double a = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        q[r] = -resid[r] - q[r];
        a += q[r] * q[r];
      }
      // Rows with no positive dead pre-activation contribute nothing.
      has_aux = !idx.empty();
      if (has_aux) aux += a;
      // The aux term reaches x_hat through e, contributing -2q.
      if (want_grad && has_aux)
        for (std::size_t r = 0; r < d; ++r) g_aux(b, r) = -2.0 * gamma_aux * inv_n * q[r];
    }
    if (want_grad)
      for (std::size_t r = 0; r < d; ++r) g_xhat(b, r) = 2.0 * inv_n * resid[r] + (has_aux ? g_aux(b, r) : 0.0);
  }

  out.loss.mse = mse * inv_n;
  out.loss.reg = reg * inv_n;
  out.loss.aux = aux * inv_n;
  out.loss.mean_l0 = l0 * inv_n;
  out.loss.total = out.loss.mse + gamma * out.loss.reg + gamma_aux * out.loss.aux;
  if (!want_grad) return out;

  out.grads = SaeGrads::zeros_like(m);
  for (std::size_t b = 0; b < n; ++b) {
    const auto g = g_xhat.row(b);
    for (std::size_t r = 0; r < d; ++r) out.grads.b_d[r] += g[r];
  }

  // dL/dz = D^T dL/dx_hat, and dL/dD = dL/dx_hat^T z.
  Matrix g_z_all;
  Matrix dec_grad_t;  // s x d, sparse path only
  if (dense) {
    g_z_all = matmul(g_xhat, m.dec);
    out.grads.dec = matmul_tn(g_xhat, f.z);
  } else {
    dec_grad_t = Matrix(s, d);
    for (std::size_t b = 0; b < n; ++b) {
      const auto g = g_xhat.row(b);
      const auto zb = f.z.row(b);
      for (auto i : f.active[b]) {
        auto acc = dec_grad_t.row(i);
        for (std::size_t r = 0; r < d; ++r) acc[r] += g[r] * zb[i];
      }
    }
  }
  if (any_dead) {
    for (std::size_t b = 0; b < n; ++b) {
      const auto g = g_aux.row(b);
      for (auto i : aux_rows[b]) {
        const double za = sc.out * f.pre(b, i);
        if (dense)
          for (std::size_t r = 0; r < d; ++r) out.grads.dec(r, i) += g[r] * za;
        else {
          auto acc = dec_grad_t.row(i);
          for (std::size_t r = 0; r < d; ++r) acc[r] += g[r] * za;
        }
      }
    }
  }
  if (!dense)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t r = 0; r < d; ++r) out.grads.dec(r, i) = dec_grad_t(i, r);

  auto atom_dot = [&](std::size_t i, std::span<const double> g) {
    const auto atom = dec_t.row(i);
    double acc = 0.0;
    for (std::size_t r = 0; r < d; ++r) acc += atom[r] * g[r];
    return acc;
  };
  auto grad_z = [&](std::size_t b, std::size_t i) { return dense ? g_z_all(b, i) : atom_dot(i, g_xhat.row(b)); };

  // Per-row dL/du (relu family) or dL/ddist (spade). Dense: kept as a matrix
  // for one GEMM; sparse: folded into w_grad_t row by row.
  Matrix g_u_mat(dense ? n : 0, dense ? s : 0);
  Matrix w_grad_t(dense ? 0 : s, dense ? 0 : d);
  std::vector<double> g_u_sum(s, 0.0);
  std::vector<double> g_z(s, 0.0), g_u(s, 0.0);
  std::vector<std::size_t> touched;
  const double lambda = m.lambda();

  for (std::size_t b = 0; b < n; ++b) {
    const auto zb = f.z.row(b);
    const auto& act = f.active[b];

    if (m.arch == Arch::Spade) {
      const auto xb = x.row(b);
      const auto dist = f.dist.row(b);
      double mean = 0.0;
      for (auto i : act) {
        g_z[i] = grad_z(b, i) + gamma * inv_n * dist[i];
        mean += g_z[i];
      }
      mean /= static_cast<double>(act.size());
      for (auto i : act) {
        const double g_v = g_z[i] - mean;
        g_z[i] = 0.0;
        out.grads.lambda_raw -= g_v * dist[i];
        const double g_dist = -lambda * g_v + gamma * inv_n * zb[i];
        g_u_sum[i] += g_dist;
        if (dense) {
          g_u_mat(b, i) = g_dist;
        } else {
          auto acc = w_grad_t.row(i);
          for (std::size_t r = 0; r < d; ++r) acc[r] -= 2.0 * g_dist * xb[r];
        }
      }
      continue;
    }

    // relu / jumprelu / topk. g_u is dL/du with u = W^T (x - b_d) + b_e.
    touched.clear();
    const auto vb = f.pre.row(b);
    for (auto i : act) {
      double gz = grad_z(b, i);
      if (m.arch == Arch::Relu) gz += gamma * inv_n;  // d||z||_1/dz on the support
      g_u[i] += sc.in * sc.out * gz;
      touched.push_back(i);
    }
    if (any_dead) {
      for (auto i : aux_rows[b]) {
        g_u[i] += sc.in * sc.out * atom_dot(i, g_aux.row(b));
        touched.push_back(i);
      }
    }
    if (m.arch == Arch::JumpRelu) {
      const double eps = m.options.bandwidth;
      for (std::size_t i = 0; i < s; ++i) {
        const double kern = step_kernel(m.options.kernel, (vb[i] - m.theta[i]) / eps);
        if (kern == 0.0) continue;
        const double gz = sc.out * grad_z(b, i);
        out.grads.theta[i] += -(vb[i] / eps) * kern * gz - (1.0 / eps) * kern * gamma * inv_n;
      }
    }
    const auto xcb = f.xc.row(b);
    for (auto i : touched) {
      const double g = g_u[i];
      if (g == 0.0) continue;
      g_u[i] = 0.0;
      g_u_sum[i] += g;
      if (dense) {
        g_u_mat(b, i) += g;
      } else {
        auto acc = w_grad_t.row(i);
        for (std::size_t r = 0; r < d; ++r) acc[r] += g * xcb[r];
      }
    }
  }

  if (m.arch == Arch::Spade) {
    // dL/dW_i = -2 sum_b g_dist_bi x_b + 2 W_i sum_b g_dist_bi
    if (dense) {
      const Matrix xg = matmul_tn(x, g_u_mat);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t i = 0; i < s; ++i) out.grads.w(r, i) = -2.0 * xg(r, i) + 2.0 * m.w(r, i) * g_u_sum[i];
    } else {
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t r = 0; r < d; ++r)
          out.grads.w(r, i) = w_grad_t(i, r) + 2.0 * m.w(r, i) * g_u_sum[i];
    }
    out.grads.lambda_raw *= sigmoid(m.lambda_raw);
  } else {
    if (dense) {
      out.grads.w = matmul_tn(f.xc, g_u_mat);
    } else {
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t r = 0; r < d; ++r) out.grads.w(r, i) = w_grad_t(i, r);
    }
    if (m.arch != Arch::TopK) out.grads.b_e = g_u_sum;
    // x - b_d feeds the encoder: dL/db_d -= W * sum_b g_u
    for (std::size_t r = 0; r < d; ++r) {
      const auto wr = m.w.row(r);
      double acc = 0.0;
      for (std::size_t i = 0; i < s; ++i) acc += wr[i] * g_u_sum[i];
      out.grads.b_d[r] -= acc;
    }
  }
  return out;
}

}  // namespace

ForwardResult forward(const SaeModel& m, std::span<const double> x) {
  require(x.size() == m.d, "forward: input dimension mismatch");
  const Matrix xm(1, m.d, std::vector<double>(x.begin(), x.end()));
  auto f = forward_batch(m, xm);
  ForwardResult out;
  out.z.assign(f.z.row(0).begin(), f.z.row(0).end());
  out.x_hat.assign(f.x_hat.row(0).begin(), f.x_hat.row(0).end());
  out.active.indices = std::move(f.active[0]);
  return out;
}

Matrix encode_batch(const SaeModel& m, const Matrix& x) { return forward_batch(m, x).z; }

Matrix reconstruct_batch(const SaeModel& m, const Matrix& x) { return forward_batch(m, x).x_hat; }

double regularizer(Arch arch, std::span<const double> z, std::span<const double> x, const Matrix& w) {
  switch (arch) {
    case Arch::Relu: {
      double acc = 0.0;
      for (double v : z) acc += std::abs(v);
      return acc;
    }
    case Arch::JumpRelu:
      return static_cast<double>(std::count_if(z.begin(), z.end(), [](double v) { return v != 0.0; }));
    case Arch::TopK: return 0.0;
    case Arch::Spade: {
      const auto dist = pairwise_sq_dist(x, w);
      double acc = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) acc += z[i] * dist[i];
      return acc;
    }
  }
  return 0.0;
}

double aux_loss_topk(const SaeModel& m, std::span<const double> x, std::span<const double> residual,
                     std::size_t k_aux) {
  require(m.arch == Arch::TopK, "aux_loss_topk: model must be topk");
  require(x.size() == m.d && residual.size() == m.d, "aux_loss_topk: dimension mismatch");
  const auto dead = m.dead_mask();
  if (std::none_of(dead.begin(), dead.end(), [](bool b) { return b; })) return 0.0;

  const Matrix xm(1, m.d, std::vector<double>(x.begin(), x.end()));
  const auto f = forward_batch(m, xm);
  std::vector<std::size_t> idx;
  select_aux(f.pre.row(0), dead, k_aux, idx);
  if (idx.empty()) return 0.0;
  const ScaleFactors sc = scale_factors(m);
  std::vector<double> q(residual.begin(), residual.end());
  for (auto i : idx)
    for (std::size_t r = 0; r < m.d; ++r) q[r] -= m.dec(r, i) * sc.out * f.pre(0, i);
  double out = 0.0;
  for (double v : q) out += v * v;
  return out;
}

SaeGrads SaeGrads::zeros_like(const SaeModel& m) {
  SaeGrads g;
  g.w = Matrix(m.d, m.s);
  g.b_e.assign(m.s, 0.0);
  g.dec = Matrix(m.d, m.s);
  g.b_d.assign(m.d, 0.0);
  g.lambda_raw = 0.0;
  g.theta.assign(m.s, 0.0);
  return g;
}

LossBreakdown loss(const SaeModel& m, const Matrix& batch, const LossSettings& settings) {
  return evaluate(m, batch, settings, false).loss;
}

LossAndGrad backward(const SaeModel& m, const Matrix& batch, const LossSettings& settings) {
  return evaluate(m, batch, settings, true);
}

std::vector<std::size_t> normalize_decoder(SaeModel& m) {
  std::vector<double> norms(m.s, 0.0);
  for (std::size_t r = 0; r < m.d; ++r) {
    const auto row = m.dec.row(r);
    for (std::size_t i = 0; i < m.s; ++i) norms[i] += row[i] * row[i];
  }
  std::vector<std::size_t> zero_cols;
  for (std::size_t i = 0; i < m.s; ++i) {
    norms[i] = std::sqrt(norms[i]);
    if (norms[i] == 0.0) zero_cols.push_back(i);
  }
  for (std::size_t r = 0; r < m.d; ++r) {
    auto row = m.dec.row(r);
    for (std::size_t i = 0; i < m.s; ++i)
      if (norms[i] != 0.0) row[i] /= norms[i];
  }
  return zero_cols;
}

std::array<std::span<double>, kParamBlocks> param_blocks(SaeModel& m) {
  return {m.w.values(), std::span<double>(m.b_e), m.dec.values(), std::span<double>(m.b_d),
          std::span<double>(&m.lambda_raw, 1), std::span<double>(m.theta)};
}

std::array<std::span<double>, kParamBlocks> grad_blocks(SaeGrads& g) {
  return {g.w.values(), std::span<double>(g.b_e), g.dec.values(), std::span<double>(g.b_d),
          std::span<double>(&g.lambda_raw, 1), std::span<double>(g.theta)};
}

std::array<std::span<const double>, kParamBlocks> grad_blocks(const SaeGrads& g) {
  return {g.w.values(), std::span<const double>(g.b_e), g.dec.values(), std::span<const double>(g.b_d),
          std::span<const double>(&g.lambda_raw, 1), std::span<const double>(g.theta)};
}

std::array<const char*, kParamBlocks> param_block_names() {
  return {"W", "b_e", "D", "b_d", "lambda_raw", "theta"};
}

namespace {

const char* kernel_name(StepKernel k) { return k == StepKernel::Silverman ? "silverman" : "rectangular"; }

StepKernel parse_kernel(const std::string& s) {
  if (s == "rectangular") return StepKernel::Rectangular;
  if (s == "silverman") return StepKernel::Silverman;
  throw FormatError("unknown STE kernel '" + s + "'");
}

Matrix as_column(std::span<const double> v) { return Matrix::column_vector(v); }

std::vector<double> column_values(const Matrix& m, std::size_t expected, const char* name) {
  if (m.cols() != 1 || m.rows() != expected)
    throw ConsistencyError(std::string("checkpoint block ") + name + " has the wrong shape");
  return {m.values().begin(), m.values().end()};
}

}  // namespace

void save_model(const SaeModel& m, const std::filesystem::path& dir) {
  m.validate();
  std::filesystem::create_directories(dir);
  json meta = {
      {"format", 1},
      {"arch", to_string(m.arch)},
      {"d", m.d},
      {"s", m.s},
      {"k", m.k},
      {"lambda_raw", m.lambda_raw},
      {"scale_placement", m.options.placement == ScalePlacement::PreActivation ? "pre" : "post"},
      {"bandwidth", m.options.bandwidth},
      {"kernel", kernel_name(m.options.kernel)},
      {"theta_init", m.options.theta_init},
      {"dead_window", m.options.dead_window},
  };
  {
    std::ofstream out(dir / "model.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "model.json").string());
    out << meta.dump(2) << '\n';
  }
  write_matrix(dir / "W.saem", m.w);
  write_matrix(dir / "b_e.saem", as_column(m.b_e));
  write_matrix(dir / "D.saem", m.dec);
  write_matrix(dir / "b_d.saem", as_column(m.b_d));
  write_matrix(dir / "theta.saem", as_column(m.theta));
  std::vector<double> inactive(m.inactive_steps.begin(), m.inactive_steps.end());
  write_matrix(dir / "inactive_steps.saem", as_column(inactive));
}

SaeModel load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw IoError("checkpoint not found: " + (dir / "model.json").string());
  SaeModel m;
  try {
    const json meta = json::parse(in);
    if (meta.at("format").get<int>() != 1) throw FormatError("unsupported checkpoint format");
    m.arch = parse_arch(meta.at("arch").get<std::string>());
    m.d = meta.at("d").get<std::size_t>();
    m.s = meta.at("s").get<std::size_t>();
    m.k = meta.at("k").get<std::size_t>();
    m.lambda_raw = meta.at("lambda_raw").get<double>();
    m.options.placement =
        meta.at("scale_placement").get<std::string>() == "post" ? ScalePlacement::PostActivation
                                                                 : ScalePlacement::PreActivation;
    m.options.bandwidth = meta.at("bandwidth").get<double>();
    m.options.kernel = parse_kernel(meta.at("kernel").get<std::string>());
    m.options.theta_init = meta.at("theta_init").get<double>();
    m.options.dead_window = meta.at("dead_window").get<std::uint32_t>();
  } catch (const json::exception& e) {
    throw FormatError("malformed model.json: " + std::string(e.what()));
  }
  m.w = read_matrix(dir / "W.saem");
  m.dec = read_matrix(dir / "D.saem");
  m.b_e = column_values(read_matrix(dir / "b_e.saem"), m.s, "b_e");
  m.b_d = column_values(read_matrix(dir / "b_d.saem"), m.d, "b_d");
  m.theta = column_values(read_matrix(dir / "theta.saem"), m.s, "theta");
  for (double v : column_values(read_matrix(dir / "inactive_steps.saem"), m.s, "inactive_steps"))
    m.inactive_steps.push_back(static_cast<std::uint32_t>(v));
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    throw ConsistencyError(std::string("inconsistent checkpoint: ") + e.what());
  }
  return m;
}

}  // namespace saelab
