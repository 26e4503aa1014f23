#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "saelab/matrix.hpp"

namespace saelab {

/// Sorted latent indices with nonzero output.
struct ActiveSet {
  std::vector<std::size_t> indices;
  std::size_t size() const noexcept { return indices.size(); }
  bool contains(std::size_t i) const;
  friend bool operator==(const ActiveSet&, const ActiveSet&) = default;
};

/// Pseudo-derivative kernel for the straight-through estimator.
enum class StepKernel { Rectangular, Silverman };

double step_kernel(StepKernel kernel, double u);

struct JumpParams {
  std::vector<double> theta;
  double bandwidth = 1e-3;
  StepKernel kernel = StepKernel::Rectangular;
};

struct Activation {
  std::vector<double> z;
  ActiveSet active;
};

// Forward projections. Each is the Euclidean projection of v onto its
// constraint set (JumpReLU excepted, which is a thresholded identity).
Activation relu_fwd(std::span<const double> v);
/// z_i = v_i when v_i > theta_i, else 0.
Activation jumprelu_fwd(std::span<const double> v, const JumpParams& p);
/// ReLU followed by keeping the k largest entries; ties keep the lower index.
Activation topk_fwd(std::span<const double> v, std::size_t k);
/// Projection onto the probability simplex (sort and threshold).
Activation sparsemax(std::span<const double> v);

// In-place kernels used by the batch paths; `active` is overwritten.
void relu_into(std::span<const double> v, std::span<double> z, std::vector<std::size_t>& active);
void jumprelu_into(std::span<const double> v, std::span<const double> theta, std::span<double> z,
                   std::vector<std::size_t>& active);
void topk_into(std::span<const double> v, std::size_t k, std::span<double> z,
               std::vector<std::size_t>& active);
void sparsemax_into(std::span<const double> v, std::span<double> z, std::vector<std::size_t>& active);

/// out_i = ||x - W[:, i]||^2 via ||x||^2 - 2 W^T x + ||W_i||^2, clipped at 0.
std::vector<double> pairwise_sq_dist(std::span<const double> x, const Matrix& w);

struct SpadeOutput {
  Activation act;
  std::vector<double> dist;
};

/// sparsemax(-lambda * dist(x, W)).
SpadeOutput spade_encode(std::span<const double> x, const Matrix& w, double lambda);

// Vector-Jacobian products.
std::vector<double> relu_vjp(std::span<const double> v, std::span<const double> grad_z);
std::vector<double> topk_vjp(const ActiveSet& active, std::span<const double> grad_z);
/// Jacobian of sparsemax is diag(1_M) - 1_M 1_M^T / |M| on the support M.
std::vector<double> sparsemax_vjp(const ActiveSet& active, std::span<const double> grad_z);
void sparsemax_vjp_into(std::span<const std::size_t> active, std::span<const double> grad_z,
                        std::span<double> grad_v);

struct JumpVjp {
  std::vector<double> grad_v;
  std::vector<double> grad_theta;
};

/// grad_l0 is the upstream gradient on the L0 count estimate sum_i H(v_i - theta_i).
/// Threshold gradients use the straight-through pseudo-derivatives
///   dz_i/dtheta_i      ~ -(v_i / eps) K((v_i - theta_i) / eps)
///   dH_i/dtheta_i      ~ -(1 / eps)   K((v_i - theta_i) / eps)
JumpVjp jumprelu_vjp(std::span<const double> v, const JumpParams& p, std::span<const double> grad_z,
                     double grad_l0);

struct SpadeVjp {
  std::vector<double> grad_x;
  Matrix grad_w;  // d x s
  double grad_lambda = 0.0;
};

SpadeVjp spade_vjp(std::span<const double> x, const Matrix& w, double lambda,
                   std::span<const double> dist, const ActiveSet& active,
                   std::span<const double> grad_z);

enum class EncoderKind { Relu, JumpRelu, TopK, Sparsemax, Spade };

/// Forward state retained for a later VJP. Holds a fingerprint of the
/// prototype matrix so a VJP against modified prototypes is rejected.
struct EncoderCache {
  EncoderKind kind = EncoderKind::Relu;
  std::vector<double> input;  // v, or x for SpaDE
  Activation output;
  JumpParams jump;
  std::size_t k = 0;
  const Matrix* prototypes = nullptr;
  std::uint64_t prototype_fingerprint = 0;
  double lambda = 0.0;
  std::vector<double> dist;
};

EncoderCache relu_forward_cached(std::span<const double> v);
EncoderCache jumprelu_forward_cached(std::span<const double> v, const JumpParams& p);
EncoderCache topk_forward_cached(std::span<const double> v, std::size_t k);
EncoderCache sparsemax_forward_cached(std::span<const double> v);
EncoderCache spade_forward_cached(std::span<const double> x, const Matrix& w, double lambda);

struct EncoderGrad {
  std::vector<double> grad_input;  // grad_v, or grad_x for SpaDE
  std::vector<double> grad_theta;  // JumpReLU only
  Matrix grad_w;                   // SpaDE only
  double grad_lambda = 0.0;        // SpaDE only
};

EncoderGrad encoder_vjp(const EncoderCache& cache, std::span<const double> grad_z, double grad_l0 = 0.0);

std::uint64_t fingerprint(std::span<const double> values);

}  // namespace saelab
