#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "saelab/encoders.hpp"
#include "saelab/matrix.hpp"
#include "saelab/rng.hpp"

namespace saelab {

enum class Arch { Relu, JumpRelu, TopK, Spade };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& name);

/// Where the fixed 1/(2d) scale enters for relu/jumprelu/topk: on the
/// pre-activation (default) or on the encoder output.
enum class ScalePlacement { PreActivation, PostActivation };

inline constexpr double kActivityThreshold = 1e-6;

struct ModelOptions {
  ScalePlacement placement = ScalePlacement::PreActivation;
  double bandwidth = 1e-3;
  StepKernel kernel = StepKernel::Rectangular;
  double theta_init = 1e-3;
  std::uint32_t dead_window = 200;
};

struct SaeModel {
  Arch arch = Arch::Relu;
  std::size_t d = 0;
  std::size_t s = 0;
  std::size_t k = 0;  // topk only
  Matrix w;           // d x s: encoder weights, or SpaDE prototypes
  std::vector<double> b_e;  // s; unused (zero) for topk and spade
  Matrix dec;               // d x s decoder
  std::vector<double> b_d;  // d
  double lambda_raw = 0.0;  // softplus-parameterized SpaDE inverse temperature
  std::vector<double> theta;  // s; jumprelu only
  ModelOptions options;
  /// Consecutive optimizer steps each latent has gone without activating.
  std::vector<std::uint32_t> inactive_steps;

  /// softplus(lambda_raw) for spade, 1/(2d) otherwise.
  double lambda() const;
  double fixed_scale() const { return 1.0 / (2.0 * static_cast<double>(d)); }
  std::vector<bool> dead_mask() const;
  void validate() const;

  friend bool operator==(const SaeModel&, const SaeModel&);
};

double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);

SaeModel init_model(Arch arch, std::size_t d, std::size_t s, std::size_t k, RngStream& rng,
                    const ModelOptions& options = {});

/// Replaces the encoder columns with randomly chosen rows of x (distinct
/// while x has enough rows) and copies them into the decoder.
void seed_prototypes(SaeModel& m, const Matrix& x, RngStream& rng);

struct ForwardResult {
  std::vector<double> z;
  std::vector<double> x_hat;
  ActiveSet active;
};

ForwardResult forward(const SaeModel& m, std::span<const double> x);

/// Latent codes for every row of x (n x s).
Matrix encode_batch(const SaeModel& m, const Matrix& x);
/// Reconstructions for every row of x (n x d).
Matrix reconstruct_batch(const SaeModel& m, const Matrix& x);

/// relu: ||z||_1; jumprelu: ||z||_0; topk: 0; spade: sum_i z_i ||x - W_i||^2.
double regularizer(Arch arch, std::span<const double> z, std::span<const double> x, const Matrix& w);

/// ||residual - D z_aux||^2 where z_aux keeps the k_aux largest positive
/// pre-activations among dead latents. Zero when no dead latent has a
/// positive pre-activation.
double aux_loss_topk(const SaeModel& m, std::span<const double> x, std::span<const double> residual,
                     std::size_t k_aux);

struct LossBreakdown {
  double mse = 0.0;
  double reg = 0.0;
  double aux = 0.0;
  double total = 0.0;
  double mean_l0 = 0.0;
};

struct SaeGrads {
  Matrix w;
  std::vector<double> b_e;
  Matrix dec;
  std::vector<double> b_d;
  double lambda_raw = 0.0;
  std::vector<double> theta;

  static SaeGrads zeros_like(const SaeModel& m);
};

struct LossSettings {
  double gamma = 0.0;
  double gamma_aux = 1.0;
  std::size_t k_aux = 0;  // 0 means k
};

struct LossAndGrad {
  LossBreakdown loss;
  SaeGrads grads;
  std::vector<bool> fired;  // latent exceeded the activity threshold somewhere in the batch
};

LossBreakdown loss(const SaeModel& m, const Matrix& batch, const LossSettings& settings);
LossAndGrad backward(const SaeModel& m, const Matrix& batch, const LossSettings& settings);

/// Scales every decoder column to unit norm. Returns the indices of zero
/// columns, which are left untouched.
std::vector<std::size_t> normalize_decoder(SaeModel& m);

/// Mutable views of the parameter blocks in a fixed order:
/// W, b_e, D, b_d, lambda_raw, theta.
inline constexpr std::size_t kParamBlocks = 6;
std::array<std::span<double>, kParamBlocks> param_blocks(SaeModel& m);
std::array<std::span<double>, kParamBlocks> grad_blocks(SaeGrads& g);
std::array<std::span<const double>, kParamBlocks> grad_blocks(const SaeGrads& g);
std::array<const char*, kParamBlocks> param_block_names();

// Checkpoint: model.json plus one .saem file per parameter block.
void save_model(const SaeModel& m, const std::filesystem::path& dir);
SaeModel load_model(const std::filesystem::path& dir);

}  // namespace saelab
