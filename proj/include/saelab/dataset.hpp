#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "saelab/matrix.hpp"
#include "saelab/rng.hpp"

namespace saelab {

struct ConceptSpec {
  std::vector<double> center;
  std::size_t intrinsic_dim = 0;
  double variance_total = 0.0;
  double norm = 0.0;  // norm of the center
};

struct LabeledDataset {
  Matrix x;                         // n x d, one sample per row
  std::vector<std::uint32_t> labels;  // concept index per row
  std::vector<ConceptSpec> concepts;
  double split_fraction = 1.0;

  std::size_t size() const noexcept { return x.rows(); }
  std::size_t dim() const noexcept { return x.cols(); }
  std::size_t num_concepts() const noexcept { return concepts.size(); }
  std::vector<std::size_t> concept_counts() const;
  std::vector<std::size_t> rows_of(std::uint32_t concept_id) const;
  /// Throws ConsistencyError if a label is out of range or sizes disagree.
  void validate() const;
};

struct SparseCodingInstance {
  Matrix dictionary;  // d x s, unit-norm columns
  Matrix codes;       // s x n, nonnegative
  double noise_std = 0.0;
};

struct KdsEmbedding {
  double kappa = 0.0;
  Matrix x_scaled;     // d x n
  Matrix dictionary;   // d x (s + 1), last atom all zeros
  Matrix codes;        // (s + 1) x n, columns on the probability simplex
};

inline constexpr double kSeparabilityVariance = 0x1.6a09e667f3bcdp-6;  // 2^-5.5
inline constexpr std::size_t kHeterogeneityAmbientDim = 128;
inline constexpr double kHeterogeneityCenterScale = 1.0 / 21.0;

/// Six isotropic 2-D Gaussian clusters with centers at angles 2*pi*j/6 and
/// radii alternating 1, 3, 1, 3, 1, 3. Rows are grouped by concept.
LabeledDataset gen_separability(std::size_t n_per_concept, double variance, RngStream& rng);

/// Five clusters in 128-D with intrinsic dimensions 6, 14, 30, 62, 126 on
/// nested leading-coordinate subspaces. Total variance per concept is 1/21.
LabeledDataset gen_heterogeneity(std::size_t n_per_concept, RngStream& rng);

/// x = D z + noise with exactly k_active nonzero, nonnegative entries in z.
/// Returns the instance and X (d x n, one sample per column).
std::pair<SparseCodingInstance, Matrix> gen_sparse_coding(std::size_t d, std::size_t s,
                                                          std::size_t k_active, std::size_t n,
                                                          double noise_std, RngStream& rng);

/// Rescales standard sparse-coding data so every code lies on the simplex,
/// using one appended all-zeros atom to absorb the slack.
KdsEmbedding kds_embed(const SparseCodingInstance& instance, const Matrix& x);

/// Shuffled per-concept split; each concept contributes round(n_c * f) rows
/// to train.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                RngStream& rng);

/// First `per_concept` rows of every concept, in original order.
LabeledDataset take_per_concept(const LabeledDataset& ds, std::size_t per_concept);

// Directory layout: X.saem, labels.u32, concepts.json.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir);
LabeledDataset load_dataset(const std::filesystem::path& dir);

std::vector<std::uint32_t> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& labels);

}  // namespace saelab
