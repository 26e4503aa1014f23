#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saelab/dataset.hpp"
#include "saelab/matrix.hpp"
#include "saelab/rng.hpp"
#include "saelab/sae.hpp"

namespace saelab {

// ---------------------------------------------------------------------------
// Monosemanticity

/// Per (latent, concept) precision/recall/F1 of the predictor
/// "latent activation > threshold" against "sample belongs to concept".
struct F1Table {
  Matrix precision;  // s x C
  Matrix recall;     // s x C
  Matrix f1;         // s x C
  double threshold = kActivityThreshold;

  std::size_t latents() const { return f1.rows(); }
  std::size_t concepts() const { return f1.cols(); }
};

F1Table latent_concept_f1(const Matrix& z, std::span<const std::uint32_t> labels, std::size_t num_concepts,
                          double threshold = kActivityThreshold);

/// The n largest F1 values for a concept, descending (truncated to s).
std::vector<double> top_n_f1(const F1Table& table, std::size_t concept_id, std::size_t n);
/// Latent indices matching top_n_f1; ties go to the lower latent index.
std::vector<std::size_t> top_n_latents(const F1Table& table, std::size_t concept_id, std::size_t n);

// ---------------------------------------------------------------------------
// Fidelity and sparsity

/// Mean squared reconstruction error of each concept divided by the
/// concept's empirical total variance. Throws DegenerateInput for a concept
/// with zero variance or no samples.
std::vector<double> normalized_mse_per_concept(const LabeledDataset& ds, const Matrix& x_hat);
std::vector<double> normalized_mse_per_concept(const SaeModel& m, const LabeledDataset& ds);

std::vector<double> l0_per_concept(const Matrix& z, std::span<const std::uint32_t> labels, std::size_t num_concepts,
                                   double threshold = kActivityThreshold);
std::vector<bool> dead_latents(const Matrix& z, double threshold = kActivityThreshold);
double dead_fraction(const Matrix& z, double threshold = kActivityThreshold);

/// Latent -> concept with the largest mean activation; -1 for dead latents.
std::vector<int> concept_assignment(const Matrix& z, std::span<const std::uint32_t> labels, std::size_t num_concepts,
                                    double threshold = kActivityThreshold);

// ---------------------------------------------------------------------------
// Similarity structure

enum class SimilarityKind { DataPairs, LatentPairs };

struct SimilarityMatrix {
  Matrix values;
  SimilarityKind kind = SimilarityKind::DataPairs;
  /// values(i, j) compares original items ordering[i] and ordering[j].
  std::vector<std::size_t> ordering;
  /// Concept of each ordered item (-1 for unassigned latents).
  std::vector<int> group;
};

/// Cosine similarity between code rows, ordered by concept label.
SimilarityMatrix data_similarity(const Matrix& z, std::span<const std::uint32_t> labels);
/// Cosine similarity between latent columns, ordered by assigned concept.
SimilarityMatrix latent_similarity(const Matrix& z, std::span<const std::uint32_t> labels, std::size_t num_concepts);

/// Mean similarity over ordered pairs whose groups differ (unassigned items skipped).
double mean_off_block_similarity(const SimilarityMatrix& s);

/// Sum of singular values over the largest one.
double stable_rank(const Matrix& s);
/// Stable rank of the raw code matrix rather than a similarity matrix.
double representation_stable_rank(const Matrix& z);

struct SpectralResult {
  std::size_t k = 0;
  std::vector<std::size_t> labels;
};

/// k = ceil(stable_rank(S)); top-k eigenvectors of D^-1/2 S D^-1/2,
/// row-normalized, clustered with k-means.
SpectralResult spectral_clusters(const Matrix& s, RngStream& rng);

/// Smallest m whose top-m covariance eigenvalues exceed 99% of the trace.
std::size_t intrinsic_dim_99(const Matrix& x);

// ---------------------------------------------------------------------------
// Receptive fields

struct GridSpec {
  double x_min = -4.0;
  double x_max = 4.0;
  double y_min = -4.0;
  double y_max = 4.0;
  std::size_t resolution = 256;

  double cell_x() const { return (x_max - x_min) / static_cast<double>(resolution); }
  double cell_y() const { return (y_max - y_min) / static_cast<double>(resolution); }
  /// Cell-center coordinates.
  double x_at(std::size_t i) const { return x_min + (static_cast<double>(i) + 0.5) * cell_x(); }
  double y_at(std::size_t j) const { return y_min + (static_cast<double>(j) + 0.5) * cell_y(); }
};

struct RasterGrid {
  GridSpec grid;
  std::size_t latent = 0;
  Matrix activations;  // resolution x resolution; row = y index, column = x index
};

RasterGrid raster_rf(const SaeModel& m, std::size_t latent, const GridSpec& grid);

struct HalfspaceVerdict {
  bool pass = false;
  bool vacuous = false;  // receptive field empty or covering the whole grid
  double fit_score = 0.0;
  std::size_t boundary_points = 0;
  std::array<double, 2> normal{0.0, 0.0};
  double offset = 0.0;
};

/// Fits a line to the on/off boundary of the raster; passes when at least
/// 99% of boundary points lie within one cell width of it.
HalfspaceVerdict rf_halfspace_test(const RasterGrid& raster);

struct ConeVerdict {
  bool pass = false;
  bool vacuous = false;
  double fraction = 0.0;
  std::size_t samples = 0;
};

/// Checks that alpha (x - b_d) + b_d keeps the latent active for
/// alpha in {0.5, 2, 4}, over random x that activate it.
ConeVerdict rf_cone_test(const SaeModel& m, std::size_t latent, RngStream& rng, std::size_t samples = 1000,
                         double spread = 3.0);

// ---------------------------------------------------------------------------
// Report bundle

struct ConceptMetrics {
  std::size_t concept_id = 0;
  std::size_t intrinsic_dim = 0;
  double center_norm = 0.0;
  double nmse = 0.0;
  double l0 = 0.0;
  std::vector<double> top_f1;
  std::vector<std::size_t> top_latents;
};

struct ConceptReport {
  std::string arch;
  std::size_t samples = 0;
  double threshold = kActivityThreshold;
  double dead_fraction = 0.0;
  double mean_l0 = 0.0;
  std::vector<ConceptMetrics> concepts;
  std::vector<int> latent_concept;
  double data_stable_rank = 0.0;
  double latent_stable_rank = 0.0;
  double representation_stable_rank = 0.0;
  std::size_t data_clusters = 0;
  std::vector<std::size_t> data_cluster_labels;
  double mean_off_block_data_similarity = 0.0;
};

struct ReportOptions {
  double threshold = kActivityThreshold;
  std::size_t top_n = 5;
  std::size_t similarity_per_concept = 50;
  std::uint64_t seed = 0;
  bool with_similarity = true;
};

struct ReportBundle {
  ConceptReport report;
  F1Table f1;
  std::optional<SimilarityMatrix> data_sim;
  std::optional<SimilarityMatrix> latent_sim;
};

ReportBundle build_report(const SaeModel& m, const LabeledDataset& eval, const ReportOptions& options = {});

std::string report_to_json(const ConceptReport& r);
ConceptReport report_from_json(const std::string& text);
/// Columns: latent, concept, precision, recall, f1.
void write_f1_csv(const F1Table& table, const std::filesystem::path& path);

}  // namespace saelab
