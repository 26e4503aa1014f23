#include "saelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "saelab/error.hpp"
#include "saelab/linalg.hpp"

namespace saelab {

using nlohmann::json;

F1Table latent_concept_f1(const Matrix& z, std::span<const std::uint32_t> labels, std::size_t num_concepts,
                          double threshold) {
  require(threshold > 0.0, "latent_concept_f1: threshold must be positive");
  require(labels.size() == z.rows(), "latent_concept_f1: label count mismatch");
  const std::size_t s = z.cols();
  F1Table t{Matrix(s, num_concepts), Matrix(s, num_concepts), Matrix(s, num_concepts), threshold};

  std::vector<std::size_t> concept_size(num_concepts, 0);
  for (auto l : labels) {
    require(l < num_concepts, "latent_concept_f1: label out of range");
    ++concept_size[l];
  }
  Matrix tp(s, num_concepts);
  std::vector<std::size_t> fired(s, 0);
  for (std::size_t b = 0; b < z.rows(); ++b) {
    const auto row = z.row(b);
    for (std::size_t i = 0; i < s; ++i) {
      if (row[i] > threshold) {
        ++fired[i];
        tp(i, labels[b]) += 1.0;
      }
    }
  }
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t c = 0; c < num_concepts; ++c) {
      const double p = fired[i] ? tp(i, c) / static_cast<double>(fired[i]) : 0.0;
      const double r = concept_size[c] ? tp(i, c) / static_cast<double>(concept_size[c]) : 0.0;
      t.precision(i, c) = p;
      t.recall(i, c) = r;
      t.f1(i, c) = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
  }
  return t;
}

std::vector<std::size_t> top_n_latents(const F1Table& table, std::size_t concept_id, std::size_t n) {
  require(n >= 1, "top_n_f1: n must be at least 1");
  require(concept_id < table.concepts(), "top_n_f1: concept out of range");
  std::vector<std::size_t> idx(table.latents());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t keep = std::min(n, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double fa = table.f1(a, concept_id), fb = table.f1(b, concept_id);
                      return fa > fb || (fa == fb && a < b);
                    });
  idx.resize(keep);
  return idx;
}

std::vector<double> top_n_f1(const F1Table& table, std::size_t concept_id, std::size_t n) {
  std::vector<double> out;
  for (auto i : top_n_latents(table, concept_id, n)) out.push_back(table.f1(i, concept_id));
  return out;
}

std::vector<double> normalized_mse_per_concept(const LabeledDataset& ds, const Matrix& x_hat) {
  require(x_hat.rows() == ds.size() && x_hat.cols() == ds.dim(), "normalized_mse: reconstruction shape mismatch");
  const std::size_t c_count = ds.num_concepts();
  const std::size_t d = ds.dim();
  Matrix mean(c_count, d);
  std::vector<std::size_t> count(c_count, 0);
  for (std::size_t b = 0; b < ds.size(); ++b) {
    const auto l = ds.labels[b];
    ++count[l];
    auto dst = mean.row(l);
    const auto src = ds.x.row(b);
    for (std::size_t r = 0; r < d; ++r) dst[r] += src[r];
  }
  for (std::size_t c = 0; c < c_count; ++c) {
    if (count[c] == 0) throw DegenerateInput("normalized_mse: concept " + std::to_string(c) + " has no samples");
    for (double& v : mean.row(c)) v /= static_cast<double>(count[c]);
  }
  std::vector<double> var(c_count, 0.0), err(c_count, 0.0);
  for (std::size_t b = 0; b < ds.size(); ++b) {
    const auto l = ds.labels[b];
    const auto x = ds.x.row(b);
    const auto xh = x_hat.row(b);
    const auto mu = mean.row(l);
    for (std::size_t r = 0; r < d; ++r) {
      var[l] += (x[r] - mu[r]) * (x[r] - mu[r]);
      err[l] += (x[r] - xh[r]) * (x[r] - xh[r]);
    }
  }
  std::vector<double> out(c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    if (!(var[c] > 0.0)) throw DegenerateInput("normalized_mse: concept " + std::to_string(c) + " has zero variance");
    out[c] = err[c] / var[c];
  }
  return out;
}

std::vector<double> normalized_mse_per_concept(const SaeModel& m, const LabeledDataset& ds) {
  return normalized_mse_per_concept(ds, reconstruct_batch(m, ds.x));
}

std::vector<double> l0_per_concept(const Matrix& z, std::span<const std::uint32_t> labels, std::size_t num_concepts,
                                   double threshold) {
  require(threshold > 0.0, "l0_per_concept: threshold must be positive");
  require(labels.size() == z.rows(), "l0_per_concept: label count mismatch");
  std::vector<double> total(num_concepts, 0.0);
  std::vector<std::size_t> count(num_concepts, 0);
  for (std::size_t b = 0; b < z.rows(); ++b) {
    const auto row = z.row(b);
    total[labels[b]] += static_cast<double>(std::count_if(row.begin(), row.end(), [&](double v) { return v > threshold; }));
    ++count[labels[b]];
  }
  for (std::size_t c = 0; c < num_concepts; ++c)
    total[c] = count[c] ? total[c] / static_cast<double>(count[c]) : 0.0;
  return total;
}

std::vector<bool> dead_latents(const Matrix& z, double threshold) {
  require(threshold > 0.0, "dead_latents: threshold must be positive");
  std::vector<bool> dead(z.cols(), true);
  for (std::size_t b = 0; b < z.rows(); ++b) {
    const auto row = z.row(b);
    for (std::size_t i = 0; i < z.cols(); ++i)
      if (row[i] > threshold) dead[i] = false;
  }
  return dead;
}

double dead_fraction(const Matrix& z, double threshold) {
  if (z.cols() == 0) return 0.0;
  const auto dead = dead_latents(z, threshold);
  return static_cast<double>(std::count(dead.begin(), dead.end(), true)) / static_cast<double>(z.cols());
}

std::vector<int> concept_assignment(const Matrix& z, std::span<const std::uint32_t> labels, std::size_t num_concepts,
                                    double threshold) {
  require(labels.size() == z.rows(), "concept_assignment: label count mismatch");
  const std::size_t s = z.cols();
  Matrix sum(s, num_concepts);
  std::vector<std::size_t> count(num_concepts, 0);
  for (std::size_t b = 0; b < z.rows(); ++b) {
    ++count[labels[b]];
    const auto row = z.row(b);
    for (std::size_t i = 0; i < s; ++i) sum(i, labels[b]) += row[i];
  }
  const auto dead = dead_latents(z, threshold);
  std::vector<int> out(s, -1);
  for (std::size_t i = 0; i < s; ++i) {
    if (dead[i]) continue;
    double best = -1.0;
    for (std::size_t c = 0; c < num_concepts; ++c) {
      if (count[c] == 0) continue;
      const double mean = sum(i, c) / static_cast<double>(count[c]);
      if (mean > best) {
        best = mean;
        out[i] = static_cast<int>(c);
      }
    }
  }
  return out;
}

namespace {

// Cosine similarity between the rows of `rows` listed in `order`.
Matrix cosine_rows(const Matrix& rows, std::span<const std::size_t> order) {
  const std::size_t n = order.size();
  Matrix unit = rows.select_rows(order);
  std::vector<bool> nonzero(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = unit.row(i);
    const double nrm = norm2(r);
    if (nrm > 0.0) {
      nonzero[i] = true;
      for (double& v : r) v /= nrm;
    }
  }
  Matrix s = matmul_nt(unit, unit);
  for (std::size_t i = 0; i < n; ++i) {
    s(i, i) = nonzero[i] ? 1.0 : 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::clamp(0.5 * (s(i, j) + s(j, i)), -1.0, 1.0);
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

}  // namespace

SimilarityMatrix data_similarity(const Matrix& z, std::span<const std::uint32_t> labels) {
  require(z.rows() > 0, "data_similarity: empty code matrix");
  require(labels.size() == z.rows(), "data_similarity: label count mismatch");
  SimilarityMatrix out;
  out.kind = SimilarityKind::DataPairs;
  out.ordering.resize(z.rows());
  std::iota(out.ordering.begin(), out.ordering.end(), std::size_t{0});
  std::stable_sort(out.ordering.begin(), out.ordering.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  for (auto i : out.ordering) out.group.push_back(static_cast<int>(labels[i]));
  out.values = cosine_rows(z, out.ordering);
  return out;
}

SimilarityMatrix latent_similarity(const Matrix& z, std::span<const std::uint32_t> labels, std::size_t num_concepts) {
  require(z.rows() > 0, "latent_similarity: empty code matrix");
  const auto assigned = concept_assignment(z, labels, num_concepts);
  SimilarityMatrix out;
  out.kind = SimilarityKind::LatentPairs;
  out.ordering.resize(z.cols());
  std::iota(out.ordering.begin(), out.ordering.end(), std::size_t{0});
  auto key = [&](std::size_t i) { return assigned[i] < 0 ? static_cast<long>(num_concepts) : assigned[i]; };
  std::stable_sort(out.ordering.begin(), out.ordering.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  for (auto i : out.ordering) out.group.push_back(assigned[i]);
  out.values = cosine_rows(z.transposed(), out.ordering);
  return out;
}

double mean_off_block_similarity(const SimilarityMatrix& s) {
  double acc = 0.0;
  std::size_t count = 0;
  const std::size_t n = s.values.rows();
  for (std::size_t i = 0; i < n; ++i) {
    if (s.group[i] < 0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (s.group[j] < 0 || s.group[j] == s.group[i]) continue;
      acc += s.values(i, j);
      ++count;
    }
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

double stable_rank(const Matrix& s) {
  std::vector<double> sv;
  if (is_symmetric(s, 1e-10 * std::max(1.0, frobenius_norm(s)))) {
    for (double l : sym_eig(s, 1e-13).values) sv.push_back(std::abs(l));
  } else {
    sv = singular_values(s);
  }
  const double top = sv.empty() ? 0.0 : *std::max_element(sv.begin(), sv.end());
  if (!(top > 0.0)) throw DegenerateInput("stable_rank: matrix is zero");
  return std::accumulate(sv.begin(), sv.end(), 0.0) / top;
}

double representation_stable_rank(const Matrix& z) {
  const auto sv = singular_values(z);
  if (sv.empty() || !(sv.front() > 0.0)) throw DegenerateInput("representation_stable_rank: matrix is zero");
  return std::accumulate(sv.begin(), sv.end(), 0.0) / sv.front();
}

SpectralResult spectral_clusters(const Matrix& s, RngStream& rng) {
  require(s.rows() == s.cols(), "spectral_clusters: matrix must be square");
  require(is_symmetric(s, 1e-10 * std::max(1.0, frobenius_norm(s))), "spectral_clusters: matrix must be symmetric");
  const std::size_t n = s.rows();
  const double sr = stable_rank(s);
  // Guard against ceil() of a value that is integral up to rounding.
  const auto k = std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(sr - 1e-9)));

  std::vector<double> inv_sqrt_deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = s.row(i);
    const double deg = std::accumulate(row.begin(), row.end(), 0.0);
    if (deg > 0.0) inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  Matrix normalized(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) normalized(i, j) = inv_sqrt_deg[i] * s(i, j) * inv_sqrt_deg[j];

  const auto eig = sym_eig(normalized, 1e-13);
  Matrix embed(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) embed(i, c) = eig.vectors(i, c);
    auto row = embed.row(i);
    const double nrm = norm2(row);
    if (nrm > 0.0)
      for (double& v : row) v /= nrm;
  }
  SpectralResult out;
  out.k = k;
  out.labels = kmeans(embed, k, rng, 300).labels;
  return out;
}

std::size_t intrinsic_dim_99(const Matrix& x) {
  require(x.rows() >= 2, "intrinsic_dim_99: need at least two samples");
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t r = 0; r < d; ++r) mean[r] += x(b, r);
  for (double& v : mean) v /= static_cast<double>(n);
  Matrix centered = x;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t r = 0; r < d; ++r) centered(b, r) -= mean[r];
  Matrix cov = matmul_tn(centered, centered);
  for (double& v : cov.values()) v /= static_cast<double>(n - 1);
  const auto eig = sym_eig(cov, 1e-12);
  const double trace = std::accumulate(eig.values.begin(), eig.values.end(), 0.0,
                                       [](double a, double l) { return a + std::max(l, 0.0); });
  if (!(trace > 0.0)) return 0;
  double acc = 0.0;
  for (std::size_t m = 0; m < eig.values.size(); ++m) {
    acc += std::max(eig.values[m], 0.0);
    if (acc > 0.99 * trace) return m + 1;
  }
  return eig.values.size();
}

RasterGrid raster_rf(const SaeModel& m, std::size_t latent, const GridSpec& grid) {
  require(m.d == 2, "raster_rf: model input dimension must be 2");
  require(latent < m.s, "raster_rf: latent index out of range");
  require(grid.resolution >= 2 && grid.x_max > grid.x_min && grid.y_max > grid.y_min, "raster_rf: invalid grid");
  const std::size_t res = grid.resolution;
  Matrix points(res * res, 2);
  for (std::size_t j = 0; j < res; ++j)
    for (std::size_t i = 0; i < res; ++i) {
      points(j * res + i, 0) = grid.x_at(i);
      points(j * res + i, 1) = grid.y_at(j);
    }
  const Matrix z = encode_batch(m, points);
  RasterGrid out{grid, latent, Matrix(res, res)};
  for (std::size_t j = 0; j < res; ++j)
    for (std::size_t i = 0; i < res; ++i) out.activations(j, i) = z(j * res + i, latent);
  return out;
}

HalfspaceVerdict rf_halfspace_test(const RasterGrid& raster) {
  const auto& a = raster.activations;
  const GridSpec& g = raster.grid;
  require(a.rows() == g.resolution && a.cols() == g.resolution, "rf_halfspace_test: raster shape mismatch");
  const std::size_t res = g.resolution;

  // Zero-level crossings between 4-neighbour cells with differing on/off state.
  std::vector<std::array<double, 2>> pts;
  auto on = [&](std::size_t j, std::size_t i) { return a(j, i) > 0.0; };
  for (std::size_t j = 0; j < res; ++j)
    for (std::size_t i = 0; i < res; ++i) {
      if (i + 1 < res && on(j, i) != on(j, i + 1))
        pts.push_back({0.5 * (g.x_at(i) + g.x_at(i + 1)), g.y_at(j)});
      if (j + 1 < res && on(j, i) != on(j + 1, i))
        pts.push_back({g.x_at(i), 0.5 * (g.y_at(j) + g.y_at(j + 1))});
    }

  HalfspaceVerdict v;
  v.boundary_points = pts.size();
  if (pts.size() < 2) {
    v.pass = true;
    v.vacuous = true;
    v.fit_score = 1.0;
    return v;
  }
  // Total least squares line through the centroid.
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p[0];
    cy += p[1];
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  Matrix cov(2, 2);
  for (const auto& p : pts) {
    const double dx = p[0] - cx, dy = p[1] - cy;
    cov(0, 0) += dx * dx;
    cov(0, 1) += dx * dy;
    cov(1, 1) += dy * dy;
  }
  cov(1, 0) = cov(0, 1);
  const auto eig = sym_eig(cov, 1e-14);
  // Normal is the eigenvector of the smallest eigenvalue.
  v.normal = {eig.vectors(0, 1), eig.vectors(1, 1)};
  v.offset = v.normal[0] * cx + v.normal[1] * cy;
  const double tol = std::max(g.cell_x(), g.cell_y());
  std::size_t within = 0;
  for (const auto& p : pts)
    if (std::abs(v.normal[0] * p[0] + v.normal[1] * p[1] - v.offset) <= tol) ++within;
  v.fit_score = static_cast<double>(within) / static_cast<double>(pts.size());
  v.pass = v.fit_score >= 0.99;
  return v;
}

ConeVerdict rf_cone_test(const SaeModel& m, std::size_t latent, RngStream& rng, std::size_t samples, double spread) {
  require(latent < m.s, "rf_cone_test: latent index out of range");
  require(samples >= 1, "rf_cone_test: need at least one sample");
  constexpr std::array<double, 3> kScales = {0.5, 2.0, 4.0};
  constexpr std::size_t kBlock = 512;
  const std::size_t max_draws = 200 * samples;

  ConeVerdict v;
  std::size_t draws = 0, kept_pairs = 0, total_pairs = 0;
  while (v.samples < samples && draws < max_draws) {
    Matrix x = sample_normal(rng, kBlock, m.d, 0.0, spread);
    for (std::size_t b = 0; b < kBlock; ++b)
      for (std::size_t r = 0; r < m.d; ++r) x(b, r) += m.b_d[r];
    draws += kBlock;
    const Matrix z = encode_batch(m, x);
    std::vector<std::size_t> hits;
    for (std::size_t b = 0; b < kBlock && v.samples + hits.size() < samples; ++b)
      if (z(b, latent) > 0.0) hits.push_back(b);
    if (hits.empty()) continue;
    v.samples += hits.size();
    for (double alpha : kScales) {
      Matrix scaled = x.select_rows(hits);
      for (std::size_t b = 0; b < scaled.rows(); ++b)
        for (std::size_t r = 0; r < m.d; ++r) scaled(b, r) = alpha * (scaled(b, r) - m.b_d[r]) + m.b_d[r];
      const Matrix zs = encode_batch(m, scaled);
      for (std::size_t b = 0; b < zs.rows(); ++b) kept_pairs += zs(b, latent) > 0.0 ? 1 : 0;
      total_pairs += zs.rows();
    }
  }
  if (v.samples == 0) {
    v.pass = true;
    v.vacuous = true;
    v.fraction = 1.0;
    return v;
  }
  v.fraction = static_cast<double>(kept_pairs) / static_cast<double>(total_pairs);
  v.pass = v.fraction >= 0.99;
  return v;
}

ReportBundle build_report(const SaeModel& m, const LabeledDataset& eval, const ReportOptions& options) {
  require(eval.size() > 0, "build_report: evaluation set is empty");
  eval.validate();
  const Matrix z = encode_batch(m, eval.x);
  const Matrix x_hat = reconstruct_batch(m, eval.x);
  const std::size_t concepts = eval.num_concepts();

  ReportBundle bundle;
  bundle.f1 = latent_concept_f1(z, eval.labels, concepts, options.threshold);
  ConceptReport& r = bundle.report;
  r.arch = to_string(m.arch);
  r.samples = eval.size();
  r.threshold = options.threshold;
  r.dead_fraction = dead_fraction(z, options.threshold);
  const auto nmse = normalized_mse_per_concept(eval, x_hat);
  const auto l0 = l0_per_concept(z, eval.labels, concepts, options.threshold);
  double l0_total = 0.0;
  for (std::size_t b = 0; b < z.rows(); ++b)
    for (double v : z.row(b)) l0_total += v > options.threshold ? 1.0 : 0.0;
  r.mean_l0 = l0_total / static_cast<double>(z.rows());
  for (std::size_t c = 0; c < concepts; ++c) {
    ConceptMetrics cm;
    cm.concept_id = c;
    cm.intrinsic_dim = eval.concepts[c].intrinsic_dim;
    cm.center_norm = eval.concepts[c].norm;
    cm.nmse = nmse[c];
    cm.l0 = l0[c];
    cm.top_latents = top_n_latents(bundle.f1, c, options.top_n);
    for (auto i : cm.top_latents) cm.top_f1.push_back(bundle.f1.f1(i, c));
    r.concepts.push_back(std::move(cm));
  }
  r.latent_concept = concept_assignment(z, eval.labels, concepts, options.threshold);
  try {
    r.representation_stable_rank = representation_stable_rank(z);
  } catch (const DegenerateInput&) {
    r.representation_stable_rank = 0.0;
  }

  if (!options.with_similarity) return bundle;
  const LabeledDataset sub = take_per_concept(eval, options.similarity_per_concept);
  const Matrix zs = encode_batch(m, sub.x);
  bundle.data_sim = data_similarity(zs, sub.labels);
  bundle.latent_sim = latent_similarity(z, eval.labels, concepts);
  r.mean_off_block_data_similarity = mean_off_block_similarity(*bundle.data_sim);
  try {
    r.data_stable_rank = stable_rank(bundle.data_sim->values);
    RngStream rng(options.seed);
    auto sc = spectral_clusters(bundle.data_sim->values, rng);
    r.data_clusters = sc.k;
    r.data_cluster_labels = std::move(sc.labels);
  } catch (const DegenerateInput&) {
    r.data_stable_rank = 0.0;
  }
  // Dead latents are excluded from the latent-pair stable rank.
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < bundle.latent_sim->group.size(); ++i)
    if (bundle.latent_sim->group[i] >= 0) live.push_back(i);
  if (!live.empty()) {
    Matrix live_sim(live.size(), live.size());
    for (std::size_t a = 0; a < live.size(); ++a)
      for (std::size_t b = 0; b < live.size(); ++b) live_sim(a, b) = bundle.latent_sim->values(live[a], live[b]);
    try {
      r.latent_stable_rank = stable_rank(live_sim);
    } catch (const DegenerateInput&) {
      r.latent_stable_rank = 0.0;
    }
  }
  return bundle;
}

std::string report_to_json(const ConceptReport& r) {
  json j;
  j["arch"] = r.arch;
  j["samples"] = r.samples;
  j["threshold"] = r.threshold;
  j["dead_fraction"] = r.dead_fraction;
  j["mean_l0"] = r.mean_l0;
  j["data_stable_rank"] = r.data_stable_rank;
  j["latent_stable_rank"] = r.latent_stable_rank;
  j["representation_stable_rank"] = r.representation_stable_rank;
  j["data_clusters"] = r.data_clusters;
  j["data_cluster_labels"] = r.data_cluster_labels;
  j["mean_off_block_data_similarity"] = r.mean_off_block_data_similarity;
  j["latent_concept"] = r.latent_concept;
  json cs = json::array();
  for (const auto& c : r.concepts)
    cs.push_back({{"concept", c.concept_id},
                  {"intrinsic_dim", c.intrinsic_dim},
                  {"center_norm", c.center_norm},
                  {"nmse", c.nmse},
                  {"l0", c.l0},
                  {"top_f1", c.top_f1},
                  {"top_latents", c.top_latents}});
  j["concepts"] = cs;
  return j.dump(2);
}

ConceptReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ConceptReport r;
    r.arch = j.at("arch").get<std::string>();
    r.samples = j.at("samples").get<std::size_t>();
    r.threshold = j.at("threshold").get<double>();
    r.dead_fraction = j.at("dead_fraction").get<double>();
    r.mean_l0 = j.at("mean_l0").get<double>();
    r.data_stable_rank = j.at("data_stable_rank").get<double>();
    r.latent_stable_rank = j.at("latent_stable_rank").get<double>();
    r.representation_stable_rank = j.at("representation_stable_rank").get<double>();
    r.data_clusters = j.at("data_clusters").get<std::size_t>();
    r.data_cluster_labels = j.at("data_cluster_labels").get<std::vector<std::size_t>>();
    r.mean_off_block_data_similarity = j.at("mean_off_block_data_similarity").get<double>();
    r.latent_concept = j.at("latent_concept").get<std::vector<int>>();
    for (const auto& c : j.at("concepts")) {
      ConceptMetrics cm;
      cm.concept_id = c.at("concept").get<std::size_t>();
      cm.intrinsic_dim = c.at("intrinsic_dim").get<std::size_t>();
      cm.center_norm = c.at("center_norm").get<double>();
      cm.nmse = c.at("nmse").get<double>();
      cm.l0 = c.at("l0").get<double>();
      cm.top_f1 = c.at("top_f1").get<std::vector<double>>();
      cm.top_latents = c.at("top_latents").get<std::vector<std::size_t>>();
      r.concepts.push_back(std::move(cm));
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report.json: ") + e.what());
  }
}

void write_f1_csv(const F1Table& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "latent,concept,precision,recall,f1\n";
  for (std::size_t i = 0; i < t.latents(); ++i)
    for (std::size_t c = 0; c < t.concepts(); ++c)
      out << i << ',' << c << ',' << t.precision(i, c) << ',' << t.recall(i, c) << ',' << t.f1(i, c) << '\n';
}

}  // namespace saelab
