#include "saelab/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "saelab/error.hpp"

namespace saelab {

using nlohmann::json;

std::vector<std::size_t> LabeledDataset::concept_counts() const {
  std::vector<std::size_t> counts(concepts.size(), 0);
  for (auto l : labels)
    if (l < counts.size()) ++counts[l];
  return counts;
}

std::vector<std::size_t> LabeledDataset::rows_of(std::uint32_t concept_id) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == concept_id) rows.push_back(i);
  return rows;
}

void LabeledDataset::validate() const {
  if (labels.size() != x.rows())
    throw ConsistencyError("dataset has " + std::to_string(x.rows()) + " rows but " +
                           std::to_string(labels.size()) + " labels");
  for (auto l : labels)
    if (l >= concepts.size())
      throw ConsistencyError("label " + std::to_string(l) + " has no concept spec");
}

LabeledDataset gen_separability(std::size_t n_per_concept, double variance, RngStream& rng) {
  require(n_per_concept >= 1, "gen_separability: n_per_concept must be >= 1");
  require(variance > 0.0, "gen_separability: variance must be positive");
  constexpr std::size_t kConcepts = 6;
  const double stddev = std::sqrt(variance);

  LabeledDataset ds;
  ds.x = Matrix(kConcepts * n_per_concept, 2);
  ds.labels.resize(ds.x.rows());
  for (std::size_t j = 0; j < kConcepts; ++j) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / 6.0;
    const double radius = (j % 2 == 0) ? 1.0 : 3.0;
    ConceptSpec spec;
    spec.center = {radius * std::cos(angle), radius * std::sin(angle)};
    spec.intrinsic_dim = 2;
    spec.variance_total = 2.0 * variance;
    spec.norm = radius;

    RngStream stream = rng.split(j);
    const Matrix noise = sample_normal(stream, n_per_concept, 2, 0.0, stddev);
    for (std::size_t i = 0; i < n_per_concept; ++i) {
      const std::size_t r = j * n_per_concept + i;
      ds.x(r, 0) = spec.center[0] + noise(i, 0);
      ds.x(r, 1) = spec.center[1] + noise(i, 1);
      ds.labels[r] = static_cast<std::uint32_t>(j);
    }
    ds.concepts.push_back(std::move(spec));
  }
  rng = rng.split(kConcepts);
  return ds;
}

LabeledDataset gen_heterogeneity(std::size_t n_per_concept, RngStream& rng) {
  require(n_per_concept >= 1, "gen_heterogeneity: n_per_concept must be >= 1");
  constexpr std::array<std::size_t, 5> kDims = {6, 14, 30, 62, 126};
  constexpr std::size_t d = kHeterogeneityAmbientDim;
  const double total_variance = kHeterogeneityCenterScale;

  LabeledDataset ds;
  ds.x = Matrix(kDims.size() * n_per_concept, d);
  ds.labels.resize(ds.x.rows());
  for (std::size_t q = 0; q < kDims.size(); ++q) {
    RngStream stream = rng.split(q);
    ConceptSpec spec;
    spec.center.resize(d);
    for (auto& c : spec.center) c = stream.uniform(0.0, kHeterogeneityCenterScale);
    spec.intrinsic_dim = kDims[q];
    spec.variance_total = total_variance;
    spec.norm = norm2(spec.center);

    const double stddev = std::sqrt(total_variance / static_cast<double>(kDims[q]));
    const Matrix noise = sample_normal(stream, n_per_concept, kDims[q], 0.0, stddev);
    for (std::size_t i = 0; i < n_per_concept; ++i) {
      const std::size_t r = q * n_per_concept + i;
      auto row = ds.x.row(r);
      std::copy(spec.center.begin(), spec.center.end(), row.begin());
      for (std::size_t c = 0; c < kDims[q]; ++c) row[c] += noise(i, c);
      ds.labels[r] = static_cast<std::uint32_t>(q);
    }
    ds.concepts.push_back(std::move(spec));
  }
  rng = rng.split(kDims.size());
  return ds;
}

std::pair<SparseCodingInstance, Matrix> gen_sparse_coding(std::size_t d, std::size_t s,
                                                          std::size_t k_active, std::size_t n,
                                                          double noise_std, RngStream& rng) {
  require(d >= 1 && s >= 1, "gen_sparse_coding: dimensions must be positive");
  require(k_active <= s, "gen_sparse_coding: k_active exceeds dictionary size");
  require(noise_std >= 0.0, "gen_sparse_coding: noise_std must be non-negative");

  SparseCodingInstance inst;
  inst.noise_std = noise_std;
  inst.dictionary = sample_normal(rng, d, s, 0.0, 1.0);
  for (std::size_t c = 0; c < s; ++c) {
    auto col = inst.dictionary.column(c);
    double nrm = norm2(col);
    if (nrm == 0.0) {
      col.assign(d, 0.0);
      col[c % d] = 1.0;
      nrm = 1.0;
    }
    for (auto& v : col) v /= nrm;
    inst.dictionary.set_column(c, col);
  }

  inst.codes = Matrix(s, n);
  std::vector<std::size_t> idx(s);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < s; ++i) idx[i] = i;
    for (std::size_t a = 0; a < k_active; ++a) {
      const auto b = a + static_cast<std::size_t>(rng.below(s - a));
      std::swap(idx[a], idx[b]);
      inst.codes(idx[a], j) = rng.uniform_open_zero();
    }
  }

  Matrix x = matmul(inst.dictionary, inst.codes);
  if (noise_std > 0.0) {
    const Matrix noise = sample_normal(rng, d, n, 0.0, noise_std);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += noise.data()[i];
  }
  return {std::move(inst), std::move(x)};
}

KdsEmbedding kds_embed(const SparseCodingInstance& inst, const Matrix& x) {
  const std::size_t d = inst.dictionary.rows();
  const std::size_t s = inst.dictionary.cols();
  require(inst.codes.rows() == s, "kds_embed: code/dictionary size mismatch");
  require(x.rows() == d && x.cols() == inst.codes.cols(), "kds_embed: data shape mismatch");
  for (double v : inst.codes.values())
    require(v >= 0.0, "kds_embed: codes must be nonnegative");

  const std::size_t n = x.cols();
  double max_mass = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double mass = 0.0;
    for (std::size_t i = 0; i < s; ++i) mass += inst.codes(i, j);
    max_mass = std::max(max_mass, mass);
  }
  if (!(max_mass > 0.0)) throw DegenerateInput("kds_embed: all codes are zero, scaling undefined");

  KdsEmbedding out;
  out.kappa = 1.0 / max_mass;
  out.x_scaled = x;
  for (auto& v : out.x_scaled.values()) v *= out.kappa;
  out.dictionary = Matrix(d, s + 1);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < s; ++c) out.dictionary(r, c) = inst.dictionary(r, c);
  out.codes = Matrix(s + 1, n);
  for (std::size_t j = 0; j < n; ++j) {
    double mass = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      out.codes(i, j) = out.kappa * inst.codes(i, j);
      mass += out.codes(i, j);
    }
    out.codes(s, j) = std::max(0.0, 1.0 - mass);
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                RngStream& rng) {
  require(train_fraction > 0.0 && train_fraction < 1.0, "split: fraction must lie in (0, 1)");
  ds.validate();
  std::vector<std::size_t> train_rows, test_rows;
  for (std::uint32_t c = 0; c < ds.num_concepts(); ++c) {
    auto rows = ds.rows_of(c);
    RngStream stream = rng.split(c);
    const auto perm = permutation(stream, rows.size());
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(rows.size())));
    for (std::size_t i = 0; i < rows.size(); ++i)
      (i < n_train ? train_rows : test_rows).push_back(rows[perm[i]]);
  }
  rng = rng.split(ds.num_concepts());

  auto make = [&](const std::vector<std::size_t>& rows, double fraction) {
    LabeledDataset out;
    out.x = ds.x.select_rows(rows);
    out.labels.reserve(rows.size());
    for (auto r : rows) out.labels.push_back(ds.labels[r]);
    out.concepts = ds.concepts;
    out.split_fraction = fraction;
    return out;
  };
  return {make(train_rows, train_fraction), make(test_rows, 1.0 - train_fraction)};
}

LabeledDataset take_per_concept(const LabeledDataset& ds, std::size_t per_concept) {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> taken(ds.num_concepts(), 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto l = ds.labels[i];
    if (l < taken.size() && taken[l] < per_concept) {
      ++taken[l];
      rows.push_back(i);
    }
  }
  LabeledDataset out;
  out.x = ds.x.select_rows(rows);
  for (auto r : rows) out.labels.push_back(ds.labels[r]);
  out.concepts = ds.concepts;
  out.split_fraction = ds.split_fraction;
  return out;
}

void write_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (auto l : labels) {
    unsigned char b[4] = {static_cast<unsigned char>(l), static_cast<unsigned char>(l >> 8),
                          static_cast<unsigned char>(l >> 16), static_cast<unsigned char>(l >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::uint32_t> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw FormatError("label file length is not a multiple of 4: " + path.string());
  std::vector<std::uint32_t> labels(bytes.size() / 4);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + 4 * i);
    labels[i] = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
                (std::uint32_t{b[3]} << 24);
  }
  return labels;
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  write_matrix(dir / "X.saem", ds.x);
  write_labels(dir / "labels.u32", ds.labels);
  json concepts = json::array();
  for (const auto& c : ds.concepts)
    concepts.push_back({{"center", c.center},
                        {"intrinsic_dim", c.intrinsic_dim},
                        {"variance_total", c.variance_total},
                        {"norm", c.norm}});
  std::ofstream out(dir / "concepts.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "concepts.json").string());
  out << concepts.dump(2) << '\n';
}

LabeledDataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  LabeledDataset ds;
  ds.x = read_matrix(dir / "X.saem");
  ds.labels = read_labels(dir / "labels.u32");

  std::ifstream in(dir / "concepts.json");
  if (!in) throw IoError("cannot open " + (dir / "concepts.json").string());
  json concepts;
  try {
    concepts = json::parse(in);
    for (const auto& c : concepts) {
      ConceptSpec spec;
      spec.center = c.at("center").get<std::vector<double>>();
      spec.intrinsic_dim = c.at("intrinsic_dim").get<std::size_t>();
      spec.variance_total = c.at("variance_total").get<double>();
      spec.norm = c.at("norm").get<double>();
      ds.concepts.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed concepts.json: " + std::string(e.what()));
  }
  ds.validate();
  for (const auto& c : ds.concepts)
    if (c.center.size() != ds.dim())
      throw ConsistencyError("concept center dimension differs from data dimension");
  return ds;
}

}  // namespace saelab
