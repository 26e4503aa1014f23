#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "saelab/dataset.hpp"
#include "saelab/error.hpp"

using namespace saelab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("saelab_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<double> concept_mean(const LabeledDataset& ds, std::uint32_t c) {
  std::vector<double> m(ds.dim(), 0.0);
  const auto rows = ds.rows_of(c);
  for (auto r : rows)
    for (std::size_t j = 0; j < ds.dim(); ++j) m[j] += ds.x(r, j);
  for (auto& v : m) v /= static_cast<double>(rows.size());
  return m;
}

}  // namespace

TEST_CASE("separability clusters sit at the specified centers") {
  RngStream rng(1);
  const std::size_t n = 4000;
  const auto ds = gen_separability(n, kSeparabilityVariance, rng);
  REQUIRE(ds.num_concepts() == 6);
  REQUIRE(ds.dim() == 2);
  REQUIRE(ds.size() == 6 * n);
  const double sigma = std::sqrt(kSeparabilityVariance);
  for (std::uint32_t c = 0; c < 6; ++c) {
    const double norm = c % 2 == 0 ? 1.0 : 3.0;
    const double ang = 2.0 * std::numbers::pi * c / 6.0;
    const auto m = concept_mean(ds, c);
    CHECK(std::abs(m[0] - norm * std::cos(ang)) < 4.0 * sigma / std::sqrt(double(n)));
    CHECK(std::abs(m[1] - norm * std::sin(ang)) < 4.0 * sigma / std::sqrt(double(n)));
    CHECK(ds.concepts[c].norm == doctest::Approx(norm));
    double var = 0.0;
    for (auto r : ds.rows_of(c)) var += std::pow(ds.x(r, 0) - m[0], 2);
    var /= static_cast<double>(n);
    CHECK(var == doctest::Approx(kSeparabilityVariance).epsilon(0.08));
  }
}

TEST_CASE("heterogeneity concepts have nested supports and equal total variance") {
  RngStream rng(2);
  const auto ds = gen_heterogeneity(3000, rng);
  REQUIRE(ds.num_concepts() == 5);
  REQUIRE(ds.dim() == 128);
  const std::size_t dims[] = {6, 14, 30, 62, 126};
  for (std::uint32_t c = 0; c < 5; ++c) {
    CHECK(ds.concepts[c].intrinsic_dim == dims[c]);
    for (double v : ds.concepts[c].center) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 / 21.0);
    }
    const auto m = concept_mean(ds, c);
    double total = 0.0;
    for (auto r : ds.rows_of(c))
      for (std::size_t j = 0; j < 128; ++j) {
        const double dev = ds.x(r, j) - m[j];
        total += dev * dev;
        // Outside the leading d_c coordinates the sample equals its center.
        if (j >= dims[c]) CHECK_MESSAGE(std::abs(ds.x(r, j) - ds.concepts[c].center[j]) == 0.0, "coord " << j);
      }
    total /= 3000.0;
    CHECK(total == doctest::Approx(1.0 / 21.0).epsilon(0.08));
  }
}

TEST_CASE("sparse coding instances have unit atoms and exact support size") {
  RngStream rng(3);
  auto [inst, x] = gen_sparse_coding(8, 12, 3, 50, 0.0, rng);
  for (std::size_t j = 0; j < 12; ++j) CHECK(norm2(inst.dictionary.column(j)) == doctest::Approx(1.0).epsilon(1e-10));
  for (std::size_t i = 0; i < 50; ++i) {
    int nnz = 0;
    for (std::size_t j = 0; j < 12; ++j) {
      CHECK(inst.codes(j, i) >= 0.0);
      nnz += inst.codes(j, i) > 0.0;
    }
    CHECK(nnz == 3);
  }
  CHECK(max_abs_diff(matmul(inst.dictionary, inst.codes), x) < 1e-12);
}

TEST_CASE("sparse coding noise has the requested scale") {
  RngStream rng(4);
  const std::size_t d = 16;
  auto [inst, x] = gen_sparse_coding(d, 20, 2, 4000, 0.05, rng);
  const Matrix clean = matmul(inst.dictionary, inst.codes);
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) ss += std::pow(x.data()[i] - clean.data()[i], 2);
  const double per_sample = std::sqrt(ss / 4000.0);
  CHECK(per_sample == doctest::Approx(0.05 * std::sqrt(double(d))).epsilon(0.1));
}

TEST_CASE("kds embedding reproduces the data with simplex codes") {
  RngStream rng(5);
  auto [inst, x] = gen_sparse_coding(10, 15, 4, 200, 0.0, rng);
  const KdsEmbedding e = kds_embed(inst, x);
  REQUIRE(e.dictionary.cols() == 16);
  for (std::size_t r = 0; r < 10; ++r) CHECK(e.dictionary(r, 15) == 0.0);
  for (std::size_t i = 0; i < 200; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
      CHECK(e.codes(j, i) >= 0.0);
      sum += e.codes(j, i);
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  CHECK(max_abs_diff(matmul(e.dictionary, e.codes), e.x_scaled) < 1e-12);
}

TEST_CASE("kds embedding of a code already on the simplex keeps kappa 1") {
  SparseCodingInstance inst;
  inst.dictionary = Matrix{{1.0, 0.0}, {0.0, 1.0}};
  inst.codes = Matrix{{0.25}, {0.75}};
  const Matrix x = matmul(inst.dictionary, inst.codes);
  const KdsEmbedding e = kds_embed(inst, x);
  CHECK(e.kappa == 1.0);
  CHECK(e.codes(2, 0) == 0.0);
}

TEST_CASE("kds embedding rejects all-zero codes") {
  SparseCodingInstance inst;
  inst.dictionary = Matrix{{1.0}, {0.0}};
  inst.codes = Matrix{{0.0, 0.0}};
  CHECK_THROWS_AS(kds_embed(inst, Matrix(2, 2)), DegenerateInput);
}

TEST_CASE("split is a disjoint per-concept partition") {
  RngStream rng(6);
  const auto ds = gen_separability(101, kSeparabilityVariance, rng);
  RngStream srng(7);
  auto [tr, te] = split(ds, 0.7, srng);
  CHECK(tr.size() + te.size() == ds.size());
  const auto ctr = tr.concept_counts();
  for (auto c : ctr) CHECK(std::abs(static_cast<double>(c) - 70.7) <= 1.0);
  // Every original row appears exactly once across the two parts.
  std::multiset<std::pair<double, double>> all, parts;
  for (std::size_t i = 0; i < ds.size(); ++i) all.insert({ds.x(i, 0), ds.x(i, 1)});
  for (std::size_t i = 0; i < tr.size(); ++i) parts.insert({tr.x(i, 0), tr.x(i, 1)});
  for (std::size_t i = 0; i < te.size(); ++i) parts.insert({te.x(i, 0), te.x(i, 1)});
  CHECK(all == parts);
  CHECK_THROWS_AS(split(ds, 1.0, srng), InvalidArgument);
}

TEST_CASE("dataset directory round trip and validation") {
  RngStream rng(8);
  const auto ds = gen_heterogeneity(20, rng);
  const fs::path dir = scratch("ds_roundtrip");
  save_dataset(ds, dir);
  const auto back = load_dataset(dir);
  CHECK(back.x == ds.x);
  CHECK(back.labels == ds.labels);
  REQUIRE(back.num_concepts() == ds.num_concepts());
  for (std::size_t c = 0; c < ds.num_concepts(); ++c) {
    CHECK(back.concepts[c].intrinsic_dim == ds.concepts[c].intrinsic_dim);
    CHECK(back.concepts[c].center == ds.concepts[c].center);
  }
  write_labels(dir / "labels.u32", std::vector<std::uint32_t>(ds.size() - 1, 0));
  CHECK_THROWS_AS(load_dataset(dir), ConsistencyError);
  CHECK_THROWS_AS(load_dataset(dir / "missing"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("dataset generation is deterministic") {
  RngStream a(77), b(77);
  CHECK(gen_heterogeneity(50, a).x == gen_heterogeneity(50, b).x);
}
