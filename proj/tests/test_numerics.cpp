#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "saelab/error.hpp"
#include "saelab/linalg.hpp"
#include "saelab/matrix.hpp"
#include "saelab/rng.hpp"

using namespace saelab;

TEST_CASE("matrix products agree with naive loops") {
  RngStream rng(11);
  const Matrix a = sample_normal(rng, 7, 5, 0.0, 1.0);
  const Matrix b = sample_normal(rng, 5, 4, 0.0, 1.0);
  const Matrix c = sample_normal(rng, 7, 4, 0.0, 1.0);
  Matrix ab(7, 4), atc(5, 4), abt(5, 5);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 5; ++k) ab(i, j) += a(i, k) * b(k, j);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 7; ++k) atc(i, j) += a(k, i) * c(k, j);
  const Matrix bt = b.transposed();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t k = 0; k < 4; ++k) abt(i, j) += b(i, k) * b(j, k);
  CHECK(max_abs_diff(matmul(a, b), ab) < 1e-12);
  CHECK(max_abs_diff(matmul_tn(a, c), atc) < 1e-12);
  CHECK(max_abs_diff(matmul_nt(b, b), abt) < 1e-12);
  CHECK(max_abs_diff(bt.transposed(), b) == 0.0);
}

TEST_CASE("matrix file round trip is bit exact") {
  RngStream rng(3);
  const Matrix m = sample_normal(rng, 9, 3, 0.0, 2.0);
  std::stringstream ss;
  write_matrix(ss, m);
  const std::string bytes = ss.str();
  REQUIRE(bytes.size() == 4 + 4 + 8 + 8 + 9 * 3 * 8);
  CHECK(bytes.substr(0, 4) == "SAEM");
  CHECK(read_matrix(ss) == m);
}

TEST_CASE("matrix reader rejects bad magic and version") {
  std::stringstream bad_magic("XXXX\x01\0\0\0");
  CHECK_THROWS_AS(read_matrix(bad_magic), FormatError);
  Matrix m(1, 1, 2.0);
  std::stringstream ss;
  write_matrix(ss, m);
  std::string bytes = ss.str();
  bytes[4] = 2;
  std::stringstream bad_version(bytes);
  CHECK_THROWS_AS(read_matrix(bad_version), FormatError);
  std::stringstream truncated(ss.str().substr(0, 30));
  CHECK_THROWS_AS(read_matrix(truncated), FormatError);
  CHECK_THROWS_AS(read_matrix(std::filesystem::path("no/such/file.saem")), IoError);
}

TEST_CASE("rng streams are reproducible and split independently") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream parent(42);
  const RngStream before = parent;
  const RngStream c1 = parent.split(1), c2 = parent.split(2);
  CHECK(parent == before);
  RngStream x = c1, y = c2;
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += x.next_u64() == y.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("rng uniform and normal moments") {
  RngStream rng(5);
  const int n = 200000;
  double su = 0.0, sn = 0.0, sn2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    su += u;
    const double g = rng.normal();
    sn += g;
    sn2 += g * g;
  }
  CHECK(std::abs(su / n - 0.5) < 0.005);
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(std::abs(sn2 / n - 1.0) < 0.02);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("permutation is a bijection") {
  RngStream rng(9);
  auto p = permutation(rng, 1000);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == i);
}

TEST_CASE("sym_eig recovers a planted spectrum") {
  // Q diag(l) Q^T with Q a product of plane rotations.
  const std::size_t n = 6;
  const std::vector<double> planted = {9.0, 4.0, 2.5, 1.0, -0.5, -3.0};
  Matrix q = Matrix::identity(n);
  RngStream rng(21);
  for (int r = 0; r < 30; ++r) {
    const std::size_t i = rng.below(n), j = (i + 1 + rng.below(n - 1)) % n;
    const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t k = 0; k < n; ++k) {
      const double qi = q(k, i), qj = q(k, j);
      q(k, i) = std::cos(t) * qi - std::sin(t) * qj;
      q(k, j) = std::sin(t) * qi + std::cos(t) * qj;
    }
  }
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) a(i, j) += q(i, k) * planted[k] * q(j, k);
  const SymEig e = sym_eig(a);
  for (std::size_t i = 0; i < n; ++i) CHECK(e.values[i] == doctest::Approx(planted[i]).epsilon(1e-10));
  // A v = l v for each pair, unit norm vectors.
  for (std::size_t c = 0; c < n; ++c) {
    const auto v = e.vectors.column(c);
    CHECK(norm2(v) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < n; ++i) {
      double av = 0.0;
      for (std::size_t k = 0; k < n; ++k) av += a(i, k) * v[k];
      CHECK(std::abs(av - e.values[c] * v[i]) < 1e-9);
    }
  }
}

TEST_CASE("sym_eig of the 2x2 [[2,1],[1,2]]") {
  const SymEig e = sym_eig(Matrix{{2.0, 1.0}, {1.0, 2.0}});
  CHECK(e.values[0] == doctest::Approx(3.0));
  CHECK(e.values[1] == doctest::Approx(1.0));
  CHECK(std::abs(e.vectors(0, 0)) == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("singular values of a diagonal and a rank-one matrix") {
  const auto s = singular_values(Matrix{{3.0, 0.0}, {0.0, -4.0}, {0.0, 0.0}});
  CHECK(s[0] == doctest::Approx(4.0));
  CHECK(s[1] == doctest::Approx(3.0));
  const auto r1 = singular_values(Matrix{{1.0, 2.0}, {2.0, 4.0}});
  CHECK(r1[0] == doctest::Approx(5.0));
  CHECK(std::abs(r1[1]) < 1e-7);
}

TEST_CASE("kmeans separates well spaced blobs and WCSS never increases") {
  RngStream rng(8);
  Matrix pts(90, 2);
  for (std::size_t i = 0; i < 90; ++i) {
    const double cx = (i / 30) * 10.0;
    pts(i, 0) = cx + 0.1 * rng.normal();
    pts(i, 1) = 0.1 * rng.normal();
  }
  RngStream krng(1);
  const auto res = kmeans(pts, 3, krng);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i = b * 30; i < b * 30 + 30; ++i) CHECK(res.labels[i] == res.labels[b * 30]);
  CHECK(res.labels[0] != res.labels[30]);
  CHECK(res.labels[30] != res.labels[60]);
  for (std::size_t i = 1; i < res.wcss_history.size(); ++i)
    CHECK(res.wcss_history[i] <= res.wcss_history[i - 1] + 1e-12);
}

TEST_CASE("kmeans with k equal to the point count gives zero WCSS") {
  const Matrix pts{{0.0, 0.0}, {1.0, 0.0}, {0.0, 5.0}, {3.0, 3.0}};
  RngStream rng(2);
  const auto res = kmeans(pts, 4, rng);
  CHECK(res.wcss_history.back() == doctest::Approx(0.0));
  auto labels = res.labels;
  std::sort(labels.begin(), labels.end());
  CHECK(std::unique(labels.begin(), labels.end()) == labels.end());
}
