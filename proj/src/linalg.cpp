#include "saelab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "saelab/error.hpp"

namespace saelab {

namespace {

double off_diagonal_norm(const Matrix& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) acc += a(i, j) * a(i, j);
  return std::sqrt(acc);
}

// Applies the rotation that zeroes a(p, q) to both sides of a and to the
// columns of v.
void rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
  const double apq = a(p, q);
  const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
  const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;
  const std::size_t n = a.rows();
  for (std::size_t k = 0; k < n; ++k) {
    const double akp = a(k, p);
    const double akq = a(k, q);
    a(k, p) = c * akp - s * akq;
    a(k, q) = s * akp + c * akq;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double apk = a(p, k);
    const double aqk = a(q, k);
    a(p, k) = c * apk - s * aqk;
    a(q, k) = s * apk + c * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double vkp = v(k, p);
    const double vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

SymEig sym_eig(const Matrix& input, double tol) {
  require(input.rows() == input.cols(), "sym_eig: matrix must be square");
  require(tol > 0.0, "sym_eig: tol must be positive");
  const double scale = frobenius_norm(input);
  require(is_symmetric(input, tol * std::max(scale, 1.0)), "sym_eig: matrix is not symmetric");
  const std::size_t n = input.rows();

  Matrix a = input;
  Matrix v = Matrix::identity(n);
  // Symmetrize exactly so rotations act on a truly symmetric matrix.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));

  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  while (scale > 0.0 && off_diagonal_norm(a) >= tol * scale) {
    if (++sweep > kMaxSweeps)
      throw NumericFailure("sym_eig: Jacobi iteration did not converge", -1, -1);
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q)
        if (a(p, q) != 0.0) rotate(a, v, p, q);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymEig out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.values[c] = a(src, src);
    std::size_t pivot = 0;
    for (std::size_t r = 1; r < n; ++r)
      if (std::abs(v(r, src)) > std::abs(v(pivot, src))) pivot = r;
    const double sign = v(pivot, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = sign * v(r, src);
  }
  return out;
}

std::vector<double> singular_values(const Matrix& a) {
  if (a.cols() == 0) return {};
  const Matrix gram = matmul_tn(a, a);
  auto eig = sym_eig(gram, 1e-14);
  std::vector<double> sv(eig.values.size());
  std::transform(eig.values.begin(), eig.values.end(), sv.begin(),
                 [](double l) { return std::sqrt(std::max(l, 0.0)); });
  return sv;
}

KMeansResult kmeans(const Matrix& points, std::size_t k, RngStream& rng, std::size_t max_iter) {
  const std::size_t n = points.rows();
  require(k >= 1, "kmeans: k must be at least 1");
  require(k <= n, "kmeans: k exceeds number of points");
  const std::size_t d = points.cols();

  // k-means++ seeding
  Matrix centroids(k, d);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t pick = first;
    if (c > 0) {
      const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
      if (total > 0.0) {
        double target = rng.uniform() * total;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (nearest[i] <= 0.0) continue;
          pick = i;
          target -= nearest[i];
          if (target < 0.0) break;
        }
      } else {
        pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
      }
    }
    chosen[pick] = true;
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], sq_dist(points.row(i), centroids.row(c)));
  }

  KMeansResult result{std::vector<std::size_t>(n, 0), std::move(centroids), {}};
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    bool changed = iter == 0;
    double wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = sq_dist(points.row(i), result.centroids.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = sq_dist(points.row(i), result.centroids.row(c));
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      if (best != result.labels[i]) changed = true;
      result.labels[i] = best;
      wcss += best_d;
    }
    result.wcss_history.push_back(wcss);
    if (!changed) break;

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(result.labels[i]);
      auto src = points.row(i);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      ++counts[result.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j)
        result.centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    }
  }
  return result;
}

}  // namespace saelab
