#pragma once

#include <cstddef>
#include <vector>

#include "saelab/matrix.hpp"
#include "saelab/rng.hpp"

namespace saelab {

struct SymEig {
  std::vector<double> values;  // descending
  Matrix vectors;              // column i pairs with values[i]
};

/// Cyclic Jacobi eigensolver for symmetric matrices. Converges once the
/// off-diagonal Frobenius norm drops below tol * ||A||_F. Eigenvector signs
/// are fixed so the largest-magnitude component is positive.
SymEig sym_eig(const Matrix& a, double tol = 1e-12);

/// sqrt of the eigenvalues of A^T A, clipped at zero, descending. One value
/// per column of A.
std::vector<double> singular_values(const Matrix& a);

struct KMeansResult {
  std::vector<std::size_t> labels;
  Matrix centroids;
  std::vector<double> wcss_history;  // after each assignment step
};

/// Lloyd's algorithm with k-means++ seeding. Ties go to the lowest cluster
/// index; an emptied cluster keeps its previous centroid.
KMeansResult kmeans(const Matrix& points, std::size_t k, RngStream& rng, std::size_t max_iter = 100);

}  // namespace saelab
