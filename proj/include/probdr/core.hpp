#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>

namespace probdr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Observed data, one point per row. Entries finite, at least two rows and one column.
class DataMatrix {
public:
  explicit DataMatrix(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  Index n() const noexcept { return values_.rows(); }
  Index d() const noexcept { return values_.cols(); }

private:
  Matrix values_;
};

/// Latent coordinates, one point per row, 1 <= q < n.
class Embedding {
public:
  explicit Embedding(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  Index n() const noexcept { return values_.rows(); }
  Index q() const noexcept { return values_.cols(); }

private:
  Matrix values_;
};

/// Eigenvalues in descending order; column k of `eigenvectors` pairs with eigenvalue k.
/// Each eigenvector has its largest-magnitude entry positive (lowest index wins ties).
struct EigenDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  Matrix reconstruct() const;
};

bool all_finite(const Matrix& m);

// Largest |m_ij - m_ji| relative to max(1, max |m_ij|).
double relative_asymmetry(const Matrix& m);

EigenDecomposition sym_eigendecomposition(const Matrix& m);

/// H K H with H = I - 11^T/n.
Matrix double_center(const Matrix& k);

/// Clamps negative eigenvalues to zero, keeping eigenvectors.
Matrix psd_project(const Matrix& m);

Matrix pairwise_sq_dists(const DataMatrix& y);
Matrix pairwise_sq_dists(const Matrix& rows);

/// U exp(scale * Lambda) U^T for symmetric m.
Matrix matrix_exponential_sym(const Matrix& m, double scale);

double min_eigenvalue(const Matrix& m);

// Shortest round-trip decimal representation; locale independent.
std::string format_double(double value);

}  // namespace probdr
