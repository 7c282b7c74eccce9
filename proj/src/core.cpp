#include "probdr/core.hpp"

#include "probdr/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

namespace probdr {

namespace {

constexpr double kSymmetryTolerance = 1e-10;

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DataError(std::string(what) + ": expected a square matrix, got " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()));
  }
}

}  // namespace

DataMatrix::DataMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 2) throw DataError("data matrix needs at least 2 rows, got " + std::to_string(values_.rows()));
  if (values_.cols() < 1) throw DataError("data matrix needs at least 1 column");
  if (!all_finite(values_)) throw DataError("data matrix contains non-finite entries");
}

Embedding::Embedding(Matrix values) : values_(std::move(values)) {
  if (values_.cols() < 1 || values_.cols() >= values_.rows()) {
    throw DataError("embedding must satisfy 1 <= q < n, got n=" + std::to_string(values_.rows()) +
                    " q=" + std::to_string(values_.cols()));
  }
  if (!all_finite(values_)) throw DataError("embedding contains non-finite entries");
}

Matrix EigenDecomposition::reconstruct() const {
  return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

double relative_asymmetry(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

EigenDecomposition sym_eigendecomposition(const Matrix& m) {
  require_square(m, "sym_eigendecomposition");
  if (!all_finite(m)) throw DataError("sym_eigendecomposition: input contains non-finite entries");
  const double asym = relative_asymmetry(m);
  if (asym > kSymmetryTolerance) {
    throw DataError("sym_eigendecomposition: input is not symmetric (relative asymmetry " + std::to_string(asym) + ")");
  }
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("sym_eigendecomposition: eigensolver did not converge");

  const Index n = m.rows();
  EigenDecomposition out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  for (Index k = 0; k < n; ++k) {
    auto col = out.eigenvectors.col(k);
    const double peak = col.cwiseAbs().maxCoeff();
    Index pivot = 0;
    for (Index i = 0; i < n; ++i) {
      if (std::abs(col(i)) >= peak * (1.0 - 1e-12)) {
        pivot = i;
        break;
      }
    }
    if (col(pivot) < 0.0) col = -col;
  }
  return out;
}

Matrix double_center(const Matrix& k) {
  require_square(k, "double_center");
  const Vector row_means = k.rowwise().mean();
  const Vector col_means = k.colwise().mean().transpose();
  const double grand = k.mean();
  Matrix out = k;
  out.colwise() -= row_means;
  out.rowwise() -= col_means.transpose();
  out.array() += grand;
  return out;
}

Matrix psd_project(const Matrix& m) {
  const EigenDecomposition eig = sym_eigendecomposition(m);
  if (eig.eigenvalues.minCoeff() >= 0.0) return 0.5 * (m + m.transpose());
  const Vector clamped = eig.eigenvalues.cwiseMax(0.0);
  return eig.eigenvectors * clamped.asDiagonal() * eig.eigenvectors.transpose();
}

Matrix pairwise_sq_dists(const DataMatrix& y) { return pairwise_sq_dists(y.values()); }

Matrix pairwise_sq_dists(const Matrix& rows) {
  const Index n = rows.rows();
  Matrix out = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d2 = (rows.row(i) - rows.row(j)).squaredNorm();
      out(i, j) = d2;
      out(j, i) = d2;
    }
  }
  return out;
}

Matrix matrix_exponential_sym(const Matrix& m, double scale) {
  const EigenDecomposition eig = sym_eigendecomposition(m);
  const Vector expd = (scale * eig.eigenvalues).array().exp().matrix();
  Matrix out = eig.eigenvectors * expd.asDiagonal() * eig.eigenvectors.transpose();
  return 0.5 * (out + out.transpose());
}

double min_eigenvalue(const Matrix& m) { return sym_eigendecomposition(m).eigenvalues.minCoeff(); }

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

}  // namespace probdr
