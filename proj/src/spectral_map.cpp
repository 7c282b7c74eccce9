#include "probdr/spectral_map.hpp"

#include "probdr/errors.hpp"

#include <cmath>
#include <numbers>

namespace probdr {

namespace {

void require_same_square(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
    throw DataError(std::string(what) + ": matrices must be square and of equal size");
  }
}

// Cholesky of a symmetric positive-definite matrix, or NumericalError.
Eigen::LLT<Matrix> spd_factor(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(0.5 * (m + m.transpose()));
  if (llt.info() != Eigen::Success || !llt.matrixL().toDenseMatrix().diagonal().allFinite()) {
    throw NumericalError(std::string(what) + ": matrix is singular or not positive definite");
  }
  return llt;
}

double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double log_multigamma(double a, Index p) {
  double out = 0.25 * static_cast<double>(p * (p - 1)) * std::log(std::numbers::pi);
  for (Index j = 1; j <= p; ++j) out += std::lgamma(a + 0.5 * static_cast<double>(1 - j));
  return out;
}

void require_q(int q, Index n) {
  if (q < 1 || q >= n) {
    throw ConfigError("latent dimension q must satisfy 1 <= q < n, got q=" + std::to_string(q) +
                      " n=" + std::to_string(n));
  }
}

}  // namespace

Matrix implied_covariance(const MapEmbedding& fit) {
  const Matrix& x = fit.embedding.values();
  return x * x.transpose() + fit.noise * Matrix::Identity(x.rows(), x.rows());
}

double wishart_logpdf(const Matrix& t, const Matrix& m, double dof) {
  require_same_square(t, m, "wishart_logpdf");
  const auto llt = spd_factor(m, "wishart_logpdf");
  const double trace = llt.solve(t).trace();
  return -0.5 * dof * (trace + log_det(llt));
}

double scaled_wishart_logpdf(const Matrix& t_hat, const Matrix& m, double rho) {
  require_same_square(t_hat, m, "scaled_wishart_logpdf");
  const Index n = m.rows();
  if (rho < static_cast<double>(n)) {
    throw ConfigError("scaled_wishart_logpdf: rho must be >= n (rho=" + std::to_string(rho) +
                      ", n=" + std::to_string(n) + ")");
  }
  const auto llt = spd_factor(m, "scaled_wishart_logpdf");
  const Matrix x = rho * t_hat;
  const Vector ev = sym_eigendecomposition(x).eigenvalues;
  const double cutoff = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  double log_det_x = 0.0;
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > cutoff) log_det_x += std::log(ev(i));
  }
  const double nd = static_cast<double>(n);
  return 0.5 * (rho - nd - 1.0) * log_det_x - 0.5 * llt.solve(x).trace() - 0.5 * rho * nd * std::log(2.0) -
         0.5 * rho * log_det(llt) - log_multigamma(0.5 * rho, n);
}

double wishart_kl(const Matrix& q_mean, const Matrix& p_mean, double dof) {
  require_same_square(q_mean, p_mean, "wishart_kl");
  const auto q_llt = spd_factor(q_mean, "wishart_kl (q mean)");
  const auto p_llt = spd_factor(p_mean, "wishart_kl (p mean)");
  const double n = static_cast<double>(q_mean.rows());
  return 0.5 * dof * (p_llt.solve(q_mean).trace() - log_det(q_llt) + log_det(p_llt) - n);
}

double gplvm_objective(const DataMatrix& y, const Matrix& kernel_matrix) {
  if (kernel_matrix.rows() != y.n() || kernel_matrix.cols() != y.n()) {
    throw DataError("gplvm_objective: kernel matrix must be n x n");
  }
  const auto llt = spd_factor(kernel_matrix, "gplvm_objective");
  const double n = static_cast<double>(y.n());
  const double d = static_cast<double>(y.d());
  const double quad = (y.values().transpose() * llt.solve(y.values())).trace();
  return -0.5 * quad - 0.5 * d * log_det(llt) - 0.5 * n * d * std::log(2.0 * std::numbers::pi);
}

MapEmbedding pca_map(const MomentMatrix& moment, int q) {
  if (moment.kind != MomentKind::covariance) throw ConfigError("pca_map expects a covariance-kind moment");
  const Index n = moment.values.rows();
  require_q(q, n);
  const EigenDecomposition eig = sym_eigendecomposition(moment.values);
  const double sigma2 = eig.eigenvalues.tail(n - q).sum() / static_cast<double>(n - q);
  Matrix x(n, q);
  bool clamped = false;
  std::vector<Index> used;
  for (int k = 0; k < q; ++k) {
    const double radicand = eig.eigenvalues(k) - sigma2;
    if (radicand <= 0.0) clamped = true;
    x.col(k) = eig.eigenvectors.col(k) * std::sqrt(std::max(radicand, 0.0));
    used.push_back(k);
  }
  return {Embedding(std::move(x)), sigma2, std::move(used), clamped};
}

MapEmbedding mca_map(const MomentMatrix& moment, int q, bool drop_null, double ridge) {
  if (moment.kind != MomentKind::precision) throw ConfigError("mca_map expects a precision-kind moment");
  if (ridge < 0.0) throw ConfigError("mca_map ridge must be non-negative");
  const Index n = moment.values.rows();
  const Index drop = drop_null ? 1 : 0;
  if (q < 1 || q + drop >= n) {
    throw ConfigError("mca_map: need 1 <= q and q + dropped < n, got q=" + std::to_string(q) +
                      " dropped=" + std::to_string(drop) + " n=" + std::to_string(n));
  }
  const EigenDecomposition eig =
      sym_eigendecomposition(moment.values + ridge * Matrix::Identity(n, n));
  // Minor-first ordering: position m in ascending order is index n-1-m descending.
  auto ascending = [&](Index m) { return n - 1 - m; };
  double rest = 0.0;
  for (Index m = drop + q; m < n; ++m) rest += eig.eigenvalues(ascending(m));
  if (!(rest > 0.0)) throw NumericalError("mca_map: trailing eigenvalues sum to a non-positive value");
  const double beta = static_cast<double>(n - drop - q) / rest;

  Matrix x(n, q);
  bool clamped = false;
  std::vector<Index> used;
  for (int k = 0; k < q; ++k) {
    const Index idx = ascending(drop + k);
    const double lambda = eig.eigenvalues(idx);
    if (!(lambda > 0.0)) {
      throw NumericalError("mca_map: selected precision eigenvalue is not positive; increase the ridge");
    }
    const double radicand = 1.0 / lambda - beta;
    if (radicand <= 0.0) clamped = true;
    x.col(k) = eig.eigenvectors.col(idx) * std::sqrt(std::max(radicand, 0.0));
    used.push_back(idx);
  }
  return {Embedding(std::move(x)), beta, std::move(used), clamped};
}

std::string to_string(AlgoSpec::Name name) {
  switch (name) {
    case AlgoSpec::Name::pca: return "pca";
    case AlgoSpec::Name::cmds: return "cmds";
    case AlgoSpec::Name::isomap: return "isomap";
    case AlgoSpec::Name::kpca: return "kpca";
    case AlgoSpec::Name::le: return "le";
    case AlgoSpec::Name::le_covariance: return "le_covariance";
    case AlgoSpec::Name::lle: return "lle";
    case AlgoSpec::Name::diffusion: return "diffusion";
  }
  return "unknown";
}

AlgoSpec::Name parse_spectral_algo(const std::string& name) {
  for (auto candidate : {AlgoSpec::Name::pca, AlgoSpec::Name::cmds, AlgoSpec::Name::isomap, AlgoSpec::Name::kpca,
                         AlgoSpec::Name::le, AlgoSpec::Name::le_covariance, AlgoSpec::Name::lle,
                         AlgoSpec::Name::diffusion}) {
    if (to_string(candidate) == name) return candidate;
  }
  throw ConfigError("unknown spectral algorithm '" + name + "'");
}

MomentMatrix compute_moment(const DataMatrix& y, const AlgoSpec& algo) {
  switch (algo.name) {
    case AlgoSpec::Name::pca: return pca_moment(y, algo.center);
    case AlgoSpec::Name::cmds: return cmds_moment(pairwise_sq_dists(y));
    case AlgoSpec::Name::isomap: return isomap_moment(y, algo.k);
    case AlgoSpec::Name::kpca: return kpca_moment(y, algo.kernel);
    case AlgoSpec::Name::le: return le_precision(y, algo.graph, algo.laplacian);
    case AlgoSpec::Name::le_covariance: return le_covariance(y, algo.graph, algo.laplacian, algo.gamma);
    case AlgoSpec::Name::lle: return lle_precision(y, algo.k, algo.lle_ridge);
    case AlgoSpec::Name::diffusion: return diffusion_moment(y, algo.lengthscale, algo.steps);
  }
  throw ConfigError("unknown spectral algorithm");
}

MapEmbedding two_step_map(const DataMatrix& y, const AlgoSpec& algo, int q) {
  const MomentMatrix moment = compute_moment(y, algo);
  if (moment.kind == MomentKind::covariance) return pca_map(moment, q);
  return mca_map(moment, q, /*drop_null=*/true, algo.precision_ridge);
}

Matrix sample_wishart(const Matrix& scale, double dof, SeededRng& rng) {
  const Index n = scale.rows();
  if (dof <= static_cast<double>(n - 1)) throw ConfigError("sample_wishart: dof must exceed n - 1");
  const Matrix l = spd_factor(scale, "sample_wishart").matrixL();
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    a(i, i) = std::sqrt(rng.gamma(0.5 * (dof - static_cast<double>(i)), 2.0));
    for (Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Matrix la = l * a;
  return la * la.transpose();
}

Matrix pca_marginal_covariance_mc(const Matrix& x, double sigma2, double rho, int samples, std::uint64_t seed,
                                  int workers) {
  if (samples < 1 || workers < 1) throw ConfigError("pca_marginal_covariance_mc: samples and workers must be >= 1");
  const Index n = x.rows();
  const Matrix mean = x * x.transpose() + sigma2 * Matrix::Identity(n, n);
  const Matrix l = spd_factor(mean, "pca_marginal_covariance_mc").matrixL();
  const SeededRng root(seed);
  Matrix acc = Matrix::Zero(n, n);
  for (int w = 0; w < workers; ++w) {
    SeededRng rng = root.derive(static_cast<std::uint64_t>(w));
    const int share = samples / workers + (w < samples % workers ? 1 : 0);
    Matrix a = Matrix::Zero(n, n);
    Vector z(n);
    for (int s = 0; s < share; ++s) {
      for (Index i = 0; i < n; ++i) {
        a(i, i) = std::sqrt(rng.gamma(0.5 * (rho - static_cast<double>(i)), 2.0));
        for (Index j = 0; j < i; ++j) a(i, j) = rng.normal();
      }
      for (Index i = 0; i < n; ++i) z(i) = rng.normal();
      // S = (L A)(L A)^T, so y = L A z / sqrt(rho) has covariance S / rho.
      const Vector y = l * (a * z) / std::sqrt(rho);
      acc.noalias() += y * y.transpose();
    }
  }
  return acc / static_cast<double>(samples);
}

}  // namespace probdr
