#include "probdr/neighbor_embed.hpp"

#include "probdr/errors.hpp"
#include "probdr/laplacian.hpp"
#include "probdr/moments.hpp"
#include "probdr/rng.hpp"
#include "probdr/spectral_map.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

namespace probdr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kBisectionSteps = 200;
constexpr double kStepGrowth = 1.05;

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

// One bisection move on a positive parameter that may need to grow without
// bound (hi = inf) or shrink towards zero.
void bisect_step(double& value, double& lo, double& hi, bool increase) {
  if (increase) {
    lo = value;
    value = std::isinf(hi) ? value * 2.0 : 0.5 * (value + hi);
  } else {
    hi = value;
    value = 0.5 * (lo + value);
  }
}

struct RowFit {
  double beta = 1.0;
  double perplexity = 0.0;
};

// Conditional distribution p_j proportional to exp(-beta (d_j - d_min)) over the
// entries of `row` except `self`, with beta chosen so 2^H matches the target.
RowFit fit_row_precision(const Vector& row, Index self, double target, Vector& out) {
  const Index n = row.size();
  double d_min = kInf;
  for (Index j = 0; j < n; ++j)
    if (j != self) d_min = std::min(d_min, row(j));

  const double target_h = std::log2(target);
  auto evaluate = [&](double beta) {
    double z = 0.0;
    double weighted = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (j == self) {
        out(j) = 0.0;
        continue;
      }
      const double shifted = row(j) - d_min;
      const double e = std::exp(-beta * shifted);
      out(j) = e;
      z += e;
      weighted += e * shifted;
    }
    out /= z;
    return (std::log(z) + beta * weighted / z) / std::numbers::ln2;
  };

  double beta = 1.0;
  double lo = 0.0;
  double hi = kInf;
  double h = evaluate(beta);
  for (int step = 0; step < kBisectionSteps && std::abs(h - target_h) > 1e-12; ++step) {
    // Entropy decreases in beta.
    bisect_step(beta, lo, hi, h > target_h);
    h = evaluate(beta);
  }
  return {beta, std::exp2(h)};
}

Matrix sne_conditionals(const DataMatrix& y, double perplexity, PerplexityCalibration& calibration) {
  const Index n = y.n();
  if (!(perplexity > 1.0) || !(perplexity < static_cast<double>(n))) {
    throw ConfigError("perplexity must satisfy 1 < perplexity < n, got " + format_double(perplexity) +
                      " with n=" + std::to_string(n));
  }
  const Matrix sq = pairwise_sq_dists(y);
  Matrix p(n, n);
  calibration.target = perplexity;
  calibration.sigmas.resize(n);
  calibration.rhos.resize(0);
  Vector row(n);
  for (Index i = 0; i < n; ++i) {
    const RowFit fit = fit_row_precision(sq.row(i).transpose(), i, perplexity, row);
    p.row(i) = row.transpose();
    calibration.sigmas(i) = 1.0 / std::sqrt(fit.beta);
    if (std::abs(fit.perplexity - perplexity) > 1e-3) {
      calibration.warnings.push_back({i, "perplexity " + format_double(perplexity) + " unattainable at point " +
                                             std::to_string(i) + "; reached " + format_double(fit.perplexity)});
    }
  }
  return p;
}

void require_square(const AffinityMatrix& v, Index n, const char* what) {
  if (v.probs.rows() != v.probs.cols() || (n >= 0 && v.probs.rows() != n)) {
    throw DataError(std::string(what) + ": affinity matrix has the wrong shape");
  }
}

void require_same_family(const AffinityMatrix& v, const AffinityMatrix& w) {
  if (v.family != w.family) {
    throw ConfigError("affinity families differ: " + to_string(v.family) + " vs " + to_string(w.family));
  }
  if (v.probs.rows() != w.probs.rows() || v.probs.cols() != w.probs.cols()) {
    throw DataError("affinity matrices differ in size");
  }
}

// Gradient with respect to every row of x. `x` has n rows.
Matrix gradient_impl(const AffinityMatrix& v, const Matrix& x, double a, double b) {
  const Index n = x.rows();
  const Matrix& p = v.probs;
  const Matrix s = pairwise_sq_dists(x);
  // coef(i, j) multiplies 2 (x_i - x_j) in grad_i.
  Matrix coef = Matrix::Zero(n, n);

  switch (v.family) {
    case AffinityFamily::categorical_rows: {
      Matrix w = Matrix::Zero(n, n);
      for (Index i = 0; i < n; ++i) {
        double s_min = kInf;
        for (Index j = 0; j < n; ++j)
          if (j != i) s_min = std::min(s_min, s(i, j));
        double z = 0.0;
        for (Index j = 0; j < n; ++j) {
          if (j == i) continue;
          w(i, j) = std::exp(-(s(i, j) - s_min));
          z += w(i, j);
        }
        w.row(i) /= z;
      }
      const Vector r = p.rowwise().sum();
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
          if (j != i) coef(i, j) = (p(i, j) - r(i) * w(i, j)) + (p(j, i) - r(j) * w(j, i));
      break;
    }
    case AffinityFamily::categorical_joint: {
      Matrix u = (1.0 + s.array()).inverse().matrix();
      u.diagonal().setZero();
      const double z = u.sum();
      const double total = p.sum();
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
          if (j != i) coef(i, j) = u(i, j) * (p(i, j) + p(j, i) - 2.0 * total * u(i, j) / z);
      break;
    }
    case AffinityFamily::bernoulli_pairs: {
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
          if (j == i) continue;
          const double sij = s(i, j);
          const double vij = 0.5 * (p(i, j) + p(j, i));
          const double w = 1.0 / (1.0 + a * std::pow(sij, b));
          double g = 0.0;
          // Attractive term: d/ds of -v log w; frozen when log w is clamped.
          if (vij > 0.0 && w >= kProbClamp && sij > 0.0) g += vij * a * b * std::pow(sij, b - 1.0) * w;
          if (vij > 0.0 && w >= kProbClamp && sij == 0.0 && b == 1.0) g += vij * a * w;
          // Repulsive term: d/ds of -(1 - v) log(1 - w); frozen when 1 - w is clamped.
          if (vij < 1.0 && w <= 1.0 - kProbClamp && sij > 0.0) g -= (1.0 - vij) * b * w / sij;
          coef(i, j) = g;
        }
      }
      break;
    }
  }

  Matrix grad(n, x.cols());
  const Vector row_coef = coef.rowwise().sum();
  grad = 2.0 * (row_coef.asDiagonal() * x - coef * x);
  return grad;
}

double loss_at(const AffinityMatrix& v, const Matrix& x, const EmbedConfig& config) {
  return kl_objective(v, latent_kernel(x, v.family, config.a, config.b));
}

void validate_config(const EmbedConfig& config) {
  if (config.q < 1) throw ConfigError("q must be at least 1");
  if (!(config.a > 0.0) || !(config.b > 0.0)) throw ConfigError("umap shape parameters a and b must be positive");
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(config.momentum >= 0.0) || !(config.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (config.max_iters < 0) throw ConfigError("max_iters must be non-negative");
  if (!(config.init_scale > 0.0)) throw ConfigError("init_scale must be positive");
}

// Runs momentum descent on the rows flagged in `free`; other rows stay untouched.
std::vector<TraceEntry> descend(const AffinityMatrix& v, Matrix& x, const std::vector<bool>& free,
                                const EmbedConfig& config) {
  const Index n = x.rows();
  auto masked_gradient = [&](const Matrix& at) {
    Matrix g = gradient_impl(v, at, config.a, config.b);
    for (Index i = 0; i < n; ++i)
      if (!free[static_cast<std::size_t>(i)]) g.row(i).setZero();
    return g;
  };

  std::vector<TraceEntry> trace;
  trace.reserve(static_cast<std::size_t>(config.max_iters) + 1);
  Matrix g = masked_gradient(x);
  double loss = loss_at(v, x, config);
  trace.push_back({0, loss, g.norm()});
  const double g0 = g.norm();
  if (!(g0 > 0.0) || !std::isfinite(loss)) {
    if (!std::isfinite(loss)) throw NumericalError("embedding loss is not finite at iteration 0");
    return trace;
  }
  // The initial step is normalized by the first gradient. It is halved, with the
  // momentum reset, whenever a move would raise the loss, and grows slowly otherwise.
  double step = config.learning_rate * static_cast<double>(n) / g0;
  Matrix velocity = Matrix::Zero(x.rows(), x.cols());
  for (int it = 1; it <= config.max_iters; ++it) {
    const Matrix move = config.momentum * velocity - step * g;
    const Matrix candidate = x + move;
    const double candidate_loss = loss_at(v, candidate, config);
    if (std::isnan(candidate_loss)) {
      throw NumericalError("embedding optimization diverged at iteration " + std::to_string(it));
    }
    if (candidate_loss <= loss) {
      x = candidate;
      velocity = move;
      loss = candidate_loss;
      g = masked_gradient(x);
      if (!g.allFinite()) {
        throw NumericalError("embedding gradient is not finite at iteration " + std::to_string(it));
      }
      step *= kStepGrowth;
    } else {
      velocity.setZero();
      step *= 0.5;
    }
    trace.push_back({it, loss, g.norm()});
  }
  return trace;
}

}  // namespace

std::string to_string(AffinityFamily family) {
  switch (family) {
    case AffinityFamily::categorical_rows: return "sne";
    case AffinityFamily::categorical_joint: return "tsne";
    case AffinityFamily::bernoulli_pairs: return "umap";
  }
  return "unknown";
}

AffinityFamily parse_affinity_family(const std::string& name) {
  if (name == "sne") return AffinityFamily::categorical_rows;
  if (name == "tsne" || name == "t-sne") return AffinityFamily::categorical_joint;
  if (name == "umap") return AffinityFamily::bernoulli_pairs;
  throw ConfigError("unknown neighbour-embedding family '" + name + "' (expected sne, tsne or umap)");
}

AffinityResult sne_affinities(const DataMatrix& y, double perplexity) {
  AffinityResult out;
  out.conditional = sne_conditionals(y, perplexity, out.calibration);
  out.affinity = {out.conditional, AffinityFamily::categorical_rows};
  return out;
}

AffinityResult tsne_affinities(const DataMatrix& y, double perplexity) {
  AffinityResult out;
  out.conditional = sne_conditionals(y, perplexity, out.calibration);
  const Matrix joint = (out.conditional + out.conditional.transpose()) / (2.0 * static_cast<double>(y.n()));
  out.affinity = {joint, AffinityFamily::categorical_joint};
  return out;
}

AffinityResult umap_affinities(const DataMatrix& y, int n_neighbors) {
  const Index n = y.n();
  if (n_neighbors < 2 || n_neighbors >= n) {
    throw ConfigError("n_neighbors must satisfy 2 <= k < n, got " + std::to_string(n_neighbors) +
                      " with n=" + std::to_string(n));
  }
  const Matrix dist = pairwise_sq_dists(y).cwiseSqrt();
  const auto neighbors = nearest_neighbors(dist.cwiseProduct(dist), n_neighbors);
  const double target = std::log2(static_cast<double>(n_neighbors));

  AffinityResult out;
  out.calibration.target = static_cast<double>(n_neighbors);
  out.calibration.sigmas.resize(n);
  out.calibration.rhos.resize(n);
  Matrix c = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const auto& nb = neighbors[static_cast<std::size_t>(i)];
    const double rho = dist(i, nb.front());
    auto mass = [&](double sigma) {
      double total = 0.0;
      for (Index j : nb) total += std::exp(-std::max(0.0, dist(i, j) - rho) / sigma);
      return total;
    };
    double sigma = 1.0;
    double lo = 0.0;
    double hi = kInf;
    double f = mass(sigma);
    for (int step = 0; step < kBisectionSteps && std::abs(f - target) > 1e-12 * target; ++step) {
      bisect_step(sigma, lo, hi, f < target);
      f = mass(sigma);
    }
    if (std::abs(f - target) > 1e-3) {
      out.calibration.warnings.push_back({i, "membership mass log2(k) unattainable at point " + std::to_string(i) +
                                                 " (tied neighbour distances); reached " + format_double(f)});
    }
    out.calibration.sigmas(i) = sigma;
    out.calibration.rhos(i) = rho;
    for (Index j : nb) c(i, j) = std::exp(-std::max(0.0, dist(i, j) - rho) / sigma);
  }
  out.conditional = c;
  Matrix v = c + c.transpose() - c.cwiseProduct(c.transpose());
  v.diagonal().setZero();
  out.affinity = {v.cwiseMax(0.0).cwiseMin(1.0), AffinityFamily::bernoulli_pairs};
  return out;
}

AffinityMatrix latent_kernel(const Matrix& x, AffinityFamily family, double a, double b) {
  if (!all_finite(x)) throw DataError("latent coordinates contain non-finite entries");
  if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("umap shape parameters a and b must be positive");
  const Index n = x.rows();
  const Matrix s = pairwise_sq_dists(x);
  Matrix w = Matrix::Zero(n, n);
  switch (family) {
    case AffinityFamily::categorical_rows:
      for (Index i = 0; i < n; ++i) {
        double s_min = kInf;
        for (Index j = 0; j < n; ++j)
          if (j != i) s_min = std::min(s_min, s(i, j));
        for (Index j = 0; j < n; ++j)
          if (j != i) w(i, j) = std::exp(-(s(i, j) - s_min));
        w.row(i) /= w.row(i).sum();
      }
      break;
    case AffinityFamily::categorical_joint:
      w = (1.0 + s.array()).inverse().matrix();
      w.diagonal().setZero();
      w /= w.sum();
      break;
    case AffinityFamily::bernoulli_pairs:
      w = (1.0 + a * s.array().pow(b)).inverse().matrix();
      w.diagonal().setZero();
      break;
  }
  return {w, family};
}

KlBreakdown kl_objective_detail(const AffinityMatrix& v, const AffinityMatrix& w) {
  require_same_family(v, w);
  const Index n = v.probs.rows();
  KlBreakdown out;
  auto log_w = [&](double wij) {
    if (wij < kProbClamp) ++out.clamped;
    return std::log(std::max(wij, kProbClamp));
  };
  if (v.family == AffinityFamily::bernoulli_pairs) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        const double p = v.probs(i, j);
        const double q = w.probs(i, j);
        if (q < kProbClamp || q > 1.0 - kProbClamp) ++out.clamped;
        const double qc = clamp_prob(q);
        if (p > 0.0) out.value += p * (std::log(p) - std::log(qc));
        if (p < 1.0) out.value += (1.0 - p) * (std::log1p(-p) - std::log1p(-qc));
      }
    }
    return out;
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double p = v.probs(i, j);
      if (p > 0.0) out.value += p * (std::log(p) - log_w(w.probs(i, j)));
    }
  }
  return out;
}

double kl_objective(const AffinityMatrix& v, const AffinityMatrix& w) { return kl_objective_detail(v, w).value; }

Matrix kl_gradient(const AffinityMatrix& v, const Matrix& x, const EmbedConfig& config) {
  require_square(v, x.rows(), "kl_gradient");
  if (!all_finite(x)) throw DataError("latent coordinates contain non-finite entries");
  return gradient_impl(v, x, config.a, config.b);
}

Matrix initial_embedding(const AffinityMatrix& v, const EmbedConfig& config) {
  validate_config(config);
  const Index n = v.probs.rows();
  if (config.q >= n) throw ConfigError("q must be smaller than the number of points");
  if (config.init == InitMethod::spectral) {
    const Matrix adjacency = 0.5 * (v.probs + v.probs.transpose());
    const Matrix lap = build_laplacian(adjacency, LaplacianKind::normalized);
    const MapEmbedding fit = mca_map(laplacian_moment(lap), config.q, true);
    Matrix x = fit.embedding.values();
    for (Index c = 0; c < x.cols(); ++c) {
      x.col(c).array() -= x.col(c).mean();
      const double sd = std::sqrt(x.col(c).squaredNorm() / static_cast<double>(n));
      if (sd > 0.0) x.col(c) *= config.init_scale / sd;
    }
    return x;
  }
  SeededRng rng(config.seed);
  Matrix x(n, config.q);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < config.q; ++c) x(i, c) = config.init_scale * rng.normal();
  return x;
}

EmbedResult optimize_embedding(const AffinityMatrix& v, const EmbedConfig& config) {
  require_square(v, -1, "optimize_embedding");
  Matrix x = initial_embedding(v, config);
  const std::vector<bool> free(static_cast<std::size_t>(x.rows()), true);
  auto trace = descend(v, x, free, config);
  if (!config.trace_path.empty()) write_trace_jsonl(config.trace_path, trace);
  return {Embedding(std::move(x)), std::move(trace)};
}

EmbedResult embed_out_of_sample(const AffinityMatrix& v_full, const Embedding& x_train, const EmbedConfig& config) {
  validate_config(config);
  require_square(v_full, -1, "embed_out_of_sample");
  const Index n_train = x_train.n();
  const Index n = v_full.probs.rows();
  if (n < n_train) {
    throw DataError("affinity matrix covers " + std::to_string(n) + " points but the training embedding has " +
                    std::to_string(n_train));
  }
  if (x_train.q() != config.q) {
    throw DataError("training embedding has " + std::to_string(x_train.q()) + " columns, config asks for q=" +
                    std::to_string(config.q));
  }
  if (n == n_train) return {x_train, {}};

  Matrix x(n, x_train.q());
  x.topRows(n_train) = x_train.values();
  const Vector train_mean = x_train.values().colwise().mean().transpose();
  for (Index t = n_train; t < n; ++t) {
    const auto weights = v_full.probs.row(t).head(n_train);
    const double total = weights.sum();
    if (total > 0.0) {
      x.row(t) = (weights * x_train.values()) / total;
    } else {
      x.row(t) = train_mean.transpose();
    }
  }
  std::vector<bool> free(static_cast<std::size_t>(n), false);
  for (Index t = n_train; t < n; ++t) free[static_cast<std::size_t>(t)] = true;
  auto trace = descend(v_full, x, free, config);
  x.topRows(n_train) = x_train.values();
  if (!config.trace_path.empty()) write_trace_jsonl(config.trace_path, trace);
  return {Embedding(std::move(x)), std::move(trace)};
}

// Counts per row; at floor(n p) small n loses most of the mass to rounding.
constexpr double kDefaultCountResolution = 1000.0;

Matrix categorical_map_approx(const AffinityMatrix& v, double resolution) {
  require_square(v, -1, "categorical_map_approx");
  const double n = static_cast<double>(v.probs.rows());
  double scale = resolution;
  switch (v.family) {
    case AffinityFamily::categorical_rows:
      if (scale <= 0.0) scale = std::max(n, kDefaultCountResolution);
      break;
    case AffinityFamily::categorical_joint:
      if (scale <= 0.0) scale = n * std::max(n, kDefaultCountResolution);
      break;
    case AffinityFamily::bernoulli_pairs:
      throw ConfigError("categorical_map_approx needs a categorical affinity family");
  }
  Matrix counts = (scale * v.probs).array().floor().matrix();
  counts.diagonal().setZero();
  return counts;
}

double categorical_count_nll(const Matrix& counts, const AffinityMatrix& w) {
  if (counts.rows() != w.probs.rows() || counts.cols() != w.probs.cols()) {
    throw DataError("count matrix and affinity matrix differ in size");
  }
  double out = 0.0;
  for (Index i = 0; i < counts.rows(); ++i)
    for (Index j = 0; j < counts.cols(); ++j)
      if (i != j && counts(i, j) > 0.0) out -= counts(i, j) * std::log(std::max(w.probs(i, j), kProbClamp));
  return out;
}

void write_trace_jsonl(const std::string& path, const std::vector<TraceEntry>& trace) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open trace file '" + path + "' for writing");
  for (const auto& e : trace) {
    out << "{\"iteration\":" << e.iteration << ",\"loss\":" << format_double(e.loss)
        << ",\"grad_norm\":" << format_double(e.grad_norm) << "}\n";
  }
  if (!out) throw ConfigError("failed writing trace file '" + path + "'");
}

}  // namespace probdr
