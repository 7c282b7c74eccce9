// One PASS/FAIL line per acceptance criterion. Thresholds are pinned below;
// the process exits non-zero if any criterion fails.

#include "probdr/eval.hpp"
#include "probdr/graph_gp.hpp"
#include "probdr/meanfield.hpp"
#include "probdr/moments.hpp"
#include "probdr/neighbor_embed.hpp"
#include "probdr/spectral_map.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace probdr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// 1. Two-step PCA against SVD scores.
Outcome eigencomponents() {
  constexpr double kTol = 1e-6, kSeconds = 1.0;
  double worst = 0.0, slowest = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Matrix y = oracle::random_matrix(100, 20, 1000 + s);
    const auto start = Clock::now();
    const MapEmbedding fit = two_step_map(DataMatrix(y), AlgoSpec{}, 3);
    slowest = std::max(slowest, seconds_since(start));
    worst = std::max(worst, procrustes(fit.embedding.values(), oracle::scaled_pca_scores(y, 3)).residual);
  }
  return {worst < kTol && slowest < kSeconds, "max residual " + fmt(worst) + ", slowest " + fmt(slowest) + " s"};
}

// 2. CMDS on exact Euclidean distances against PCA.
Outcome cmds_duality() {
  constexpr double kTol = 1e-6;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Matrix y = oracle::random_matrix(60, 8, 2000 + s);
    const MapEmbedding pca = pca_map(pca_moment(DataMatrix(y)), 2);
    const MapEmbedding cmds = pca_map(cmds_moment(oracle::sq_dists(y)), 2);
    worst = std::max(worst, procrustes(pca.embedding, cmds.embedding).residual);
  }
  return {worst < kTol, "max residual " + fmt(worst)};
}

// 3. PCA and MCA covariance estimates coincide; beta never exceeds sigma2.
Outcome pca_mca_consistency() {
  constexpr double kTol = 1e-6;
  constexpr int q = 4;
  double worst = 0.0;
  bool ordered = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix w = oracle::random_matrix(30, q, 3000 + s);
    const double noise = 0.2 + 0.1 * static_cast<double>(s);
    const Matrix sigma = w * w.transpose() + noise * Matrix::Identity(30, 30);
    const MapEmbedding p = pca_map({sigma, MomentKind::covariance, "sigma"}, q);
    const MapEmbedding m = mca_map({sigma.inverse(), MomentKind::precision, "precision"}, q, false, 0.0);
    worst = std::max(worst, (implied_covariance(p) - implied_covariance(m)).norm() / sigma.norm());
    ordered = ordered && m.noise <= p.noise * (1.0 + 1e-12);
  }
  return {worst < kTol && ordered,
          "max relative gap " + fmt(worst) + ", beta <= sigma2 " + (ordered ? "in all trials" : "violated")};
}

// 4. KL + log-likelihood constancy and the KL argmin.
Outcome wishart_equivalence() {
  constexpr double kStdTol = 1e-6, kProcrustesTol = 1e-4;
  const Index n = 10;
  const double d = 25.0;
  const int q = 2;
  const Matrix y = oracle::random_matrix(n, 25, 4000);
  const MomentMatrix moment = pca_moment(DataMatrix(y), false);
  const Matrix& s = moment.values;

  std::vector<double> sums;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const Matrix x = oracle::random_matrix(n, q, 4100 + k);
    const Matrix m = x * x.transpose() + 0.3 * Matrix::Identity(n, n);
    sums.push_back(wishart_kl(s, m, d) + wishart_logpdf(s, m, d));
  }
  const double mean = std::accumulate(sums.begin(), sums.end(), 0.0) / static_cast<double>(sums.size());
  double var = 0.0;
  for (double v : sums) var += (v - mean) * (v - mean);
  const double std_dev = std::sqrt(var / static_cast<double>(sums.size()));

  // Backtracking gradient descent on KL(W(S) || W(X X^T + sigma2 I)) over X.
  const MapEmbedding target = pca_map(moment, q);
  const double sigma2 = target.noise;
  const auto model = [&](const Matrix& x) { return Matrix(x * x.transpose() + sigma2 * Matrix::Identity(n, n)); };
  const auto loss = [&](const Matrix& x) { return wishart_kl(s, model(x), d); };
  Matrix x = 0.1 * oracle::random_matrix(n, q, 4200);
  double step = 1.0, current = loss(x);
  for (int it = 0; it < 20000; ++it) {
    const Matrix inv = model(x).inverse();
    const Matrix grad = d * (inv - inv * s * inv) * x;
    if (grad.norm() < 1e-11) break;
    while (step > 1e-16) {
      const Matrix trial = x - step * grad;
      const double value = loss(trial);
      if (value <= current - 1e-4 * step * grad.squaredNorm()) {
        x = trial;
        current = value;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
  }
  const double residual = procrustes(target.embedding.values(), x, false).residual;
  return {std_dev < kStdTol && residual < kProcrustesTol,
          "sum std " + fmt(std_dev) + ", argmin residual " + fmt(residual)};
}

double direct_cost(const AffinityMatrix& v, const Matrix& x) {
  switch (v.family) {
    case AffinityFamily::categorical_rows: return oracle::c_categorical(v.probs, oracle::w_sne(x));
    case AffinityFamily::categorical_joint: return oracle::c_categorical(v.probs, oracle::w_tsne(x));
    case AffinityFamily::bernoulli_pairs: return oracle::c_umap_half(v.probs, oracle::w_umap(x, 1.0, 1.0));
  }
  return 0.0;
}

// 5. Objectives and gradients for the three neighbour-embedding families.
Outcome neighbour_objectives() {
  constexpr double kCostTol = 1e-12, kGradTol = 1e-4;
  double cost_gap = 0.0, grad_gap = 0.0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Matrix y = oracle::random_matrix(15, 5, 5000 + s);
    const Matrix x = oracle::random_matrix(15, 2, 5100 + s);
    for (const AffinityMatrix& v : {sne_affinities(DataMatrix(y), 5.0).affinity,
                                    tsne_affinities(DataMatrix(y), 5.0).affinity,
                                    umap_affinities(DataMatrix(y), 5).affinity}) {
      cost_gap = std::max(cost_gap, std::abs(kl_objective(v, latent_kernel(x, v.family)) - direct_cost(v, x)));
      const Matrix g = kl_gradient(v, x, EmbedConfig{});
      const Matrix fd = oracle::central_difference([&](const Matrix& at) { return direct_cost(v, at); }, x, 1e-5);
      for (Index i = 0; i < g.rows(); ++i)
        for (Index c = 0; c < g.cols(); ++c)
          if (std::abs(fd(i, c)) > 1e-6) grad_gap = std::max(grad_gap, std::abs(g(i, c) - fd(i, c)) / std::abs(fd(i, c)));
    }
  }
  return {cost_gap < kCostTol && grad_gap < kGradTol,
          "max cost gap " + fmt(cost_gap) + ", max gradient relative error " + fmt(grad_gap)};
}

// 6. t-SNE and UMAP separate three Gaussian clusters.
Outcome embedding_quality() {
  constexpr double kSilhouette = 0.5, kSeconds = 30.0;
  std::vector<int> labels;
  const Matrix y = oracle::gaussian_clusters(20, 5, 8.0, 6000, labels);
  std::ostringstream detail;
  bool pass = true;
  for (const std::string name : {"tsne", "umap"}) {
    const auto start = Clock::now();
    const AffinityMatrix v = name == "tsne" ? tsne_affinities(DataMatrix(y), 10.0).affinity
                                            : umap_affinities(DataMatrix(y), 10).affinity;
    const EmbedResult r = optimize_embedding(v, EmbedConfig{});
    const double elapsed = seconds_since(start);
    const double sil = silhouette(r.embedding.values(), labels);
    const double mid = r.trace[r.trace.size() / 2].loss, last = r.trace.back().loss;
    pass = pass && sil > kSilhouette && elapsed < kSeconds && last < mid;
    if (!detail.str().empty()) detail << "; ";
    detail << name << " silhouette " << fmt(sil) << " in " << fmt(elapsed) << " s, second-half loss " << fmt(mid)
           << " -> " << fmt(last);
  }
  return {pass, detail.str()};
}

// 7. Monte Carlo marginal covariance under the scaled Wishart.
Outcome marginal_consistency() {
  constexpr double kTol = 0.10, kSeconds = 60.0;
  const Matrix x = oracle::random_matrix(5, 2, 7000);
  const double sigma2 = 0.5;
  const auto start = Clock::now();
  const Matrix mc = pca_marginal_covariance_mc(x, sigma2, 5000.0, 20000, 7001, 1);
  const double elapsed = seconds_since(start);
  const Matrix target = x * x.transpose() + sigma2 * Matrix::Identity(5, 5);
  const double rel = (mc - target).norm() / target.norm();
  return {rel < kTol && elapsed < kSeconds, "relative error " + fmt(rel) + " in " + fmt(elapsed) + " s"};
}

// 8. Gamma law of squared distances between correlated normal points.
Outcome gamma_law() {
  constexpr double kTol = 0.02;
  struct Setting {
    double k_ii, k_jj, k_ij;
    int d;
  };
  const Setting settings[] = {{1.0, 1.0, 0.0, 2}, {2.0, 0.5, 0.6, 5}, {1.5, 1.2, -0.4, 1}};
  SeededRng rng(8000);
  double worst = 0.0;
  for (const Setting& st : settings) {
    Matrix k(2, 2);
    k << st.k_ii, st.k_ij, st.k_ij, st.k_jj;
    const Eigen::LLT<Matrix> llt(k);
    const Matrix l = llt.matrixL();
    std::vector<double> samples;
    for (int draw = 0; draw < 10000; ++draw) {
      double dist = 0.0;
      for (int c = 0; c < st.d; ++c) {
        const Eigen::Vector2d z(rng.normal(), rng.normal());
        const Eigen::Vector2d yv = l * z;
        dist += (yv(0) - yv(1)) * (yv(0) - yv(1));
      }
      samples.push_back(dist);
    }
    const GammaLaw law = normal_distance_gamma(st.k_ii, st.k_jj, st.k_ij, st.d);
    worst = std::max(worst, ks_statistic(samples, [&](double v) { return law.cdf(v); }));
  }
  return {worst < kTol, "max KS statistic " + fmt(worst)};
}

// 9. Prior samples from the fig5 chain are smooth in the latent.
Outcome prior_smoothness() {
  constexpr double kSpearman = -0.5;
  const Fig5Preset preset = fig5_preset();
  const auto draw = [&](std::uint64_t seed) {
    SeededRng rng(seed);
    const Matrix x = sample_uniform_latent(preset.latent, rng);
    PriorSample s = prior_sample(x, preset.chain, rng);
    return std::make_pair(x, std::move(s));
  };
  const auto [x, s] = draw(1);
  const auto [x2, s2] = draw(1);
  const bool same = x == x2 && s.y == s2.y && s.graph.a_sym == s2.graph.a_sym;
  const Matrix cov = s.y * s.y.transpose() / static_cast<double>(s.y.cols());
  std::vector<double> c, dist;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = i + 1; j < x.rows(); ++j) {
      c.push_back(cov(i, j));
      dist.push_back(std::abs(x(i, 0) - x(j, 0)));
    }
  const double rho = spearman(c, dist);
  return {rho < kSpearman && same, "spearman " + fmt(rho) + (same ? ", reproducible" : ", NOT reproducible")};
}

Matrix manifold_features(const Matrix& z, const Matrix& mix, double noise, SeededRng& rng) {
  Matrix f(z.rows(), 6);
  for (Index i = 0; i < z.rows(); ++i) {
    const double u = z(i, 0), v = z(i, 1);
    f.row(i) << std::sin(u), std::cos(v), std::sin(u + v), u * v / 4.0, std::cos(2.0 * u - v), std::tanh(v);
  }
  Matrix y = f * mix;
  for (Index i = 0; i < y.rows(); ++i)
    for (Index j = 0; j < y.cols(); ++j) y(i, j) += noise * rng.normal();
  return y;
}

// 10. Graph-GP prediction beats the train-mean baseline.
Outcome prediction_workflow() {
  constexpr double kImprovement = 0.2, kSeconds = 120.0;
  SeededRng rng(10000);
  const Matrix mix = oracle::random_matrix(6, 30, 10001) / std::sqrt(6.0);
  const auto latent = [&]() {
    Matrix z(200, 2);
    for (Index i = 0; i < 200; ++i) z.row(i) << rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5);
    return z;
  };
  const Matrix z_train = latent(), z_test = latent();
  const Matrix y_train = manifold_features(z_train, mix, 0.1, rng);
  const Matrix y_test = manifold_features(z_test, mix, 0.1, rng);

  const auto start = Clock::now();
  const PredictOutcome r = predict_pipeline(DataMatrix(y_train), DataMatrix(y_test), PredictConfig{});
  const double elapsed = seconds_since(start);
  const Matrix baseline = y_train.colwise().mean().replicate(200, 1);
  const double model = rmse(r.prediction.mean, y_test), base = rmse(baseline, y_test);
  return {model <= (1.0 - kImprovement) * base && elapsed < kSeconds,
          "rmse " + fmt(model) + " vs baseline " + fmt(base) + " in " + fmt(elapsed) + " s"};
}

// 11. Mean-field CAVI: fixed point, determinant identity and convergence.
Outcome cavi_suite() {
  constexpr double kFixedTol = 1e-15, kDetTol = 1e-8, kChangeTol = 1e-5;
  constexpr int kSweeps = 200;
  SeededRng rng(11000);
  const auto random_state = [&](Index n, bool binary) {
    CaviState s;
    s.edge_probs = Matrix::Zero(n, n);
    s.prior = Matrix::Zero(n, n);
    const Matrix y = oracle::random_matrix(n, 3, rng.next_u64());
    s.sq_dists = oracle::sq_dists(y);
    s.d = 3.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) {
        const double u = rng.uniform();
        s.edge_probs(i, j) = s.edge_probs(j, i) = binary ? (u < 0.4 ? 1.0 : 0.0) : u;
        s.prior(i, j) = s.prior(j, i) = rng.uniform(0.05, 0.95);
      }
    return s;
  };

  double fixed_gap = 0.0;
  for (int t = 0; t < 20; ++t) {
    CaviState s = random_state(8, false);
    s.d = 1.0;
    const double kappa = cavity_distance(s, 1, 5);
    s.sq_dists(1, 5) = s.sq_dists(5, 1) = kappa;
    fixed_gap = std::max(fixed_gap, std::abs(cavi_update(s, 1, 5) - s.prior(1, 5)));
  }

  double det_gap = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Index n = 5 + t % 11;
    CaviState s = random_state(n, true);
    s.rho = 0.5;
    s.edge_probs(0, n - 1) = s.edge_probs(n - 1, 0) = 1.0;
    const Matrix full = s.beta * Matrix::Identity(n, n) + expected_laplacian(s);
    const Matrix cavity = cavity_covariance(s, 0, n - 1).inverse();
    const double lhs = full.determinant();
    const double rhs = cavity.determinant() * (1.0 + 2.0 * s.rho * cavity_distance(s, 0, n - 1));
    det_gap = std::max(det_gap, std::abs(lhs - rhs) / std::abs(lhs));
  }

  int converged = 0, most_sweeps = 0;
  for (int t = 0; t < 10; ++t) {
    const CaviResult r = cavi_sweep(random_state(10, false), kSweeps);
    if (r.converged && r.max_change.back() < kChangeTol) ++converged;
    most_sweeps = std::max(most_sweeps, static_cast<int>(r.max_change.size()));
  }
  return {fixed_gap <= kFixedTol && det_gap < kDetTol && converged == 10,
          "fixed-point gap " + fmt(fixed_gap) + ", determinant gap " + fmt(det_gap) + ", converged " +
              std::to_string(converged) + "/10 (max " + std::to_string(most_sweeps) + " sweeps)"};
}

// 12. Directed-graph covariance and its truncated power sum.
Outcome directed_covariances() {
  constexpr double kMcTol = 0.05, kSumTol = 1e-6;
  SeededRng rng(12000);
  Matrix dag = Matrix::Zero(6, 6);
  for (Index i = 1; i < 6; ++i) {
    for (Index j = 0; j < i; ++j) dag(i, j) = rng.uniform() < 0.6 ? 1.0 : 0.0;
    if (dag.row(i).sum() > 0.0) dag.row(i) /= dag.row(i).sum();
  }
  const Matrix cov = bayesnet_covariance(dag).values;
  const Matrix draws = ancestral_samples(dag, 100000, rng);
  const Matrix emp = draws.transpose() * draws / static_cast<double>(draws.rows());
  const double mc = (emp - cov).norm() / cov.norm();

  const Matrix id = Matrix::Identity(6, 6);
  double sum_gap = 0.0;
  for (int t = 0; t < 5; ++t) {
    Matrix a = Matrix::Zero(6, 6);
    for (Index i = 1; i < 6; ++i)
      for (Index j = 0; j < i; ++j) a(i, j) = rng.uniform(-0.9, 0.9);
    sum_gap = std::max(sum_gap, (neumann_power_sum(a.transpose(), 10) - (id - a.transpose()).inverse()).norm());
  }
  return {mc < kMcTol && sum_gap < kSumTol, "Monte Carlo relative error " + fmt(mc) + ", power-sum gap " + fmt(sum_gap)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"eigencomponent equivalence", eigencomponents},
      {"cmds/pca duality", cmds_duality},
      {"pca/mca consistency", pca_mca_consistency},
      {"wishart kl equivalence", wishart_equivalence},
      {"neighbour-embedding objectives", neighbour_objectives},
      {"embedding quality", embedding_quality},
      {"marginal consistency", marginal_consistency},
      {"gamma law", gamma_law},
      {"prior-sample smoothness", prior_smoothness},
      {"prediction workflow", prediction_workflow},
      {"cavi suite", cavi_suite},
      {"directed covariances", directed_covariances},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2zu %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                o.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
