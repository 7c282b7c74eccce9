#include "probdr/errors.hpp"
#include "probdr/eval.hpp"
#include "probdr/neighbor_embed.hpp"
#include "probdr/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace probdr;

namespace {

AffinityMatrix random_affinity(AffinityFamily family, Index n, std::uint64_t seed) {
  const Matrix y = oracle::random_matrix(n, 4, seed);
  switch (family) {
    case AffinityFamily::categorical_rows: return sne_affinities(DataMatrix(y), 5.0).affinity;
    case AffinityFamily::categorical_joint: return tsne_affinities(DataMatrix(y), 5.0).affinity;
    case AffinityFamily::bernoulli_pairs: return umap_affinities(DataMatrix(y), 5).affinity;
  }
  return {};
}

double direct_cost(const AffinityMatrix& v, const Matrix& x, double a, double b) {
  switch (v.family) {
    case AffinityFamily::categorical_rows: return oracle::c_categorical(v.probs, oracle::w_sne(x));
    case AffinityFamily::categorical_joint: return oracle::c_categorical(v.probs, oracle::w_tsne(x));
    case AffinityFamily::bernoulli_pairs: return oracle::c_umap_half(v.probs, oracle::w_umap(x, a, b));
  }
  return 0.0;
}

const AffinityFamily kFamilies[] = {AffinityFamily::categorical_rows, AffinityFamily::categorical_joint,
                                    AffinityFamily::bernoulli_pairs};

}  // namespace

TEST_CASE("sne affinities") {
  const AffinityResult eq = sne_affinities(DataMatrix(Matrix::Identity(3, 3)), 2.0);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(eq.affinity.probs(i, j) == doctest::Approx(i == j ? 0.0 : 0.5));

  const AffinityResult r = sne_affinities(DataMatrix(oracle::random_matrix(20, 5, 1)), 6.0);
  for (Index i = 0; i < 20; ++i) {
    CHECK(std::abs(r.affinity.probs.row(i).sum() - 1.0) < 1e-12);
    CHECK(r.affinity.probs(i, i) == 0.0);
    CHECK(r.calibration.sigmas(i) > 0.0);
  }
  CHECK(r.calibration.warnings.empty());

  const AffinityResult p = sne_affinities(DataMatrix(oracle::random_matrix(30, 3, 2)), 10.0);
  for (Index i = 0; i < 30; ++i) CHECK(std::abs(std::exp2(oracle::entropy_bits(p.affinity.probs, i)) - 10.0) < 1e-2);

  CHECK_THROWS_AS(sne_affinities(DataMatrix(oracle::random_matrix(5, 2, 3)), 5.0), ConfigError);
  CHECK_THROWS_AS(sne_affinities(DataMatrix(oracle::random_matrix(5, 2, 3)), 1.0), ConfigError);
}

TEST_CASE("sne calibration warns when the perplexity is unattainable") {
  // Equidistant neighbours pin the entropy at log2(n - 1).
  const AffinityResult r = sne_affinities(DataMatrix(Matrix::Zero(5, 2)), 2.0);
  CHECK(r.calibration.warnings.size() == 5);
  for (Index i = 0; i < 5; ++i) CHECK(std::abs(r.affinity.probs.row(i).sum() - 1.0) < 1e-12);
}

TEST_CASE("tsne affinities") {
  const Matrix y = oracle::random_matrix(15, 3, 4);
  const AffinityResult r = tsne_affinities(DataMatrix(y), 4.0);
  const Matrix& v = r.affinity.probs;
  CHECK((v - v.transpose()).norm() == 0.0);
  CHECK(std::abs(v.sum() - 1.0) < 1e-12);
  const Matrix p = sne_affinities(DataMatrix(y), 4.0).affinity.probs;
  CHECK((v - (p + p.transpose()) / 30.0).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("umap affinities") {
  const Matrix y = oracle::random_matrix(25, 4, 5);
  const int k = 6;
  const AffinityResult r = umap_affinities(DataMatrix(y), k);
  const Matrix& c = r.conditional;
  const Matrix& v = r.affinity.probs;
  CHECK((v - v.transpose()).norm() == 0.0);
  CHECK(v.minCoeff() >= 0.0);
  CHECK(v.maxCoeff() <= 1.0);
  const Matrix d2 = oracle::sq_dists(y);
  for (Index i = 0; i < 25; ++i) {
    Index nn = (i == 0) ? 1 : 0;
    for (Index j = 0; j < 25; ++j)
      if (j != i && d2(i, j) < d2(i, nn)) nn = j;
    CHECK(c(i, nn) == 1.0);
    CHECK(v(i, nn) == doctest::Approx(1.0).epsilon(1e-15));
    // Recompute the calibrated mass from sigma_i and rho_i over the k nearest.
    std::vector<double> dist;
    for (Index j = 0; j < 25; ++j)
      if (j != i) dist.push_back(std::sqrt(d2(i, j)));
    std::sort(dist.begin(), dist.end());
    double mass = 0.0;
    for (int a = 0; a < k; ++a)
      mass += std::exp(-std::max(0.0, dist[a] - r.calibration.rhos(i)) / r.calibration.sigmas(i));
    CHECK(std::abs(mass - std::log2(static_cast<double>(k))) < 1e-3);
    CHECK(std::abs(c.row(i).sum() - std::log2(static_cast<double>(k))) < 1e-3);
  }
  for (Index i = 0; i < 25; ++i)
    for (Index j = 0; j < 25; ++j)
      if (i != j) CHECK(v(i, j) == doctest::Approx(c(i, j) + c(j, i) - c(i, j) * c(j, i)));
  CHECK_THROWS_AS(umap_affinities(DataMatrix(y), 1), ConfigError);
  CHECK_THROWS_AS(umap_affinities(DataMatrix(y), 25), ConfigError);
}

TEST_CASE("latent kernels") {
  Matrix x(2, 1);
  x << 0, 1;
  CHECK(latent_kernel(x, AffinityFamily::bernoulli_pairs, 2.0, 1.0).probs(0, 1) == doctest::Approx(1.0 / 3.0));

  const AffinityMatrix w = latent_kernel(Matrix::Zero(6, 2), AffinityFamily::categorical_joint);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 6; ++j) CHECK(w.probs(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 / 30.0));

  const Matrix r = oracle::random_matrix(9, 2, 6);
  const AffinityMatrix s = latent_kernel(r, AffinityFamily::categorical_rows);
  for (Index i = 0; i < 9; ++i) CHECK(std::abs(s.probs.row(i).sum() - 1.0) < 1e-12);
  CHECK((s.probs - oracle::w_sne(r)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((latent_kernel(r, AffinityFamily::categorical_joint).probs - oracle::w_tsne(r)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("kl objective matches the classical costs") {
  CHECK(kl_objective(random_affinity(AffinityFamily::categorical_rows, 10, 7),
                     random_affinity(AffinityFamily::categorical_rows, 10, 7)) == 0.0);

  Matrix v = Matrix::Zero(2, 2), w = Matrix::Zero(2, 2);
  v(0, 1) = v(1, 0) = 1.0;
  w(0, 1) = w(1, 0) = 0.5;
  CHECK(kl_objective({v, AffinityFamily::bernoulli_pairs}, {w, AffinityFamily::bernoulli_pairs}) ==
        doctest::Approx(std::log(2.0)));

  for (auto family : kFamilies) {
    const AffinityMatrix p = random_affinity(family, 15, 8);
    const Matrix x = 0.5 * oracle::random_matrix(15, 2, 9);
    const double ours = kl_objective(p, latent_kernel(x, family, 1.0, 1.0));
    CHECK(std::abs(ours - direct_cost(p, x, 1.0, 1.0)) < 1e-12);
    CHECK(ours >= 0.0);
  }
  CHECK_THROWS_AS(kl_objective(random_affinity(AffinityFamily::categorical_rows, 6, 1),
                               random_affinity(AffinityFamily::bernoulli_pairs, 6, 1)),
                  ConfigError);
}

TEST_CASE("kl objective depends on latent distances only") {
  const Matrix x = oracle::random_matrix(12, 3, 10);
  const Eigen::HouseholderQR<Matrix> qr(oracle::random_matrix(3, 3, 11));
  const Matrix q = qr.householderQ();
  Matrix moved = x * q;
  moved.rowwise() += Eigen::RowVector3d(1.5, -2.0, 0.25);
  for (auto family : kFamilies) {
    const AffinityMatrix v = random_affinity(family, 12, 12);
    const double a = kl_objective(v, latent_kernel(x, family, 1.0, 1.0));
    const double b = kl_objective(v, latent_kernel(moved, family, 1.0, 1.0));
    CHECK(std::abs(a - b) < 1e-10);
  }
}

TEST_CASE("kl gradients match central differences") {
  for (auto family : kFamilies) {
    for (double b : {1.0, 0.8}) {
      if (family != AffinityFamily::bernoulli_pairs && b != 1.0) continue;
      EmbedConfig config;
      config.a = 1.3;
      config.b = b;
      const AffinityMatrix v = random_affinity(family, 12, 13);
      const Matrix x = 0.5 * oracle::random_matrix(12, 2, 14);
      const Matrix g = kl_gradient(v, x, config);
      const Matrix fd = oracle::central_difference(
          [&](const Matrix& at) { return direct_cost(v, at, config.a, config.b); }, x, 1e-5);
      for (Index i = 0; i < g.rows(); ++i)
        for (Index c = 0; c < g.cols(); ++c)
          if (std::abs(fd(i, c)) > 1e-6) CHECK(std::abs(g(i, c) - fd(i, c)) / std::abs(fd(i, c)) < 1e-4);
    }
  }
}

TEST_CASE("kl gradients vanish when v equals w") {
  const Matrix x = oracle::random_matrix(8, 2, 15);
  for (auto family : kFamilies) {
    const AffinityMatrix v = latent_kernel(x, family, 1.0, 1.0);
    CHECK(kl_gradient(v, x, EmbedConfig{}).norm() < 1e-10);
  }
}

TEST_CASE("single-pair umap gradient matches the symbolic derivative") {
  // C(x) = v log(v/w) + (1-v) log((1-v)/(1-w)), w = 1/(1 + a x^2), x = x_0 - x_1.
  const double a = 2.0, v = 0.3, x0 = 0.9, x1 = -0.4;
  Matrix vm = Matrix::Zero(2, 2);
  vm(0, 1) = vm(1, 0) = v;
  Matrix x(2, 1);
  x << x0, x1;
  EmbedConfig config;
  config.a = a;
  const Matrix g = kl_gradient({vm, AffinityFamily::bernoulli_pairs}, x, config);
  const double dx = x0 - x1;
  const double w = 1.0 / (1.0 + a * dx * dx);
  const double dw = -2.0 * a * dx * w * w;
  const double expected = -v / w * dw + (1.0 - v) / (1.0 - w) * dw;
  CHECK(g(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(g(1, 0) == doctest::Approx(-expected).epsilon(1e-12));
}

TEST_CASE("optimize_embedding separates clusters") {
  std::vector<int> labels;
  const Matrix y = oracle::gaussian_clusters(14, 4, 10.0, 16, labels);
  for (auto family : {AffinityFamily::categorical_joint, AffinityFamily::bernoulli_pairs}) {
    const AffinityMatrix v = family == AffinityFamily::bernoulli_pairs
                                 ? umap_affinities(DataMatrix(y), 8).affinity
                                 : tsne_affinities(DataMatrix(y), 8.0).affinity;
    EmbedConfig config;
    config.max_iters = 400;
    const EmbedResult r = optimize_embedding(v, config);
    CHECK(silhouette(r.embedding.values(), labels) > 0.5);
    CHECK(r.trace.size() == 401);
    CHECK(r.trace.back().loss <= r.trace.front().loss);
    const KlBreakdown detail = kl_objective_detail(v, latent_kernel(r.embedding.values(), family, 1.0, 1.0));
    CHECK(detail.clamped == 0);
  }
}

TEST_CASE("optimize_embedding is deterministic and writes its trace") {
  const AffinityMatrix v = random_affinity(AffinityFamily::categorical_joint, 12, 17);
  EmbedConfig config;
  config.max_iters = 50;
  config.seed = 3;
  const auto path = (std::filesystem::temp_directory_path() / "probdr_trace_test.jsonl").string();
  config.trace_path = path;
  const EmbedResult a = optimize_embedding(v, config);
  config.trace_path.clear();
  const EmbedResult b = optimize_embedding(v, config);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) CHECK(a.trace[k].loss == b.trace[k].loss);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    CHECK(line.find("\"grad_norm\"") != std::string::npos);
    ++lines;
  }
  CHECK(lines == 51);
  std::filesystem::remove(path);

  config.init = InitMethod::spectral;
  const EmbedResult s = optimize_embedding(v, config);
  CHECK(s.trace.back().loss <= s.trace.front().loss);
}

TEST_CASE("tiny t-SNE reaches the multi-restart optimum") {
  const AffinityMatrix v = tsne_affinities(DataMatrix(oracle::random_matrix(5, 3, 18)), 2.0).affinity;
  EmbedConfig config;
  config.q = 4;
  double best = 1e300;
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    config.seed = seed;
    best = std::min(best, optimize_embedding(v, config).trace.back().loss);
  }
  config.seed = 0;
  CHECK(optimize_embedding(v, config).trace.back().loss - best < 1e-3);
}

TEST_CASE("embed_out_of_sample") {
  std::vector<int> labels;
  const Matrix y = oracle::gaussian_clusters(12, 3, 8.0, 19, labels);
  const AffinityMatrix v_train = umap_affinities(DataMatrix(y), 6).affinity;
  EmbedConfig config;
  config.max_iters = 300;
  const Embedding x_train = optimize_embedding(v_train, config).embedding;

  CHECK((embed_out_of_sample(v_train, x_train, config).embedding.values() - x_train.values()).norm() == 0.0);

  Matrix full(37, 3);
  full << y, y.row(4);
  const AffinityMatrix v_full = umap_affinities(DataMatrix(full), 6).affinity;
  const EmbedResult r = embed_out_of_sample(v_full, x_train, config);
  CHECK((r.embedding.values().topRows(36) - x_train.values()).norm() == 0.0);
  CHECK((r.embedding.values().row(36) - x_train.values().row(4)).norm() < 0.1);

  CHECK_THROWS_AS(embed_out_of_sample(umap_affinities(DataMatrix(y.topRows(20)), 6).affinity, x_train, config),
                  DataError);
}

TEST_CASE("out-of-sample midpoint lands between clusters in 1-d") {
  Matrix y(21, 2);
  SeededRng rng(20);
  for (Index i = 0; i < 10; ++i) y.row(i) << rng.normal() * 0.2, rng.normal() * 0.2;
  for (Index i = 10; i < 20; ++i) y.row(i) << 4.0 + rng.normal() * 0.2, rng.normal() * 0.2;
  y.row(20) << 2.0, 0.0;
  const AffinityMatrix v_train = umap_affinities(DataMatrix(y.topRows(20)), 12).affinity;
  EmbedConfig config;
  config.q = 1;
  config.max_iters = 300;
  const Embedding x_train = optimize_embedding(v_train, config).embedding;
  const AffinityMatrix v_full = umap_affinities(DataMatrix(y), 12).affinity;
  const Matrix x = embed_out_of_sample(v_full, x_train, config).embedding.values();
  const double left = x.topRows(10).mean(), right = x.middleRows(10, 10).mean();
  CHECK(x(20, 0) > std::min(left, right));
  CHECK(x(20, 0) < std::max(left, right));
}

TEST_CASE("categorical map approximation") {
  Matrix uniform = Matrix::Constant(10, 10, 1.0 / 9.0);
  uniform.diagonal().setZero();
  const Matrix counts = categorical_map_approx({uniform, AffinityFamily::categorical_rows}, 10.0);
  for (Index i = 0; i < 10; ++i)
    for (Index j = 0; j < 10; ++j) CHECK(counts(i, j) == (i == j ? 0.0 : 1.0));

  for (auto family : {AffinityFamily::categorical_rows, AffinityFamily::categorical_joint}) {
    const AffinityMatrix v = random_affinity(family, 20, 21);
    const double literal = family == AffinityFamily::categorical_rows ? 20.0 : 400.0;
    const Matrix floor_counts = categorical_map_approx(v, literal);
    CHECK(floor_counts.sum() <= literal * v.probs.sum() + 1e-9);
    if (family == AffinityFamily::categorical_rows)
      for (Index i = 0; i < 20; ++i) CHECK(floor_counts.row(i).sum() <= 20.0);
    const Matrix c = categorical_map_approx(v);
    std::vector<double> kl, nll;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const AffinityMatrix w = latent_kernel(oracle::random_matrix(20, 2, 300 + s), family);
      kl.push_back(kl_objective(v, w));
      nll.push_back(categorical_count_nll(c, w));
    }
    Eigen::Map<Vector> a(kl.data(), 20), b(nll.data(), 20);
    const double corr = ((a.array() - a.mean()) * (b.array() - b.mean())).sum() /
                        std::sqrt((a.array() - a.mean()).square().sum() * (b.array() - b.mean()).square().sum());
    CHECK(corr > 0.999);
  }
  CHECK_THROWS_AS(categorical_map_approx(random_affinity(AffinityFamily::bernoulli_pairs, 8, 1)), ConfigError);
}
