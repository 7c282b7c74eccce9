#include "probdr/moments.hpp"

#include "probdr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

namespace probdr {

namespace {

constexpr double kInputSymmetryTolerance = 1e-9;

MomentMatrix covariance(Matrix values, std::string provenance) {
  return {std::move(values), MomentKind::covariance, std::move(provenance)};
}

MomentMatrix precision(Matrix values, std::string provenance) {
  return {std::move(values), MomentKind::precision, std::move(provenance)};
}

void require_neighbor_count(int k, Index n) {
  if (k < 1 || k >= n) {
    throw ConfigError("neighbor count k must satisfy 1 <= k < n, got k=" + std::to_string(k) +
                      " n=" + std::to_string(n));
  }
}

}  // namespace

Matrix NeighborGraph::union_adjacency() const {
  Matrix a = Matrix::Zero(n, n);
  for (const auto& e : edges) {
    a(e.i, e.j) = 1.0;
    a(e.j, e.i) = 1.0;
  }
  return a;
}

std::vector<std::vector<Index>> nearest_neighbors(const Matrix& sq_dists, int k) {
  const Index n = sq_dists.rows();
  require_neighbor_count(k, n);
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n));
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), Index{0});
    order.erase(order.begin() + i);
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return sq_dists(i, a) < sq_dists(i, b); });
    out[static_cast<std::size_t>(i)].assign(order.begin(), order.begin() + k);
    order.resize(static_cast<std::size_t>(n));
  }
  return out;
}

NeighborGraph build_neighbor_graph(const DataMatrix& y, const GraphSpec& spec) {
  const Matrix d2 = pairwise_sq_dists(y);
  NeighborGraph g;
  g.n = y.n();
  g.spec = spec;
  if (spec.mode == GraphMode::knn) {
    const auto nn = nearest_neighbors(d2, spec.k);
    for (Index i = 0; i < g.n; ++i) {
      for (Index j : nn[static_cast<std::size_t>(i)]) g.edges.push_back({i, j, d2(i, j)});
    }
    return g;
  }
  if (!(spec.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  const double eps2 = spec.epsilon * spec.epsilon;
  std::vector<Index> isolated;
  for (Index i = 0; i < g.n; ++i) {
    bool any = false;
    for (Index j = 0; j < g.n; ++j) {
      if (j != i && d2(i, j) < eps2) {
        g.edges.push_back({i, j, d2(i, j)});
        any = true;
      }
    }
    if (!any) isolated.push_back(i);
  }
  if (!isolated.empty()) {
    std::ostringstream msg;
    msg << "epsilon graph has isolated nodes:";
    for (Index i : isolated) msg << ' ' << i;
    throw DataError(msg.str());
  }
  return g;
}

Index count_components(const Matrix& adjacency) {
  const Index n = adjacency.rows();
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  Index components = 0;
  std::vector<Index> stack;
  for (Index s = 0; s < n; ++s) {
    if (seen[static_cast<std::size_t>(s)]) continue;
    ++components;
    stack.push_back(s);
    seen[static_cast<std::size_t>(s)] = true;
    while (!stack.empty()) {
      const Index u = stack.back();
      stack.pop_back();
      for (Index v = 0; v < n; ++v) {
        if (adjacency(u, v) != 0.0 && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = true;
          stack.push_back(v);
        }
      }
    }
  }
  return components;
}

MomentMatrix pca_moment(const DataMatrix& y, bool center) {
  Matrix yc = y.values();
  if (center) yc.rowwise() -= yc.colwise().mean();
  Matrix s = yc * yc.transpose() / static_cast<double>(y.d());
  return covariance(0.5 * (s + s.transpose()), "pca");
}

MomentMatrix cmds_moment(const Matrix& dist_sq) {
  if (dist_sq.rows() != dist_sq.cols()) throw DataError("cmds_moment: distance matrix must be square");
  if (!all_finite(dist_sq)) throw DataError("cmds_moment: distance matrix contains non-finite entries");
  if (relative_asymmetry(dist_sq) > kInputSymmetryTolerance) {
    throw DataError("cmds_moment: distance matrix is not symmetric");
  }
  if (dist_sq.diagonal().cwiseAbs().maxCoeff() > 0.0) throw DataError("cmds_moment: distance matrix has non-zero diagonal");
  if (dist_sq.minCoeff() < 0.0) throw DataError("cmds_moment: distance matrix has negative entries");
  return covariance(psd_project(double_center(-0.5 * dist_sq)), "cmds");
}

Matrix geodesic_sq_distances(const DataMatrix& y, int k) {
  const NeighborGraph g = build_neighbor_graph(y, GraphSpec::knn(k));
  const Index n = g.n;
  const Matrix adj = g.union_adjacency();
  const Index components = count_components(adj);
  if (components > 1) {
    throw DataError("isomap: neighbor graph is disconnected (" + std::to_string(components) +
                    " components); increase k");
  }
  const Matrix d2 = pairwise_sq_dists(y);
  std::vector<std::vector<std::pair<Index, double>>> nbrs(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (adj(i, j) != 0.0) nbrs[static_cast<std::size_t>(i)].emplace_back(j, std::sqrt(d2(i, j)));
    }
  }
  Matrix out(n, n);
  using Item = std::pair<double, Index>;
  for (Index s = 0; s < n; ++s) {
    Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());
    dist(s) = 0.0;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    heap.emplace(0.0, s);
    while (!heap.empty()) {
      const auto [du, u] = heap.top();
      heap.pop();
      if (du > dist(u)) continue;
      for (const auto& [v, w] : nbrs[static_cast<std::size_t>(u)]) {
        if (du + w < dist(v)) {
          dist(v) = du + w;
          heap.emplace(dist(v), v);
        }
      }
    }
    out.row(s) = dist.array().square().matrix().transpose();
  }
  // Shortest paths are symmetric in exact arithmetic; remove round-off drift.
  return 0.5 * (out + out.transpose());
}

MomentMatrix isomap_moment(const DataMatrix& y, int k) {
  MomentMatrix m = cmds_moment(geodesic_sq_distances(y, k));
  m.provenance = "isomap";
  return m;
}

Matrix kernel_matrix(const DataMatrix& y, const KernelSpec& kernel) {
  const Matrix& v = y.values();
  switch (kernel.type) {
    case KernelSpec::Type::rbf: {
      if (!(kernel.lengthscale > 0.0)) throw ConfigError("rbf kernel lengthscale must be positive");
      const double denom = 2.0 * kernel.lengthscale * kernel.lengthscale;
      return (-pairwise_sq_dists(y) / denom).array().exp().matrix();
    }
    case KernelSpec::Type::linear:
      return v * v.transpose();
    case KernelSpec::Type::polynomial: {
      if (kernel.degree < 1) throw ConfigError("polynomial kernel degree must be >= 1");
      return (v * v.transpose()).array().unaryExpr([&](double g) { return std::pow(g + kernel.offset, kernel.degree); })
          .matrix();
    }
  }
  throw ConfigError("unknown kernel type");
}

MomentMatrix kpca_moment(const DataMatrix& y, const KernelSpec& kernel) {
  const Matrix k = kernel_matrix(y, kernel);
  return covariance(psd_project(double_center(0.5 * (k + k.transpose()))), "kpca");
}

MomentMatrix le_precision(const DataMatrix& y, const GraphSpec& graph, LaplacianKind laplacian) {
  const NeighborGraph g = build_neighbor_graph(y, graph);
  return precision(build_laplacian(g.union_adjacency(), laplacian), "le");
}

MomentMatrix le_covariance(const DataMatrix& y, const GraphSpec& graph, LaplacianKind laplacian, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("le_covariance: gamma must be positive");
  const Matrix l = le_precision(y, graph, laplacian).values;
  const Index n = l.rows();
  const Matrix ridged = l + gamma * Matrix::Identity(n, n);
  const Matrix inv = ridged.llt().solve(Matrix::Identity(n, n));
  return covariance(psd_project(double_center(0.5 * (inv + inv.transpose()))), "le_covariance");
}

Matrix lle_weight_matrix(const DataMatrix& y, int k, double ridge) {
  if (ridge < 0.0) throw ConfigError("lle ridge must be non-negative");
  const Index n = y.n();
  const Matrix d2 = pairwise_sq_dists(y);
  const auto nn = nearest_neighbors(d2, k);
  Matrix w = Matrix::Identity(n, n);
  const Matrix& v = y.values();
  for (Index i = 0; i < n; ++i) {
    const auto& nbrs = nn[static_cast<std::size_t>(i)];
    Matrix z(k, v.cols());
    for (int a = 0; a < k; ++a) z.row(a) = v.row(nbrs[static_cast<std::size_t>(a)]) - v.row(i);
    Matrix gram = z * z.transpose();
    const double tr = gram.trace();
    const double reg = ridge * (tr > 0.0 ? tr / k : 1.0);
    gram.diagonal().array() += reg;
    Eigen::FullPivLU<Matrix> lu(gram);
    if (!lu.isInvertible()) {
      throw NumericalError("lle: local Gram matrix of point " + std::to_string(i) +
                           " is singular; use a positive ridge");
    }
    Vector weights = lu.solve(Vector::Ones(k));
    weights /= weights.sum();
    for (int a = 0; a < k; ++a) w(nbrs[static_cast<std::size_t>(a)], i) = -weights(a);
  }
  return w;
}

MomentMatrix lle_precision(const DataMatrix& y, int k, double ridge) {
  const Matrix w = lle_weight_matrix(y, k, ridge);
  Matrix l = w * w.transpose();
  return precision(0.5 * (l + l.transpose()), "lle");
}

MomentMatrix diffusion_moment(const DataMatrix& y, double lengthscale, int steps) {
  if (!(lengthscale > 0.0)) throw ConfigError("diffusion lengthscale must be positive");
  if (steps < 1) throw ConfigError("diffusion steps must be >= 1");
  const Matrix k = kernel_matrix(y, KernelSpec::rbf(lengthscale));
  const Vector inv_sqrt_deg = k.rowwise().sum().array().rsqrt().matrix();
  const Matrix base = inv_sqrt_deg.asDiagonal() * k * inv_sqrt_deg.asDiagonal();
  Matrix power = base;
  for (int s = 1; s < steps; ++s) power = power * base;
  return covariance(psd_project(0.5 * (power + power.transpose())), "diffusion");
}

MomentMatrix external_kernel_moment(const Matrix& k, const std::string& provenance) {
  if (k.rows() != k.cols()) throw DataError("external kernel must be square");
  if (!all_finite(k)) throw DataError("external kernel contains non-finite entries");
  if (relative_asymmetry(k) > kInputSymmetryTolerance) throw DataError("external kernel is not symmetric");
  return covariance(psd_project(double_center(0.5 * (k + k.transpose()))), provenance);
}

MomentMatrix laplacian_moment(const Matrix& laplacian) {
  if (laplacian.rows() != laplacian.cols()) throw DataError("laplacian must be square");
  if (!all_finite(laplacian)) throw DataError("laplacian contains non-finite entries");
  if (relative_asymmetry(laplacian) > kInputSymmetryTolerance) throw DataError("laplacian is not symmetric");
  return precision(0.5 * (laplacian + laplacian.transpose()), "laplacian");
}

}  // namespace probdr
