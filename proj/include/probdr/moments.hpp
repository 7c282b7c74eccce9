#pragma once

// Moment estimators: the first step of the two-step MAP pipeline. Each
// classical method is reduced to a symmetric n x n matrix that is read either
// as a covariance (major eigenvectors wanted) or a precision (minor ones).

#include "probdr/core.hpp"
#include "probdr/laplacian.hpp"

#include <string>
#include <vector>

namespace probdr {

enum class MomentKind { covariance, precision };

struct MomentMatrix {
  Matrix values;
  MomentKind kind = MomentKind::covariance;
  std::string provenance;
};

enum class GraphMode { knn, epsilon };

struct GraphSpec {
  GraphMode mode = GraphMode::knn;
  int k = 10;
  double epsilon = 1.0;

  static GraphSpec knn(int k) { return {GraphMode::knn, k, 0.0}; }
  static GraphSpec epsilon_ball(double eps) { return {GraphMode::epsilon, 0, eps}; }
};

struct NeighborEdge {
  Index i = 0;
  Index j = 0;
  double weight = 0.0;  // squared distance
};

// Directed neighbor relation (i -> j). No self edges.
struct NeighborGraph {
  Index n = 0;
  std::vector<NeighborEdge> edges;
  GraphSpec spec;

  // 0/1 adjacency of the union symmetrization.
  Matrix union_adjacency() const;
};

struct KernelSpec {
  enum class Type { rbf, linear, polynomial };
  Type type = Type::rbf;
  double lengthscale = 1.0;
  int degree = 2;
  double offset = 1.0;

  static KernelSpec rbf(double lengthscale) { return {Type::rbf, lengthscale, 2, 1.0}; }
  static KernelSpec linear() { return {Type::linear, 1.0, 1, 0.0}; }
  static KernelSpec polynomial(int degree, double offset) { return {Type::polynomial, 1.0, degree, offset}; }
};

// k nearest neighbors of every row of a squared-distance matrix, nearest
// first; ties go to the lower index.
std::vector<std::vector<Index>> nearest_neighbors(const Matrix& sq_dists, int k);

NeighborGraph build_neighbor_graph(const DataMatrix& y, const GraphSpec& spec);

// Number of connected components of a symmetric adjacency matrix.
Index count_components(const Matrix& adjacency);

MomentMatrix pca_moment(const DataMatrix& y, bool center = true);

// dist_sq: symmetric, zero diagonal, non-negative. Returns psd_project(H(-D/2)H).
MomentMatrix cmds_moment(const Matrix& dist_sq);

// Squared shortest-path distances on the union kNN graph with Euclidean edge
// lengths. Throws DataError when the graph is disconnected.
Matrix geodesic_sq_distances(const DataMatrix& y, int k);
MomentMatrix isomap_moment(const DataMatrix& y, int k);

Matrix kernel_matrix(const DataMatrix& y, const KernelSpec& kernel);
MomentMatrix kpca_moment(const DataMatrix& y, const KernelSpec& kernel);

MomentMatrix le_precision(const DataMatrix& y, const GraphSpec& graph, LaplacianKind laplacian);
// H (L + gamma I)^{-1} H, the covariance-side form of the same graph.
MomentMatrix le_covariance(const DataMatrix& y, const GraphSpec& graph, LaplacianKind laplacian, double gamma = 1.0);

// LLE reconstruction matrix: column i holds 1 at row i and minus the
// reconstruction weights of point i on its k neighbours (weights sum to 1).
// The local Gram matrix is regularized by ridge * trace(G) / k.
Matrix lle_weight_matrix(const DataMatrix& y, int k, double ridge = 1e-3);
MomentMatrix lle_precision(const DataMatrix& y, int k, double ridge = 1e-3);

// (D^{-1/2} K D^{-1/2})^steps with K_ij = exp(-|y_i - y_j|^2 / (2 l^2)), PSD-projected.
MomentMatrix diffusion_moment(const DataMatrix& y, double lengthscale, int steps);

// Externally estimated kernel (e.g. an MVU solution): double-centred and PSD-projected.
MomentMatrix external_kernel_moment(const Matrix& k, const std::string& provenance = "mvu");

// Raw Laplacian ingestion (spectral clustering style). Validated symmetric.
MomentMatrix laplacian_moment(const Matrix& laplacian);

}  // namespace probdr
