#pragma once

#include "probdr/core.hpp"

namespace probdr {

enum class LaplacianKind { ordinary, normalized };

/// Graph Laplacian of a symmetric non-negative weight matrix.
/// ordinary: D - A. normalized: I - D^{+1/2} A D^{+1/2}, where D^+ is the
/// pseudo-inverse of the degree matrix, so isolated nodes get identity rows.
Matrix build_laplacian(const Matrix& adjacency, LaplacianKind kind);

}  // namespace probdr
