#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <span>
#include <vector>

namespace chargecast {

using SparseMatrix = Eigen::SparseMatrix<double>;  // column-major, compressed
using Triplet = Eigen::Triplet<double>;

/// Symmetric sparse precision/structure matrix with its declared null space.
///
/// Both triangles are stored, so the compressed columns double as compressed rows.
struct StructureMatrix {
  SparseMatrix matrix;
  int rank_deficiency = 0;
  /// n x rank_deficiency basis of the null space (empty for full-rank matrices).
  Eigen::MatrixXd null_basis;

  Eigen::Index dim() const { return matrix.rows(); }
  std::span<const int> outer_index() const {
    return {matrix.outerIndexPtr(), static_cast<std::size_t>(matrix.outerSize() + 1)};
  }
  std::span<const int> inner_index() const {
    return {matrix.innerIndexPtr(), static_cast<std::size_t>(matrix.nonZeros())};
  }
  std::span<const double> values() const {
    return {matrix.valuePtr(), static_cast<std::size_t>(matrix.nonZeros())};
  }

  /// Bitwise equality of every stored entry with its transpose.
  bool is_exactly_symmetric() const;
};

/// Block-diagonal stacking; blocks are placed along the diagonal in order.
SparseMatrix block_diagonal(std::span<const SparseMatrix> blocks);

SparseMatrix sparse_identity(Eigen::Index n, double scale = 1.0);

}  // namespace chargecast
