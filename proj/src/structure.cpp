#include "chargecast/structure.hpp"

namespace chargecast {

bool StructureMatrix::is_exactly_symmetric() const {
  if (matrix.rows() != matrix.cols()) return false;
  const SparseMatrix t = matrix.transpose();
  if (t.nonZeros() != matrix.nonZeros()) return false;
  for (Eigen::Index k = 0; k < matrix.outerSize(); ++k) {
    SparseMatrix::InnerIterator a(matrix, k), b(t, k);
    for (; a && b; ++a, ++b)
      if (a.index() != b.index() || a.value() != b.value()) return false;
    if (a || b) return false;
  }
  return true;
}

SparseMatrix block_diagonal(std::span<const SparseMatrix> blocks) {
  Eigen::Index n = 0;
  Eigen::Index nnz = 0;
  for (const auto& b : blocks) {
    n += b.rows();
    nnz += b.nonZeros();
  }
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(nnz));
  Eigen::Index offset = 0;
  for (const auto& b : blocks) {
    for (Eigen::Index k = 0; k < b.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(b, k); it; ++it)
        trips.emplace_back(offset + it.row(), offset + it.col(), it.value());
    offset += b.rows();
  }
  SparseMatrix out(n, n);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

SparseMatrix sparse_identity(Eigen::Index n, double scale) {
  SparseMatrix out(n, n);
  out.reserve(Eigen::VectorXi::Constant(n, 1));
  for (Eigen::Index i = 0; i < n; ++i) out.insert(i, i) = scale;
  out.makeCompressed();
  return out;
}

}  // namespace chargecast
