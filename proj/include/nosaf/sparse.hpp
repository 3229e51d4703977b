#pragma once

#include <Eigen/Dense>
#include <vector>

namespace nosaf {

// Row-major throughout: forward passes are row-per-node and CSR row scans
// want contiguous rows on both sides.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Immutable CSR matrix. Built once per graph (normalized adjacency) and
// shared read-only across tapes and threads.
struct SparseCsr {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr;  // size rows+1, non-decreasing
  std::vector<int> col_idx;  // size nnz, strictly increasing within a row
  std::vector<double> values;

  int nnz() const { return static_cast<int>(col_idx.size()); }

  // Throws IntegrityError if the structural invariants don't hold.
  void validate() const;

  Mat to_dense() const;

  // y = S * d  (d dense, rows checked against cols).
  Mat multiply(const Mat& d) const;
};

}  // namespace nosaf
