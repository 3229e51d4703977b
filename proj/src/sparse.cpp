#include "nosaf/sparse.hpp"

#include <cmath>
#include <string>

#include "nosaf/errors.hpp"

namespace nosaf {

void SparseCsr::validate() const {
  if (rows < 0 || cols < 0) throw IntegrityError("SparseCsr: negative dimensions");
  if (row_ptr.size() != static_cast<std::size_t>(rows) + 1)
    throw IntegrityError("SparseCsr: row_ptr size " + std::to_string(row_ptr.size()) +
                         " for " + std::to_string(rows) + " rows");
  if (row_ptr.front() != 0 || row_ptr.back() != nnz())
    throw IntegrityError("SparseCsr: row_ptr endpoints don't bracket the entries");
  if (values.size() != col_idx.size())
    throw IntegrityError("SparseCsr: values/col_idx size mismatch");
  for (int r = 0; r < rows; ++r) {
    if (row_ptr[r] > row_ptr[r + 1])
      throw IntegrityError("SparseCsr: row_ptr decreases at row " + std::to_string(r));
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      if (col_idx[k] < 0 || col_idx[k] >= cols)
        throw IntegrityError("SparseCsr: column " + std::to_string(col_idx[k]) +
                             " out of range in row " + std::to_string(r));
      if (k > row_ptr[r] && col_idx[k] <= col_idx[k - 1])
        throw IntegrityError("SparseCsr: columns not strictly increasing in row " +
                             std::to_string(r));
      if (!std::isfinite(values[k]))
        throw IntegrityError("SparseCsr: non-finite value in row " + std::to_string(r));
    }
  }
}

Mat SparseCsr::to_dense() const {
  Mat d = Mat::Zero(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d(r, col_idx[k]) = values[k];
  return d;
}

Mat SparseCsr::multiply(const Mat& d) const {
  if (d.rows() != cols)
    throw DimensionError("SparseCsr::multiply: " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " * " + std::to_string(d.rows()) + "x" +
                         std::to_string(d.cols()));
  Mat out = Mat::Zero(rows, d.cols());
  for (int r = 0; r < rows; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      out.row(r) += values[k] * d.row(col_idx[k]);
  return out;
}

}  // namespace nosaf
