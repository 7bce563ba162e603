#ifndef RDMM_SERIAL_HPP
#define RDMM_SERIAL_HPP

// Serial reference products used by the CLI's --verify path.

#include "rdmm/tile.hpp"

namespace rdmm {

// Dense triple-loop reference for C = A*B, A given as CSR.
template <typename T>
std::vector<T> serial_spmm(const CsrTile<T>& a, const std::vector<T>& b,
                           index_t b_cols) {
  std::vector<T> c(std::size_t(a.rows) * b_cols, T{});
  for (index_t r = 0; r < a.rows; ++r)
    for (index_t s = a.row_ptr[r]; s < a.row_ptr[r + 1]; ++s) {
      index_t k = a.col_idx[s];
      for (index_t j = 0; j < b_cols; ++j)
        c[std::size_t(r) * b_cols + j] +=
            a.values[s] * b[std::size_t(k) * b_cols + j];
    }
  return c;
}

// Dense reference for sparse C = A*B, returned densified.
template <typename T>
std::vector<T> serial_spgemm_dense(const CsrTile<T>& a, const CsrTile<T>& b) {
  std::vector<T> c(std::size_t(a.rows) * b.cols, T{});
  for (index_t r = 0; r < a.rows; ++r)
    for (index_t s = a.row_ptr[r]; s < a.row_ptr[r + 1]; ++s) {
      index_t k = a.col_idx[s];
      for (index_t t = b.row_ptr[k]; t < b.row_ptr[k + 1]; ++t)
        c[std::size_t(r) * b.cols + b.col_idx[t]] += a.values[s] * b.values[t];
    }
  return c;
}

}  // namespace rdmm

#endif  // RDMM_SERIAL_HPP
