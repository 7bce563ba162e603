#ifndef RDMM_TILE_HPP
#define RDMM_TILE_HPP

// Local dense and CSR tiles plus multiply/accumulate kernels with flop and
// compression-factor instrumentation.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace rdmm {

using index_t = std::uint32_t;  // default 4-byte indices

class dimension_error : public std::runtime_error {
 public:
  explicit dimension_error(const std::string& what)
      : std::runtime_error(what) {}
};

// flops counts scalar multiply-adds x2; cf is flops per nonzero output.
struct FlopMeter {
  std::uint64_t flops = 0;
  std::uint64_t output_nnz = 0;

  double cf() const {
    return output_nnz == 0 ? 0.0
                           : static_cast<double>(flops) /
                                 static_cast<double>(output_nnz);
  }

  FlopMeter& operator+=(const FlopMeter& o) {
    flops += o.flops;
    output_nnz += o.output_nnz;
    return *this;
  }
};

template <typename T>
struct DenseTile {
  index_t rows = 0, cols = 0;
  std::vector<T> values;  // row-major, rows*cols

  DenseTile() = default;
  DenseTile(index_t r, index_t c) : rows(r), cols(c), values(std::size_t(r) * c) {}

  T& at(index_t r, index_t c) { return values[std::size_t(r) * cols + c]; }
  const T& at(index_t r, index_t c) const {
    return values[std::size_t(r) * cols + c];
  }
};

template <typename T>
struct CsrTile {
  index_t rows = 0, cols = 0;
  std::vector<index_t> row_ptr;  // rows+1, non-decreasing, row_ptr[0]==0
  std::vector<index_t> col_idx;  // nnz, strictly increasing within a row
  std::vector<T> values;         // nnz

  CsrTile() = default;
  CsrTile(index_t r, index_t c) : rows(r), cols(c), row_ptr(r + 1, 0) {}

  std::uint64_t nnz() const { return col_idx.size(); }

  // From coordinate triples; sorts and sums duplicates.
  static CsrTile from_coo(index_t rows, index_t cols,
                          std::vector<std::tuple<index_t, index_t, T>> coo) {
    std::sort(coo.begin(), coo.end(), [](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b))
        return std::get<0>(a) < std::get<0>(b);
      return std::get<1>(a) < std::get<1>(b);
    });
    CsrTile t(rows, cols);
    t.row_ptr.assign(rows + 1, 0);
    for (std::size_t s = 0; s < coo.size();) {
      auto [r, c, v] = coo[s];
      T sum = v;
      std::size_t e = s + 1;
      while (e < coo.size() && std::get<0>(coo[e]) == r &&
             std::get<1>(coo[e]) == c) {
        sum += std::get<2>(coo[e]);
        ++e;
      }
      t.col_idx.push_back(c);
      t.values.push_back(sum);
      t.row_ptr[r + 1]++;
      s = e;
    }
    for (index_t r = 0; r < rows; ++r) t.row_ptr[r + 1] += t.row_ptr[r];
    return t;
  }

  DenseTile<T> to_dense() const {
    DenseTile<T> d(rows, cols);
    for (index_t r = 0; r < rows; ++r)
      for (index_t s = row_ptr[r]; s < row_ptr[r + 1]; ++s)
        d.at(r, col_idx[s]) = values[s];
    return d;
  }

  bool well_formed() const {
    if (row_ptr.size() != std::size_t(rows) + 1) return false;
    if (row_ptr[0] != 0 || row_ptr[rows] != col_idx.size()) return false;
    if (col_idx.size() != values.size()) return false;
    for (index_t r = 0; r < rows; ++r) {
      if (row_ptr[r] > row_ptr[r + 1]) return false;
      for (index_t s = row_ptr[r]; s < row_ptr[r + 1]; ++s) {
        if (col_idx[s] >= cols) return false;
        if (s > row_ptr[r] && col_idx[s] <= col_idx[s - 1]) return false;
      }
    }
    return true;
  }
};

// Read-only / mutable views so kernels can run directly on fabric-resident
// tile storage.
template <typename T>
struct CsrView {
  index_t rows = 0, cols = 0;
  const index_t* row_ptr = nullptr;
  const index_t* col_idx = nullptr;
  const T* values = nullptr;

  CsrView() = default;
  CsrView(const CsrTile<T>& t)
      : rows(t.rows),
        cols(t.cols),
        row_ptr(t.row_ptr.data()),
        col_idx(t.col_idx.data()),
        values(t.values.data()) {}

  std::uint64_t nnz() const { return row_ptr ? row_ptr[rows] : 0; }
};

template <typename T>
struct DenseView {
  index_t rows = 0, cols = 0;
  T* values = nullptr;

  DenseView() = default;
  DenseView(DenseTile<T>& t) : rows(t.rows), cols(t.cols), values(t.values.data()) {}

  T& at(index_t r, index_t c) { return values[std::size_t(r) * cols + c]; }
  const T& at(index_t r, index_t c) const {
    return values[std::size_t(r) * cols + c];
  }
};

template <typename T>
struct DenseConstView {
  index_t rows = 0, cols = 0;
  const T* values = nullptr;

  DenseConstView() = default;
  DenseConstView(const DenseTile<T>& t)
      : rows(t.rows), cols(t.cols), values(t.values.data()) {}
  DenseConstView(const DenseView<T>& t)
      : rows(t.rows), cols(t.cols), values(t.values) {}

  const T& at(index_t r, index_t c) const {
    return values[std::size_t(r) * cols + c];
  }
};

// c += a*b.  flops == 2*nnz(a)*b.cols.
template <typename T>
FlopMeter spmm_local(CsrView<T> a, DenseConstView<T> b, DenseView<T> c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    throw dimension_error("spmm_local: dimension mismatch");
  for (index_t r = 0; r < a.rows; ++r) {
    for (index_t s = a.row_ptr[r]; s < a.row_ptr[r + 1]; ++s) {
      index_t k = a.col_idx[s];
      T av = a.values[s];
      const T* brow = b.values + std::size_t(k) * b.cols;
      T* crow = c.values + std::size_t(r) * c.cols;
      for (index_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
  FlopMeter m;
  m.flops = 2ull * a.nnz() * b.cols;
  m.output_nnz = std::uint64_t(c.rows) * c.cols;
  return m;
}

template <typename T>
FlopMeter spmm_local(const CsrTile<T>& a, const DenseTile<T>& b,
                     DenseTile<T>& c) {
  DenseView<T> cv(c);
  return spmm_local(CsrView<T>(a), DenseConstView<T>(b), cv);
}

// Flop count of a*b without forming the product:
// 2 * sum over nonzeros (r,k) of a of nnz(row k of b).
template <typename T>
std::uint64_t spgemm_flops(CsrView<T> a, CsrView<T> b) {
  if (a.cols != b.rows)
    throw dimension_error("spgemm_flops: dimension mismatch");
  std::uint64_t f = 0;
  for (std::uint64_t s = 0; s < a.nnz(); ++s) {
    index_t k = a.col_idx[s];
    f += b.row_ptr[k + 1] - b.row_ptr[k];
  }
  return 2 * f;
}

// Sparse product via a per-row dense scratch accumulator.  Numerically
// cancelled zeros stay in the output pattern so that flop/cf accounting
// reflects work performed, not post-compression nnz.
template <typename T>
std::pair<CsrTile<T>, FlopMeter> spgemm_local(CsrView<T> a, CsrView<T> b) {
  if (a.cols != b.rows)
    throw dimension_error("spgemm_local: dimension mismatch");
  CsrTile<T> c(a.rows, b.cols);
  FlopMeter m;
  std::vector<T> acc(b.cols, T{});
  std::vector<index_t> touched;
  std::vector<char> seen(b.cols, 0);
  for (index_t r = 0; r < a.rows; ++r) {
    touched.clear();
    for (index_t s = a.row_ptr[r]; s < a.row_ptr[r + 1]; ++s) {
      index_t k = a.col_idx[s];
      T av = a.values[s];
      for (index_t t = b.row_ptr[k]; t < b.row_ptr[k + 1]; ++t) {
        index_t j = b.col_idx[t];
        if (!seen[j]) {
          seen[j] = 1;
          acc[j] = T{};
          touched.push_back(j);
        }
        acc[j] += av * b.values[t];
        m.flops += 2;
      }
    }
    std::sort(touched.begin(), touched.end());
    for (index_t j : touched) {
      c.col_idx.push_back(j);
      c.values.push_back(acc[j]);
      seen[j] = 0;
    }
    c.row_ptr[r + 1] = static_cast<index_t>(c.col_idx.size());
  }
  m.output_nnz = c.nnz();
  return {std::move(c), m};
}

template <typename T>
std::pair<CsrTile<T>, FlopMeter> spgemm_local(const CsrTile<T>& a,
                                              const CsrTile<T>& b) {
  return spgemm_local(CsrView<T>(a), CsrView<T>(b));
}

// Merged CSR sum; duplicates summed, rows stay sorted.
template <typename T>
CsrTile<T> csr_add(CsrView<T> a, CsrView<T> b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw dimension_error("csr_add: dimension mismatch");
  CsrTile<T> c(a.rows, a.cols);
  for (index_t r = 0; r < a.rows; ++r) {
    index_t sa = a.row_ptr[r], ea = a.row_ptr[r + 1];
    index_t sb = b.row_ptr[r], eb = b.row_ptr[r + 1];
    while (sa < ea || sb < eb) {
      index_t ca = sa < ea ? a.col_idx[sa] : a.cols;
      index_t cb = sb < eb ? b.col_idx[sb] : b.cols;
      if (ca < cb) {
        c.col_idx.push_back(ca);
        c.values.push_back(a.values[sa++]);
      } else if (cb < ca) {
        c.col_idx.push_back(cb);
        c.values.push_back(b.values[sb++]);
      } else {
        c.col_idx.push_back(ca);
        c.values.push_back(a.values[sa++] + b.values[sb++]);
      }
    }
    c.row_ptr[r + 1] = static_cast<index_t>(c.col_idx.size());
  }
  return c;
}

template <typename T>
CsrTile<T> csr_add(const CsrTile<T>& a, const CsrTile<T>& b) {
  return csr_add(CsrView<T>(a), CsrView<T>(b));
}

template <typename T>
DenseTile<T> dense_add(const DenseTile<T>& a, const DenseTile<T>& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw dimension_error("dense_add: dimension mismatch");
  DenseTile<T> c(a.rows, a.cols);
  for (std::size_t i = 0; i < c.values.size(); ++i)
    c.values[i] = a.values[i] + b.values[i];
  return c;
}

// c += contribution, in place.
template <typename T>
void dense_add_into(DenseView<T> c, DenseConstView<T> contrib) {
  if (c.rows != contrib.rows || c.cols != contrib.cols)
    throw dimension_error("dense_add_into: dimension mismatch");
  for (std::size_t i = 0; i < std::size_t(c.rows) * c.cols; ++i)
    c.values[i] += contrib.values[i];
}

}  // namespace rdmm

#endif  // RDMM_TILE_HPP
