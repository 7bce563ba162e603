#ifndef RDMM_GEN_HPP
#define RDMM_GEN_HPP

// Matrix generators: R-MAT, uniform fixed-density tiles, and plain random
// CSR.  All generation uses a counter-based 64-bit generator (splitmix64 of
// (seed, counter)) so corpora are reproducible byte-for-byte across
// platforms.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>

#include "rdmm/tile.hpp"

namespace rdmm {

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stateless: value at (seed, counter).
inline std::uint64_t at(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64(seed * 0x2545f4914f6cdd1dull + counter);
}

inline double u01(std::uint64_t seed, std::uint64_t counter) {
  return double(at(seed, counter) >> 11) * 0x1.0p-53;
}

}  // namespace rng

struct RmatParams {
  double a = 0.6, b = 0.4 / 3, c = 0.4 / 3, d = 0.4 / 3;
  std::uint32_t scale = 17;      // log2(rows)
  std::uint32_t edgefactor = 8;  // edges per row
  std::uint64_t seed = 1;

  void validate() const {
    if (a < 0 || b < 0 || c < 0 || d < 0)
      throw std::invalid_argument("R-MAT probabilities must be nonnegative");
    if (std::abs(a + b + c + d - 1.0) > 1e-9)
      throw std::invalid_argument("R-MAT probabilities must sum to 1");
    if (scale > 26)
      throw std::invalid_argument("R-MAT scale > 26 exceeds the desk-scale guard");
  }
};

enum class DupPolicy { collapse_to_one, multiplicity };

// 2^scale x 2^scale matrix with edgefactor * 2^scale sampled edges;
// duplicate edges collapse to value 1 (or their multiplicity).
template <typename T = float>
CsrTile<T> rmat(const RmatParams& p,
                DupPolicy dup = DupPolicy::collapse_to_one) {
  p.validate();
  const std::uint64_t rows = 1ull << p.scale;
  const std::uint64_t edges = std::uint64_t(p.edgefactor) << p.scale;
  std::vector<std::tuple<index_t, index_t, T>> coo;
  coo.reserve(edges);
  std::uint64_t ctr = 0;
  for (std::uint64_t e = 0; e < edges; ++e) {
    std::uint64_t r = 0, c = 0;
    for (std::uint32_t level = 0; level < p.scale; ++level) {
      double u = rng::u01(p.seed, ctr++);
      r <<= 1;
      c <<= 1;
      if (u < p.a) {
        // top-left
      } else if (u < p.a + p.b) {
        c |= 1;
      } else if (u < p.a + p.b + p.c) {
        r |= 1;
      } else {
        r |= 1;
        c |= 1;
      }
    }
    coo.emplace_back(static_cast<index_t>(r), static_cast<index_t>(c), T{1});
  }
  CsrTile<T> m = CsrTile<T>::from_coo(static_cast<index_t>(rows),
                                      static_cast<index_t>(rows),
                                      std::move(coo));
  if (dup == DupPolicy::collapse_to_one)
    for (auto& v : m.values) v = T{1};
  return m;
}

// Global CSR matrix where every tile of the sqrt(p) x sqrt(p) grid holds
// exactly d * (m/sqrt(p)) * (k/sqrt(p)) nonzeros, uniformly placed.  The
// per-tile count must be integral.
template <typename T = float>
CsrTile<T> uniform_tiles(std::uint64_t m, std::uint64_t k, std::uint32_t p,
                         double d, std::uint64_t seed) {
  std::uint32_t s = static_cast<std::uint32_t>(std::lround(std::sqrt(double(p))));
  if (std::uint64_t(s) * s != p)
    throw std::invalid_argument("uniform_tiles: p must be a perfect square");
  if (m % s != 0 || k % s != 0)
    throw std::invalid_argument("uniform_tiles: grid must divide dimensions");
  std::uint64_t tm = m / s, tk = k / s;
  double per_tile_f = d * double(tm) * double(tk);
  std::uint64_t per_tile = std::uint64_t(std::llround(per_tile_f));
  if (std::abs(per_tile_f - double(per_tile)) > 1e-9)
    throw std::invalid_argument("uniform_tiles: d * tile area must be integral");
  if (per_tile > tm * tk)
    throw std::invalid_argument("uniform_tiles: density exceeds 1");

  std::vector<std::tuple<index_t, index_t, T>> coo;
  coo.reserve(std::size_t(per_tile) * p);
  std::uint64_t ctr = 0;
  for (std::uint32_t ti = 0; ti < s; ++ti) {
    for (std::uint32_t tj = 0; tj < s; ++tj) {
      std::unordered_set<std::uint64_t> cells;
      cells.reserve(per_tile * 2);
      while (cells.size() < per_tile) {
        std::uint64_t cell = rng::at(seed, ctr++) % (tm * tk);
        cells.insert(cell);
      }
      for (std::uint64_t cell : cells) {
        index_t r = static_cast<index_t>(ti * tm + cell / tk);
        index_t c = static_cast<index_t>(tj * tk + cell % tk);
        coo.emplace_back(r, c, T{1});
      }
    }
  }
  return CsrTile<T>::from_coo(static_cast<index_t>(m), static_cast<index_t>(k),
                              std::move(coo));
}

// Applies the same random permutation to rows and columns (a symmetric
// relabeling).  Used to spread structured matrices, e.g. R-MAT output, whose
// natural ordering concentrates nonzeros in a corner of the tile grid.
template <typename T>
CsrTile<T> permute_symmetric(const CsrTile<T>& m, std::uint64_t seed) {
  if (m.rows != m.cols)
    throw dimension_error("permute_symmetric expects a square matrix");
  std::vector<index_t> perm(m.rows);
  for (index_t i = 0; i < m.rows; ++i) perm[i] = i;
  // Fisher-Yates driven by the counter-based generator.
  for (index_t i = m.rows; i > 1; --i) {
    index_t j = static_cast<index_t>(rng::at(seed, i) % i);
    std::swap(perm[i - 1], perm[j]);
  }
  std::vector<std::tuple<index_t, index_t, T>> coo;
  coo.reserve(m.nnz());
  for (index_t r = 0; r < m.rows; ++r)
    for (index_t s = m.row_ptr[r]; s < m.row_ptr[r + 1]; ++s)
      coo.emplace_back(perm[r], perm[m.col_idx[s]], m.values[s]);
  return CsrTile<T>::from_coo(m.rows, m.cols, std::move(coo));
}

// Random CSR with small-integer values, used by tests and the CLI.
template <typename T = float>
CsrTile<T> random_csr(index_t rows, index_t cols, double density,
                      std::uint64_t seed, int max_value = 3) {
  std::vector<std::tuple<index_t, index_t, T>> coo;
  std::uint64_t ctr = 0;
  for (index_t r = 0; r < rows; ++r)
    for (index_t c = 0; c < cols; ++c) {
      if (rng::u01(seed, ctr++) < density) {
        T v = T(1 + int(rng::at(seed, ctr) % max_value));
        coo.emplace_back(r, c, v);
      }
      ++ctr;
    }
  return CsrTile<T>::from_coo(rows, cols, std::move(coo));
}

template <typename T = float>
DenseTile<T> random_dense(index_t rows, index_t cols, std::uint64_t seed,
                          int max_value = 3) {
  DenseTile<T> t(rows, cols);
  std::uint64_t ctr = 0;
  for (auto& v : t.values) v = T(int(rng::at(seed, ctr++) % (max_value + 1)));
  return t;
}

}  // namespace rdmm

#endif  // RDMM_GEN_HPP
