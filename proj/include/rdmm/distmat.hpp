#ifndef RDMM_DISTMAT_HPP
#define RDMM_DISTMAT_HPP

// Distributed tiled dense and sparse matrices over the fabric: tile grids,
// processor-grid ownership, global-pointer directories, and the tile access
// protocol (1 get per dense tile, 3 gets per sparse tile).

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <optional>

#include "rdmm/fabric.hpp"
#include "rdmm/tile.hpp"

namespace rdmm {

struct ProcGrid {
  rank_t pr = 1, pc = 1;

  rank_t nranks() const { return pr * pc; }
  // Row-major cyclic tile -> rank mapping.
  rank_t owner(std::uint32_t i, std::uint32_t j) const {
    return (i % pr) * pc + (j % pc);
  }
  bool square() const { return pr == pc; }

  static ProcGrid square_of(rank_t p) {
    rank_t s = static_cast<rank_t>(std::lround(std::sqrt(double(p))));
    if (s * s != p)
      throw fabric_error("processor count is not a perfect square");
    return {s, s};
  }
};

namespace detail {

struct TileGeom {
  std::uint64_t m = 0, n = 0;    // global dims
  std::uint32_t tm = 0, tn = 0;  // tile dims (edge tiles may be smaller)
  std::uint32_t M = 0, N = 0;    // tile grid dims

  TileGeom() = default;
  TileGeom(std::uint64_t m, std::uint64_t n, std::uint32_t tm, std::uint32_t tn)
      : m(m), n(n), tm(tm), tn(tn) {
    if (tm == 0 || tn == 0) throw dimension_error("tile dims must be positive");
    M = static_cast<std::uint32_t>((m + tm - 1) / tm);
    N = static_cast<std::uint32_t>((n + tn - 1) / tn);
  }

  std::uint32_t tile_rows(std::uint32_t i) const {
    return static_cast<std::uint32_t>(
        std::min<std::uint64_t>(tm, m - std::uint64_t(i) * tm));
  }
  std::uint32_t tile_cols(std::uint32_t j) const {
    return static_cast<std::uint32_t>(
        std::min<std::uint64_t>(tn, n - std::uint64_t(j) * tn));
  }
  std::size_t idx(std::uint32_t i, std::uint32_t j) const {
    return std::size_t(i) * N + j;
  }
  void check(std::uint32_t i, std::uint32_t j) const {
    if (i >= M || j >= N) throw dimension_error("tile index out of range");
  }
};

}  // namespace detail

// Future for an in-flight tile fetch.
template <typename TileT>
class TileFuture {
 public:
  TileFuture(TileT tile, std::vector<Fabric::TransferHandle> handles,
             RankCtx* ctx)
      : tile_(std::move(tile)), handles_(std::move(handles)), ctx_(ctx) {}

  TileT get() {
    for (auto& h : handles_) ctx_->wait(h);
    return std::move(tile_);
  }

 private:
  TileT tile_;
  std::vector<Fabric::TransferHandle> handles_;
  RankCtx* ctx_;
};

// Distributed dense matrix.  The directory holds one GlobalPtr per tile and
// is identical on all ranks after collective construction.
template <typename T>
class DistDense {
 public:
  DistDense(Fabric& f, std::uint64_t m, std::uint64_t n, std::uint32_t tm,
            std::uint32_t tn, ProcGrid grid, int matrix_id = 0)
      : fabric_(&f), geom_(m, n, tm, tn), grid_(grid), matrix_id_(matrix_id) {
    if (grid.nranks() != f.nranks())
      throw fabric_error("processor grid does not match fabric rank count");
    dir_.resize(std::size_t(geom_.M) * geom_.N);
  }

  const detail::TileGeom& geom() const { return geom_; }
  const ProcGrid& grid() const { return grid_; }
  std::uint32_t tile_grid_rows() const { return geom_.M; }
  std::uint32_t tile_grid_cols() const { return geom_.N; }
  rank_t owner(std::uint32_t i, std::uint32_t j) const {
    return grid_.owner(i, j);
  }
  int matrix_id() const { return matrix_id_; }

  // Collective.  fill(i, j) -> DenseTile for owned tiles; nullptr fill zeros.
  void init(RankCtx& ctx,
            const std::function<DenseTile<T>(std::uint32_t, std::uint32_t)>&
                fill = nullptr) {
    for (std::uint32_t i = 0; i < geom_.M; ++i) {
      for (std::uint32_t j = 0; j < geom_.N; ++j) {
        if (owner(i, j) != ctx.rank()) continue;
        std::uint32_t r = geom_.tile_rows(i), c = geom_.tile_cols(j);
        GlobalPtr p = ctx.alloc(std::size_t(r) * c * sizeof(T));
        if (fill) {
          DenseTile<T> t = fill(i, j);
          if (t.rows != r || t.cols != c)
            throw dimension_error("init fill produced wrong tile dims");
          ctx.put(std::as_bytes(std::span{t.values}), p);
        }
        dir_[geom_.idx(i, j)] = p;
      }
    }
    ctx.barrier();
  }

  // Collective; scatters a global row-major array.
  void init_from_global(RankCtx& ctx, const std::vector<T>& global) {
    if (global.size() != geom_.m * geom_.n)
      throw dimension_error("global array size mismatch");
    init(ctx, [&](std::uint32_t i, std::uint32_t j) {
      DenseTile<T> t(geom_.tile_rows(i), geom_.tile_cols(j));
      for (std::uint32_t r = 0; r < t.rows; ++r)
        for (std::uint32_t c = 0; c < t.cols; ++c)
          t.at(r, c) = global[(std::uint64_t(i) * geom_.tm + r) * geom_.n +
                              std::uint64_t(j) * geom_.tn + c];
      return t;
    });
  }

  // One fabric get per dense tile.
  DenseTile<T> get_tile(RankCtx& ctx, std::uint32_t i, std::uint32_t j) const {
    geom_.check(i, j);
    GlobalPtr p = dir_[geom_.idx(i, j)];
    DenseTile<T> t(geom_.tile_rows(i), geom_.tile_cols(j));
    ctx.get(p, std::as_writable_bytes(std::span{t.values}));
    ctx.record_tile_fetch(p.rank, matrix_id_, i, j);
    return t;
  }

  TileFuture<DenseTile<T>> async_get_tile(RankCtx& ctx, std::uint32_t i,
                                          std::uint32_t j) const {
    geom_.check(i, j);
    GlobalPtr p = dir_[geom_.idx(i, j)];
    DenseTile<T> t(geom_.tile_rows(i), geom_.tile_cols(j));
    std::vector<Fabric::TransferHandle> hs;
    hs.push_back(ctx.get_nb(p, std::as_writable_bytes(std::span{t.values})));
    ctx.record_tile_fetch(p.rank, matrix_id_, i, j);
    return TileFuture<DenseTile<T>>(std::move(t), std::move(hs), &ctx);
  }

  // Direct mutable access to an owned tile; no fabric traffic.
  DenseView<T> tile_ref(RankCtx& ctx, std::uint32_t i, std::uint32_t j) {
    geom_.check(i, j);
    if (owner(i, j) != ctx.rank())
      throw fabric_error("tile_ref: caller does not own tile");
    GlobalPtr p = dir_[geom_.idx(i, j)];
    DenseView<T> v;
    v.rows = geom_.tile_rows(i);
    v.cols = geom_.tile_cols(j);
    v.values = reinterpret_cast<T*>(
        const_cast<std::byte*>(fabric_->raw(p)));
    return v;
  }

  // Host-side gather for verification and reporting; bypasses traffic.
  std::vector<T> to_global() const {
    std::vector<T> g(geom_.m * geom_.n, T{});
    for (std::uint32_t i = 0; i < geom_.M; ++i) {
      for (std::uint32_t j = 0; j < geom_.N; ++j) {
        GlobalPtr p = dir_[geom_.idx(i, j)];
        const T* vals = reinterpret_cast<const T*>(fabric_->raw(p));
        std::uint32_t r = geom_.tile_rows(i), c = geom_.tile_cols(j);
        for (std::uint32_t rr = 0; rr < r; ++rr)
          for (std::uint32_t cc = 0; cc < c; ++cc)
            g[(std::uint64_t(i) * geom_.tm + rr) * geom_.n +
              std::uint64_t(j) * geom_.tn + cc] = vals[std::size_t(rr) * c + cc];
      }
    }
    return g;
  }

 private:
  Fabric* fabric_;
  detail::TileGeom geom_;
  ProcGrid grid_;
  int matrix_id_;
  std::vector<GlobalPtr> dir_;
};

// Distributed CSR matrix.  The directory holds three GlobalPtrs per tile
// (values, row_ptr, col_idx) plus the tile's nnz; only the owner mutates a
// tile, via replace_tile + collective renew_tiles.
template <typename T>
class DistSparse {
 public:
  struct Entry {
    GlobalPtr values, row_ptr, col_idx;
    std::uint64_t nnz = 0;
  };

  DistSparse(Fabric& f, std::uint64_t m, std::uint64_t n, std::uint32_t tm,
             std::uint32_t tn, ProcGrid grid, int matrix_id = 0)
      : fabric_(&f), geom_(m, n, tm, tn), grid_(grid), matrix_id_(matrix_id) {
    if (grid.nranks() != f.nranks())
      throw fabric_error("processor grid does not match fabric rank count");
    dir_.resize(std::size_t(geom_.M) * geom_.N);
    pending_.resize(f.nranks());
  }

  const detail::TileGeom& geom() const { return geom_; }
  const ProcGrid& grid() const { return grid_; }
  std::uint32_t tile_grid_rows() const { return geom_.M; }
  std::uint32_t tile_grid_cols() const { return geom_.N; }
  rank_t owner(std::uint32_t i, std::uint32_t j) const {
    return grid_.owner(i, j);
  }
  int matrix_id() const { return matrix_id_; }
  std::uint64_t tile_nnz(std::uint32_t i, std::uint32_t j) const {
    return dir_[geom_.idx(i, j)].nnz;
  }

  // Collective.  fill(i, j) -> CsrTile for owned tiles; nullptr fills empty.
  void init(RankCtx& ctx,
            const std::function<CsrTile<T>(std::uint32_t, std::uint32_t)>&
                fill = nullptr) {
    for (std::uint32_t i = 0; i < geom_.M; ++i) {
      for (std::uint32_t j = 0; j < geom_.N; ++j) {
        if (owner(i, j) != ctx.rank()) continue;
        CsrTile<T> t = fill ? fill(i, j)
                            : CsrTile<T>(geom_.tile_rows(i), geom_.tile_cols(j));
        if (t.rows != geom_.tile_rows(i) || t.cols != geom_.tile_cols(j))
          throw dimension_error("init fill produced wrong tile dims");
        dir_[geom_.idx(i, j)] = store_tile(ctx, t);
      }
    }
    ctx.barrier();
  }

  // Collective; scatters a global CSR matrix.
  void init_from_global(RankCtx& ctx, const CsrTile<T>& global) {
    if (global.rows != geom_.m || global.cols != geom_.n)
      throw dimension_error("global matrix dims mismatch");
    init(ctx, [&](std::uint32_t i, std::uint32_t j) {
      return extract_tile(global, i, j);
    });
  }

  CsrTile<T> extract_tile(const CsrTile<T>& global, std::uint32_t i,
                          std::uint32_t j) const {
    CsrTile<T> t(geom_.tile_rows(i), geom_.tile_cols(j));
    std::uint64_t r0 = std::uint64_t(i) * geom_.tm;
    std::uint64_t c0 = std::uint64_t(j) * geom_.tn;
    for (std::uint32_t r = 0; r < t.rows; ++r) {
      index_t gr = static_cast<index_t>(r0 + r);
      for (index_t s = global.row_ptr[gr]; s < global.row_ptr[gr + 1]; ++s) {
        std::uint64_t gc = global.col_idx[s];
        if (gc >= c0 && gc < c0 + t.cols) {
          t.col_idx.push_back(static_cast<index_t>(gc - c0));
          t.values.push_back(global.values[s]);
        }
      }
      t.row_ptr[r + 1] = static_cast<index_t>(t.col_idx.size());
    }
    return t;
  }

  // Three fabric gets per sparse tile (row_ptr, col_idx, values).
  CsrTile<T> get_tile(RankCtx& ctx, std::uint32_t i, std::uint32_t j) const {
    geom_.check(i, j);
    const Entry& e = dir_[geom_.idx(i, j)];
    CsrTile<T> t(geom_.tile_rows(i), geom_.tile_cols(j));
    t.col_idx.resize(e.nnz);
    t.values.resize(e.nnz);
    ctx.get(e.row_ptr, std::as_writable_bytes(std::span{t.row_ptr}));
    ctx.get(e.col_idx, std::as_writable_bytes(std::span{t.col_idx}));
    ctx.get(e.values, std::as_writable_bytes(std::span{t.values}));
    ctx.record_tile_fetch(e.values.rank, matrix_id_, i, j);
    return t;
  }

  TileFuture<CsrTile<T>> async_get_tile(RankCtx& ctx, std::uint32_t i,
                                        std::uint32_t j) const {
    geom_.check(i, j);
    const Entry& e = dir_[geom_.idx(i, j)];
    CsrTile<T> t(geom_.tile_rows(i), geom_.tile_cols(j));
    t.col_idx.resize(e.nnz);
    t.values.resize(e.nnz);
    std::vector<Fabric::TransferHandle> hs;
    hs.push_back(
        ctx.get_nb(e.row_ptr, std::as_writable_bytes(std::span{t.row_ptr})));
    hs.push_back(
        ctx.get_nb(e.col_idx, std::as_writable_bytes(std::span{t.col_idx})));
    hs.push_back(
        ctx.get_nb(e.values, std::as_writable_bytes(std::span{t.values})));
    ctx.record_tile_fetch(e.values.rank, matrix_id_, i, j);
    return TileFuture<CsrTile<T>>(std::move(t), std::move(hs), &ctx);
  }

  // Read-only view of an owned tile; no fabric traffic.
  CsrView<T> tile_ref(RankCtx& ctx, std::uint32_t i, std::uint32_t j) const {
    geom_.check(i, j);
    if (owner(i, j) != ctx.rank())
      throw fabric_error("tile_ref: caller does not own tile");
    const Entry& e = dir_[geom_.idx(i, j)];
    CsrView<T> v;
    v.rows = geom_.tile_rows(i);
    v.cols = geom_.tile_cols(j);
    v.row_ptr = reinterpret_cast<const index_t*>(fabric_->raw(e.row_ptr));
    v.col_idx = reinterpret_cast<const index_t*>(fabric_->raw(e.col_idx));
    v.values = reinterpret_cast<const T*>(fabric_->raw(e.values));
    return v;
  }

  // Owner stages a new tile; remote readers keep seeing the old one until
  // the collective renew_tiles.
  void replace_tile(RankCtx& ctx, std::uint32_t i, std::uint32_t j,
                    const CsrTile<T>& t) {
    geom_.check(i, j);
    if (owner(i, j) != ctx.rank())
      throw fabric_error("replace_tile: caller does not own tile");
    if (t.rows != geom_.tile_rows(i) || t.cols != geom_.tile_cols(j))
      throw dimension_error("replace_tile: wrong tile dims");
    pending_[ctx.rank()].push_back({geom_.idx(i, j), store_tile(ctx, t)});
  }

  // Collective; publishes staged tiles to every directory and frees the old
  // allocations.
  void renew_tiles(RankCtx& ctx) {
    ctx.barrier();
    for (auto& [idx, entry] : pending_[ctx.rank()]) {
      Entry old = dir_[idx];
      dir_[idx] = entry;
      ctx.free(old.values);
      ctx.free(old.row_ptr);
      ctx.free(old.col_idx);
    }
    pending_[ctx.rank()].clear();
    ctx.barrier();
  }

  // Host-side gather; bypasses traffic.
  CsrTile<T> to_global() const {
    std::vector<std::tuple<index_t, index_t, T>> coo;
    for (std::uint32_t i = 0; i < geom_.M; ++i) {
      for (std::uint32_t j = 0; j < geom_.N; ++j) {
        const Entry& e = dir_[geom_.idx(i, j)];
        auto* rp = reinterpret_cast<const index_t*>(fabric_->raw(e.row_ptr));
        auto* ci = reinterpret_cast<const index_t*>(fabric_->raw(e.col_idx));
        auto* vv = reinterpret_cast<const T*>(fabric_->raw(e.values));
        std::uint32_t rows = geom_.tile_rows(i);
        for (std::uint32_t r = 0; r < rows; ++r)
          for (index_t s = rp[r]; s < rp[r + 1]; ++s)
            coo.emplace_back(static_cast<index_t>(std::uint64_t(i) * geom_.tm + r),
                             static_cast<index_t>(std::uint64_t(j) * geom_.tn + ci[s]),
                             vv[s]);
      }
    }
    return CsrTile<T>::from_coo(static_cast<index_t>(geom_.m),
                                static_cast<index_t>(geom_.n), std::move(coo));
  }

 private:
  Entry store_tile(RankCtx& ctx, const CsrTile<T>& t) {
    Entry e;
    e.nnz = t.nnz();
    e.row_ptr = ctx.alloc(t.row_ptr.size() * sizeof(index_t));
    e.col_idx = ctx.alloc(t.col_idx.size() * sizeof(index_t));
    e.values = ctx.alloc(t.values.size() * sizeof(T));
    ctx.put(std::as_bytes(std::span{t.row_ptr}), e.row_ptr);
    ctx.put(std::as_bytes(std::span{t.col_idx}), e.col_idx);
    ctx.put(std::as_bytes(std::span{t.values}), e.values);
    return e;
  }

  Fabric* fabric_;
  detail::TileGeom geom_;
  ProcGrid grid_;
  int matrix_id_;
  std::vector<Entry> dir_;
  std::vector<std::vector<std::pair<std::size_t, Entry>>> pending_;
};

// ---------------------------------------------------------------------------
// Contribution protocol: producers serialize a partial-result tile into their
// shared heap and push a GlobalPtr to the C owner's queue; the owner fetches
// the payload, accumulates it, and sets a per-contribution consumed flag so
// the producer can reclaim the allocation.

namespace contrib {

struct Header {
  std::int64_t consumed = 0;  // set to 1 by the consumer, via put
  std::uint32_t i = 0, j = 0;
  std::uint32_t rows = 0, cols = 0;
  std::uint64_t nnz = 0;  // ~0 marks a dense payload
};

inline constexpr std::uint64_t kDenseTag = ~std::uint64_t{0};

inline std::size_t align8(std::size_t n) { return (n + 7) & ~std::size_t{7}; }

template <typename T>
GlobalPtr push_dense(RankCtx& ctx, Fabric::queue_id q, std::uint32_t i,
                     std::uint32_t j, const DenseTile<T>& t) {
  Header h{0, i, j, t.rows, t.cols, kDenseTag};
  std::size_t body = t.values.size() * sizeof(T);
  GlobalPtr p = ctx.alloc(sizeof(Header) + body);
  std::vector<std::byte> buf(p.length);
  std::memcpy(buf.data(), &h, sizeof(Header));
  std::memcpy(buf.data() + sizeof(Header), t.values.data(), body);
  ctx.put(buf, p);
  ctx.queue_push(q, p);
  return p;
}

template <typename T>
GlobalPtr push_sparse(RankCtx& ctx, Fabric::queue_id q, std::uint32_t i,
                      std::uint32_t j, const CsrTile<T>& t) {
  Header h{0, i, j, t.rows, t.cols, t.nnz()};
  std::size_t rp = align8(t.row_ptr.size() * sizeof(index_t));
  std::size_t ci = align8(t.col_idx.size() * sizeof(index_t));
  std::size_t vv = t.values.size() * sizeof(T);
  GlobalPtr p = ctx.alloc(sizeof(Header) + rp + ci + vv);
  std::vector<std::byte> buf(p.length, std::byte{0});
  std::memcpy(buf.data(), &h, sizeof(Header));
  std::byte* cur = buf.data() + sizeof(Header);
  std::memcpy(cur, t.row_ptr.data(), t.row_ptr.size() * sizeof(index_t));
  cur += rp;
  std::memcpy(cur, t.col_idx.data(), t.col_idx.size() * sizeof(index_t));
  cur += ci;
  std::memcpy(cur, t.values.data(), vv);
  ctx.put(buf, p);
  ctx.queue_push(q, p);
  return p;
}

// Fetched contribution, decoded.
template <typename T>
struct Received {
  std::uint32_t i, j;
  bool dense;
  DenseTile<T> dense_tile;
  CsrTile<T> sparse_tile;
};

template <typename T>
Received<T> fetch(RankCtx& ctx, GlobalPtr p) {
  std::vector<std::byte> buf(p.length);
  ctx.get(p, buf);
  Header h;
  std::memcpy(&h, buf.data(), sizeof(Header));
  Received<T> r;
  r.i = h.i;
  r.j = h.j;
  r.dense = (h.nnz == kDenseTag);
  const std::byte* cur = buf.data() + sizeof(Header);
  if (r.dense) {
    r.dense_tile = DenseTile<T>(h.rows, h.cols);
    std::memcpy(r.dense_tile.values.data(), cur,
                r.dense_tile.values.size() * sizeof(T));
  } else {
    CsrTile<T> t(h.rows, h.cols);
    t.col_idx.resize(h.nnz);
    t.values.resize(h.nnz);
    std::memcpy(t.row_ptr.data(), cur, t.row_ptr.size() * sizeof(index_t));
    cur += align8(t.row_ptr.size() * sizeof(index_t));
    std::memcpy(t.col_idx.data(), cur, t.col_idx.size() * sizeof(index_t));
    cur += align8(t.col_idx.size() * sizeof(index_t));
    std::memcpy(t.values.data(), cur, t.values.size() * sizeof(T));
    r.sparse_tile = std::move(t);
  }
  // Mark consumed so the producer can free the allocation.
  std::int64_t one = 1;
  ctx.put(std::as_bytes(std::span{&one, 1}),
          GlobalPtr{p.rank, p.offset + offsetof(Header, consumed),
                    sizeof(std::int64_t)});
  return r;
}

// Producer side: true once the consumer has set the flag.
inline bool consumed(RankCtx& ctx, GlobalPtr p) {
  std::int64_t flag = 0;
  ctx.get(GlobalPtr{p.rank, p.offset + offsetof(Header, consumed),
                    sizeof(std::int64_t)},
          std::as_writable_bytes(std::span{&flag, 1}));
  return flag != 0;
}

}  // namespace contrib

}  // namespace rdmm

#endif  // RDMM_DISTMAT_HPP
