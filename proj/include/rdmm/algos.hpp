#ifndef RDMM_ALGOS_HPP
#define RDMM_ALGOS_HPP

// Distributed multiplication algorithms over the fabric: bulk-synchronous
// SUMMA, RDMA stationary C/A/B, random workstealing, and locality-aware
// workstealing.  Each variant works for SpMM (sparse x dense) and SpGEMM
// (sparse x sparse).

#include <chrono>
#include <cmath>
#include <map>
#include <random>

#include "rdmm/distmat.hpp"

namespace rdmm {

enum class Variant {
  summa_bsp,
  stationary_c,
  stationary_a,
  stationary_b,
  ws_random,
  ws_locality,
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::summa_bsp: return "summa_bsp";
    case Variant::stationary_c: return "stationary_c";
    case Variant::stationary_a: return "stationary_a";
    case Variant::stationary_b: return "stationary_b";
    case Variant::ws_random: return "ws_random";
    case Variant::ws_locality: return "ws_locality";
  }
  return "?";
}

struct RunOptions {
  Variant variant = Variant::stationary_c;
  bool prefetch = true;
  bool offset = true;
  // Base distribution for ws variants (stationary_a or stationary_c;
  // ws_random supports stationary_a only).
  Variant ws_base = Variant::stationary_a;
  std::uint64_t seed = 0;
  double delay_ns_per_flop = 0.0;    // injected compute slowdown
  double random_delay_ms_max = 0.0;  // uniform extra delay per multiply
  bool record_events = true;
  bool record_triples = false;
};

struct Triple {
  std::uint32_t i, j, k;
  bool operator==(const Triple&) const = default;
  auto operator<=>(const Triple&) const = default;
};

struct RankStats {
  std::uint64_t multiplies = 0;
  std::uint64_t queue_pushes = 0;
  std::uint64_t queue_pops = 0;
  std::uint64_t steals = 0;
  std::uint64_t steals_with_local_component = 0;
  std::uint64_t bytes_self = 0;
  std::uint64_t bytes_on_node = 0;
  std::uint64_t bytes_off_node = 0;
  FlopMeter meter;
  double pre_drain_seconds = 0;  // time until own work finished
  double total_seconds = 0;
};

struct RunReport {
  Variant variant{};
  std::vector<RankStats> per_rank;
  std::vector<std::vector<Triple>> triples;  // per rank, when recorded
  std::vector<std::vector<Event>> events;    // per rank
  double wall_seconds = 0;
  double checksum = 0;

  std::uint64_t total_flops() const {
    std::uint64_t f = 0;
    for (auto& r : per_rank) f += r.meter.flops;
    return f;
  }
  std::uint64_t total_multiplies() const {
    std::uint64_t n = 0;
    for (auto& r : per_rank) n += r.multiplies;
    return n;
  }
  std::uint64_t total_steals() const {
    std::uint64_t n = 0;
    for (auto& r : per_rank) n += r.steals;
    return n;
  }
};

class protocol_error : public fabric_error {
 public:
  explicit protocol_error(const std::string& w) : fabric_error(w) {}
};

// Fabric-resident grid of fetch-add counters used for work reservations.
class WorkGrid {
 public:
  WorkGrid(std::uint32_t d0, std::uint32_t d1, std::uint32_t d2 = 1)
      : d0_(d0), d1_(d1), d2_(d2), cells_(std::size_t(d0) * d1 * d2) {}

  // Collective.  owner(linear index) decides which rank hosts each counter.
  template <typename OwnerFn>
  void init(RankCtx& ctx, OwnerFn owner) {
    for (std::size_t c = 0; c < cells_.size(); ++c) {
      if (owner(c) != ctx.rank()) continue;
      GlobalPtr p = ctx.alloc(sizeof(std::int64_t));
      ctx.put_i64(0, p);
      cells_[c] = p;
    }
    ctx.barrier();
  }

  std::size_t linear(std::uint32_t a, std::uint32_t b,
                     std::uint32_t c = 0) const {
    return (std::size_t(a) * d1_ + b) * d2_ + c;
  }
  GlobalPtr cell(std::uint32_t a, std::uint32_t b, std::uint32_t c = 0) const {
    return cells_[linear(a, b, c)];
  }
  std::size_t size() const { return cells_.size(); }

 private:
  std::uint32_t d0_, d1_, d2_;
  std::vector<GlobalPtr> cells_;
};

namespace detail {

template <typename M>
inline constexpr bool is_sparse_mat = false;
template <typename T>
inline constexpr bool is_sparse_mat<DistSparse<T>> = true;

template <typename T, typename BMat, typename CMat>
void check_conformant(const DistSparse<T>& A, const BMat& B, const CMat& C) {
  if (A.geom().n != B.geom().m || A.geom().m != C.geom().m ||
      B.geom().n != C.geom().n)
    throw dimension_error("global dimensions not conformant");
  if (A.geom().tn != B.geom().tm || A.geom().tm != C.geom().tm ||
      B.geom().tn != C.geom().tn)
    throw dimension_error("tile dimensions not conformant");
}

// Per-rank execution context shared by all variants.
template <typename T, typename BMat, typename CMat>
struct RankRun {
  static constexpr bool sparse_c = is_sparse_mat<CMat>;

  RankCtx& ctx;
  DistSparse<T>& A;
  BMat& B;
  CMat& C;
  const RunOptions& opts;
  RankStats& stats;
  std::vector<Triple>* triples;
  const std::vector<Fabric::queue_id>* queues;  // queues[r] owned by rank r
  std::mt19937_64 rng;

  std::uint64_t expected = 0;  // contributions this rank must drain
  std::uint64_t received = 0;
  std::vector<GlobalPtr> outstanding;  // pushed contributions, to reclaim
  std::map<std::size_t, CsrTile<T>> acc;  // sparse C accumulators, by tile idx
  std::int64_t step = 0;

  RankRun(RankCtx& ctx, DistSparse<T>& A, BMat& B, CMat& C,
          const RunOptions& opts, RankStats& stats, std::vector<Triple>* tr,
          const std::vector<Fabric::queue_id>* queues)
      : ctx(ctx),
        A(A),
        B(B),
        C(C),
        opts(opts),
        stats(stats),
        triples(tr),
        queues(queues),
        rng(opts.seed * 0x9e3779b97f4a7c15ull + ctx.rank() + 1) {
    if constexpr (sparse_c) {
      // Seed accumulators with C's initial content.
      for (std::uint32_t i = 0; i < C.tile_grid_rows(); ++i)
        for (std::uint32_t j = 0; j < C.tile_grid_cols(); ++j)
          if (C.owner(i, j) == ctx.rank()) {
            CsrView<T> v = C.tile_ref(ctx, i, j);
            CsrTile<T> t(v.rows, v.cols);
            t.row_ptr.assign(v.row_ptr, v.row_ptr + v.rows + 1);
            t.col_idx.assign(v.col_idx, v.col_idx + v.nnz());
            t.values.assign(v.values, v.values + v.nnz());
            acc.emplace(C.geom().idx(i, j), std::move(t));
          }
    }
  }

  std::uint32_t Mt() const { return C.tile_grid_rows(); }
  std::uint32_t Nt() const { return C.tile_grid_cols(); }
  std::uint32_t Kt() const { return A.tile_grid_cols(); }

  std::uint64_t owned_c_tiles() const {
    std::uint64_t n = 0;
    for (std::uint32_t i = 0; i < Mt(); ++i)
      for (std::uint32_t j = 0; j < Nt(); ++j)
        if (C.owner(i, j) == ctx.rank()) ++n;
    return n;
  }

  void injected_delay(std::uint64_t flops) {
    double ms = opts.delay_ns_per_flop * double(flops) * 1e-6;
    if (opts.random_delay_ms_max > 0) {
      std::uniform_real_distribution<double> d(0, opts.random_delay_ms_max);
      ms += d(rng);
    }
    if (ms > 0)
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
  }

  void note_multiply(std::uint32_t i, std::uint32_t j, std::uint32_t k,
                     const FlopMeter& m) {
    stats.multiplies++;
    stats.meter += m;
    ctx.emit_compute(m.flops);
    if (triples) triples->push_back({i, j, k});
    injected_delay(m.flops);
  }

  // --- local multiply producing a contribution tile ----------------------

  template <typename BTile>
  auto multiply_tiles(CsrView<T> a, const BTile& b, std::uint32_t i,
                      std::uint32_t j, std::uint32_t k) {
    if constexpr (sparse_c) {
      auto [c, m] = spgemm_local(a, CsrView<T>(b));
      note_multiply(i, j, k, m);
      return c;
    } else {
      DenseTile<T> c(a.rows, b.cols);
      DenseView<T> cv(c);
      FlopMeter m = spmm_local(a, DenseConstView<T>(b), cv);
      note_multiply(i, j, k, m);
      return c;
    }
  }

  // Accumulate a*b directly into the owned C tile (i,j).
  template <typename BTile>
  void multiply_into_owned(CsrView<T> a, const BTile& b, std::uint32_t i,
                           std::uint32_t j, std::uint32_t k) {
    if constexpr (sparse_c) {
      auto [c, m] = spgemm_local(a, CsrView<T>(b));
      auto& t = acc.at(C.geom().idx(i, j));
      t = csr_add(CsrView<T>(t), CsrView<T>(c));
      note_multiply(i, j, k, m);
    } else {
      DenseView<T> cv = C.tile_ref(ctx, i, j);
      FlopMeter m = spmm_local(a, DenseConstView<T>(b), cv);
      note_multiply(i, j, k, m);
    }
  }

  // --- queue-based accumulation ------------------------------------------

  void push_contribution(std::uint32_t i, std::uint32_t j, const auto& tile) {
    Fabric::queue_id q = (*queues)[C.owner(i, j)];
    GlobalPtr p;
    if constexpr (sparse_c)
      p = contrib::push_sparse(ctx, q, i, j, tile);
    else
      p = contrib::push_dense(ctx, q, i, j, tile);
    outstanding.push_back(p);
    stats.queue_pushes++;
  }

  bool drain_one() {
    auto e = ctx.queue_pop((*queues)[ctx.rank()]);
    if (!e) return false;
    auto r = contrib::fetch<T>(ctx, *e);
    if constexpr (sparse_c) {
      auto& t = acc.at(C.geom().idx(r.i, r.j));
      t = csr_add(CsrView<T>(t), CsrView<T>(r.sparse_tile));
    } else {
      DenseView<T> cv = C.tile_ref(ctx, r.i, r.j);
      dense_add_into(cv, DenseConstView<T>(r.dense_tile));
    }
    stats.queue_pops++;
    if (++received > expected)
      throw protocol_error("more contributions received than expected");
    return true;
  }

  void drain_available() {
    while (drain_one()) {
    }
  }

  void drain_to_expected() {
    while (received < expected) {
      if (!drain_one()) std::this_thread::yield();
    }
  }

  // Reclaim contribution payloads once consumers have flagged them.
  void reclaim_contributions() {
    for (GlobalPtr p : outstanding) {
      while (!contrib::consumed(ctx, p)) std::this_thread::yield();
      ctx.free(p);
    }
    outstanding.clear();
  }

  // Publish sparse accumulators back into C; collective.
  void publish() {
    if constexpr (sparse_c) {
      for (auto& [idx, t] : acc) {
        std::uint32_t i = static_cast<std::uint32_t>(idx / C.geom().N);
        std::uint32_t j = static_cast<std::uint32_t>(idx % C.geom().N);
        C.replace_tile(ctx, i, j, t);
      }
      C.renew_tiles(ctx);
    } else {
      ctx.barrier();
    }
  }

  // Fetch an A tile: owner reads in place, everyone else pays fabric gets.
  CsrTile<T> fetch_a(std::uint32_t i, std::uint32_t k) {
    return A.get_tile(ctx, i, k);
  }

  auto fetch_b(std::uint32_t k, std::uint32_t j) { return B.get_tile(ctx, k, j); }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Algorithm bodies (one rank's view).  All are collective.

namespace algodetail {

using detail::RankRun;

// Bulk-synchronous SUMMA: one phase per k step, emulated broadcast via gets,
// barrier between phases.
template <typename T, typename BMat, typename CMat>
void summa_bsp(RankRun<T, BMat, CMat>& run) {
  auto& ctx = run.ctx;
  if (!run.C.grid().square())
    throw fabric_error("summa_bsp requires a square processor grid");
  for (std::uint32_t k = 0; k < run.Kt(); ++k) {
    ctx.set_phase(k);
    // Per-phase tile caches emulate the row/column broadcast: each rank
    // receives a given tile at most once per phase.
    std::map<std::uint32_t, CsrTile<T>> a_cache;
    std::map<std::uint32_t, decltype(run.fetch_b(0, 0))> b_cache;
    for (std::uint32_t i = 0; i < run.Mt(); ++i) {
      for (std::uint32_t j = 0; j < run.Nt(); ++j) {
        if (run.C.owner(i, j) != ctx.rank()) continue;
        auto ai = a_cache.find(i);
        if (ai == a_cache.end())
          ai = a_cache.emplace(i, run.fetch_a(i, k)).first;
        auto bj = b_cache.find(j);
        if (bj == b_cache.end())
          bj = b_cache.emplace(j, run.fetch_b(k, j)).first;
        run.multiply_into_owned(CsrView<T>(ai->second), bj->second, i, j, k);
      }
    }
    ctx.barrier();
  }
  run.publish();
}

// Optimized RDMA stationary C: per owned C tile, iterate k with offset i+j,
// prefetching the next iteration's tiles; no inner synchronization.
template <typename T, typename BMat, typename CMat>
void stationary_c(RankRun<T, BMat, CMat>& run) {
  auto& ctx = run.ctx;
  const std::uint32_t K = run.Kt();
  for (std::uint32_t i = 0; i < run.Mt(); ++i) {
    for (std::uint32_t j = 0; j < run.Nt(); ++j) {
      if (run.C.owner(i, j) != ctx.rank()) continue;
      std::uint32_t koff = run.opts.offset ? (i + j) % K : 0;
      if (run.opts.prefetch) {
        ctx.set_phase(0);
        auto fa = run.A.async_get_tile(ctx, i, koff);
        auto fb = run.B.async_get_tile(ctx, koff, j);
        for (std::uint32_t k_ = 0; k_ < K; ++k_) {
          std::uint32_t k = (k_ + koff) % K;
          auto a = fa.get();
          auto b = fb.get();
          if (k_ + 1 < K) {
            std::uint32_t kn = (k_ + 1 + koff) % K;
            ctx.set_phase(k_ + 1);
            fa = run.A.async_get_tile(ctx, i, kn);
            fb = run.B.async_get_tile(ctx, kn, j);
          }
          run.multiply_into_owned(CsrView<T>(a), b, i, j, k);
        }
      } else {
        for (std::uint32_t k_ = 0; k_ < K; ++k_) {
          std::uint32_t k = (k_ + koff) % K;
          ctx.set_phase(k_);
          auto a = run.fetch_a(i, k);
          auto b = run.fetch_b(k, j);
          run.multiply_into_owned(CsrView<T>(a), b, i, j, k);
        }
      }
    }
  }
  ctx.barrier();
  run.publish();
}

// RDMA stationary A: owners of A tiles compute partial products and push
// contribution pointers to C owners' queues; owners interleave drains.
template <typename T, typename BMat, typename CMat>
void stationary_a(RankRun<T, BMat, CMat>& run) {
  auto& ctx = run.ctx;
  run.expected = run.Kt() * run.owned_c_tiles();
  const std::uint32_t N = run.Nt();
  for (std::uint32_t i = 0; i < run.Mt(); ++i) {
    for (std::uint32_t k = 0; k < run.Kt(); ++k) {
      if (run.A.owner(i, k) != ctx.rank()) continue;
      CsrView<T> a = run.A.tile_ref(ctx, i, k);
      std::uint32_t joff = run.opts.offset ? (i + k) % N : 0;
      for (std::uint32_t j_ = 0; j_ < N; ++j_) {
        std::uint32_t j = (j_ + joff) % N;
        ctx.set_phase(run.step++);
        auto b = run.fetch_b(k, j);
        auto c = run.multiply_tiles(a, b, i, j, k);
        run.push_contribution(i, j, c);
        run.drain_available();
      }
    }
  }
  run.drain_to_expected();
  ctx.barrier();
  run.reclaim_contributions();
  ctx.barrier();
  run.publish();
}

// RDMA stationary B: symmetric to stationary A, iteration offset k+j.
template <typename T, typename BMat, typename CMat>
void stationary_b(RankRun<T, BMat, CMat>& run) {
  auto& ctx = run.ctx;
  run.expected = run.Kt() * run.owned_c_tiles();
  const std::uint32_t M = run.Mt();
  for (std::uint32_t k = 0; k < run.Kt(); ++k) {
    for (std::uint32_t j = 0; j < run.Nt(); ++j) {
      if (run.B.owner(k, j) != ctx.rank()) continue;
      auto b = run.B.get_tile(ctx, k, j);  // self fetch, no network cost
      std::uint32_t ioff = run.opts.offset ? (k + j) % M : 0;
      for (std::uint32_t i_ = 0; i_ < M; ++i_) {
        std::uint32_t i = (i_ + ioff) % M;
        ctx.set_phase(run.step++);
        auto a = run.fetch_a(i, k);
        auto c = run.multiply_tiles(CsrView<T>(a), b, i, j, k);
        run.push_contribution(i, j, c);
        run.drain_available();
      }
    }
  }
  run.drain_to_expected();
  ctx.barrier();
  run.reclaim_contributions();
  ctx.barrier();
  run.publish();
}

// Random workstealing over a 2D reservation grid (stationary A base):
// reservation values claim j indices; after own tiles, scan all cells.
template <typename T, typename BMat, typename CMat>
void ws_random(RankRun<T, BMat, CMat>& run, const WorkGrid& grid2) {
  auto& ctx = run.ctx;
  run.expected = run.Kt() * run.owned_c_tiles();
  const std::uint32_t N = run.Nt();
  const std::uint32_t M = run.Mt(), K = run.Kt();

  auto attempt_work = [&](std::uint32_t i, std::uint32_t k) {
    bool is_owner = run.A.owner(i, k) == ctx.rank();
    std::optional<CsrTile<T>> a_copy;
    CsrView<T> a;
    bool have_a = false;
    for (;;) {
      std::int64_t v = ctx.fetch_add(grid2.cell(i, k), 1);
      if (v >= static_cast<std::int64_t>(N)) break;
      if (!have_a) {
        if (is_owner) {
          a = run.A.tile_ref(ctx, i, k);
        } else {
          a_copy = run.fetch_a(i, k);
          a = CsrView<T>(*a_copy);
        }
        have_a = true;
      }
      std::uint32_t j =
          (static_cast<std::uint32_t>(v) + (run.opts.offset ? (i + k) % N : 0)) %
          N;
      ctx.set_phase(run.step++);
      auto b = run.fetch_b(k, j);
      auto c = run.multiply_tiles(a, b, i, j, k);
      run.push_contribution(i, j, c);
      if (!is_owner) {
        run.stats.steals++;
      }
      run.drain_available();
    }
  };

  for (std::uint32_t i = 0; i < M; ++i)
    for (std::uint32_t k = 0; k < K; ++k)
      if (run.A.owner(i, k) == ctx.rank()) attempt_work(i, k);

  // Steal scan over the whole M*K grid, linearized from rank().
  std::size_t cells = std::size_t(M) * K;
  for (std::size_t idx = 0; idx < cells; ++idx) {
    std::size_t lin = (ctx.rank() + idx) % cells;
    std::uint32_t i = static_cast<std::uint32_t>(lin / K);
    std::uint32_t k = static_cast<std::uint32_t>(lin % K);
    run.drain_available();
    attempt_work(i, k);
  }

  run.drain_to_expected();
  ctx.barrier();
  run.reclaim_contributions();
  ctx.barrier();
  run.publish();
}

// Locality-aware workstealing over a 3D reservation grid: cell (i,j,k) is
// claimed with a fetch-add before executing C[i,j] += A[i,k]*B[k,j]; steal
// candidates must involve a locally owned component.
template <typename T, typename BMat, typename CMat>
void ws_locality(RankRun<T, BMat, CMat>& run, const WorkGrid& grid3) {
  auto& ctx = run.ctx;
  run.expected = run.Kt() * run.owned_c_tiles();
  const std::uint32_t M = run.Mt(), N = run.Nt(), K = run.Kt();

  auto owns_a = [&](std::uint32_t i, std::uint32_t k) {
    return run.A.owner(i, k) == ctx.rank();
  };
  auto owns_b = [&](std::uint32_t k, std::uint32_t j) {
    return run.B.owner(k, j) == ctx.rank();
  };
  auto owns_c = [&](std::uint32_t i, std::uint32_t j) {
    return run.C.owner(i, j) == ctx.rank();
  };

  bool base_a = run.opts.ws_base != Variant::stationary_c;
  auto base_owner = [&](std::uint32_t i, std::uint32_t j, std::uint32_t k) {
    return base_a ? run.A.owner(i, k) : run.C.owner(i, j);
  };

  // Executes (i,j,k) if this rank wins the reservation.
  auto try_execute = [&](std::uint32_t i, std::uint32_t j, std::uint32_t k,
                         bool stealing) {
    std::int64_t v = ctx.fetch_add(grid3.cell(i, j, k), 1);
    if (v != 0) return;
    ctx.set_phase(run.step++);
    std::optional<CsrTile<T>> a_copy;
    CsrView<T> a;
    if (owns_a(i, k)) {
      a = run.A.tile_ref(ctx, i, k);
    } else {
      a_copy = run.fetch_a(i, k);
      a = CsrView<T>(*a_copy);
    }
    auto b = run.fetch_b(k, j);
    auto c = run.multiply_tiles(a, b, i, j, k);
    run.push_contribution(i, j, c);
    if (stealing) {
      run.stats.steals++;
      if (owns_a(i, k) || owns_b(k, j) || owns_c(i, j))
        run.stats.steals_with_local_component++;
    }
  };

  // Base-distribution pass.
  if (base_a) {
    for (std::uint32_t i = 0; i < M; ++i)
      for (std::uint32_t k = 0; k < K; ++k) {
        if (!owns_a(i, k)) continue;
        std::uint32_t joff = run.opts.offset ? (i + k) % N : 0;
        for (std::uint32_t j_ = 0; j_ < N; ++j_) {
          std::uint32_t j = (j_ + joff) % N;
          try_execute(i, j, k, false);
          run.drain_available();
        }
      }
  } else {
    for (std::uint32_t i = 0; i < M; ++i)
      for (std::uint32_t j = 0; j < N; ++j) {
        if (!owns_c(i, j)) continue;
        std::uint32_t koff = run.opts.offset ? (i + j) % K : 0;
        for (std::uint32_t k_ = 0; k_ < K; ++k_) {
          std::uint32_t k = (k_ + koff) % K;
          try_execute(i, j, k, false);
          run.drain_available();
        }
      }
  }

  // Steal pass: scan all triples, restricted to locally owned components.
  std::size_t total = std::size_t(M) * N * K;
  for (std::size_t t = 0; t < total; ++t) {
    std::size_t lin = (ctx.rank() + t) % total;
    std::uint32_t i = static_cast<std::uint32_t>(lin / (std::size_t(N) * K));
    std::uint32_t j = static_cast<std::uint32_t>((lin / K) % N);
    std::uint32_t k = static_cast<std::uint32_t>(lin % K);
    if (base_owner(i, j, k) == ctx.rank()) continue;  // own work, done above
    if (!(owns_a(i, k) || owns_b(k, j) || owns_c(i, j))) continue;
    run.drain_available();
    try_execute(i, j, k, true);
  }

  run.drain_to_expected();
  ctx.barrier();
  run.reclaim_contributions();
  ctx.barrier();
  run.publish();
}

}  // namespace algodetail

// ---------------------------------------------------------------------------
// Driver.

// Order-insensitive checksum over tiles: sum of hash(i,j) * (tile value sum).
template <typename T>
double matrix_checksum(const DistDense<T>& m) {
  double s = 0;
  auto g = m.to_global();
  // fold per tile
  const auto& geom = m.geom();
  for (std::uint32_t i = 0; i < geom.M; ++i)
    for (std::uint32_t j = 0; j < geom.N; ++j) {
      double tile_sum = 0;
      for (std::uint32_t r = 0; r < geom.tile_rows(i); ++r)
        for (std::uint32_t c = 0; c < geom.tile_cols(j); ++c)
          tile_sum += double(
              g[(std::uint64_t(i) * geom.tm + r) * geom.n + std::uint64_t(j) * geom.tn + c]);
      s += double((i * 1000003u + j) % 8191 + 1) * tile_sum;
    }
  return s;
}

template <typename T>
double matrix_checksum(const DistSparse<T>& m) {
  auto g = m.to_global();
  const auto& geom = m.geom();
  std::vector<double> tile_sums(std::size_t(geom.M) * geom.N, 0.0);
  for (index_t r = 0; r < g.rows; ++r)
    for (index_t s = g.row_ptr[r]; s < g.row_ptr[r + 1]; ++s) {
      std::uint32_t i = static_cast<std::uint32_t>(r / geom.tm);
      std::uint32_t j = static_cast<std::uint32_t>(g.col_idx[s] / geom.tn);
      tile_sums[std::size_t(i) * geom.N + j] += double(g.values[s]);
    }
  double sum = 0;
  for (std::uint32_t i = 0; i < geom.M; ++i)
    for (std::uint32_t j = 0; j < geom.N; ++j)
      sum += double((i * 1000003u + j) % 8191 + 1) *
             tile_sums[std::size_t(i) * geom.N + j];
  return sum;
}

// Runs one distributed multiply C += A*B on an initialized fabric and
// matrices.  Collective machinery (queues, work grids) is created here.
template <typename T, typename BMat, typename CMat>
RunReport run_multiply(Fabric& f, DistSparse<T>& A, BMat& B, CMat& C,
                       const RunOptions& opts) {
  detail::check_conformant(A, B, C);
  const rank_t P = f.nranks();

  std::vector<Fabric::queue_id> queues;
  bool needs_queues = opts.variant == Variant::stationary_a ||
                      opts.variant == Variant::stationary_b ||
                      opts.variant == Variant::ws_random ||
                      opts.variant == Variant::ws_locality;
  if (needs_queues)
    for (rank_t r = 0; r < P; ++r)
      queues.push_back(f.create_queue(r, f.config().queue_capacity));

  std::uint32_t M = C.tile_grid_rows(), N = C.tile_grid_cols(),
                K = A.tile_grid_cols();
  std::optional<WorkGrid> grid2, grid3;
  if (opts.variant == Variant::ws_random) {
    if (opts.ws_base != Variant::stationary_a)
      throw fabric_error("ws_random supports the stationary_a base only");
    grid2.emplace(M, K);
  }
  if (opts.variant == Variant::ws_locality) grid3.emplace(M, N, K);

  RunReport report;
  report.variant = opts.variant;
  report.per_rank.resize(P);
  report.events.resize(P);
  report.triples.resize(P);

  auto t0 = std::chrono::steady_clock::now();
  run_ranks(f, [&](RankCtx& ctx) {
    if (opts.record_events) ctx.set_event_sink(&report.events[ctx.rank()]);
    if (grid2)
      grid2->init(ctx, [&](std::size_t lin) {
        return A.owner(static_cast<std::uint32_t>(lin / K),
                       static_cast<std::uint32_t>(lin % K));
      });
    if (grid3)
      grid3->init(ctx, [&](std::size_t lin) {
        return C.owner(static_cast<std::uint32_t>(lin / (std::size_t(N) * K)),
                       static_cast<std::uint32_t>((lin / K) % N));
      });
    detail::RankRun<T, BMat, CMat> run(
        ctx, A, B, C, opts, report.per_rank[ctx.rank()],
        opts.record_triples ? &report.triples[ctx.rank()] : nullptr,
        needs_queues ? &queues : nullptr);
    auto r0 = std::chrono::steady_clock::now();
    switch (opts.variant) {
      case Variant::summa_bsp: algodetail::summa_bsp(run); break;
      case Variant::stationary_c: algodetail::stationary_c(run); break;
      case Variant::stationary_a: algodetail::stationary_a(run); break;
      case Variant::stationary_b: algodetail::stationary_b(run); break;
      case Variant::ws_random: algodetail::ws_random(run, *grid2); break;
      case Variant::ws_locality: algodetail::ws_locality(run, *grid3); break;
    }
    auto r1 = std::chrono::steady_clock::now();
    report.per_rank[ctx.rank()].total_seconds =
        std::chrono::duration<double>(r1 - r0).count();
  });
  auto t1 = std::chrono::steady_clock::now();
  report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();

  // Per-rank byte accounting from the event streams.
  for (rank_t r = 0; r < P; ++r) {
    for (const Event& e : report.events[r]) {
      if (e.kind == Event::Kind::compute) continue;
      auto& st = report.per_rank[r];
      if (e.src == e.dst)
        st.bytes_self += e.bytes;
      else if (f.traffic().same_node(e.src, e.dst))
        st.bytes_on_node += e.bytes;
      else
        st.bytes_off_node += e.bytes;
    }
  }
  report.checksum = matrix_checksum(C);
  return report;
}

}  // namespace rdmm

#endif  // RDMM_ALGOS_HPP
