#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <vector>

#include "rdmm/algos.hpp"
#include "rdmm/gen.hpp"
#include "test_util.hpp"

using namespace rdmm;

namespace {

// Problem shape shared by most cases: edge tiles in every matrix, non-square
// tile grid content, square 2x2 processor grid.
constexpr std::uint64_t kM = 12, kK = 9, kN = 10;
constexpr std::uint32_t kTm = 4, kTk = 3, kTn = 4;

std::vector<double> densify(const CsrTile<double>& t) {
  std::vector<double> d(std::size_t(t.rows) * t.cols, 0.0);
  for (index_t r = 0; r < t.rows; ++r)
    for (index_t s = t.row_ptr[r]; s < t.row_ptr[r + 1]; ++s)
      d[std::size_t(r) * t.cols + t.col_idx[s]] += t.values[s];
  return d;
}

// Independent host-side oracle for C0 + A*B.
std::vector<double> oracle(const std::vector<double>& a,
                           const std::vector<double>& b,
                           const std::vector<double>& c0) {
  std::vector<double> c = c0;
  for (std::uint64_t i = 0; i < kM; ++i)
    for (std::uint64_t l = 0; l < kK; ++l)
      for (std::uint64_t j = 0; j < kN; ++j)
        c[i * kN + j] += a[i * kK + l] * b[l * kN + j];
  return c;
}

struct CaseResult {
  std::vector<double> c;     // dense image of the final C
  std::vector<double> want;  // oracle
  RunReport report;
};

CaseResult run_spmm(RunOptions opts, const CsrTile<double>* a_override = nullptr) {
  Fabric f({.nranks = 4, .heap_bytes = 4 << 20});
  ProcGrid g{2, 2};
  CsrTile<double> ga = a_override
                           ? *a_override
                           : random_csr<double>(kM, kK, 0.35, 5);
  DenseTile<double> gb = random_dense<double>(kK, kN, 6);
  DenseTile<double> gc0 = random_dense<double>(kM, kN, 7);

  DistSparse<double> A(f, kM, kK, kTm, kTk, g, 0);
  DistDense<double> B(f, kK, kN, kTk, kTn, g, 1);
  DistDense<double> C(f, kM, kN, kTm, kTn, g, 2);
  run_ranks(f, [&](RankCtx& ctx) {
    A.init_from_global(ctx, ga);
    B.init_from_global(ctx, gb.values);
    C.init_from_global(ctx, gc0.values);
  });
  RunReport rep = run_multiply(f, A, B, C, opts);
  return {C.to_global(), oracle(densify(ga), gb.values, gc0.values),
          std::move(rep)};
}

CaseResult run_spgemm(RunOptions opts) {
  Fabric f({.nranks = 4, .heap_bytes = 4 << 20});
  ProcGrid g{2, 2};
  auto ga = random_csr<double>(kM, kK, 0.35, 15);
  auto gb = random_csr<double>(kK, kN, 0.35, 16);
  auto gc0 = random_csr<double>(kM, kN, 0.15, 17);

  DistSparse<double> A(f, kM, kK, kTm, kTk, g, 0);
  DistSparse<double> B(f, kK, kN, kTk, kTn, g, 1);
  DistSparse<double> C(f, kM, kN, kTm, kTn, g, 2);
  run_ranks(f, [&](RankCtx& ctx) {
    A.init_from_global(ctx, ga);
    B.init_from_global(ctx, gb);
    C.init_from_global(ctx, gc0);
  });
  RunReport rep = run_multiply(f, A, B, C, opts);
  CsrTile<double> out = C.to_global();
  CaseResult r{densify(out), oracle(densify(ga), densify(gb), densify(gc0)),
               std::move(rep)};
  if (!out.well_formed()) r.c.clear();  // force a visible failure
  return r;
}

const Variant kAllVariants[] = {
    Variant::summa_bsp,   Variant::stationary_c, Variant::stationary_a,
    Variant::stationary_b, Variant::ws_random,   Variant::ws_locality,
};

}  // namespace

TEST_CASE("every variant matches the host oracle") {
  for (Variant v : kAllVariants) {
    DYNAMIC_SECTION("spmm " << variant_name(v)) {
      auto r = run_spmm({.variant = v});
      REQUIRE(r.c == r.want);
    }
    DYNAMIC_SECTION("spgemm " << variant_name(v)) {
      auto r = run_spgemm({.variant = v});
      REQUIRE(r.c == r.want);
    }
  }
}

TEST_CASE("offset and prefetch toggles do not change results") {
  auto base = run_spmm({.variant = Variant::stationary_c});
  auto no_off = run_spmm({.variant = Variant::stationary_c, .offset = false});
  auto no_pre = run_spmm({.variant = Variant::stationary_c, .prefetch = false});
  REQUIRE(base.c == base.want);
  REQUIRE(no_off.c == base.c);
  REQUIRE(no_pre.c == base.c);

  auto a_off = run_spmm({.variant = Variant::stationary_a, .offset = false});
  REQUIRE(a_off.c == a_off.want);

  auto wl_cbase = run_spmm(
      {.variant = Variant::ws_locality, .ws_base = Variant::stationary_c});
  REQUIRE(wl_cbase.c == wl_cbase.want);
}

TEST_CASE("repeated runs are deterministic in the result") {
  for (Variant v : {Variant::stationary_c, Variant::ws_random}) {
    auto r1 = run_spmm({.variant = v, .seed = 9});
    auto r2 = run_spmm({.variant = v, .seed = 9});
    REQUIRE(r1.c == r2.c);
    REQUIRE(r1.report.checksum == r2.report.checksum);
  }
}

TEST_CASE("each (i, j, k) tile product is executed exactly once") {
  detail::TileGeom ga(kM, kK, kTm, kTk);
  detail::TileGeom gc(kM, kN, kTm, kTn);
  std::vector<Triple> all;
  for (std::uint32_t i = 0; i < gc.M; ++i)
    for (std::uint32_t j = 0; j < gc.N; ++j)
      for (std::uint32_t k = 0; k < ga.N; ++k) all.push_back({i, j, k});
  std::sort(all.begin(), all.end());

  for (Variant v : kAllVariants) {
    DYNAMIC_SECTION(variant_name(v)) {
      auto r = run_spmm({.variant = v, .record_triples = true});
      std::vector<Triple> got;
      for (auto& per_rank : r.report.triples)
        got.insert(got.end(), per_rank.begin(), per_rank.end());
      std::sort(got.begin(), got.end());
      REQUIRE(got == all);
      REQUIRE(r.report.total_multiplies() == all.size());
    }
  }
}

TEST_CASE("stationary A pushes one contribution per tile product") {
  auto r = run_spmm({.variant = Variant::stationary_a});
  std::uint64_t pushes = 0, pops = 0;
  for (auto& st : r.report.per_rank) {
    pushes += st.queue_pushes;
    pops += st.queue_pops;
  }
  // M x K x N tile products, each pushed to the owning C rank and drained.
  detail::TileGeom ga(kM, kK, kTm, kTk);
  detail::TileGeom gc(kM, kN, kTm, kTn);
  REQUIRE(pushes == std::uint64_t(gc.M) * gc.N * ga.N);
  REQUIRE(pops == pushes);
  REQUIRE(r.report.total_steals() == 0);
}

TEST_CASE("workstealing rebalances an imbalanced workload") {
  // Tiles owned by rank 0 (even tile row, even tile col) are fully dense;
  // everything else is nearly empty.  With an injected per-flop delay the
  // loaded rank is slow in wall-clock time and other ranks steal.
  std::vector<std::tuple<index_t, index_t, double>> coo;
  for (index_t r = 0; r < kM; ++r)
    for (index_t c = 0; c < kK; ++c) {
      bool rank0 = ((r / kTm) % 2 == 0) && ((c / kTk) % 2 == 0);
      if (rank0)
        coo.emplace_back(r, c, 1.0);
      else if (r == c)
        coo.emplace_back(r, c, 2.0);
    }
  CsrTile<double> heavy =
      CsrTile<double>::from_coo(kM, kK, std::move(coo));

  for (Variant v : {Variant::ws_random, Variant::ws_locality}) {
    DYNAMIC_SECTION(variant_name(v)) {
      auto r = run_spmm({.variant = v, .delay_ns_per_flop = 20000}, &heavy);
      REQUIRE(r.c == r.want);
      REQUIRE(r.report.total_steals() > 0);
      if (v == Variant::ws_locality) {
        for (auto& st : r.report.per_rank)
          REQUIRE(st.steals_with_local_component == st.steals);
      }
    }
  }
}

TEST_CASE("stationary C fetches exactly two tiles per rank per step") {
  Fabric f({.nranks = 4, .heap_bytes = 4 << 20});
  ProcGrid g{2, 2};
  auto ga = random_csr<double>(8, 8, 0.4, 21);
  DenseTile<double> gb = random_dense<double>(8, 8, 22);

  DistSparse<double> A(f, 8, 8, 4, 4, g, 0);
  DistDense<double> B(f, 8, 8, 4, 4, g, 1);
  DistDense<double> C(f, 8, 8, 4, 4, g, 2);
  run_ranks(f, [&](RankCtx& ctx) {
    A.init_from_global(ctx, ga);
    B.init_from_global(ctx, gb.values);
    C.init(ctx);
  });
  f.traffic().clear();
  run_multiply(f, A, B, C, {.variant = Variant::stationary_c});

  // One C tile per rank, K = 2 steps: every (rank, step) pair requests one A
  // tile and one B tile.
  std::map<std::pair<rank_t, std::int64_t>, int> per_step;
  for (const auto& tf : f.traffic().tile_fetches())
    per_step[{tf.dst, tf.label}]++;
  REQUIRE(per_step.size() == 4 * 2);
  for (auto& [key, count] : per_step) REQUIRE(count == 2);
}

TEST_CASE("driver rejects malformed configurations") {
  SECTION("non-conformant dimensions") {
    Fabric f({.nranks = 4, .heap_bytes = 1 << 20});
    ProcGrid g{2, 2};
    DistSparse<double> A(f, 8, 8, 4, 4, g);
    DistDense<double> B(f, 6, 8, 3, 4, g);  // A.n != B.m
    DistDense<double> C(f, 8, 8, 4, 4, g);
    run_ranks(f, [&](RankCtx& ctx) {
      A.init(ctx);
      B.init(ctx);
      C.init(ctx);
    });
    REQUIRE_THROWS_AS(run_multiply(f, A, B, C, {.variant = Variant::summa_bsp}),
                      dimension_error);
  }

  SECTION("summa needs a square processor grid") {
    Fabric f({.nranks = 2, .heap_bytes = 1 << 20});
    ProcGrid g{1, 2};
    DistSparse<double> A(f, 8, 8, 4, 4, g);
    DistDense<double> B(f, 8, 8, 4, 4, g);
    DistDense<double> C(f, 8, 8, 4, 4, g);
    run_ranks(f, [&](RankCtx& ctx) {
      A.init(ctx);
      B.init(ctx);
      C.init(ctx);
    });
    REQUIRE_THROWS_AS(run_multiply(f, A, B, C, {.variant = Variant::summa_bsp}),
                      fabric_error);
  }

  SECTION("ws_random supports the stationary A base only") {
    Fabric f({.nranks = 4, .heap_bytes = 1 << 20});
    ProcGrid g{2, 2};
    DistSparse<double> A(f, 8, 8, 4, 4, g);
    DistDense<double> B(f, 8, 8, 4, 4, g);
    DistDense<double> C(f, 8, 8, 4, 4, g);
    run_ranks(f, [&](RankCtx& ctx) {
      A.init(ctx);
      B.init(ctx);
      C.init(ctx);
    });
    REQUIRE_THROWS_AS(
        run_multiply(f, A, B, C,
                     {.variant = Variant::ws_random,
                      .ws_base = Variant::stationary_c}),
        fabric_error);
  }
}

TEST_CASE("run report separates deterministic counts from wall-clock times") {
  auto r1 = run_spmm({.variant = Variant::stationary_a, .seed = 3});
  auto r2 = run_spmm({.variant = Variant::stationary_a, .seed = 3});
  REQUIRE(r1.report.total_flops() == r2.report.total_flops());
  REQUIRE(r1.report.total_multiplies() == r2.report.total_multiplies());
  for (rank_t p = 0; p < 4; ++p) {
    REQUIRE(r1.report.per_rank[p].multiplies == r2.report.per_rank[p].multiplies);
    REQUIRE(r1.report.per_rank[p].meter.flops == r2.report.per_rank[p].meter.flops);
  }
  REQUIRE(r1.report.wall_seconds > 0);
  // Event streams drive byte accounting; traffic must be attributed.
  std::uint64_t bytes = 0;
  for (auto& st : r1.report.per_rank)
    bytes += st.bytes_self + st.bytes_on_node + st.bytes_off_node;
  REQUIRE(bytes > 0);
}
