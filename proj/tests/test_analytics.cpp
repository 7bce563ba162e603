#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "rdmm/analytics.hpp"
#include "rdmm/gen.hpp"

using namespace rdmm;
using Catch::Matchers::WithinRel;

namespace {

// Independent dense block extraction for the stage-flop oracle.
struct Block {
  std::vector<std::vector<index_t>> cols;  // per local row, global-free
};

Block extract(const CsrTile<double>& a, std::uint32_t ti, std::uint32_t tj,
              std::uint64_t tm) {
  Block b;
  std::uint64_t r0 = ti * tm, c0 = tj * tm;
  std::uint64_t rows = std::min<std::uint64_t>(tm, a.rows - r0);
  b.cols.resize(rows);
  for (std::uint64_t r = 0; r < rows; ++r)
    for (index_t s = a.row_ptr[r0 + r]; s < a.row_ptr[r0 + r + 1]; ++s) {
      std::uint64_t c = a.col_idx[s];
      if (c >= c0 && c < c0 + tm)
        b.cols[r].push_back(static_cast<index_t>(c - c0));
    }
  return b;
}

// flops(X * Y) = 2 * sum over nonzeros (r, c) of X of nnz(row c of Y).
std::uint64_t block_flops(const Block& x, const Block& y) {
  std::uint64_t f = 0;
  for (const auto& row : x.cols)
    for (index_t c : row) f += 2 * y.cols[c].size();
  return f;
}

}  // namespace

TEST_CASE("nnz imbalance") {
  SECTION("uniform tiles are perfectly balanced") {
    auto m = uniform_tiles<double>(32, 32, 4, 0.25, 3);
    REQUIRE(nnz_imbalance(m, 2, 2) == 1.0);
  }

  SECTION("all mass in one tile of a 2x2 grid") {
    std::vector<std::tuple<index_t, index_t, double>> coo;
    for (index_t r = 0; r < 4; ++r)
      for (index_t c = 0; c < 4; ++c) coo.emplace_back(r, c, 1.0);
    auto m = CsrTile<double>::from_coo(8, 8, std::move(coo));
    REQUIRE(nnz_imbalance(m, 2, 2) == 4.0);
  }

  SECTION("diagonal matrix on a 2x2 grid") {
    std::vector<std::tuple<index_t, index_t, double>> coo;
    for (index_t r = 0; r < 8; ++r) coo.emplace_back(r, r, 1.0);
    auto m = CsrTile<double>::from_coo(8, 8, std::move(coo));
    REQUIRE(nnz_imbalance(m, 2, 2) == 2.0);
  }

  SECTION("empty matrix counts as balanced") {
    CsrTile<double> m(8, 8);
    REQUIRE(nnz_imbalance(m, 2, 2) == 1.0);
  }

  SECTION("grid validation") {
    CsrTile<double> m(8, 8);
    REQUIRE_THROWS_AS(nnz_imbalance(m, 0, 2), dimension_error);
  }

  SECTION("counts match direct per-entry attribution") {
    auto m = random_csr<double>(23, 19, 0.3, 7);
    auto counts = andetail::tile_nnz_counts(m, 3, 2);
    std::uint64_t tm = (23 + 2) / 3, tn = (19 + 1) / 2;
    std::vector<std::uint64_t> want(6, 0);
    for (index_t r = 0; r < m.rows; ++r)
      for (index_t s = m.row_ptr[r]; s < m.row_ptr[r + 1]; ++s)
        want[(r / tm) * 2 + m.col_idx[s] / tn]++;
    REQUIRE(counts == want);
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    REQUIRE(total == m.nnz());
  }
}

TEST_CASE("imbalance metrics from a stage-flop table") {
  ImbalanceReport rep;
  // Two ranks alternating full load: balanced end to end, 2x per stage.
  rep.stage_flops = {{4, 0}, {0, 4}};
  imbalance_from_flops(rep);
  REQUIRE(rep.end_to_end_flop_imbalance == 1.0);
  REQUIRE(rep.per_stage_flop_imbalance == 2.0);

  // One rank does everything: both metrics hit the rank count.
  rep.stage_flops = {{3, 5}, {0, 0}};
  imbalance_from_flops(rep);
  REQUIRE(rep.end_to_end_flop_imbalance == 2.0);
  REQUIRE(rep.per_stage_flop_imbalance == 2.0);

  // Perfectly even table.
  rep.stage_flops = {{2, 2}, {2, 2}};
  imbalance_from_flops(rep);
  REQUIRE(rep.end_to_end_flop_imbalance == 1.0);
  REQUIRE(rep.per_stage_flop_imbalance == 1.0);

  // Empty stages leave the metrics at 1.
  rep.stage_flops = {{0, 0}, {0, 0}};
  imbalance_from_flops(rep);
  REQUIRE(rep.end_to_end_flop_imbalance == 1.0);
  REQUIRE(rep.per_stage_flop_imbalance == 1.0);
}

TEST_CASE("stage imbalance matches a direct per-tile flop oracle") {
  auto a = random_csr<double>(24, 24, 0.2, 13);
  const std::uint32_t g = 3;
  auto rep = stage_imbalance(a, g);
  REQUIRE(rep.pr == g);
  REQUIRE(rep.pc == g);
  REQUIRE(rep.stage_flops.size() == g * g);

  std::uint64_t tm = 24 / g;
  for (std::uint32_t i = 0; i < g; ++i)
    for (std::uint32_t j = 0; j < g; ++j)
      for (std::uint32_t k = 0; k < g; ++k) {
        auto x = extract(a, i, k, tm);
        auto y = extract(a, k, j, tm);
        REQUIRE(rep.stage_flops[i * g + j][k] == block_flops(x, y));
      }

  // Sum over stages equals the full multiply's flop count.
  std::uint64_t sum = 0;
  for (auto& per_rank : rep.stage_flops)
    for (auto f : per_rank) sum += f;
  REQUIRE(sum == spgemm_flops(CsrView<double>(a), CsrView<double>(a)));

  REQUIRE(rep.per_stage_flop_imbalance >= rep.end_to_end_flop_imbalance);
  REQUIRE(rep.end_to_end_flop_imbalance >= 1.0);

  REQUIRE_THROWS_AS(stage_imbalance(random_csr<double>(8, 9, 0.5, 1), 2),
                    dimension_error);
}

TEST_CASE("stage imbalance with more tile steps than ranks") {
  auto a = random_csr<double>(24, 24, 0.25, 17);
  const std::uint32_t g = 2, K = 6;
  auto rep = stage_imbalance(a, g, K);
  REQUIRE(rep.stage_flops.size() == g * g);
  REQUIRE(rep.stage_flops[0].size() == K);

  // Oracle: accumulate block flops over the cyclic tile-to-rank map.
  std::uint64_t tm = 24 / K;
  std::vector<std::vector<std::uint64_t>> want(
      g * g, std::vector<std::uint64_t>(K, 0));
  for (std::uint32_t i = 0; i < K; ++i)
    for (std::uint32_t j = 0; j < K; ++j)
      for (std::uint32_t k = 0; k < K; ++k)
        want[(i % g) * g + j % g][k] +=
            block_flops(extract(a, i, k, tm), extract(a, k, j, tm));
  REQUIRE(rep.stage_flops == want);

  // Total work is independent of the tiling.
  std::uint64_t sum = 0;
  for (auto& per_rank : rep.stage_flops)
    for (auto f : per_rank) sum += f;
  REQUIRE(sum == spgemm_flops(CsrView<double>(a), CsrView<double>(a)));

  REQUIRE_THROWS_AS(stage_imbalance(a, 4, 2), dimension_error);
}

TEST_CASE("skewed matrices show more per-stage than end-to-end imbalance") {
  RmatParams p;
  p.scale = 12;
  p.edgefactor = 8;
  p.seed = 5;
  auto a = rmat<double>(p);
  auto rep = stage_imbalance(a, 4);
  REQUIRE(rep.nnz_imbalance > 1.0);
  REQUIRE(rep.per_stage_flop_imbalance > rep.end_to_end_flop_imbalance);
  REQUIRE(rep.end_to_end_flop_imbalance > 1.0);
}

TEST_CASE("virtual-time replay") {
  CostModel cost;
  cost.net_bw = 1e9;
  cost.intra_bw = 1e10;
  cost.arith_peak = 1e12;
  cost.latency = 0;

  RunReport rep;
  rep.events.resize(2);
  // Rank 0: one off-node transfer (node group 6: ranks 0 and 1 share a node,
  // so use an explicit group of 1 to force the network path).
  rep.events[0] = {
      {Event::Kind::transfer, 1, 0, 1000, 0},
      {Event::Kind::compute, 0, 0, 0, 5'000'000},
  };
  rep.events[1] = {
      {Event::Kind::queue_op, 1, 1, 100, 0},
  };

  SECTION("per-event accounting") {
    auto clocks = virtual_time(rep, cost, /*node_group=*/1);
    REQUIRE_THAT(clocks[0], WithinRel(1000.0 / 1e9 + 5e6 / 1e12, 1e-12));
    // Self transfer rides the intra-node bandwidth.
    REQUIRE_THAT(clocks[1], WithinRel(100.0 / 1e10, 1e-12));
    REQUIRE(makespan(clocks) == clocks[0]);
  }

  SECTION("grouping moves transfers onto the intra-node bandwidth") {
    auto near = virtual_time(rep, cost, /*node_group=*/6);
    REQUIRE_THAT(near[0], WithinRel(1000.0 / 1e10 + 5e6 / 1e12, 1e-12));
  }

  SECTION("latency is charged per transfer, not per byte") {
    cost.latency = 1e-6;
    auto clocks = virtual_time(rep, cost, 1);
    REQUIRE_THAT(clocks[0],
                 WithinRel(1000.0 / 1e9 + 1e-6 + 5e6 / 1e12, 1e-12));
    REQUIRE_THAT(clocks[1], WithinRel(100.0 / 1e10 + 1e-6, 1e-12));
  }

  SECTION("replay is deterministic for a recorded run") {
    Fabric f({.nranks = 4, .heap_bytes = 4 << 20});
    ProcGrid g{2, 2};
    auto ga = random_csr<double>(16, 16, 0.3, 31);
    DistSparse<double> A(f, 16, 16, 8, 8, g, 0);
    DistDense<double> B(f, 16, 16, 8, 8, g, 1);
    DistDense<double> C(f, 16, 16, 8, 8, g, 2);
    run_ranks(f, [&](RankCtx& ctx) {
      A.init_from_global(ctx, ga);
      B.init(ctx, [](std::uint32_t, std::uint32_t) {
        DenseTile<double> t(8, 8);
        for (auto& v : t.values) v = 1.0;
        return t;
      });
      C.init(ctx);
    });
    auto report = run_multiply(f, A, B, C, {.variant = Variant::stationary_c});
    auto c1 = virtual_time(report, cost);
    auto c2 = virtual_time(report, cost);
    REQUIRE(c1 == c2);
    REQUIRE(makespan(c1) > 0);
  }

  SECTION("empty report") {
    RunReport empty;
    REQUIRE(makespan(virtual_time(empty, cost)) == 0.0);
  }
}
