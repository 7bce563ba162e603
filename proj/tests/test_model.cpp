#include <catch2/catch_amalgamated.hpp>

#include "rdmm/model.hpp"

using namespace rdmm;
using Catch::Matchers::WithinRel;

namespace {
// m = k = 1024, n = 512, p = 16, d = 1/16: every term of the per-iteration
// cost is a round number (32768 + 8192 + 256 + 1 elements).
const ProblemShape kShape{.m = 1024, .k = 1024, .n = 512, .p = 16,
                          .d = 0.0625, .w = 4};
}  // namespace

TEST_CASE("per-iteration communication volume") {
  REQUIRE(comm_elems_per_iter(kShape) == 41217.0);

  SECTION("terms scale as expected") {
    ProblemShape s = kShape;
    s.d = 0.125;  // doubling density adds exactly the CSR payload again
    REQUIRE(comm_elems_per_iter(s) == 41217.0 + 8192.0);
    s = kShape;
    s.n = 1024;  // doubling n doubles only the dense-B term
    REQUIRE(comm_elems_per_iter(s) == 41217.0 + 32768.0);
  }

  SECTION("non-square rank counts are rejected") {
    ProblemShape s = kShape;
    s.p = 24;
    REQUIRE_THROWS_AS(comm_elems_per_iter(s), std::invalid_argument);
  }

  SECTION("invalid shapes are rejected") {
    ProblemShape s = kShape;
    s.d = 0;
    REQUIRE_THROWS_AS(comm_elems_per_iter(s), std::invalid_argument);
    s = kShape;
    s.m = -1;
    REQUIRE_THROWS_AS(comm_elems_per_iter(s), std::invalid_argument);
  }
}

TEST_CASE("byte accounting with explicit index width") {
  // Equal index and value widths collapse to w * element count.
  REQUIRE(comm_bytes_per_iter(kShape, 4) == 4.0 * 41217.0);
  REQUIRE(comm_bytes_per_iter(kShape, 4) == 164868.0);
  // 8-byte indices charge only col_idx (8192) and row_ptr (257) wider.
  REQUIRE(comm_bytes_per_iter(kShape, 8) == 182280.0);
}

TEST_CASE("SpMM arithmetic intensities") {
  // flops/iter = 2 * (dmk/p) * (n/sqrt(p)) = 2 * 4096 * 128 = 1048576.
  REQUIRE_THAT(spmm_internode_ai(kShape),
               WithinRel(1048576.0 / (4.0 * 41217.0), 1e-12));
  // The local denominator additionally streams C (mn/p = 32768 elements).
  REQUIRE_THAT(spmm_local_ai(kShape),
               WithinRel(1048576.0 / (4.0 * 73985.0), 1e-12));
  REQUIRE(spmm_local_ai(kShape) < spmm_internode_ai(kShape));

  SECTION("wider B raises inter-node intensity") {
    ProblemShape narrow = kShape, wide = kShape;
    narrow.n = 128;
    wide.n = 2048;
    REQUIRE(spmm_internode_ai(narrow) < spmm_internode_ai(kShape));
    REQUIRE(spmm_internode_ai(kShape) < spmm_internode_ai(wide));
  }

  SECTION("intensities accept non-square rank counts") {
    ProblemShape s = kShape;
    s.p = 24;
    REQUIRE(spmm_internode_ai(s) > 0);
    REQUIRE(spmm_local_ai(s) > 0);
  }
}

TEST_CASE("SpGEMM arithmetic intensities") {
  // cf / ((3 + 2 cf) b): cf = 4, b = 8 gives 4 / 88.
  REQUIRE_THAT(spgemm_local_ai(4.0, 8.0), WithinRel(1.0 / 22.0, 1e-12));
  // Monotone in cf, bounded by 1 / (2b).
  REQUIRE(spgemm_local_ai(2.0, 8.0) < spgemm_local_ai(16.0, 8.0));
  REQUIRE(spgemm_local_ai(1e9, 8.0) < 1.0 / 16.0);
  REQUIRE_THROWS_AS(spgemm_local_ai(0.0, 8.0), std::invalid_argument);
  REQUIRE_THROWS_AS(spgemm_local_ai(4.0, -1.0), std::invalid_argument);

  // Inter-node denominator: A and B CSR payloads.
  ProblemShape s = kShape;
  double denom = 4.0 * (2.0 * 0.0625 * 1024 * 1024 / 16 + 1024.0 / 4 + 1 +
                        2.0 * 0.0625 * 1024 * 512 / 16 + 1024.0 / 4 + 1);
  REQUIRE_THAT(spgemm_internode_ai(1e6, s), WithinRel(1e6 / denom, 1e-12));
  REQUIRE_THROWS_AS(spgemm_internode_ai(0.0, s), std::invalid_argument);
}

TEST_CASE("roofline classification") {
  CostModel summit;  // defaults: 3.83 GB/s network, 900 GB/s memory, 16 TF

  SECTION("sparse-heavy SpMM at scale is network bound") {
    // Shape from a 17.5M-row matrix with 5.2B nonzeros on 24 ranks.
    ProblemShape s{.m = 17.5e6, .k = 17.5e6, .n = 128, .p = 24,
                   .d = 5.2e9 / (17.5e6 * 17.5e6), .w = 4};
    auto r = roofline(s, summit, MultiplyKind::spmm);
    REQUIRE(r.bound_kind == BoundKind::network_bound);
    REQUIRE_THAT(r.internode_ai, WithinRel(5.338200950043383, 1e-9));
    REQUIRE_THAT(r.internode_bound, WithinRel(20445309638.666157, 1e-9));
    REQUIRE_THAT(r.local_peak, WithinRel(4085283854194.828, 1e-9));

    // Wider B matrices stay network bound but with a higher bound.
    for (double n : {512.0, 2048.0}) {
      ProblemShape sw = s;
      sw.n = n;
      auto rw = roofline(sw, summit, MultiplyKind::spmm);
      REQUIRE(rw.bound_kind == BoundKind::network_bound);
      REQUIRE(rw.internode_bound > r.internode_bound);
    }
  }

  SECTION("dense-enough SpMM with fast network is compute bound") {
    CostModel fast = summit;
    fast.net_bw = 1e13;
    auto r = roofline(kShape, fast, MultiplyKind::spmm);
    REQUIRE(r.bound_kind == BoundKind::compute_bound);
    REQUIRE(r.internode_bound == r.local_peak);
  }

  SECTION("the bound never exceeds either roof") {
    for (double net : {1e8, 3.83e9, 1e12, 1e14}) {
      CostModel c = summit;
      c.net_bw = net;
      auto r = roofline(kShape, c, MultiplyKind::spmm);
      REQUIRE(r.internode_bound <= r.local_peak);
      REQUIRE(r.internode_bound <= r.internode_ai * c.net_bw);
      REQUIRE(r.local_peak <= c.arith_peak);
    }
  }

  SECTION("SpGEMM requires measured flops") {
    REQUIRE_THROWS_AS(roofline(kShape, summit, MultiplyKind::spgemm),
                      std::invalid_argument);
    FlopMeter m;
    m.flops = 4'000'000;
    m.output_nnz = 1'000'000;  // cf = 4
    auto r2 = roofline(kShape, summit, MultiplyKind::spgemm, m);
    REQUIRE_THAT(r2.local_ai, WithinRel(spgemm_local_ai(4.0, 8.0), 1e-12));
    REQUIRE(r2.internode_bound <= r2.local_peak);
  }

  SECTION("cost model validation") {
    CostModel bad = summit;
    bad.net_bw = 0;
    REQUIRE_THROWS_AS(roofline(kShape, bad, MultiplyKind::spmm),
                      std::invalid_argument);
    bad = summit;
    bad.w = 3;
    REQUIRE_THROWS_AS(roofline(kShape, bad, MultiplyKind::spmm),
                      std::invalid_argument);
  }
}
