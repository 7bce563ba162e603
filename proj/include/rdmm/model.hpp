#ifndef RDMM_MODEL_HPP
#define RDMM_MODEL_HPP

// Communication-cost and inter-node roofline performance model.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "rdmm/tile.hpp"

namespace rdmm {

struct CostModel {
  double net_bw = 3.83e9;     // bytes/s per rank, network injection
  double intra_bw = 50e9;     // bytes/s within a node group
  double mem_bw = 900e9;      // bytes/s local memory
  double arith_peak = 16e12;  // flops/s
  double w = 4;               // bytes per word
  double latency = 0;         // s per transfer

  void validate() const {
    if (net_bw <= 0 || intra_bw <= 0 || mem_bw <= 0 || arith_peak <= 0 ||
        latency < 0)
      throw std::invalid_argument("cost model parameters must be positive");
    if (w != 4 && w != 8)
      throw std::invalid_argument("word size must be 4 or 8 bytes");
  }
};

struct ProblemShape {
  double m = 0, k = 0, n = 0;  // global dims
  double p = 1;                // rank count
  double d = 1;                // density of the sparse operand(s)
  double w = 4;                // bytes per word

  void validate() const {
    if (m <= 0 || k <= 0 || n <= 0 || p <= 0)
      throw std::invalid_argument("dims and rank count must be positive");
    if (d <= 0 || d > 1) throw std::invalid_argument("density must be in (0,1]");
  }

  bool p_square() const {
    double s = std::round(std::sqrt(p));
    return s * s == p;
  }
  double sqrt_p() const { return std::sqrt(p); }
};

enum class BoundKind { network_bound, compute_bound };

struct RooflineReport {
  double local_ai = 0;        // flops/byte
  double internode_ai = 0;    // flops/byte
  double local_peak = 0;      // flops/s, min(arith peak, local_ai * mem bw)
  double internode_bound = 0; // flops/s, min(local peak, internode_ai * net bw)
  BoundKind bound_kind = BoundKind::network_bound;
};

namespace modeldetail {

// Elements a rank fetches in one stationary-C SpMM iteration:
// dense B tile + CSR A tile (values + col_idx counted at one element each,
// row_ptr as m/sqrt(p) + 1 elements).
inline double comm_elems(const ProblemShape& s) {
  return s.k * s.n / s.p + 2.0 * s.d * s.m * s.k / s.p + s.m / s.sqrt_p() + 1.0;
}

inline double spmm_flops_per_iter(const ProblemShape& s) {
  return 2.0 * (s.d * s.m * s.k / s.p) * (s.n / s.sqrt_p());
}

}  // namespace modeldetail

// Per-iteration communication volume in elements; requires a perfect-square
// rank count (the algorithm the formula describes runs on sqrt(p) x sqrt(p)
// grids).
inline double comm_elems_per_iter(const ProblemShape& s) {
  s.validate();
  if (!s.p_square())
    throw std::invalid_argument("comm_elems_per_iter: p must be a perfect square");
  return modeldetail::comm_elems(s);
}

// Extended byte accounting: values at w bytes, both index arrays at
// idx_bytes.  Coincides with w * comm_elems_per_iter exactly when
// idx_bytes == w.
inline double comm_bytes_per_iter(const ProblemShape& s, double idx_bytes) {
  s.validate();
  double values = s.k * s.n / s.p + s.d * s.m * s.k / s.p;
  double col_idx = s.d * s.m * s.k / s.p;
  double row_ptr = s.m / s.sqrt_p() + 1.0;
  return values * s.w + (col_idx + row_ptr) * idx_bytes;
}

// AI denominators reuse the per-iteration communication expression; the
// local variant additionally streams the C tile (m*n/p elements).
inline double spmm_internode_ai(const ProblemShape& s) {
  s.validate();
  return modeldetail::spmm_flops_per_iter(s) /
         (s.w * modeldetail::comm_elems(s));
}

inline double spmm_local_ai(const ProblemShape& s) {
  s.validate();
  return modeldetail::spmm_flops_per_iter(s) /
         (s.w * (modeldetail::comm_elems(s) + s.m * s.n / s.p));
}

// Local SpGEMM AI bound in terms of compression factor cf (flops per nonzero
// output) and bytes per nonzero b.
inline double spgemm_local_ai(double cf, double b) {
  if (cf <= 0 || b <= 0)
    throw std::invalid_argument("spgemm_local_ai: cf and b must be positive");
  return cf / ((3.0 + 2.0 * cf) * b);
}

// Inter-node SpGEMM AI; flops are always measured, never estimated.
inline double spgemm_internode_ai(double flops, const ProblemShape& s) {
  s.validate();
  if (flops <= 0)
    throw std::invalid_argument("spgemm_internode_ai: flops must be positive");
  double denom = s.w * (2.0 * s.d * s.m * s.k / s.p + s.m / s.sqrt_p() + 1.0 +
                        2.0 * s.d * s.k * s.n / s.p + s.k / s.sqrt_p() + 1.0);
  return flops / denom;
}

enum class MultiplyKind { spmm, spgemm };

// Roofline bound: local peak = min(arithmetic peak, local AI x memory
// bandwidth); inter-node bound = min(local peak, inter-node AI x network
// bandwidth).
inline RooflineReport roofline(const ProblemShape& s, const CostModel& cost,
                               MultiplyKind kind,
                               std::optional<FlopMeter> measured = std::nullopt) {
  s.validate();
  cost.validate();
  RooflineReport r;
  if (kind == MultiplyKind::spmm) {
    r.local_ai = spmm_local_ai(s);
    r.internode_ai = spmm_internode_ai(s);
  } else {
    if (!measured || measured->flops == 0 || measured->output_nnz == 0)
      throw std::invalid_argument(
          "roofline: SpGEMM requires measured flops/output nnz");
    // b: bytes per nonzero, one value plus one index at w bytes each,
    // amortizing row_ptr into the 3x term of the bound.
    r.local_ai = spgemm_local_ai(measured->cf(), 2.0 * s.w);
    r.internode_ai =
        spgemm_internode_ai(static_cast<double>(measured->flops) / s.p, s);
  }
  r.local_peak = std::min(cost.arith_peak, r.local_ai * cost.mem_bw);
  r.internode_bound = std::min(r.local_peak, r.internode_ai * cost.net_bw);
  r.bound_kind = r.internode_ai * cost.net_bw < r.local_peak
                     ? BoundKind::network_bound
                     : BoundKind::compute_bound;
  return r;
}

}  // namespace rdmm

#endif  // RDMM_MODEL_HPP
