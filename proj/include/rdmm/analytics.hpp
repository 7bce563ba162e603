#ifndef RDMM_ANALYTICS_HPP
#define RDMM_ANALYTICS_HPP

// Load-imbalance metrics (max/avg), per-stage vs end-to-end imbalance for
// 2D stationary SpGEMM flop accounting, and virtual-time replay of run
// reports under a cost model.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rdmm/algos.hpp"
#include "rdmm/model.hpp"
#include "rdmm/tile.hpp"

namespace rdmm {

struct ImbalanceReport {
  std::uint32_t pr = 0, pc = 0;
  std::vector<std::uint64_t> per_tile_nnz;       // pr*pc, row-major
  double nnz_imbalance = 1.0;                    // max/avg
  std::vector<std::vector<std::uint64_t>> stage_flops;  // [rank][stage]
  double per_stage_flop_imbalance = 1.0;
  double end_to_end_flop_imbalance = 1.0;
};

namespace andetail {

// Block split: process (i,j) of a pr x pc grid owns rows [i*tm, ...) and
// cols [j*tn, ...), tm = ceil(m/pr).
template <typename T>
std::vector<std::uint64_t> tile_nnz_counts(const CsrTile<T>& m, std::uint32_t pr,
                                           std::uint32_t pc) {
  std::uint64_t tm = (m.rows + pr - 1) / pr;
  std::uint64_t tn = (m.cols + pc - 1) / pc;
  std::vector<std::uint64_t> counts(std::size_t(pr) * pc, 0);
  for (index_t r = 0; r < m.rows; ++r) {
    std::uint32_t ti = static_cast<std::uint32_t>(r / tm);
    for (index_t s = m.row_ptr[r]; s < m.row_ptr[r + 1]; ++s) {
      std::uint32_t tj = static_cast<std::uint32_t>(m.col_idx[s] / tn);
      counts[std::size_t(ti) * pc + tj]++;
    }
  }
  return counts;
}

inline double max_over_avg(const std::vector<double>& xs) {
  if (xs.empty()) return 1.0;
  double mx = *std::max_element(xs.begin(), xs.end());
  double avg = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
  return avg == 0 ? 1.0 : mx / avg;
}

}  // namespace andetail

// max over tiles of nnz divided by mean over tiles; an empty matrix counts
// as perfectly balanced.
template <typename T>
double nnz_imbalance(const CsrTile<T>& m, std::uint32_t pr, std::uint32_t pc) {
  if (pr < 1 || pc < 1) throw dimension_error("grid dims must be >= 1");
  auto counts = andetail::tile_nnz_counts(m, pr, pc);
  std::vector<double> xs(counts.begin(), counts.end());
  return andetail::max_over_avg(xs);
}

// Imbalance metrics from a per-rank-per-stage flop table:
//   end-to-end = max_r(sum_s flops) / avg_r(sum_s flops)
//   per-stage  = sum_s max_r(flops) / sum_s avg_r(flops)
inline void imbalance_from_flops(ImbalanceReport& rep) {
  const auto& f = rep.stage_flops;
  std::size_t P = f.size();
  if (P == 0) return;
  std::size_t S = f[0].size();
  std::vector<double> totals(P, 0);
  double sum_max = 0, sum_avg = 0;
  for (std::size_t s = 0; s < S; ++s) {
    double mx = 0, sum = 0;
    for (std::size_t r = 0; r < P; ++r) {
      double v = double(f[r][s]);
      totals[r] += v;
      mx = std::max(mx, v);
      sum += v;
    }
    sum_max += mx;
    sum_avg += sum / double(P);
  }
  rep.end_to_end_flop_imbalance = andetail::max_over_avg(totals);
  rep.per_stage_flop_imbalance = sum_avg == 0 ? 1.0 : sum_max / sum_avg;
}

// Stage-resolved imbalance of squaring `a` with a 2D stationary algorithm on
// a square grid: at tile step k, the rank owning C tile (I,J) multiplies
// A_Ik * A_kJ.  Tiles live on a stages x stages split and map to the
// grid x grid rank mesh cyclically (rank (I % grid, J % grid)); the default
// stages == grid gives one tile per rank and one step per grid column.
// Flops are the exact multiply-add counts of the component SpGEMMs.
template <typename T>
ImbalanceReport stage_imbalance(const CsrTile<T>& a, std::uint32_t grid,
                                std::uint32_t stages = 0) {
  if (a.rows != a.cols)
    throw dimension_error("stage_imbalance expects a square matrix");
  if (grid < 1) throw dimension_error("grid dims must be >= 1");
  const std::uint32_t g = grid;
  const std::uint32_t K = stages == 0 ? g : stages;
  if (K < g) throw dimension_error("stages must be >= grid");
  std::uint64_t tm = (a.rows + K - 1) / K;

  // Per-tile row/column nonzero histograms over local indices.
  std::vector<std::vector<std::uint64_t>> rowcnt(std::size_t(K) * K),
      colcnt(std::size_t(K) * K);
  for (auto& v : rowcnt) v.assign(tm, 0);
  for (auto& v : colcnt) v.assign(tm, 0);
  for (index_t r = 0; r < a.rows; ++r) {
    std::uint32_t ti = static_cast<std::uint32_t>(r / tm);
    std::uint64_t lr = r % tm;
    for (index_t s = a.row_ptr[r]; s < a.row_ptr[r + 1]; ++s) {
      std::uint32_t tj = static_cast<std::uint32_t>(a.col_idx[s] / tm);
      std::uint64_t lc = a.col_idx[s] % tm;
      rowcnt[std::size_t(ti) * K + tj][lr]++;
      colcnt[std::size_t(ti) * K + tj][lc]++;
    }
  }

  ImbalanceReport rep;
  rep.pr = rep.pc = g;
  rep.per_tile_nnz = andetail::tile_nnz_counts(a, g, g);
  rep.nnz_imbalance = [&] {
    std::vector<double> xs(rep.per_tile_nnz.begin(), rep.per_tile_nnz.end());
    return andetail::max_over_avg(xs);
  }();

  // flops(A_Ik * A_kJ) = 2 * dot(colcnt of A_Ik, rowcnt of A_kJ), charged to
  // the owner of C tile (I,J) at tile step k.
  rep.stage_flops.assign(std::size_t(g) * g, std::vector<std::uint64_t>(K, 0));
  for (std::uint32_t i = 0; i < K; ++i)
    for (std::uint32_t j = 0; j < K; ++j) {
      auto& per_rank = rep.stage_flops[std::size_t(i % g) * g + j % g];
      for (std::uint32_t k = 0; k < K; ++k) {
        const auto& cc = colcnt[std::size_t(i) * K + k];
        const auto& rc = rowcnt[std::size_t(k) * K + j];
        std::uint64_t dot = 0;
        for (std::uint64_t t = 0; t < tm; ++t) dot += cc[t] * rc[t];
        per_rank[k] += 2 * dot;
      }
    }
  imbalance_from_flops(rep);
  return rep;
}

// Deterministic per-rank virtual completion times: each rank's clock
// advances by bytes/bw(src,dst) + latency per transfer and by
// flops/arith_peak per multiply.  Self and intra-node transfers use the
// intra-node bandwidth.
inline std::vector<double> virtual_time(const RunReport& report,
                                        const CostModel& cost,
                                        rank_t node_group = 6) {
  cost.validate();
  std::vector<double> clocks(report.events.size(), 0.0);
  auto same_node = [&](rank_t a, rank_t b) {
    rank_t g = node_group == 0 ? 1 : node_group;
    return a / g == b / g;
  };
  for (std::size_t r = 0; r < report.events.size(); ++r) {
    for (const Event& e : report.events[r]) {
      if (e.kind == Event::Kind::compute) {
        clocks[r] += double(e.flops) / cost.arith_peak;
      } else {
        double bw = same_node(e.src, e.dst) ? cost.intra_bw : cost.net_bw;
        clocks[r] += double(e.bytes) / bw + cost.latency;
      }
    }
  }
  return clocks;
}

inline double makespan(const std::vector<double>& clocks) {
  return clocks.empty() ? 0.0
                        : *std::max_element(clocks.begin(), clocks.end());
}

}  // namespace rdmm

#endif  // RDMM_ANALYTICS_HPP
