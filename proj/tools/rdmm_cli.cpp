// rdmm: experiment harness for the library.
//
// Subcommands:
//   run        generate/load matrices, run one multiply variant, emit reports
//   model      evaluate the communication/roofline model for a problem shape
//   imbalance  nnz and stage-flop imbalance metrics for a matrix
//   gen        write a generated matrix as a Matrix Market file
//
// Exit codes: 0 success, 2 configuration error, 3 verification failure,
// 4 resource exhaustion (shared heap or remote queue capacity).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "rdmm/analytics.hpp"
#include "rdmm/gen.hpp"
#include "rdmm/mmio.hpp"

using namespace rdmm;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitVerify = 3;
constexpr int kExitResource = 4;

// ---------------------------------------------------------------------------
// Input specification shared by run / imbalance / gen.

struct InputSpec {
  std::string rmat;     // "scale=17,ef=8"
  std::string uniform;  // "m=1024,k=1024,p=16,d=0.0625"
  std::string random;   // "m=256,k=256,d=0.1"
  std::string mtx;      // path
  std::uint64_t seed = 1;
  std::uint64_t permute = 0;  // nonzero: symmetric relabeling seed
  std::string dup = "one";    // rmat duplicate policy: one | multiplicity

  void add_flags(CLI::App* cmd) {
    auto* g = cmd->add_option_group("input", "matrix source (pick one)");
    g->add_option("--rmat", rmat, "R-MAT input, e.g. scale=17,ef=8");
    g->add_option("--uniform", uniform,
                  "uniform-tile input, e.g. m=1024,k=1024,p=16,d=0.0625");
    g->add_option("--random", random,
                  "random CSR input, e.g. m=256,k=256,d=0.1");
    g->add_option("--mtx", mtx, "Matrix Market file (.mtx or .mtx.gz)");
    g->require_option(1);
    cmd->add_option("--seed", seed, "generator seed");
    cmd->add_option("--permute", permute,
                    "apply a symmetric random relabeling with this seed");
    cmd->add_option("--dup", dup, "R-MAT duplicate policy: one | multiplicity")
        ->check(CLI::IsMember({"one", "multiplicity"}));
  }

  static std::map<std::string, double> parse_kv(const std::string& s) {
    std::map<std::string, double> kv;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      auto eq = item.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("expected key=value in '" + item + "'");
      kv[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    }
    return kv;
  }

  static double need(const std::map<std::string, double>& kv,
                     const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end())
      throw std::invalid_argument("missing input parameter '" + key + "'");
    return it->second;
  }

  CsrTile<double> load(json* meta) const {
    CsrTile<double> a;
    if (!rmat.empty()) {
      auto kv = parse_kv(rmat);
      RmatParams p;
      p.scale = static_cast<std::uint32_t>(need(kv, "scale"));
      p.edgefactor = static_cast<std::uint32_t>(need(kv, "ef"));
      p.seed = seed;
      a = rdmm::rmat<double>(p, dup == "one" ? DupPolicy::collapse_to_one
                                             : DupPolicy::multiplicity);
      if (meta) (*meta)["input"] = {{"kind", "rmat"},
                                    {"scale", p.scale},
                                    {"edgefactor", p.edgefactor},
                                    {"dup", dup}};
    } else if (!uniform.empty()) {
      auto kv = parse_kv(uniform);
      a = uniform_tiles<double>(
          static_cast<std::uint64_t>(need(kv, "m")),
          static_cast<std::uint64_t>(need(kv, "k")),
          static_cast<std::uint32_t>(need(kv, "p")), need(kv, "d"), seed);
      if (meta) (*meta)["input"] = {{"kind", "uniform"}, {"spec", uniform}};
    } else if (!random.empty()) {
      auto kv = parse_kv(random);
      a = random_csr<double>(static_cast<index_t>(need(kv, "m")),
                             static_cast<index_t>(need(kv, "k")),
                             need(kv, "d"), seed);
      if (meta) (*meta)["input"] = {{"kind", "random"}, {"spec", random}};
    } else {
      a = read_matrix_market<double>(mtx);
      if (meta) (*meta)["input"] = {{"kind", "mtx"}, {"path", mtx}};
    }
    if (permute != 0) a = permute_symmetric(a, permute);
    if (meta) {
      (*meta)["seed"] = seed;
      (*meta)["permute"] = permute;
      (*meta)["rows"] = a.rows;
      (*meta)["cols"] = a.cols;
      (*meta)["nnz"] = a.nnz();
    }
    return a;
  }
};

// ---------------------------------------------------------------------------
// Cost-model flags shared by run / model.

struct CostFlags {
  CostModel cost;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--net-bw", cost.net_bw, "network bandwidth, bytes/s");
    cmd->add_option("--intra-bw", cost.intra_bw,
                    "intra-node bandwidth, bytes/s");
    cmd->add_option("--mem-bw", cost.mem_bw, "local memory bandwidth, bytes/s");
    cmd->add_option("--peak", cost.arith_peak, "arithmetic peak, flops/s");
    cmd->add_option("--latency", cost.latency, "per-transfer latency, s");
    cmd->add_option("--word", cost.w, "bytes per value word");
  }
};

json roofline_json(const RooflineReport& r) {
  return {{"local_ai", r.local_ai},
          {"internode_ai", r.internode_ai},
          {"local_peak", r.local_peak},
          {"internode_bound", r.internode_bound},
          {"bound", r.bound_kind == BoundKind::network_bound
                        ? "network"
                        : "compute"}};
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::summa_bsp, Variant::stationary_c,
                    Variant::stationary_a, Variant::stationary_b,
                    Variant::ws_random, Variant::ws_locality})
    if (s == variant_name(v)) return v;
  throw std::invalid_argument("unknown algorithm variant '" + s + "'");
}

std::filesystem::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("RDMM_OUT_DIR")) return env;
  return ".";
}

// Dense image of a CSR matrix, for the serial verification oracle.
std::vector<double> densify(const CsrTile<double>& m) {
  std::vector<double> d(std::size_t(m.rows) * m.cols, 0.0);
  for (index_t r = 0; r < m.rows; ++r)
    for (index_t s = m.row_ptr[r]; s < m.row_ptr[r + 1]; ++s)
      d[std::size_t(r) * m.cols + m.col_idx[s]] += m.values[s];
  return d;
}

// ---------------------------------------------------------------------------
// run

struct RunCmd {
  InputSpec input;
  CostFlags cost;
  std::string alg = "stationary_c";
  std::string kind = "spmm";
  std::uint64_t n = 64;        // dense / B width
  std::uint32_t p = 4;         // ranks
  std::string grid;            // "RxC"; default square_of(p)
  std::uint32_t tiles = 0;     // tile rows/cols per matrix dim; 0 = grid dims
  std::size_t heap_mb = 16;    // per-rank shared heap
  std::uint32_t node_group = 6;
  std::string ws_base = "stationary_a";
  bool no_offset = false, no_prefetch = false, verify = false;
  double delay_ns_per_flop = 0, random_delay_ms = 0;
  std::string out;

  int execute() {
    json meta;
    auto ga = input.load(&meta);
    Variant variant = parse_variant(alg);
    if (kind == "spgemm" && ga.rows != ga.cols)
      throw std::invalid_argument("spgemm squares the input (A*A); "
                                  "the matrix must be square");

    ProcGrid pg = grid.empty() ? ProcGrid::square_of(p) : [&] {
      auto x = grid.find('x');
      if (x == std::string::npos)
        throw std::invalid_argument("--grid expects RxC");
      ProcGrid g{static_cast<rank_t>(std::stoul(grid.substr(0, x))),
                 static_cast<rank_t>(std::stoul(grid.substr(x + 1)))};
      if (g.nranks() != p)
        throw std::invalid_argument("--grid does not match --p");
      return g;
    }();

    const std::uint64_t m = ga.rows, k = ga.cols;
    const std::uint64_t nn = kind == "spgemm" ? k : n;
    std::uint32_t mt = tiles ? tiles : pg.pr, kt = tiles ? tiles : pg.pc,
                  nt = tiles ? tiles : pg.pc;
    auto tile_of = [](std::uint64_t dim, std::uint32_t count) {
      return static_cast<std::uint32_t>((dim + count - 1) / count);
    };

    Fabric f({.nranks = p, .heap_bytes = heap_mb << 20,
              .node_group = node_group});
    DistSparse<double> A(f, m, k, tile_of(m, mt), tile_of(k, kt), pg, 0);

    RunOptions opts{.variant = variant,
                    .prefetch = !no_prefetch,
                    .offset = !no_offset,
                    .ws_base = parse_variant(ws_base),
                    .seed = input.seed,
                    .delay_ns_per_flop = delay_ns_per_flop,
                    .random_delay_ms_max = random_delay_ms};

    RunReport report;
    std::vector<double> got, want;
    FlopMeter meter;
    if (kind == "spmm") {
      auto gb = random_dense<double>(index_t(k), index_t(nn), input.seed + 1);
      DistDense<double> B(f, k, nn, tile_of(k, kt), tile_of(nn, nt), pg, 1);
      DistDense<double> C(f, m, nn, tile_of(m, mt), tile_of(nn, nt), pg, 2);
      run_ranks(f, [&](RankCtx& ctx) {
        A.init_from_global(ctx, ga);
        B.init_from_global(ctx, gb.values);
        C.init(ctx);
      });
      report = run_multiply(f, A, B, C, opts);
      if (verify) {
        got = C.to_global();
        want.assign(m * nn, 0.0);
        for (index_t r = 0; r < ga.rows; ++r)
          for (index_t s = ga.row_ptr[r]; s < ga.row_ptr[r + 1]; ++s)
            for (std::uint64_t j = 0; j < nn; ++j)
              want[std::size_t(r) * nn + j] +=
                  ga.values[s] * gb.values[std::size_t(ga.col_idx[s]) * nn + j];
      }
    } else if (kind == "spgemm") {
      DistSparse<double> B(f, k, nn, tile_of(k, kt), tile_of(nn, nt), pg, 1);
      DistSparse<double> C(f, m, nn, tile_of(m, mt), tile_of(nn, nt), pg, 2);
      run_ranks(f, [&](RankCtx& ctx) {
        A.init_from_global(ctx, ga);
        B.init_from_global(ctx, ga);
        C.init(ctx);
      });
      report = run_multiply(f, A, B, C, opts);
      if (verify) {
        got = densify(C.to_global());
        auto ad = densify(ga);
        want.assign(m * nn, 0.0);
        for (std::uint64_t i = 0; i < m; ++i)
          for (std::uint64_t t = 0; t < k; ++t) {
            double av = ad[i * k + t];
            if (av == 0.0) continue;
            for (std::uint64_t j = 0; j < nn; ++j)
              want[i * nn + j] += av * ad[t * nn + j];
          }
      }
    } else {
      throw std::invalid_argument("--kind must be spmm or spgemm");
    }

    for (auto& st : report.per_rank) meter += st.meter;

    // Roofline under the configured cost model.
    ProblemShape shape{.m = double(m), .k = double(k), .n = double(nn),
                       .p = double(p),
                       .d = double(ga.nnz()) / (double(m) * double(k)),
                       .w = cost.cost.w};
    auto roof = kind == "spmm"
                    ? roofline(shape, cost.cost, MultiplyKind::spmm)
                    : roofline(shape, cost.cost, MultiplyKind::spgemm, meter);

    auto clocks = virtual_time(report, cost.cost, node_group);

    // Deterministic section: byte-identical for identical config + seed.
    json det;
    det["variant"] = variant_name(variant);
    det["kind"] = kind;
    det["checksum"] = report.checksum;
    det["total_flops"] = report.total_flops();
    det["total_multiplies"] = report.total_multiplies();
    det["output_nnz"] = meter.output_nnz;
    det["traffic"] = {{"network_bytes", f.traffic().network_bytes()},
                      {"self_bytes", f.traffic().self_bytes()}};
    det["virtual_time"] = {{"makespan", makespan(clocks)}, {"clocks", clocks}};
    det["roofline"] = roofline_json(roof);
    json per_rank = json::array();
    for (rank_t r = 0; r < p; ++r) {
      const auto& st = report.per_rank[r];
      per_rank.push_back({{"rank", r},
                          {"flops", st.meter.flops},
                          {"multiplies", st.multiplies},
                          {"bytes_self", st.bytes_self},
                          {"bytes_on_node", st.bytes_on_node},
                          {"bytes_off_node", st.bytes_off_node},
                          {"queue_pushes", st.queue_pushes},
                          {"queue_pops", st.queue_pops},
                          {"virtual_clock", clocks[r]}});
    }
    det["per_rank"] = per_rank;

    // Nondeterministic section: wall-clock times and scheduling-dependent
    // counters, kept apart so CI can diff the deterministic part.
    json nondet;
    nondet["wall_seconds"] = report.wall_seconds;
    json rank_times = json::array(), rank_steals = json::array();
    for (const auto& st : report.per_rank) {
      rank_times.push_back(st.total_seconds);
      rank_steals.push_back(st.steals);
    }
    nondet["per_rank_seconds"] = rank_times;
    nondet["per_rank_steals"] = rank_steals;
    nondet["total_steals"] = report.total_steals();

    json doc;
    doc["config"] = meta;
    doc["config"]["alg"] = variant_name(variant);
    doc["config"]["kind"] = kind;
    doc["config"]["p"] = p;
    doc["config"]["grid"] = {pg.pr, pg.pc};
    doc["config"]["n"] = nn;
    doc["deterministic"] = det;
    doc["nondeterministic"] = nondet;

    auto dir = output_dir(out);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "report.json") << doc.dump(2) << "\n";
    {
      std::ofstream csv(dir / "report.csv");
      csv << "rank,flops,multiplies,bytes_self,bytes_on_node,bytes_off_node,"
             "queue_pushes,queue_pops,virtual_clock\n";
      for (rank_t r = 0; r < p; ++r) {
        const auto& st = report.per_rank[r];
        csv << r << ',' << st.meter.flops << ',' << st.multiplies << ','
            << st.bytes_self << ',' << st.bytes_on_node << ','
            << st.bytes_off_node << ',' << st.queue_pushes << ','
            << st.queue_pops << ',' << clocks[r] << "\n";
      }
    }
    {
      std::ofstream csv(dir / "timing.csv");
      csv << "rank,wall_seconds,steals\n";
      for (rank_t r = 0; r < p; ++r)
        csv << r << ',' << report.per_rank[r].total_seconds << ','
            << report.per_rank[r].steals << "\n";
    }

    if (verify) {
      if (got != want) {
        std::cerr << "verify: result differs from the serial oracle\n";
        return kExitVerify;
      }
      doc["deterministic"]["verified"] = true;
    }
    std::cout << doc["deterministic"].dump(2) << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// model

struct ModelCmd {
  CostFlags cost;
  ProblemShape shape{.m = 1024, .k = 1024, .n = 512, .p = 16, .d = 0.0625,
                     .w = 4};
  std::string kind = "spmm";
  double flops = 0, output_nnz = 0;

  int execute() {
    json doc;
    doc["shape"] = {{"m", shape.m}, {"k", shape.k}, {"n", shape.n},
                    {"p", shape.p}, {"d", shape.d}, {"w", shape.w}};
    if (shape.p_square()) {
      doc["comm_elems_per_iter"] = comm_elems_per_iter(shape);
      doc["comm_bytes_per_iter_idx4"] = comm_bytes_per_iter(shape, 4.0);
      doc["comm_bytes_per_iter_idx8"] = comm_bytes_per_iter(shape, 8.0);
    }
    if (kind == "spmm") {
      doc["internode_ai"] = spmm_internode_ai(shape);
      doc["local_ai"] = spmm_local_ai(shape);
      doc["roofline"] = roofline_json(roofline(shape, cost.cost,
                                               MultiplyKind::spmm));
    } else if (kind == "spgemm") {
      if (flops <= 0 || output_nnz <= 0)
        throw std::invalid_argument(
            "spgemm model needs --flops and --output-nnz (measured)");
      FlopMeter m;
      m.flops = static_cast<std::uint64_t>(flops);
      m.output_nnz = static_cast<std::uint64_t>(output_nnz);
      doc["local_ai"] = spgemm_local_ai(flops / output_nnz, cost.cost.w);
      doc["internode_ai"] = spgemm_internode_ai(flops, shape);
      doc["roofline"] =
          roofline_json(roofline(shape, cost.cost, MultiplyKind::spgemm, m));
    } else {
      throw std::invalid_argument("--kind must be spmm or spgemm");
    }
    std::cout << doc.dump(2) << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// imbalance

struct ImbalanceCmd {
  InputSpec input;
  std::uint32_t grid = 16;
  std::uint32_t stages = 0;  // 0: one tile step per grid column
  std::string csv;           // optional stage-flop table dump

  int execute() {
    json meta;
    auto a = input.load(&meta);
    json doc;
    doc["config"] = meta;
    doc["config"]["grid"] = grid;
    if (a.rows == a.cols) {
      auto rep = stage_imbalance(a, grid, stages);
      doc["config"]["stages"] = stages ? stages : grid;
      doc["nnz_imbalance"] = rep.nnz_imbalance;
      doc["end_to_end_flop_imbalance"] = rep.end_to_end_flop_imbalance;
      doc["per_stage_flop_imbalance"] = rep.per_stage_flop_imbalance;
      if (!csv.empty()) {
        std::ofstream out(csv);
        out << "rank,stage,flops\n";
        for (std::size_t r = 0; r < rep.stage_flops.size(); ++r)
          for (std::size_t s = 0; s < rep.stage_flops[r].size(); ++s)
            out << r << ',' << s << ',' << rep.stage_flops[r][s] << "\n";
      }
    } else {
      // Rectangular matrices get the nnz metric only.
      doc["nnz_imbalance"] = nnz_imbalance(a, grid, grid);
    }
    std::cout << doc.dump(2) << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// gen

struct GenCmd {
  InputSpec input;
  std::string out = "matrix.mtx";

  int execute() {
    json meta;
    auto a = input.load(&meta);
    write_matrix_market(a, out);
    meta["written"] = out;
    std::cout << meta.dump(2) << "\n";
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale simulator for RDMA-style distributed sparse "
               "matrix multiplication"};
  app.require_subcommand(1);

  RunCmd run;
  auto* run_cmd = app.add_subcommand("run", "run one multiply variant");
  run.input.add_flags(run_cmd);
  run.cost.add_flags(run_cmd);
  run_cmd->add_option("--alg", run.alg,
                      "summa_bsp | stationary_c | stationary_a | stationary_b "
                      "| ws_random | ws_locality");
  run_cmd->add_option("--kind", run.kind, "spmm | spgemm");
  run_cmd->add_option("--n", run.n, "dense-operand width (spmm)");
  run_cmd->add_option("--p", run.p, "rank count");
  run_cmd->add_option("--grid", run.grid, "processor grid RxC");
  run_cmd->add_option("--tiles", run.tiles,
                      "tile rows/cols per matrix dimension");
  run_cmd->add_option("--heap-mb", run.heap_mb, "per-rank shared heap, MiB");
  run_cmd->add_option("--node-group", run.node_group,
                      "ranks per emulated node");
  run_cmd->add_option("--ws-base", run.ws_base,
                      "base distribution for workstealing variants");
  run_cmd->add_flag("--no-offset", run.no_offset,
                    "disable staggered iteration offsets");
  run_cmd->add_flag("--no-prefetch", run.no_prefetch,
                    "disable tile prefetching");
  run_cmd->add_flag("--verify", run.verify,
                    "compare against the serial oracle (exit 3 on mismatch)");
  run_cmd->add_option("--delay-ns-per-flop", run.delay_ns_per_flop,
                      "injected compute slowdown");
  run_cmd->add_option("--random-delay-ms", run.random_delay_ms,
                      "max uniform extra delay per multiply");
  run_cmd->add_option("--out", run.out,
                      "report directory (default $RDMM_OUT_DIR or .)");

  ModelCmd model;
  auto* model_cmd = app.add_subcommand("model", "evaluate the cost model");
  model.cost.add_flags(model_cmd);
  model_cmd->add_option("--m", model.shape.m, "global rows of A");
  model_cmd->add_option("--k", model.shape.k, "global cols of A");
  model_cmd->add_option("--n", model.shape.n, "global cols of B");
  model_cmd->add_option("--p", model.shape.p, "rank count");
  model_cmd->add_option("--d", model.shape.d, "density of the sparse operand");
  model_cmd->add_option("--w", model.shape.w, "bytes per value word");
  model_cmd->add_option("--kind", model.kind, "spmm | spgemm");
  model_cmd->add_option("--flops", model.flops, "measured flops (spgemm)");
  model_cmd->add_option("--output-nnz", model.output_nnz,
                        "measured output nonzeros (spgemm)");

  ImbalanceCmd imb;
  auto* imb_cmd = app.add_subcommand("imbalance", "imbalance metrics");
  imb.input.add_flags(imb_cmd);
  imb_cmd->add_option("--grid", imb.grid, "square rank grid dimension");
  imb_cmd->add_option("--stages", imb.stages,
                      "tile steps (default: one per grid column)");
  imb_cmd->add_option("--csv", imb.csv, "write the stage-flop table here");

  GenCmd gen;
  auto* gen_cmd = app.add_subcommand("gen", "write a matrix to disk");
  gen.input.add_flags(gen_cmd);
  gen_cmd->add_option("-o,--out", gen.out, "output path (.mtx)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return run.execute();
    if (*model_cmd) return model.execute();
    if (*imb_cmd) return imb.execute();
    if (*gen_cmd) return gen.execute();
  } catch (const heap_exhausted_error& e) {
    std::cerr << "resource exhaustion: " << e.what()
              << " (raise --heap-mb)\n";
    return kExitResource;
  } catch (const queue_full_error& e) {
    std::cerr << "resource exhaustion: " << e.what() << "\n";
    return kExitResource;
  } catch (const protocol_error& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return kExitVerify;
  } catch (const std::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
