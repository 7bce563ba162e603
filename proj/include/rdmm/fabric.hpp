#ifndef RDMM_FABRIC_HPP
#define RDMM_FABRIC_HPP

// Emulated one-sided communication fabric: P ranks inside one process,
// symmetric shared heaps, put/get, remote atomics, remote queues, barriers,
// and byte-exact traffic accounting.

#include <algorithm>
#include <atomic>
#include <barrier>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace rdmm {

using rank_t = std::uint32_t;

struct GlobalPtr {
  rank_t rank = 0;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;

  bool operator==(const GlobalPtr&) const = default;
};

class fabric_error : public std::runtime_error {
 public:
  explicit fabric_error(const std::string& what) : std::runtime_error(what) {}
};

class heap_exhausted_error : public fabric_error {
 public:
  heap_exhausted_error(std::size_t requested, std::size_t remaining)
      : fabric_error("shared heap exhausted: requested " +
                     std::to_string(requested) + " bytes, " +
                     std::to_string(remaining) + " remaining"),
        requested(requested),
        remaining(remaining) {}
  std::size_t requested;
  std::size_t remaining;
};

class queue_full_error : public fabric_error {
 public:
  explicit queue_full_error(std::size_t capacity)
      : fabric_error("remote queue full (capacity " + std::to_string(capacity) +
                     ")") {}
};

// Per-rank event stream used for virtual-time replay.
struct Event {
  enum class Kind { transfer, compute, queue_op };
  Kind kind;
  rank_t src = 0;   // rank the bytes come from (transfer)
  rank_t dst = 0;   // rank the bytes land on
  std::uint64_t bytes = 0;
  std::uint64_t flops = 0;
};

struct TrafficCounters {
  std::uint64_t bytes_put = 0;
  std::uint64_t bytes_got = 0;
  std::uint64_t puts = 0;
  std::uint64_t gets = 0;
  std::uint64_t atomic_ops = 0;

  TrafficCounters& operator+=(const TrafficCounters& o) {
    bytes_put += o.bytes_put;
    bytes_got += o.bytes_got;
    puts += o.puts;
    gets += o.gets;
    atomic_ops += o.atomic_ops;
    return *this;
  }
};

// Record of one whole-tile fetch, for per-step communication-shape checks.
struct TileFetch {
  rank_t src;          // owner of the tile
  rank_t dst;          // requesting rank
  std::int64_t label;  // requester's iteration label at fetch time
  int matrix;          // caller-chosen matrix id
  std::uint32_t i, j;  // tile coordinates
};

// Byte-exact communication accounting, keyed by (src, dst, iteration label).
// Self transfers and intra-node-group transfers are kept distinguishable so
// network-only volume can be reported.
class TrafficLog {
 public:
  explicit TrafficLog(rank_t nranks, rank_t node_group = 6)
      : nranks_(nranks), node_group_(node_group == 0 ? 1 : node_group) {}

  void record_put(rank_t src, rank_t dst, std::int64_t label,
                  std::uint64_t bytes) {
    std::scoped_lock lk(mu_);
    auto& c = cells_[key(src, dst, label)];
    c.bytes_put += bytes;
    c.puts += 1;
  }
  void record_get(rank_t owner, rank_t caller, std::int64_t label,
                  std::uint64_t bytes) {
    std::scoped_lock lk(mu_);
    auto& c = cells_[key(owner, caller, label)];
    c.bytes_got += bytes;
    c.gets += 1;
  }
  void record_atomic(rank_t caller, rank_t owner, std::int64_t label) {
    std::scoped_lock lk(mu_);
    cells_[key(caller, owner, label)].atomic_ops += 1;
  }
  void record_tile_fetch(const TileFetch& f) {
    std::scoped_lock lk(mu_);
    tile_fetches_.push_back(f);
  }

  rank_t node_of(rank_t r) const { return r / node_group_; }
  bool same_node(rank_t a, rank_t b) const { return node_of(a) == node_of(b); }

  // Aggregate over all labels for a (src, dst) pair.
  TrafficCounters pair_total(rank_t src, rank_t dst) const {
    std::scoped_lock lk(mu_);
    TrafficCounters t;
    for (const auto& [k, c] : cells_)
      if (std::get<0>(k) == src && std::get<1>(k) == dst) t += c;
    return t;
  }

  TrafficCounters label_total(rank_t src, rank_t dst,
                              std::int64_t label) const {
    std::scoped_lock lk(mu_);
    auto it = cells_.find(key(src, dst, label));
    return it == cells_.end() ? TrafficCounters{} : it->second;
  }

  // Bytes received by `caller` under `label`, from any rank.
  std::uint64_t bytes_received(rank_t caller, std::int64_t label) const {
    std::scoped_lock lk(mu_);
    std::uint64_t n = 0;
    for (const auto& [k, c] : cells_)
      if (std::get<1>(k) == caller && std::get<2>(k) == label)
        n += c.bytes_got + c.bytes_put;
    return n;
  }

  TrafficCounters total() const {
    std::scoped_lock lk(mu_);
    TrafficCounters t;
    for (const auto& [k, c] : cells_) t += c;
    return t;
  }

  // Volume crossing node-group boundaries (excludes self and intra-node).
  std::uint64_t network_bytes() const {
    std::scoped_lock lk(mu_);
    std::uint64_t n = 0;
    for (const auto& [k, c] : cells_)
      if (!same_node(std::get<0>(k), std::get<1>(k)))
        n += c.bytes_put + c.bytes_got;
    return n;
  }

  std::uint64_t self_bytes() const {
    std::scoped_lock lk(mu_);
    std::uint64_t n = 0;
    for (const auto& [k, c] : cells_)
      if (std::get<0>(k) == std::get<1>(k)) n += c.bytes_put + c.bytes_got;
    return n;
  }

  std::vector<TileFetch> tile_fetches() const {
    std::scoped_lock lk(mu_);
    return tile_fetches_;
  }

  void clear() {
    std::scoped_lock lk(mu_);
    cells_.clear();
    tile_fetches_.clear();
  }

 private:
  using Key = std::tuple<rank_t, rank_t, std::int64_t>;
  static Key key(rank_t s, rank_t d, std::int64_t l) { return {s, d, l}; }

  rank_t nranks_;
  rank_t node_group_;
  mutable std::mutex mu_;
  std::map<Key, TrafficCounters> cells_;
  std::vector<TileFetch> tile_fetches_;
};

struct FabricConfig {
  rank_t nranks = 1;
  std::size_t heap_bytes = 64ull << 20;  // per rank
  rank_t node_group = 6;                 // ranks per emulated node
  std::size_t queue_capacity = 4096;     // default remote queue capacity
};

class RankCtx;

// The emulated machine. Internally synchronized; all operations are safe to
// invoke concurrently from distinct rank contexts.
class Fabric {
 public:
  explicit Fabric(FabricConfig cfg)
      : cfg_(cfg),
        traffic_(cfg.nranks, cfg.node_group),
        heaps_(cfg.nranks),
        barrier_(cfg.nranks) {
    if (cfg.nranks == 0) throw fabric_error("nranks must be positive");
    for (auto& h : heaps_) h.init(cfg.heap_bytes);
  }

  Fabric(const Fabric&) = delete;
  Fabric& operator=(const Fabric&) = delete;

  rank_t nranks() const { return cfg_.nranks; }
  const FabricConfig& config() const { return cfg_; }
  TrafficLog& traffic() { return traffic_; }
  const TrafficLog& traffic() const { return traffic_; }

  GlobalPtr alloc(rank_t rank, std::size_t nbytes) {
    check_rank(rank);
    return heaps_[rank].alloc(rank, nbytes);
  }

  void free(GlobalPtr p) {
    check_rank(p.rank);
    heaps_[p.rank].free(p);
  }

  std::size_t heap_remaining(rank_t rank) const {
    return heaps_[rank].remaining();
  }

  // Direct host-side access to heap bytes; verification/reporting surface,
  // bypasses traffic accounting.
  const std::byte* raw(GlobalPtr p) const {
    heaps_[p.rank].validate(p);
    return heaps_[p.rank].data() + p.offset;
  }

  struct TransferHandle {
    bool waited = false;
    std::exception_ptr error;
  };

  // --- queues -------------------------------------------------------------

  using queue_id = std::size_t;

  queue_id create_queue(rank_t owner, std::size_t capacity) {
    check_rank(owner);
    std::scoped_lock lk(queues_mu_);
    queues_.push_back(std::make_unique<Queue>(owner, capacity));
    return queues_.size() - 1;
  }

  rank_t queue_owner(queue_id q) const { return queues_.at(q)->owner; }

 private:
  friend class RankCtx;

  struct Heap {
    void init(std::size_t cap) {
      storage.assign(cap, std::byte{0});
      free_list.push_back({0, cap});
      remaining_ = cap;
    }

    GlobalPtr alloc(rank_t rank, std::size_t nbytes) {
      std::scoped_lock lk(mu);
      std::size_t need = align_up(nbytes);
      // first fit
      for (auto it = free_list.begin(); it != free_list.end(); ++it) {
        if (it->second >= need) {
          std::uint64_t off = it->first;
          if (it->second == need)
            free_list.erase(it);
          else {
            it->first += need;
            it->second -= need;
          }
          live[off] = need;
          remaining_ -= need;
          return GlobalPtr{rank, off, nbytes};
        }
      }
      throw heap_exhausted_error(nbytes, remaining_);
    }

    void free(GlobalPtr p) {
      std::scoped_lock lk(mu);
      auto it = live.find(p.offset);
      if (it == live.end())
        throw fabric_error("free of unknown or already-freed allocation");
      remaining_ += it->second;
      free_list.push_back({it->first, it->second});
      live.erase(it);
      coalesce();
    }

    void validate(GlobalPtr p) const {
      std::scoped_lock lk(mu);
      // p must be fully inside one live allocation
      auto it = live.upper_bound(p.offset);
      if (it != live.begin()) {
        --it;
        if (p.offset >= it->first &&
            p.offset + p.length <= it->first + it->second)
          return;
      }
      if (p.length == 0 && p.offset <= storage.size()) return;
      throw fabric_error("dangling or out-of-range global pointer");
    }

    std::size_t remaining() const {
      std::scoped_lock lk(mu);
      return remaining_;
    }

    const std::byte* data() const { return storage.data(); }
    std::byte* data() { return storage.data(); }

    static std::size_t align_up(std::size_t n) {
      return n == 0 ? 8 : (n + 7) & ~std::size_t{7};
    }

    void coalesce() {
      std::sort(free_list.begin(), free_list.end());
      std::vector<std::pair<std::uint64_t, std::size_t>> merged;
      for (auto& b : free_list) {
        if (!merged.empty() &&
            merged.back().first + merged.back().second == b.first)
          merged.back().second += b.second;
        else
          merged.push_back(b);
      }
      free_list = std::move(merged);
    }

    std::vector<std::byte> storage;
    std::vector<std::pair<std::uint64_t, std::size_t>> free_list;
    std::map<std::uint64_t, std::size_t> live;
    std::size_t remaining_ = 0;
    mutable std::mutex mu;
  };

  struct QueueSlot {
    std::atomic<std::uint32_t> ready{0};
    GlobalPtr value;
  };

  struct Queue {
    Queue(rank_t owner, std::size_t capacity)
        : owner(owner), capacity(capacity), slots(capacity) {}
    rank_t owner;
    std::size_t capacity;
    std::atomic<std::int64_t> tail{0};  // reserved by producers
    std::atomic<std::int64_t> head{0};  // consumed by owner
    std::vector<QueueSlot> slots;
  };

  // Word-granularity copies: racing transfers observe 4-byte-atomic data
  // when both sides are 4-byte aligned.
  static void copy_bytes(std::byte* dst, const std::byte* src, std::size_t n) {
    auto aligned4 = [](const void* p) {
      return (reinterpret_cast<std::uintptr_t>(p) & 3u) == 0;
    };
    if (n >= 4 && aligned4(dst) && aligned4(src)) {
      std::size_t words = n / 4;
      auto* d = reinterpret_cast<std::uint32_t*>(dst);
      auto* s = const_cast<std::uint32_t*>(
          reinterpret_cast<const std::uint32_t*>(src));
      for (std::size_t w = 0; w < words; ++w) {
        std::uint32_t v =
            std::atomic_ref<std::uint32_t>(s[w]).load(
                std::memory_order_relaxed);
        std::atomic_ref<std::uint32_t>(d[w]).store(v,
                                                   std::memory_order_relaxed);
      }
      std::size_t tail = n - words * 4;
      if (tail) std::memcpy(dst + words * 4, src + words * 4, tail);
    } else {
      std::memcpy(dst, src, n);
    }
  }

  void check_rank(rank_t r) const {
    if (r >= cfg_.nranks) throw fabric_error("rank out of range");
  }

  FabricConfig cfg_;
  TrafficLog traffic_;
  std::vector<Heap> heaps_;
  std::barrier<> barrier_;
  std::mutex queues_mu_;
  std::vector<std::unique_ptr<Queue>> queues_;
};

// Per-rank handle through which all fabric operations are issued.  One
// RankCtx per rank context; calls within a rank are sequential.
class RankCtx {
 public:
  RankCtx(Fabric& f, rank_t rank) : fabric_(&f), rank_(rank) {}

  rank_t rank() const { return rank_; }
  rank_t nranks() const { return fabric_->nranks(); }
  Fabric& fabric() { return *fabric_; }

  void set_phase(std::int64_t label) { label_ = label; }
  std::int64_t phase() const { return label_; }

  // Optional per-rank event sink for virtual-time replay.
  void set_event_sink(std::vector<Event>* sink) { sink_ = sink; }

  GlobalPtr alloc(std::size_t nbytes) { return fabric_->alloc(rank_, nbytes); }
  GlobalPtr alloc_on(rank_t r, std::size_t nbytes) {
    return fabric_->alloc(r, nbytes);
  }
  void free(GlobalPtr p) { fabric_->free(p); }

  void put(std::span<const std::byte> src, GlobalPtr dst) {
    if (src.size() != dst.length)
      throw fabric_error("put: span length does not match pointer length");
    auto& heap = fabric_->heaps_[dst.rank];
    heap.validate(dst);
    Fabric::copy_bytes(heap.data() + dst.offset, src.data(), src.size());
    fabric_->traffic_.record_put(rank_, dst.rank, label_, src.size());
    emit({Event::Kind::transfer, rank_, dst.rank, src.size(), 0});
  }

  void get(GlobalPtr src, std::span<std::byte> dst) {
    if (dst.size() != src.length)
      throw fabric_error("get: span length does not match pointer length");
    auto& heap = fabric_->heaps_[src.rank];
    heap.validate(src);
    Fabric::copy_bytes(dst.data(), heap.data() + src.offset, dst.size());
    fabric_->traffic_.record_get(src.rank, rank_, label_, dst.size());
    emit({Event::Kind::transfer, src.rank, rank_, dst.size(), 0});
  }

  Fabric::TransferHandle get_nb(GlobalPtr src, std::span<std::byte> dst) {
    Fabric::TransferHandle h;
    try {
      get(src, dst);
    } catch (...) {
      h.error = std::current_exception();
    }
    return h;
  }

  // Idempotent; surfaces any error captured at issue time.
  void wait(Fabric::TransferHandle& h) {
    if (h.waited) return;
    h.waited = true;
    if (h.error) std::rethrow_exception(h.error);
  }

  std::int64_t fetch_add(GlobalPtr counter, std::int64_t delta) {
    if (counter.length != sizeof(std::int64_t))
      throw fabric_error("fetch_add: pointer must name one 8-byte integer");
    if (counter.offset % 8 != 0)
      throw fabric_error("fetch_add: misaligned counter");
    auto& heap = fabric_->heaps_[counter.rank];
    heap.validate(counter);
    auto* cell =
        reinterpret_cast<std::int64_t*>(heap.data() + counter.offset);
    std::int64_t prev = std::atomic_ref<std::int64_t>(*cell).fetch_add(
        delta, std::memory_order_seq_cst);
    fabric_->traffic_.record_atomic(rank_, counter.rank, label_);
    emit({Event::Kind::transfer, rank_, counter.rank, sizeof(std::int64_t), 0});
    return prev;
  }

  // Convenience: typed put/get of one 8-byte integer.
  void put_i64(std::int64_t v, GlobalPtr dst) {
    put(std::as_bytes(std::span{&v, 1}), dst);
  }
  std::int64_t get_i64(GlobalPtr src) {
    std::int64_t v = 0;
    get(src, std::as_writable_bytes(std::span{&v, 1}));
    return v;
  }

  // Push is a fetch-add on the tail plus a put of the entry; each entry is
  // delivered exactly once.  Per-producer FIFO; cross-producer order is
  // unspecified.
  void queue_push(Fabric::queue_id qid, GlobalPtr v) {
    auto& q = *fabric_->queues_.at(qid);
    std::int64_t t = q.tail.fetch_add(1, std::memory_order_seq_cst);
    if (t - q.head.load(std::memory_order_acquire) >=
        static_cast<std::int64_t>(q.capacity))
      throw queue_full_error(q.capacity);
    auto& slot = q.slots[static_cast<std::size_t>(t) % q.capacity];
    slot.value = v;
    slot.ready.store(1, std::memory_order_release);
    fabric_->traffic_.record_atomic(rank_, q.owner, label_);
    fabric_->traffic_.record_put(rank_, q.owner, label_, sizeof(GlobalPtr));
    emit({Event::Kind::queue_op, rank_, q.owner, sizeof(GlobalPtr), 0});
  }

  // Only the queue owner may pop.
  std::optional<GlobalPtr> queue_pop(Fabric::queue_id qid) {
    auto& q = *fabric_->queues_.at(qid);
    if (q.owner != rank_)
      throw fabric_error("queue_pop: caller is not the queue owner");
    std::int64_t h = q.head.load(std::memory_order_relaxed);
    auto& slot = q.slots[static_cast<std::size_t>(h) % q.capacity];
    if (slot.ready.load(std::memory_order_acquire) == 0) return std::nullopt;
    GlobalPtr v = slot.value;
    slot.ready.store(0, std::memory_order_release);
    q.head.store(h + 1, std::memory_order_release);
    return v;
  }

  // Collective across all ranks; all puts/pushes issued before the barrier
  // are visible after it.
  void barrier() { fabric_->barrier_.arrive_and_wait(); }

  void record_tile_fetch(rank_t owner, int matrix, std::uint32_t i,
                         std::uint32_t j) {
    fabric_->traffic_.record_tile_fetch({owner, rank_, label_, matrix, i, j});
  }

  void emit_compute(std::uint64_t flops) {
    emit({Event::Kind::compute, rank_, rank_, 0, flops});
  }

 private:
  void emit(Event e) {
    if (sink_) sink_->push_back(e);
  }

  Fabric* fabric_;
  rank_t rank_;
  std::int64_t label_ = 0;
  std::vector<Event>* sink_ = nullptr;
};

// Runs `fn(ctx)` on every rank, one thread per rank; rethrows the first
// exception raised by any rank after all threads join.
template <typename F>
void run_ranks(Fabric& f, F&& fn) {
  std::vector<std::thread> threads;
  std::mutex err_mu;
  std::exception_ptr first_error;
  threads.reserve(f.nranks());
  for (rank_t r = 0; r < f.nranks(); ++r) {
    threads.emplace_back([&, r] {
      try {
        RankCtx ctx(f, r);
        fn(ctx);
      } catch (...) {
        std::scoped_lock lk(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rdmm

#endif  // RDMM_FABRIC_HPP
