/*
Copyright 2026 The Sparklet Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

// In-process data-parallel execution core. Partitions stand in for workers;
// every byte that would cross a worker boundary or touch the driver is
// charged to the context's CommLedger.

#include <algorithm>
#include <atomic>
#include <concepts>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ranges>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <type_traits>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sparklet/error.hpp"

namespace sparklet {

// ---------------------------------------------------------------------------
// Serialized-size estimates
// ---------------------------------------------------------------------------

template <class T>
concept HasWireSize = requires(const T& v) {
  { v.wireSize() } -> std::convertible_to<std::uint64_t>;
};

template <class T>
concept TupleLike = requires { std::tuple_size<T>::value; } && !std::ranges::range<T>;

/// Deterministic byte-size estimate: element count times canonical element
/// width. Types opt in with a `wireSize()` member.
template <class T>
std::uint64_t wireSize(const T& value) {
  if constexpr (HasWireSize<T>) {
    return static_cast<std::uint64_t>(value.wireSize());
  } else if constexpr (std::is_arithmetic_v<T> || std::is_enum_v<T>) {
    return sizeof(T);
  } else if constexpr (std::ranges::range<T>) {
    std::uint64_t total = 0;
    for (const auto& e : value) total += wireSize(e);
    return total;
  } else if constexpr (TupleLike<T>) {
    return std::apply([](const auto&... parts) { return (std::uint64_t{0} + ... + wireSize(parts)); }, value);
  } else {
    static_assert(sizeof(T) == 0, "wireSize: provide a wireSize() member for this type");
  }
}

// ---------------------------------------------------------------------------
// Configuration and ledger
// ---------------------------------------------------------------------------

struct EngineConfig {
  std::size_t workers = 1;
  int defaultDepth = 2;
  std::size_t defaultPartitions = 4;

  /// Reads SPARKLET_WORKERS, SPARKLET_AGG_DEPTH and SPARKLET_PARTITIONS,
  /// keeping the defaults for unset or malformed variables.
  static EngineConfig fromEnvironment() {
    EngineConfig cfg;
    auto read = [](const char* name) -> std::optional<long> {
      const char* raw = std::getenv(name);
      if (raw == nullptr || *raw == '\0') return std::nullopt;
      char* end = nullptr;
      const long v = std::strtol(raw, &end, 10);
      if (end == raw || *end != '\0' || v < 1) return std::nullopt;
      return v;
    };
    if (auto v = read("SPARKLET_WORKERS")) cfg.workers = static_cast<std::size_t>(*v);
    if (auto v = read("SPARKLET_AGG_DEPTH")) cfg.defaultDepth = static_cast<int>(*v);
    if (auto v = read("SPARKLET_PARTITIONS")) cfg.defaultPartitions = static_cast<std::size_t>(*v);
    return cfg;
  }
};

struct LedgerSnapshot {
  std::uint64_t driverInBytes = 0;
  std::uint64_t driverOutBytes = 0;
  std::uint64_t interPartitionBytes = 0;
  std::uint64_t maxDriverInDegree = 0;
  std::uint64_t aggregations = 0;
  std::uint64_t broadcasts = 0;

  std::uint64_t totalBytes() const noexcept { return driverInBytes + driverOutBytes + interPartitionBytes; }

  nlohmann::json toJson() const {
    return {{"driverInBytes", driverInBytes},
            {"driverOutBytes", driverOutBytes},
            {"interPartitionBytes", interPartitionBytes},
            {"maxDriverInDegree", maxDriverInDegree}};
  }

  friend bool operator==(const LedgerSnapshot&, const LedgerSnapshot&) = default;
};

/// Per-run communication accounting. All counters only grow until reset().
class CommLedger {
 public:
  void chargeDriverIn(std::uint64_t bytes) noexcept { driverIn_.fetch_add(bytes, std::memory_order_relaxed); }
  void chargeDriverOut(std::uint64_t bytes) noexcept { driverOut_.fetch_add(bytes, std::memory_order_relaxed); }
  void chargeInterPartition(std::uint64_t bytes) noexcept { inter_.fetch_add(bytes, std::memory_order_relaxed); }

  void noteDriverInDegree(std::uint64_t degree) noexcept {
    std::uint64_t seen = maxDegree_.load(std::memory_order_relaxed);
    while (degree > seen && !maxDegree_.compare_exchange_weak(seen, degree, std::memory_order_relaxed)) {
    }
  }

  void noteAggregation() noexcept { aggregations_.fetch_add(1, std::memory_order_relaxed); }
  void noteBroadcast() noexcept { broadcasts_.fetch_add(1, std::memory_order_relaxed); }

  LedgerSnapshot snapshot() const noexcept {
    return {driverIn_.load(), driverOut_.load(), inter_.load(), maxDegree_.load(), aggregations_.load(),
            broadcasts_.load()};
  }

  void reset() noexcept {
    driverIn_ = 0;
    driverOut_ = 0;
    inter_ = 0;
    maxDegree_ = 0;
    aggregations_ = 0;
    broadcasts_ = 0;
  }

 private:
  std::atomic<std::uint64_t> driverIn_{0};
  std::atomic<std::uint64_t> driverOut_{0};
  std::atomic<std::uint64_t> inter_{0};
  std::atomic<std::uint64_t> maxDegree_{0};
  std::atomic<std::uint64_t> aggregations_{0};
  std::atomic<std::uint64_t> broadcasts_{0};
};

/// Shape of a tree aggregation over `P` partials.
struct AggregationPlan {
  int depth = 1;
  std::size_t scale = 2;

  /// scale = max(2, ceil(P^(1/depth))), computed in integers.
  static AggregationPlan make(std::size_t numPartials, int depth) {
    if (depth < 1) throw InvalidArgument("aggregation depth must be >= 1, got " + std::to_string(depth));
    std::size_t s = 1;
    auto reaches = [&](std::size_t base) {
      std::size_t acc = 1;
      for (int i = 0; i < depth; ++i) {
        acc *= base;
        if (acc >= numPartials) return true;
      }
      return acc >= numPartials;
    };
    while (!reaches(s)) ++s;
    return {depth, std::max<std::size_t>(2, s)};
  }
};

// ---------------------------------------------------------------------------
// Context, broadcast, dataset
// ---------------------------------------------------------------------------

template <class T>
class Dataset;

template <class T>
class Broadcast {
 public:
  Broadcast(std::shared_ptr<const T> value, std::uint64_t id, std::uint64_t bytes)
      : value_(std::move(value)), id_(id), bytes_(bytes) {}

  const T& value() const noexcept { return *value_; }
  const T& operator*() const noexcept { return *value_; }
  const T* operator->() const noexcept { return value_.get(); }
  std::uint64_t payloadId() const noexcept { return id_; }
  std::uint64_t byteSize() const noexcept { return bytes_; }

 private:
  std::shared_ptr<const T> value_;
  std::uint64_t id_;
  std::uint64_t bytes_;
};

struct PartitionInfo {
  std::size_t index = 0;
  /// Global position of the partition's first element.
  std::size_t offset = 0;
};

/// Owns the engine configuration and the communication ledger. Datasets keep a
/// non-owning pointer to their context, which must outlive them.
class Context {
 public:
  explicit Context(EngineConfig config = {}) : config_(config) {
    if (config_.workers == 0) config_.workers = 1;
    if (config_.defaultPartitions == 0) config_.defaultPartitions = 1;
  }

  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;

  const EngineConfig& config() const noexcept { return config_; }
  CommLedger& ledger() noexcept { return ledger_; }
  const CommLedger& ledger() const noexcept { return ledger_; }

  /// Splits `items` into contiguous runs: the first n mod P partitions hold
  /// ceil(n/P) elements, the rest floor(n/P).
  template <class T>
  Dataset<T> parallelize(std::vector<T> items, std::optional<std::size_t> numPartitions = std::nullopt,
                         std::uint64_t seed = 0);

  /// Charges byteSize(value) to the driver once per receiving partition.
  template <class T>
  Broadcast<T> broadcast(T value, std::optional<std::size_t> numPartitions = std::nullopt) {
    const std::size_t parts = numPartitions.value_or(config_.defaultPartitions);
    const std::uint64_t bytes = wireSize(value);
    ledger_.chargeDriverOut(bytes * parts);
    ledger_.noteBroadcast();
    return Broadcast<T>(std::make_shared<const T>(std::move(value)), nextPayloadId_.fetch_add(1), bytes);
  }

  /// Runs task(0..n-1) on up to `workers` threads. The first exception thrown
  /// by any task is rethrown after all threads join.
  void parallelFor(std::size_t n, const std::function<void(std::size_t)>& task) const {
    const std::size_t threads = std::min(config_.workers, n);
    if (threads <= 1) {
      for (std::size_t i = 0; i < n; ++i) task(i);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failureMutex;
    {
      std::vector<std::jthread> pool;
      pool.reserve(threads);
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
          for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
              task(i);
            } catch (...) {
              std::lock_guard lock(failureMutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

 private:
  EngineConfig config_;
  CommLedger ledger_;
  std::atomic<std::uint64_t> nextPayloadId_{1};
};

/// Immutable partitioned collection. Copies share storage.
template <class T>
class Dataset {
 public:
  using value_type = T;
  using Partitions = std::vector<std::vector<T>>;

  Dataset(Context& ctx, Partitions partitions, std::uint64_t seed)
      : ctx_(&ctx), parts_(std::make_shared<const Partitions>(std::move(partitions))), seed_(seed) {
    if (parts_->empty()) throw InvalidArgument("a dataset needs at least one partition");
    offsets_.reserve(parts_->size() + 1);
    offsets_.push_back(0);
    for (const auto& p : *parts_) offsets_.push_back(offsets_.back() + p.size());
  }

  Context& context() const noexcept { return *ctx_; }
  std::size_t numPartitions() const noexcept { return parts_->size(); }
  std::size_t count() const noexcept { return offsets_.back(); }
  bool empty() const noexcept { return count() == 0; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::span<const T> partition(std::size_t i) const { return parts_->at(i); }
  std::size_t partitionOffset(std::size_t i) const { return offsets_.at(i); }

  /// Local copy of every element in global order. Does not touch the ledger;
  /// use collect() for driver-side materialization.
  std::vector<T> toVector() const {
    std::vector<T> out;
    out.reserve(count());
    for (const auto& p : *parts_) out.insert(out.end(), p.begin(), p.end());
    return out;
  }

  /// Materializes the dataset at the driver.
  std::vector<T> collect() const {
    auto out = toVector();
    ctx_->ledger().chargeDriverIn(wireSize(out));
    ctx_->ledger().noteDriverInDegree(numPartitions());
    return out;
  }

  /// Output partition i = f(partition i). `f` may also take a PartitionInfo.
  template <class F>
  auto mapPartitions(F f) const {
    using Result = decltype(invokePartition(f, std::span<const T>{}, PartitionInfo{}));
    using U = std::ranges::range_value_t<Result>;
    std::vector<std::vector<U>> out(numPartitions());
    ctx_->parallelFor(numPartitions(), [&](std::size_t i) {
      auto produced = invokePartition(f, partition(i), PartitionInfo{i, offsets_[i]});
      if constexpr (std::is_same_v<std::remove_cvref_t<Result>, std::vector<U>>) {
        out[i] = std::move(produced);
      } else {
        out[i].assign(std::ranges::begin(produced), std::ranges::end(produced));
      }
    });
    return Dataset<U>(*ctx_, std::move(out), seed_);
  }

  template <class F>
  auto map(F f) const {
    using U = std::remove_cvref_t<std::invoke_result_t<F&, const T&>>;
    return mapPartitions([f](std::span<const T> part) {
      std::vector<U> out;
      out.reserve(part.size());
      for (const auto& e : part) out.push_back(f(e));
      return out;
    });
  }

  /// Folds each partition from `zero` with seqOp, merges partials in
  /// contiguous groups of `scale` until at most `scale` remain, then merges
  /// those left-to-right at the driver.
  ///
  /// seqOp is called as seqOp(acc, element) or seqOp(acc, element, globalIndex)
  /// and either returns the new accumulator or mutates `acc` in place.
  /// combOp(acc, other) follows the same convention.
  template <class Acc, class SeqOp, class CombOp>
  Acc treeAggregate(Acc zero, SeqOp seqOp, CombOp combOp, std::optional<int> depth = std::nullopt) const {
    const int d = depth.value_or(ctx_->config().defaultDepth);
    const AggregationPlan plan = AggregationPlan::make(numPartitions(), d);
    CommLedger& ledger = ctx_->ledger();
    ledger.noteAggregation();

    std::vector<Acc> partials(numPartitions(), zero);
    ctx_->parallelFor(numPartitions(), [&](std::size_t p) {
      Acc& acc = partials[p];
      std::size_t index = offsets_[p];
      for (const T& element : (*parts_)[p]) {
        applySeq(seqOp, acc, element, index);
        ++index;
      }
    });

    while (partials.size() > plan.scale) {
      const std::size_t groups = (partials.size() + plan.scale - 1) / plan.scale;
      std::vector<Acc> next(groups, zero);
      ctx_->parallelFor(groups, [&](std::size_t g) {
        const std::size_t begin = g * plan.scale;
        const std::size_t end = std::min(begin + plan.scale, partials.size());
        Acc acc = std::move(partials[begin]);
        for (std::size_t i = begin + 1; i < end; ++i) {
          ledger.chargeInterPartition(wireSize(partials[i]));
          applyComb(combOp, acc, partials[i]);
        }
        next[g] = std::move(acc);
      });
      partials = std::move(next);
    }

    ledger.noteDriverInDegree(partials.size());
    for (const Acc& partial : partials) ledger.chargeDriverIn(wireSize(partial));
    Acc result = std::move(partials.front());
    for (std::size_t i = 1; i < partials.size(); ++i) applyComb(combOp, result, partials[i]);
    return result;
  }

  /// Flat aggregation: every partition partial goes straight to the driver.
  template <class Acc, class SeqOp, class CombOp>
  Acc aggregate(Acc zero, SeqOp seqOp, CombOp combOp) const {
    return treeAggregate(std::move(zero), std::move(seqOp), std::move(combOp), 1);
  }

 private:
  template <class F>
  static decltype(auto) invokePartition(F& f, std::span<const T> part, PartitionInfo info) {
    if constexpr (std::is_invocable_v<F&, std::span<const T>, PartitionInfo>) {
      return f(part, info);
    } else {
      return f(part);
    }
  }

  template <class SeqOp, class Acc>
  static void applySeq(SeqOp& seqOp, Acc& acc, const T& element, std::size_t index) {
    if constexpr (std::is_invocable_v<SeqOp&, Acc&, const T&, std::size_t>) {
      using R = std::invoke_result_t<SeqOp&, Acc&, const T&, std::size_t>;
      if constexpr (std::is_void_v<R>) {
        seqOp(acc, element, index);
      } else {
        acc = seqOp(std::move(acc), element, index);
      }
    } else {
      using R = std::invoke_result_t<SeqOp&, Acc&, const T&>;
      if constexpr (std::is_void_v<R>) {
        seqOp(acc, element);
      } else {
        acc = seqOp(std::move(acc), element);
      }
    }
  }

  template <class CombOp, class Acc>
  static void applyComb(CombOp& combOp, Acc& acc, const Acc& other) {
    using R = std::invoke_result_t<CombOp&, Acc&, const Acc&>;
    if constexpr (std::is_void_v<R>) {
      combOp(acc, other);
    } else {
      acc = combOp(std::move(acc), other);
    }
  }

  Context* ctx_;
  std::shared_ptr<const Partitions> parts_;
  std::vector<std::size_t> offsets_;
  std::uint64_t seed_;
};

template <class T>
Dataset<T> Context::parallelize(std::vector<T> items, std::optional<std::size_t> numPartitions, std::uint64_t seed) {
  const std::size_t parts = numPartitions.value_or(config_.defaultPartitions);
  if (parts < 1) throw InvalidArgument("numPartitions must be >= 1");
  const std::size_t n = items.size();
  const std::size_t base = n / parts;
  const std::size_t extra = n % parts;
  typename Dataset<T>::Partitions out(parts);
  auto it = std::make_move_iterator(items.begin());
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    out[p].assign(it, it + static_cast<std::ptrdiff_t>(len));
    it += static_cast<std::ptrdiff_t>(len);
  }
  return Dataset<T>(*this, std::move(out), seed);
}

}  // namespace sparklet
