#pragma once

// Gillespie simulation of the counts chain (Q, S) = (internal, boundary).
// A tagged arrival is followed by exchangeability: all rates depend on the
// counts only, so the tag takes part in an event with probability 1/k
// (internal) or 2/m (boundary, pair selection).

#include <algorithm>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "tangle/csv.hpp"
#include "tangle/error.hpp"
#include "tangle/model.hpp"
#include "tangle/parallel.hpp"
#include "tangle/stats.hpp"

namespace tangle {

enum class TagSelection {
  kRandom,  // each post-warmup arrival is a candidate with probability 1/gap
  kSpaced,  // every gap-th arrival counted from the first post-warmup one
};

struct SimConfig {
  ModelParams params;
  double horizon = 1e5;
  double warmup = 1e3;
  int replications = 1;
  std::uint64_t master_seed = 1;
  int tagged_count = 0;  // per replication
  TagSelection tag_selection = TagSelection::kRandom;
};

struct EventCounts {
  std::uint64_t arrivals = 0;
  std::uint64_t connections = 0;
  std::uint64_t impatience = 0;

  EventCounts& operator+=(const EventCounts& o) {
    arrivals += o.arrivals;
    connections += o.connections;
    impatience += o.impatience;
    return *this;
  }
};

struct ReplicationStats {
  double mean_internal = 0.0;
  double mean_boundary = 0.0;
  double throughput = 0.0;
  EventCounts total;   // whole trajectory
  EventCounts window;  // inside [warmup, horizon]
  int min_boundary = 0;
  int max_boundary = 0;
  int final_internal = 0;
  std::vector<double> sojourns;
};

struct SimResult {
  Estimate mean_internal;
  Estimate mean_boundary;
  Estimate th_estimate;
  std::vector<double> sojourn_samples;
  EventCounts event_counts;
  int min_boundary = 0;
  int max_boundary = 0;
  std::vector<ReplicationStats> replications;

  Estimate sojourn_mean() const { return estimate(sojourn_samples); }
};

inline SimConfig validate(const SimConfig& c) {
  validate(c.params);
  if (!(c.warmup >= 0.0) || !(c.horizon > c.warmup)) {
    throw Error(Errc::kInvalidArgument, "need horizon > warmup >= 0");
  }
  if (c.replications < 1) throw Error(Errc::kInvalidArgument, "replications must be >= 1");
  if (c.tagged_count < 0) throw Error(Errc::kInvalidArgument, "tagged count must be >= 0");
  return c;
}

/// splitmix64 finalizer applied to (master seed, replication).
inline std::uint64_t replication_seed(std::uint64_t master, int replication) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(replication) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// One trajectory started at (0, 1). When `trace` is given every event is
/// written as `t,event,k,m` with the state after the event.
inline ReplicationStats run_replication(const SimConfig& config, int replication,
                                        std::ostream* trace = nullptr) {
  const SimConfig c = validate(config);
  const ModelParams& p = c.params;
  const int M = p.capacity;
  std::mt19937_64 rng(replication_seed(c.master_seed, replication));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const double window = c.horizon - c.warmup;
  const bool tagging = c.tagged_count > 0;
  const auto gap = static_cast<std::uint64_t>(
      std::max(1.0, std::floor(p.lambda * window / (2.0 * std::max(c.tagged_count, 1)))));

  enum class Tag { kNone, kInternal, kBoundary } tag = Tag::kNone;
  double tag_start = 0.0;
  std::uint64_t post_warmup_arrivals = 0;

  ReplicationStats st;
  st.min_boundary = st.max_boundary = 1;
  if (trace) *trace << "t,event,k,m\n";

  long k = 0;
  int m = 1;
  double t = 0.0;
  double area_k = 0.0, area_m = 0.0;

  while (true) {
    const double rate_a = p.lambda;
    const double rate_c = static_cast<double>(k) * pairs(m) * p.mu;
    const double rate_i = m < M ? static_cast<double>(k) * p.alpha : 0.0;
    const double total = rate_a + rate_c + rate_i;
    const double t_next = t + std::exponential_distribution<double>(total)(rng);

    const double lo = std::max(t, c.warmup), hi = std::min(t_next, c.horizon);
    if (hi > lo) {
      area_k += static_cast<double>(k) * (hi - lo);
      area_m += static_cast<double>(m) * (hi - lo);
    }
    const bool need_tags = tagging && static_cast<int>(st.sojourns.size()) < c.tagged_count;
    if (t_next >= c.horizon && !need_tags) break;
    t = t_next;
    const bool in_window = t >= c.warmup && t < c.horizon;

    const double u = unif(rng) * total;
    char event;
    if (u < rate_a) {
      event = 'A';
      ++k;
      ++st.total.arrivals;
      if (in_window) ++st.window.arrivals;
      if (need_tags && t >= c.warmup) {
        ++post_warmup_arrivals;
        const bool candidate = c.tag_selection == TagSelection::kRandom
                                   ? unif(rng) * static_cast<double>(gap) < 1.0
                                   : post_warmup_arrivals % gap == 0 && post_warmup_arrivals > gap;
        if (candidate && tag == Tag::kNone) {
          tag = Tag::kInternal;
          tag_start = t;
        }
      }
    } else if (u < rate_a + rate_c) {
      event = 'C';
      if (tag == Tag::kInternal) {
        if (unif(rng) * static_cast<double>(k) < 1.0) tag = Tag::kBoundary;
      } else if (tag == Tag::kBoundary) {
        if (unif(rng) * static_cast<double>(m) < 2.0) {
          st.sojourns.push_back(t - tag_start);
          tag = Tag::kNone;
        }
      }
      --k;
      --m;
      ++st.total.connections;
      if (in_window) ++st.window.connections;
    } else {
      event = 'I';
      if (tag == Tag::kInternal && unif(rng) * static_cast<double>(k) < 1.0) tag = Tag::kBoundary;
      --k;
      ++m;
      ++st.total.impatience;
      if (in_window) ++st.window.impatience;
    }
    st.min_boundary = std::min(st.min_boundary, m);
    st.max_boundary = std::max(st.max_boundary, m);
    if (trace) *trace << format_double(t) << ',' << event << ',' << k << ',' << m << '\n';
  }

  st.mean_internal = area_k / window;
  st.mean_boundary = area_m / window;
  st.throughput = 2.0 * static_cast<double>(st.window.connections) / window;
  st.final_internal = static_cast<int>(k);
  return st;
}

/// Independent replications, merged in replication order.
inline SimResult simulate(const SimConfig& config, int threads = default_threads()) {
  const SimConfig c = validate(config);
  std::vector<ReplicationStats> reps(c.replications);
  parallel_for(c.replications, [&](int r) { reps[r] = run_replication(c, r); }, threads);

  SimResult out;
  std::vector<double> internal, boundary, th;
  out.min_boundary = c.params.capacity;
  out.max_boundary = 1;
  for (const auto& r : reps) {
    internal.push_back(r.mean_internal);
    boundary.push_back(r.mean_boundary);
    th.push_back(r.throughput);
    out.event_counts += r.total;
    out.min_boundary = std::min(out.min_boundary, r.min_boundary);
    out.max_boundary = std::max(out.max_boundary, r.max_boundary);
    out.sojourn_samples.insert(out.sojourn_samples.end(), r.sojourns.begin(), r.sojourns.end());
  }
  out.mean_internal = estimate(internal);
  out.mean_boundary = estimate(boundary);
  out.th_estimate = estimate(th);
  out.replications = std::move(reps);
  return out;
}

/// Like simulate(), additionally tracking tagged_count tags per replication.
inline SimResult simulate_tagged(const SimConfig& config, int threads = default_threads()) {
  if (config.tagged_count < 1) throw Error(Errc::kInvalidArgument, "tagged count must be >= 1");
  if (!(config.warmup > 0.0)) throw Error(Errc::kInvalidArgument, "tagging needs a positive warmup");
  return simulate(config, threads);
}

}  // namespace tangle
