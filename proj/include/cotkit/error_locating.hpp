#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cotkit/answer.hpp"
#include "cotkit/backend.hpp"
#include "cotkit/records.hpp"

namespace cotkit {

// ---------------------------------------------------------------------------
// Pair generation

struct PairGenResult {
  PairPool pool;
  std::vector<TrajectoryRecord> sampled;  // original sampling order
  int malformed = 0;
};

// Samples full trajectories and partitions them by answer verification.
// Either side of the pool may come out empty.
inline PairGenResult generate_pairs(const ProblemRecord& record, Backend& backend,
                                    const SamplingProfile& profile = kPairGenProfile,
                                    std::optional<std::uint64_t> seed = std::nullopt) {
  GenerationRequest req = GenerationRequest::from_profile(kSampleFullTemplate, profile, seed);
  GenerationResult gen = backend.generate(req, record, {});
  if (gen.trajectories.empty()) {
    throw EmptyPoolError("all " + std::to_string(profile.n_return_sequences) +
                         " completions malformed for record '" + record.id + "'");
  }
  PairGenResult result;
  result.malformed = gen.malformed_dropped;
  result.pool.problem_id = record.id;
  for (auto& t : gen.trajectories) {
    bool ok = equivalent(t.final_answer, record.gold_answer);
    t.correct = ok;
    result.sampled.push_back(t);
    if (ok) {
      result.pool.positives.push_back(std::move(t));
    } else {
      result.pool.negatives.push_back(std::move(t));
    }
  }
  result.pool.validate();
  return result;
}

// ---------------------------------------------------------------------------
// Forward labeling of positives: every step valid.

inline std::vector<StepLabelRecord> forward_label_positives(
    const std::vector<TrajectoryRecord>& positives) {
  std::vector<StepLabelRecord> out;
  out.reserve(positives.size());
  for (const auto& t : positives) {
    if (!t.correct || !*t.correct) {
      throw InvalidArgumentError("forward labeling requires correct=true trajectories");
    }
    StepLabelRecord r;
    r.problem_id = t.problem_id;
    r.trajectory = t;
    r.labels.assign(t.steps.size(), 1);
    r.provenance = Provenance::ForwardPositive;
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prefix reachability oracle: memoizes verdicts per prefix length and keeps
// them coherent with the monotone structure binary search assumes (reachable
// at length k implies reachable below k). Raw verdicts contradicting an
// already-verified reachable length are repaired and counted, never raised.

class PrefixReachabilityOracle {
 public:
  using ProbeFn = std::function<bool(int prefix_len)>;

  explicit PrefixReachabilityOracle(ProbeFn probe) : probe_(std::move(probe)) {}

  bool reachable(int len) {
    if (auto it = memo_.find(len); it != memo_.end()) return it->second;
    if (len <= reachable_floor_) {
      memo_[len] = true;  // implied, no probe spent
      return true;
    }
    bool verdict = probe_(len);
    ++distinct_probes_;
    if (verdict && len >= unreachable_below_) {
      // This prefix reached the goal although a shorter one "failed".
      ++repair_events_;
    }
    memo_[len] = verdict;
    if (verdict) {
      reachable_floor_ = std::max(reachable_floor_, len);
      for (auto& [k, v] : memo_) {
        if (k < len && !v) {
          v = true;
          ++repair_events_;
        }
      }
    } else {
      unreachable_below_ = std::min(unreachable_below_, len);
    }
    return memo_[len];
  }

  int distinct_probes() const { return distinct_probes_; }
  int repair_events() const { return repair_events_; }

 private:
  ProbeFn probe_;
  std::map<int, bool> memo_;
  int reachable_floor_ = -1;
  int unreachable_below_ = std::numeric_limits<int>::max();
  int distinct_probes_ = 0;
  int repair_events_ = 0;
};

// ---------------------------------------------------------------------------
// Algorithm: binary search over prefix lengths with Monte-Carlo verification.

struct LocateOptions {
  int n_mid = 16;
  SamplingProfile profile = kLocateProfile;
  std::optional<std::uint64_t> seed;
};

struct LocateResult {
  StepLabelRecord record;
  int first_error = 0;
  int distinct_probes = 0;
  int repair_events = 0;
  int rollouts = 0;
  int malformed = 0;
};

// Binary search l=0, r=StepLen; at each probe, N_mid rollouts continue the
// first `mid` steps; no correct rollout shrinks r to mid, otherwise l=mid+1.
// Terminates with l = first erroneous step; labels are prefix-positive,
// suffix-negative from there.
inline LocateResult binary_error_locating(const TrajectoryRecord& y_n,
                                          const ProblemRecord& record, Backend& backend,
                                          const LocateOptions& opts = {}) {
  if (!y_n.correct || *y_n.correct) {
    throw InvalidArgumentError("binary_error_locating requires a correct=false trajectory");
  }
  if (y_n.steps.empty()) {
    throw InvalidArgumentError("binary_error_locating requires >=1 step");
  }
  if (opts.n_mid < 1) throw InvalidArgumentError("n_mid must be >= 1");

  LocateResult result;
  PrefixReachabilityOracle oracle([&](int len) {
    GenerationRequest req = GenerationRequest::from_profile(kRolloutTemplate, opts.profile,
                                                            opts.seed);
    req.n_return_sequences = opts.n_mid;
    std::vector<std::string> prefix(y_n.steps.begin(), y_n.steps.begin() + len);
    GenerationResult gen = backend.generate(req, record, prefix);
    result.rollouts += static_cast<int>(gen.trajectories.size());
    result.malformed += gen.malformed_dropped;
    if (gen.trajectories.empty()) {
      // No usable rollout carries no verification signal; bail out rather
      // than labeling on silence.
      throw MalformedCompletionError("probe at prefix " + std::to_string(len) +
                                     " produced no parseable rollout");
    }
    return verify_rollouts(gen.trajectories, record.gold_answer).any;
  });

  int l = 0;
  int r = static_cast<int>(y_n.steps.size());
  while (l < r) {
    int mid = (l + r) / 2;
    if (!oracle.reachable(mid)) {
      r = mid;
    } else {
      l = mid + 1;
    }
  }
  result.first_error = std::max(l, 1);
  result.distinct_probes = oracle.distinct_probes();
  result.repair_events = oracle.repair_events();

  StepLabelRecord rec;
  rec.problem_id = y_n.problem_id;
  rec.trajectory = y_n;
  rec.labels = labels_from_first_error(y_n.steps.size(), result.first_error);
  rec.first_error = result.first_error;
  rec.provenance = Provenance::BEL;
  rec.validate();
  result.record = std::move(rec);
  return result;
}

// ---------------------------------------------------------------------------
// Dataset assembly

struct BelBuildResult {
  std::vector<StepLabelRecord> records;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t skipped = 0;
  int probes_total = 0;
  int probes_max = 0;
  int repair_events = 0;
  int rollouts = 0;
  std::vector<std::string> errors;
};

// Forward-labels positives and locates errors in negatives. Per-record
// failures are recorded and skipped, never abort the batch.
inline BelBuildResult build_bel_dataset(const std::vector<PairPool>& pools,
                                        const std::map<std::string, ProblemRecord>& problems,
                                        Backend& backend, const LocateOptions& opts = {}) {
  BelBuildResult out;
  for (const auto& pool : pools) {
    auto pit = problems.find(pool.problem_id);
    if (pit == problems.end()) {
      ++out.skipped;
      out.errors.push_back("no problem record for pool '" + pool.problem_id + "'");
      continue;
    }
    const ProblemRecord& record = pit->second;
    try {
      for (auto& rec : forward_label_positives(pool.positives)) {
        out.records.push_back(std::move(rec));
        ++out.positives;
      }
    } catch (const Error& e) {
      ++out.skipped;
      out.errors.push_back(e.what());
    }
    for (const auto& neg : pool.negatives) {
      try {
        LocateResult lr = binary_error_locating(neg, record, backend, opts);
        out.probes_total += lr.distinct_probes;
        out.probes_max = std::max(out.probes_max, lr.distinct_probes);
        out.repair_events += lr.repair_events;
        out.rollouts += lr.rollouts;
        out.records.push_back(std::move(lr.record));
        ++out.negatives;
      } catch (const Error& e) {
        ++out.skipped;
        out.errors.push_back(e.what());
      }
    }
  }
  return out;
}

}  // namespace cotkit
