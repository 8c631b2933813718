#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cotkit/answer.hpp"
#include "cotkit/backend.hpp"
#include "cotkit/parallel.hpp"
#include "cotkit/records.hpp"
#include "cotkit/rng.hpp"

namespace cotkit {

// ---------------------------------------------------------------------------
// Process-reward binary classification loss (a checkable pure function; no
// model is trained here).

inline double prm_loss(const std::vector<int>& labels, const std::vector<double>& scores) {
  if (labels.empty() || labels.size() != scores.size()) {
    throw InvalidArgumentError("prm_loss: labels and scores must have equal non-zero length");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int y = labels[i];
    if (y != 0 && y != 1) throw InvalidArgumentError("prm_loss: labels must be 0 or 1");
    double s = std::min(1.0 - kScoreEps, std::max(kScoreEps, scores[i]));
    loss -= y * std::log(s) + (1 - y) * std::log(1.0 - s);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Per-problem selection rules over a fixed-order sample pool.

inline bool sample_correct(const SamplePool& pool, std::size_t index) {
  return equivalent(pool.samples[index].final_answer, pool.gold);
}

inline void check_n(const SamplePool& pool, int n) {
  if (n < 1 || n > static_cast<int>(pool.samples.size())) {
    throw InvalidArgumentError("n out of range: " + std::to_string(n) + " for pool of " +
                               std::to_string(pool.samples.size()));
  }
}

// True iff any of the first n samples verifies against gold.
inline bool pass_at_n(const SamplePool& pool, int n) {
  check_n(pool, n);
  for (int i = 0; i < n; ++i) {
    if (sample_correct(pool, static_cast<std::size_t>(i))) return true;
  }
  return false;
}

// Majority vote over canonical answers of the first n samples; ties break to
// the smallest canonical string.
inline AnswerValue self_consistency(const SamplePool& pool, int n) {
  check_n(pool, n);
  struct Camp {
    int count = 0;
    AnswerValue representative;
  };
  std::map<std::string, Camp> camps;
  for (int i = 0; i < n; ++i) {
    const AnswerValue& a = pool.samples[static_cast<std::size_t>(i)].final_answer;
    auto [it, inserted] = camps.try_emplace(a.canonical);
    if (inserted) it->second.representative = a;
    it->second.count += 1;
  }
  const Camp* best = nullptr;
  for (const auto& [canonical, camp] : camps) {
    // std::map iterates canonical strings in ascending order, so strictly
    // greater count implements the smallest-string tie break.
    if (!best || camp.count > best->count) best = &camp;
  }
  return best->representative;
}

// Sample with the maximal aggregate score among the first n; ties break to
// the lowest sample index.
inline const TrajectoryRecord& best_of_n(const SamplePool& pool, int n, Aggregation agg) {
  check_n(pool, n);
  if (!pool.scores) throw InvalidArgumentError("best_of_n: pool has no scores");
  const auto& scores = *pool.scores;
  if (scores.size() < static_cast<std::size_t>(n)) {
    throw InvalidArgumentError("best_of_n: scores missing for first n samples");
  }
  int best = 0;
  double best_agg = aggregate_scores(scores[0].step_scores, agg);
  for (int i = 1; i < n; ++i) {
    double a = aggregate_scores(scores[static_cast<std::size_t>(i)].step_scores, agg);
    if (a > best_agg) {
      best_agg = a;
      best = i;
    }
  }
  return pool.samples[static_cast<std::size_t>(best)];
}

// ---------------------------------------------------------------------------
// Benchmark-level accuracies (mean over problems).

inline double pass_at_n_accuracy(const std::vector<SamplePool>& pools, int n) {
  if (pools.empty()) throw InvalidArgumentError("empty benchmark");
  std::size_t hits = 0;
  for (const auto& p : pools) {
    if (pass_at_n(p, n)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pools.size());
}

inline double self_consistency_accuracy(const std::vector<SamplePool>& pools, int n) {
  if (pools.empty()) throw InvalidArgumentError("empty benchmark");
  std::size_t hits = 0;
  for (const auto& p : pools) {
    if (equivalent(self_consistency(p, n), p.gold)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pools.size());
}

inline double best_of_n_accuracy(const std::vector<SamplePool>& pools, int n, Aggregation agg) {
  if (pools.empty()) throw InvalidArgumentError("empty benchmark");
  std::size_t hits = 0;
  for (const auto& p : pools) {
    if (equivalent(best_of_n(p, n, agg).final_answer, p.gold)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pools.size());
}

// ---------------------------------------------------------------------------
// Evaluation runner: fixed seeded pool order, optional scoring pass, one
// accuracy row per (method, n).

struct EvalOptions {
  std::string benchmark_name = "benchmark";
  std::vector<Method> methods{Method::PassAtN, Method::SelfConsistency, Method::BestOfN};
  std::vector<int> n_grid{4, 8, 16, 32, 64};
  Aggregation aggregation = Aggregation::Min;
  std::uint64_t seed = 0;
  bool shuffle_pools = true;
  int scoring_concurrency = 8;
};

struct EvalOutcome {
  EvalReport report;
  std::vector<std::string> excluded_problems;  // incomplete pools, by id
  std::vector<SamplePool> pools;               // as evaluated (shuffled, scored)
};

// Minimal problem context handed to the step scorer; pools are decoupled from
// the model that produced them.
inline ProblemRecord context_from_pool(const SamplePool& pool) {
  ProblemRecord r;
  r.id = pool.problem_id;
  r.question = "";
  r.gold_answer = pool.gold;
  r.source_kind = SourceKind::AnswerOnly;
  if (pool.extra.is_object() && pool.extra.contains("image_facts") &&
      pool.extra["image_facts"].is_object()) {
    for (auto it = pool.extra["image_facts"].begin(); it != pool.extra["image_facts"].end();
         ++it) {
      if (it.value().is_string()) r.image_facts[it.key()] = it.value().get<std::string>();
    }
  }
  return r;
}

inline EvalOutcome evaluate(std::vector<SamplePool> pools, Backend* scorer,
                            const EvalOptions& opts) {
  if (pools.empty()) throw InvalidArgumentError("evaluate: no pools");

  std::size_t n_max = 0;
  for (const auto& p : pools) n_max = std::max(n_max, p.samples.size());

  EvalOutcome out;
  std::vector<SamplePool> complete;
  for (auto& p : pools) {
    if (p.samples.size() != n_max) {
      out.excluded_problems.push_back(p.problem_id);
    } else {
      complete.push_back(std::move(p));
    }
  }
  if (complete.empty()) throw InvalidArgumentError("evaluate: all pools incomplete");

  for (int n : opts.n_grid) {
    if (n < 1 || n > static_cast<int>(n_max)) {
      throw InvalidArgumentError("evaluate: n=" + std::to_string(n) +
                                 " outside pool size " + std::to_string(n_max));
    }
  }

  // Fixed shuffled order per pool, seeded by pool position so metrics are
  // invariant under problem-id relabeling.
  if (opts.shuffle_pools) {
    for (std::size_t i = 0; i < complete.size(); ++i) {
      Rng rng(mix_seed({opts.seed, i, fnv1a64("pool_shuffle")}));
      std::vector<std::size_t> order(complete[i].samples.size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      rng.shuffle(order);
      std::vector<TrajectoryRecord> samples;
      samples.reserve(order.size());
      for (std::size_t k : order) samples.push_back(std::move(complete[i].samples[k]));
      complete[i].samples = std::move(samples);
      if (complete[i].scores) {
        std::vector<ScoredTrajectory> scores;
        scores.reserve(order.size());
        for (std::size_t k : order) scores.push_back(std::move((*complete[i].scores)[k]));
        complete[i].scores = std::move(scores);
      }
    }
  }

  bool wants_bon = false;
  for (Method m : opts.methods) wants_bon = wants_bon || m == Method::BestOfN;
  if (wants_bon) {
    for (const auto& pool : complete) {
      if (!pool.scores && !scorer) {
        throw InvalidArgumentError("evaluate: best_of_n requested without scorer");
      }
    }
    // Scoring fans out; results land by pool index so order never shifts.
    parallel_for(complete.size(), opts.scoring_concurrency, [&](std::size_t i) {
      SamplePool& pool = complete[i];
      if (pool.scores) return;
      ProblemRecord context = context_from_pool(pool);
      std::vector<ScoredTrajectory> scores;
      scores.reserve(pool.samples.size());
      for (const auto& s : pool.samples) {
        scores.push_back(scorer->score_steps(s, context, opts.aggregation));
      }
      pool.scores = std::move(scores);
    });
  }

  EvalReport report;
  report.benchmark_name = opts.benchmark_name;
  report.pool_size = static_cast<int>(n_max);
  report.seed = opts.seed;
  std::vector<int> grid = opts.n_grid;
  std::sort(grid.begin(), grid.end());
  for (Method m : opts.methods) {
    for (int n : grid) {
      double acc = 0.0;
      switch (m) {
        case Method::PassAtN:
          acc = pass_at_n_accuracy(complete, n);
          break;
        case Method::SelfConsistency:
          acc = self_consistency_accuracy(complete, n);
          break;
        case Method::BestOfN:
          acc = best_of_n_accuracy(complete, n, opts.aggregation);
          break;
      }
      report.rows.push_back({m, n, acc});
    }
  }
  if (!out.excluded_problems.empty()) report.extra["excluded_problems"] = out.excluded_problems;
  report.validate();
  out.report = std::move(report);
  out.pools = std::move(complete);
  return out;
}

// ---------------------------------------------------------------------------
// Report rendering

inline std::string render_report_table(const EvalReport& report) {
  std::ostringstream os;
  os << "benchmark: " << report.benchmark_name << "  pool_size: " << report.pool_size
     << "  seed: " << report.seed << "\n";
  os << "method            ";
  std::vector<int> ns;
  for (const auto& row : report.rows) {
    if (std::find(ns.begin(), ns.end(), row.n) == ns.end()) ns.push_back(row.n);
  }
  std::sort(ns.begin(), ns.end());
  for (int n : ns) {
    os << "N=" << n << "      ";
  }
  os << "\n";
  std::vector<Method> methods;
  for (const auto& row : report.rows) {
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
      methods.push_back(row.method);
    }
  }
  for (Method m : methods) {
    std::string name = enum_name(m);
    os << name << std::string(name.size() < 18 ? 18 - name.size() : 1, ' ');
    for (int n : ns) {
      for (const auto& row : report.rows) {
        if (row.method == m && row.n == n) {
          char buf[16];
          std::snprintf(buf, sizeof(buf), "%.4f   ", row.accuracy);
          os << buf;
        }
      }
    }
    os << "\n";
  }
  return os.str();
}

inline std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "method,n,accuracy\n";
  for (const auto& row : report.rows) {
    os << enum_name(row.method) << "," << row.n << ","
       << ans_detail::format_double(row.accuracy) << "\n";
  }
  return os.str();
}

}  // namespace cotkit
