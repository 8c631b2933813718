#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cotkit/answer.hpp"
#include "cotkit/backend.hpp"
#include "cotkit/rng.hpp"

namespace cotkit {

// Marker the simulator plants inside an erroneous step. Reachability of a
// prefix is decided from the step texts alone, so trajectories keep their
// semantics across JSONL round-trips.
inline constexpr std::string_view kFlawMarker = "[invalid-step]";

// Deterministic world standing in for a hosted generator/scorer. Per-call
// randomness is derived from (global seed, problem id, prefix length, prefix
// content, sample index), so call order and concurrency cannot change results.
class SimulatedBackend : public Backend {
 public:
  struct Options {
    std::uint64_t seed = 0;
    double p_correct = 0.5;       // full-solution sample is correct
    double rollout_noise = 0.0;   // reachable prefix still yields a wrong rollout
    double scorer_noise = 0.0;    // perturbation applied to oracle step scores
    double refusal_rate = 0.0;    // synthesis completion refuses to answer
    double malformed_rate = 0.0;  // completion cannot be parsed
    double accidental_correct_rate = 0.0;  // contaminated rollout still hits gold
    int min_steps = 3;
    int max_steps = 8;
  };

  SimulatedBackend() = default;
  explicit SimulatedBackend(Options opts) : opts_(opts) {}

  const Options& options() const { return opts_; }

  // Queues a verbatim completion for one problem; scripted completions are
  // consumed FIFO by complete() before any procedural response.
  void script_completion(const std::string& problem_id, std::string text) {
    std::lock_guard<std::mutex> lock(mu_);
    scripts_[problem_id].push_back(std::move(text));
  }

  // --- scripted trajectory construction -----------------------------------

  // A clean trajectory of `length` steps ending in the gold answer.
  TrajectoryRecord make_positive_trajectory(const ProblemRecord& context, int length,
                                            std::uint64_t variant = 0) const {
    TrajectoryRecord t;
    t.problem_id = context.id;
    for (int i = 1; i <= length; ++i) t.steps.push_back(valid_step_text(context, i, variant));
    t.final_answer = context.gold_answer;
    t.correct = true;
    t.origin = Origin::Sampled;
    return t;
  }

  // A trajectory whose first erroneous step is exactly `first_error` (1-based)
  // and whose final answer misses the gold answer.
  TrajectoryRecord make_negative_trajectory(const ProblemRecord& context, int length,
                                            int first_error, std::uint64_t variant = 0) const {
    if (first_error < 1 || first_error > length) {
      throw InvalidArgumentError("planted first_error out of range");
    }
    TrajectoryRecord t;
    t.problem_id = context.id;
    for (int i = 1; i <= length; ++i) {
      if (i < first_error) {
        t.steps.push_back(valid_step_text(context, i, variant));
      } else if (i == first_error) {
        t.steps.push_back(flawed_step_text(i, variant));
      } else {
        t.steps.push_back(followup_step_text(i, variant));
      }
    }
    t.final_answer = wrong_answer(context);
    t.correct = false;
    t.origin = Origin::Sampled;
    return t;
  }

  // A prefix reaches the gold answer iff it contains no flawed step and no
  // statement contradicting the image_facts sidecar. Monotone by construction.
  bool prefix_reachable(const std::vector<std::string>& prefix_steps,
                        const ProblemRecord& context) const {
    return first_flaw(prefix_steps, context) == 0;
  }

  // --- Backend interface ---------------------------------------------------

  std::vector<std::string> complete(const GenerationRequest& request,
                                    const ProblemRecord& context) override {
    request.validate();
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = scripts_.find(context.id);
      if (it != scripts_.end() && !it->second.empty()) {
        std::vector<std::string> out;
        for (int i = 0; i < request.n_return_sequences && !it->second.empty(); ++i) {
          out.push_back(std::move(it->second.front()));
          it->second.pop_front();
        }
        if (it->second.empty()) scripts_.erase(it);
        return out;
      }
    }
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(request.n_return_sequences));
    for (int j = 0; j < request.n_return_sequences; ++j) {
      out.push_back(procedural_completion(request, context, j));
    }
    return out;
  }

  GenerationResult generate(const GenerationRequest& request, const ProblemRecord& context,
                            const std::vector<std::string>& prefix_steps) override {
    request.validate();
    const bool full_sample = prefix_steps.empty() &&
                             request.prompt_template_id != kRolloutTemplate;
    const bool reachable = prefix_reachable(prefix_steps, context);
    GenerationResult result;
    for (int j = 0; j < request.n_return_sequences; ++j) {
      Rng rng = call_rng(request, context, prefix_steps, j);
      if (rng.uniform() < opts_.malformed_rate) {
        ++result.malformed_dropped;
        continue;
      }
      bool correct;
      if (!reachable) {
        correct = rng.uniform() < opts_.accidental_correct_rate;
      } else if (full_sample) {
        correct = rng.uniform() < opts_.p_correct;
      } else {
        correct = !(rng.uniform() < opts_.rollout_noise);
      }
      result.trajectories.push_back(
          build_trajectory(context, prefix_steps, correct, reachable, rng));
    }
    return result;
  }

  ScoredTrajectory score_steps(const TrajectoryRecord& trajectory, const ProblemRecord& context,
                               Aggregation aggregation) override {
    if (trajectory.steps.empty()) {
      throw InvalidArgumentError("score_steps: trajectory has no steps");
    }
    std::size_t flaw = first_flaw(trajectory.steps, context);
    if (flaw == 0 && !equivalent(trajectory.final_answer, context.gold_answer)) {
      flaw = trajectory.steps.size();  // no visible flaw: blame the final step
    }
    std::vector<double> scores;
    scores.reserve(trajectory.steps.size());
    std::uint64_t traj_hash = fnv1a64(canonical_line(trajectory));
    for (std::size_t i = 1; i <= trajectory.steps.size(); ++i) {
      double s = (flaw != 0 && i >= flaw) ? kScoreEps : 1.0 - kScoreEps;
      if (opts_.scorer_noise > 0) {
        Rng rng(mix_seed({opts_.seed, fnv1a64(context.id), traj_hash, 0x5c02eULL, i}));
        s += (rng.uniform() - 0.5) * 2.0 * opts_.scorer_noise;
      }
      scores.push_back(s);
    }
    return make_scored(trajectory, std::move(scores), aggregation);
  }

 private:
  // --- deterministic content -----------------------------------------------

  static std::string variant_tag(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << (v & 0xffffff);
    return os.str();
  }

  std::string valid_step_text(const ProblemRecord& context, int index,
                              std::uint64_t variant) const {
    std::ostringstream os;
    os << "Step " << index << ": ";
    if (!context.image_facts.empty()) {
      auto it = context.image_facts.begin();
      std::advance(it, (index - 1) % static_cast<int>(context.image_facts.size()));
      os << "using " << it->first << " = " << it->second << ", ";
    }
    os << "derive intermediate quantity q" << index << " (path " << variant_tag(variant) << ").";
    return os.str();
  }

  static std::string flawed_step_text(int index, std::uint64_t variant) {
    std::ostringstream os;
    os << "Step " << index << ": " << kFlawMarker
       << " misapply a relation, reaching an inconsistent value (path "
       << variant_tag(variant) << ").";
    return os.str();
  }

  static std::string followup_step_text(int index, std::uint64_t variant) {
    std::ostringstream os;
    os << "Step " << index << ": continue from the previous result (path "
       << variant_tag(variant) << ").";
    return os.str();
  }

  int target_length(const ProblemRecord& context) const {
    std::uint64_t h = fnv1a64(context.id);
    int span = std::max(1, opts_.max_steps - opts_.min_steps + 1);
    return opts_.min_steps + static_cast<int>(h % static_cast<std::uint64_t>(span));
  }

  // Deterministic per problem, never equivalent to the gold answer; all wrong
  // samples of one problem share it so majority voting has two camps.
  AnswerValue wrong_answer(const ProblemRecord& context) const {
    const AnswerValue& gold = context.gold_answer;
    if (gold.numeric_capable()) {
      double delta = std::max(1.0, std::fabs(gold.value) * 0.01);
      double v = gold.value + delta * (1.0 + static_cast<double>(fnv1a64(context.id) % 7));
      return canonicalize_answer(ans_detail::format_double(v) + gold.unit);
    }
    if (gold.kind == AnswerKind::Choice) {
      char c = gold.canonical.empty() ? 'a' : gold.canonical[0];
      char alt = static_cast<char>('a' + (c - 'a' + 1) % 5);
      return canonicalize_answer(std::string(1, alt));
    }
    return canonicalize_answer(gold.canonical + " (alternate)");
  }

  // First flawed 1-based step index, 0 if the steps are clean. A step is
  // flawed when it carries the marker or asserts `key = x` with x differing
  // from the sidecar value for `key`.
  std::size_t first_flaw(const std::vector<std::string>& steps,
                         const ProblemRecord& context) const {
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const std::string& step = steps[i];
      if (step.find(kFlawMarker) != std::string::npos) return i + 1;
      for (const auto& [key, value] : context.image_facts) {
        std::string needle = key + " = ";
        std::size_t pos = 0;
        while ((pos = step.find(needle, pos)) != std::string::npos) {
          if (pos > 0 && (std::isalnum(static_cast<unsigned char>(step[pos - 1])) ||
                          step[pos - 1] == '_')) {
            pos += needle.size();  // matched inside a longer identifier
            continue;
          }
          std::size_t start = pos + needle.size();
          std::size_t end = step.find_first_of(",.;:)\n", start);
          std::string stated = step.substr(start, end == std::string::npos ? end : end - start);
          while (!stated.empty() && stated.back() == ' ') stated.pop_back();
          if (stated != value) return i + 1;
          pos = start;
        }
      }
    }
    return 0;
  }

  Rng call_rng(const GenerationRequest& request, const ProblemRecord& context,
               const std::vector<std::string>& prefix_steps, int sample_index) const {
    std::uint64_t prefix_hash = 0xcbf29ce484222325ULL;
    for (const auto& s : prefix_steps) prefix_hash = mix_seed({prefix_hash, fnv1a64(s)});
    // temperature 0 collapses all samples onto one deterministic sequence
    std::uint64_t j = request.temperature == 0.0
                          ? 0
                          : static_cast<std::uint64_t>(sample_index);
    return Rng(mix_seed({opts_.seed, request.seed.value_or(0), fnv1a64(context.id),
                         prefix_steps.size(), prefix_hash,
                         fnv1a64(request.prompt_template_id), j}));
  }

  TrajectoryRecord build_trajectory(const ProblemRecord& context,
                                    const std::vector<std::string>& prefix_steps, bool correct,
                                    bool prefix_clean, Rng& rng) const {
    const int prefix_len = static_cast<int>(prefix_steps.size());
    const int total = std::max(target_length(context), prefix_len + 1);
    const std::uint64_t variant = rng.next_u64();

    TrajectoryRecord t;
    t.problem_id = context.id;
    t.steps = prefix_steps;
    if (correct) {
      for (int i = prefix_len + 1; i <= total; ++i) {
        t.steps.push_back(valid_step_text(context, i, variant));
      }
      t.final_answer = context.gold_answer;
    } else {
      int flaw_at = 0;  // 0: prefix already poisoned, no new flaw needed
      if (prefix_clean) flaw_at = rng.range(prefix_len + 1, total);
      for (int i = prefix_len + 1; i <= total; ++i) {
        if (i == flaw_at) {
          t.steps.push_back(flawed_step_text(i, variant));
        } else if (flaw_at != 0 && i > flaw_at) {
          t.steps.push_back(followup_step_text(i, variant));
        } else if (flaw_at == 0) {
          t.steps.push_back(followup_step_text(i, variant));
        } else {
          t.steps.push_back(valid_step_text(context, i, variant));
        }
      }
      t.final_answer = wrong_answer(context);
    }
    t.correct = equivalent(t.final_answer, context.gold_answer);
    t.origin = Origin::Sampled;
    return t;
  }

  std::string procedural_completion(const GenerationRequest& request,
                                    const ProblemRecord& context, int sample_index) const {
    Rng rng = call_rng(request, context, {}, sample_index);
    const std::string& id = request.prompt_template_id;

    if (id == "P_check") {
      return check_verdict(request, context);
    }
    if (id == "P_misread_geo" || id == "P_misread_func") {
      return misread_stage_completion(request, context);
    }

    // Synthesis routes (P_C, P_R, P_F) and anything free-form.
    if (rng.uniform() < opts_.malformed_rate) return "%%%";
    if (rng.uniform() < opts_.refusal_rate) {
      return "I cannot determine the answer without more information.";
    }
    const std::uint64_t variant = rng.next_u64();
    const int total = target_length(context);
    std::ostringstream os;
    for (int i = 1; i <= total; ++i) os << valid_step_text(context, i, variant) << "\n";
    os << "Final answer: " << context.gold_answer.raw;
    return os.str();
  }

  std::string check_verdict(const GenerationRequest& request,
                            const ProblemRecord& context) const {
    auto it = request.variables.find("solution");
    if (it == request.variables.end()) return "NO";
    auto extracted = extract_final_answer(it->second);
    if (!extracted) return "NO";
    return equivalent(canonicalize_answer(*extracted), context.gold_answer) ? "YES" : "NO";
  }

  std::string misread_stage_completion(const GenerationRequest& request,
                                       const ProblemRecord& context) const {
    auto stage_it = request.variables.find("stage");
    std::string stage = stage_it == request.variables.end() ? "" : stage_it->second;
    if (stage == "extract") {
      std::ostringstream os;
      bool first = true;
      for (const auto& [key, value] : context.image_facts) {
        if (!first) os << "\n";
        os << key << " = " << value;
        first = false;
      }
      return os.str();
    }
    if (stage == "propose") {
      auto payload_it = request.variables.find("payload");
      if (payload_it == request.variables.end()) return "";
      json payload = json::parse(payload_it->second, nullptr, false);
      if (payload.is_discarded()) return "";
      std::vector<std::string> facts = payload.value("facts", std::vector<std::string>{});
      std::vector<std::string> steps = payload.value("steps", std::vector<std::string>{});
      std::ostringstream os;
      bool first = true;
      for (std::size_t i = 0; i < facts.size(); ++i) {
        bool used = false;
        for (const auto& s : steps) {
          if (s.find(facts[i]) != std::string::npos) {
            used = true;
            break;
          }
        }
        if (!used) continue;
        std::size_t eq = facts[i].find(" = ");
        if (eq == std::string::npos) continue;
        std::string key = facts[i].substr(0, eq);
        std::string value = facts[i].substr(eq + 3);
        if (!first) os << "\n";
        os << i << ": " << key << " = " << corrupt_value(value);
        first = false;
      }
      return os.str();
    }
    return "";
  }

 public:
  // Perturbs the numeric prefix of a fact value by +3, keeping any unit
  // suffix; non-numeric values get a negation marker.
  static std::string corrupt_value(const std::string& value) {
    std::size_t i = 0;
    if (i < value.size() && (value[i] == '-' || value[i] == '+')) ++i;
    std::size_t digits_begin = i;
    while (i < value.size() && (std::isdigit(static_cast<unsigned char>(value[i])) ||
                                value[i] == '.')) {
      ++i;
    }
    if (i > digits_begin) {
      double v = std::stod(value.substr(0, i));
      std::string num = ans_detail::format_double(v + 3);
      return num + value.substr(i);
    }
    return "not " + value;
  }

 private:
  Options opts_;
  mutable std::mutex mu_;
  std::map<std::string, std::deque<std::string>> scripts_;
};

}  // namespace cotkit
