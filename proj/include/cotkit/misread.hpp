#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cotkit/answer.hpp"
#include "cotkit/backend.hpp"
#include "cotkit/records.hpp"
#include "cotkit/rng.hpp"

namespace cotkit {

// Three-stage misinterpretation insertion: extract visually grounded facts,
// propose corruptions of facts the correct solution actually uses, inject one
// and continue reasoning to a labeled wrong trajectory.

struct MisreadCandidate {
  int fact_index = 0;
  std::string corrupted;
};

struct MisreadPlan {
  std::string problem_id;
  std::vector<std::string> extracted_facts;      // stage 1
  std::vector<MisreadCandidate> candidates;      // stage 2
  int chosen = -1;                               // index into candidates
  int injection_step = 0;                        // 1-based step in the positive

  void validate() const {
    if (chosen < 0 || chosen >= static_cast<int>(candidates.size())) {
      throw InvalidArgumentError("misread plan: chosen candidate out of range");
    }
    if (injection_step < 1) {
      throw InvalidArgumentError("misread plan: injection_step must be >= 1");
    }
    int fi = candidates[static_cast<std::size_t>(chosen)].fact_index;
    if (fi < 0 || fi >= static_cast<int>(extracted_facts.size())) {
      throw InvalidArgumentError("misread plan: candidate fact index out of range");
    }
  }
};

struct MisreadOptions {
  SamplingProfile continue_profile{1.0, 0.95, 1};
  std::optional<std::uint64_t> seed;
};

// Prompt routing by topic; geometry is the default.
inline std::string misread_template_id(const ProblemRecord& record) {
  if (record.topic) {
    std::string t = ans_detail::to_lower(*record.topic);
    if (t == "function" || t == "statistics" || t == "func") return "P_misread_func";
  }
  return "P_misread_geo";
}

// Stage 1: mathematical facts carried by the image (the simulated backend
// returns the image_facts sidecar verbatim).
inline std::vector<std::string> extract_facts(const ProblemRecord& record, Backend& backend) {
  if (!record.image && record.image_facts.empty()) {
    throw NoVisualContentError("record '" + record.id + "' has neither image nor image_facts");
  }
  GenerationRequest req;
  req.prompt_template_id = misread_template_id(record);
  req.n_return_sequences = 1;
  req.temperature = 0.0;
  req.image = record.image;
  req.variables = {{"stage", "extract"}, {"question", record.question}, {"payload", ""}};
  auto completions = backend.complete(req, record);
  std::vector<std::string> facts;
  if (!completions.empty()) {
    std::string line;
    auto flush = [&] {
      std::string t = rec_detail::trim(line);
      if (!t.empty()) facts.push_back(t);
      line.clear();
    };
    for (char c : completions.front()) {
      if (c == '\n') {
        flush();
      } else {
        line.push_back(c);
      }
    }
    flush();
  }
  if (facts.empty()) {
    throw NoVisualContentError("no facts extracted for record '" + record.id + "'");
  }
  return facts;
}

// Stage 2: candidate misreadings, each corrupting exactly one fact the
// positive solution uses.
inline std::vector<MisreadCandidate> propose_misreads(const std::vector<std::string>& facts,
                                                      const TrajectoryRecord& positive,
                                                      const ProblemRecord& record,
                                                      Backend& backend) {
  if (facts.empty()) throw InvalidArgumentError("propose_misreads: facts must be non-empty");
  if (!positive.correct || !*positive.correct) {
    throw InvalidArgumentError("propose_misreads requires a correct=true trajectory");
  }
  json payload;
  payload["facts"] = facts;
  payload["steps"] = positive.steps;
  GenerationRequest req;
  req.prompt_template_id = misread_template_id(record);
  req.n_return_sequences = 1;
  req.temperature = 0.0;
  req.image = record.image;
  req.variables = {{"stage", "propose"},
                   {"question", record.question},
                   {"payload", payload.dump()}};
  auto completions = backend.complete(req, record);
  std::vector<MisreadCandidate> candidates;
  if (!completions.empty()) {
    std::string line;
    auto flush = [&] {
      std::string t = rec_detail::trim(line);
      line.clear();
      std::size_t colon = t.find(':');
      if (colon == std::string::npos) return;
      auto idx = ans_detail::parse_int(rec_detail::trim(t.substr(0, colon)));
      if (!idx || *idx < 0 || *idx >= static_cast<long long>(facts.size())) return;
      std::string corrupted = rec_detail::trim(t.substr(colon + 1));
      if (corrupted.empty()) return;
      candidates.push_back({static_cast<int>(*idx), corrupted});
    };
    for (char c : completions.front()) {
      if (c == '\n') {
        flush();
      } else {
        line.push_back(c);
      }
    }
    flush();
  }
  if (candidates.empty()) {
    throw NoCandidatesError("positive solution for '" + record.id + "' uses no extracted fact");
  }
  return candidates;
}

// Stages 1+2 plus candidate selection (uniform under the run seed) and
// injection point (the first step using the chosen fact).
inline MisreadPlan make_misread_plan(const ProblemRecord& record,
                                     const TrajectoryRecord& positive, Backend& backend,
                                     std::optional<std::uint64_t> seed = std::nullopt) {
  MisreadPlan plan;
  plan.problem_id = record.id;
  plan.extracted_facts = extract_facts(record, backend);
  plan.candidates = propose_misreads(plan.extracted_facts, positive, record, backend);
  Rng rng(mix_seed({seed.value_or(0), fnv1a64(record.id), fnv1a64("misread_choice")}));
  plan.chosen = static_cast<int>(rng.below(plan.candidates.size()));
  const std::string& fact =
      plan.extracted_facts[static_cast<std::size_t>(plan.candidates[plan.chosen].fact_index)];
  plan.injection_step = 0;
  for (std::size_t i = 0; i < positive.steps.size(); ++i) {
    if (positive.steps[i].find(fact) != std::string::npos) {
      plan.injection_step = static_cast<int>(i) + 1;
      break;
    }
  }
  if (plan.injection_step == 0) {
    throw NoCandidatesError("chosen fact does not appear in the positive solution");
  }
  plan.validate();
  return plan;
}

struct InjectResult {
  std::optional<StepLabelRecord> record;  // empty when accidentally correct
  bool accidentally_correct = false;
  TrajectoryRecord injected;  // the continued trajectory (diagnostics)
};

// Stage 3: copy steps before the injection point, replace the fact at the
// injection step, continue via the backend. The result is discarded (with the
// flag set) when the continuation still reaches the gold answer.
inline InjectResult inject_and_continue(const MisreadPlan& plan,
                                        const TrajectoryRecord& positive,
                                        const ProblemRecord& record, Backend& backend,
                                        const MisreadOptions& opts = {}) {
  plan.validate();
  if (plan.injection_step > static_cast<int>(positive.steps.size())) {
    throw InvalidArgumentError("misread plan: injection_step beyond trajectory");
  }
  if (!positive.correct || !*positive.correct) {
    throw InvalidArgumentError("inject_and_continue requires a correct=true trajectory");
  }

  const MisreadCandidate& cand = plan.candidates[static_cast<std::size_t>(plan.chosen)];
  const std::string& fact = plan.extracted_facts[static_cast<std::size_t>(cand.fact_index)];
  std::string injected = positive.steps[static_cast<std::size_t>(plan.injection_step - 1)];
  std::size_t pos = injected.find(fact);
  if (pos != std::string::npos) {
    injected.replace(pos, fact.size(), cand.corrupted);
  } else {
    injected += " Taking " + cand.corrupted + ".";
  }

  std::vector<std::string> prefix(positive.steps.begin(),
                                  positive.steps.begin() + plan.injection_step - 1);
  prefix.push_back(injected);

  GenerationRequest req =
      GenerationRequest::from_profile(kRolloutTemplate, opts.continue_profile, opts.seed);
  req.n_return_sequences = 1;
  GenerationResult gen = backend.generate(req, record, prefix);
  if (gen.trajectories.empty()) {
    throw MalformedCompletionError("misread continuation unparseable for '" + record.id + "'");
  }
  TrajectoryRecord continued = std::move(gen.trajectories.front());
  continued.origin = Origin::MisreadInjected;

  InjectResult out;
  if (equivalent(continued.final_answer, record.gold_answer)) {
    out.accidentally_correct = true;
    out.injected = std::move(continued);
    return out;
  }
  continued.correct = false;

  StepLabelRecord rec;
  rec.problem_id = record.id;
  rec.labels = labels_from_first_error(continued.steps.size(), plan.injection_step);
  rec.first_error = plan.injection_step;
  rec.provenance = Provenance::MIE;
  rec.trajectory = std::move(continued);
  rec.validate();
  out.injected = rec.trajectory;
  out.record = std::move(rec);
  return out;
}

// ---------------------------------------------------------------------------
// Batch composition with per-record skip-on-failure.

struct MieBuildResult {
  std::vector<StepLabelRecord> records;
  std::size_t emitted = 0;
  std::size_t accidental_correct = 0;
  std::size_t no_visual = 0;
  std::size_t no_candidates = 0;
  std::size_t skipped = 0;
  std::vector<std::string> errors;
};

inline MieBuildResult build_mie_dataset(
    const std::vector<ProblemRecord>& records,
    const std::map<std::string, std::vector<TrajectoryRecord>>& positives, Backend& backend,
    const MisreadOptions& opts = {}) {
  MieBuildResult out;
  for (const auto& record : records) {
    auto pit = positives.find(record.id);
    if (pit == positives.end() || pit->second.empty()) {
      ++out.skipped;
      out.errors.push_back("no positive trajectory for '" + record.id + "'");
      continue;
    }
    for (std::size_t pi = 0; pi < pit->second.size(); ++pi) {
      const TrajectoryRecord& positive = pit->second[pi];
      try {
        std::uint64_t plan_seed = mix_seed({opts.seed.value_or(0), pi});
        MisreadPlan plan = make_misread_plan(record, positive, backend, plan_seed);
        MisreadOptions per = opts;
        per.seed = plan_seed;
        InjectResult res = inject_and_continue(plan, positive, record, backend, per);
        if (res.accidentally_correct) {
          ++out.accidental_correct;
          continue;
        }
        out.records.push_back(std::move(*res.record));
        ++out.emitted;
      } catch (const NoVisualContentError& e) {
        ++out.no_visual;
        out.errors.push_back(e.what());
      } catch (const NoCandidatesError& e) {
        ++out.no_candidates;
        out.errors.push_back(e.what());
      } catch (const Error& e) {
        ++out.skipped;
        out.errors.push_back(e.what());
      }
    }
  }
  return out;
}

}  // namespace cotkit
