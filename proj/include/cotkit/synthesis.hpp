#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cotkit/answer.hpp"
#include "cotkit/backend.hpp"
#include "cotkit/records.hpp"
#include "cotkit/rng.hpp"

namespace cotkit {

struct SynthesisOptions {
  SamplingProfile profile{1.0, 0.95, 1};
  std::optional<std::uint64_t> seed;
  // Refusal detection: checking verdict OR this phrase list.
  std::vector<std::string> refusal_phrases{"cannot determine", "need more", "refuse"};
  ExtractionProfile extraction;
};

struct RouteResult {
  std::vector<TrajectoryRecord> kept;
  int refused = 0;
  int wrong_answer = 0;
  int malformed = 0;

  int dropped() const { return refused + wrong_answer + malformed; }
};

namespace synth_detail {

inline bool is_refusal(const std::string& text, const std::vector<std::string>& phrases) {
  std::string lower = ans_detail::to_lower(text);
  for (const auto& p : phrases) {
    if (lower.find(ans_detail::to_lower(p)) != std::string::npos) return true;
  }
  return false;
}

// Drops knowledge-point preamble lines (the format-unification template rule).
inline std::string strip_preamble(const std::string& text) {
  std::string out;
  std::string line;
  auto flush = [&] {
    std::string lower = ans_detail::to_lower(rec_detail::trim(line));
    if (lower.rfind("knowledge point", 0) != 0) {
      if (!out.empty()) out.push_back('\n');
      out += line;
    }
    line.clear();
  };
  for (char c : text) {
    if (c == '\n') {
      flush();
    } else {
      line.push_back(c);
    }
  }
  flush();
  return out;
}

inline RouteResult run_route(const ProblemRecord& record, Backend& backend,
                             const SynthesisOptions& opts, const std::string& template_id,
                             std::map<std::string, std::string> variables, Origin origin,
                             bool remove_preamble) {
  GenerationRequest req = GenerationRequest::from_profile(template_id, opts.profile, opts.seed);
  req.variables = std::move(variables);
  req.image = record.image;

  RouteResult result;
  for (const std::string& raw : backend.complete(req, record)) {
    if (is_refusal(raw, opts.refusal_phrases)) {
      ++result.refused;
      continue;
    }
    std::string text = remove_preamble ? strip_preamble(raw) : raw;
    auto extracted = extract_final_answer(text, opts.extraction);
    if (!extracted || rec_detail::trim(text).empty()) {
      ++result.malformed;
      continue;
    }
    AnswerValue answer = canonicalize_answer(*extracted);
    if (!equivalent(answer, record.gold_answer)) {
      ++result.wrong_answer;
      continue;
    }
    TrajectoryRecord t;
    t.problem_id = record.id;
    t.steps = segment_steps(text);
    t.final_answer = answer;
    t.correct = true;
    t.origin = origin;
    result.kept.push_back(std::move(t));
  }
  if (result.kept.empty()) {
    throw EmptyYieldError("all completions filtered for record '" + record.id + "'");
  }
  return result;
}

}  // namespace synth_detail

// CoT distillation of answer-only records: prompt with question + gold answer,
// keep trajectories that end in the gold answer, drop refusals.
inline RouteResult distill(const ProblemRecord& record, Backend& backend,
                           const SynthesisOptions& opts = {}) {
  if (record.source_kind != SourceKind::AnswerOnly) {
    throw InvalidArgumentError("distill requires source_kind=answer_only");
  }
  return synth_detail::run_route(
      record, backend, opts, "P_C",
      {{"question", record.question}, {"gold_answer", record.gold_answer.raw}},
      Origin::Distilled, false);
}

// Rewrites analysis-formatted records into step-by-step trajectories.
inline RouteResult rewrite(const ProblemRecord& record, Backend& backend,
                           const SynthesisOptions& opts = {}) {
  if (record.source_kind != SourceKind::AnalysisFormatted || !record.analysis) {
    throw InvalidArgumentError("rewrite requires source_kind=analysis_formatted with analysis");
  }
  return synth_detail::run_route(record, backend, opts, "P_R",
                                 {{"question", record.question},
                                  {"gold_answer", record.gold_answer.raw},
                                  {"analysis", *record.analysis}},
                                 Origin::Rewritten, false);
}

// Unifies CoT-formatted records: removes the knowledge-point preamble and
// keeps the answer.
inline RouteResult unify_format(const ProblemRecord& record, Backend& backend,
                                const SynthesisOptions& opts = {}) {
  if (record.source_kind != SourceKind::CoTFormatted || !record.cot_solution) {
    throw InvalidArgumentError("unify_format requires source_kind=cot_formatted with solution");
  }
  return synth_detail::run_route(record, backend, opts, "P_F",
                                 {{"question", record.question},
                                  {"gold_answer", record.gold_answer.raw},
                                  {"cot_solution", *record.cot_solution}},
                                 Origin::Unified, true);
}

// ---------------------------------------------------------------------------
// Quality verification filter.

struct FilterResult {
  std::vector<TrajectoryRecord> kept;
  int dropped_wrong_answer = 0;
  int dropped_verdict = 0;
  int malformed_verdicts = 0;
};

namespace synth_detail {

// Parses the first standalone YES/NO word; anything else is malformed.
inline std::optional<bool> parse_verdict(const std::string& text) {
  std::string word;
  auto check = [&]() -> std::optional<bool> {
    std::string lower = ans_detail::to_lower(word);
    if (lower == "yes") return true;
    if (lower == "no") return false;
    return std::nullopt;
  };
  for (char c : text) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      word.push_back(c);
    } else if (!word.empty()) {
      if (auto v = check()) return v;
      word.clear();
    }
  }
  if (!word.empty()) {
    if (auto v = check()) return v;
  }
  return std::nullopt;
}

}  // namespace synth_detail

// Keeps trajectories whose final answer matches gold AND whose checking-prompt
// verdict is a pass. Order-preserving and idempotent.
inline FilterResult quality_filter(const std::vector<TrajectoryRecord>& trajectories,
                                   const ProblemRecord& record, Backend& backend,
                                   const SynthesisOptions& opts = {}) {
  FilterResult result;
  for (const auto& t : trajectories) {
    if (!equivalent(t.final_answer, record.gold_answer)) {
      ++result.dropped_wrong_answer;
      continue;
    }
    std::string solution;
    for (const auto& s : t.steps) {
      if (!solution.empty()) solution.push_back('\n');
      solution += s;
    }
    solution += "\nFinal answer: " + t.final_answer.raw;
    GenerationRequest req;
    req.prompt_template_id = "P_check";
    req.n_return_sequences = 1;
    req.temperature = 0.0;
    req.seed = opts.seed;
    req.variables = {{"question", record.question},
                     {"gold_answer", record.gold_answer.raw},
                     {"solution", solution}};
    auto completions = backend.complete(req, record);
    auto verdict = completions.empty() ? std::nullopt
                                       : synth_detail::parse_verdict(completions.front());
    if (!verdict) {
      ++result.malformed_verdicts;
      continue;
    }
    if (!*verdict) {
      ++result.dropped_verdict;
      continue;
    }
    result.kept.push_back(t);
  }
  return result;
}

// ---------------------------------------------------------------------------
// SFT dataset assembly: union of the three filtered pools, deduplicated and
// shuffled under a fixed seed.

struct SftDataset {
  std::vector<TrajectoryRecord> records;
  std::map<std::string, std::size_t> per_source_counts;  // by origin name
  std::size_t duplicates_removed = 0;
};

inline std::string dedup_key(const TrajectoryRecord& t) {
  std::string joined;
  for (const auto& s : t.steps) {
    joined += s;
    joined.push_back(' ');
  }
  return t.problem_id + "\x1f" + ans_detail::to_lower(ans_detail::collapse_ws(joined));
}

inline SftDataset build_sft_dataset(const std::vector<TrajectoryRecord>& distilled,
                                    const std::vector<TrajectoryRecord>& rewritten,
                                    const std::vector<TrajectoryRecord>& unified,
                                    std::uint64_t seed) {
  SftDataset out;
  std::set<std::string> seen;
  auto absorb = [&](const std::vector<TrajectoryRecord>& pool) {
    for (const auto& t : pool) {
      if (!seen.insert(dedup_key(t)).second) {
        ++out.duplicates_removed;
        continue;
      }
      out.per_source_counts[enum_name(t.origin)] += 1;
      out.records.push_back(t);
    }
  };
  absorb(distilled);
  absorb(rewritten);
  absorb(unified);
  Rng rng(mix_seed({seed, fnv1a64("sft_shuffle")}));
  rng.shuffle(out.records);
  return out;
}

}  // namespace cotkit
