#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cotkit/answer.hpp"
#include "cotkit/errors.hpp"

namespace cotkit {

using json = nlohmann::json;

// Score clamp bound: step scores live in [kScoreEps, 1 - kScoreEps] so the
// classification loss stays finite.
inline constexpr double kScoreEps = 1e-7;

// Field-level parse failure; dataset_io rewraps it with the line number.
class FieldViolation : public Error {
 public:
  FieldViolation(std::string field, const std::string& what)
      : Error("field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class SourceKind { AnswerOnly, AnalysisFormatted, CoTFormatted };
enum class Origin { Sampled, Distilled, Rewritten, Unified, MisreadInjected };
enum class Provenance { BEL, MIE, ForwardPositive };
enum class Aggregation { Min, Mean, Last, Product };
enum class Method { PassAtN, SelfConsistency, BestOfN };

namespace rec_detail {

template <class E>
struct EnumTable;

template <>
struct EnumTable<SourceKind> {
  static constexpr std::pair<SourceKind, std::string_view> entries[] = {
      {SourceKind::AnswerOnly, "answer_only"},
      {SourceKind::AnalysisFormatted, "analysis_formatted"},
      {SourceKind::CoTFormatted, "cot_formatted"},
  };
};
template <>
struct EnumTable<Origin> {
  static constexpr std::pair<Origin, std::string_view> entries[] = {
      {Origin::Sampled, "sampled"},           {Origin::Distilled, "distilled"},
      {Origin::Rewritten, "rewritten"},       {Origin::Unified, "unified"},
      {Origin::MisreadInjected, "misread_injected"},
  };
};
template <>
struct EnumTable<Provenance> {
  static constexpr std::pair<Provenance, std::string_view> entries[] = {
      {Provenance::BEL, "bel"},
      {Provenance::MIE, "mie"},
      {Provenance::ForwardPositive, "forward_positive"},
  };
};
template <>
struct EnumTable<Aggregation> {
  static constexpr std::pair<Aggregation, std::string_view> entries[] = {
      {Aggregation::Min, "min"},
      {Aggregation::Mean, "mean"},
      {Aggregation::Last, "last"},
      {Aggregation::Product, "product"},
  };
};
template <>
struct EnumTable<Method> {
  static constexpr std::pair<Method, std::string_view> entries[] = {
      {Method::PassAtN, "pass_at_n"},
      {Method::SelfConsistency, "self_consistency"},
      {Method::BestOfN, "best_of_n"},
  };
};
template <>
struct EnumTable<AnswerKind> {
  static constexpr std::pair<AnswerKind, std::string_view> entries[] = {
      {AnswerKind::Numeric, "numeric"},
      {AnswerKind::Fraction, "fraction"},
      {AnswerKind::Choice, "choice"},
      {AnswerKind::FreeText, "free_text"},
  };
};

}  // namespace rec_detail

template <class E>
std::string enum_name(E v) {
  for (const auto& [e, n] : rec_detail::EnumTable<E>::entries) {
    if (e == v) return std::string(n);
  }
  throw Error("unknown enum value");
}

template <class E>
E enum_parse(const std::string& s, const char* field) {
  for (const auto& [e, n] : rec_detail::EnumTable<E>::entries) {
    if (n == s) return e;
  }
  throw FieldViolation(field, "unknown value '" + s + "'");
}

namespace rec_detail {

inline const json& require(const json& j, const char* field) {
  if (!j.is_object()) throw FieldViolation(field, "record is not a JSON object");
  auto it = j.find(field);
  if (it == j.end()) throw FieldViolation(field, "missing");
  return *it;
}

inline std::string req_string(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_string()) throw FieldViolation(field, "expected string");
  return v.get<std::string>();
}

inline std::optional<std::string> opt_string(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw FieldViolation(field, "expected string");
  return it->get<std::string>();
}

inline double req_double(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_number()) throw FieldViolation(field, "expected number");
  return v.get<double>();
}

inline std::int64_t req_int(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_number_integer()) throw FieldViolation(field, "expected integer");
  return v.get<std::int64_t>();
}

// Collects keys not in `known` so round-trips preserve foreign fields.
inline json collect_extra(const json& j, std::initializer_list<std::string_view> known) {
  json extra = json::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool is_known = false;
    for (auto k : known) {
      if (it.key() == k) {
        is_known = true;
        break;
      }
    }
    if (!is_known) extra[it.key()] = it.value();
  }
  return extra;
}

}  // namespace rec_detail

// ---------------------------------------------------------------------------
// AnswerValue serialization

inline json to_json_value(const AnswerValue& a) {
  json j = json::object();
  j["raw"] = a.raw;
  j["canonical"] = a.canonical;
  j["kind"] = enum_name(a.kind);
  return j;
}

inline AnswerValue parse_answer_value(const json& j) {
  using namespace rec_detail;
  AnswerValue a;
  a.raw = req_string(j, "raw");
  std::string canonical = req_string(j, "canonical");
  AnswerKind kind = enum_parse<AnswerKind>(req_string(j, "kind"), "kind");
  // Numeric payload is rebuilt from the canonical text; kind must agree.
  AnswerValue derived = canonicalize_answer(canonical);
  if (derived.kind != kind) {
    throw FieldViolation("kind", "does not match canonical form '" + canonical + "'");
  }
  a.canonical = canonical;
  a.kind = kind;
  a.value = derived.value;
  a.num = derived.num;
  a.den = derived.den;
  a.unit = derived.unit;
  return a;
}

// ---------------------------------------------------------------------------
// ProblemRecord

struct ProblemRecord {
  std::string id;
  std::string question;
  AnswerValue gold_answer;
  std::optional<std::string> analysis;      // a_i
  std::optional<std::string> cot_solution;  // c_i
  SourceKind source_kind = SourceKind::AnswerOnly;
  std::optional<std::string> image;  // opaque path/URI, forwarded verbatim
  std::map<std::string, std::string> image_facts;  // simulator-only sidecar
  std::optional<std::string> topic;  // misread-prompt routing, default geometry
  json extra = json::object();

  void validate() const {
    if (id.empty()) throw FieldViolation("id", "must be non-empty");
    if (source_kind == SourceKind::AnalysisFormatted && !analysis) {
      throw FieldViolation("analysis", "required when source_kind=analysis_formatted");
    }
    if (source_kind == SourceKind::CoTFormatted && !cot_solution) {
      throw FieldViolation("cot_solution", "required when source_kind=cot_formatted");
    }
  }
};

inline json to_json_value(const ProblemRecord& r) {
  json j = r.extra.is_object() ? r.extra : json::object();
  j["id"] = r.id;
  j["question"] = r.question;
  j["gold_answer"] = to_json_value(r.gold_answer);
  if (r.analysis) j["analysis"] = *r.analysis;
  if (r.cot_solution) j["cot_solution"] = *r.cot_solution;
  j["source_kind"] = enum_name(r.source_kind);
  if (r.image) j["image"] = *r.image;
  if (!r.image_facts.empty()) j["image_facts"] = r.image_facts;
  if (r.topic) j["topic"] = *r.topic;
  return j;
}

inline ProblemRecord parse_problem(const json& j) {
  using namespace rec_detail;
  ProblemRecord r;
  r.id = req_string(j, "id");
  r.question = req_string(j, "question");
  r.gold_answer = parse_answer_value(require(j, "gold_answer"));
  r.analysis = opt_string(j, "analysis");
  r.cot_solution = opt_string(j, "cot_solution");
  r.source_kind = enum_parse<SourceKind>(req_string(j, "source_kind"), "source_kind");
  r.image = opt_string(j, "image");
  if (auto it = j.find("image_facts"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw FieldViolation("image_facts", "expected object");
    for (auto f = it->begin(); f != it->end(); ++f) {
      if (f.value().is_string()) {
        r.image_facts[f.key()] = f.value().get<std::string>();
      } else {
        r.image_facts[f.key()] = f.value().dump();
      }
    }
  }
  r.topic = opt_string(j, "topic");
  r.extra = collect_extra(j, {"id", "question", "gold_answer", "analysis", "cot_solution",
                              "source_kind", "image", "image_facts", "topic"});
  r.validate();
  return r;
}

// ---------------------------------------------------------------------------
// TrajectoryRecord

struct TrajectoryRecord {
  std::string problem_id;
  std::vector<std::string> steps;  // 1-based step indexing throughout
  AnswerValue final_answer;
  std::optional<bool> correct;
  Origin origin = Origin::Sampled;
  json extra = json::object();

  void validate() const {
    if (steps.empty()) throw FieldViolation("steps", "must be non-empty");
  }
};

inline json to_json_value(const TrajectoryRecord& r) {
  json j = r.extra.is_object() ? r.extra : json::object();
  j["problem_id"] = r.problem_id;
  j["steps"] = r.steps;
  j["final_answer"] = to_json_value(r.final_answer);
  if (r.correct) j["correct"] = *r.correct;
  j["origin"] = enum_name(r.origin);
  return j;
}

inline TrajectoryRecord parse_trajectory(const json& j) {
  using namespace rec_detail;
  TrajectoryRecord r;
  r.problem_id = req_string(j, "problem_id");
  const json& steps = require(j, "steps");
  if (!steps.is_array()) throw FieldViolation("steps", "expected array");
  for (const auto& s : steps) {
    if (!s.is_string()) throw FieldViolation("steps", "expected array of strings");
    r.steps.push_back(s.get<std::string>());
  }
  r.final_answer = parse_answer_value(require(j, "final_answer"));
  if (auto it = j.find("correct"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) throw FieldViolation("correct", "expected boolean");
    r.correct = it->get<bool>();
  }
  r.origin = enum_parse<Origin>(req_string(j, "origin"), "origin");
  r.extra = collect_extra(j, {"problem_id", "steps", "final_answer", "correct", "origin"});
  r.validate();
  return r;
}

// ---------------------------------------------------------------------------
// StepLabelRecord

struct StepLabelRecord {
  std::string problem_id;
  TrajectoryRecord trajectory;
  std::vector<int> labels;             // {1,0}, one per step
  std::optional<int> first_error;      // 1-based
  Provenance provenance = Provenance::BEL;
  json extra = json::object();

  void validate() const {
    trajectory.validate();
    if (labels.size() != trajectory.steps.size()) {
      throw FieldViolation("labels", "length must equal number of steps");
    }
    bool seen_zero = false;
    for (int v : labels) {
      if (v != 0 && v != 1) throw FieldViolation("labels", "values must be 0 or 1");
      if (v == 0) seen_zero = true;
      if (v == 1 && seen_zero) {
        throw FieldViolation("labels", "label 1 after label 0 violates monotonicity");
      }
    }
    if (provenance == Provenance::ForwardPositive) {
      if (seen_zero) throw FieldViolation("labels", "forward_positive requires all labels 1");
      if (first_error) {
        throw FieldViolation("first_error", "must be absent for forward_positive");
      }
    }
    if (first_error) {
      int fe = *first_error;
      if (fe < 1 || fe > static_cast<int>(labels.size())) {
        throw FieldViolation("first_error", "out of range");
      }
      if (labels[static_cast<std::size_t>(fe - 1)] != 0) {
        throw FieldViolation("first_error", "label at first_error must be 0");
      }
      if (fe > 1 && labels[static_cast<std::size_t>(fe - 2)] != 1) {
        throw FieldViolation("first_error", "label before first_error must be 1");
      }
    }
  }
};

// Prefix-positive/suffix-negative label vector from a 1-based split point.
inline std::vector<int> labels_from_first_error(std::size_t n_steps, int first_error) {
  std::vector<int> labels(n_steps, 1);
  for (std::size_t i = static_cast<std::size_t>(first_error) - 1; i < n_steps; ++i) {
    labels[i] = 0;
  }
  return labels;
}

inline json to_json_value(const StepLabelRecord& r) {
  json j = r.extra.is_object() ? r.extra : json::object();
  j["problem_id"] = r.problem_id;
  j["trajectory"] = to_json_value(r.trajectory);
  j["labels"] = r.labels;
  if (r.first_error) j["first_error"] = *r.first_error;
  j["provenance"] = enum_name(r.provenance);
  return j;
}

inline StepLabelRecord parse_step_label(const json& j) {
  using namespace rec_detail;
  StepLabelRecord r;
  r.problem_id = req_string(j, "problem_id");
  try {
    r.trajectory = parse_trajectory(require(j, "trajectory"));
  } catch (const FieldViolation& e) {
    throw FieldViolation("trajectory." + e.field(), e.what());
  }
  const json& labels = require(j, "labels");
  if (!labels.is_array()) throw FieldViolation("labels", "expected array");
  for (const auto& v : labels) {
    if (!v.is_number_integer()) throw FieldViolation("labels", "expected integer array");
    r.labels.push_back(v.get<int>());
  }
  if (auto it = j.find("first_error"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw FieldViolation("first_error", "expected integer");
    r.first_error = it->get<int>();
  }
  r.provenance = enum_parse<Provenance>(req_string(j, "provenance"), "provenance");
  r.extra = collect_extra(j, {"problem_id", "trajectory", "labels", "first_error", "provenance"});
  r.validate();
  return r;
}

// ---------------------------------------------------------------------------
// ScoredTrajectory

inline double aggregate_scores(const std::vector<double>& scores, Aggregation agg) {
  if (scores.empty()) throw InvalidArgumentError("aggregate over empty score vector");
  switch (agg) {
    case Aggregation::Min: {
      double m = scores[0];
      for (double s : scores) m = std::min(m, s);
      return m;
    }
    case Aggregation::Mean: {
      double sum = 0;
      for (double s : scores) sum += s;
      return sum / static_cast<double>(scores.size());
    }
    case Aggregation::Last:
      return scores.back();
    case Aggregation::Product: {
      double p = 1;
      for (double s : scores) p *= s;
      return p;
    }
  }
  throw Error("unreachable aggregation");
}

struct ScoredTrajectory {
  TrajectoryRecord trajectory;
  std::vector<double> step_scores;  // each in [kScoreEps, 1 - kScoreEps]
  double aggregate = 0.0;
  Aggregation aggregation_method = Aggregation::Min;
  json extra = json::object();

  void validate() const {
    trajectory.validate();
    if (step_scores.size() != trajectory.steps.size()) {
      throw FieldViolation("step_scores", "length must equal number of steps");
    }
    for (double s : step_scores) {
      if (!(s >= 0.0 && s <= 1.0)) throw FieldViolation("step_scores", "scores must be in [0,1]");
    }
    double expect = aggregate_scores(step_scores, aggregation_method);
    if (std::fabs(expect - aggregate) > 1e-12) {
      throw FieldViolation("aggregate", "does not match declared aggregation");
    }
  }
};

inline ScoredTrajectory make_scored(TrajectoryRecord trajectory, std::vector<double> scores,
                                    Aggregation agg) {
  for (double& s : scores) s = std::min(1.0 - kScoreEps, std::max(kScoreEps, s));
  ScoredTrajectory st;
  st.trajectory = std::move(trajectory);
  st.step_scores = std::move(scores);
  st.aggregation_method = agg;
  st.aggregate = aggregate_scores(st.step_scores, agg);
  st.validate();
  return st;
}

inline json to_json_value(const ScoredTrajectory& r) {
  json j = r.extra.is_object() ? r.extra : json::object();
  j["trajectory"] = to_json_value(r.trajectory);
  j["step_scores"] = r.step_scores;
  j["aggregate"] = r.aggregate;
  j["aggregation_method"] = enum_name(r.aggregation_method);
  return j;
}

inline ScoredTrajectory parse_scored(const json& j) {
  using namespace rec_detail;
  ScoredTrajectory r;
  try {
    r.trajectory = parse_trajectory(require(j, "trajectory"));
  } catch (const FieldViolation& e) {
    throw FieldViolation("trajectory." + e.field(), e.what());
  }
  const json& scores = require(j, "step_scores");
  if (!scores.is_array()) throw FieldViolation("step_scores", "expected array");
  for (const auto& v : scores) {
    if (!v.is_number()) throw FieldViolation("step_scores", "expected number array");
    r.step_scores.push_back(v.get<double>());
  }
  r.aggregate = req_double(j, "aggregate");
  r.aggregation_method =
      enum_parse<Aggregation>(req_string(j, "aggregation_method"), "aggregation_method");
  r.extra = collect_extra(j, {"trajectory", "step_scores", "aggregate", "aggregation_method"});
  r.validate();
  return r;
}

// ---------------------------------------------------------------------------
// SamplePool (fixed-order candidate pool for one problem)

struct SamplePool {
  std::string problem_id;
  AnswerValue gold;
  std::vector<TrajectoryRecord> samples;
  std::optional<std::vector<ScoredTrajectory>> scores;  // parallel to samples
  json extra = json::object();

  void validate() const {
    if (samples.empty()) throw FieldViolation("samples", "must be non-empty");
    if (scores && scores->size() != samples.size()) {
      throw FieldViolation("scores", "length must equal number of samples");
    }
  }
};

inline json to_json_value(const SamplePool& r) {
  json j = r.extra.is_object() ? r.extra : json::object();
  j["problem_id"] = r.problem_id;
  j["gold"] = to_json_value(r.gold);
  json samples = json::array();
  for (const auto& s : r.samples) samples.push_back(to_json_value(s));
  j["samples"] = samples;
  if (r.scores) {
    json scores = json::array();
    for (const auto& s : *r.scores) scores.push_back(to_json_value(s));
    j["scores"] = scores;
  }
  return j;
}

inline SamplePool parse_sample_pool(const json& j) {
  using namespace rec_detail;
  SamplePool r;
  r.problem_id = req_string(j, "problem_id");
  r.gold = parse_answer_value(require(j, "gold"));
  const json& samples = require(j, "samples");
  if (!samples.is_array()) throw FieldViolation("samples", "expected array");
  for (const auto& s : samples) {
    try {
      r.samples.push_back(parse_trajectory(s));
    } catch (const FieldViolation& e) {
      throw FieldViolation("samples." + e.field(), e.what());
    }
  }
  if (auto it = j.find("scores"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw FieldViolation("scores", "expected array");
    std::vector<ScoredTrajectory> ss;
    for (const auto& s : *it) ss.push_back(parse_scored(s));
    r.scores = std::move(ss);
  }
  r.extra = collect_extra(j, {"problem_id", "gold", "samples", "scores"});
  r.validate();
  return r;
}

// ---------------------------------------------------------------------------
// PairPool (positive/negative trajectory sets for one problem)

struct PairPool {
  std::string problem_id;
  std::vector<TrajectoryRecord> positives;  // correct = true
  std::vector<TrajectoryRecord> negatives;  // correct = false
  json extra = json::object();

  void validate() const {
    for (const auto& t : positives) {
      if (!t.correct || !*t.correct) {
        throw FieldViolation("positives", "every positive must have correct=true");
      }
    }
    for (const auto& t : negatives) {
      if (!t.correct || *t.correct) {
        throw FieldViolation("negatives", "every negative must have correct=false");
      }
    }
  }
};

inline json to_json_value(const PairPool& r) {
  json j = r.extra.is_object() ? r.extra : json::object();
  j["problem_id"] = r.problem_id;
  json pos = json::array(), neg = json::array();
  for (const auto& t : r.positives) pos.push_back(to_json_value(t));
  for (const auto& t : r.negatives) neg.push_back(to_json_value(t));
  j["positives"] = pos;
  j["negatives"] = neg;
  return j;
}

inline PairPool parse_pair_pool(const json& j) {
  using namespace rec_detail;
  PairPool r;
  r.problem_id = req_string(j, "problem_id");
  const json& pos = require(j, "positives");
  const json& neg = require(j, "negatives");
  if (!pos.is_array()) throw FieldViolation("positives", "expected array");
  if (!neg.is_array()) throw FieldViolation("negatives", "expected array");
  for (const auto& t : pos) r.positives.push_back(parse_trajectory(t));
  for (const auto& t : neg) r.negatives.push_back(parse_trajectory(t));
  r.extra = collect_extra(j, {"problem_id", "positives", "negatives"});
  r.validate();
  return r;
}

// ---------------------------------------------------------------------------
// EvalReport

struct EvalReport {
  struct Row {
    Method method = Method::PassAtN;
    int n = 1;
    double accuracy = 0.0;
  };

  std::string benchmark_name;
  int pool_size = 0;  // N_max shared by every problem in the run
  std::vector<Row> rows;
  std::uint64_t seed = 0;
  json extra = json::object();

  void validate() const {
    for (const auto& row : rows) {
      if (row.n < 1) throw FieldViolation("rows", "n must be >= 1");
      if (!(row.accuracy >= 0.0 && row.accuracy <= 1.0)) {
        throw FieldViolation("rows", "accuracy must be in [0,1]");
      }
    }
  }
};

inline json to_json_value(const EvalReport& r) {
  json j = r.extra.is_object() ? r.extra : json::object();
  j["benchmark_name"] = r.benchmark_name;
  j["pool_size"] = r.pool_size;
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back(json{{"method", enum_name(row.method)}, {"n", row.n},
                        {"accuracy", row.accuracy}});
  }
  j["rows"] = rows;
  j["seed"] = r.seed;
  return j;
}

inline EvalReport parse_eval_report(const json& j) {
  using namespace rec_detail;
  EvalReport r;
  r.benchmark_name = req_string(j, "benchmark_name");
  r.pool_size = static_cast<int>(req_int(j, "pool_size"));
  const json& rows = require(j, "rows");
  if (!rows.is_array()) throw FieldViolation("rows", "expected array");
  for (const auto& row : rows) {
    EvalReport::Row out;
    out.method = enum_parse<Method>(req_string(row, "method"), "rows.method");
    out.n = static_cast<int>(req_int(row, "n"));
    out.accuracy = req_double(row, "accuracy");
    r.rows.push_back(out);
  }
  r.seed = static_cast<std::uint64_t>(req_int(j, "seed"));
  r.extra = collect_extra(j, {"benchmark_name", "pool_size", "rows", "seed"});
  r.validate();
  return r;
}

// ---------------------------------------------------------------------------
// Canonical one-line serialization shared by writers and equality checks.

template <class R>
std::string canonical_line(const R& r) {
  return to_json_value(r).dump();
}

inline bool operator==(const ProblemRecord& a, const ProblemRecord& b) {
  return canonical_line(a) == canonical_line(b);
}
inline bool operator==(const TrajectoryRecord& a, const TrajectoryRecord& b) {
  return canonical_line(a) == canonical_line(b);
}
inline bool operator==(const StepLabelRecord& a, const StepLabelRecord& b) {
  return canonical_line(a) == canonical_line(b);
}
inline bool operator==(const ScoredTrajectory& a, const ScoredTrajectory& b) {
  return canonical_line(a) == canonical_line(b);
}
inline bool operator==(const SamplePool& a, const SamplePool& b) {
  return canonical_line(a) == canonical_line(b);
}
inline bool operator==(const PairPool& a, const PairPool& b) {
  return canonical_line(a) == canonical_line(b);
}
inline bool operator==(const EvalReport& a, const EvalReport& b) {
  return canonical_line(a) == canonical_line(b);
}

// ---------------------------------------------------------------------------
// Step segmentation

enum class SegmentationMode { Marker, Paragraph, WholeText };

namespace rec_detail {

inline std::string strip_cr(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c != '\r') out.push_back(c);
  }
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace rec_detail

inline SegmentationMode detect_segmentation(const std::string& solution_text) {
  std::string text = rec_detail::strip_cr(solution_text);
  static const std::regex marker(R"((^|\n)[ \t]*[Ss]tep[ \t]+\d+[ \t]*[:.])");
  if (std::regex_search(text, marker)) return SegmentationMode::Marker;
  static const std::regex blank_line(R"(\n[ \t]*\n)");
  std::string trimmed = rec_detail::trim(text);
  if (std::regex_search(trimmed, blank_line)) return SegmentationMode::Paragraph;
  return SegmentationMode::WholeText;
}

// Deterministic segmentation: explicit "Step k:" markers take precedence,
// then blank-line paragraph split, else the whole text as one step. Joining
// the result with "\n" (marker mode) or "\n\n" (paragraph mode) yields the
// normalized text.
inline std::vector<std::string> segment_steps(const std::string& solution_text) {
  using rec_detail::trim;
  if (solution_text.empty()) {
    throw InvalidArgumentError("segment_steps: solution_text must be non-empty");
  }
  std::string text = rec_detail::strip_cr(solution_text);
  SegmentationMode mode = detect_segmentation(text);

  std::vector<std::string> steps;
  if (mode == SegmentationMode::Marker) {
    static const std::regex marker(R"((^|\n)[ \t]*[Ss]tep[ \t]+\d+[ \t]*[:.])");
    std::vector<std::size_t> starts;
    auto begin = std::sregex_iterator(text.begin(), text.end(), marker);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
      std::size_t pos = static_cast<std::size_t>(it->position(0));
      if (text[pos] == '\n') ++pos;
      starts.push_back(pos);
    }
    std::string preamble = trim(std::string_view(text).substr(0, starts.front()));
    if (!preamble.empty()) steps.push_back(preamble);
    for (std::size_t i = 0; i < starts.size(); ++i) {
      std::size_t end = (i + 1 < starts.size()) ? starts[i + 1] : text.size();
      std::string seg = trim(std::string_view(text).substr(starts[i], end - starts[i]));
      if (!seg.empty()) steps.push_back(seg);
    }
  } else if (mode == SegmentationMode::Paragraph) {
    std::string trimmed = trim(text);
    static const std::regex sep(R"(\n[ \t]*\n[ \t\n]*)");
    std::sregex_token_iterator it(trimmed.begin(), trimmed.end(), sep, -1), end;
    for (; it != end; ++it) {
      std::string seg = trim(it->str());
      if (!seg.empty()) steps.push_back(seg);
    }
  }
  if (steps.empty()) steps.push_back(trim(text).empty() ? text : trim(text));
  return steps;
}

}  // namespace cotkit
