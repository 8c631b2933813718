#pragma once

// Shared fixtures: random (but always valid) record generators and temp dirs.
// The generators double as the ground truth for round-trip identity tests.

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "cotkit/dataset_io.hpp"
#include "cotkit/records.hpp"
#include "cotkit/rng.hpp"

namespace testutil {

using namespace cotkit;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("cotkit_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter()++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

inline std::string random_word(Rng& rng) {
  static const char* words[] = {"triangle", "angle",  "area",   "radius", "vertex", "segment",
                                "apply",    "derive", "lemma",  "sum",    "ratio",  "height",
                                "base",     "circle", "square", "length", "prove",  "compute"};
  return words[rng.below(sizeof(words) / sizeof(words[0]))];
}

inline std::string random_text(Rng& rng, int min_words = 2, int max_words = 8) {
  int n = rng.range(min_words, max_words);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out.push_back(' ');
    out += random_word(rng);
  }
  return out;
}

inline AnswerValue random_answer(Rng& rng) {
  switch (rng.below(6)) {
    case 0:
      return canonicalize_answer(std::to_string(rng.range(-500, 500)));
    case 1: {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%d.%02d", rng.range(0, 99), rng.range(0, 99));
      return canonicalize_answer(buf);
    }
    case 2: {
      int den = rng.range(2, 12);
      return canonicalize_answer(std::to_string(rng.range(1, 40)) + "/" + std::to_string(den));
    }
    case 3:
      return canonicalize_answer(std::string(1, static_cast<char>('a' + rng.below(5))));
    case 4:
      return canonicalize_answer(std::to_string(rng.range(1, 179)) + "\xc2\xb0");
    default:
      return canonicalize_answer(random_text(rng, 1, 3));
  }
}

inline ProblemRecord random_problem(Rng& rng, const std::string& id) {
  ProblemRecord r;
  r.id = id;
  r.question = random_text(rng, 4, 12) + "?";
  r.gold_answer = random_answer(rng);
  switch (rng.below(3)) {
    case 0:
      r.source_kind = SourceKind::AnswerOnly;
      break;
    case 1:
      r.source_kind = SourceKind::AnalysisFormatted;
      r.analysis = random_text(rng, 6, 20);
      break;
    default:
      r.source_kind = SourceKind::CoTFormatted;
      r.cot_solution = "Step 1: " + random_text(rng) + "\nStep 2: " + random_text(rng);
      break;
  }
  if (rng.uniform() < 0.3) r.image = "images/" + id + ".png";
  if (rng.uniform() < 0.3) {
    r.image_facts["AB"] = std::to_string(rng.range(1, 20));
    r.image_facts["angle C"] = std::to_string(rng.range(10, 170)) + "\xc2\xb0";
  }
  if (rng.uniform() < 0.2) r.topic = rng.uniform() < 0.5 ? "geometry" : "function";
  if (rng.uniform() < 0.25) r.extra["note"] = random_word(rng);
  r.validate();
  return r;
}

inline TrajectoryRecord random_trajectory(Rng& rng, const std::string& problem_id) {
  TrajectoryRecord t;
  t.problem_id = problem_id;
  int n = rng.range(1, 6);
  for (int i = 1; i <= n; ++i) {
    t.steps.push_back("Step " + std::to_string(i) + ": " + random_text(rng));
  }
  t.final_answer = random_answer(rng);
  if (rng.uniform() < 0.7) t.correct = rng.uniform() < 0.5;
  static const Origin origins[] = {Origin::Sampled, Origin::Distilled, Origin::Rewritten,
                                   Origin::Unified, Origin::MisreadInjected};
  t.origin = origins[rng.below(5)];
  if (rng.uniform() < 0.2) t.extra["meta"] = random_word(rng);
  t.validate();
  return t;
}

inline StepLabelRecord random_step_label(Rng& rng, const std::string& problem_id) {
  StepLabelRecord r;
  r.trajectory = random_trajectory(rng, problem_id);
  r.problem_id = r.trajectory.problem_id;
  std::size_t n = r.trajectory.steps.size();
  switch (rng.below(3)) {
    case 0:
      r.provenance = Provenance::ForwardPositive;
      r.labels.assign(n, 1);
      break;
    case 1: {
      r.provenance = Provenance::BEL;
      int fe = rng.range(1, static_cast<int>(n));
      r.labels = labels_from_first_error(n, fe);
      r.first_error = fe;
      break;
    }
    default: {
      r.provenance = Provenance::MIE;
      int fe = rng.range(1, static_cast<int>(n));
      r.labels = labels_from_first_error(n, fe);
      r.first_error = fe;
      break;
    }
  }
  r.validate();
  return r;
}

inline ScoredTrajectory random_scored(Rng& rng, const std::string& problem_id) {
  TrajectoryRecord t = random_trajectory(rng, problem_id);
  std::vector<double> scores;
  for (std::size_t i = 0; i < t.steps.size(); ++i) scores.push_back(rng.uniform());
  static const Aggregation aggs[] = {Aggregation::Min, Aggregation::Mean, Aggregation::Last,
                                     Aggregation::Product};
  return make_scored(std::move(t), std::move(scores), aggs[rng.below(4)]);
}

inline SamplePool random_sample_pool(Rng& rng, const std::string& problem_id,
                                     int n_samples = -1) {
  SamplePool p;
  p.problem_id = problem_id;
  p.gold = random_answer(rng);
  int n = n_samples > 0 ? n_samples : rng.range(1, 8);
  for (int i = 0; i < n; ++i) p.samples.push_back(random_trajectory(rng, problem_id));
  if (rng.uniform() < 0.3) {
    std::vector<ScoredTrajectory> scores;
    for (const auto& s : p.samples) {
      std::vector<double> v;
      for (std::size_t k = 0; k < s.steps.size(); ++k) v.push_back(rng.uniform());
      scores.push_back(make_scored(s, std::move(v), Aggregation::Min));
    }
    p.scores = std::move(scores);
  }
  p.validate();
  return p;
}

inline PairPool random_pair_pool(Rng& rng, const std::string& problem_id) {
  PairPool p;
  p.problem_id = problem_id;
  int npos = rng.range(0, 4);
  int nneg = rng.range(0, 4);
  for (int i = 0; i < npos; ++i) {
    auto t = random_trajectory(rng, problem_id);
    t.correct = true;
    p.positives.push_back(std::move(t));
  }
  for (int i = 0; i < nneg; ++i) {
    auto t = random_trajectory(rng, problem_id);
    t.correct = false;
    p.negatives.push_back(std::move(t));
  }
  p.validate();
  return p;
}

// A problem the simulated backend treats numerically (gold 42).
inline ProblemRecord sim_problem(const std::string& id, const std::string& gold = "42") {
  ProblemRecord r;
  r.id = id;
  r.question = "What is the value of x in the figure?";
  r.gold_answer = canonicalize_answer(gold);
  r.source_kind = SourceKind::AnswerOnly;
  r.validate();
  return r;
}

}  // namespace testutil
