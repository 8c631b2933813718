#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cotkit/errors.hpp"
#include "cotkit/records.hpp"

namespace cotkit {

struct SamplingProfile {
  double temperature = 1.0;
  double top_p = 0.95;
  int n_return_sequences = 16;
};

// Sampling defaults: pair generation and error-locating rollouts use
// different temperatures; the locating temperature applies to all rollouts.
inline constexpr SamplingProfile kPairGenProfile{1.0, 0.95, 16};
inline constexpr SamplingProfile kLocateProfile{0.3, 0.95, 16};

// Template ids with generation semantics (as opposed to free-form prompts).
// sample_full: fresh full-solution sampling; rollout_continue: continue a
// fixed step prefix to a final answer.
inline constexpr const char* kSampleFullTemplate = "sample_full";
inline constexpr const char* kRolloutTemplate = "rollout_continue";

struct GenerationRequest {
  std::string prompt_template_id;
  std::map<std::string, std::string> variables;
  std::optional<std::string> image;
  int n_return_sequences = 1;
  double temperature = 1.0;
  double top_p = 0.95;
  std::optional<std::uint64_t> seed;

  void validate() const {
    if (n_return_sequences < 1) {
      throw InvalidArgumentError("n_return_sequences must be >= 1");
    }
    if (temperature < 0) throw InvalidArgumentError("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidArgumentError("top_p must be in (0,1]");
  }

  static GenerationRequest from_profile(std::string template_id, const SamplingProfile& p,
                                        std::optional<std::uint64_t> seed = std::nullopt) {
    GenerationRequest r;
    r.prompt_template_id = std::move(template_id);
    r.temperature = p.temperature;
    r.top_p = p.top_p;
    r.n_return_sequences = p.n_return_sequences;
    r.seed = seed;
    return r;
  }
};

struct GenerationResult {
  std::vector<TrajectoryRecord> trajectories;
  int malformed_dropped = 0;
};

// Generator G and step scorer M_p behind one interface. Implementations must
// be safe for concurrent calls.
class Backend {
 public:
  virtual ~Backend() = default;

  // Free-form prompt-template completion (synthesis, checking, misread stages).
  virtual std::vector<std::string> complete(const GenerationRequest& request,
                                            const ProblemRecord& context) = 0;

  // Samples trajectories whose steps begin with prefix_steps (empty prefix =
  // full-solution sampling). Malformed completions are dropped and counted.
  virtual GenerationResult generate(const GenerationRequest& request,
                                    const ProblemRecord& context,
                                    const std::vector<std::string>& prefix_steps) = 0;

  // One score per step in [kScoreEps, 1-kScoreEps].
  virtual ScoredTrajectory score_steps(const TrajectoryRecord& trajectory,
                                       const ProblemRecord& context,
                                       Aggregation aggregation) = 0;
};

}  // namespace cotkit
