#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <regex>
#include <semaphore>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "cotkit/answer.hpp"
#include "cotkit/backend.hpp"
#include "cotkit/config.hpp"
#include "cotkit/prompts.hpp"
#include "cotkit/rng.hpp"

namespace cotkit {

// OpenAI-compatible chat-completions backend. Bounded concurrency, exponential
// backoff with jitter, R retries; images travel as attachment parts.
class RemoteBackend : public Backend {
 public:
  RemoteBackend(BackendSettings settings, PromptLibrary prompts,
                ExtractionProfile extraction = {})
      : settings_(std::move(settings)),
        prompts_(std::move(prompts)),
        extraction_(std::move(extraction)),
        slots_(std::max(1, settings_.concurrency)) {
    split_endpoint(settings_.endpoint, base_, path_);
    if (const char* key = std::getenv(settings_.api_key_env.c_str())) api_key_ = key;
  }

  std::vector<std::string> complete(const GenerationRequest& request,
                                    const ProblemRecord& context) override {
    request.validate();
    return post_chat(build_prompt(request, context), request, context);
  }

  GenerationResult generate(const GenerationRequest& request, const ProblemRecord& context,
                            const std::vector<std::string>& prefix_steps) override {
    request.validate();
    std::string prompt = generation_prompt(request, context, prefix_steps);
    GenerationResult result;
    for (const std::string& content : post_chat(prompt, request, context)) {
      try {
        result.trajectories.push_back(parse_trajectory_completion(content, context,
                                                                  prefix_steps));
      } catch (const MalformedCompletionError&) {
        ++result.malformed_dropped;
      }
    }
    return result;
  }

  ScoredTrajectory score_steps(const TrajectoryRecord& trajectory, const ProblemRecord& context,
                               Aggregation aggregation) override {
    if (trajectory.steps.empty()) {
      throw InvalidArgumentError("score_steps: trajectory has no steps");
    }
    std::ostringstream prompt;
    prompt << "Rate each reasoning step of the following solution for the problem.\n"
           << "Problem: " << context.question << "\n\nSolution steps:\n";
    for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
      prompt << (i + 1) << ". " << trajectory.steps[i] << "\n";
    }
    prompt << "\nReply with a JSON array of " << trajectory.steps.size()
           << " probabilities in [0,1], one per step, where 1 means the step is valid.";
    GenerationRequest req;
    req.prompt_template_id = "score_steps";
    req.n_return_sequences = 1;
    req.temperature = 0.0;
    auto contents = post_chat(prompt.str(), req, context);
    if (contents.empty()) throw MalformedCompletionError("scorer returned no content");
    std::vector<double> scores = parse_score_array(contents.front());
    if (scores.size() != trajectory.steps.size()) {
      throw ScoreLengthMismatchError("scorer returned " + std::to_string(scores.size()) +
                                     " scores for " + std::to_string(trajectory.steps.size()) +
                                     " steps");
    }
    return make_scored(trajectory, std::move(scores), aggregation);
  }

 private:
  static void split_endpoint(const std::string& endpoint, std::string& base,
                             std::string& path) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(endpoint, m, re)) {
      throw ConfigError("invalid endpoint URL: '" + endpoint + "'");
    }
    base = m[1].str();
    path = m[2].matched && m[2].length() > 0 ? m[2].str() : "/v1/chat/completions";
  }

  std::string build_prompt(const GenerationRequest& request,
                           const ProblemRecord& context) const {
    if (prompts_.contains(request.prompt_template_id)) {
      return prompts_.get(request.prompt_template_id).render(request.variables);
    }
    if (request.prompt_template_id == kSampleFullTemplate) {
      return generation_prompt(request, context, {});
    }
    throw ConfigError("no prompt template for id '" + request.prompt_template_id + "'");
  }

  std::string generation_prompt(const GenerationRequest& request, const ProblemRecord& context,
                                const std::vector<std::string>& prefix_steps) const {
    std::ostringstream os;
    os << "Solve the problem with numbered reasoning steps (\"Step 1:\", \"Step 2:\", ...)"
       << " and end with a line \"Final answer: <answer>\".\n\nProblem: " << context.question
       << "\n";
    if (!prefix_steps.empty()) {
      os << "\nThe solution starts with these steps; continue from exactly here without"
         << " restating them:\n";
      for (const auto& s : prefix_steps) os << s << "\n";
    }
    (void)request;
    return os.str();
  }

  TrajectoryRecord parse_trajectory_completion(const std::string& content,
                                               const ProblemRecord& context,
                                               const std::vector<std::string>& prefix_steps)
      const {
    std::string text = rec_detail::trim(content);
    if (text.empty()) throw MalformedCompletionError("empty completion");
    auto extracted = extract_final_answer(text, extraction_);
    if (!extracted) throw MalformedCompletionError("no final answer in completion");
    TrajectoryRecord t;
    t.problem_id = context.id;
    t.steps = prefix_steps;
    for (auto& s : segment_steps(text)) t.steps.push_back(std::move(s));
    t.final_answer = canonicalize_answer(*extracted);
    t.correct = equivalent(t.final_answer, context.gold_answer);
    t.origin = Origin::Sampled;
    return t;
  }

  static std::vector<double> parse_score_array(const std::string& content) {
    std::size_t open = content.find('[');
    std::size_t close = content.rfind(']');
    if (open == std::string::npos || close == std::string::npos || close <= open) {
      throw MalformedCompletionError("no JSON array in scorer reply");
    }
    json arr = json::parse(content.substr(open, close - open + 1), nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) {
      throw MalformedCompletionError("unparseable score array");
    }
    std::vector<double> scores;
    for (const auto& v : arr) {
      if (!v.is_number()) throw MalformedCompletionError("non-numeric score");
      scores.push_back(v.get<double>());
    }
    return scores;
  }

  json request_body(const std::string& prompt, const GenerationRequest& request,
                    const ProblemRecord& context) const {
    json parts = json::array();
    parts.push_back({{"type", "text"}, {"text", prompt}});
    std::optional<std::string> image = request.image ? request.image : context.image;
    if (image) {
      parts.push_back({{"type", "image_url"}, {"image_url", {{"url", *image}}}});
    }
    json body;
    body["model"] = settings_.model;
    body["messages"] = json::array({json{{"role", "user"}, {"content", parts}}});
    body["n"] = request.n_return_sequences;
    body["temperature"] = request.temperature;
    body["top_p"] = request.top_p;
    if (request.seed) body["seed"] = *request.seed;
    return body;
  }

  std::vector<std::string> post_chat(const std::string& prompt,
                                     const GenerationRequest& request,
                                     const ProblemRecord& context) {
    json body = request_body(prompt, request, context);
    std::string payload = body.dump();

    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    Rng jitter(mix_seed({fnv1a64(payload), fnv1a64(context.id)}));
    std::string last_error;
    for (int attempt = 0; attempt <= settings_.retries; ++attempt) {
      if (attempt > 0) {
        int delay = settings_.backoff_ms * (1 << (attempt - 1)) +
                    static_cast<int>(jitter.below(
                        static_cast<std::uint64_t>(std::max(1, settings_.backoff_ms))));
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
      httplib::Client cli(base_);
      cli.set_connection_timeout(settings_.timeout_s, 0);
      cli.set_read_timeout(settings_.timeout_s, 0);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
      auto res = cli.Post(path_, headers, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 200 && res->status < 300) {
        return parse_choices(res->body);
      }
      last_error = "HTTP " + std::to_string(res->status);
      if (res->status < 500 && res->status != 429) {
        // Client-side errors will not improve on retry.
        throw RemoteUnavailableError("remote backend rejected request (" + last_error + ")");
      }
    }
    throw RemoteUnavailableError("remote backend unavailable after " +
                                 std::to_string(settings_.retries) + " retries (" + last_error +
                                 ")");
  }

  static std::vector<std::string> parse_choices(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array()) {
      throw RemoteUnavailableError("malformed chat-completions response body");
    }
    std::vector<std::string> out;
    for (const auto& choice : j["choices"]) {
      if (!choice.contains("message")) continue;
      const json& msg = choice["message"];
      if (!msg.contains("content")) continue;
      const json& content = msg["content"];
      if (content.is_string()) {
        out.push_back(content.get<std::string>());
      } else if (content.is_array()) {
        std::string text;
        for (const auto& part : content) {
          if (part.is_object() && part.value("type", "") == "text") {
            text += part.value("text", "");
          }
        }
        out.push_back(text);
      }
    }
    return out;
  }

  BackendSettings settings_;
  PromptLibrary prompts_;
  ExtractionProfile extraction_;
  std::string base_;
  std::string path_;
  std::string api_key_;
  std::counting_semaphore<> slots_;
};

}  // namespace cotkit
