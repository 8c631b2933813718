#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cotkit/answer.hpp"
#include "cotkit/backend.hpp"
#include "cotkit/errors.hpp"
#include "cotkit/simulated_backend.hpp"

namespace cotkit {

struct BackendSettings {
  std::string kind = "simulated";  // simulated | remote
  std::string endpoint;            // e.g. http://host:port/v1/chat/completions
  std::string model;
  std::string api_key_env = "COTKIT_API_KEY";  // env var holding the key
  int concurrency = 8;                         // max in-flight remote requests
  int retries = 5;
  int backoff_ms = 250;
  int timeout_s = 60;
};

struct RunConfig {
  BackendSettings backend;
  SimulatedBackend::Options sim;
  SamplingProfile pair_gen{1.0, 0.95, 16};
  SamplingProfile locate{0.3, 0.95, 16};
  std::uint64_t seed = 0;
  std::string templates_dir = "templates";
  std::vector<std::string> extraction_patterns;
  std::vector<std::string> refusal_phrases{"cannot determine", "need more", "refuse"};

  void validate() const {
    if (backend.concurrency < 1) throw ConfigError("backend.concurrency must be >= 1");
    if (backend.retries < 0) throw ConfigError("backend.retries must be >= 0");
    if (backend.kind != "simulated" && backend.kind != "remote") {
      throw ConfigError("backend.kind must be 'simulated' or 'remote'");
    }
    for (const SamplingProfile* p : {&pair_gen, &locate}) {
      if (p->n_return_sequences < 1) throw ConfigError("profile n_return_sequences must be >= 1");
      if (p->temperature < 0) throw ConfigError("profile temperature must be >= 0");
      if (!(p->top_p > 0 && p->top_p <= 1)) throw ConfigError("profile top_p must be in (0,1]");
    }
    if (sim.min_steps < 1 || sim.max_steps < sim.min_steps) {
      throw ConfigError("sim.min_steps/max_steps invalid");
    }
  }
};

namespace cfg_detail {

inline std::string trim(const std::string& s) { return rec_detail::trim(s); }

inline std::string unquote(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

// key=value lines with optional [section] headers; '#' starts a comment.
inline std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::string prefix;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      prefix = trim(t.substr(1, t.size() - 2));
      if (!prefix.empty()) prefix += ".";
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = t.substr(eq + 1);
    // strip trailing comment outside quotes
    bool quoted = false;
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (value[i] == '"') quoted = !quoted;
      if (value[i] == '#' && !quoted) {
        value = value.substr(0, i);
        break;
      }
    }
    kv[prefix + key] = unquote(trim(value));
  }
  return kv;
}

inline double to_double(const std::string& key, const std::string& v) {
  auto d = ans_detail::parse_double(v);
  if (!d) throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
  return *d;
}

inline long long to_int(const std::string& key, const std::string& v) {
  auto d = ans_detail::parse_int(v);
  if (!d) throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
  return *d;
}

inline void assign(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "backend.kind") {
    cfg.backend.kind = value;
  } else if (key == "backend.endpoint") {
    cfg.backend.endpoint = value;
  } else if (key == "backend.model") {
    cfg.backend.model = value;
  } else if (key == "backend.api_key_env") {
    cfg.backend.api_key_env = value;
  } else if (key == "backend.concurrency") {
    cfg.backend.concurrency = static_cast<int>(to_int(key, value));
  } else if (key == "backend.retries") {
    cfg.backend.retries = static_cast<int>(to_int(key, value));
  } else if (key == "backend.backoff_ms") {
    cfg.backend.backoff_ms = static_cast<int>(to_int(key, value));
  } else if (key == "backend.timeout_s") {
    cfg.backend.timeout_s = static_cast<int>(to_int(key, value));
  } else if (key == "sim.p_correct") {
    cfg.sim.p_correct = to_double(key, value);
  } else if (key == "sim.rollout_noise") {
    cfg.sim.rollout_noise = to_double(key, value);
  } else if (key == "sim.scorer_noise") {
    cfg.sim.scorer_noise = to_double(key, value);
  } else if (key == "sim.refusal_rate") {
    cfg.sim.refusal_rate = to_double(key, value);
  } else if (key == "sim.malformed_rate") {
    cfg.sim.malformed_rate = to_double(key, value);
  } else if (key == "sim.accidental_correct_rate") {
    cfg.sim.accidental_correct_rate = to_double(key, value);
  } else if (key == "sim.min_steps") {
    cfg.sim.min_steps = static_cast<int>(to_int(key, value));
  } else if (key == "sim.max_steps") {
    cfg.sim.max_steps = static_cast<int>(to_int(key, value));
  } else if (key == "profiles.pair_gen.temperature") {
    cfg.pair_gen.temperature = to_double(key, value);
  } else if (key == "profiles.pair_gen.top_p") {
    cfg.pair_gen.top_p = to_double(key, value);
  } else if (key == "profiles.pair_gen.n_return_sequences") {
    cfg.pair_gen.n_return_sequences = static_cast<int>(to_int(key, value));
  } else if (key == "profiles.locate.temperature") {
    cfg.locate.temperature = to_double(key, value);
  } else if (key == "profiles.locate.top_p") {
    cfg.locate.top_p = to_double(key, value);
  } else if (key == "profiles.locate.n_return_sequences") {
    cfg.locate.n_return_sequences = static_cast<int>(to_int(key, value));
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(to_int(key, value));
  } else if (key == "templates_dir") {
    cfg.templates_dir = value;
  } else if (key == "extraction.patterns") {
    cfg.extraction_patterns.clear();
    std::istringstream parts(value);
    std::string p;
    while (std::getline(parts, p, ';')) {
      p = trim(p);
      if (!p.empty()) cfg.extraction_patterns.push_back(p);
    }
  } else if (key == "synthesis.refusal_phrases") {
    cfg.refusal_phrases.clear();
    std::istringstream parts(value);
    std::string p;
    while (std::getline(parts, p, ';')) {
      p = trim(p);
      if (!p.empty()) cfg.refusal_phrases.push_back(p);
    }
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

inline std::string env_name_for(const std::string& key) {
  std::string out = "COTKIT_";
  for (char c : key) {
    if (c == '.') {
      out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

inline const char* const kKnownKeys[] = {
    "backend.kind", "backend.endpoint", "backend.model", "backend.api_key_env",
    "backend.concurrency", "backend.retries", "backend.backoff_ms", "backend.timeout_s",
    "sim.p_correct", "sim.rollout_noise", "sim.scorer_noise", "sim.refusal_rate",
    "sim.malformed_rate", "sim.accidental_correct_rate", "sim.min_steps", "sim.max_steps",
    "profiles.pair_gen.temperature", "profiles.pair_gen.top_p",
    "profiles.pair_gen.n_return_sequences", "profiles.locate.temperature",
    "profiles.locate.top_p", "profiles.locate.n_return_sequences", "seed", "templates_dir",
    "extraction.patterns", "synthesis.refusal_phrases"};

}  // namespace cfg_detail

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  for (const auto& [key, value] : cfg_detail::parse_kv(text)) {
    cfg_detail::assign(cfg, key, value);
  }
  return cfg;
}

// Environment variables COTKIT_<KEY> (dots become underscores) override file
// values, e.g. COTKIT_BACKEND_ENDPOINT.
inline void apply_env_overrides(RunConfig& cfg) {
  for (const char* key : cfg_detail::kKnownKeys) {
    if (const char* v = std::getenv(cfg_detail::env_name_for(key).c_str())) {
      cfg_detail::assign(cfg, key, v);
    }
  }
}

inline RunConfig load_config(const std::filesystem::path& path, bool env_overrides = true) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_config_text(ss.str());
  if (env_overrides) apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

// Config echo for run logs and manifests. Key material never enters the
// config (only the env var *name*), so nothing here needs redaction.
inline json config_echo(const RunConfig& cfg) {
  json j;
  j["backend"] = {{"kind", cfg.backend.kind},
                  {"endpoint", cfg.backend.endpoint},
                  {"model", cfg.backend.model},
                  {"api_key_env", cfg.backend.api_key_env},
                  {"concurrency", cfg.backend.concurrency},
                  {"retries", cfg.backend.retries},
                  {"backoff_ms", cfg.backend.backoff_ms},
                  {"timeout_s", cfg.backend.timeout_s}};
  j["sim"] = {{"p_correct", cfg.sim.p_correct},
              {"rollout_noise", cfg.sim.rollout_noise},
              {"scorer_noise", cfg.sim.scorer_noise},
              {"refusal_rate", cfg.sim.refusal_rate},
              {"malformed_rate", cfg.sim.malformed_rate},
              {"accidental_correct_rate", cfg.sim.accidental_correct_rate},
              {"min_steps", cfg.sim.min_steps},
              {"max_steps", cfg.sim.max_steps}};
  j["profiles"] = {{"pair_gen",
                    {{"temperature", cfg.pair_gen.temperature},
                     {"top_p", cfg.pair_gen.top_p},
                     {"n_return_sequences", cfg.pair_gen.n_return_sequences}}},
                   {"locate",
                    {{"temperature", cfg.locate.temperature},
                     {"top_p", cfg.locate.top_p},
                     {"n_return_sequences", cfg.locate.n_return_sequences}}}};
  j["seed"] = cfg.seed;
  j["templates_dir"] = cfg.templates_dir;
  j["extraction_patterns"] = cfg.extraction_patterns;
  j["refusal_phrases"] = cfg.refusal_phrases;
  return j;
}

}  // namespace cotkit
