#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "cotkit/errors.hpp"
#include "cotkit/records.hpp"
#include "cotkit/version.hpp"

namespace cotkit {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr);
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const char* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  void update(const std::string& s) { update(s.data(), s.size()); }

  std::string hex_digest() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, digest, &len);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(hex[digest[i] >> 4]);
      out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline std::string sha256_hex_of_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex_digest();
}

// ---------------------------------------------------------------------------
// Record traits: JSONL kind names and parsers.

template <class T>
struct RecordTraits;

template <>
struct RecordTraits<ProblemRecord> {
  static constexpr const char* kind = "problem";
  static ProblemRecord parse(const json& j) { return parse_problem(j); }
  static std::optional<std::string> unique_key(const ProblemRecord& r) { return r.id; }
};
template <>
struct RecordTraits<TrajectoryRecord> {
  static constexpr const char* kind = "trajectory";
  static TrajectoryRecord parse(const json& j) { return parse_trajectory(j); }
  static std::optional<std::string> unique_key(const TrajectoryRecord&) { return std::nullopt; }
};
template <>
struct RecordTraits<StepLabelRecord> {
  static constexpr const char* kind = "step_label";
  static StepLabelRecord parse(const json& j) { return parse_step_label(j); }
  static std::optional<std::string> unique_key(const StepLabelRecord&) { return std::nullopt; }
};
template <>
struct RecordTraits<ScoredTrajectory> {
  static constexpr const char* kind = "scored_trajectory";
  static ScoredTrajectory parse(const json& j) { return parse_scored(j); }
  static std::optional<std::string> unique_key(const ScoredTrajectory&) { return std::nullopt; }
};
template <>
struct RecordTraits<SamplePool> {
  static constexpr const char* kind = "sample_pool";
  static SamplePool parse(const json& j) { return parse_sample_pool(j); }
  static std::optional<std::string> unique_key(const SamplePool&) { return std::nullopt; }
};
template <>
struct RecordTraits<PairPool> {
  static constexpr const char* kind = "pair_pool";
  static PairPool parse(const json& j) { return parse_pair_pool(j); }
  static std::optional<std::string> unique_key(const PairPool&) { return std::nullopt; }
};
template <>
struct RecordTraits<EvalReport> {
  static constexpr const char* kind = "eval_report";
  static EvalReport parse(const json& j) { return parse_eval_report(j); }
  static std::optional<std::string> unique_key(const EvalReport&) { return std::nullopt; }
};

// ---------------------------------------------------------------------------
// DatasetManifest, written as a sibling <file>.manifest.json.

struct DatasetManifest {
  std::string path;  // dataset file name (no directory, keeps runs relocatable)
  std::string record_kind;
  std::uint64_t count = 0;
  int schema_version = kSchemaVersion;
  std::string checksum;  // SHA-256 of the file bytes as written
  std::string created_with_tool = std::string(kToolName) + " " + std::string(kToolVersion);
  std::uint64_t created_with_seed = 0;
  bool complete = true;
  json extra = json::object();
};

inline json to_json_value(const DatasetManifest& m) {
  json j = m.extra.is_object() ? m.extra : json::object();
  j["path"] = m.path;
  j["record_kind"] = m.record_kind;
  j["count"] = m.count;
  j["schema_version"] = m.schema_version;
  j["checksum"] = m.checksum;
  j["created_with"] = json{{"tool", m.created_with_tool}, {"seed", m.created_with_seed}};
  j["complete"] = m.complete;
  return j;
}

inline DatasetManifest parse_manifest(const json& j) {
  using namespace rec_detail;
  DatasetManifest m;
  m.path = req_string(j, "path");
  m.record_kind = req_string(j, "record_kind");
  m.count = static_cast<std::uint64_t>(req_int(j, "count"));
  m.schema_version = static_cast<int>(req_int(j, "schema_version"));
  m.checksum = req_string(j, "checksum");
  const json& cw = require(j, "created_with");
  m.created_with_tool = req_string(cw, "tool");
  m.created_with_seed = static_cast<std::uint64_t>(req_int(cw, "seed"));
  if (auto it = j.find("complete"); it != j.end() && it->is_boolean()) {
    m.complete = it->get<bool>();
  }
  m.extra = collect_extra(j, {"path", "record_kind", "count", "schema_version", "checksum",
                              "created_with", "complete"});
  return m;
}

inline std::filesystem::path manifest_path_for(const std::filesystem::path& dataset) {
  std::filesystem::path p = dataset;
  p += ".manifest.json";
  return p;
}

inline std::optional<DatasetManifest> load_manifest(const std::filesystem::path& dataset) {
  auto mp = manifest_path_for(dataset);
  if (!std::filesystem::exists(mp)) return std::nullopt;
  std::ifstream in(mp);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(json::parse(ss.str()));
}

// Throws ChecksumMismatchError when the manifest checksum or count disagrees
// with the file on disk.
inline void verify_manifest(const std::filesystem::path& dataset) {
  auto manifest = load_manifest(dataset);
  if (!manifest) return;
  std::ifstream in(dataset, std::ios::binary);
  if (!in) throw Error("cannot open file: " + dataset.string());
  Sha256 h;
  std::uint64_t lines = 0;
  std::size_t cur_len = 0;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    std::size_t n = static_cast<std::size_t>(in.gcount());
    h.update(buf, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (buf[i] == '\n') {
        if (cur_len > 0) ++lines;
        cur_len = 0;
      } else {
        ++cur_len;
      }
    }
  }
  if (cur_len > 0) ++lines;
  std::string actual = h.hex_digest();
  if (actual != manifest->checksum) {
    throw ChecksumMismatchError("checksum mismatch for " + dataset.string() + ": manifest " +
                                manifest->checksum + ", actual " + actual);
  }
  if (lines != manifest->count) {
    throw ChecksumMismatchError("count mismatch for " + dataset.string() + ": manifest " +
                                std::to_string(manifest->count) + ", actual " +
                                std::to_string(lines));
  }
}

// ---------------------------------------------------------------------------
// Streaming JSONL writer. Lines are canonical (sorted keys) so checksums are
// reproducible. One writer per output file.

template <class T>
class JsonlWriter {
 public:
  explicit JsonlWriter(std::filesystem::path path, std::uint64_t seed = 0)
      : path_(std::move(path)), seed_(seed) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    out_.open(path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot open for writing: " + path_.string());
  }

  ~JsonlWriter() {
    if (!finalized_ && out_.is_open()) {
      // Interrupted run: flush what we have and mark the manifest incomplete.
      write_manifest(false);
    }
  }

  JsonlWriter(const JsonlWriter&) = delete;
  JsonlWriter& operator=(const JsonlWriter&) = delete;

  void write(const T& record) {
    std::string line = canonical_line(record);
    line.push_back('\n');
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    hash_.update(line);
    ++count_;
  }

  std::uint64_t count() const { return count_; }

  DatasetManifest finalize() { return write_manifest(true); }

 private:
  DatasetManifest write_manifest(bool complete) {
    out_.flush();
    out_.close();
    DatasetManifest m;
    m.path = path_.filename().string();
    m.record_kind = RecordTraits<T>::kind;
    m.count = count_;
    m.checksum = hash_.hex_digest();
    m.created_with_seed = seed_;
    m.complete = complete;
    std::ofstream mout(manifest_path_for(path_), std::ios::binary | std::ios::trunc);
    mout << to_json_value(m).dump(2) << "\n";
    finalized_ = true;
    return m;
  }

  std::filesystem::path path_;
  std::uint64_t seed_;
  std::ofstream out_;
  Sha256 hash_;
  std::uint64_t count_ = 0;
  bool finalized_ = false;
};

// ---------------------------------------------------------------------------
// Streaming JSONL reader with schema validation and line-numbered errors.

template <class T>
class JsonlReader {
 public:
  explicit JsonlReader(std::filesystem::path path, bool check_manifest = false)
      : path_(std::move(path)) {
    if (check_manifest) verify_manifest(path_);
    manifest_ = load_manifest(path_);
    if (manifest_ && manifest_->record_kind != RecordTraits<T>::kind) {
      throw Error("dataset " + path_.string() + " holds '" + manifest_->record_kind +
                  "' records, expected '" + RecordTraits<T>::kind + "'");
    }
    in_.open(path_, std::ios::binary);
    if (!in_) throw Error("cannot open file: " + path_.string());
  }

  std::optional<T> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        throw SchemaViolationError(line_, "", "invalid JSON");
      }
      T record;
      try {
        record = RecordTraits<T>::parse(j);
      } catch (const FieldViolation& e) {
        throw SchemaViolationError(line_, e.field(), e.what());
      }
      if (auto key = RecordTraits<T>::unique_key(record)) {
        if (!seen_keys_.insert(*key).second) {
          throw SchemaViolationError(line_, "id", "duplicate id '" + *key + "'");
        }
      }
      ++count_;
      return record;
    }
    return std::nullopt;
  }

  std::size_t count() const { return count_; }
  std::size_t line() const { return line_; }
  const std::optional<DatasetManifest>& manifest() const { return manifest_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::optional<DatasetManifest> manifest_;
  std::size_t line_ = 0;
  std::size_t count_ = 0;
  std::set<std::string> seen_keys_;
};

template <class T>
std::vector<T> read_all(const std::filesystem::path& path, bool check_manifest = false) {
  JsonlReader<T> reader(path, check_manifest);
  std::vector<T> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

template <class T>
DatasetManifest write_all(const std::filesystem::path& path, const std::vector<T>& records,
                          std::uint64_t seed = 0) {
  JsonlWriter<T> writer(path, seed);
  for (const auto& r : records) writer.write(r);
  return writer.finalize();
}

// ---------------------------------------------------------------------------
// Corpus statistics.

struct DatasetStats {
  std::string detected_kind = "empty";
  std::size_t record_count = 0;
  std::map<std::string, std::size_t> by_source_kind;
  std::map<std::string, std::size_t> by_provenance;
  std::map<std::string, std::size_t> by_origin;
  std::map<std::size_t, std::size_t> step_length_histogram;
  std::size_t label_positive = 0;
  std::size_t label_negative = 0;

  json to_json() const {
    json j;
    j["detected_kind"] = detected_kind;
    j["record_count"] = record_count;
    j["by_source_kind"] = by_source_kind;
    j["by_provenance"] = by_provenance;
    j["by_origin"] = by_origin;
    json hist = json::object();
    for (const auto& [len, n] : step_length_histogram) hist[std::to_string(len)] = n;
    j["step_length_histogram"] = hist;
    j["label_balance"] = json{{"positive", label_positive}, {"negative", label_negative}};
    return j;
  }
};

namespace io_detail {

inline std::string sniff_kind(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw SchemaViolationError(1, "", "invalid JSON");
    }
    if (j.contains("source_kind")) return RecordTraits<ProblemRecord>::kind;
    if (j.contains("provenance")) return RecordTraits<StepLabelRecord>::kind;
    if (j.contains("samples")) return RecordTraits<SamplePool>::kind;
    if (j.contains("positives")) return RecordTraits<PairPool>::kind;
    if (j.contains("step_scores")) return RecordTraits<ScoredTrajectory>::kind;
    if (j.contains("rows")) return RecordTraits<EvalReport>::kind;
    if (j.contains("steps")) return RecordTraits<TrajectoryRecord>::kind;
    throw SchemaViolationError(1, "", "unrecognized record shape");
  }
  return "empty";
}

}  // namespace io_detail

inline DatasetStats compute_stats(const std::filesystem::path& path) {
  DatasetStats stats;
  stats.detected_kind = io_detail::sniff_kind(path);
  if (stats.detected_kind == "empty") return stats;

  auto tally_trajectory = [&stats](const TrajectoryRecord& t) {
    stats.step_length_histogram[t.steps.size()] += 1;
    stats.by_origin[enum_name(t.origin)] += 1;
  };

  if (stats.detected_kind == RecordTraits<ProblemRecord>::kind) {
    JsonlReader<ProblemRecord> r(path);
    while (auto rec = r.next()) {
      ++stats.record_count;
      stats.by_source_kind[enum_name(rec->source_kind)] += 1;
    }
  } else if (stats.detected_kind == RecordTraits<StepLabelRecord>::kind) {
    JsonlReader<StepLabelRecord> r(path);
    while (auto rec = r.next()) {
      ++stats.record_count;
      stats.by_provenance[enum_name(rec->provenance)] += 1;
      tally_trajectory(rec->trajectory);
      for (int v : rec->labels) {
        if (v == 1) {
          ++stats.label_positive;
        } else {
          ++stats.label_negative;
        }
      }
    }
  } else if (stats.detected_kind == RecordTraits<TrajectoryRecord>::kind) {
    JsonlReader<TrajectoryRecord> r(path);
    while (auto rec = r.next()) {
      ++stats.record_count;
      tally_trajectory(*rec);
    }
  } else if (stats.detected_kind == RecordTraits<SamplePool>::kind) {
    JsonlReader<SamplePool> r(path);
    while (auto rec = r.next()) {
      ++stats.record_count;
      for (const auto& s : rec->samples) tally_trajectory(s);
    }
  } else if (stats.detected_kind == RecordTraits<PairPool>::kind) {
    JsonlReader<PairPool> r(path);
    while (auto rec = r.next()) {
      ++stats.record_count;
      for (const auto& s : rec->positives) tally_trajectory(s);
      for (const auto& s : rec->negatives) tally_trajectory(s);
    }
  } else if (stats.detected_kind == RecordTraits<ScoredTrajectory>::kind) {
    JsonlReader<ScoredTrajectory> r(path);
    while (auto rec = r.next()) {
      ++stats.record_count;
      tally_trajectory(rec->trajectory);
    }
  } else if (stats.detected_kind == RecordTraits<EvalReport>::kind) {
    JsonlReader<EvalReport> r(path);
    while (auto rec = r.next()) ++stats.record_count;
  }
  return stats;
}

}  // namespace cotkit
