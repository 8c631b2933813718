// Single entry point exposing the pipelines as subcommands. Exit codes:
// 0 success, 1 validation/usage error, 2 backend failure after retries.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cotkit/config.hpp"
#include "cotkit/dataset_io.hpp"
#include "cotkit/error_locating.hpp"
#include "cotkit/misread.hpp"
#include "cotkit/parallel.hpp"
#include "cotkit/prompts.hpp"
#include "cotkit/remote_backend.hpp"
#include "cotkit/scaling_eval.hpp"
#include "cotkit/simulated_backend.hpp"
#include "cotkit/synthesis.hpp"
#include "cotkit/version.hpp"

namespace {

using namespace cotkit;

volatile std::sig_atomic_t g_interrupted = 0;

void handle_sigint(int) { g_interrupted = 1; }

class Interrupted : public Error {
 public:
  Interrupted() : Error("interrupted") {}
};

void check_interrupt() {
  if (g_interrupted) throw Interrupted();
}

// Machine-readable run log written next to the main output. Contains no
// wall-clock fields so identical runs stay byte-identical.
struct RunLog {
  json j = json::object();
  std::filesystem::path path;

  RunLog(const std::string& subcommand, const std::filesystem::path& out,
         const RunConfig& cfg, std::uint64_t seed) {
    path = out;
    path += ".run.json";
    j["tool"] = std::string(kToolName) + " " + std::string(kToolVersion);
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["config"] = config_echo(cfg);
    j["status"] = "incomplete";
  }

  void finish(const std::string& status) {
    j["status"] = status;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << j.dump(2) << "\n";
  }
};

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string format = "table";
  std::string templates_dir;
};

void add_common(CLI::App* sub, CommonArgs& args, bool needs_backend = true) {
  auto* opt = sub->add_option("--backend,--config,-b", args.config_path,
                              "run configuration file (key = value)");
  if (needs_backend) opt->required();
  sub->add_option("--seed", args.seed, "seed override");
  sub->add_option("--format", args.format, "report format: json|table")
      ->check(CLI::IsMember({"json", "table"}));
  sub->add_option("--templates", args.templates_dir, "prompt template directory override");
}

RunConfig load_run_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (!args.templates_dir.empty()) cfg.templates_dir = args.templates_dir;
  cfg.validate();
  return cfg;
}

std::unique_ptr<Backend> make_backend(const RunConfig& cfg) {
  if (cfg.backend.kind == "simulated") {
    SimulatedBackend::Options opts = cfg.sim;
    opts.seed = cfg.seed;
    return std::make_unique<SimulatedBackend>(opts);
  }
  // Prompt templates are only needed for template-driven calls; generation
  // prompts are built in. A missing directory surfaces at call time.
  PromptLibrary lib;
  if (std::filesystem::is_directory(cfg.templates_dir)) {
    lib = PromptLibrary::load_directory(cfg.templates_dir);
  }
  ExtractionProfile extraction{cfg.extraction_patterns};
  return std::make_unique<RemoteBackend>(cfg.backend, std::move(lib), std::move(extraction));
}

ExtractionProfile extraction_profile(const RunConfig& cfg) {
  return ExtractionProfile{cfg.extraction_patterns};
}

std::map<std::string, ProblemRecord> problems_by_id(const std::filesystem::path& path) {
  std::map<std::string, ProblemRecord> out;
  for (auto& p : read_all<ProblemRecord>(path)) out.emplace(p.id, std::move(p));
  return out;
}

// Problem context reconstructed from fields `pairs` stashes on each pool.
ProblemRecord context_from_pair_pool(const PairPool& pool) {
  ProblemRecord r;
  r.id = pool.problem_id;
  r.source_kind = SourceKind::AnswerOnly;
  if (pool.extra.is_object()) {
    if (pool.extra.contains("gold")) r.gold_answer = parse_answer_value(pool.extra["gold"]);
    r.question = pool.extra.value("question", "");
    if (pool.extra.contains("image_facts") && pool.extra["image_facts"].is_object()) {
      for (auto it = pool.extra["image_facts"].begin(); it != pool.extra["image_facts"].end();
           ++it) {
        if (it.value().is_string()) r.image_facts[it.key()] = it.value().get<std::string>();
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

int cmd_synthesize(const CommonArgs& common, const std::string& route,
                   const std::vector<std::string>& inputs, const std::string& out_path) {
  RunConfig cfg = load_run_config(common);
  RunLog log("synthesize", out_path, cfg, cfg.seed);

  if (route == "union") {
    // Union of filtered pools: concatenate, dedup, shuffle under the seed.
    std::vector<TrajectoryRecord> pools[3];
    for (std::size_t i = 0; i < inputs.size() && i < 3; ++i) {
      pools[i] = read_all<TrajectoryRecord>(inputs[i]);
    }
    SftDataset sft = build_sft_dataset(pools[0], pools[1], pools[2], cfg.seed);
    JsonlWriter<TrajectoryRecord> writer(out_path, cfg.seed);
    for (const auto& r : sft.records) writer.write(r);
    writer.finalize();
    log.j["counts"] = {{"records", sft.records.size()},
                       {"duplicates_removed", sft.duplicates_removed},
                       {"per_source", sft.per_source_counts}};
    log.finish("ok");
    std::cout << "wrote " << sft.records.size() << " records ("
              << sft.duplicates_removed << " duplicates removed)\n";
    return 0;
  }

  if (inputs.size() != 1) {
    throw ConfigError("route '" + route + "' takes exactly one --in file");
  }
  SourceKind wanted = route == "distill"   ? SourceKind::AnswerOnly
                      : route == "rewrite" ? SourceKind::AnalysisFormatted
                                           : SourceKind::CoTFormatted;
  auto problems = read_all<ProblemRecord>(inputs[0]);
  SynthesisOptions opts;
  opts.seed = cfg.seed;
  opts.extraction = extraction_profile(cfg);
  opts.refusal_phrases = cfg.refusal_phrases;
  auto backend = make_backend(cfg);

  JsonlWriter<TrajectoryRecord> writer(out_path, cfg.seed);
  std::size_t kept = 0, skipped_kind = 0, empty_yield = 0;
  int refused = 0, wrong = 0, malformed = 0;
  for (const auto& record : problems) {
    check_interrupt();
    if (record.source_kind != wanted) {
      ++skipped_kind;
      continue;
    }
    try {
      RouteResult r = route == "distill"   ? distill(record, *backend, opts)
                      : route == "rewrite" ? rewrite(record, *backend, opts)
                                           : unify_format(record, *backend, opts);
      refused += r.refused;
      wrong += r.wrong_answer;
      malformed += r.malformed;
      for (const auto& t : r.kept) {
        writer.write(t);
        ++kept;
      }
    } catch (const EmptyYieldError&) {
      ++empty_yield;
    }
  }
  writer.finalize();
  log.j["counts"] = {{"kept", kept},         {"skipped_other_kind", skipped_kind},
                     {"empty_yield", empty_yield}, {"refused", refused},
                     {"wrong_answer", wrong},  {"malformed", malformed}};
  log.finish("ok");
  std::cout << "kept " << kept << " trajectories (refused " << refused << ", wrong answer "
            << wrong << ", malformed " << malformed << ")\n";
  return 0;
}

int cmd_filter(const CommonArgs& common, const std::string& in_path,
               const std::string& problems_path, const std::string& out_path) {
  RunConfig cfg = load_run_config(common);
  RunLog log("filter", out_path, cfg, cfg.seed);
  auto problems = problems_by_id(problems_path);
  auto trajectories = read_all<TrajectoryRecord>(in_path);
  auto backend = make_backend(cfg);
  SynthesisOptions opts;
  opts.seed = cfg.seed;
  opts.extraction = extraction_profile(cfg);
  opts.refusal_phrases = cfg.refusal_phrases;

  // Group by problem, preserving input order inside each group.
  std::map<std::string, std::vector<TrajectoryRecord>> grouped;
  std::vector<std::string> order;
  for (auto& t : trajectories) {
    if (!grouped.count(t.problem_id)) order.push_back(t.problem_id);
    grouped[t.problem_id].push_back(std::move(t));
  }

  JsonlWriter<TrajectoryRecord> writer(out_path, cfg.seed);
  std::size_t kept = 0, missing_problem = 0;
  int wrong = 0, verdict = 0, malformed = 0;
  for (const auto& id : order) {
    check_interrupt();
    auto pit = problems.find(id);
    if (pit == problems.end()) {
      missing_problem += grouped[id].size();
      continue;
    }
    FilterResult r = quality_filter(grouped[id], pit->second, *backend, opts);
    wrong += r.dropped_wrong_answer;
    verdict += r.dropped_verdict;
    malformed += r.malformed_verdicts;
    for (const auto& t : r.kept) {
      writer.write(t);
      ++kept;
    }
  }
  writer.finalize();
  log.j["counts"] = {{"kept", kept},
                     {"dropped_wrong_answer", wrong},
                     {"dropped_verdict", verdict},
                     {"malformed_verdicts", malformed},
                     {"missing_problem", missing_problem}};
  log.finish("ok");
  std::cout << "kept " << kept << " trajectories\n";
  return 0;
}

int cmd_pairs(const CommonArgs& common, const std::string& problems_path,
              const std::string& out_path, const std::string& pools_out,
              const std::string& positives_out) {
  RunConfig cfg = load_run_config(common);
  RunLog log("pairs", out_path, cfg, cfg.seed);
  auto problems = read_all<ProblemRecord>(problems_path);
  auto backend = make_backend(cfg);

  JsonlWriter<PairPool> writer(out_path, cfg.seed);
  std::unique_ptr<JsonlWriter<SamplePool>> pool_writer;
  if (!pools_out.empty()) {
    pool_writer = std::make_unique<JsonlWriter<SamplePool>>(pools_out, cfg.seed);
  }
  std::unique_ptr<JsonlWriter<TrajectoryRecord>> positive_writer;
  if (!positives_out.empty()) {
    positive_writer = std::make_unique<JsonlWriter<TrajectoryRecord>>(positives_out, cfg.seed);
  }

  std::size_t n_pos = 0, n_neg = 0, empty_pools = 0;
  int malformed = 0;
  auto results = parallel_map(problems, cfg.backend.concurrency,
                              [&](const ProblemRecord& record)
                                  -> std::optional<std::pair<PairGenResult, SamplePool>> {
                                check_interrupt();
                                try {
                                  PairGenResult r =
                                      generate_pairs(record, *backend, cfg.pair_gen, cfg.seed);
                                  SamplePool pool;
                                  pool.problem_id = record.id;
                                  pool.gold = record.gold_answer;
                                  pool.samples = r.sampled;
                                  return std::make_pair(std::move(r), std::move(pool));
                                } catch (const EmptyPoolError&) {
                                  return std::nullopt;
                                }
                              });
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i]) {
      ++empty_pools;
      continue;
    }
    auto& [r, pool] = *results[i];
    // Stash the problem context so downstream stages can run from this file
    // alone (the documented locate-errors interface takes only --pairs).
    r.pool.extra["gold"] = to_json_value(problems[i].gold_answer);
    r.pool.extra["question"] = problems[i].question;
    if (!problems[i].image_facts.empty()) r.pool.extra["image_facts"] = problems[i].image_facts;
    malformed += r.malformed;
    n_pos += r.pool.positives.size();
    n_neg += r.pool.negatives.size();
    if (positive_writer) {
      for (const auto& t : r.pool.positives) positive_writer->write(t);
    }
    writer.write(r.pool);
    if (pool_writer) pool_writer->write(pool);
  }
  writer.finalize();
  if (pool_writer) pool_writer->finalize();
  if (positive_writer) positive_writer->finalize();
  log.j["counts"] = {{"problems", problems.size()},
                     {"positives", n_pos},
                     {"negatives", n_neg},
                     {"malformed", malformed},
                     {"empty_pools", empty_pools}};
  log.finish("ok");
  std::cout << "pools: " << results.size() - empty_pools << " (" << n_pos << " positives, "
            << n_neg << " negatives)\n";
  return 0;
}

int cmd_locate(const CommonArgs& common, const std::string& pairs_path, int n_mid,
               const std::string& problems_path, const std::string& out_path) {
  RunConfig cfg = load_run_config(common);
  RunLog log("locate-errors", out_path, cfg, cfg.seed);
  auto pools = read_all<PairPool>(pairs_path);
  std::map<std::string, ProblemRecord> problems;
  if (!problems_path.empty()) {
    problems = problems_by_id(problems_path);
  } else {
    for (const auto& pool : pools) {
      if (!pool.extra.is_object() || !pool.extra.contains("gold")) {
        throw ConfigError("pair pool '" + pool.problem_id +
                          "' carries no gold answer; pass --problems");
      }
      problems.emplace(pool.problem_id, context_from_pair_pool(pool));
    }
  }
  auto backend = make_backend(cfg);
  LocateOptions opts;
  opts.n_mid = n_mid;
  opts.profile = cfg.locate;
  opts.seed = cfg.seed;

  BelBuildResult result = build_bel_dataset(pools, problems, *backend, opts);
  JsonlWriter<StepLabelRecord> writer(out_path, cfg.seed);
  for (const auto& r : result.records) writer.write(r);
  writer.finalize();
  log.j["counts"] = {{"records", result.records.size()},
                     {"positives", result.positives},
                     {"negatives", result.negatives},
                     {"skipped", result.skipped}};
  log.j["probe_stats"] = {{"total", result.probes_total},
                          {"max_per_trajectory", result.probes_max},
                          {"repair_events", result.repair_events},
                          {"rollouts", result.rollouts}};
  log.finish("ok");
  std::cout << "labeled " << result.records.size() << " trajectories ("
            << result.negatives << " located, probes max " << result.probes_max << ")\n";
  return 0;
}

int cmd_inject(const CommonArgs& common, const std::string& problems_path,
               const std::string& positives_path, const std::string& out_path) {
  RunConfig cfg = load_run_config(common);
  RunLog log("inject-misread", out_path, cfg, cfg.seed);
  auto problems = read_all<ProblemRecord>(problems_path);
  auto backend = make_backend(cfg);

  // Positives may arrive as a trajectory file or as pair pools.
  std::map<std::string, std::vector<TrajectoryRecord>> positives;
  if (io_detail::sniff_kind(positives_path) == RecordTraits<PairPool>::kind) {
    for (auto& pool : read_all<PairPool>(positives_path)) {
      auto& v = positives[pool.problem_id];
      for (auto& t : pool.positives) v.push_back(std::move(t));
    }
  } else {
    for (auto& t : read_all<TrajectoryRecord>(positives_path)) {
      if (t.correct && *t.correct) positives[t.problem_id].push_back(std::move(t));
    }
  }

  MisreadOptions opts;
  opts.seed = cfg.seed;
  MieBuildResult result = build_mie_dataset(problems, positives, *backend, opts);
  JsonlWriter<StepLabelRecord> writer(out_path, cfg.seed);
  for (const auto& r : result.records) writer.write(r);
  writer.finalize();
  log.j["counts"] = {{"emitted", result.emitted},
                     {"accidental_correct", result.accidental_correct},
                     {"no_visual", result.no_visual},
                     {"no_candidates", result.no_candidates},
                     {"skipped", result.skipped}};
  log.finish("ok");
  std::cout << "emitted " << result.emitted << " misread records ("
            << result.accidental_correct << " accidentally correct discarded)\n";
  return 0;
}

int cmd_build_prm(const CommonArgs& common, const std::string& bel_path,
                  const std::string& mie_path, const std::string& out_path) {
  RunConfig cfg = load_run_config(common);
  RunLog log("build-prm-data", out_path, cfg, cfg.seed);
  std::vector<StepLabelRecord> records = read_all<StepLabelRecord>(bel_path);
  if (!mie_path.empty()) {
    for (auto& r : read_all<StepLabelRecord>(mie_path)) records.push_back(std::move(r));
  }
  std::set<std::string> seen;
  std::map<std::string, std::size_t> by_provenance;
  std::size_t duplicates = 0;
  JsonlWriter<StepLabelRecord> writer(out_path, cfg.seed);
  for (const auto& r : records) {
    std::string line = canonical_line(r);
    if (!seen.insert(line).second) {
      ++duplicates;
      continue;
    }
    by_provenance[enum_name(r.provenance)] += 1;
    writer.write(r);
  }
  writer.finalize();
  log.j["counts"] = {{"records", seen.size()},
                     {"duplicates_removed", duplicates},
                     {"by_provenance", by_provenance}};
  log.finish("ok");
  std::cout << "wrote " << seen.size() << " process-label records\n";
  return 0;
}

int cmd_score(const CommonArgs& common, const std::string& pools_path, const std::string& agg,
              const std::string& out_path) {
  RunConfig cfg = load_run_config(common);
  RunLog log("score", out_path, cfg, cfg.seed);
  auto pools = read_all<SamplePool>(pools_path);
  auto backend = make_backend(cfg);
  Aggregation aggregation = enum_parse<Aggregation>(agg, "agg");

  parallel_for(pools.size(), cfg.backend.concurrency, [&](std::size_t i) {
    check_interrupt();
    SamplePool& pool = pools[i];
    ProblemRecord context = context_from_pool(pool);
    std::vector<ScoredTrajectory> scores;
    scores.reserve(pool.samples.size());
    for (const auto& s : pool.samples) {
      scores.push_back(backend->score_steps(s, context, aggregation));
    }
    pool.scores = std::move(scores);
  });

  JsonlWriter<SamplePool> writer(out_path, cfg.seed);
  for (const auto& p : pools) writer.write(p);
  writer.finalize();
  log.j["counts"] = {{"pools", pools.size()}};
  log.finish("ok");
  std::cout << "scored " << pools.size() << " pools\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& common, const std::string& pools_path,
                 const std::string& methods_csv, const std::string& n_csv,
                 const std::string& agg, const std::string& benchmark,
                 const std::string& out_path, const std::string& csv_path) {
  RunConfig cfg = load_run_config(common);
  RunLog log("evaluate", out_path, cfg, cfg.seed);
  auto pools = read_all<SamplePool>(pools_path);
  auto backend = make_backend(cfg);

  EvalOptions opts;
  opts.benchmark_name = benchmark;
  opts.aggregation = enum_parse<Aggregation>(agg, "agg");
  opts.seed = cfg.seed;
  opts.scoring_concurrency = cfg.backend.concurrency;
  opts.methods.clear();
  {
    std::istringstream ms(methods_csv);
    std::string m;
    while (std::getline(ms, m, ',')) {
      if (m == "pass") {
        opts.methods.push_back(Method::PassAtN);
      } else if (m == "sc") {
        opts.methods.push_back(Method::SelfConsistency);
      } else if (m == "bon") {
        opts.methods.push_back(Method::BestOfN);
      } else if (!m.empty()) {
        throw ConfigError("unknown method '" + m + "' (expected pass,sc,bon)");
      }
    }
  }
  opts.n_grid.clear();
  {
    std::istringstream ns(n_csv);
    std::string n;
    while (std::getline(ns, n, ',')) {
      if (n.empty()) continue;
      auto v = ans_detail::parse_int(n);
      if (!v) throw ConfigError("bad n value '" + n + "'");
      opts.n_grid.push_back(static_cast<int>(*v));
    }
  }
  if (opts.methods.empty() || opts.n_grid.empty()) {
    throw ConfigError("evaluate needs at least one method and one n");
  }

  EvalOutcome outcome = evaluate(std::move(pools), backend.get(), opts);
  for (const auto& id : outcome.excluded_problems) {
    std::cerr << "warning: pool '" << id << "' incomplete, excluded\n";
  }

  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  out << to_json_value(outcome.report).dump(2) << "\n";
  out.close();
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    csv << report_to_csv(outcome.report);
  }
  log.j["counts"] = {{"pools", outcome.pools.size()},
                     {"excluded", outcome.excluded_problems.size()}};
  log.finish("ok");
  if (common.format == "json") {
    std::cout << to_json_value(outcome.report).dump(2) << "\n";
  } else {
    std::cout << render_report_table(outcome.report);
  }
  return 0;
}

int cmd_stats(const CommonArgs& common, const std::string& in_path) {
  DatasetStats stats = compute_stats(in_path);
  if (common.format == "json") {
    std::cout << stats.to_json().dump(2) << "\n";
  } else {
    std::cout << "kind: " << stats.detected_kind << "\nrecords: " << stats.record_count << "\n";
    for (const auto& [k, v] : stats.by_source_kind) std::cout << "source " << k << ": " << v << "\n";
    for (const auto& [k, v] : stats.by_provenance) std::cout << "provenance " << k << ": " << v << "\n";
    for (const auto& [k, v] : stats.by_origin) std::cout << "origin " << k << ": " << v << "\n";
    if (stats.label_positive + stats.label_negative > 0) {
      std::cout << "labels +: " << stats.label_positive << "  -: " << stats.label_negative << "\n";
    }
    for (const auto& [len, n] : stats.step_length_histogram) {
      std::cout << "steps=" << len << ": " << n << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, handle_sigint);

  CLI::App app{"chain-of-thought synthesis, process labeling and test-time scaling toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolName) + " " + std::string(kToolVersion));

  // synthesize
  CommonArgs syn_common;
  std::string syn_route, syn_out;
  std::vector<std::string> syn_inputs;
  auto* syn = app.add_subcommand("synthesize", "run a CoT synthesis route");
  syn->add_option("--route", syn_route, "distill|rewrite|unify|union")
      ->required()
      ->check(CLI::IsMember({"distill", "rewrite", "unify", "union"}));
  syn->add_option("--in", syn_inputs, "input JSONL (problems; three pools for union)")
      ->required();
  syn->add_option("--out", syn_out, "output trajectories JSONL")->required();
  add_common(syn, syn_common);

  // filter
  CommonArgs fil_common;
  std::string fil_in, fil_problems, fil_out;
  auto* fil = app.add_subcommand("filter", "quality-verification filter");
  fil->add_option("--in", fil_in, "trajectories JSONL")->required();
  fil->add_option("--problems", fil_problems, "problems JSONL")->required();
  fil->add_option("--out", fil_out, "output JSONL")->required();
  add_common(fil, fil_common);

  // pairs
  CommonArgs pr_common;
  std::string pr_problems, pr_out, pr_pools, pr_positives;
  auto* pr = app.add_subcommand("pairs", "sample positive/negative trajectory pairs");
  pr->add_option("--problems", pr_problems, "problems JSONL")->required();
  pr->add_option("--out", pr_out, "pair pools JSONL")->required();
  pr->add_option("--pools-out", pr_pools, "also emit sample pools JSONL (for evaluate)");
  pr->add_option("--positives-out", pr_positives, "also emit positive trajectories JSONL");
  add_common(pr, pr_common);

  // locate-errors
  CommonArgs loc_common;
  std::string loc_pairs, loc_problems, loc_out;
  int loc_nmid = 16;
  auto* loc = app.add_subcommand("locate-errors", "binary error locating over pair pools");
  loc->add_option("--pairs", loc_pairs, "pair pools JSONL")->required();
  loc->add_option("--n-mid", loc_nmid, "rollouts per probe");
  loc->add_option("--problems", loc_problems, "problems JSONL (optional; else pool metadata)");
  loc->add_option("--out", loc_out, "step labels JSONL")->required();
  add_common(loc, loc_common);

  // inject-misread
  CommonArgs mie_common;
  std::string mie_problems, mie_positives, mie_out;
  auto* mie = app.add_subcommand("inject-misread", "misinterpretation insertion engine");
  mie->add_option("--problems", mie_problems, "problems JSONL")->required();
  mie->add_option("--positives", mie_positives, "positive trajectories or pair pools JSONL")
      ->required();
  mie->add_option("--out", mie_out, "step labels JSONL")->required();
  add_common(mie, mie_common);

  // build-prm-data
  CommonArgs prm_common;
  std::string prm_bel, prm_mie, prm_out;
  auto* prm = app.add_subcommand("build-prm-data", "union of BEL and MIE label sets");
  prm->add_option("--bel", prm_bel, "BEL step labels JSONL")->required();
  prm->add_option("--mie", prm_mie, "MIE step labels JSONL (optional)");
  prm->add_option("--out", prm_out, "output JSONL")->required();
  add_common(prm, prm_common, false);

  // score
  CommonArgs sc_common;
  std::string sc_pools, sc_agg = "min", sc_out;
  auto* sc = app.add_subcommand("score", "attach step scores to sample pools");
  sc->add_option("--pools", sc_pools, "sample pools JSONL")->required();
  sc->add_option("--scorer,--backend", sc_common.config_path, "scorer configuration")->required();
  sc->add_option("--agg", sc_agg, "aggregation: min|mean|last|product");
  sc->add_option("--out", sc_out, "output pools JSONL")->required();
  sc->add_option("--seed", sc_common.seed, "seed override");
  sc->add_option("--format", sc_common.format, "report format");

  // evaluate
  CommonArgs ev_common;
  std::string ev_pools, ev_methods = "pass,sc,bon", ev_n = "4,8,16,32,64", ev_agg = "min";
  std::string ev_benchmark = "benchmark", ev_out, ev_csv;
  auto* ev = app.add_subcommand("evaluate", "pass@N / self-consistency / best-of-N report");
  ev->add_option("--pools", ev_pools, "sample pools JSONL")->required();
  ev->add_option("--scorer,--backend", ev_common.config_path, "scorer configuration")->required();
  ev->add_option("--methods", ev_methods, "comma list: pass,sc,bon");
  ev->add_option("--n", ev_n, "comma list of N values");
  ev->add_option("--agg", ev_agg, "aggregation: min|mean|last|product");
  ev->add_option("--benchmark", ev_benchmark, "benchmark name for the report");
  ev->add_option("--out", ev_out, "report JSON path")->required();
  ev->add_option("--csv", ev_csv, "optional CSV of accuracy curves");
  ev->add_option("--seed", ev_common.seed, "seed override");
  ev->add_option("--format", ev_common.format, "report format: json|table")
      ->check(CLI::IsMember({"json", "table"}));

  // stats
  CommonArgs st_common;
  std::string st_in;
  auto* st = app.add_subcommand("stats", "corpus statistics");
  st->add_option("--in", st_in, "dataset JSONL")->required();
  st->add_option("--format", st_common.format, "json|table")
      ->check(CLI::IsMember({"json", "table"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 1;
  }

  try {
    if (syn->parsed()) return cmd_synthesize(syn_common, syn_route, syn_inputs, syn_out);
    if (fil->parsed()) return cmd_filter(fil_common, fil_in, fil_problems, fil_out);
    if (pr->parsed()) return cmd_pairs(pr_common, pr_problems, pr_out, pr_pools, pr_positives);
    if (loc->parsed()) return cmd_locate(loc_common, loc_pairs, loc_nmid, loc_problems, loc_out);
    if (mie->parsed()) return cmd_inject(mie_common, mie_problems, mie_positives, mie_out);
    if (prm->parsed()) return cmd_build_prm(prm_common, prm_bel, prm_mie, prm_out);
    if (sc->parsed()) return cmd_score(sc_common, sc_pools, sc_agg, sc_out);
    if (ev->parsed()) {
      return cmd_evaluate(ev_common, ev_pools, ev_methods, ev_n, ev_agg, ev_benchmark, ev_out,
                          ev_csv);
    }
    if (st->parsed()) return cmd_stats(st_common, st_in);
  } catch (const Interrupted&) {
    std::cerr << "interrupted; partial manifests flushed as incomplete\n";
    return 130;
  } catch (const RemoteUnavailableError& e) {
    std::cerr << "backend failure: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
