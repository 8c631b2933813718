#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cotkit/config.hpp"
#include "cotkit/dataset_io.hpp"
#include "cotkit/error_locating.hpp"
#include "cotkit/scaling_eval.hpp"
#include "cotkit/simulated_backend.hpp"
#include "helpers.hpp"

using namespace cotkit;
using testutil::TempDir;

namespace {

int run_cli(const std::string& args, const std::filesystem::path& log_dir,
            const std::string& tag) {
  std::string cmd = std::string(COTKIT_CLI_PATH) + " " + args + " > " +
                    (log_dir / (tag + ".out")).string() + " 2> " +
                    (log_dir / (tag + ".err")).string();
  int status = std::system(cmd.c_str());
  if (status < 0) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_sim_config(const std::filesystem::path& path, double p_correct = 0.5,
                      std::uint64_t seed = 7) {
  std::ofstream out(path);
  out << "seed = " << seed << "\n[backend]\nkind = simulated\n[sim]\np_correct = " << p_correct
      << "\n";
}

void write_problem_fixture(const std::filesystem::path& path, int count) {
  std::vector<ProblemRecord> problems;
  for (int i = 0; i < count; ++i) {
    ProblemRecord r = testutil::sim_problem("fix" + std::to_string(i),
                                            std::to_string(10 + i));
    r.image_facts = {{"AB", std::to_string(3 + i)}, {"angle C", "60\xc2\xb0"}};
    problems.push_back(std::move(r));
  }
  write_all(path, problems, 0);
}

}  // namespace

TEST_CASE("cli: stats on a fixture file exits zero with counts") {
  TempDir dir("cli_stats");
  write_problem_fixture(dir.file("problems.jsonl"), 3);
  int code = run_cli("stats --in " + dir.file("problems.jsonl").string() + " --format json",
                     dir.path(), "stats");
  CHECK(code == 0);
  json out = json::parse(slurp(dir.file("stats.out")));
  CHECK(out["record_count"] == 3);
  CHECK(out["detected_kind"] == "problem");
}

TEST_CASE("cli: unknown flags exit 1 with help on stderr") {
  TempDir dir("cli_usage");
  int code = run_cli("stats --no-such-flag", dir.path(), "bad");
  CHECK(code == 1);
  CHECK(slurp(dir.file("bad.err")).find("stats") != std::string::npos);

  int code2 = run_cli("definitely-not-a-subcommand", dir.path(), "bad2");
  CHECK(code2 == 1);
}

TEST_CASE("cli: full offline pipeline runs, checks out against the library replay") {
  TempDir dir("cli_pipe");
  write_sim_config(dir.file("sim.cfg"));
  write_problem_fixture(dir.file("problems.jsonl"), 4);

  std::string base = " --backend " + dir.file("sim.cfg").string();
  REQUIRE(run_cli("pairs --problems " + dir.file("problems.jsonl").string() + " --out " +
                      dir.file("pairs.jsonl").string() + " --pools-out " +
                      dir.file("pools.jsonl").string() + " --positives-out " +
                      dir.file("pos.jsonl").string() + base,
                  dir.path(), "pairs") == 0);
  REQUIRE(run_cli("locate-errors --pairs " + dir.file("pairs.jsonl").string() +
                      " --n-mid 16 --out " + dir.file("bel.jsonl").string() + base,
                  dir.path(), "locate") == 0);
  REQUIRE(run_cli("inject-misread --problems " + dir.file("problems.jsonl").string() +
                      " --positives " + dir.file("pairs.jsonl").string() + " --out " +
                      dir.file("mie.jsonl").string() + base,
                  dir.path(), "mie") == 0);
  REQUIRE(run_cli("build-prm-data --bel " + dir.file("bel.jsonl").string() + " --mie " +
                      dir.file("mie.jsonl").string() + " --out " + dir.file("prm.jsonl").string(),
                  dir.path(), "prm") == 0);
  REQUIRE(run_cli("evaluate --pools " + dir.file("pools.jsonl").string() + " --scorer " +
                      dir.file("sim.cfg").string() +
                      " --methods pass,sc,bon --n 1,2,4,8,16 --agg min --out " +
                      dir.file("report.json").string(),
                  dir.path(), "eval") == 0);

  // all outputs parse and honor their invariants
  auto pairs = read_all<PairPool>(dir.file("pairs.jsonl"), true);
  CHECK(pairs.size() == 4);
  auto labels = read_all<StepLabelRecord>(dir.file("prm.jsonl"), true);
  CHECK_FALSE(labels.empty());
  for (const auto& r : labels) CHECK_NOTHROW(r.validate());

  // library replay oracle: the same seed and inputs reproduce bel.jsonl
  {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.sim.p_correct = 0.5;
    SimulatedBackend::Options opts = cfg.sim;
    opts.seed = cfg.seed;
    SimulatedBackend backend(opts);
    std::map<std::string, ProblemRecord> problems;
    for (auto& p : read_all<ProblemRecord>(dir.file("problems.jsonl"))) {
      problems.emplace(p.id, std::move(p));
    }
    LocateOptions lopts;
    lopts.n_mid = 16;
    lopts.seed = cfg.seed;
    BelBuildResult replay = build_bel_dataset(pairs, problems, backend, lopts);
    auto bel = read_all<StepLabelRecord>(dir.file("bel.jsonl"), true);
    REQUIRE(replay.records.size() == bel.size());
    for (std::size_t i = 0; i < bel.size(); ++i) {
      CHECK(canonical_line(replay.records[i]) == canonical_line(bel[i]));
    }
  }

  // report sanity: oracle scorer makes BoN match pass@N
  EvalReport report = parse_eval_report(json::parse(slurp(dir.file("report.json"))));
  std::map<int, double> pass, bon;
  for (const auto& row : report.rows) {
    if (row.method == Method::PassAtN) pass[row.n] = row.accuracy;
    if (row.method == Method::BestOfN) bon[row.n] = row.accuracy;
  }
  for (const auto& [n, acc] : pass) CHECK(bon.at(n) == acc);

  // run logs carry the shipped sampling profiles
  json run_log = json::parse(slurp(dir.file("pairs.jsonl.run.json")));
  CHECK(run_log["config"]["profiles"]["pair_gen"]["temperature"] == 1.0);
  CHECK(run_log["config"]["profiles"]["pair_gen"]["top_p"] == 0.95);
  CHECK(run_log["config"]["profiles"]["pair_gen"]["n_return_sequences"] == 16);
  CHECK(run_log["config"]["profiles"]["locate"]["temperature"] == 0.3);
  CHECK(run_log["status"] == "ok");
}

TEST_CASE("cli: identical seed and inputs give byte-identical outputs") {
  TempDir a("cli_det_a");
  TempDir b("cli_det_b");
  for (const TempDir* dir : {&a, &b}) {
    write_sim_config(dir->file("sim.cfg"));
    write_problem_fixture(dir->file("problems.jsonl"), 3);
    std::string base = " --backend " + dir->file("sim.cfg").string();
    REQUIRE(run_cli("pairs --problems " + dir->file("problems.jsonl").string() + " --out " +
                        dir->file("pairs.jsonl").string() + " --pools-out " +
                        dir->file("pools.jsonl").string() + base,
                    dir->path(), "pairs") == 0);
    REQUIRE(run_cli("locate-errors --pairs " + dir->file("pairs.jsonl").string() + " --out " +
                        dir->file("bel.jsonl").string() + base,
                    dir->path(), "locate") == 0);
    REQUIRE(run_cli("evaluate --pools " + dir->file("pools.jsonl").string() + " --scorer " +
                        dir->file("sim.cfg").string() + " --methods pass,bon --n 1,4 --out " +
                        dir->file("report.json").string(),
                    dir->path(), "eval") == 0);
  }
  for (const char* f : {"pairs.jsonl", "pools.jsonl", "bel.jsonl", "report.json",
                        "pairs.jsonl.run.json", "bel.jsonl.run.json"}) {
    CAPTURE(f);
    CHECK(slurp(a.file(f)) == slurp(b.file(f)));
  }
}

TEST_CASE("cli: score attaches step scores consumable by evaluate") {
  TempDir dir("cli_score");
  write_sim_config(dir.file("sim.cfg"));
  write_problem_fixture(dir.file("problems.jsonl"), 3);
  std::string base = " --backend " + dir.file("sim.cfg").string();
  REQUIRE(run_cli("pairs --problems " + dir.file("problems.jsonl").string() + " --out " +
                      dir.file("pairs.jsonl").string() + " --pools-out " +
                      dir.file("pools.jsonl").string() + base,
                  dir.path(), "pairs") == 0);
  REQUIRE(run_cli("score --pools " + dir.file("pools.jsonl").string() + " --scorer " +
                      dir.file("sim.cfg").string() + " --agg min --out " +
                      dir.file("scored.jsonl").string(),
                  dir.path(), "score") == 0);
  auto scored = read_all<SamplePool>(dir.file("scored.jsonl"), true);
  REQUIRE(scored.size() == 3);
  for (const auto& pool : scored) {
    REQUIRE(pool.scores.has_value());
    CHECK(pool.scores->size() == pool.samples.size());
  }
  // pre-scored pools feed evaluate directly; the oracle scores still make
  // best-of-n coincide with pass@n
  REQUIRE(run_cli("evaluate --pools " + dir.file("scored.jsonl").string() + " --scorer " +
                      dir.file("sim.cfg").string() + " --methods pass,bon --n 1,4,8 --out " +
                      dir.file("report.json").string() + " --format json",
                  dir.path(), "eval") == 0);
  EvalReport report = parse_eval_report(json::parse(slurp(dir.file("report.json"))));
  std::map<int, double> pass, bon;
  for (const auto& row : report.rows) {
    (row.method == Method::PassAtN ? pass : bon)[row.n] = row.accuracy;
  }
  for (const auto& [n, acc] : pass) CHECK(bon.at(n) == acc);
  // --format json printed the report to stdout too
  CHECK_FALSE(json::parse(slurp(dir.file("eval.out")), nullptr, false).is_discarded());
}

TEST_CASE("cli: concurrency level never changes outputs") {
  TempDir a("cli_conc_a");
  TempDir b("cli_conc_b");
  int conc = 1;
  for (const TempDir* dir : {&a, &b}) {
    {
      std::ofstream cfg(dir->file("sim.cfg"));
      cfg << "seed = 5\n[backend]\nkind = simulated\nconcurrency = " << conc << "\n";
    }
    conc = 8;
    write_problem_fixture(dir->file("problems.jsonl"), 6);
    REQUIRE(run_cli("pairs --problems " + dir->file("problems.jsonl").string() + " --out " +
                        dir->file("pairs.jsonl").string() + " --pools-out " +
                        dir->file("pools.jsonl").string() + " --backend " +
                        dir->file("sim.cfg").string(),
                    dir->path(), "pairs") == 0);
    REQUIRE(run_cli("evaluate --pools " + dir->file("pools.jsonl").string() + " --scorer " +
                        dir->file("sim.cfg").string() + " --methods pass,bon --n 1,4,16 --out " +
                        dir->file("report.json").string(),
                    dir->path(), "eval") == 0);
  }
  CHECK(slurp(a.file("pairs.jsonl")) == slurp(b.file("pairs.jsonl")));
  CHECK(slurp(a.file("pools.jsonl")) == slurp(b.file("pools.jsonl")));
  CHECK(slurp(a.file("report.json")) == slurp(b.file("report.json")));
}

TEST_CASE("cli: remote failures exit 2 without partial dataset writes") {
  TempDir dir("cli_remote");
  {
    std::ofstream out(dir.file("remote.cfg"));
    out << "[backend]\nkind = remote\nendpoint = http://127.0.0.1:9/v1/chat/completions\n"
        << "model = none\nretries = 0\nbackoff_ms = 1\ntimeout_s = 1\n";
  }
  write_problem_fixture(dir.file("problems.jsonl"), 1);
  int code = run_cli("pairs --problems " + dir.file("problems.jsonl").string() + " --out " +
                         dir.file("pairs.jsonl").string() + " --backend " +
                         dir.file("remote.cfg").string(),
                     dir.path(), "remote");
  CHECK(code == 2);
  // no records were written
  CHECK(slurp(dir.file("pairs.jsonl")).empty());
  auto manifest = load_manifest(dir.file("pairs.jsonl"));
  REQUIRE(manifest.has_value());
  CHECK_FALSE(manifest->complete);
  CHECK(manifest->count == 0);
}

TEST_CASE("cli: locate-errors without gold metadata or --problems exits 1") {
  TempDir dir("cli_nogold");
  write_sim_config(dir.file("sim.cfg"));
  // a bare pair-pool file with no stashed problem context
  PairPool pool;
  pool.problem_id = "bare";
  TrajectoryRecord neg;
  neg.problem_id = "bare";
  neg.steps = {"Step 1: x."};
  neg.final_answer = canonicalize_answer("1");
  neg.correct = false;
  pool.negatives = {neg};
  write_all(dir.file("pairs.jsonl"), std::vector<PairPool>{pool}, 0);
  int code = run_cli("locate-errors --pairs " + dir.file("pairs.jsonl").string() + " --out " +
                         dir.file("bel.jsonl").string() + " --backend " +
                         dir.file("sim.cfg").string(),
                     dir.path(), "nogold");
  CHECK(code == 1);
  CHECK(slurp(dir.file("nogold.err")).find("--problems") != std::string::npos);
}

TEST_CASE("cli: bad config keys exit 1") {
  TempDir dir("cli_cfg");
  {
    std::ofstream out(dir.file("bad.cfg"));
    out << "not_a_key = 1\n";
  }
  write_problem_fixture(dir.file("problems.jsonl"), 1);
  int code = run_cli("pairs --problems " + dir.file("problems.jsonl").string() + " --out " +
                         dir.file("pairs.jsonl").string() + " --backend " +
                         dir.file("bad.cfg").string(),
                     dir.path(), "cfg");
  CHECK(code == 1);
}

TEST_CASE("cli: synthesize routes and union") {
  TempDir dir("cli_syn");
  write_sim_config(dir.file("sim.cfg"));
  write_problem_fixture(dir.file("problems.jsonl"), 3);
  std::string base = " --backend " + dir.file("sim.cfg").string();

  REQUIRE(run_cli("synthesize --route distill --in " + dir.file("problems.jsonl").string() +
                      " --out " + dir.file("distilled.jsonl").string() + base,
                  dir.path(), "syn") == 0);
  auto kept = read_all<TrajectoryRecord>(dir.file("distilled.jsonl"), true);
  CHECK_FALSE(kept.empty());
  for (const auto& t : kept) CHECK(t.origin == Origin::Distilled);

  REQUIRE(run_cli("filter --in " + dir.file("distilled.jsonl").string() + " --problems " +
                      dir.file("problems.jsonl").string() + " --out " +
                      dir.file("filtered.jsonl").string() + base,
                  dir.path(), "filter") == 0);
  auto filtered = read_all<TrajectoryRecord>(dir.file("filtered.jsonl"), true);
  CHECK(filtered.size() == kept.size());  // simulator output passes its own check

  REQUIRE(run_cli("synthesize --route union --in " + dir.file("filtered.jsonl").string() +
                      " --in " + dir.file("filtered.jsonl").string() + " --in " +
                      dir.file("filtered.jsonl").string() + " --out " +
                      dir.file("sft.jsonl").string() + base,
                  dir.path(), "union") == 0);
  auto sft = read_all<TrajectoryRecord>(dir.file("sft.jsonl"), true);
  CHECK(sft.size() == filtered.size());  // three identical pools dedup to one

  // filter soundness carries through the union: every record still ends in
  // its problem's gold answer
  std::map<std::string, AnswerValue> golds;
  for (const auto& p : read_all<ProblemRecord>(dir.file("problems.jsonl"))) {
    golds[p.id] = p.gold_answer;
  }
  for (const auto& t : sft) {
    CHECK(equivalent(t.final_answer, golds.at(t.problem_id)));
  }
}
