// Acceptance suite: one pass/fail line per criterion, fully offline against
// the simulated backend. Exits nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cotkit/config.hpp"
#include "cotkit/dataset_io.hpp"
#include "cotkit/error_locating.hpp"
#include "cotkit/misread.hpp"
#include "cotkit/scaling_eval.hpp"
#include "cotkit/simulated_backend.hpp"
#include "helpers.hpp"

using namespace cotkit;
using testutil::TempDir;

namespace {

int g_failures = 0;

void report(int number, bool pass, const std::string& description, const std::string& note) {
  std::printf("CRITERION %2d: %s  %s%s%s\n", number, pass ? "PASS" : "FAIL",
              description.c_str(), note.empty() ? "" : "  -- ", note.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(COTKIT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return status < 0 ? -1 : WEXITSTATUS(status);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Independent linear-scan oracle: smallest prefix length whose rollouts all
// miss the gold answer.
int linear_scan_first_error(const TrajectoryRecord& neg, const ProblemRecord& problem,
                            SimulatedBackend& backend, int n_mid) {
  for (int k = 0; k <= static_cast<int>(neg.steps.size()); ++k) {
    GenerationRequest req = GenerationRequest::from_profile(kRolloutTemplate, kLocateProfile);
    req.n_return_sequences = n_mid;
    std::vector<std::string> prefix(neg.steps.begin(), neg.steps.begin() + k);
    auto res = backend.generate(req, problem, prefix);
    if (res.trajectories.empty() ||
        !verify_rollouts(res.trajectories, problem.gold_answer).any) {
      return std::max(k, 1);
    }
  }
  return static_cast<int>(neg.steps.size());
}

// --- criteria ---------------------------------------------------------------

void criterion_1_and_2() {
  SimulatedBackend backend({.seed = 1001});
  LocateOptions locate_opts;
  locate_opts.n_mid = 16;
  int mismatches = 0;
  int probe_violations = 0;
  int runs = 0;
  long long locate_ns = 0;

  for (int len = 1; len <= 50; ++len) {
    int budget = static_cast<int>(std::ceil(std::log2(static_cast<double>(len) + 1.0)));
    for (int fe = 1; fe <= len; ++fe) {
      ProblemRecord problem =
          testutil::sim_problem("acc1_" + std::to_string(len) + "_" + std::to_string(fe));
      TrajectoryRecord neg = backend.make_negative_trajectory(problem, len, fe);

      auto t0 = std::chrono::steady_clock::now();
      LocateResult r = binary_error_locating(neg, problem, backend, locate_opts);
      locate_ns += std::chrono::duration_cast<std::chrono::nanoseconds>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
      ++runs;

      int oracle = linear_scan_first_error(neg, problem, backend, 16);
      if (r.first_error != fe || oracle != fe) ++mismatches;
      if (r.distinct_probes > budget) ++probe_violations;
    }
  }
  double seconds = static_cast<double>(locate_ns) * 1e-9;
  {
    std::ostringstream note;
    note << runs << " runs, " << mismatches << " mismatches, locate time " << seconds << " s";
    report(1, mismatches == 0 && seconds < 60.0,
           "binary error locating equals the linear-scan oracle for all L<=50, k<=L", note.str());
  }
  report(2, probe_violations == 0,
         "distinct prefix probes per trajectory stay within ceil(log2(L+1))",
         std::to_string(probe_violations) + " violations");
}

void criterion_3() {
  SimulatedBackend backend({.seed = 1003, .p_correct = 0.5});
  std::size_t total = 0, monotone_bad = 0, mie_verify_bad = 0;

  // BEL side: pair pools over simulated problems
  for (int i = 0; i < 600; ++i) {
    ProblemRecord problem = testutil::sim_problem("acc3_" + std::to_string(i));
    PairGenResult pairs = generate_pairs(problem, backend, kPairGenProfile, 1003);
    for (auto& rec : forward_label_positives(pairs.pool.positives)) {
      ++total;
      bool seen_zero = false;
      for (int v : rec.labels) {
        if (v == 0) seen_zero = true;
        if (v == 1 && seen_zero) ++monotone_bad;
      }
    }
    for (const auto& neg : pairs.pool.negatives) {
      LocateOptions lopts;
      lopts.n_mid = 16;
      LocateResult r = binary_error_locating(neg, problem, backend, lopts);
      ++total;
      bool seen_zero = false;
      for (int v : r.record.labels) {
        if (v == 0) seen_zero = true;
        if (v == 1 && seen_zero) ++monotone_bad;
      }
    }
  }

  // MIE side
  for (int i = 0; i < 400; ++i) {
    ProblemRecord problem = testutil::sim_problem("acc3m_" + std::to_string(i));
    problem.image_facts = {{"AB", std::to_string(3 + i % 9)},
                           {"angle C", std::to_string(30 + i % 120) + "\xc2\xb0"}};
    std::map<std::string, std::vector<TrajectoryRecord>> positives{
        {problem.id,
         {backend.make_positive_trajectory(problem, 4 + i % 4),
          backend.make_positive_trajectory(problem, 5, 1)}}};
    MieBuildResult r = build_mie_dataset({problem}, positives, backend,
                                         {.seed = static_cast<std::uint64_t>(i)});
    for (const auto& rec : r.records) {
      ++total;
      bool seen_zero = false;
      for (int v : rec.labels) {
        if (v == 0) seen_zero = true;
        if (v == 1 && seen_zero) ++monotone_bad;
      }
      if (equivalent(rec.trajectory.final_answer, problem.gold_answer)) ++mie_verify_bad;
    }
  }

  std::ostringstream note;
  note << total << " records, " << monotone_bad << " monotonicity violations, "
       << mie_verify_bad << " MIE records passing verification";
  report(3, total >= 10000 && monotone_bad == 0 && mie_verify_bad == 0,
         "BEL and MIE labels are prefix-positive/suffix-negative; MIE negatives fail verify",
         note.str());
}

void criterion_4() {
  double a = prm_loss({1}, {0.5});
  double b = prm_loss({1, 0}, {0.9, 0.1});
  double perfect = prm_loss({1, 1}, {1.0 - kScoreEps, 1.0 - kScoreEps});
  bool pass = std::fabs(a - 0.693147) <= 1e-6 && std::fabs(b - 0.210721) <= 1e-6 &&
              perfect <= 3e-7;
  std::ostringstream note;
  note << "loss([1],[0.5])=" << a << ", loss([1,0],[0.9,0.1])=" << b << ", perfect=" << perfect;
  report(4, pass, "process-reward loss matches direct arithmetic", note.str());
}

void criterion_5() {
  SimulatedBackend backend({.seed = 1005, .p_correct = 0.4});
  std::vector<SamplePool> pools;
  for (int i = 0; i < 200; ++i) {
    ProblemRecord problem = testutil::sim_problem("acc5_" + std::to_string(i));
    GenerationRequest req = GenerationRequest::from_profile(kSampleFullTemplate, kPairGenProfile);
    req.n_return_sequences = 64;
    SamplePool pool;
    pool.problem_id = problem.id;
    pool.gold = problem.gold_answer;
    pool.samples = backend.generate(req, problem, {}).trajectories;
    std::vector<ScoredTrajectory> scores;
    for (const auto& s : pool.samples) {
      scores.push_back(backend.score_steps(s, problem, Aggregation::Min));
    }
    pool.scores = std::move(scores);
    pools.push_back(std::move(pool));
  }
  int mismatches = 0;
  for (int n : {1, 2, 4, 8, 16, 32, 64}) {
    if (best_of_n_accuracy(pools, n, Aggregation::Min) != pass_at_n_accuracy(pools, n)) {
      ++mismatches;
    }
  }
  report(5, mismatches == 0,
         "best-of-N with the oracle scorer equals pass@N exactly on 200x64 pools",
         std::to_string(mismatches) + " mismatching n values");
}

void criterion_6() {
  const double p = 0.6;
  const int n = 15;
  const int trials = 10000;

  long double expected = 0.0L;
  for (int k = (n + 1) / 2; k <= n; ++k) {
    long double comb = 1.0L;
    for (int i = 1; i <= k; ++i) comb = comb * (n - k + i) / i;
    expected += comb * std::pow((long double)p, k) * std::pow((long double)(1 - p), n - k);
  }

  Rng rng(1006);
  std::vector<SamplePool> pools;
  for (int i = 0; i < trials; ++i) {
    SamplePool pool;
    pool.problem_id = "acc6_" + std::to_string(i);
    pool.gold = canonicalize_answer("42");
    for (int k = 0; k < n; ++k) {
      TrajectoryRecord t;
      t.problem_id = pool.problem_id;
      t.steps = {"Step 1: sample."};
      t.final_answer = canonicalize_answer(rng.uniform() < p ? "42" : "41");
      pool.samples.push_back(std::move(t));
    }
    pools.push_back(std::move(pool));
  }
  double acc = self_consistency_accuracy(pools, n);
  double mu = static_cast<double>(expected);
  double sigma = std::sqrt(mu * (1 - mu) / trials);
  std::ostringstream note;
  note << "measured " << acc << ", exact binomial " << mu << ", 3*sigma " << 3 * sigma;
  report(6, std::fabs(acc - mu) <= 3 * sigma,
         "self-consistency accuracy at n=15, p=0.6 sits within 3 sigma of the binomial value",
         note.str());
}

void criterion_7() {
  Rng rng(1007);
  int violations = 0;
  int pools_checked = 0;
  for (int i = 0; i < 1200; ++i) {
    int size = rng.range(1, 16);
    SamplePool pool;
    pool.problem_id = "acc7_" + std::to_string(i);
    pool.gold = canonicalize_answer("1");
    for (int k = 0; k < size; ++k) {
      TrajectoryRecord t;
      t.problem_id = pool.problem_id;
      t.steps = {"s"};
      t.final_answer = canonicalize_answer(rng.uniform() < 0.3 ? "1" : "0");
      pool.samples.push_back(std::move(t));
    }
    ++pools_checked;
    bool prev = false;
    for (int n = 1; n <= size; ++n) {
      bool cur = pass_at_n(pool, n);
      if (prev && !cur) ++violations;
      prev = prev || cur;
    }
  }
  report(7, violations == 0 && pools_checked >= 1000,
         "pass@N is nondecreasing in n on every randomized pool",
         std::to_string(pools_checked) + " pools, " + std::to_string(violations) +
             " violations");
}

void criterion_8() {
  TempDir a("acc8_a");
  TempDir b("acc8_b");
  bool all_ok = true;
  std::string note;
  for (const TempDir* dir : {&a, &b}) {
    {
      std::ofstream cfg(dir->file("sim.cfg"));
      cfg << "seed = 31\n[backend]\nkind = simulated\n[sim]\np_correct = 0.5\n";
    }
    std::vector<ProblemRecord> problems;
    for (int i = 0; i < 3; ++i) {
      ProblemRecord r = testutil::sim_problem("acc8_" + std::to_string(i),
                                              std::to_string(20 + i));
      r.image_facts = {{"AB", std::to_string(4 + i)}};
      problems.push_back(std::move(r));
    }
    write_all(dir->file("problems.jsonl"), problems, 31);
    std::string base = " --backend " + dir->file("sim.cfg").string();
    all_ok = all_ok &&
             run_cli("pairs --problems " + dir->file("problems.jsonl").string() + " --out " +
                     dir->file("pairs.jsonl").string() + " --pools-out " +
                     dir->file("pools.jsonl").string() + base) == 0;
    all_ok = all_ok &&
             run_cli("locate-errors --pairs " + dir->file("pairs.jsonl").string() +
                     " --n-mid 16 --out " + dir->file("bel.jsonl").string() + base) == 0;
    all_ok = all_ok &&
             run_cli("build-prm-data --bel " + dir->file("bel.jsonl").string() + " --out " +
                     dir->file("prm.jsonl").string()) == 0;
    all_ok = all_ok &&
             run_cli("evaluate --pools " + dir->file("pools.jsonl").string() + " --scorer " +
                     dir->file("sim.cfg").string() +
                     " --methods pass,sc,bon --n 1,2,4,8 --agg min --out " +
                     dir->file("report.json").string()) == 0;
  }
  if (!all_ok) {
    note = "pipeline exit codes nonzero";
  } else {
    for (const char* f :
         {"pairs.jsonl", "pools.jsonl", "bel.jsonl", "prm.jsonl", "report.json",
          "pairs.jsonl.manifest.json", "bel.jsonl.manifest.json", "prm.jsonl.manifest.json",
          "pairs.jsonl.run.json", "bel.jsonl.run.json", "report.json.run.json"}) {
      if (slurp(a.file(f)) != slurp(b.file(f))) {
        all_ok = false;
        note = std::string("differs: ") + f;
        break;
      }
    }
  }
  report(8, all_ok, "two seeded end-to-end offline runs are byte-identical", note);
}

void criterion_9() {
  TempDir dir("acc9");
  Rng rng(1009);
  bool ok = true;
  std::string note;

  auto check_roundtrip = [&](auto make, const char* name) {
    using R = decltype(make(rng, std::string{}));
    std::vector<R> records;
    for (int i = 0; i < 1000; ++i) records.push_back(make(rng, "p" + std::to_string(i)));
    auto path = dir.file(std::string(name) + ".jsonl");
    write_all(path, records, 9);
    auto back = read_all<R>(path, true);
    if (back.size() != records.size()) {
      ok = false;
      note = std::string(name) + ": size mismatch";
      return;
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!(back[i] == records[i])) {
        ok = false;
        note = std::string(name) + ": record " + std::to_string(i) + " not identical";
        return;
      }
    }
  };

  check_roundtrip([](Rng& r, const std::string& id) { return testutil::random_problem(r, id); },
                  "problems");
  check_roundtrip(
      [](Rng& r, const std::string& id) { return testutil::random_trajectory(r, id); },
      "trajectories");
  check_roundtrip(
      [](Rng& r, const std::string& id) { return testutil::random_step_label(r, id); },
      "labels");
  check_roundtrip([](Rng& r, const std::string& id) { return testutil::random_scored(r, id); },
                  "scored");
  check_roundtrip(
      [](Rng& r, const std::string& id) { return testutil::random_sample_pool(r, id); },
      "pools");
  check_roundtrip(
      [](Rng& r, const std::string& id) { return testutil::random_pair_pool(r, id); },
      "pairs");

  // exact line numbers on schema violations
  if (ok) {
    std::ofstream out(dir.file("bad.jsonl"));
    out << R"({"problem_id":"p","steps":["a"],"final_answer":{"raw":"1","canonical":"1","kind":"numeric"},"origin":"sampled"})"
        << "\n";
    out << R"({"problem_id":"p","final_answer":{"raw":"1","canonical":"1","kind":"numeric"},"origin":"sampled"})"
        << "\n";
    out << R"({"problem_id":"p","steps":["a"],"final_answer":{"raw":"1","canonical":"1","kind":"numeric"},"origin":"nonsense"})"
        << "\n";
    out.close();
    JsonlReader<TrajectoryRecord> reader(dir.file("bad.jsonl"));
    try {
      reader.next();
      try {
        reader.next();
        ok = false;
        note = "missing steps not reported";
      } catch (const SchemaViolationError& e) {
        if (e.line() != 2 || e.field() != "steps") {
          ok = false;
          note = "wrong line/field for missing steps: line " + std::to_string(e.line());
        }
      }
      if (ok) {
        try {
          reader.next();
          ok = false;
          note = "bad origin not reported";
        } catch (const SchemaViolationError& e) {
          if (e.line() != 3) {
            ok = false;
            note = "wrong line for bad origin";
          }
        }
      }
    } catch (const SchemaViolationError&) {
      ok = false;
      note = "line 1 unexpectedly rejected";
    }
  }
  report(9, ok, "1000 randomized records of each kind survive write->read; violations carry lines",
         note);
}

void criterion_10() {
  TempDir dir("acc10");
  {
    std::ofstream cfg(dir.file("sim.cfg"));
    cfg << "[backend]\nkind = simulated\n";
  }
  std::vector<ProblemRecord> problems{testutil::sim_problem("acc10_p")};
  write_all(dir.file("problems.jsonl"), problems, 0);
  int code = run_cli("pairs --problems " + dir.file("problems.jsonl").string() + " --out " +
                     dir.file("pairs.jsonl").string() + " --backend " +
                     dir.file("sim.cfg").string());
  bool ok = code == 0;
  std::string note;
  if (ok) {
    json log = json::parse(slurp(dir.file("pairs.jsonl.run.json")), nullptr, false);
    if (log.is_discarded()) {
      ok = false;
      note = "run log unreadable";
    } else {
      const json& pg = log["config"]["profiles"]["pair_gen"];
      const json& lc = log["config"]["profiles"]["locate"];
      ok = pg["temperature"] == 1.0 && pg["top_p"] == 0.95 && pg["n_return_sequences"] == 16 &&
           lc["temperature"] == 0.3 && lc["top_p"] == 0.95 && lc["n_return_sequences"] == 16;
      if (!ok) note = "profiles in run log differ from the documented defaults";
    }
  } else {
    note = "pairs run failed with exit " + std::to_string(code);
  }
  report(10, ok,
         "run manifests record pair-gen 1.0/0.95/16 and locate 0.3/0.95/16 by default", note);
}

}  // namespace

int main() {
  criterion_1_and_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  if (g_failures == 0) {
    std::printf("ALL CRITERIA PASS\n");
  } else {
    std::printf("%d CRITERIA FAILED\n", g_failures);
  }
  return g_failures == 0 ? 0 : 1;
}
