#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dosebandit/harness.hpp"
#include "test_support.hpp"

using namespace dosebandit;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_synthetic_config() {
  ExperimentConfig cfg;
  cfg.synthetic = SyntheticSpec::clustered(400, 4);
  cfg.synthetic_seed = 7;
  cfg.seeds = {1, 2, 3};
  cfg.demos = {"random"};
  cfg.train.iterations = 150;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("run_single on a one-arm cohort: learners find it, the demo cannot") {
  ExperimentConfig cfg;
  cfg.synthetic = SyntheticSpec::fixed(500, 3, Arm::medium);
  cfg.demos = {"random"};
  cfg.train.iterations = 200;
  const auto prep = prepare_data(cfg);
  const auto result = run_single(cfg, prep, 1);
  REQUIRE(result.error.empty());
  REQUIRE(result.demos.size() == 1);
  CHECK(std::abs(result.demos[0].demo_oracle.value - 1.0 / 3.0) < 1e-12);
  for (const auto& learner : result.demos[0].learners) {
    const auto& oracle = learner.cells.back();
    REQUIRE(oracle.metric == "oracle");
    CHECK(oracle.value >= 0.99);
  }
}

TEST_CASE("run_single is deterministic for a fixed config and seed") {
  const auto cfg = small_synthetic_config();
  const auto prep = prepare_data(cfg);
  const RunResult a = run_single(cfg, prep, 5);
  const RunResult b = run_single(cfg, prep, 5);
  const std::vector<RunResult> va = {a}, vb = {b};
  CHECK(runs_raw_csv(va) == runs_raw_csv(vb));
}

TEST_CASE("run_suite seeds are independent and order-insensitive") {
  auto cfg = small_synthetic_config();
  const auto prep = prepare_data(cfg);

  cfg.seeds = {1};
  const auto just_one = run_suite(cfg, prep);
  cfg.seeds = {1, 2};
  const auto both = run_suite(cfg, prep);
  REQUIRE(both.size() == 2);
  const std::vector<RunResult> lhs = {just_one[0]}, rhs = {both[0]};
  CHECK(runs_raw_csv(lhs) == runs_raw_csv(rhs));

  cfg.seeds = {2, 1};
  const auto swapped = run_suite(cfg, prep);
  const std::vector<RunResult> x = {swapped[1]}, y = {both[0]};
  CHECK(runs_raw_csv(x) == runs_raw_csv(y));
}

TEST_CASE("parallel execution reproduces the serial results byte for byte") {
  auto cfg = small_synthetic_config();
  cfg.seeds = {1, 2, 3, 4};
  const auto prep = prepare_data(cfg);
  const auto serial = run_suite(cfg, prep, 1);
  const auto parallel = run_suite(cfg, prep, 2);
  CHECK(runs_raw_csv(serial) == runs_raw_csv(parallel));
}

TEST_CASE("aggregate mean and bounds") {
  RunResult r1, r2;
  r1.seed = 1;
  r2.seed = 2;
  for (auto* r : {&r1, &r2}) {
    DemoResult d;
    d.demo = "random";
    d.demo_oracle = {"oracle", r->seed == 1 ? 0.5 : 0.7, 10, ""};
    LearnerResult lr;
    lr.learner = "offset_tree";
    lr.cells.push_back({"oracle", r->seed == 1 ? 0.5 : 0.7, 10, ""});
    d.learners.push_back(lr);
    r->demos.push_back(d);
  }
  const std::vector<RunResult> results = {r1, r2};
  const auto report = aggregate(results);
  CHECK(report.demos[0].demo_oracle.mean == doctest::Approx(0.6));
  CHECK(report.demos[0].demo_oracle.lower == 0.5);
  CHECK(report.demos[0].demo_oracle.upper == 0.7);

  const std::vector<RunResult> single = {r1};
  const auto degenerate = aggregate(single);
  CHECK(degenerate.demos[0].demo_oracle.mean == degenerate.demos[0].demo_oracle.lower);
  CHECK(degenerate.demos[0].demo_oracle.mean == degenerate.demos[0].demo_oracle.upper);
}

TEST_CASE("boxplot statistics pin the quartile convention") {
  const auto s = CellStats::from_values({0.0, 0.0, 1.0, 1.0});
  CHECK(s.median == 0.5);
  CHECK(s.q1 == doctest::Approx(0.0));
  CHECK(s.q3 == doctest::Approx(1.0));
  const auto t = CellStats::from_values({1.0, 2.0, 3.0, 4.0, 10.0});
  CHECK(t.median == 3.0);
  CHECK(t.q1 == 2.0);
  CHECK(t.q3 == 4.0);
  // 10 lies beyond q3 + 1.5*iqr = 7: whisker stops at 4
  CHECK(t.whisker_hi == 4.0);
  CHECK(t.whisker_lo == 1.0);
}

TEST_CASE("aggregate skips errored cells and counts them") {
  RunResult r1, r2;
  r1.seed = 1;
  r2.seed = 2;
  for (auto* r : {&r1, &r2}) {
    DemoResult d;
    d.demo = "random";
    d.demo_oracle = {"oracle", 0.4, 10, ""};
    LearnerResult lr;
    lr.learner = "offset_tree";
    EstimateCell cell{"rejection_sampling", 0.9, 5, ""};
    if (r->seed == 2) {
      cell.error = "no interactions accepted";
      cell.value = std::numeric_limits<double>::quiet_NaN();
    }
    lr.cells.push_back(cell);
    lr.cells.push_back({"oracle", 0.8, 10, ""});
    d.learners.push_back(lr);
    r->demos.push_back(d);
  }
  const std::vector<RunResult> results = {r1, r2};
  const auto report = aggregate(results);
  const auto& rs = report.demos[0].learners[0].metrics[0];
  CHECK(rs.metric == "rejection_sampling");
  CHECK(rs.stats.n == 1);
  CHECK(rs.stats.errors == 1);
  CHECK(rs.stats.mean == doctest::Approx(0.9));
}

TEST_CASE("aggregate refuses when every seed failed") {
  RunResult failed;
  failed.seed = 3;
  failed.error = "boom";
  const std::vector<RunResult> results = {failed};
  CHECK_THROWS(aggregate(results));
}

TEST_CASE("emit_report writes the full table structure deterministically") {
  const auto cfg = small_synthetic_config();
  const auto prep = prepare_data(cfg);
  const auto results = run_suite(cfg, prep);
  const auto report = aggregate(results);

  const auto dir = fresh_dir("dosebandit_emit_test");
  const auto files = emit_report(report, results, dir.string());
  CHECK(files.size() == 5);  // tables csv+json for one demo, boxplot, raw, estimates

  const std::string table = slurp(dir / "tables_random.csv");
  // 3 estimators + oracle + header + demo oracle line
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);
  for (const char* metric : {"rejection_sampling", "dr", "ncis", "oracle", "demo_oracle"}) {
    CHECK(table.find(metric) != std::string::npos);
  }
  const auto tj = nlohmann::json::parse(slurp(dir / "tables_random.json"));
  CHECK(tj["cells"].size() == 2);                    // two learners
  CHECK(tj["cells"]["offset_tree"].size() == 4);     // 3 estimators + oracle
  CHECK(tj["cells"]["dr_policy"].size() == 4);       // 8 value cells total

  // every aggregated cell keeps lower <= mean <= upper
  for (const auto& demo : report.demos) {
    CHECK(demo.demo_oracle.lower <= demo.demo_oracle.mean);
    CHECK(demo.demo_oracle.mean <= demo.demo_oracle.upper);
    for (const auto& learner : demo.learners) {
      for (const auto& m : learner.metrics) {
        CHECK(m.stats.lower <= m.stats.mean);
        CHECK(m.stats.mean <= m.stats.upper);
      }
    }
  }

  // estimate records carry the full identity of each cell
  std::stringstream jsonl(slurp(dir / "estimates.jsonl"));
  std::string line;
  std::size_t records = 0;
  while (std::getline(jsonl, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"estimator", "policy", "demo", "seed", "mean", "n_effective"}) {
      CHECK(j.contains(key));
    }
    ++records;
  }
  CHECK(records == results.size() * (1 + 2 * 4));  // demo oracle + 2 learners x 4 metrics

  // re-emitting reproduces every byte
  const std::string raw_before = slurp(dir / "runs_raw.csv");
  const std::string box_before = slurp(dir / "boxplot.json");
  const std::string jsonl_before = slurp(dir / "estimates.jsonl");
  emit_report(report, results, dir.string());
  CHECK(slurp(dir / "runs_raw.csv") == raw_before);
  CHECK(slurp(dir / "boxplot.json") == box_before);
  CHECK(slurp(dir / "estimates.jsonl") == jsonl_before);
  CHECK(slurp(dir / "tables_random.csv") == table);
  fs::remove_all(dir);
}

TEST_CASE("full real-table flow: three demos, both learners, emitted tables") {
  // deterministic 80-row cohort table shaped like the real export
  std::string csv =
      "PharmGKB Subject ID,Gender,Race,Age,Height (cm),Weight (kg),"
      "Amiodarone (Cordarone),Carbamazepine (Tegretol),Phenytoin (Dilantin),"
      "Rifampin or Rifampicin,Cyp2C9 genotypes,VKORC1 -1639 consensus,"
      "Therapeutic Dose of Warfarin\n";
  const char* races[] = {"White", "Asian", "Black or African American", "Unknown"};
  const char* cyps[] = {"*1/*1", "*1/*2", "*1/*3", "*1/*1", "*2/*3", "*1/*1"};
  const char* vkos[] = {"G/G", "A/G", "A/A", "G/G", "A/G"};
  for (int i = 0; i < 80; ++i) {
    const int dose = 12 + (i * 7) % 55;  // spreads across all three buckets
    csv += "PA" + std::to_string(i) + "," + (i % 2 ? "male" : "female") + "," +
           races[i % 4] + "," + std::to_string(2 + (i % 7)) + "0 - x," +
           std::to_string(150 + (i * 3) % 40) + "," + std::to_string(50 + (i * 5) % 60) +
           "," + (i % 11 == 0 ? "1" : "0") + ",0,0," + (i % 17 == 0 ? "1" : "0") + "," +
           cyps[i % 6] + "," + vkos[i % 5] + "," + std::to_string(dose) + "\n";
  }
  const auto dir = fresh_dir("dosebandit_real_flow");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "cohort.csv");
    f << csv;
  }

  ExperimentConfig cfg;
  cfg.table_path = (dir / "cohort.csv").string();
  cfg.schema_path = std::string(DOSEBANDIT_SOURCE_DATA_DIR) + "/iwpc_schema.json";
  cfg.wcda_coefficients =
      std::string(DOSEBANDIT_SOURCE_DATA_DIR) + "/iwpc_clinical_coefficients.json";
  cfg.wpda_coefficients =
      std::string(DOSEBANDIT_SOURCE_DATA_DIR) + "/iwpc_pharmacogenetic_coefficients.json";
  cfg.seeds = {1, 2};
  cfg.train.iterations = 120;

  const auto prep = prepare_data(cfg);
  CHECK(prep.data.provenance == Provenance::real);
  REQUIRE(prep.data.records.size() == 80);
  const auto results = run_suite(cfg, prep, 2);
  for (const auto& r : results) {
    REQUIRE(r.error.empty());
    REQUIRE(r.demos.size() == 3);
    for (const auto& demo : r.demos) {
      REQUIRE(demo.demo_oracle.ok());
      if (demo.demo == "random") {
        CHECK(std::abs(demo.demo_oracle.value - 1.0 / 3.0) < 1e-12);
      } else {
        CHECK(demo.demo_oracle.value >= 0.0);
        CHECK(demo.demo_oracle.value <= 1.0);
      }
      REQUIRE(demo.learners.size() == 2);
      for (const auto& learner : demo.learners) {
        REQUIRE(learner.cells.size() == 4);
        const auto& oracle = learner.cells.back();
        REQUIRE(oracle.metric == "oracle");
        REQUIRE(oracle.ok());
        CHECK(oracle.value >= 0.0);
        CHECK(oracle.value <= 1.0);
        for (const auto& cell : learner.cells) {
          if (cell.ok()) {
            CHECK(std::isfinite(cell.value));
          } else {
            CHECK_FALSE(cell.error.empty());  // per-cell marker, run continued
          }
        }
      }
    }
  }

  // one table file per demo, each carrying 2 learners x 4 metrics
  const auto report = aggregate(results);
  emit_report(report, results, (dir / "out").string());
  for (const char* demo : {"random", "wcda", "wpda"}) {
    const auto tj = nlohmann::json::parse(
        slurp(dir / "out" / (std::string("tables_") + demo + ".json")));
    CHECK(tj["cells"].size() == 2);
    std::size_t cells = 0;
    for (const auto& [learner, metrics] : tj["cells"].items()) {
      (void)learner;
      cells += metrics.size();
    }
    CHECK(cells == 8);
  }
  fs::remove_all(dir);
}

TEST_CASE("the default seed list is 1..30") {
  const ExperimentConfig cfg;
  const auto seeds = cfg.effective_seeds();
  REQUIRE(seeds.size() == 30);
  CHECK(seeds.front() == 1);
  CHECK(seeds.back() == 30);
}

TEST_CASE("emit_report fails before writing anything on an unwritable path") {
  const auto base = fresh_dir("dosebandit_unwritable");
  fs::create_directories(base);
  {
    std::ofstream block(base / "blocker");
    block << "x";
  }
  const auto cfg = small_synthetic_config();
  const auto prep = prepare_data(cfg);
  std::vector<RunResult> results;
  results.push_back(run_single(cfg, prep, 1));
  const auto report = aggregate(results);
  const std::string bad = (base / "blocker" / "out").string();
  CHECK_THROWS(emit_report(report, results, bad));
  CHECK_FALSE(fs::exists(base / "blocker" / "out"));
  fs::remove_all(base);
}

TEST_CASE("report subcommand path: raw CSV round-trips to identical tables") {
  const auto cfg = small_synthetic_config();
  const auto prep = prepare_data(cfg);
  const auto results = run_suite(cfg, prep);
  const auto report = aggregate(results);
  const auto dir1 = fresh_dir("dosebandit_report_a");
  emit_report(report, results, dir1.string());

  std::ifstream raw(dir1 / "runs_raw.csv");
  const auto reparsed = parse_runs_raw_csv(raw);
  const auto report2 = aggregate(reparsed);
  const auto dir2 = fresh_dir("dosebandit_report_b");
  emit_report(report2, reparsed, dir2.string());

  for (const char* f : {"tables_random.csv", "tables_random.json", "boxplot.json",
                        "runs_raw.csv"}) {
    CHECK(slurp(dir1 / f) == slurp(dir2 / f));
  }
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("experiment config round-trips through JSON") {
  ExperimentConfig cfg;
  cfg.table_path = "data/warfarin.csv";
  cfg.schema_path = "data/iwpc_schema.json";
  cfg.split_ratio = 0.75;
  cfg.seeds = {4, 5, 6};
  cfg.demos = {"random", "wcda"};
  cfg.train.iterations = 123;
  cfg.train.l2 = 0.5;
  cfg.ope.ncis_cap = 7.0;
  cfg.ope.logs_on_train = true;
  cfg.wcda_coefficients = "a.json";
  cfg.wpda_coefficients = "b.json";
  cfg.output_dir = "elsewhere";

  const auto j = config_to_json(cfg);
  const auto back = config_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.table_path == cfg.table_path);
  CHECK(back.split_ratio == cfg.split_ratio);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.demos == cfg.demos);
  CHECK(back.train.iterations == cfg.train.iterations);
  CHECK(back.train.l2 == cfg.train.l2);
  CHECK(back.ope.ncis_cap == cfg.ope.ncis_cap);
  CHECK(back.ope.logs_on_train == cfg.ope.logs_on_train);
  CHECK(back.wcda_coefficients == cfg.wcda_coefficients);
  CHECK(back.output_dir == cfg.output_dir);
}

TEST_CASE("synthetic spec shorthand parses") {
  const auto clustered = parse_synthetic_spec("clustered:n=2000,d=6,sep=3,sigma=0.25");
  CHECK(clustered.kind == SyntheticSpec::Kind::clustered);
  CHECK(clustered.count == 2000);
  CHECK(clustered.dim == 6);
  CHECK(clustered.cluster_separation == 3.0);
  CHECK(clustered.cluster_sigma == 0.25);

  const auto fixed = parse_synthetic_spec("fixed:n=10,d=2,arm=2");
  CHECK(fixed.kind == SyntheticSpec::Kind::fixed);
  CHECK(fixed.fixed_arm == Arm::high);

  CHECK_THROWS_AS(parse_synthetic_spec("mystery:n=5"), ConfigError);
  CHECK_THROWS_AS(parse_synthetic_spec("fixed:bogus"), ConfigError);
}

TEST_CASE("synthetic cohorts reject record-based demos") {
  auto cfg = small_synthetic_config();
  cfg.demos = {"random", "wcda"};
  CHECK_THROWS_AS(prepare_data(cfg), ConfigError);
}

TEST_CASE("ope options switch the evaluation log and estimator inputs") {
  auto cfg = small_synthetic_config();
  cfg.seeds = {1};
  const auto prep = prepare_data(cfg);
  const auto default_run = run_single(cfg, prep, 1);

  auto cfg_train_logs = cfg;
  cfg_train_logs.ope.logs_on_train = true;
  const auto train_logs_run = run_single(cfg_train_logs, prep, 1);
  // training split has 320 of the 400 records; OPE cells must reflect it
  const auto& dr_cell = train_logs_run.demos[0].learners[0].cells[1];
  REQUIRE(dr_cell.metric == "dr");
  CHECK(dr_cell.n_effective == 320);
  const auto& default_dr = default_run.demos[0].learners[0].cells[1];
  CHECK(default_dr.n_effective == 80);

  auto cfg_holdout = cfg;
  cfg_holdout.ope.dr_holdout = true;
  const auto holdout_run = run_single(cfg_holdout, prep, 1);
  CHECK(holdout_run.demos[0].learners[0].cells[1].n_effective == 40);

  auto cfg_exact = cfg;
  cfg_exact.ope.ncis_exact_target = true;
  const auto exact_run = run_single(cfg_exact, prep, 1);
  const auto& ncis_exact = exact_run.demos[0].learners[0].cells[2];
  const auto& ncis_fitted = default_run.demos[0].learners[0].cells[2];
  REQUIRE(ncis_exact.metric == "ncis");
  CHECK(ncis_exact.ok());
  CHECK(ncis_fitted.ok());
}

TEST_CASE("policy artifacts are captured when requested") {
  auto cfg = small_synthetic_config();
  cfg.seeds = {1};
  cfg.save_policies = true;
  const auto prep = prepare_data(cfg);
  const auto result = run_single(cfg, prep, 1);
  REQUIRE(result.policy_artifacts.size() == 2);  // one per learner
  for (const auto& [name, artifact] : result.policy_artifacts) {
    CHECK(name.find("seed1") != std::string::npos);
    CHECK(load_policy_artifact(artifact) != nullptr);
  }
}
