// Command-line front end: ingest a cohort table, run the experiment suite,
// or re-aggregate a previous run's raw per-seed results.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dosebandit/harness.hpp"
#include "dosebandit/table_parse.hpp"

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dosebandit::ConfigError("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

int cmd_prepare(const std::string& table, const std::string& schema, const std::string& out) {
  const auto schema_cfg = dosebandit::SchemaConfig::from_json(read_json_file(schema));
  std::ifstream in(table);
  if (!in) throw dosebandit::ConfigError("cannot open " + table);
  const auto parsed = dosebandit::parse_dataset(in, schema_cfg);
  const std::string doc = parsed.diagnostics.to_json().dump(2) + "\n";
  if (out.empty()) {
    std::cout << doc;
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    f << doc;
    std::cout << "wrote " << out << " (" << parsed.data.records.size() << " records retained)\n";
  }
  return 0;
}

int cmd_run(dosebandit::ExperimentConfig cfg, unsigned jobs) {
  const auto results = dosebandit::run_suite(cfg, jobs);
  const auto report = dosebandit::aggregate(results);
  const auto files = dosebandit::emit_report(report, results, cfg.output_dir);
  {
    std::ofstream f(std::filesystem::path(cfg.output_dir) / "config.json");
    f << dosebandit::config_to_json(cfg).dump(2) << "\n";
  }
  if (cfg.save_policies) {
    const auto dir = std::filesystem::path(cfg.output_dir) / "policies";
    std::filesystem::create_directories(dir);
    for (const auto& r : results) {
      for (const auto& [name, artifact] : r.policy_artifacts) {
        std::ofstream f(dir / (name + ".json"));
        f << artifact.dump(2) << "\n";
      }
    }
  }
  for (const auto& f : files) std::cout << "wrote " << f << "\n";
  for (const auto& demo : report.demos) {
    std::cout << demo.demo << ": demo oracle " << demo.demo_oracle.mean;
    for (const auto& learner : demo.learners) {
      for (const auto& m : learner.metrics) {
        if (m.metric == "oracle") {
          std::cout << ", " << learner.learner << " oracle " << m.stats.mean;
        }
      }
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_report(const std::string& raw_path, const std::string& out_dir) {
  std::ifstream in(raw_path);
  if (!in) throw dosebandit::ConfigError("cannot open " + raw_path);
  const auto results = dosebandit::parse_runs_raw_csv(in);
  const auto report = dosebandit::aggregate(results);
  const auto files = dosebandit::emit_report(report, results, out_dir);
  for (const auto& f : files) std::cout << "wrote " << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline contextual-bandit policy learning and evaluation for warfarin dosing"};
  app.require_subcommand(1);

  auto* prepare = app.add_subcommand("prepare", "Ingest a cohort table and print diagnostics");
  std::string prep_table, prep_schema = "data/iwpc_schema.json", prep_out;
  prepare->add_option("--table", prep_table, "cohort table (CSV or TSV)")->required();
  prepare->add_option("--schema", prep_schema, "schema config JSON");
  prepare->add_option("--out", prep_out, "write diagnostics JSON here instead of stdout");

  auto* run = app.add_subcommand("run", "Run the experiment suite");
  std::string run_config, run_table, run_schema, run_synthetic, run_out;
  std::string run_seed_list;
  unsigned run_seeds = 0, jobs = 0;
  bool save_policies = false;
  std::string ope_logs;
  run->add_option("--config", run_config, "experiment config JSON");
  run->add_option("--table", run_table, "cohort table (overrides config)");
  run->add_option("--schema", run_schema, "schema config JSON (overrides config)");
  run->add_option("--synthetic", run_synthetic,
                  "synthetic cohort spec, e.g. clustered:n=2000,d=4");
  run->add_option("--seeds", run_seeds, "use seeds 1..N");
  run->add_option("--seed-list", run_seed_list, "comma-separated seed list");
  run->add_option("--out", run_out, "output directory (overrides config)");
  run->add_option("--jobs", jobs, "worker threads (0 = hardware)");
  run->add_option("--ope-logs", ope_logs, "evaluate on 'test' (default) or 'train' logs");
  run->add_flag("--save-policies", save_policies, "serialize learned policy artifacts");

  auto* report = app.add_subcommand("report", "Re-aggregate a raw per-seed CSV");
  std::string report_raw, report_out = "out";
  report->add_option("--raw", report_raw, "runs_raw.csv from a previous run")->required();
  report->add_option("--out", report_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) return cmd_prepare(prep_table, prep_schema, prep_out);
    if (report->parsed()) return cmd_report(report_raw, report_out);

    dosebandit::ExperimentConfig cfg;
    if (!run_config.empty()) cfg = dosebandit::config_from_json(read_json_file(run_config));
    if (!run_table.empty()) cfg.table_path = run_table;
    if (!run_schema.empty()) cfg.schema_path = run_schema;
    if (!run_synthetic.empty()) {
      cfg.synthetic = dosebandit::parse_synthetic_spec(run_synthetic);
      cfg.table_path.clear();
      if (cfg.demos == std::vector<std::string>{"random", "wcda", "wpda"}) {
        cfg.demos = {"random"};  // synthetic cohorts have no raw records to dose
      }
    }
    if (run_seeds > 0) {
      cfg.seeds.clear();
      for (unsigned i = 1; i <= run_seeds; ++i) cfg.seeds.push_back(i);
    }
    if (!run_seed_list.empty()) {
      cfg.seeds.clear();
      std::stringstream ss(run_seed_list);
      std::string tok;
      while (std::getline(ss, tok, ',')) cfg.seeds.push_back(std::stoull(tok));
    }
    if (!run_out.empty()) cfg.output_dir = run_out;
    if (!ope_logs.empty()) cfg.ope.logs_on_train = ope_logs == "train";
    if (save_policies) cfg.save_policies = true;
    if (cfg.wcda_coefficients.empty()) {
      cfg.wcda_coefficients = "data/iwpc_clinical_coefficients.json";
    }
    if (cfg.wpda_coefficients.empty()) {
      cfg.wpda_coefficients = "data/iwpc_pharmacogenetic_coefficients.json";
    }
    return cmd_run(cfg, jobs);
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = e.what();
    std::cerr << err.dump() << std::endl;
    return 1;
  }
}
