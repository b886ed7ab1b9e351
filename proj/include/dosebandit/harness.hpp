#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dosebandit/cohort.hpp"
#include "dosebandit/dosing.hpp"
#include "dosebandit/dr_policy.hpp"
#include "dosebandit/errors.hpp"
#include "dosebandit/logging.hpp"
#include "dosebandit/model_io.hpp"
#include "dosebandit/offset_tree.hpp"
#include "dosebandit/ope.hpp"
#include "dosebandit/table_parse.hpp"

namespace dosebandit {

// ---------------------------------------------------------------------------
// Configuration

struct OpeOptions {
  double ncis_cap = 100.0;
  // fit DR reward models on even-indexed interactions and average the DR
  // terms over the odd-indexed rest, instead of fitting on the full log
  bool dr_holdout = false;
  // reuse the demo's training-split log for OPE instead of fresh test logs
  bool logs_on_train = false;
  // hand NCIS the target's exact distribution instead of a fitted softmax
  bool ncis_exact_target = false;
};

// Everything a run needs; a run is reproducible from this alone.
struct ExperimentConfig {
  std::string table_path;
  std::string schema_path;
  std::optional<SyntheticSpec> synthetic;
  std::uint64_t synthetic_seed = 42;

  double split_ratio = 0.8;
  std::vector<std::uint64_t> seeds;  // empty means 1..30
  std::vector<std::string> demos = {"random", "wcda", "wpda"};
  std::vector<std::string> learners = {"offset_tree", "dr_policy"};
  std::vector<std::string> estimators = {"rejection_sampling", "dr", "ncis"};

  TrainConfig train;
  OpeOptions ope;

  std::string wcda_coefficients;
  std::string wpda_coefficients;
  std::string output_dir = "out";
  bool save_policies = false;

  std::vector<std::uint64_t> effective_seeds() const {
    if (!seeds.empty()) return seeds;
    std::vector<std::uint64_t> s(30);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = i + 1;
    return s;
  }
};

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "linear");
  const auto count = j.value("count", std::size_t{1000});
  const auto dim = j.value("dim", std::size_t{4});
  if (kind == "fixed") {
    return SyntheticSpec::fixed(count, dim, arm_from_index(j.value("arm", 0)));
  }
  if (kind == "clustered") {
    return SyntheticSpec::clustered(count, dim, j.value("separation", 4.0),
                                    j.value("sigma", 0.5));
  }
  if (kind == "linear") return SyntheticSpec::linear(count, dim);
  throw ConfigError("unknown synthetic cohort kind: " + kind);
}

inline nlohmann::json synthetic_spec_to_json(const SyntheticSpec& s) {
  nlohmann::json j;
  switch (s.kind) {
    case SyntheticSpec::Kind::fixed:
      j["kind"] = "fixed";
      j["arm"] = idx(s.fixed_arm);
      break;
    case SyntheticSpec::Kind::linear:
      j["kind"] = "linear";
      break;
    case SyntheticSpec::Kind::clustered:
      j["kind"] = "clustered";
      j["separation"] = s.cluster_separation;
      j["sigma"] = s.cluster_sigma;
      break;
  }
  j["count"] = s.count;
  j["dim"] = s.dim;
  return j;
}

// CLI shorthand, e.g. "clustered:n=2000,d=4,sep=4,sigma=0.5" or
// "fixed:n=100,d=4,arm=1" or "linear:n=500,d=6".
inline SyntheticSpec parse_synthetic_spec(const std::string& text) {
  const auto colon = text.find(':');
  nlohmann::json j;
  j["kind"] = text.substr(0, colon == std::string::npos ? text.size() : colon);
  if (colon != std::string::npos) {
    std::stringstream rest(text.substr(colon + 1));
    std::string kv;
    while (std::getline(rest, kv, ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("bad synthetic spec token: " + kv);
      const std::string key = kv.substr(0, eq);
      const std::string value = kv.substr(eq + 1);
      if (key == "n") j["count"] = std::stoull(value);
      else if (key == "d") j["dim"] = std::stoull(value);
      else if (key == "arm") j["arm"] = std::stoi(value);
      else if (key == "sep") j["separation"] = std::stod(value);
      else if (key == "sigma") j["sigma"] = std::stod(value);
      else throw ConfigError("unknown synthetic spec key: " + key);
    }
  }
  return synthetic_spec_from_json(j);
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("data")) {
    cfg.table_path = j["data"].value("table", "");
    cfg.schema_path = j["data"].value("schema", "");
  }
  if (j.contains("synthetic")) {
    cfg.synthetic = synthetic_spec_from_json(j["synthetic"]);
    cfg.synthetic_seed = j["synthetic"].value("seed", std::uint64_t{42});
  }
  cfg.split_ratio = j.value("split_ratio", 0.8);
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("demos")) cfg.demos = j["demos"].get<std::vector<std::string>>();
  if (j.contains("learners")) cfg.learners = j["learners"].get<std::vector<std::string>>();
  if (j.contains("estimators")) cfg.estimators = j["estimators"].get<std::vector<std::string>>();
  if (j.contains("train")) {
    const auto& t = j["train"];
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.iterations = t.value("iterations", cfg.train.iterations);
    cfg.train.l2 = t.value("l2", cfg.train.l2);
    cfg.train.tolerance = t.value("tolerance", cfg.train.tolerance);
  }
  if (j.contains("ope")) {
    const auto& o = j["ope"];
    cfg.ope.ncis_cap = o.value("ncis_cap", cfg.ope.ncis_cap);
    cfg.ope.dr_holdout = o.value("dr_holdout", cfg.ope.dr_holdout);
    cfg.ope.logs_on_train = o.value("logs", std::string("test")) == "train";
    cfg.ope.ncis_exact_target = o.value("ncis_exact_target", cfg.ope.ncis_exact_target);
  }
  if (j.contains("coefficients")) {
    cfg.wcda_coefficients = j["coefficients"].value("wcda", "");
    cfg.wpda_coefficients = j["coefficients"].value("wpda", "");
  }
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.save_policies = j.value("save_policies", cfg.save_policies);
  return cfg;
}

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  if (!cfg.table_path.empty()) {
    j["data"] = {{"table", cfg.table_path}, {"schema", cfg.schema_path}};
  }
  if (cfg.synthetic) {
    j["synthetic"] = synthetic_spec_to_json(*cfg.synthetic);
    j["synthetic"]["seed"] = cfg.synthetic_seed;
  }
  j["split_ratio"] = cfg.split_ratio;
  j["seeds"] = cfg.effective_seeds();
  j["demos"] = cfg.demos;
  j["learners"] = cfg.learners;
  j["estimators"] = cfg.estimators;
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"iterations", cfg.train.iterations},
                {"l2", cfg.train.l2},
                {"tolerance", cfg.train.tolerance}};
  j["ope"] = {{"ncis_cap", cfg.ope.ncis_cap},
              {"dr_holdout", cfg.ope.dr_holdout},
              {"logs", cfg.ope.logs_on_train ? "train" : "test"},
              {"ncis_exact_target", cfg.ope.ncis_exact_target}};
  if (!cfg.wcda_coefficients.empty() || !cfg.wpda_coefficients.empty()) {
    j["coefficients"] = {{"wcda", cfg.wcda_coefficients}, {"wpda", cfg.wpda_coefficients}};
  }
  j["output_dir"] = cfg.output_dir;
  j["save_policies"] = cfg.save_policies;
  return j;
}

// ---------------------------------------------------------------------------
// Per-seed results

struct EstimateCell {
  std::string metric;  // estimator name or "oracle"
  double value = std::numeric_limits<double>::quiet_NaN();
  long n_effective = 0;
  std::string error;

  bool ok() const { return error.empty(); }
};

struct LearnerResult {
  std::string learner;
  std::vector<EstimateCell> cells;  // estimators in config order, then oracle
};

struct DemoResult {
  std::string demo;
  EstimateCell demo_oracle;
  std::vector<LearnerResult> learners;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<DemoResult> demos;
  std::vector<std::pair<std::string, nlohmann::json>> policy_artifacts;
  std::string error;  // whole-seed failure
};

// The dataset and coefficient tables, loaded once per suite.
struct PreparedData {
  CohortDataset data;
  std::optional<DosingCoefficients> wcda;
  std::optional<DosingCoefficients> wpda;
};

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData prep;
  if (cfg.synthetic) {
    prep.data = synthesize_cohort(*cfg.synthetic, cfg.synthetic_seed);
  } else {
    if (cfg.table_path.empty() || cfg.schema_path.empty()) {
      throw ConfigError("config needs either a synthetic spec or table+schema paths");
    }
    std::ifstream schema_in(cfg.schema_path);
    if (!schema_in) throw ConfigError("cannot open schema config: " + cfg.schema_path);
    nlohmann::json schema_json;
    schema_in >> schema_json;
    const SchemaConfig schema = SchemaConfig::from_json(schema_json);
    std::ifstream table_in(cfg.table_path);
    if (!table_in) throw ConfigError("cannot open cohort table: " + cfg.table_path);
    prep.data = parse_dataset(table_in, schema).data;
  }

  const bool wants_wcda = std::count(cfg.demos.begin(), cfg.demos.end(), "wcda") > 0;
  const bool wants_wpda = std::count(cfg.demos.begin(), cfg.demos.end(), "wpda") > 0;
  if (prep.data.provenance == Provenance::synthetic && (wants_wcda || wants_wpda)) {
    throw ConfigError("wcda/wpda demos need raw patient records; synthetic cohorts only support the random demo");
  }
  if (wants_wcda) {
    if (cfg.wcda_coefficients.empty()) throw ConfigError("wcda demo needs a coefficient file");
    prep.wcda = DosingCoefficients::load(cfg.wcda_coefficients);
  }
  if (wants_wpda) {
    if (cfg.wpda_coefficients.empty()) throw ConfigError("wpda demo needs a coefficient file");
    prep.wpda = DosingCoefficients::load(cfg.wpda_coefficients);
  }
  return prep;
}

namespace detail {

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent stream per (run seed, demo, role, learner); keyed by names so
// adding or removing list entries does not shift other streams.
inline std::uint64_t stream_seed(std::uint64_t seed, const std::string& demo, int role,
                                 const std::string& learner = "") {
  return derive_seed(seed, fnv1a(learner, fnv1a(demo) ^ static_cast<std::uint64_t>(role)));
}

inline std::unique_ptr<Policy> make_demo_policy(const std::string& name,
                                                const PreparedData& prep,
                                                const NormalizationStats& stats) {
  if (name == "random") return std::make_unique<RandomPolicy>();
  const ContinuousImputation imput = ContinuousImputation::from_stats(stats);
  if (name == "wcda") {
    if (!prep.wcda) throw ConfigError("wcda coefficients not loaded");
    return std::make_unique<DoserPolicy>("wcda", &wcda_dose, *prep.wcda, imput);
  }
  if (name == "wpda") {
    if (!prep.wpda) throw ConfigError("wpda coefficients not loaded");
    return std::make_unique<DoserPolicy>("wpda", &wpda_dose, *prep.wpda, imput);
  }
  throw ConfigError("unknown demo policy: " + name);
}

inline EstimateCell cell_from(const ValueEstimate& est, const std::string& metric) {
  EstimateCell c;
  c.metric = metric;
  c.value = est.mean;
  c.n_effective = est.n_effective;
  c.error = est.error;
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One seeded experiment: split, log the demo on the training side, learn,
// then score everything on the test side (demo logs regenerated there for
// OPE unless configured otherwise). Any per-cell failure is recorded in the
// cell and the run continues.
inline RunResult run_single(const ExperimentConfig& cfg, const PreparedData& prep,
                            std::uint64_t seed) {
  RunResult result;
  result.seed = seed;

  const auto [train_ds, test_ds] = split(prep.data, cfg.split_ratio, seed);
  NormalizationStats stats;
  if (prep.data.provenance == Provenance::real) stats = fit_stats(train_ds);
  const FeatureLayoutKind layout = FeatureLayoutKind::clinical;
  const EncodedCohort enc_train = build_encoded(train_ds, stats, layout);
  const EncodedCohort enc_test = build_encoded(test_ds, stats, layout);

  for (const auto& demo_name : cfg.demos) {
    DemoResult demo_result;
    demo_result.demo = demo_name;
    const auto demo = detail::make_demo_policy(demo_name, prep, stats);

    const LogDataset train_logs =
        log_interactions(*demo, enc_train, detail::stream_seed(seed, demo_name, 1));
    demo_result.demo_oracle = detail::cell_from(oracle_value(*demo, enc_test), "oracle");

    const LogDataset* eval_logs = &train_logs;
    LogDataset test_logs;
    if (!cfg.ope.logs_on_train) {
      test_logs = log_interactions(*demo, enc_test, detail::stream_seed(seed, demo_name, 2));
      eval_logs = &test_logs;
    }
    const EncodedCohort& eval_cohort = cfg.ope.logs_on_train ? enc_train : enc_test;

    // DR-OPE reward models depend only on the evaluation log; shared across
    // targets. With the holdout flag the models come from even-indexed
    // interactions and the estimate averages over the odd-indexed rest.
    std::vector<LoggedInteraction> fit_half, eval_half;
    RewardModels eval_reward_models;
    std::string reward_model_error;
    try {
      if (cfg.ope.dr_holdout) {
        for (std::size_t i = 0; i < eval_logs->size(); ++i) {
          (i % 2 == 0 ? fit_half : eval_half).push_back(eval_logs->interactions()[i]);
        }
        eval_reward_models = fit_reward_models(fit_half, cfg.train);
      } else {
        eval_reward_models = fit_reward_models(eval_logs->interactions(), cfg.train);
      }
    } catch (const std::exception& e) {
      reward_model_error = e.what();
    }
    const std::span<const LoggedInteraction> dr_span =
        cfg.ope.dr_holdout ? std::span<const LoggedInteraction>(eval_half)
                           : eval_logs->interactions();

    for (const auto& learner_name : cfg.learners) {
      LearnerResult lr;
      lr.learner = learner_name;
      std::unique_ptr<Policy> target;
      std::string train_error;
      try {
        if (learner_name == "offset_tree") {
          auto model = train_offset_tree(train_logs.interactions(), cfg.train);
          if (cfg.save_policies) {
            result.policy_artifacts.emplace_back(
                demo_name + "_offset_tree_seed" + std::to_string(seed),
                policy_artifact(model, layout));
          }
          target = std::make_unique<OffsetTreePolicy>(std::move(model));
        } else if (learner_name == "dr_policy") {
          auto model = train_dr_policy(train_logs.interactions(), cfg.train);
          if (cfg.save_policies) {
            result.policy_artifacts.emplace_back(
                demo_name + "_dr_policy_seed" + std::to_string(seed),
                policy_artifact(model, layout));
          }
          target = std::make_unique<DRPolicy>(std::move(model));
        } else {
          throw ConfigError("unknown learner: " + learner_name);
        }
      } catch (const std::exception& e) {
        train_error = e.what();
      }

      for (const auto& est_name : cfg.estimators) {
        EstimateCell cell;
        cell.metric = est_name;
        if (!train_error.empty()) {
          cell.error = "learner failed: " + train_error;
          lr.cells.push_back(std::move(cell));
          continue;
        }
        try {
          if (est_name == "rejection_sampling") {
            cell = detail::cell_from(
                evaluate_rejection_sampling(
                    eval_logs->interactions(), *target,
                    detail::stream_seed(seed, demo_name, 3, learner_name)),
                est_name);
          } else if (est_name == "dr") {
            if (!reward_model_error.empty()) throw ConfigError(reward_model_error);
            cell = detail::cell_from(evaluate_dr(dr_span, *target, eval_reward_models),
                                     est_name);
          } else if (est_name == "ncis") {
            if (cfg.ope.ncis_exact_target) {
              cell = detail::cell_from(
                  evaluate_ncis(eval_logs->interactions(), distribution_fn(*target),
                                cfg.ope.ncis_cap),
                  est_name);
            } else {
              const auto fitted = fit_target_distribution(
                  *target, eval_cohort.contexts,
                  detail::stream_seed(seed, demo_name, 4, learner_name), cfg.train);
              cell = detail::cell_from(
                  evaluate_ncis(eval_logs->interactions(),
                                [&fitted](const FeatureVector& x) { return fitted(x); },
                                cfg.ope.ncis_cap),
                  est_name);
            }
          } else {
            throw ConfigError("unknown estimator: " + est_name);
          }
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
        lr.cells.push_back(std::move(cell));
      }

      EstimateCell oracle_cell;
      oracle_cell.metric = "oracle";
      if (train_error.empty()) {
        oracle_cell = detail::cell_from(oracle_value(*target, enc_test), "oracle");
      } else {
        oracle_cell.error = "learner failed: " + train_error;
      }
      lr.cells.push_back(std::move(oracle_cell));
      demo_result.learners.push_back(std::move(lr));
    }
    result.demos.push_back(std::move(demo_result));
  }
  return result;
}

// Seeds are independent, so they run on a small worker pool; results land in
// seed-list order regardless of scheduling.
inline std::vector<RunResult> run_suite(const ExperimentConfig& cfg, const PreparedData& prep,
                                        unsigned jobs = 1) {
  const auto seeds = cfg.effective_seeds();
  if (seeds.empty()) throw ConfigError("run_suite: need at least one seed");
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(seeds.size()));

  std::vector<RunResult> results(seeds.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      try {
        results[i] = run_single(cfg, prep, seeds[i]);
      } catch (const std::exception& e) {
        results[i].seed = seeds[i];
        results[i].error = e.what();
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

inline std::vector<RunResult> run_suite(const ExperimentConfig& cfg, unsigned jobs = 1) {
  const PreparedData prep = prepare_data(cfg);
  return run_suite(cfg, prep, jobs);
}

// ---------------------------------------------------------------------------
// Aggregation

// Summary of one cell across seeds: mean with min/max bounds plus the
// five-number boxplot statistics (type-7 interpolated quartiles, Tukey
// whiskers at 1.5 IQR).
struct CellStats {
  std::size_t n = 0;
  std::size_t errors = 0;
  double mean = 0, lower = 0, upper = 0;
  double q1 = 0, median = 0, q3 = 0;
  double whisker_lo = 0, whisker_hi = 0;

  static CellStats from_values(std::vector<double> values, std::size_t errors = 0) {
    CellStats s;
    s.errors = errors;
    s.n = values.size();
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    double sum = 0;
    for (const double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    s.lower = values.front();
    s.upper = values.back();
    const auto quantile = [&values](double p) {
      const double pos = p * static_cast<double>(values.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, values.size() - 1);
      const double frac = pos - static_cast<double>(lo);
      return values[lo] * (1.0 - frac) + values[hi] * frac;
    };
    s.q1 = quantile(0.25);
    s.median = quantile(0.5);
    s.q3 = quantile(0.75);
    const double iqr = s.q3 - s.q1;
    const double lo_fence = s.q1 - 1.5 * iqr;
    const double hi_fence = s.q3 + 1.5 * iqr;
    s.whisker_lo = s.upper;
    s.whisker_hi = s.lower;
    for (const double v : values) {
      if (v >= lo_fence && v < s.whisker_lo) s.whisker_lo = v;
      if (v <= hi_fence && v > s.whisker_hi) s.whisker_hi = v;
    }
    return s;
  }

  nlohmann::ordered_json to_json() const {
    return {{"n", n},           {"errors", errors},   {"mean", mean},
            {"lower", lower},   {"upper", upper},     {"q1", q1},
            {"median", median}, {"q3", q3},           {"whisker_lo", whisker_lo},
            {"whisker_hi", whisker_hi}};
  }
};

struct AggregateMetric {
  std::string metric;
  CellStats stats;
};

struct AggregateLearner {
  std::string learner;
  std::vector<AggregateMetric> metrics;
};

struct AggregateDemo {
  std::string demo;
  CellStats demo_oracle;
  std::vector<AggregateLearner> learners;
};

struct AggregateReport {
  std::size_t num_seeds = 0;
  std::vector<AggregateDemo> demos;
};

inline AggregateReport aggregate(std::span<const RunResult> results) {
  std::vector<const RunResult*> usable;
  for (const auto& r : results) {
    if (r.error.empty()) usable.push_back(&r);
  }
  if (usable.empty()) throw std::runtime_error("aggregate: every seed failed");

  AggregateReport report;
  report.num_seeds = usable.size();
  const RunResult& shape = *usable.front();
  for (const auto* r : usable) {
    bool consistent = r->demos.size() == shape.demos.size();
    for (std::size_t di = 0; consistent && di < shape.demos.size(); ++di) {
      consistent = r->demos[di].learners.size() == shape.demos[di].learners.size();
      for (std::size_t li = 0; consistent && li < shape.demos[di].learners.size(); ++li) {
        consistent = r->demos[di].learners[li].cells.size() ==
                     shape.demos[di].learners[li].cells.size();
      }
    }
    if (!consistent) {
      throw std::runtime_error("aggregate: seed " + std::to_string(r->seed) +
                               " has a different result structure");
    }
  }
  for (std::size_t di = 0; di < shape.demos.size(); ++di) {
    AggregateDemo agg_demo;
    agg_demo.demo = shape.demos[di].demo;
    {
      std::vector<double> vals;
      std::size_t errs = 0;
      for (const auto* r : usable) {
        const auto& cell = r->demos[di].demo_oracle;
        if (cell.ok()) vals.push_back(cell.value);
        else ++errs;
      }
      agg_demo.demo_oracle = CellStats::from_values(std::move(vals), errs);
    }
    for (std::size_t li = 0; li < shape.demos[di].learners.size(); ++li) {
      AggregateLearner agg_learner;
      agg_learner.learner = shape.demos[di].learners[li].learner;
      for (std::size_t ci = 0; ci < shape.demos[di].learners[li].cells.size(); ++ci) {
        std::vector<double> vals;
        std::size_t errs = 0;
        for (const auto* r : usable) {
          const auto& cell = r->demos[di].learners[li].cells[ci];
          if (cell.ok()) vals.push_back(cell.value);
          else ++errs;
        }
        agg_learner.metrics.push_back(
            {shape.demos[di].learners[li].cells[ci].metric,
             CellStats::from_values(std::move(vals), errs)});
      }
      agg_demo.learners.push_back(std::move(agg_learner));
    }
    report.demos.push_back(std::move(agg_demo));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report emission

namespace detail {

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string sanitize_csv(std::string s) {
  for (auto& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

}  // namespace detail

inline std::string runs_raw_csv(std::span<const RunResult> results) {
  std::string out = "seed,demo,learner,metric,value,n_effective,error\n";
  const auto row = [&out](std::uint64_t seed, const std::string& demo,
                          const std::string& learner, const EstimateCell& cell) {
    out += std::to_string(seed);
    out += ',';
    out += demo;
    out += ',';
    out += learner;
    out += ',';
    out += cell.metric;
    out += ',';
    if (cell.ok()) out += detail::fmt17(cell.value);
    out += ',';
    out += std::to_string(cell.n_effective);
    out += ',';
    out += detail::sanitize_csv(cell.error);
    out += '\n';
  };
  for (const auto& r : results) {
    if (!r.error.empty()) {
      EstimateCell marker;
      marker.metric = "run";
      marker.error = r.error;
      row(r.seed, "-", "-", marker);
      continue;
    }
    for (const auto& demo : r.demos) {
      row(r.seed, demo.demo, "demo", demo.demo_oracle);
      for (const auto& learner : demo.learners) {
        for (const auto& cell : learner.cells) row(r.seed, demo.demo, learner.learner, cell);
      }
    }
  }
  return out;
}

// One JSON record per estimate cell (demo oracles carry policy "demo").
inline std::string estimates_jsonl(std::span<const RunResult> results) {
  std::string out;
  const auto record = [&out](std::uint64_t seed, const std::string& demo,
                             const std::string& policy, const EstimateCell& cell) {
    nlohmann::ordered_json j;
    j["estimator"] = cell.metric;
    j["policy"] = policy;
    j["demo"] = demo;
    j["seed"] = seed;
    if (cell.ok()) {
      j["mean"] = cell.value;
    } else {
      j["mean"] = nullptr;
      j["error"] = cell.error;
    }
    j["n_effective"] = cell.n_effective;
    out += j.dump();
    out += '\n';
  };
  for (const auto& r : results) {
    if (!r.error.empty()) continue;
    for (const auto& demo : r.demos) {
      record(r.seed, demo.demo, "demo", demo.demo_oracle);
      for (const auto& learner : demo.learners) {
        for (const auto& cell : learner.cells) record(r.seed, demo.demo, learner.learner, cell);
      }
    }
  }
  return out;
}

// Rebuild per-seed results from a raw CSV previously written by
// runs_raw_csv; used by the `report` subcommand to re-aggregate.
inline std::vector<RunResult> parse_runs_raw_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("raw results CSV is empty");
  std::vector<RunResult> results;
  const auto find_or_add = [](auto& vec, const std::string& name, auto make) ->
      decltype(&vec.front()) {
        for (auto& item : vec) {
          if (make(item) == name) return &item;
        }
        vec.push_back({});
        return &vec.back();
      };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    cells.resize(7);
    const std::uint64_t seed = std::stoull(cells[0]);
    RunResult* run = nullptr;
    for (auto& r : results) {
      if (r.seed == seed) run = &r;
    }
    if (run == nullptr) {
      results.push_back({});
      run = &results.back();
      run->seed = seed;
    }
    if (cells[3] == "run") {
      run->error = cells[6];
      continue;
    }
    EstimateCell parsed;
    parsed.metric = cells[3];
    parsed.value = cells[4].empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : std::stod(cells[4]);
    parsed.n_effective = std::stol(cells[5]);
    parsed.error = cells[6];
    DemoResult* demo = find_or_add(run->demos, cells[1],
                                   [](const DemoResult& d) { return d.demo; });
    if (demo->demo.empty()) demo->demo = cells[1];
    if (cells[2] == "demo") {
      demo->demo_oracle = std::move(parsed);
      continue;
    }
    LearnerResult* learner = find_or_add(demo->learners, cells[2],
                                         [](const LearnerResult& l) { return l.learner; });
    if (learner->learner.empty()) learner->learner = cells[2];
    learner->cells.push_back(std::move(parsed));
  }
  return results;
}

inline nlohmann::ordered_json table_json(const AggregateDemo& demo, std::size_t num_seeds) {
  nlohmann::ordered_json j;
  j["demo"] = demo.demo;
  j["num_seeds"] = num_seeds;
  j["demo_oracle"] = demo.demo_oracle.to_json();
  nlohmann::ordered_json cells;
  for (const auto& learner : demo.learners) {
    nlohmann::ordered_json metrics;
    for (const auto& m : learner.metrics) metrics[m.metric] = m.stats.to_json();
    cells[learner.learner] = metrics;
  }
  j["cells"] = cells;
  return j;
}

inline std::string table_csv(const AggregateDemo& demo) {
  std::string out = "metric";
  for (const auto& learner : demo.learners) {
    out += "," + learner.learner + "_mean," + learner.learner + "_lower," +
           learner.learner + "_upper";
  }
  out += '\n';
  if (demo.learners.empty()) return out;
  for (std::size_t mi = 0; mi < demo.learners.front().metrics.size(); ++mi) {
    out += demo.learners.front().metrics[mi].metric;
    for (const auto& learner : demo.learners) {
      const auto& s = learner.metrics[mi].stats;
      out += ',' + detail::fmt6(s.mean) + ',' + detail::fmt6(s.lower) + ',' +
             detail::fmt6(s.upper);
    }
    out += '\n';
  }
  out += "demo_oracle," + detail::fmt6(demo.demo_oracle.mean) + ',' +
         detail::fmt6(demo.demo_oracle.lower) + ',' + detail::fmt6(demo.demo_oracle.upper);
  out += '\n';
  return out;
}

// Writes tables_<demo>.{csv,json}, boxplot.json, and runs_raw.csv into
// out_dir. The directory is probed for writability before any summary file
// is touched; re-emitting the same report reproduces every byte.
inline std::vector<std::string> emit_report(const AggregateReport& report,
                                            std::span<const RunResult> results,
                                            const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const fs::path dir(out_dir);
  {
    const fs::path probe = dir / ".write_probe";
    std::ofstream p(probe);
    if (!p) throw std::runtime_error("output directory is not writable: " + out_dir);
    p.close();
    fs::remove(probe, ec);
  }

  std::vector<std::string> written;
  const auto write_file = [&](const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
    written.push_back(path.string());
  };

  for (const auto& demo : report.demos) {
    write_file(dir / ("tables_" + demo.demo + ".csv"), table_csv(demo));
    write_file(dir / ("tables_" + demo.demo + ".json"),
               table_json(demo, report.num_seeds).dump(2) + "\n");
  }
  nlohmann::ordered_json box;
  box["num_seeds"] = report.num_seeds;
  for (const auto& demo : report.demos) {
    nlohmann::ordered_json entry;
    entry["demo_oracle"] = demo.demo_oracle.to_json();
    for (const auto& learner : demo.learners) {
      for (const auto& m : learner.metrics) {
        entry[learner.learner][m.metric] = m.stats.to_json();
      }
    }
    box[demo.demo] = entry;
  }
  write_file(dir / "boxplot.json", box.dump(2) + "\n");
  write_file(dir / "runs_raw.csv", runs_raw_csv(results));
  write_file(dir / "estimates.jsonl", estimates_jsonl(results));
  return written;
}

}  // namespace dosebandit
