#include <doctest.h>

#include "dosebandit/ope.hpp"
#include "test_support.hpp"

using namespace dosebandit;
using testsupport::FunctionPolicy;

namespace {

LoggedInteraction make_log(FeatureVector x, Arm a, double r, double p) {
  LoggedInteraction it;
  it.x = std::move(x);
  it.a = a;
  it.r = r;
  it.p = p;
  return it;
}

// Deterministic policy following the synthetic cohort's own linear rule.
FunctionPolicy truth_policy(const SyntheticSpec& spec) {
  return FunctionPolicy("truth", [spec](const FeatureVector& x) {
    return one_hot(spec.optimal_arm(x));
  });
}

}  // namespace

TEST_CASE("rejection sampling averages exactly the accepted rewards") {
  // target keeps low-arm interactions only: rewards {1, 0, 1}
  const std::vector<LoggedInteraction> logs = {
      make_log({1.0}, Arm::low, 1.0, 1.0 / 3.0),
      make_log({2.0}, Arm::medium, 1.0, 1.0 / 3.0),
      make_log({3.0}, Arm::low, 0.0, 1.0 / 3.0),
      make_log({4.0}, Arm::low, 1.0, 1.0 / 3.0),
  };
  FixedArmPolicy always_low(Arm::low);
  const auto est = evaluate_rejection_sampling(logs, always_low, 1);
  CHECK(est.ok());
  CHECK(est.n_effective == 3);
  CHECK(est.mean == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("rejection sampling keeps everything when the target equals the demo") {
  const auto data = synthesize_cohort(SyntheticSpec::linear(150, 3), 12);
  const auto enc = build_encoded(data, NormalizationStats{}, FeatureLayoutKind::clinical);
  FixedArmPolicy demo(Arm::medium);
  const auto logs = log_interactions(demo, enc, 13);
  const auto est = evaluate_rejection_sampling(logs.interactions(), demo, 14);
  CHECK(est.n_effective == static_cast<long>(logs.size()));
  double mean = 0.0;
  for (const auto& it : logs.interactions()) mean += it.r;
  mean /= static_cast<double>(logs.size());
  CHECK(est.mean == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("rejection sampling reports empty acceptance instead of crashing") {
  const std::vector<LoggedInteraction> logs = {make_log({1.0}, Arm::low, 1.0, 1.0)};
  FixedArmPolicy target(Arm::high);
  const auto est = evaluate_rejection_sampling(logs, target, 3);
  CHECK_FALSE(est.ok());
  CHECK(est.n_effective == 0);
}

TEST_CASE("rejection sampling is invariant to interaction order") {
  const auto data = synthesize_cohort(SyntheticSpec::linear(500, 4), 22);
  const auto spec = SyntheticSpec::linear(500, 4);
  const auto logs = testsupport::uniform_logs(data, 23);
  const auto target = truth_policy(spec);
  const auto direct = evaluate_rejection_sampling(logs.interactions(), target, 9);
  std::vector<LoggedInteraction> shuffled(logs.interactions().begin(),
                                          logs.interactions().end());
  Rng rng(5);
  rng.shuffle(shuffled.begin(), shuffled.end());
  const auto reordered = evaluate_rejection_sampling(shuffled, target, 9);
  CHECK(direct.mean == reordered.mean);
  CHECK(direct.n_effective == reordered.n_effective);
}

TEST_CASE("rejection sampling is unbiased under uniform logging") {
  const auto spec = SyntheticSpec::linear(2000, 4);
  const auto data = synthesize_cohort(spec, 50);
  const auto target = truth_policy(spec);
  const double truth = testsupport::true_policy_value(target, data);
  double mean_of_estimates = 0.0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    const auto logs = testsupport::uniform_logs(data, 6000 + rep);
    const auto est = evaluate_rejection_sampling(logs.interactions(), target, 8000 + rep);
    REQUIRE(est.ok());
    mean_of_estimates += est.mean;
  }
  mean_of_estimates /= reps;
  CHECK(std::abs(mean_of_estimates - truth) < 0.01);
}

TEST_CASE("dr with exact reward models matches the oracle for any logging") {
  const auto spec = SyntheticSpec::clustered(400, 4);
  const auto data = synthesize_cohort(spec, 33);
  const auto enc = build_encoded(data, NormalizationStats{}, FeatureLayoutKind::clinical);
  const auto exact_models = testsupport::exact_cluster_reward_models(spec);
  const auto target = truth_policy(spec);
  const auto oracle = oracle_value(target, enc);

  // two very different logging policies, same answer
  FixedArmPolicy deterministic_demo(Arm::low);
  RandomPolicy uniform_demo;
  for (const Policy* demo :
       {static_cast<const Policy*>(&deterministic_demo), static_cast<const Policy*>(&uniform_demo)}) {
    const auto logs = log_interactions(*demo, enc, 34);
    const auto est = evaluate_dr(logs.interactions(), target, exact_models);
    REQUIRE(est.ok());
    CHECK(est.mean == doctest::Approx(oracle.mean).epsilon(1e-12));
  }
}

TEST_CASE("dr with a zero reward model reduces to IPS on a frozen fixture") {
  const std::vector<LoggedInteraction> logs = {
      make_log({1.0}, Arm::low, 1.0, 0.5),    make_log({2.0}, Arm::medium, 0.0, 0.25),
      make_log({3.0}, Arm::high, 1.0, 0.125), make_log({4.0}, Arm::low, 0.0, 1.0),
      make_log({5.0}, Arm::medium, 1.0, 0.5),
  };
  // target: medium on x < 2.5, else high
  const FunctionPolicy target("step", [](const FeatureVector& x) {
    return one_hot(x[0] < 2.5 ? Arm::medium : Arm::high);
  });
  const RewardModels zero_models;
  const auto est = evaluate_dr(logs, target, zero_models);
  // hand-computed IPS: sum pi(a_i|x_i) r_i / p_i over the five interactions
  //   i=0: pi(low)=0 -> 0;        i=1: pi(medium)=1, r=0 -> 0
  //   i=2: pi(high)=1, r=1, p=.125 -> 8;  i=3: 0;  i=4: pi(medium)=0 (x>2.5) -> 0
  CHECK(est.mean == doctest::Approx(8.0 / 5.0).epsilon(1e-15));
}

TEST_CASE("dr with fitted models stays unbiased under uniform logging") {
  const auto spec = SyntheticSpec::clustered(2000, 4);
  const auto data = synthesize_cohort(spec, 60);
  const auto target = truth_policy(spec);
  const double truth = testsupport::true_policy_value(target, data);
  TrainConfig quick;
  quick.iterations = 150;
  quick.learning_rate = 0.5;
  double mean_of_estimates = 0.0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    const auto logs = testsupport::uniform_logs(data, 9000 + rep);
    const auto models = fit_reward_models(logs.interactions(), quick);
    const auto est = evaluate_dr(logs.interactions(), target, models);
    REQUIRE(est.ok());
    mean_of_estimates += est.mean;
  }
  mean_of_estimates /= reps;
  CHECK(std::abs(mean_of_estimates - truth) < 0.02);
}

TEST_CASE("dr rejects non-positive propensities") {
  const std::vector<LoggedInteraction> logs = {make_log({1.0}, Arm::low, 1.0, 0.0)};
  const RewardModels zero_models;
  FixedArmPolicy target(Arm::low);
  CHECK_THROWS_AS(evaluate_dr(logs, target, zero_models), std::domain_error);
}

TEST_CASE("ncis cancels weights when target and demo distributions agree") {
  const auto data = synthesize_cohort(SyntheticSpec::linear(300, 3), 70);
  const auto logs = testsupport::uniform_logs(data, 71);
  const ArmDistributionFn uniform_dist = [](const FeatureVector&) {
    return ArmDistribution{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  };
  double mean = 0.0;
  for (const auto& it : logs.interactions()) mean += it.r;
  mean /= static_cast<double>(logs.size());
  const auto est = evaluate_ncis(logs.interactions(), uniform_dist, 100.0);
  REQUIRE(est.ok());
  CHECK(est.mean == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("ncis with a deterministic target matching every logged arm") {
  // uniform propensities 1/3, target one-hot on the logged arm: w = 3 for all
  std::vector<LoggedInteraction> logs;
  Rng rng(72);
  double mean = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double r = rng.next_index(2) ? 1.0 : 0.0;
    logs.push_back(make_log({static_cast<double>(i)}, Arm::medium, r, 1.0 / 3.0));
    mean += r;
  }
  mean /= 100.0;
  FixedArmPolicy target(Arm::medium);
  const auto est = evaluate_ncis(logs, distribution_fn(target), 100.0);
  REQUIRE(est.ok());
  CHECK(est.mean == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("ncis returns exactly one when every reward is one") {
  Rng rng(73);
  std::vector<LoggedInteraction> logs;
  for (int i = 0; i < 50; ++i) {
    logs.push_back(make_log({rng.next_gaussian()}, arm_from_index(rng.next_index(3)), 1.0,
                            0.1 + rng.next_double() * 0.9));
  }
  const ArmDistributionFn lopsided = [](const FeatureVector& x) {
    const double p = sigmoid(x[0]);
    return ArmDistribution{p / 2, p / 2, 1.0 - p};
  };
  const auto est = evaluate_ncis(logs, lopsided, 2.0);
  REQUIRE(est.ok());
  CHECK(est.mean == 1.0);
}

TEST_CASE("ncis weights respect the cap and the estimate stays in range") {
  Rng rng(74);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LoggedInteraction> logs;
    for (int i = 0; i < 40; ++i) {
      logs.push_back(make_log({rng.next_gaussian()}, arm_from_index(rng.next_index(3)),
                              rng.next_index(2) ? 1.0 : 0.0,
                              0.02 + rng.next_double() * 0.98));
    }
    const double cap = 0.5 + rng.next_double() * 5.0;
    const ArmDistributionFn dist = [](const FeatureVector& x) {
      const double p = sigmoid(x[0] * 2.0);
      return ArmDistribution{p, (1.0 - p) / 2.0, (1.0 - p) / 2.0};
    };
    // independent recomputation of the normalized capped mean
    double num = 0.0, denom = 0.0;
    for (const auto& it : logs) {
      const double w = std::min(dist(it.x)[idx(it.a)] / it.p, cap);
      CHECK(w >= 0.0);
      CHECK(w <= cap);
      num += w * it.r;
      denom += w;
    }
    const auto est = evaluate_ncis(logs, dist, cap);
    REQUIRE(est.ok());
    CHECK(est.mean == doctest::Approx(num / denom).epsilon(1e-12));
    CHECK(est.mean >= 0.0);
    CHECK(est.mean <= 1.0);
  }
}

TEST_CASE("ncis reports degenerate weights instead of crashing") {
  const std::vector<LoggedInteraction> logs = {make_log({1.0}, Arm::low, 1.0, 0.5)};
  FixedArmPolicy target(Arm::high);  // zero mass on every logged arm
  const auto est = evaluate_ncis(logs, distribution_fn(target), 10.0);
  CHECK_FALSE(est.ok());
  CHECK_THROWS_AS(evaluate_ncis(logs, distribution_fn(target), -1.0), std::domain_error);
}

TEST_CASE("ncis with the exact target distribution is nearly unbiased") {
  const auto spec = SyntheticSpec::linear(2000, 4);
  const auto data = synthesize_cohort(spec, 80);
  const auto target = truth_policy(spec);
  const double truth = testsupport::true_policy_value(target, data);
  double mean_of_estimates = 0.0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    const auto logs = testsupport::uniform_logs(data, 11000 + rep);
    const auto est = evaluate_ncis(logs.interactions(), distribution_fn(target), 100.0);
    REQUIRE(est.ok());
    CHECK(est.mean >= 0.0);
    CHECK(est.mean <= 1.0);
    mean_of_estimates += est.mean;
  }
  mean_of_estimates /= reps;
  CHECK(std::abs(mean_of_estimates - truth) < 0.02);
}

TEST_CASE("fitted target distribution concentrates on a constant target") {
  std::vector<FeatureVector> contexts(60, FeatureVector{1.0, 1.0});
  FixedArmPolicy target(Arm::medium);
  TrainConfig cfg;
  cfg.iterations = 5000;
  cfg.l2 = 0.0;
  const auto fitted = fit_target_distribution(target, contexts, 5, cfg);
  CHECK_FALSE(fitted.warnings.empty());  // single-class fit is flagged, not fatal
  CHECK(fitted(contexts[0])[idx(Arm::medium)] >= 0.99);
}

TEST_CASE("fitted target distribution recovers uniform sampling") {
  std::vector<FeatureVector> contexts(3000, FeatureVector{1.0});
  RandomPolicy target;
  TrainConfig cfg;
  cfg.iterations = 2000;
  const auto fitted = fit_target_distribution(target, contexts, 6, cfg);
  const auto dist = fitted(contexts[0]);
  for (const double p : dist) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(0.15));
  double sum = 0.0;
  for (const double p : dist) sum += p;
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("fitted target distribution sums to one on every context") {
  const auto spec = SyntheticSpec::clustered(400, 4);
  const auto data = synthesize_cohort(spec, 90);
  const auto target = truth_policy(spec);
  TrainConfig cfg;
  cfg.iterations = 300;
  const auto fitted = fit_target_distribution(target, data.synthetic_contexts, 7, cfg);
  for (const auto& x : data.synthetic_contexts) {
    const auto dist = fitted(x);
    double sum = 0.0;
    for (const double p : dist) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("oracle value of the uniform policy is exactly one third") {
  const auto data = synthesize_cohort(SyntheticSpec::linear(777, 3), 95);
  const auto enc = build_encoded(data, NormalizationStats{}, FeatureLayoutKind::clinical);
  RandomPolicy uniform;
  const auto est = oracle_value(uniform, enc);
  CHECK(est.mean == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(est.n_effective == 777);
}

TEST_CASE("oracle value over a log matches the cohort it was drawn from") {
  const auto spec = SyntheticSpec::clustered(300, 4);
  const auto data = synthesize_cohort(spec, 96);
  const auto enc = build_encoded(data, NormalizationStats{}, FeatureLayoutKind::clinical);
  RandomPolicy demo;
  const auto logs = log_interactions(demo, enc, 97);
  const auto target = truth_policy(spec);
  // the log covers the same contexts with the same hidden truth
  CHECK(oracle_value(target, logs).mean ==
        doctest::Approx(oracle_value(target, enc).mean).epsilon(1e-15));
}

TEST_CASE("oracle value counts deterministic agreement exactly") {
  // force agreement on exactly 624 of 1000 records
  CohortDataset data;
  data.provenance = Provenance::synthetic;
  for (int i = 0; i < 1000; ++i) {
    data.synthetic_contexts.push_back({static_cast<double>(i)});
    data.synthetic_optimal.push_back(i < 624 ? Arm::low : Arm::high);
  }
  const auto enc = build_encoded(data, NormalizationStats{}, FeatureLayoutKind::clinical);
  FixedArmPolicy target(Arm::low);
  const auto est = oracle_value(target, enc);
  CHECK(est.mean == 0.624);
}
