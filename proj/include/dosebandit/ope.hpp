#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dosebandit/cohort.hpp"
#include "dosebandit/linear_model.hpp"
#include "dosebandit/logging.hpp"
#include "dosebandit/policy.hpp"
#include "dosebandit/reward_models.hpp"
#include "dosebandit/rng.hpp"

namespace dosebandit {

// An estimated expected reward. Degenerate inputs an estimator can detect
// (nothing accepted, all weights zero) are reported through `error` rather
// than thrown, so a harness can record the cell and move on.
struct ValueEstimate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  long n_effective = 0;
  std::string estimator;
  std::string error;

  bool ok() const { return error.empty(); }
};

// Action-distribution view of a target policy, for estimators that only need
// probabilities over encoded contexts.
using ArmDistributionFn = std::function<ArmDistribution(const FeatureVector&)>;

inline ArmDistributionFn distribution_fn(const Policy& policy) {
  return [&policy](const FeatureVector& x) {
    return policy.action_distribution(Context{&x, nullptr});
  };
}

// Keep an interaction iff the target chooses the logged arm at that context
// (one-hot targets reduce to their argmax; stochastic targets draw with the
// supplied seed). The estimate is the plain mean reward over the kept set.
inline ValueEstimate evaluate_rejection_sampling(std::span<const LoggedInteraction> logs,
                                                 const Policy& target, std::uint64_t seed) {
  Rng rng(seed);
  double sum = 0.0;
  long kept = 0;
  for (const auto& it : logs) {
    const ArmDistribution dist = target.action_distribution(Context{&it.x, nullptr});
    if (sample_arm(dist, rng) != it.a) continue;
    sum += it.r;
    ++kept;
  }
  ValueEstimate est;
  est.estimator = "rejection_sampling";
  est.n_effective = kept;
  if (kept == 0) {
    est.error = "no interactions accepted";
    return est;
  }
  est.mean = sum / static_cast<double>(kept);
  return est;
}

// mean_i [ sum_k pi(k|x_i) rho_k(x_i) + pi(a_i|x_i)/p_i * (r_i - rho_{a_i}(x_i)) ]
// Unbiased when either the reward models or the propensities are right.
inline ValueEstimate evaluate_dr(std::span<const LoggedInteraction> logs, const Policy& target,
                                 const RewardModels& reward_models) {
  ValueEstimate est;
  est.estimator = "dr";
  est.n_effective = static_cast<long>(logs.size());
  if (logs.empty()) {
    est.error = "empty log";
    return est;
  }
  double sum = 0.0;
  for (const auto& it : logs) {
    if (it.p <= 0.0) throw std::domain_error("evaluate_dr: propensity must be positive");
    const ArmDistribution pi = target.action_distribution(Context{&it.x, nullptr});
    double term = 0.0;
    for (int k = 0; k < kNumArms; ++k) {
      term += pi[k] * reward_models.predict(arm_from_index(k), it.x);
    }
    const double rho_a = reward_models.predict(it.a, it.x);
    term += pi[idx(it.a)] / it.p * (it.r - rho_a);
    sum += term;
  }
  est.mean = sum / static_cast<double>(logs.size());
  return est;
}

// Normalized capped importance sampling: w_i = min(pi(a_i|x_i)/p_i, cap),
// estimate = sum w r / sum w. Bounded by [min r, max r] whenever any weight
// is nonzero.
inline ValueEstimate evaluate_ncis(std::span<const LoggedInteraction> logs,
                                   const ArmDistributionFn& target_dist, double cap) {
  if (cap <= 0.0) throw std::domain_error("evaluate_ncis: cap must be positive");
  ValueEstimate est;
  est.estimator = "ncis";
  est.n_effective = static_cast<long>(logs.size());
  double num = 0.0, denom = 0.0;
  for (const auto& it : logs) {
    if (it.p <= 0.0) throw std::domain_error("evaluate_ncis: propensity must be positive");
    const ArmDistribution pi = target_dist(it.x);
    const double w = std::min(pi[idx(it.a)] / it.p, cap);
    num += w * it.r;
    denom += w;
  }
  if (denom <= 0.0) {
    est.error = "all importance weights are zero";
    return est;
  }
  est.mean = num / denom;
  return est;
}

// Approximates a target policy's action distribution the way an external
// evaluator would have to: fit a softmax to the arms the target picks over
// the evaluation contexts.
struct TargetDistributionModel {
  SoftmaxModel model;
  std::vector<std::string> warnings;

  ArmDistribution operator()(const FeatureVector& x) const {
    const auto p = predict_softmax(model, x);
    return {p[0], p[1], p[2]};
  }
};

inline TargetDistributionModel fit_target_distribution(const Policy& target,
                                                       std::span<const FeatureVector> contexts,
                                                       std::uint64_t seed,
                                                       const TrainConfig& cfg) {
  if (contexts.empty()) {
    throw std::invalid_argument("fit_target_distribution: no contexts");
  }
  Rng rng(seed);
  std::vector<WeightedExample> examples;
  examples.reserve(contexts.size());
  std::array<long, kNumArms> counts{};
  for (const auto& x : contexts) {
    const Arm a = target.act(Context{&x, nullptr}, rng);
    ++counts[idx(a)];
    examples.push_back({x, idx(a), 1.0});
  }
  TargetDistributionModel out;
  const long observed_classes =
      (counts[0] > 0 ? 1 : 0) + (counts[1] > 0 ? 1 : 0) + (counts[2] > 0 ? 1 : 0);
  if (observed_classes < 2) {
    out.warnings.push_back("target chose a single arm on every context; fit is degenerate");
  }
  out.model = fit_softmax(examples, kNumArms, cfg);
  return out;
}

// Exact expected reward of a target over a log's contexts, using the truth
// the log keeps aside from learners.
inline ValueEstimate oracle_value(const Policy& target, const LogDataset& logs) {
  ValueEstimate est;
  est.estimator = "oracle";
  est.n_effective = static_cast<long>(logs.size());
  if (logs.size() == 0) {
    est.error = "empty log";
    return est;
  }
  const auto truth = logs.hidden_truth_for_oracle();
  double sum = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const auto& x = logs.interactions()[i].x;
    sum += target.action_distribution(Context{&x, nullptr})[idx(truth[i])];
  }
  est.mean = sum / static_cast<double>(logs.size());
  return est;
}

// Exact expected reward: the probability mass the target puts on each
// record's true arm, averaged over the cohort. No sampling involved, so
// deterministic targets give exactly (#matches)/n.
inline ValueEstimate oracle_value(const Policy& target, const EncodedCohort& cohort) {
  ValueEstimate est;
  est.estimator = "oracle";
  est.n_effective = static_cast<long>(cohort.size());
  if (cohort.size() == 0) {
    est.error = "empty cohort";
    return est;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const Context ctx{&cohort.contexts[i], cohort.record_at(i)};
    sum += target.action_distribution(ctx)[idx(cohort.true_arms[i])];
  }
  est.mean = sum / static_cast<double>(cohort.size());
  return est;
}

}  // namespace dosebandit
