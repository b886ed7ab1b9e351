#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dosebandit/linear_model.hpp"
#include "dosebandit/logging.hpp"
#include "dosebandit/policy.hpp"
#include "dosebandit/reward_models.hpp"

namespace dosebandit {

// n x K doubly robust per-arm reward targets.
struct DRScoreMatrix {
  std::vector<std::array<double, kNumArms>> rows;

  std::size_t size() const { return rows.size(); }
};

// d_ik = rho_k(x_i) + 1{a_i = k} * (r_i - rho_k(x_i)) / p_i.
// The indicator keeps every off-logged-arm entry exactly equal to the model
// value; only the logged arm carries the propensity-corrected residual.
inline DRScoreMatrix dr_score_matrix(std::span<const LoggedInteraction> logs,
                                     const RewardModels& reward_models) {
  DRScoreMatrix m;
  m.rows.reserve(logs.size());
  for (const auto& it : logs) {
    if (it.p <= 0.0) throw std::domain_error("dr_score_matrix: propensity must be positive");
    std::array<double, kNumArms> row{};
    for (int k = 0; k < kNumArms; ++k) {
      double d = reward_models.predict(arm_from_index(k), it.x);
      if (idx(it.a) == k) d += (it.r - d) / it.p;
      row[k] = d;
    }
    m.rows.push_back(row);
  }
  return m;
}

// Cost-sensitive learner on DR targets. Stage 1 fits the per-arm reward
// models on observed-arm subsets; stage 2 builds the score matrix; stage 3
// fits one scoring regressor per arm by the clipped-target reduction
// (label 1{d > 1/2}, weight |d - 1/2|, the same trick the offset reduction
// uses), since d_ik can leave [0,1]. The policy is argmax_k g_k(x).
struct DRPolicyModel {
  RewardModels reward_models;
  std::array<LinearModel, kNumArms> score_models;
  std::vector<std::string> warnings;
};

inline DRPolicyModel train_dr_policy(std::span<const LoggedInteraction> logs,
                                     const TrainConfig& cfg) {
  if (logs.empty()) throw std::invalid_argument("train_dr_policy: empty log");
  const std::size_t d = logs[0].x.size();
  DRPolicyModel model;
  model.reward_models = fit_reward_models(logs, cfg);
  model.warnings = model.reward_models.warnings;

  const DRScoreMatrix targets = dr_score_matrix(logs, model.reward_models);
  for (int k = 0; k < kNumArms; ++k) {
    std::vector<WeightedExample> examples;
    examples.reserve(logs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logs.size(); ++i) {
      const double t = targets.rows[i][k];
      const double w = std::abs(t - 0.5);
      examples.push_back({logs[i].x, t > 0.5 ? 1 : 0, w});
      total += w;
    }
    if (total <= 0.0) {
      model.warnings.push_back(std::string("score model for arm ") +
                               arm_name(arm_from_index(k)) +
                               " has no weighted targets; using zero model");
      model.score_models[k].weights.assign(d, 0.0);
      continue;
    }
    model.score_models[k] = fit_binary(examples, cfg);
  }
  return model;
}

// Ties break toward the lowest arm index.
inline Arm predict_dr_policy(const DRPolicyModel& m, const FeatureVector& x) {
  int best = 0;
  double best_score = predict_binary(m.score_models[0], x);
  for (int k = 1; k < kNumArms; ++k) {
    const double s = predict_binary(m.score_models[k], x);
    if (s > best_score) {
      best = k;
      best_score = s;
    }
  }
  return arm_from_index(best);
}

class DRPolicy final : public Policy {
 public:
  explicit DRPolicy(DRPolicyModel model) : model_(std::move(model)) {}
  std::string name() const override { return "dr_policy"; }
  ArmDistribution action_distribution(const Context& ctx) const override {
    if (ctx.features == nullptr) {
      throw std::invalid_argument("dr policy needs an encoded context");
    }
    return one_hot(predict_dr_policy(model_, *ctx.features));
  }
  const DRPolicyModel& model() const { return model_; }

 private:
  DRPolicyModel model_;
};

}  // namespace dosebandit
