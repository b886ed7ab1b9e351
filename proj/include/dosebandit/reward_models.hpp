#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dosebandit/arm.hpp"
#include "dosebandit/linear_model.hpp"
#include "dosebandit/logging.hpp"

namespace dosebandit {

// Per-arm reward estimates rho_k(x), each a logistic model fit on the
// interactions where that arm was logged. An arm never observed in the log
// gets the constant-zero model (nullopt) and a warning.
struct RewardModels {
  std::array<std::optional<LinearModel>, kNumArms> models;
  std::vector<std::string> warnings;

  double predict(Arm k, const FeatureVector& x) const {
    const auto& m = models[idx(k)];
    return m ? predict_binary(*m, x) : 0.0;
  }
};

inline RewardModels fit_reward_models(std::span<const LoggedInteraction> logs,
                                      const TrainConfig& cfg) {
  RewardModels out;
  for (int k = 0; k < kNumArms; ++k) {
    std::vector<WeightedExample> examples;
    for (const auto& it : logs) {
      if (idx(it.a) != k) continue;
      examples.push_back({it.x, it.r > 0.5 ? 1 : 0, 1.0});
    }
    if (examples.empty()) {
      out.warnings.push_back(std::string("arm ") + arm_name(arm_from_index(k)) +
                             " never observed; using constant-zero reward model");
      continue;
    }
    out.models[k] = fit_binary(examples, cfg);
  }
  return out;
}

}  // namespace dosebandit
