#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dosebandit/dr_policy.hpp"
#include "dosebandit/errors.hpp"
#include "dosebandit/features.hpp"
#include "dosebandit/linear_model.hpp"
#include "dosebandit/offset_tree.hpp"

namespace dosebandit {

// JSON model round-trips are exact: nlohmann serializes doubles with
// shortest-round-trip formatting.

inline nlohmann::json to_json(const LinearModel& m) {
  return {{"weights", m.weights}, {"bias", m.bias}};
}

inline LinearModel linear_model_from_json(const nlohmann::json& j) {
  LinearModel m;
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  return m;
}

inline nlohmann::json to_json(const SoftmaxModel& m) {
  return {{"weights", m.weights}, {"biases", m.biases}};
}

inline SoftmaxModel softmax_model_from_json(const nlohmann::json& j) {
  SoftmaxModel m;
  m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
  m.biases = j.at("biases").get<std::vector<double>>();
  if (m.weights.size() != m.biases.size()) {
    throw ConfigError("softmax model: weights/biases class counts differ");
  }
  return m;
}

// Policy artifacts embed the model kind and the feature layout the policy
// expects, so a loaded policy can be checked against the data it is applied
// to.

inline nlohmann::json policy_artifact(const OffsetTreeModel& m, FeatureLayoutKind layout) {
  nlohmann::json j;
  j["kind"] = "offset_tree";
  j["feature_layout"] = layout_names(layout);
  j["topology"] = {idx(m.topology.order[0]), idx(m.topology.order[1]), idx(m.topology.order[2])};
  j["pair_node"] = to_json(m.pair_node);
  j["root_node"] = to_json(m.root_node);
  return j;
}

inline nlohmann::json policy_artifact(const DRPolicyModel& m, FeatureLayoutKind layout) {
  nlohmann::json j;
  j["kind"] = "dr_policy";
  j["feature_layout"] = layout_names(layout);
  nlohmann::json rewards = nlohmann::json::array();
  for (const auto& rm : m.reward_models.models) {
    rewards.push_back(rm ? to_json(*rm) : nlohmann::json(nullptr));
  }
  j["reward_models"] = rewards;
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& sm : m.score_models) scores.push_back(to_json(sm));
  j["score_models"] = scores;
  return j;
}

inline OffsetTreeModel offset_tree_from_artifact(const nlohmann::json& j) {
  if (j.at("kind") != "offset_tree") throw ConfigError("artifact is not an offset_tree policy");
  OffsetTreeModel m;
  const auto topo = j.at("topology").get<std::vector<int>>();
  if (topo.size() != kNumArms) throw ConfigError("offset_tree artifact: bad topology");
  for (int k = 0; k < kNumArms; ++k) m.topology.order[k] = arm_from_index(topo[k]);
  m.pair_node = linear_model_from_json(j.at("pair_node"));
  m.root_node = linear_model_from_json(j.at("root_node"));
  return m;
}

inline DRPolicyModel dr_policy_from_artifact(const nlohmann::json& j) {
  if (j.at("kind") != "dr_policy") throw ConfigError("artifact is not a dr policy");
  DRPolicyModel m;
  const auto& rewards = j.at("reward_models");
  if (rewards.size() != kNumArms) throw ConfigError("dr artifact: bad reward model count");
  for (int k = 0; k < kNumArms; ++k) {
    if (!rewards[k].is_null()) m.reward_models.models[k] = linear_model_from_json(rewards[k]);
  }
  const auto& scores = j.at("score_models");
  if (scores.size() != kNumArms) throw ConfigError("dr artifact: bad score model count");
  for (int k = 0; k < kNumArms; ++k) m.score_models[k] = linear_model_from_json(scores[k]);
  return m;
}

// Load either policy kind behind the shared Policy interface.
inline std::unique_ptr<Policy> load_policy_artifact(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "offset_tree") {
    return std::make_unique<OffsetTreePolicy>(offset_tree_from_artifact(j));
  }
  if (kind == "dr_policy") {
    return std::make_unique<DRPolicy>(dr_policy_from_artifact(j));
  }
  throw ConfigError("unknown policy artifact kind: " + kind);
}

}  // namespace dosebandit
