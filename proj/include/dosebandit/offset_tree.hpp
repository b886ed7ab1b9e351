#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dosebandit/linear_model.hpp"
#include "dosebandit/logging.hpp"
#include "dosebandit/policy.hpp"

namespace dosebandit {

// Fixed tournament over the three arms: the pair node decides
// order[0] vs order[1], the root decides that winner vs order[2]. The default
// brackets the adjacent dose buckets first (arms are ordinal).
struct OffsetTreeTopology {
  std::array<Arm, kNumArms> order = {Arm::low, Arm::medium, Arm::high};
};

// One logistic model per internal node; binary label 1 means the node's
// right side (order[1] at the pair node, order[2] at the root).
struct OffsetTreeModel {
  OffsetTreeTopology topology;
  LinearModel pair_node;
  LinearModel root_node;
  std::vector<std::string> warnings;
};

namespace detail {

// The offset trick, with the offset pinned at 1/2: a reward above the offset
// pushes toward the side holding the logged arm, a reward below it pushes
// toward the opposite side, with importance weight |r - 1/2| / p either way.
// r == 1/2 carries no signal and emits nothing. For binary rewards both
// branches give weight 1/(2p).
inline std::optional<WeightedExample> offset_example(const FeatureVector& x, int side_of_a,
                                                     double r, double p) {
  if (p <= 0.0) throw std::domain_error("offset reduction: propensity must be positive");
  if (r > 0.5) return WeightedExample{x, side_of_a, (r - 0.5) / p};
  if (r < 0.5) return WeightedExample{x, 1 - side_of_a, (0.5 - r) / p};
  return std::nullopt;
}

inline Arm pair_winner(const OffsetTreeModel& m, const FeatureVector& x) {
  return predict_binary(m.pair_node, x) > 0.5 ? m.topology.order[1] : m.topology.order[0];
}

}  // namespace detail

// Binary importance-weighted examples for the pair node: every interaction
// whose logged arm lies in the pair.
inline std::vector<WeightedExample> offset_pair_examples(
    std::span<const LoggedInteraction> logs, const OffsetTreeTopology& topo = {}) {
  std::vector<WeightedExample> out;
  for (const auto& it : logs) {
    int side = -1;
    if (it.a == topo.order[0]) side = 0;
    if (it.a == topo.order[1]) side = 1;
    if (side < 0) continue;
    if (auto ex = detail::offset_example(it.x, side, it.r, it.p)) out.push_back(std::move(*ex));
  }
  return out;
}

// Examples for the root. Interactions from the pair's subtree are admitted
// only where the trained pair node would itself reproduce the logged arm
// (conditional filtering); the right leaf trivially predicts its own arm.
inline std::vector<WeightedExample> offset_root_examples(
    std::span<const LoggedInteraction> logs, const LinearModel& pair_node,
    const OffsetTreeTopology& topo = {}) {
  std::vector<WeightedExample> out;
  for (const auto& it : logs) {
    int side;
    if (it.a == topo.order[2]) {
      side = 1;
    } else {
      const Arm predicted =
          predict_binary(pair_node, it.x) > 0.5 ? topo.order[1] : topo.order[0];
      if (predicted != it.a) continue;
      side = 0;
    }
    if (auto ex = detail::offset_example(it.x, side, it.r, it.p)) out.push_back(std::move(*ex));
  }
  return out;
}

// Bottom-up training: the pair node first, then the root conditioned on it.
// A node left with no examples keeps the zero model, which predicts its left
// side everywhere.
inline OffsetTreeModel train_offset_tree(std::span<const LoggedInteraction> logs,
                                         const TrainConfig& cfg,
                                         const OffsetTreeTopology& topo = {}) {
  if (logs.empty()) throw std::invalid_argument("train_offset_tree: empty log");
  for (const auto& it : logs) {
    if (it.p <= 0.0) throw std::domain_error("train_offset_tree: propensity must be positive");
  }
  const std::size_t d = logs[0].x.size();
  OffsetTreeModel model;
  model.topology = topo;
  model.pair_node.weights.assign(d, 0.0);
  model.root_node.weights.assign(d, 0.0);

  const auto pair_examples = offset_pair_examples(logs, topo);
  if (pair_examples.empty()) {
    model.warnings.push_back("pair node received no examples; predicting left child");
  } else {
    model.pair_node = fit_binary(pair_examples, cfg);
  }

  const auto root_examples = offset_root_examples(logs, model.pair_node, topo);
  if (root_examples.empty()) {
    model.warnings.push_back("root node received no examples; predicting left child");
  } else {
    model.root_node = fit_binary(root_examples, cfg);
  }
  return model;
}

// Root-to-leaf tournament; deterministic per context.
inline Arm predict_offset_tree(const OffsetTreeModel& m, const FeatureVector& x) {
  const Arm winner = detail::pair_winner(m, x);
  return predict_binary(m.root_node, x) > 0.5 ? m.topology.order[2] : winner;
}

class OffsetTreePolicy final : public Policy {
 public:
  explicit OffsetTreePolicy(OffsetTreeModel model) : model_(std::move(model)) {}
  std::string name() const override { return "offset_tree"; }
  ArmDistribution action_distribution(const Context& ctx) const override {
    if (ctx.features == nullptr) {
      throw std::invalid_argument("offset_tree policy needs an encoded context");
    }
    return one_hot(predict_offset_tree(model_, *ctx.features));
  }
  const OffsetTreeModel& model() const { return model_; }

 private:
  OffsetTreeModel model_;
};

}  // namespace dosebandit
