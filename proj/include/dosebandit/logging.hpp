#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dosebandit/cohort.hpp"
#include "dosebandit/policy.hpp"
#include "dosebandit/rng.hpp"

namespace dosebandit {

// One observational bandit tuple. This is everything a learner or estimator
// may consume: context, logged arm, reward, and the logging propensity the
// demo policy assigned to that arm.
struct LoggedInteraction {
  FeatureVector x;
  Arm a = Arm::low;
  double r = 0.0;
  double p = 1.0;
};

// A demo policy's log over a cohort. The per-interaction true arm is kept
// aside for oracle evaluation only; learners get the interactions() span.
class LogDataset {
 public:
  LogDataset() = default;
  LogDataset(std::string demo_policy_name, std::vector<LoggedInteraction> interactions,
             std::vector<Arm> hidden_truth)
      : demo_policy_name_(std::move(demo_policy_name)),
        interactions_(std::move(interactions)),
        hidden_truth_(std::move(hidden_truth)) {}

  const std::string& demo_policy_name() const { return demo_policy_name_; }
  std::span<const LoggedInteraction> interactions() const { return interactions_; }
  std::size_t size() const { return interactions_.size(); }

  // Oracle-side accessor; never hand this to a learner.
  std::span<const Arm> hidden_truth_for_oracle() const { return hidden_truth_; }

 private:
  std::string demo_policy_name_;
  std::vector<LoggedInteraction> interactions_;
  std::vector<Arm> hidden_truth_;
};

// Sample one arm per record from the demo policy, record reward 1 iff it hit
// the record's true arm, and log the exact propensity of the sampled arm.
inline LogDataset log_interactions(const Policy& demo, const EncodedCohort& cohort,
                                   std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LoggedInteraction> interactions;
  std::vector<Arm> truth;
  interactions.reserve(cohort.size());
  truth.reserve(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const Context ctx{&cohort.contexts[i], cohort.record_at(i)};
    const ArmDistribution dist = demo.action_distribution(ctx);
    const Arm a = sample_arm(dist, rng);
    LoggedInteraction it;
    it.x = cohort.contexts[i];
    it.a = a;
    it.r = a == cohort.true_arms[i] ? 1.0 : 0.0;
    it.p = dist[idx(a)];
    interactions.push_back(std::move(it));
    truth.push_back(cohort.true_arms[i]);
  }
  return LogDataset(demo.name(), std::move(interactions), std::move(truth));
}

}  // namespace dosebandit
