#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "dosebandit/arm.hpp"
#include "dosebandit/features.hpp"
#include "dosebandit/patient.hpp"
#include "dosebandit/rng.hpp"

namespace dosebandit {

// What a policy sees when choosing an arm. Learned policies consume the
// encoded features; the clinical dose models consume the raw record, which
// is absent (nullptr) for synthetic contexts and log-replay contexts.
struct Context {
  const FeatureVector* features = nullptr;
  const PatientRecord* record = nullptr;
};

inline Arm sample_arm(const ArmDistribution& dist, Rng& rng) {
  const double u = rng.next_double();
  double cum = 0.0;
  for (int k = 0; k < kNumArms; ++k) {
    cum += dist[k];
    if (u < cum) return arm_from_index(k);
  }
  return Arm::high;  // guard against rounding in the cumulative sum
}

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual ArmDistribution action_distribution(const Context& ctx) const = 0;

  Arm act(const Context& ctx, Rng& rng) const {
    return sample_arm(action_distribution(ctx), rng);
  }
};

// The uniform demonstration: every arm with probability 1/3 at any context.
class RandomPolicy final : public Policy {
 public:
  std::string name() const override { return "random"; }
  ArmDistribution action_distribution(const Context&) const override {
    return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  }
};

inline ArmDistribution one_hot(Arm a) {
  ArmDistribution d{0.0, 0.0, 0.0};
  d[idx(a)] = 1.0;
  return d;
}

class FixedArmPolicy final : public Policy {
 public:
  explicit FixedArmPolicy(Arm arm) : arm_(arm) {}
  std::string name() const override { return std::string("fixed_") + arm_name(arm_); }
  ArmDistribution action_distribution(const Context&) const override { return one_hot(arm_); }

 private:
  Arm arm_;
};

}  // namespace dosebandit
