#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dosebandit {

// The three weekly-dose buckets. Ordinal: low < medium < high.
enum class Arm : int { low = 0, medium = 1, high = 2 };

inline constexpr int kNumArms = 3;

constexpr int idx(Arm a) { return static_cast<int>(a); }

inline Arm arm_from_index(int i) {
  if (i < 0 || i >= kNumArms) {
    throw std::domain_error("arm index out of range: " + std::to_string(i));
  }
  return static_cast<Arm>(i);
}

inline const char* arm_name(Arm a) {
  constexpr const char* names[kNumArms] = {"low", "medium", "high"};
  return names[idx(a)];
}

// Probability vector over the three arms.
using ArmDistribution = std::array<double, kNumArms>;

// Dose buckets: low < 21 mg/week, medium 21-49 mg/week (closed), high > 49.
inline Arm bucketize_dose(double dose_mg_week) {
  if (!std::isfinite(dose_mg_week) || dose_mg_week <= 0.0) {
    throw std::domain_error("dose must be finite and positive, got " +
                            std::to_string(dose_mg_week));
  }
  if (dose_mg_week < 21.0) return Arm::low;
  if (dose_mg_week <= 49.0) return Arm::medium;
  return Arm::high;
}

}  // namespace dosebandit
