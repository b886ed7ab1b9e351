#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include <json.hpp>

#include "dosebandit/errors.hpp"
#include "dosebandit/features.hpp"
#include "dosebandit/patient.hpp"
#include "dosebandit/policy.hpp"

namespace dosebandit {

// A linear square-root-dose model: predicted value is the square root of the
// weekly dose in mg, so dose = (intercept + sum coeff*feature)^2. Values are
// configuration data loaded from a coefficient file, not code.
struct DosingCoefficients {
  std::string name;
  std::string output;  // must be "sqrt_weekly_dose_mg"
  double intercept = 0.0;
  std::map<std::string, double> terms;

  static DosingCoefficients from_json(const nlohmann::json& j) {
    DosingCoefficients c;
    c.name = j.value("name", "");
    c.output = j.value("output", "");
    if (c.output != "sqrt_weekly_dose_mg") {
      throw ConfigError("coefficient file \"" + c.name +
                        "\": unsupported output convention \"" + c.output + "\"");
    }
    if (!j.contains("intercept")) {
      throw ConfigError("coefficient file \"" + c.name + "\": missing intercept");
    }
    c.intercept = j["intercept"].get<double>();
    for (const auto& [term, value] : j.at("terms").items()) {
      c.terms[term] = value.get<double>();
    }
    return c;
  }

  static DosingCoefficients load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open coefficient file: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

// Raw-unit fallbacks for continuous fields a dose model needs; taken from the
// training means so demo policies stay total on records with gaps.
struct ContinuousImputation {
  double age_decades = 0.0;
  double height_cm = 0.0;
  double weight_kg = 0.0;

  static ContinuousImputation from_stats(const NormalizationStats& s) {
    return {s.age_mean, s.height_mean, s.weight_mean};
  }
};

namespace detail {

inline double term_value(const std::string& term, const PatientRecord& rec,
                         const ContinuousImputation* imp) {
  const auto continuous = [&](std::optional<double> v, double fallback,
                              const char* what) -> double {
    if (v) return *v;
    if (imp) return fallback;
    throw std::invalid_argument(std::string("dose model needs ") + what +
                                " but it is missing and no imputation was supplied");
  };
  if (term == "age_decades") {
    return continuous(rec.age_decades ? std::optional<double>(
                                            static_cast<double>(*rec.age_decades))
                                      : std::nullopt,
                      imp ? imp->age_decades : 0.0, "age");
  }
  if (term == "height_cm") return continuous(rec.height_cm, imp ? imp->height_cm : 0.0, "height");
  if (term == "weight_kg") return continuous(rec.weight_kg, imp ? imp->weight_kg : 0.0, "weight");
  if (term == "race_asian") return rec.race == Race::asian ? 1.0 : 0.0;
  if (term == "race_black_or_african_american") {
    return rec.race == Race::black_or_african_american ? 1.0 : 0.0;
  }
  if (term == "race_mixed_or_missing") return rec.race == Race::mixed_or_missing ? 1.0 : 0.0;
  if (term == "enzyme_inducer") return rec.enzyme_inducer == Flag::yes ? 1.0 : 0.0;
  if (term == "amiodarone") return rec.amiodarone == Flag::yes ? 1.0 : 0.0;
  if (term == "vkorc1_a_g") return rec.vkorc1 == Vkorc1::ag ? 1.0 : 0.0;
  if (term == "vkorc1_a_a") return rec.vkorc1 == Vkorc1::aa ? 1.0 : 0.0;
  if (term == "vkorc1_unknown") return rec.vkorc1 == Vkorc1::unknown ? 1.0 : 0.0;
  if (term == "cyp2c9_1_2") return rec.cyp2c9 == Cyp2c9::star_1_2 ? 1.0 : 0.0;
  if (term == "cyp2c9_1_3") return rec.cyp2c9 == Cyp2c9::star_1_3 ? 1.0 : 0.0;
  if (term == "cyp2c9_2_2") return rec.cyp2c9 == Cyp2c9::star_2_2 ? 1.0 : 0.0;
  if (term == "cyp2c9_2_3") return rec.cyp2c9 == Cyp2c9::star_2_3 ? 1.0 : 0.0;
  if (term == "cyp2c9_3_3") return rec.cyp2c9 == Cyp2c9::star_3_3 ? 1.0 : 0.0;
  if (term == "cyp2c9_unknown") return rec.cyp2c9 == Cyp2c9::unknown ? 1.0 : 0.0;
  throw ConfigError("coefficient file uses unknown term \"" + term + "\"");
}

}  // namespace detail

// Linear square-root score of a record under a coefficient table.
inline double dose_sqrt_score(const PatientRecord& rec, const DosingCoefficients& coeffs,
                              const ContinuousImputation* imputation = nullptr) {
  double score = coeffs.intercept;
  for (const auto& [term, coeff] : coeffs.terms) {
    score += coeff * detail::term_value(term, rec, imputation);
  }
  return score;
}

// Weekly dose in mg. A negative square-root score clamps to dose 0 (which
// lands in the low bucket); `clamped` reports that when supplied.
inline double wcda_dose(const PatientRecord& rec, const DosingCoefficients& coeffs,
                        const ContinuousImputation* imputation = nullptr,
                        bool* clamped = nullptr) {
  double s = dose_sqrt_score(rec, coeffs, imputation);
  if (clamped) *clamped = s < 0.0;
  if (s < 0.0) s = 0.0;
  return s * s;
}

// Same convention; the pharmacogenetic table simply carries genotype terms,
// with unknown genotypes contributing their own coefficients.
inline double wpda_dose(const PatientRecord& rec, const DosingCoefficients& coeffs,
                        const ContinuousImputation* imputation = nullptr,
                        bool* clamped = nullptr) {
  return wcda_dose(rec, coeffs, imputation, clamped);
}

using DoseFn = double (*)(const PatientRecord&, const DosingCoefficients&,
                          const ContinuousImputation*, bool*);

// Deterministic demo policy: run the dose model, bucketize, one-hot. Requires
// a raw record in the context.
class DoserPolicy final : public Policy {
 public:
  DoserPolicy(std::string name, DoseFn doser, DosingCoefficients coeffs,
              ContinuousImputation imputation)
      : name_(std::move(name)),
        doser_(doser),
        coeffs_(std::move(coeffs)),
        imputation_(imputation) {}

  std::string name() const override { return name_; }

  ArmDistribution action_distribution(const Context& ctx) const override {
    if (ctx.record == nullptr) {
      throw std::invalid_argument(name_ + " policy needs a patient record");
    }
    const double dose = doser_(*ctx.record, coeffs_, &imputation_, nullptr);
    // dose 0 (clamped score) buckets to low without tripping the positive-dose gate
    const Arm arm = dose > 0.0 ? bucketize_dose(dose) : Arm::low;
    return one_hot(arm);
  }

 private:
  std::string name_;
  DoseFn doser_;
  DosingCoefficients coeffs_;
  ContinuousImputation imputation_;
};

inline DoserPolicy policy_from_doser(std::string name, DoseFn doser, DosingCoefficients coeffs,
                                     ContinuousImputation imputation = {}) {
  return DoserPolicy(std::move(name), doser, std::move(coeffs), imputation);
}

}  // namespace dosebandit
