#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dosebandit/errors.hpp"
#include "dosebandit/patient.hpp"

namespace dosebandit {

// Encoded, imputed, normalized context. Coordinate meaning is carried by the
// FeatureLayout used to produce it.
using FeatureVector = std::vector<double>;

enum class FeatureLayoutKind {
  clinical,  // demographics/background/medications only
  genetic    // clinical + CYP2C9/VKORC1 one-hots
};

// Training-set statistics for the continuous features. Fitted on the training
// partition only and reused verbatim on test data; imputation value is the
// training mean. Standard deviation is the population (divide-by-n) form so
// tests can pin exact values.
struct NormalizationStats {
  double age_mean = 0.0, age_sd = 0.0;
  double height_mean = 0.0, height_sd = 0.0;
  double weight_mean = 0.0, weight_sd = 0.0;
};

namespace detail {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

template <typename Accessor>
MeanSd mean_sd_over_present(std::span<const PatientRecord> records, Accessor get) {
  MeanSd out;
  double sum = 0.0;
  for (const auto& rec : records) {
    if (auto v = get(rec)) {
      sum += *v;
      ++out.count;
    }
  }
  if (out.count == 0) return out;
  out.mean = sum / static_cast<double>(out.count);
  double ss = 0.0;
  for (const auto& rec : records) {
    if (auto v = get(rec)) {
      const double d = *v - out.mean;
      ss += d * d;
    }
  }
  out.sd = std::sqrt(ss / static_cast<double>(out.count));
  return out;
}

}  // namespace detail

inline NormalizationStats fit_stats(std::span<const PatientRecord> train) {
  if (train.empty()) throw ConfigError("fit_stats: empty training set");
  const auto age = detail::mean_sd_over_present(train, [](const PatientRecord& r) {
    return r.age_decades ? std::optional<double>(static_cast<double>(*r.age_decades))
                         : std::nullopt;
  });
  const auto height =
      detail::mean_sd_over_present(train, [](const PatientRecord& r) { return r.height_cm; });
  const auto weight =
      detail::mean_sd_over_present(train, [](const PatientRecord& r) { return r.weight_kg; });
  if (age.count == 0) throw ConfigError("fit_stats: age entirely missing in training data");
  if (height.count == 0) throw ConfigError("fit_stats: height entirely missing in training data");
  if (weight.count == 0) throw ConfigError("fit_stats: weight entirely missing in training data");
  return NormalizationStats{age.mean,    age.sd,    height.mean,
                            height.sd,   weight.mean, weight.sd};
}

// Coordinate names, in encoding order.
inline std::vector<std::string> layout_names(FeatureLayoutKind kind) {
  std::vector<std::string> names = {
      "age_decades:z",      "age_decades:missing",
      "height_cm:z",        "height_cm:missing",
      "weight_kg:z",        "weight_kg:missing",
      "gender=female",      "gender=missing",
      "race=asian",         "race=black_or_african_american",
      "race=mixed_or_missing",
      "amiodarone=yes",     "amiodarone=missing",
      "enzyme_inducer=yes", "enzyme_inducer=missing",
  };
  if (kind == FeatureLayoutKind::genetic) {
    names.insert(names.end(), {
                                  "cyp2c9=*1/*2",
                                  "cyp2c9=*1/*3",
                                  "cyp2c9=*2/*2",
                                  "cyp2c9=*2/*3",
                                  "cyp2c9=*3/*3",
                                  "cyp2c9=unknown",
                                  "vkorc1=A/G",
                                  "vkorc1=A/A",
                                  "vkorc1=unknown",
                              });
  }
  return names;
}

inline std::size_t layout_dimension(FeatureLayoutKind kind) {
  return kind == FeatureLayoutKind::clinical ? 15 : 24;
}

// Encode one record. Continuous features are z-scored against the training
// stats with an sd floor of 1e-8 (a constant training column therefore maps
// to 0); missing values impute to the training mean, i.e. z = 0, and raise
// the matching missing flag. One-hot reference levels (male, white, flag=no,
// *1/*1, G/G) are omitted.
inline FeatureVector encode(const PatientRecord& rec, const NormalizationStats& stats,
                            FeatureLayoutKind kind) {
  static constexpr double kSdFloor = 1e-8;
  FeatureVector x;
  x.reserve(layout_dimension(kind));

  const auto push_continuous = [&x](std::optional<double> value, double mean, double sd) {
    const double v = value.value_or(mean);
    x.push_back((v - mean) / std::max(sd, kSdFloor));
    x.push_back(value ? 0.0 : 1.0);
  };
  push_continuous(rec.age_decades
                      ? std::optional<double>(static_cast<double>(*rec.age_decades))
                      : std::nullopt,
                  stats.age_mean, stats.age_sd);
  push_continuous(rec.height_cm, stats.height_mean, stats.height_sd);
  push_continuous(rec.weight_kg, stats.weight_mean, stats.weight_sd);

  x.push_back(rec.gender == Gender::female ? 1.0 : 0.0);
  x.push_back(rec.gender == Gender::missing ? 1.0 : 0.0);

  x.push_back(rec.race == Race::asian ? 1.0 : 0.0);
  x.push_back(rec.race == Race::black_or_african_american ? 1.0 : 0.0);
  x.push_back(rec.race == Race::mixed_or_missing ? 1.0 : 0.0);

  x.push_back(rec.amiodarone == Flag::yes ? 1.0 : 0.0);
  x.push_back(rec.amiodarone == Flag::missing ? 1.0 : 0.0);
  x.push_back(rec.enzyme_inducer == Flag::yes ? 1.0 : 0.0);
  x.push_back(rec.enzyme_inducer == Flag::missing ? 1.0 : 0.0);

  if (kind == FeatureLayoutKind::genetic) {
    x.push_back(rec.cyp2c9 == Cyp2c9::star_1_2 ? 1.0 : 0.0);
    x.push_back(rec.cyp2c9 == Cyp2c9::star_1_3 ? 1.0 : 0.0);
    x.push_back(rec.cyp2c9 == Cyp2c9::star_2_2 ? 1.0 : 0.0);
    x.push_back(rec.cyp2c9 == Cyp2c9::star_2_3 ? 1.0 : 0.0);
    x.push_back(rec.cyp2c9 == Cyp2c9::star_3_3 ? 1.0 : 0.0);
    x.push_back(rec.cyp2c9 == Cyp2c9::unknown ? 1.0 : 0.0);
    x.push_back(rec.vkorc1 == Vkorc1::ag ? 1.0 : 0.0);
    x.push_back(rec.vkorc1 == Vkorc1::aa ? 1.0 : 0.0);
    x.push_back(rec.vkorc1 == Vkorc1::unknown ? 1.0 : 0.0);
  }
  return x;
}

}  // namespace dosebandit
