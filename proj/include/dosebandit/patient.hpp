#pragma once

#include <optional>
#include <string>

namespace dosebandit {

enum class Gender { male, female, missing };
enum class Race { white, asian, black_or_african_american, mixed_or_missing };
enum class Flag { yes, no, missing };

// CYP2C9 diplotypes seen in the cohort table; anything else maps to unknown.
enum class Cyp2c9 {
  star_1_1,
  star_1_2,
  star_1_3,
  star_2_2,
  star_2_3,
  star_3_3,
  unknown
};

// VKORC1 -1639 G>A genotype.
enum class Vkorc1 { gg, ag, aa, unknown };

// One row of the cohort table after ingestion. Continuous fields keep their
// raw units (decade index, cm, kg); absent cells stay absent until encoding.
// therapeutic_dose_mg_week is the physician-titrated ground truth and is
// guaranteed present for every retained record.
struct PatientRecord {
  std::string id;
  Gender gender = Gender::missing;
  Race race = Race::mixed_or_missing;
  std::optional<int> age_decades;     // 1..9, e.g. 6 for ages 60-69
  std::optional<double> height_cm;    // plausible range (100, 250)
  std::optional<double> weight_kg;    // plausible range (20, 300)
  Flag amiodarone = Flag::missing;
  Flag enzyme_inducer = Flag::missing;  // any of carbamazepine/phenytoin/rifampin
  Cyp2c9 cyp2c9 = Cyp2c9::unknown;
  Vkorc1 vkorc1 = Vkorc1::unknown;
  double therapeutic_dose_mg_week = 0.0;
};

}  // namespace dosebandit
