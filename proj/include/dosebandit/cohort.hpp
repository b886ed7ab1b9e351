#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dosebandit/arm.hpp"
#include "dosebandit/errors.hpp"
#include "dosebandit/features.hpp"
#include "dosebandit/patient.hpp"
#include "dosebandit/rng.hpp"

namespace dosebandit {

enum class Provenance { real, synthetic };

// A cohort, either ingested from the cohort table (records) or synthesized
// for ground-truth testing (pre-encoded contexts plus the known optimal arm
// of every row; the reward table is its one-hot since exactly one arm pays
// under the rules generated here).
struct CohortDataset {
  Provenance provenance = Provenance::real;
  std::vector<PatientRecord> records;

  // synthetic branch
  std::vector<FeatureVector> synthetic_contexts;
  std::vector<Arm> synthetic_optimal;

  std::size_t size() const {
    return provenance == Provenance::real ? records.size() : synthetic_contexts.size();
  }
};

inline NormalizationStats fit_stats(const CohortDataset& train) {
  return fit_stats(std::span<const PatientRecord>(train.records));
}

// Seeded uniform shuffle, then cut at round(ratio * n). Same seed, same
// partition; partitions are disjoint and exhaustive.
inline std::pair<CohortDataset, CohortDataset> split(const CohortDataset& data, double ratio,
                                                     std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::domain_error("split ratio must lie in (0,1), got " + std::to_string(ratio));
  }
  if (data.size() == 0) throw std::invalid_argument("split: empty dataset");

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  const auto n_train =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));

  CohortDataset train, test;
  train.provenance = test.provenance = data.provenance;
  for (std::size_t i = 0; i < n; ++i) {
    CohortDataset& dst = i < n_train ? train : test;
    const std::size_t src = order[i];
    if (data.provenance == Provenance::real) {
      dst.records.push_back(data.records[src]);
    } else {
      dst.synthetic_contexts.push_back(data.synthetic_contexts[src]);
      dst.synthetic_optimal.push_back(data.synthetic_optimal[src]);
    }
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Synthetic cohorts

// Generative rules producing cohorts with full counterfactual knowledge.
//   fixed:     every row's optimal arm is the same, contexts iid N(0, I).
//   linear:    contexts iid N(0, I); optimal arm = argmax_k (w_k.x + b_k).
//   clustered: contexts drawn around three well-separated centers; the
//              optimal arm is the nearest center, which equals the argmax of
//              the linear scores 2*mu_k.x - |mu_k|^2 (so this is still a
//              linear rule, and each arm's region is linearly separable from
//              the other two).
struct SyntheticSpec {
  enum class Kind { fixed, linear, clustered };

  Kind kind = Kind::linear;
  std::size_t count = 0;
  std::size_t dim = 4;
  Arm fixed_arm = Arm::medium;                       // kind == fixed
  std::array<std::vector<double>, kNumArms> weights;  // kind == linear
  std::array<double, kNumArms> biases = {0.0, 0.0, 0.0};
  double cluster_separation = 4.0;  // kind == clustered; centers scale
  double cluster_sigma = 0.5;

  static SyntheticSpec fixed(std::size_t count, std::size_t dim, Arm arm) {
    SyntheticSpec s;
    s.kind = Kind::fixed;
    s.count = count;
    s.dim = dim;
    s.fixed_arm = arm;
    return s;
  }

  // Default linear rule: fixed pseudo-random weights derived from dim so the
  // three regions are non-degenerate without any extra configuration.
  static SyntheticSpec linear(std::size_t count, std::size_t dim) {
    SyntheticSpec s;
    s.kind = Kind::linear;
    s.count = count;
    s.dim = dim;
    Rng wrng(0xD05EBA2D17ULL + dim);
    for (int k = 0; k < kNumArms; ++k) {
      s.weights[k].resize(dim);
      for (auto& w : s.weights[k]) w = wrng.next_gaussian();
      s.biases[k] = 0.0;
    }
    return s;
  }

  static SyntheticSpec clustered(std::size_t count, std::size_t dim,
                                 double separation = 4.0, double sigma = 0.5) {
    SyntheticSpec s;
    s.kind = Kind::clustered;
    s.count = count;
    s.dim = std::max<std::size_t>(dim, 2);
    s.cluster_separation = separation;
    s.cluster_sigma = sigma;
    return s;
  }

  // Cluster centers live in the first two coordinates: vertices of an
  // equilateral triangle scaled by cluster_separation.
  std::vector<FeatureVector> cluster_centers() const {
    std::vector<FeatureVector> centers(kNumArms, FeatureVector(dim, 0.0));
    const double s = cluster_separation;
    centers[0][0] = 0.0;
    centers[0][1] = 1.0 * s;
    centers[1][0] = -0.8660254037844386 * s;
    centers[1][1] = -0.5 * s;
    centers[2][0] = 0.8660254037844386 * s;
    centers[2][1] = -0.5 * s;
    return centers;
  }

  // Per-arm linear scores under which the optimal arm is the argmax. Defined
  // for every kind so tests can recompute the truth independently.
  std::array<double, kNumArms> scores(const FeatureVector& x) const {
    std::array<double, kNumArms> s{};
    switch (kind) {
      case Kind::fixed:
        for (int k = 0; k < kNumArms; ++k) s[k] = (k == idx(fixed_arm)) ? 1.0 : 0.0;
        break;
      case Kind::linear:
        for (int k = 0; k < kNumArms; ++k) {
          double dot = biases[k];
          for (std::size_t j = 0; j < dim; ++j) dot += weights[k][j] * x[j];
          s[k] = dot;
        }
        break;
      case Kind::clustered: {
        const auto centers = cluster_centers();
        for (int k = 0; k < kNumArms; ++k) {
          double dot = 0.0, sq = 0.0;
          for (std::size_t j = 0; j < dim; ++j) {
            dot += 2.0 * centers[k][j] * x[j];
            sq += centers[k][j] * centers[k][j];
          }
          s[k] = dot - sq;
        }
        break;
      }
    }
    return s;
  }

  Arm optimal_arm(const FeatureVector& x) const {
    const auto s = scores(x);
    int best = 0;
    for (int k = 1; k < kNumArms; ++k) {
      if (s[k] > s[best]) best = k;
    }
    return arm_from_index(best);
  }
};

inline CohortDataset synthesize_cohort(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.count == 0) throw std::domain_error("synthesize_cohort: count must be positive");
  CohortDataset data;
  data.provenance = Provenance::synthetic;
  data.synthetic_contexts.reserve(spec.count);
  data.synthetic_optimal.reserve(spec.count);
  Rng rng(seed);
  const auto centers =
      spec.kind == SyntheticSpec::Kind::clustered ? spec.cluster_centers()
                                                  : std::vector<FeatureVector>{};
  for (std::size_t i = 0; i < spec.count; ++i) {
    FeatureVector x(spec.dim);
    if (spec.kind == SyntheticSpec::Kind::clustered) {
      const std::size_t c = rng.next_index(kNumArms);
      for (std::size_t j = 0; j < spec.dim; ++j) {
        x[j] = centers[c][j] + spec.cluster_sigma * rng.next_gaussian();
      }
    } else {
      for (auto& v : x) v = rng.next_gaussian();
    }
    data.synthetic_optimal.push_back(spec.optimal_arm(x));
    data.synthetic_contexts.push_back(std::move(x));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Encoded view

// The evaluation-side view of a cohort: encoded context, hidden true arm, and
// (for real cohorts) the raw record demo policies need. Learners never see
// this; they get LoggedInteraction tuples only.
struct EncodedCohort {
  std::vector<FeatureVector> contexts;
  std::vector<Arm> true_arms;
  std::vector<const PatientRecord*> records;  // empty for synthetic cohorts

  std::size_t size() const { return contexts.size(); }
  const PatientRecord* record_at(std::size_t i) const {
    return records.empty() ? nullptr : records[i];
  }
};

// Real cohorts: encode each record with training stats, truth from the
// bucketized therapeutic dose. Synthetic cohorts pass through unchanged
// (stats/layout do not apply). The view borrows record storage from `data`.
inline EncodedCohort build_encoded(const CohortDataset& data, const NormalizationStats& stats,
                                   FeatureLayoutKind layout) {
  EncodedCohort out;
  if (data.provenance == Provenance::synthetic) {
    out.contexts = data.synthetic_contexts;
    out.true_arms = data.synthetic_optimal;
    return out;
  }
  out.contexts.reserve(data.records.size());
  out.true_arms.reserve(data.records.size());
  out.records.reserve(data.records.size());
  for (const auto& rec : data.records) {
    out.contexts.push_back(encode(rec, stats, layout));
    out.true_arms.push_back(bucketize_dose(rec.therapeutic_dose_mg_week));
    out.records.push_back(&rec);
  }
  return out;
}

}  // namespace dosebandit
