#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dosebandit/features.hpp"

namespace dosebandit {

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
};

// K per-class weight vectors and biases; the symmetric parameterization, so
// seralized models stay interpretable per arm.
struct SoftmaxModel {
  std::vector<std::vector<double>> weights;
  std::vector<double> biases;

  int num_classes() const { return static_cast<int>(biases.size()); }
};

struct WeightedExample {
  FeatureVector x;
  int label = 0;
  double weight = 1.0;
};

// Full-batch gradient descent from an all-zeros initialization. Fixed config
// and data give bit-identical parameters. The learning rate and L2 strength
// apply to the mean-weighted data loss, so defaults behave the same at any
// dataset size.
struct TrainConfig {
  double learning_rate = 0.1;
  int iterations = 2000;
  double l2 = 1e-4;
  double tolerance = 1e-6;
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline double linear_score(const LinearModel& m, const FeatureVector& x) {
  if (x.size() != m.weights.size()) {
    throw std::invalid_argument("feature dimension " + std::to_string(x.size()) +
                                " does not match model dimension " +
                                std::to_string(m.weights.size()));
  }
  double z = m.bias;
  for (std::size_t j = 0; j < x.size(); ++j) z += m.weights[j] * x[j];
  return z;
}

inline double predict_binary(const LinearModel& m, const FeatureVector& x) {
  return sigmoid(linear_score(m, x));
}

inline std::vector<double> predict_softmax(const SoftmaxModel& m, const FeatureVector& x) {
  const int k_classes = m.num_classes();
  std::vector<double> z(k_classes);
  for (int k = 0; k < k_classes; ++k) {
    if (x.size() != m.weights[k].size()) {
      throw std::invalid_argument("feature dimension does not match softmax model");
    }
    double s = m.biases[k];
    for (std::size_t j = 0; j < x.size(); ++j) s += m.weights[k][j] * x[j];
    z[k] = s;
  }
  double zmax = z[0];
  for (const double v : z) zmax = std::max(zmax, v);
  double denom = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    denom += v;
  }
  for (auto& v : z) v /= denom;
  return z;
}

namespace detail {

inline void validate_examples(std::span<const WeightedExample> examples, std::size_t dim,
                              int num_classes) {
  for (const auto& ex : examples) {
    if (ex.x.size() != dim) {
      throw std::invalid_argument("inconsistent feature dimensions across examples");
    }
    if (ex.weight < 0.0) throw std::invalid_argument("example weight must be >= 0");
    if (ex.label < 0 || ex.label >= num_classes) {
      throw std::invalid_argument("example label " + std::to_string(ex.label) +
                                  " outside [0," + std::to_string(num_classes) + ")");
    }
  }
}

inline double total_weight(std::span<const WeightedExample> examples) {
  double w = 0.0;
  for (const auto& ex : examples) w += ex.weight;
  return w;
}

}  // namespace detail

// Regularized weighted objective, unnormalized:
//   L(w, b) = sum_i weight_i * [softplus(z_i) - y_i * z_i] + (l2/2) * |theta|^2
// Returned gradient layout: [w_0..w_{d-1}, bias]. Zero-weight examples
// contribute nothing; scaling every weight by c scales the data part of both
// loss and gradient by c.
inline std::pair<double, std::vector<double>> loss_and_gradient(
    const LinearModel& m, std::span<const WeightedExample> examples, double l2) {
  const std::size_t d = m.weights.size();
  detail::validate_examples(examples, d, 2);
  double loss = 0.0;
  std::vector<double> grad(d + 1, 0.0);
  for (const auto& ex : examples) {
    if (ex.weight == 0.0) continue;
    double z = m.bias;
    for (std::size_t j = 0; j < d; ++j) z += m.weights[j] * ex.x[j];
    const double y = static_cast<double>(ex.label);
    loss += ex.weight * (softplus(z) - y * z);
    const double g = ex.weight * (sigmoid(z) - y);
    for (std::size_t j = 0; j < d; ++j) grad[j] += g * ex.x[j];
    grad[d] += g;
  }
  for (std::size_t j = 0; j < d; ++j) {
    loss += 0.5 * l2 * m.weights[j] * m.weights[j];
    grad[j] += l2 * m.weights[j];
  }
  loss += 0.5 * l2 * m.bias * m.bias;
  grad[d] += l2 * m.bias;
  return {loss, std::move(grad)};
}

// Multinomial cross-entropy counterpart. Gradient layout is class-major:
// [w_k(0..d-1), b_k] for k = 0..K-1.
inline std::pair<double, std::vector<double>> loss_and_gradient(
    const SoftmaxModel& m, std::span<const WeightedExample> examples, double l2) {
  const int k_classes = m.num_classes();
  const std::size_t d = m.weights.empty() ? 0 : m.weights[0].size();
  detail::validate_examples(examples, d, k_classes);
  const std::size_t stride = d + 1;
  double loss = 0.0;
  std::vector<double> grad(stride * static_cast<std::size_t>(k_classes), 0.0);
  std::vector<double> z(k_classes);
  for (const auto& ex : examples) {
    if (ex.weight == 0.0) continue;
    double zmax = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < k_classes; ++k) {
      double s = m.biases[k];
      for (std::size_t j = 0; j < d; ++j) s += m.weights[k][j] * ex.x[j];
      z[k] = s;
      zmax = std::max(zmax, s);
    }
    double denom = 0.0;
    for (int k = 0; k < k_classes; ++k) denom += std::exp(z[k] - zmax);
    const double log_denom = std::log(denom) + zmax;
    loss += ex.weight * (log_denom - z[ex.label]);
    for (int k = 0; k < k_classes; ++k) {
      const double p = std::exp(z[k] - log_denom);
      const double g = ex.weight * (p - (k == ex.label ? 1.0 : 0.0));
      double* gk = grad.data() + stride * static_cast<std::size_t>(k);
      for (std::size_t j = 0; j < d; ++j) gk[j] += g * ex.x[j];
      gk[d] += g;
    }
  }
  for (int k = 0; k < k_classes; ++k) {
    double* gk = grad.data() + stride * static_cast<std::size_t>(k);
    for (std::size_t j = 0; j < d; ++j) {
      loss += 0.5 * l2 * m.weights[k][j] * m.weights[k][j];
      gk[j] += l2 * m.weights[k][j];
    }
    loss += 0.5 * l2 * m.biases[k] * m.biases[k];
    gk[d] += l2 * m.biases[k];
  }
  return {loss, std::move(grad)};
}

// Training minimizes the mean-weighted objective
//   J(theta) = (1/W) sum_i w_i l_i(theta) + (l2/2) |theta|^2,   W = sum_i w_i,
// the convention under which the default learning rate and L2 strength are
// size-independent. The data gradient comes from loss_and_gradient (the
// finite-difference-verified path); the tolerance applies to |grad J|.
inline double training_objective(const LinearModel& m,
                                 std::span<const WeightedExample> examples, double l2) {
  const double w_total = detail::total_weight(examples);
  double j = loss_and_gradient(m, examples, 0.0).first / w_total;
  for (const double w : m.weights) j += 0.5 * l2 * w * w;
  return j + 0.5 * l2 * m.bias * m.bias;
}

inline LinearModel fit_binary(std::span<const WeightedExample> examples,
                              const TrainConfig& cfg) {
  if (examples.empty()) throw std::invalid_argument("fit_binary: no examples");
  const double w_total = detail::total_weight(examples);
  if (w_total <= 0.0) throw std::invalid_argument("fit_binary: all example weights are zero");
  const std::size_t d = examples[0].x.size();
  LinearModel m;
  m.weights.assign(d, 0.0);
  for (int it = 0; it < cfg.iterations; ++it) {
    auto [loss, grad] = loss_and_gradient(m, examples, 0.0);
    (void)loss;
    for (std::size_t j = 0; j < d; ++j) grad[j] = grad[j] / w_total + cfg.l2 * m.weights[j];
    grad[d] = grad[d] / w_total + cfg.l2 * m.bias;
    double norm_sq = 0.0;
    for (const double g : grad) norm_sq += g * g;
    if (std::sqrt(norm_sq) < cfg.tolerance) break;
    for (std::size_t j = 0; j < d; ++j) m.weights[j] -= cfg.learning_rate * grad[j];
    m.bias -= cfg.learning_rate * grad[d];
  }
  return m;
}

inline SoftmaxModel fit_softmax(std::span<const WeightedExample> examples, int num_classes,
                                const TrainConfig& cfg) {
  if (examples.empty()) throw std::invalid_argument("fit_softmax: no examples");
  if (num_classes < 2) throw std::invalid_argument("fit_softmax: need at least two classes");
  const double w_total = detail::total_weight(examples);
  if (w_total <= 0.0) throw std::invalid_argument("fit_softmax: all example weights are zero");
  const std::size_t d = examples[0].x.size();
  const std::size_t stride = d + 1;
  SoftmaxModel m;
  m.weights.assign(num_classes, std::vector<double>(d, 0.0));
  m.biases.assign(num_classes, 0.0);
  for (int it = 0; it < cfg.iterations; ++it) {
    auto [loss, grad] = loss_and_gradient(m, examples, 0.0);
    (void)loss;
    for (int k = 0; k < num_classes; ++k) {
      double* gk = grad.data() + stride * static_cast<std::size_t>(k);
      for (std::size_t j = 0; j < d; ++j) gk[j] = gk[j] / w_total + cfg.l2 * m.weights[k][j];
      gk[d] = gk[d] / w_total + cfg.l2 * m.biases[k];
    }
    double norm_sq = 0.0;
    for (const double g : grad) norm_sq += g * g;
    if (std::sqrt(norm_sq) < cfg.tolerance) break;
    for (int k = 0; k < num_classes; ++k) {
      const double* gk = grad.data() + stride * static_cast<std::size_t>(k);
      for (std::size_t j = 0; j < d; ++j) m.weights[k][j] -= cfg.learning_rate * gk[j];
      m.biases[k] -= cfg.learning_rate * gk[d];
    }
  }
  return m;
}

}  // namespace dosebandit
