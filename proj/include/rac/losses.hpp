#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rac/core.hpp"
#include "rac/similarity.hpp"

namespace rac {

inline constexpr double kDefaultLambda = 1e-5;

struct LossReport {
  double sse = 0.0;
  double treco = 0.0;
  double total = 0.0;
  double lambda = kDefaultLambda;
};

// Masked sum of squared differences against the reference TSM: only entries
// where the reference is non-zero contribute, so self-similar idle stretches
// are never penalized. Returns the loss and its gradient w.r.t. the
// predicted matrix.
inline std::pair<double, Matrix> treco_loss(const SimilarityMatrix& predicted,
                                            const SimilarityMatrix& reference) {
  const Matrix& s = predicted.values;
  const Matrix& ref = reference.values;
  if (!s.same_shape(ref))
    throw std::invalid_argument("treco_loss: shape mismatch (" + std::to_string(s.rows()) + "x" +
                                std::to_string(s.cols()) + " vs " + std::to_string(ref.rows()) + "x" +
                                std::to_string(ref.cols()) + ")");
  double loss = 0.0;
  Matrix grad(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j) {
      if (ref(i, j) == 0.0) continue;
      const double diff = s(i, j) - ref(i, j);
      loss += diff * diff;
      grad(i, j) = 2.0 * diff;
    }
  return {loss, std::move(grad)};
}

// Sum of squared per-frame errors between target and predicted start
// probabilities. The gradient is taken w.r.t. the prediction.
inline std::pair<double, std::vector<double>> sse_loss(const std::vector<double>& target,
                                                       const std::vector<double>& predicted) {
  if (target.size() != predicted.size())
    throw std::invalid_argument("sse_loss: length mismatch (" + std::to_string(target.size()) +
                                " vs " + std::to_string(predicted.size()) + ")");
  double loss = 0.0;
  std::vector<double> grad(predicted.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double diff = target[i] - predicted[i];
    loss += diff * diff;
    grad[i] = -2.0 * diff;
  }
  return {loss, std::move(grad)};
}

inline LossReport total_loss(double sse, double treco, double lambda = kDefaultLambda) {
  if (!(sse >= 0.0)) throw std::invalid_argument("total_loss: sse must be >= 0");
  if (!(treco >= 0.0)) throw std::invalid_argument("total_loss: treco must be >= 0");
  if (!(lambda >= 0.0)) throw std::invalid_argument("total_loss: lambda must be >= 0");
  return {sse, treco, sse + lambda * treco, lambda};
}

}  // namespace rac
