#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rac/counting.hpp"
#include "rac/network.hpp"

namespace rac {

using CountPair = std::pair<std::int64_t, std::int64_t>;  // (predicted, ground truth)

// Off-By-One Accuracy: fraction of items whose predicted count is within one
// of the ground truth.
inline double oboa(const std::vector<CountPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("oboa: empty pair list");
  std::size_t hits = 0;
  for (const auto& [p, g] : pairs) {
    if (g < 0) throw std::invalid_argument("oboa: negative ground truth");
    if (std::llabs(p - g) <= 1) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

// Mean of |predicted - truth| / truth. Items with a zero ground truth have no
// defined normalization and are skipped.
inline double mae(const std::vector<CountPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("mae: empty pair list");
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& [p, g] : pairs) {
    if (g < 0) throw std::invalid_argument("mae: negative ground truth");
    if (g == 0) continue;
    sum += static_cast<double>(std::llabs(p - g)) / static_cast<double>(g);
    ++used;
  }
  if (used == 0) throw std::invalid_argument("mae: no pairs with positive ground truth");
  return sum / static_cast<double>(used);
}

struct PerItem {
  std::int64_t predicted = 0;
  std::int64_t ground_truth = 0;
  std::optional<double> abs_err_normalized;  // absent when ground truth is 0
  bool within_one = false;
};

struct EvalResult {
  double mae = 0.0;
  double oboa = 0.0;
  std::size_t n = 0;
  std::size_t excluded_zero_gt = 0;
  std::vector<PerItem> per_item;
};

inline nlohmann::json eval_to_json(const EvalResult& r) {
  nlohmann::json doc;
  doc["mae"] = r.mae;
  doc["oboa"] = r.oboa;
  doc["n"] = r.n;
  doc["excluded_zero_gt"] = r.excluded_zero_gt;
  auto& items = doc["per_item"] = nlohmann::json::array();
  for (const PerItem& item : r.per_item) {
    nlohmann::json j;
    j["predicted"] = item.predicted;
    j["ground_truth"] = item.ground_truth;
    if (item.abs_err_normalized)
      j["abs_err_normalized"] = *item.abs_err_normalized;
    else
      j["abs_err_normalized"] = nullptr;
    j["within_one"] = item.within_one;
    items.push_back(std::move(j));
  }
  return doc;
}

struct EvalConfig {
  std::size_t stride = 1;
  double gaussian_sigma = 1.0;
  TargetMode target_mode = TargetMode::kStart;
};

// Maps a (possibly strided) input and its strided annotations to per-frame
// probabilities. The annotation argument exists for the oracle predictor;
// model predictors ignore it.
using Predictor = std::function<std::vector<double>(const Matrix&, const AnnotationTrack&)>;

inline Predictor model_predictor(const NetworkState& state) {
  return [&state](const Matrix& input, const AnnotationTrack&) {
    return forward(state, input).probs;
  };
}

// Emits the training targets as predictions; a plumbing identity check.
inline Predictor oracle_predictor(const EvalConfig& cfg) {
  return [cfg](const Matrix&, const AnnotationTrack& strided) {
    return make_target(strided, cfg.target_mode, cfg.gaussian_sigma);
  };
}

// One pass over the dataset, peaks computed once per item and re-thresholded
// for every requested prominence value.
inline std::vector<EvalResult> evaluate_sweep(const Predictor& predictor, const Dataset& dataset,
                                              const EvalConfig& cfg,
                                              const std::vector<double>& thresholds) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: dataset is empty");
  if (thresholds.empty()) throw std::invalid_argument("evaluate: no thresholds given");
  for (double t : thresholds)
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("evaluate: threshold must be in [0, 1]");

  std::vector<EvalResult> results(thresholds.size());
  for (EvalResult& r : results) {
    r.n = dataset.size();
    r.per_item.reserve(dataset.size());
  }

  for (const auto& [seq, track] : dataset) {
    const Matrix input = strided_input(seq, cfg.stride);
    const AnnotationTrack st = strided_track(track, cfg.stride);
    const std::vector<double> probs = predictor(input, st);
    const std::vector<Peak> peaks = find_peaks(probs);
    const auto truth = static_cast<std::int64_t>(track.count());

    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      std::int64_t predicted = 0;
      for (const Peak& p : peaks)
        if (p.prominence > thresholds[ti]) ++predicted;
      PerItem item;
      item.predicted = predicted;
      item.ground_truth = truth;
      item.within_one = std::llabs(predicted - truth) <= 1;
      if (truth > 0)
        item.abs_err_normalized =
            static_cast<double>(std::llabs(predicted - truth)) / static_cast<double>(truth);
      results[ti].per_item.push_back(item);
    }
  }

  for (EvalResult& r : results) {
    double err_sum = 0.0;
    std::size_t used = 0, hits = 0;
    for (const PerItem& item : r.per_item) {
      if (item.within_one) ++hits;
      if (item.abs_err_normalized) {
        err_sum += *item.abs_err_normalized;
        ++used;
      } else {
        ++r.excluded_zero_gt;
      }
    }
    r.oboa = static_cast<double>(hits) / static_cast<double>(r.n);
    r.mae = used > 0 ? err_sum / static_cast<double>(used) : 0.0;
  }
  return results;
}

inline EvalResult evaluate(const Predictor& predictor, const Dataset& dataset, const EvalConfig& cfg,
                           double threshold = 0.2) {
  return evaluate_sweep(predictor, dataset, cfg, {threshold}).front();
}

}  // namespace rac
