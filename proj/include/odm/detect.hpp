#pragma once

// Per-feature reconstruction errors, interval thresholds, anomaly events.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "odm/errors.hpp"
#include "odm/preprocess.hpp"
#include "odm/telemetry.hpp"

namespace odm {

/// Thresholds in scaled space, computed from one finished interval and
/// applied to the one after it.
struct ThresholdSet {
  FeatureVector thresholds{};
  std::uint64_t source_interval = 0;
  std::uint64_t row_count = 0;

  bool operator==(const ThresholdSet&) const = default;
};

struct AnomalyEvent {
  std::int64_t bucket_start = 0;
  std::string node_id;
  std::size_t feature = 0;
  double error = 0.0;
  double threshold = 0.0;
  double raw_value = 0.0;
  double reconstructed_raw = 0.0;

  bool operator==(const AnomalyEvent&) const = default;
};

inline FeatureVector per_feature_error(const FeatureVector& predicted, const FeatureVector& actual) {
  FeatureVector e{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) e[f] = std::abs(predicted[f] - actual[f]);
  return e;
}

/// threshold_f = max over the interval of error_f.
inline ThresholdSet update_thresholds(std::span<const FeatureVector> interval_errors, std::uint64_t interval_id) {
  if (interval_errors.empty()) throw EmptyInterval();
  ThresholdSet t;
  t.thresholds = interval_errors.front();
  for (const auto& e : interval_errors)
    for (std::size_t f = 0; f < kNumFeatures; ++f) t.thresholds[f] = std::max(t.thresholds[f], e[f]);
  t.source_interval = interval_id;
  t.row_count = interval_errors.size();
  return t;
}

/// What the detector needs to describe an event in physical units.
struct DetectionContext {
  std::int64_t bucket_start = 0;
  std::string node_id;
  FeatureVector raw_value{};
  FeatureVector reconstructed_raw{};
};

/// One event per feature whose error strictly exceeds its threshold.
inline std::vector<AnomalyEvent> detect(const FeatureVector& errors, const ThresholdSet& thresholds,
                                        const DetectionContext& ctx) {
  std::vector<AnomalyEvent> out;
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    if (errors[f] > thresholds.thresholds[f]) {
      out.push_back(AnomalyEvent{ctx.bucket_start, ctx.node_id, f, errors[f], thresholds.thresholds[f],
                                 ctx.raw_value[f], ctx.reconstructed_raw[f]});
    }
  }
  return out;
}

inline nlohmann::ordered_json to_json(const AnomalyEvent& e) {
  nlohmann::ordered_json j;
  j["t"] = e.bucket_start;
  j["node"] = e.node_id;
  j["feature"] = kMetricNames[e.feature];
  j["error"] = e.error;
  j["threshold"] = e.threshold;
  j["value"] = e.raw_value;
  j["reconstructed"] = e.reconstructed_raw;
  return j;
}

/// One JSON object, no trailing newline.
inline std::string to_json_line(const AnomalyEvent& e) { return to_json(e).dump(); }

inline AnomalyEvent event_from_json(const nlohmann::json& j) {
  AnomalyEvent e;
  e.bucket_start = j.at("t").get<std::int64_t>();
  e.node_id = j.at("node").get<std::string>();
  const auto m = parse_metric(j.at("feature").get<std::string>());
  if (!m) throw Error("unknown feature in event: " + j.at("feature").get<std::string>());
  e.feature = static_cast<std::size_t>(*m);
  e.error = j.at("error").get<double>();
  e.threshold = j.at("threshold").get<double>();
  e.raw_value = j.at("value").get<double>();
  e.reconstructed_raw = j.at("reconstructed").get<double>();
  return e;
}

}  // namespace odm
