#pragma once

// Event-vs-label scoring for synthetic evaluation runs.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "odm/detect.hpp"
#include "odm/synth.hpp"

namespace odm::synth {

struct LabelOutcome {
  Label label;
  bool detected = false;
  std::optional<double> latency_seconds;  // first matching event - label start
};

struct ScoreReport {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
  std::size_t events = 0;
  std::size_t matched_events = 0;
  std::size_t labels = 0;
  std::size_t detected_labels = 0;
  bool no_events = false;  // precision undefined, reported as 1.0
  bool no_labels = false;  // recall undefined, reported as 1.0
  std::vector<LabelOutcome> per_label;
};

/// An event matches a label when it is on the same node and its bucket
/// lies within [start - slack, end + slack], slack = slack_buckets buckets.
inline ScoreReport score(std::span<const AnomalyEvent> events, std::span<const Label> labels,
                         std::int64_t slack_buckets = 2, std::int64_t bucket_seconds = 10) {
  const double slack = static_cast<double>(slack_buckets * bucket_seconds);
  auto matches = [&](const AnomalyEvent& e, const Label& l) {
    const auto t = static_cast<double>(e.bucket_start);
    return e.node_id == l.node_id && t >= l.start - slack && t <= l.end + slack;
  };

  ScoreReport r;
  r.events = events.size();
  r.labels = labels.size();
  for (const auto& e : events) {
    for (const auto& l : labels) {
      if (matches(e, l)) {
        ++r.matched_events;
        break;
      }
    }
  }
  for (const auto& l : labels) {
    LabelOutcome o{l, false, std::nullopt};
    for (const auto& e : events) {
      if (!matches(e, l)) continue;
      const double lat = static_cast<double>(e.bucket_start) - l.start;
      if (!o.latency_seconds || lat < *o.latency_seconds) o.latency_seconds = lat;
      o.detected = true;
    }
    if (o.detected) ++r.detected_labels;
    r.per_label.push_back(std::move(o));
  }

  r.no_events = events.empty();
  r.no_labels = labels.empty();
  r.precision = r.no_events ? 1.0 : static_cast<double>(r.matched_events) / static_cast<double>(r.events);
  r.recall = r.no_labels ? 1.0 : static_cast<double>(r.detected_labels) / static_cast<double>(r.labels);
  r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

inline nlohmann::ordered_json to_json(const ScoreReport& r) {
  nlohmann::ordered_json j;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["events"] = r.events;
  j["matched_events"] = r.matched_events;
  j["labels"] = r.labels;
  j["detected_labels"] = r.detected_labels;
  j["no_events"] = r.no_events;
  j["no_labels"] = r.no_labels;
  auto faults = nlohmann::ordered_json::array();
  for (const auto& o : r.per_label) {
    nlohmann::ordered_json f;
    f["node"] = o.label.node_id;
    f["metric"] = o.label.metric ? std::string(metric_name(*o.label.metric)) : std::string("all");
    f["kind"] = fault_name(o.label.kind);
    f["start"] = o.label.start;
    f["end"] = o.label.end;
    f["detected"] = o.detected;
    if (o.latency_seconds)
      f["latency_seconds"] = *o.latency_seconds;
    else
      f["latency_seconds"] = nullptr;
    faults.push_back(std::move(f));
  }
  j["faults"] = std::move(faults);
  return j;
}

}  // namespace odm::synth
