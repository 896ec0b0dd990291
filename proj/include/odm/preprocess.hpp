#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "odm/errors.hpp"
#include "odm/telemetry.hpp"

namespace odm {

enum class ScalerKind : std::uint8_t { MinMax = 0, Standard = 1 };

inline std::string_view scaler_name(ScalerKind k) { return k == ScalerKind::MinMax ? "minmax" : "standard"; }

inline std::optional<ScalerKind> parse_scaler(std::string_view s) {
  if (s == "minmax") return ScalerKind::MinMax;
  if (s == "standard") return ScalerKind::Standard;
  return std::nullopt;
}

/// Fitted per-feature normalization.
///
/// For MinMax, `offset` is the minimum and `extent` the maximum. For
/// Standard, `offset` is the mean and `extent` the population standard
/// deviation. Immutable once fitted.
struct ScalerState {
  ScalerKind kind = ScalerKind::MinMax;
  FeatureVector offset{};
  FeatureVector extent{};
  std::uint64_t fitted_on = 0;

  bool degenerate(std::size_t f) const {
    return kind == ScalerKind::MinMax ? !(extent[f] > offset[f]) : !(extent[f] > 0.0);
  }

  bool operator==(const ScalerState&) const = default;
};

inline ScalerState fit_scaler(std::span<const FeatureVector> rows, ScalerKind kind) {
  if (rows.empty()) throw EmptyInput();
  ScalerState s;
  s.kind = kind;
  s.fitted_on = rows.size();
  if (kind == ScalerKind::MinMax) {
    s.offset = rows.front();
    s.extent = rows.front();
    for (const auto& r : rows) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        s.offset[f] = std::min(s.offset[f], r[f]);
        s.extent[f] = std::max(s.extent[f], r[f]);
      }
    }
    return s;
  }
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) s.offset[f] += r[f];
  }
  for (auto& m : s.offset) m /= n;
  for (const auto& r : rows) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const double d = r[f] - s.offset[f];
      s.extent[f] += d * d;
    }
  }
  for (auto& v : s.extent) v = std::sqrt(v / n);
  return s;
}

inline ScalerState fit_scaler(std::span<const FeatureRow> rows, ScalerKind kind) {
  std::vector<FeatureVector> values;
  values.reserve(rows.size());
  for (const auto& r : rows) values.push_back(r.features);
  return fit_scaler(std::span<const FeatureVector>(values), kind);
}

/// Out-of-range inputs are not clamped.
inline FeatureVector transform(const ScalerState& s, const FeatureVector& v) {
  FeatureVector out{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    if (s.degenerate(f)) {
      out[f] = 0.0;
    } else if (s.kind == ScalerKind::MinMax) {
      out[f] = (v[f] - s.offset[f]) / (s.extent[f] - s.offset[f]);
    } else {
      out[f] = (v[f] - s.offset[f]) / s.extent[f];
    }
  }
  return out;
}

inline FeatureVector inverse_transform(const ScalerState& s, const FeatureVector& scaled) {
  FeatureVector out{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    if (s.degenerate(f)) {
      out[f] = s.offset[f];
    } else if (s.kind == ScalerKind::MinMax) {
      out[f] = scaled[f] * (s.extent[f] - s.offset[f]) + s.offset[f];
    } else {
      out[f] = scaled[f] * s.extent[f] + s.offset[f];
    }
  }
  return out;
}

}  // namespace odm
