#pragma once

#include <charconv>
#include <ostream>
#include <span>
#include <string>

#include "odm/telemetry.hpp"

namespace odm {

/// Shortest round-trip decimal form of `v`.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline constexpr std::string_view kSampleHeader = "timestamp,node_id,metric,value";

inline void write_sample(std::ostream& out, const RawSample& s) {
  out << format_double(s.timestamp) << ',' << s.node_id << ',' << metric_name(s.metric) << ','
      << format_double(s.value) << '\n';
}

inline void write_samples(std::ostream& out, std::span<const RawSample> samples, bool header = true) {
  if (header) out << kSampleHeader << '\n';
  for (const auto& s : samples) write_sample(out, s);
}

}  // namespace odm
