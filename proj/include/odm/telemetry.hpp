#pragma once

// Raw metric ingestion and 10-second bucket downsampling.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odm/errors.hpp"

namespace odm {

inline constexpr std::size_t kNumFeatures = 5;

/// Column order of every feature vector in the project.
enum class Metric : std::uint8_t { Cpu0Power = 0, Cpu1Power, Cpu0Temp, Cpu1Temp, NodePower };

inline constexpr std::array<std::string_view, kNumFeatures> kMetricNames{
    "cpu0_power", "cpu1_power", "cpu0_temp", "cpu1_temp", "node_power"};

using FeatureVector = std::array<double, kNumFeatures>;

inline std::string_view metric_name(Metric m) { return kMetricNames[static_cast<std::size_t>(m)]; }

inline std::optional<Metric> parse_metric(std::string_view name) {
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (kMetricNames[i] == name) return static_cast<Metric>(i);
  }
  return std::nullopt;
}

struct RawSample {
  double timestamp = 0.0;
  std::string node_id;
  Metric metric = Metric::Cpu0Power;
  double value = 0.0;

  bool operator==(const RawSample&) const = default;
};

/// One aggregated bucket for one node.
///
/// `segment` increases whenever the downsampler had to break continuity
/// (gap longer than the fill budget); rows of one segment are contiguous
/// buckets.
struct FeatureRow {
  std::int64_t bucket_start = 0;
  std::string node_id;
  FeatureVector features{};
  std::array<bool, kNumFeatures> filled{};
  std::uint32_t segment = 0;

  bool operator==(const FeatureRow&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses one `timestamp,node_id,metric,value` line.
inline RawSample parse_sample_line(std::string_view line, std::size_t line_no) {
  std::array<std::string_view, 4> fields;
  std::size_t n = 0;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    if (n == fields.size()) throw MalformedLine(line_no, "too many fields");
    fields[n++] = detail::trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (n != fields.size()) throw MalformedLine(line_no, "expected 4 fields");

  const auto ts = detail::parse_double(fields[0]);
  if (!ts || !std::isfinite(*ts) || *ts < 0.0) throw MalformedLine(line_no, "bad timestamp");
  if (fields[1].empty()) throw MalformedLine(line_no, "empty node id");
  const auto metric = parse_metric(fields[2]);
  if (!metric) throw UnknownMetric(line_no, std::string(fields[2]));
  const auto value = detail::parse_double(fields[3]);
  if (!value) throw MalformedLine(line_no, "bad value");
  if (!std::isfinite(*value)) throw NonFiniteValue(line_no);
  return RawSample{*ts, std::string(fields[1]), *metric, *value};
}

/// Lazy reader over the telemetry CSV format.
///
/// `next()` throws on a bad line; the reader remains usable afterwards, so
/// callers may log and continue.
class SampleReader {
 public:
  explicit SampleReader(std::istream& in) : in_(in) {}

  std::optional<RawSample> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      const auto body = detail::trim(line);
      if (body.empty()) continue;
      if (line_no_ == 1 && is_header(body)) continue;
      return parse_sample_line(body, line_no_);
    }
    return std::nullopt;
  }

  std::size_t line_no() const noexcept { return line_no_; }

 private:
  static bool is_header(std::string_view line) {
    return !detail::parse_double(line.substr(0, line.find(','))).has_value();
  }

  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline std::vector<RawSample> read_samples(std::istream& in) {
  SampleReader reader(in);
  std::vector<RawSample> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

struct DownsampleConfig {
  std::int64_t bucket_seconds = 10;
  int max_fill = 3;
};

/// Streaming downsampler for any number of interleaved nodes.
///
/// A bucket closes when a sample for a later bucket of the same node
/// arrives, or on flush(). Closed buckets are returned in order, including
/// any forward-filled gap rows.
class Downsampler {
 public:
  explicit Downsampler(DownsampleConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.bucket_seconds < 1) throw InvalidConfig("bucket_seconds must be >= 1");
    if (cfg_.max_fill < 0) throw InvalidConfig("max_fill must be >= 0");
  }

  std::vector<FeatureRow> push(const RawSample& s) {
    std::vector<FeatureRow> out;
    const auto bucket = static_cast<std::int64_t>(std::floor(s.timestamp / static_cast<double>(cfg_.bucket_seconds)));
    auto [it, inserted] = nodes_.try_emplace(s.node_id);
    NodeState& st = it->second;
    if (inserted || !st.open) {
      if (!inserted && st.has_prev && bucket <= st.prev_bucket) throw OutOfOrderAcrossBuckets(s.timestamp);
      st.open = true;
      st.open_bucket = bucket;
    } else if (bucket < st.open_bucket) {
      throw OutOfOrderAcrossBuckets(s.timestamp);
    } else if (bucket > st.open_bucket) {
      close(it->first, st, out);
      st.open = true;
      st.open_bucket = bucket;
    }
    const auto m = static_cast<std::size_t>(s.metric);
    st.sums[m] += s.value;
    st.counts[m] += 1;
    return out;
  }

  /// Closes every open bucket (node order is lexicographic).
  std::vector<FeatureRow> flush() {
    std::vector<FeatureRow> out;
    for (auto& [node, st] : nodes_) {
      if (st.open) close(node, st, out);
    }
    return out;
  }

  const DownsampleConfig& config() const noexcept { return cfg_; }

 private:
  struct NodeState {
    bool open = false;
    std::int64_t open_bucket = 0;
    FeatureVector sums{};
    std::array<std::size_t, kNumFeatures> counts{};

    bool has_prev = false;
    std::int64_t prev_bucket = 0;
    FeatureVector prev{};
    std::array<int, kNumFeatures> stale{};
    std::uint32_t segment = 0;
  };

  void break_segment(NodeState& st) {
    if (st.has_prev) ++st.segment;
    st.has_prev = false;
    st.stale.fill(0);
  }

  void close(const std::string& node, NodeState& st, std::vector<FeatureRow>& out) {
    const std::int64_t k = st.open_bucket;
    if (st.has_prev) {
      const std::int64_t gap = k - st.prev_bucket - 1;
      if (gap > cfg_.max_fill) {
        break_segment(st);
      } else {
        for (std::int64_t g = 1; g <= gap; ++g) {
          if (*std::max_element(st.stale.begin(), st.stale.end()) >= cfg_.max_fill) {
            break_segment(st);
            break;
          }
          FeatureRow row{(st.prev_bucket + 1) * cfg_.bucket_seconds, node, st.prev, {}, st.segment};
          for (auto& s : st.stale) ++s;
          st.prev_bucket += 1;
          out.push_back(std::move(row));
        }
      }
    }

    FeatureRow row{k * cfg_.bucket_seconds, node, {}, {}, st.segment};
    bool complete = true;
    for (std::size_t m = 0; m < kNumFeatures; ++m) {
      if (st.counts[m] > 0) {
        row.features[m] = st.sums[m] / static_cast<double>(st.counts[m]);
        row.filled[m] = true;
      } else if (st.has_prev && st.stale[m] < cfg_.max_fill) {
        row.features[m] = st.prev[m];
      } else {
        complete = false;
      }
    }

    st.sums.fill(0.0);
    st.counts.fill(0);
    st.open = false;

    if (!complete) {
      // A metric has been missing for longer than the fill budget (or the
      // segment is just starting without it): the bucket cannot be used.
      break_segment(st);
      return;
    }
    for (std::size_t m = 0; m < kNumFeatures; ++m) st.stale[m] = row.filled[m] ? 0 : st.stale[m] + 1;
    st.has_prev = true;
    st.prev_bucket = k;
    st.prev = row.features;
    out.push_back(std::move(row));
  }

  DownsampleConfig cfg_;
  std::map<std::string, NodeState> nodes_;
};

/// Batch downsampling: rows per node, in bucket order.
inline std::map<std::string, std::vector<FeatureRow>> downsample(std::span<const RawSample> samples,
                                                                 DownsampleConfig cfg = {}) {
  Downsampler ds(cfg);
  std::map<std::string, std::vector<FeatureRow>> out;
  auto take = [&](std::vector<FeatureRow>&& rows) {
    for (auto& r : rows) out[r.node_id].push_back(std::move(r));
  };
  for (const auto& s : samples) take(ds.push(s));
  take(ds.flush());
  return out;
}

/// Splits rows of one node into maximal runs sharing a segment id.
inline std::vector<std::span<const FeatureRow>> split_segments(std::span<const FeatureRow> rows) {
  std::vector<std::span<const FeatureRow>> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= rows.size(); ++i) {
    if (i == rows.size() || rows[i].segment != rows[begin].segment) {
      if (i > begin) out.push_back(rows.subspan(begin, i - begin));
      begin = i;
    }
  }
  return out;
}

}  // namespace odm
