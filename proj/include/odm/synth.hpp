#pragma once

// Synthetic telemetry for coupled node pairs with a lagged thermal response,
// plus fault injection with ground-truth labels.
//
// Per CPU c of node n at time t:
//   power = base + amplitude * load(n, c, t) + amplitude/4 * sin(2 pi t / 3600) + N(0, noise_std)
//   temp  = (1 - alpha) * temp_prev + alpha * (ambient + gain * power)
// and node_power = 1.2 * (cpu0 + cpu1) + N(0, noise_std).
//
// load() of the first node of a pair is its own square wave; the second
// node mixes in its partner's: coupling * partner + (1 - coupling) * own.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <cstdint>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odm/errors.hpp"
#include "odm/format.hpp"
#include "odm/telemetry.hpp"

namespace odm::synth {

inline constexpr double kNodeOverhead = 1.2;

struct SynthConfig {
  std::size_t node_pairs = 2;
  double duration_seconds = 16.0 * 3600.0;
  double sample_period_seconds = 1.0;
  double start_time = 0.0;
  double base_power = 60.0;
  double load_amplitude = 80.0;
  double job_period_seconds = 1200.0;
  double noise_std = 2.0;
  double temp_ambient = 25.0;
  double temp_gain = 0.25;
  double temp_lag_alpha = 0.02;
  double pair_coupling = 0.6;
  std::uint64_t seed = 42;

  void validate() const {
    if (node_pairs < 1) throw InvalidConfig("node_pairs must be >= 1");
    if (!(duration_seconds > 0) || !(sample_period_seconds > 0)) throw InvalidConfig("durations must be > 0");
    if (!(start_time >= 0)) throw InvalidConfig("start_time must be >= 0");
    if (!(base_power > 0) || !(load_amplitude > 0) || !(job_period_seconds > 0) || !(noise_std >= 0))
      throw InvalidConfig("power parameters must be positive");
    if (!(temp_gain > 0)) throw InvalidConfig("temp_gain must be > 0");
    if (!(temp_lag_alpha > 0 && temp_lag_alpha <= 1)) throw InvalidConfig("temp_lag_alpha must be in (0, 1]");
    if (!(pair_coupling >= 0 && pair_coupling <= 1)) throw InvalidConfig("pair_coupling must be in [0, 1]");
  }

  std::size_t node_count() const { return 2 * node_pairs; }
  std::size_t sample_count() const {
    return static_cast<std::size_t>(std::floor(duration_seconds / sample_period_seconds));
  }
};

inline std::string node_name(std::size_t index) {
  std::string s = std::to_string(index);
  if (s.size() < 2) s.insert(0, 2 - s.size(), '0');
  return "node" + s;
}

/// First-order lag toward ambient + gain * power. The first step settles
/// at the target.
class ThermalFilter {
 public:
  ThermalFilter(double alpha, double ambient, double gain) : alpha_(alpha), ambient_(ambient), gain_(gain) {}

  double step(double power) {
    const double target = ambient_ + gain_ * power;
    state_ = primed_ ? (1.0 - alpha_) * state_ + alpha_ * target : target;
    primed_ = true;
    return state_;
  }

  void prime(double temperature) {
    state_ = temperature;
    primed_ = true;
  }

  double state() const { return state_; }

 private:
  double alpha_, ambient_, gain_;
  double state_ = 0.0;
  bool primed_ = false;
};

/// Deterministic CPU load shapes (no noise) for every node.
class LoadModel {
 public:
  explicit LoadModel(const SynthConfig& cfg) : cfg_(cfg) {
    std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
    std::uniform_real_distribution<double> phase(0.0, cfg.job_period_seconds);
    phases_.resize(cfg.node_count());
    for (auto& p : phases_) p = {phase(rng), phase(rng)};
  }

  static double square(double t, double period, double phase) {
    return std::fmod(t + phase, period) < 0.5 * period ? 1.0 : 0.0;
  }

  double own(std::size_t node, std::size_t cpu, double t) const {
    return square(t, cfg_.job_period_seconds, phases_[node][cpu]);
  }

  double load(std::size_t node, std::size_t cpu, double t) const {
    if (node % 2 == 0) return own(node, cpu, t);
    return cfg_.pair_coupling * own(node - 1, cpu, t) + (1.0 - cfg_.pair_coupling) * own(node, cpu, t);
  }

  /// Independent replacement load used by the pair_divergence fault.
  double divergent(std::size_t node, std::size_t cpu, double t) const {
    const double period = 0.61 * cfg_.job_period_seconds;
    return square(t, period, phases_[node][cpu] + period / 3.0);
  }

  double power(std::size_t node, std::size_t cpu, double t, double noise) const {
    return cfg_.base_power + cfg_.load_amplitude * load(node, cpu, t) +
           cfg_.load_amplitude / 4.0 * std::sin(2.0 * std::numbers::pi * t / 3600.0) + noise;
  }

 private:
  SynthConfig cfg_;
  std::vector<std::array<double, 2>> phases_;
};

/// Unfaulted stream, ordered by time, then node, then metric.
inline std::vector<RawSample> generate(const SynthConfig& cfg) {
  cfg.validate();
  const LoadModel loads(cfg);
  const std::size_t nodes = cfg.node_count();
  std::vector<std::mt19937_64> rngs;
  for (std::size_t n = 0; n < nodes; ++n) {
    std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(n), std::uint64_t{0x0d3}};
    rngs.emplace_back(seq);
  }
  std::vector<std::array<ThermalFilter, 2>> thermal(
      nodes, {ThermalFilter(cfg.temp_lag_alpha, cfg.temp_ambient, cfg.temp_gain),
              ThermalFilter(cfg.temp_lag_alpha, cfg.temp_ambient, cfg.temp_gain)});
  std::vector<std::string> names;
  for (std::size_t n = 0; n < nodes; ++n) names.push_back(node_name(n));

  std::vector<RawSample> out;
  const std::size_t steps = cfg.sample_count();
  out.reserve(steps * nodes * kNumFeatures);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = cfg.start_time + static_cast<double>(k) * cfg.sample_period_seconds;
    for (std::size_t n = 0; n < nodes; ++n) {
      std::normal_distribution<double> noise(0.0, cfg.noise_std);
      auto draw = [&] { return cfg.noise_std > 0 ? noise(rngs[n]) : 0.0; };
      const double p0 = loads.power(n, 0, t, draw());
      const double p1 = loads.power(n, 1, t, draw());
      const double t0 = thermal[n][0].step(p0);
      const double t1 = thermal[n][1].step(p1);
      const double node_power = kNodeOverhead * (p0 + p1) + draw();
      out.push_back({t, names[n], Metric::Cpu0Power, p0});
      out.push_back({t, names[n], Metric::Cpu1Power, p1});
      out.push_back({t, names[n], Metric::Cpu0Temp, t0});
      out.push_back({t, names[n], Metric::Cpu1Temp, t1});
      out.push_back({t, names[n], Metric::NodePower, node_power});
    }
  }
  return out;
}

enum class FaultKind : std::uint8_t { PowerSpike, TempRunaway, StuckSensor, PairDivergence };

inline constexpr std::array<std::string_view, 4> kFaultNames{"power_spike", "temp_runaway", "stuck_sensor",
                                                              "pair_divergence"};

inline std::string_view fault_name(FaultKind k) { return kFaultNames[static_cast<std::size_t>(k)]; }

inline std::optional<FaultKind> parse_fault(std::string_view s) {
  for (std::size_t i = 0; i < kFaultNames.size(); ++i)
    if (kFaultNames[i] == s) return static_cast<FaultKind>(i);
  return std::nullopt;
}

/// Half-open window [start, end) in sample timestamps. `magnitude` is W or
/// degC for spikes and ramps, and the replacement load amplitude (W) for
/// pair_divergence; stuck_sensor ignores it beyond the positivity check.
struct FaultSpec {
  FaultKind kind = FaultKind::PowerSpike;
  std::string node_id;
  std::optional<Metric> metric;
  double start = 0.0;
  double end = 0.0;
  double magnitude = 1.0;
};

/// Ground truth; an absent metric means every metric of the node.
struct Label {
  std::string node_id;
  std::optional<Metric> metric;
  double start = 0.0;
  double end = 0.0;
  FaultKind kind = FaultKind::PowerSpike;

  bool operator==(const Label&) const = default;
};

struct LabeledDataset {
  std::vector<RawSample> samples;
  std::vector<Label> labels;
};

namespace detail {

inline std::optional<std::size_t> node_index(std::string_view name) {
  if (name.size() < 5 || name.substr(0, 4) != "node") return std::nullopt;
  std::size_t idx = 0;
  auto [p, ec] = std::from_chars(name.data() + 4, name.data() + name.size(), idx);
  if (ec != std::errc{} || p != name.data() + name.size()) return std::nullopt;
  return idx;
}

inline void apply_divergence(const SynthConfig& cfg, std::vector<RawSample>& samples, const FaultSpec& f,
                             std::size_t node) {
  const LoadModel loads(cfg);
  // Per-metric sample positions of this node, in time order.
  std::array<std::vector<std::size_t>, kNumFeatures> pos;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].node_id == f.node_id) pos[static_cast<std::size_t>(samples[i].metric)].push_back(i);
  for (std::size_t m = 1; m < kNumFeatures; ++m) {
    if (pos[m].size() != pos[0].size()) throw InvalidConfig("pair_divergence needs a complete generated stream");
    for (std::size_t k = 0; k < pos[0].size(); ++k)
      if (samples[pos[m][k]].timestamp != samples[pos[0][k]].timestamp)
        throw InvalidConfig("pair_divergence needs aligned metric timestamps");
  }

  constexpr std::array<Metric, 2> kPower{Metric::Cpu0Power, Metric::Cpu1Power};
  constexpr std::array<Metric, 2> kTemp{Metric::Cpu0Temp, Metric::Cpu1Temp};
  std::array<ThermalFilter, 2> thermal{ThermalFilter(cfg.temp_lag_alpha, cfg.temp_ambient, cfg.temp_gain),
                                       ThermalFilter(cfg.temp_lag_alpha, cfg.temp_ambient, cfg.temp_gain)};
  bool primed = false;
  for (std::size_t k = 0; k < pos[0].size(); ++k) {
    const double t = samples[pos[0][k]].timestamp;
    if (t < f.start || t >= f.end) continue;
    if (!primed) {
      for (std::size_t c = 0; c < 2; ++c)
        if (k > 0) thermal[c].prime(samples[pos[static_cast<std::size_t>(kTemp[c])][k - 1]].value);
      primed = true;
    }
    double delta_sum = 0.0;
    for (std::size_t c = 0; c < 2; ++c) {
      const double delta =
          f.magnitude * loads.divergent(node, c, t) - cfg.load_amplitude * loads.load(node, c, t);
      auto& p = samples[pos[static_cast<std::size_t>(kPower[c])][k]];
      p.value += delta;
      samples[pos[static_cast<std::size_t>(kTemp[c])][k]].value = thermal[c].step(p.value);
      delta_sum += delta;
    }
    samples[pos[static_cast<std::size_t>(Metric::NodePower)][k]].value += kNodeOverhead * delta_sum;
  }
}

}  // namespace detail

/// Applies faults in order and records one label per fault.
inline LabeledDataset inject(const SynthConfig& cfg, std::vector<RawSample> stream, std::span<const FaultSpec> faults) {
  LabeledDataset out;
  if (faults.empty()) {
    out.samples = std::move(stream);
    return out;
  }
  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -std::numeric_limits<double>::infinity();
  for (const auto& s : stream) {
    t_min = std::min(t_min, s.timestamp);
    t_max = std::max(t_max, s.timestamp);
  }

  for (const auto& f : faults) {
    if (!(f.start < f.end)) throw InvalidConfig("fault window must satisfy start < end");
    if (!(f.magnitude > 0)) throw InvalidConfig("fault magnitude must be > 0");
    if (stream.empty() || f.start < t_min || f.end > t_max + cfg.sample_period_seconds)
      throw FaultOutOfRange("fault window [" + format_double(f.start) + ", " + format_double(f.end) +
                            ") outside the stream");
    bool node_seen = false;
    for (const auto& s : stream)
      if (s.node_id == f.node_id) {
        node_seen = true;
        break;
      }
    if (!node_seen) throw FaultOutOfRange("fault targets unknown node '" + f.node_id + "'");

    if (f.kind == FaultKind::PairDivergence) {
      const auto idx = detail::node_index(f.node_id);
      if (!idx || *idx >= cfg.node_count()) throw FaultOutOfRange("pair_divergence needs a generated node id");
      detail::apply_divergence(cfg, stream, f, *idx);
      out.labels.push_back(Label{f.node_id, std::nullopt, f.start, f.end, f.kind});
      continue;
    }
    if (!f.metric) throw InvalidConfig(std::string(fault_name(f.kind)) + " needs a metric");
    std::optional<double> stuck_value;
    for (auto& s : stream) {
      if (s.node_id != f.node_id || s.metric != *f.metric || s.timestamp < f.start || s.timestamp >= f.end) continue;
      switch (f.kind) {
        case FaultKind::PowerSpike:
          s.value += f.magnitude;
          break;
        case FaultKind::TempRunaway:
          s.value += f.magnitude * (s.timestamp - f.start) / (f.end - f.start);
          break;
        case FaultKind::StuckSensor:
          if (!stuck_value) stuck_value = s.value;
          s.value = *stuck_value;
          break;
        case FaultKind::PairDivergence:
          break;
      }
    }
    out.labels.push_back(Label{f.node_id, f.metric, f.start, f.end, f.kind});
  }
  out.samples = std::move(stream);
  return out;
}

/// The six-fault evaluation scenario: 2 coupled pairs, 16 hours, faults of
/// all four kinds placed after the first interval.
struct Scenario {
  SynthConfig config;
  std::vector<FaultSpec> faults;
};

inline Scenario standard_scenario(std::uint64_t seed = 42, double interval_seconds = 14400.0) {
  Scenario s;
  s.config.seed = seed;
  s.config.node_pairs = 2;
  s.config.duration_seconds = 4.0 * interval_seconds;
  const double i = interval_seconds;
  auto at = [&](double frac) { return std::round(frac * i / 10.0) * 10.0; };
  s.faults = {
      {FaultKind::PowerSpike, node_name(0), Metric::Cpu0Power, i + at(0.25), i + at(0.25) + 300, 60.0},
      {FaultKind::TempRunaway, node_name(2), Metric::Cpu1Temp, i + at(0.5), i + at(0.5) + 1200, 20.0},
      {FaultKind::StuckSensor, node_name(1), Metric::NodePower, 2 * i + at(0.2), 2 * i + at(0.2) + 1800, 1.0},
      {FaultKind::PairDivergence, node_name(3), std::nullopt, 2 * i + at(0.4), 2 * i + at(0.4) + 3600, 160.0},
      {FaultKind::PowerSpike, node_name(2), Metric::Cpu1Power, 3 * i + at(0.28), 3 * i + at(0.28) + 300, 60.0},
      {FaultKind::TempRunaway, node_name(0), Metric::Cpu0Temp, 3 * i + at(0.55), 3 * i + at(0.55) + 1200, 20.0},
  };
  return s;
}

inline constexpr std::string_view kLabelHeader = "node_id,metric,start,end,kind";

inline void write_labels(std::ostream& out, std::span<const Label> labels) {
  out << kLabelHeader << '\n';
  for (const auto& l : labels) {
    out << l.node_id << ',' << (l.metric ? metric_name(*l.metric) : std::string_view("all")) << ','
        << format_double(l.start) << ',' << format_double(l.end) << ',' << fault_name(l.kind) << '\n';
  }
}

inline std::vector<Label> read_labels(std::istream& in) {
  std::vector<Label> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = odm::detail::trim(line);
    if (body.empty() || (line_no == 1 && body == kLabelHeader)) continue;
    std::vector<std::string_view> f;
    std::size_t pos = 0;
    while (true) {
      const auto c = body.find(',', pos);
      f.push_back(body.substr(pos, c == std::string_view::npos ? std::string_view::npos : c - pos));
      if (c == std::string_view::npos) break;
      pos = c + 1;
    }
    if (f.size() != 5) throw MalformedLine(line_no, "expected 5 label fields");
    Label l;
    l.node_id = std::string(f[0]);
    if (f[1] != "all") {
      const auto m = parse_metric(f[1]);
      if (!m) throw UnknownMetric(line_no, std::string(f[1]));
      l.metric = m;
    }
    const auto a = odm::detail::parse_double(f[2]);
    const auto b = odm::detail::parse_double(f[3]);
    const auto k = parse_fault(f[4]);
    if (!a || !b || !k) throw MalformedLine(line_no, "bad label field");
    l.start = *a;
    l.end = *b;
    l.kind = *k;
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace odm::synth
