// Acceptance gate: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit status is non-zero if
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "odm/app.hpp"
#include "odm/gradcheck.hpp"
#include "odm/orchestrate.hpp"
#include "odm/preprocess.hpp"
#include "odm/synth.hpp"
#include "odm/telemetry.hpp"
#include "odm/train.hpp"
#include "odm/window.hpp"

using namespace odm;

namespace {

struct Result {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1
Result parameter_budget() {
  const auto t0 = std::chrono::steady_clock::now();
  const model::Architecture arch;
  const auto closed = model::count_parameters(arch);
  const auto enumerated = model::count_parameters(model::AutoencoderParams::zeros(arch));
  const double dt = seconds_since(t0);
  return {closed == 67013 && enumerated == 67013 && closed < 68000 && dt < 1.0,
          fmt("formula=%zu enumerated=%zu (< 68000) in %.3fs", closed, enumerated, dt)};
}

// 2
Result gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = model::gradcheck(model::GradcheckConfig{});
  const double dt = seconds_since(t0);
  return {r.passed && r.max_rel_error < 1e-4 && dt < 60.0,
          fmt("coordinates=%zu max_rel_error=%.3e (< 1e-4) in %.2fs", r.coordinates, r.max_rel_error, dt)};
}

// 3
Result training_convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.node_pairs = 1;
  sc.duration_seconds = 14400;
  sc.seed = 42;
  const auto rows = downsample(synth::generate(sc))["node00"];
  const auto scaler = fit_scaler(rows, ScalerKind::MinMax);
  const auto windows = detail::training_windows(rows, scaler, 4, 1);
  auto params = model::AutoencoderParams::zeros(model::Architecture{});
  auto opt = model::AdamState::zeros_like(params);
  model::TrainConfig cfg;
  cfg.seed = 42;
  const auto r = model::train(params, opt, windows, cfg, model::StartMode::Cold);
  const double dt = seconds_since(t0);
  const double first = r.loss_history.front(), last = r.loss_history.back();
  return {rows.size() == 1440 && windows.size() == 1437 && r.loss_history.size() == 50 && last < 0.1 * first &&
              dt < 300.0,
          fmt("rows=%zu windows=%zu epoch1=%.5f epoch50=%.5f ratio=%.4f (< 0.1) in %.1fs", rows.size(), windows.size(),
              first, last, last / first, dt)};
}

// 4
Result detection_quality() {
  const auto t0 = std::chrono::steady_clock::now();
  app::RunConfig cfg;  // defaults: 2 pairs, 16 h, standard faults, slack 2
  std::ostringstream log;
  const auto j = app::evaluate(cfg, log);
  const double dt = seconds_since(t0);
  const double recall = j["recall"].get<double>();
  std::string lat;
  for (const auto& f : j["faults"]) {
    lat += " " + f["kind"].get<std::string>() + "@" + f["node"].get<std::string>() + "=";
    lat += f["latency_seconds"].is_null() ? std::string("miss") : fmt("%.0fs", f["latency_seconds"].get<double>());
  }
  return {recall >= 0.8 && j["labels"].get<int>() == 6 && dt < 1200.0,
          fmt("recall=%.3f (>= 0.8) precision=%.3f f1=%.3f events=%d labels=%d in %.0fs;", recall,
              j["precision"].get<double>(), j["f1"].get<double>(), j["events"].get<int>(), j["labels"].get<int>(), dt) +
              " latency:" + lat};
}

// 5
Result overlap_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> wd(1, 8);
  std::uniform_real_distribution<double> u(-10, 10);
  double worst = 0;
  std::size_t bad_coverage = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t w = wd(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(w, 50)(rng);
    const std::size_t stride = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    std::vector<Window> rec;
    for (std::size_t s = 0; s + w <= n; s += stride) {
      Matrix m(static_cast<Eigen::Index>(w), 5);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
      rec.push_back({s, m});
    }
    const auto got = overlap_average(rec, n);
    for (std::size_t t = 0; t < n; ++t) {
      double sum[5] = {0, 0, 0, 0, 0};
      std::size_t count = 0;
      for (const auto& win : rec) {
        if (t < win.start_index || t >= win.start_index + w) continue;
        ++count;
        for (int f = 0; f < 5; ++f) sum[f] += win.rows(static_cast<Eigen::Index>(t - win.start_index), f);
      }
      if (count != got.coverage[t]) ++bad_coverage;
      if (count == 0) continue;
      for (int f = 0; f < 5; ++f)
        worst = std::max(worst, std::abs(sum[f] / static_cast<double>(count) - got.mean(static_cast<Eigen::Index>(t), f)));
    }
  }
  const double dt = seconds_since(t0);
  return {worst <= 1e-12 && bad_coverage == 0 && dt < 10.0,
          fmt("1000 cases, max_abs_diff=%.2e (<= 1e-12), coverage_mismatches=%zu in %.2fs", worst, bad_coverage, dt)};
}

// 6
Result threshold_semantics() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  std::size_t failures = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<FeatureVector> errs(1 + trial % 97);
    for (auto& e : errs)
      for (auto& x : e) x = u(rng) * (trial % 3 == 0 ? 1e-6 : 1.0);
    const auto th = update_thresholds(errs, static_cast<std::uint64_t>(trial));
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      double m = errs[0][f];
      for (const auto& e : errs) m = e[f] > m ? e[f] : m;
      failures += th.thresholds[f] != m;
    }
    for (const auto& e : errs) failures += !detect(e, th, {}).empty();  // max row is never above itself
    FeatureVector probe{};
    for (std::size_t f = 0; f < kNumFeatures; ++f)
      probe[f] = f % 2 ? std::nextafter(th.thresholds[f], 2.0) : th.thresholds[f];
    failures += detect(probe, th, {}).size() != 2;
  }

  // Engine-level: warm-up silence and the k-1 -> k rule on a live stream.
  EngineConfig cfg;
  cfg.retrain_interval_buckets = 60;
  cfg.encoder = {8, 4};
  cfg.decoder = {4, 8};
  cfg.train.epochs = 3;
  synth::SynthConfig sc;
  sc.node_pairs = 1;
  sc.duration_seconds = 10.0 * 60 * 5;
  sc.job_period_seconds = 300;
  auto faulted = synth::inject(sc, synth::generate(sc),
                               std::vector<synth::FaultSpec>{{synth::FaultKind::PowerSpike, "node00",
                                                              Metric::Cpu0Power, 100, 400, 300}});
  const auto rows = downsample(faulted.samples)["node00"];
  NodeEngine e("node00", cfg);
  std::vector<Prediction> preds;
  std::size_t warmup_events = 0, events = 0;
  for (const auto& r : rows) {
    const bool warmup = e.interval_id() == 0;
    auto out = e.process_bucket(r);
    if (warmup) warmup_events += out.events.size();
    events += out.events.size();
    preds.insert(preds.end(), out.predictions.begin(), out.predictions.end());
  }
  std::map<std::uint64_t, FeatureVector> max_err;
  for (const auto& p : preds)
    for (std::size_t f = 0; f < kNumFeatures; ++f) max_err[p.interval_id][f] = std::max(max_err[p.interval_id][f], p.error[f]);
  std::size_t rule_violations = 0, checked = 0, expected_events = 0;
  for (const auto& p : preds) {
    if (p.interval_id == 0) {
      rule_violations += p.thresholds.has_value();
      continue;
    }
    ++checked;
    if (!p.thresholds || p.thresholds->source_interval + 1 != p.interval_id ||
        p.thresholds->thresholds != max_err[p.interval_id - 1])
      ++rule_violations;
    else
      for (std::size_t f = 0; f < kNumFeatures; ++f) expected_events += p.error[f] > p.thresholds->thresholds[f];
  }
  const double dt = seconds_since(t0);
  return {failures == 0 && warmup_events == 0 && rule_violations == 0 && checked == 240 && events == expected_events &&
              dt < 10.0,
          fmt("500 random sets: %zu failures; engine: warm-up events=%zu, k-1->k violations=%zu over %zu predictions, "
              "events=%zu (expected %zu) in %.2fs",
              failures, warmup_events, rule_violations, checked, events, expected_events, dt)};
}

// 7
Result downsampler_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  std::size_t compared = 0, missing = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<RawSample> s;
    double t = 10.0 * std::floor(u(rng) * 50);
    for (int k = 0; k < 300; ++k) {
      for (std::size_t node = 0; node < 2; ++node)
        for (std::size_t m = 0; m < kNumFeatures; ++m)
          if (u(rng) > 0.03) s.push_back({t, "n" + std::to_string(node), static_cast<Metric>(m), (u(rng) - 0.5) * 400});
      // Mix of exact bucket multiples, sub-bucket jitter and gaps.
      const double r = u(rng);
      t += r < 0.3 ? 10.0 - std::fmod(t, 10.0) : (r < 0.35 ? 10.0 * std::floor(1 + 5 * u(rng)) : 3.0 * u(rng));
    }
    std::map<std::tuple<std::string, std::int64_t, std::size_t>, std::pair<double, std::size_t>> oracle;
    for (const auto& x : s) {
      auto& g = oracle[{x.node_id, static_cast<std::int64_t>(std::floor(x.timestamp / 10.0)) * 10,
                        static_cast<std::size_t>(x.metric)}];
      g.first += x.value;
      ++g.second;
    }
    for (const auto& [node, rows] : downsample(s)) {
      for (const auto& r : rows)
        for (std::size_t m = 0; m < kNumFeatures; ++m) {
          if (!r.filled[m]) continue;
          const auto it = oracle.find({node, r.bucket_start, m});
          if (it == oracle.end()) {
            ++missing;
            continue;
          }
          const double expect = it->second.first / static_cast<double>(it->second.second);
          worst = std::max(worst, std::abs(r.features[m] - expect) / std::max(1.0, std::abs(expect)));
          ++compared;
        }
    }
  }
  // Half-open: a sample at exactly 10 * k belongs to bucket k.
  std::vector<RawSample> edge;
  for (double ts : {0.0, 9.999999, 10.0, 19.5, 20.0})
    for (std::size_t m = 0; m < kNumFeatures; ++m) edge.push_back({ts, "e", static_cast<Metric>(m), ts});
  const auto er = downsample(edge)["e"];
  const bool half_open = er.size() == 3 && er[0].bucket_start == 0 && er[0].features[0] == (0.0 + 9.999999) / 2 &&
                         er[1].bucket_start == 10 && er[1].features[0] == (10.0 + 19.5) / 2 &&
                         er[2].bucket_start == 20 && er[2].features[0] == 20.0;
  const double dt = seconds_since(t0);
  return {worst <= 1e-12 && missing == 0 && compared > 100000 && half_open,
          fmt("%zu bucket values, max_rel_diff=%.2e (<= 1e-12), half-open boundaries %s in %.2fs", compared, worst,
              half_open ? "ok" : "WRONG", dt)};
}

// 8
Result no_stall() {
  EngineConfig cfg;
  cfg.retrain_interval_buckets = 120;
  cfg.train.epochs = 2;
  cfg.train.step_delay = std::chrono::milliseconds(100);
  cfg.background_training = true;
  synth::SynthConfig sc;
  sc.node_pairs = 1;
  sc.duration_seconds = 10.0 * 120 * 5;
  StreamProcessor proc(cfg);
  Downsampler ds;
  // Latency of buckets that ran inference on the previous snapshot while a
  // retrain of the same node was in flight.
  std::vector<double> latencies;
  std::size_t swaps = 0, predictions = 0;
  for (const auto& s : synth::generate(sc)) {
    for (const auto& row : ds.push(s)) {
      NodeEngine& e = proc.engine(row.node_id);
      const bool serving = e.retrain_pending() && e.active().model;
      const auto t0 = std::chrono::steady_clock::now();
      const auto out = e.process_bucket(row);
      const double dt = seconds_since(t0);
      if (out.swapped) {
        ++swaps;
        continue;
      }
      if (!serving) continue;
      latencies.push_back(dt);
      predictions += out.predictions.size();
    }
  }
  for (auto& [node, e] : proc.engines()) e->finish();
  const double p50 = app::percentile(latencies, 0.5), p99 = app::percentile(latencies, 0.99);
  return {p50 < 0.050 && !latencies.empty() && predictions > 0,
          fmt("100ms/step training delay: median=%.3fms (< 50ms) p99=%.3fms over %zu buckets served during a retrain "
              "(%zu predictions), %zu swaps",
              1e3 * p50, 1e3 * p99, latencies.size(), predictions, swaps)};
}

// 9
Result determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  app::RunConfig cfg;
  cfg.hours = 4;
  cfg.retrain_buckets = 360;
  cfg.epochs = 10;
  cfg.deterministic = true;
  const auto data = app::make_dataset(cfg);
  const std::string path = "acceptance_determinism_input.csv";
  {
    std::ofstream out(path);
    write_samples(out, data.samples);
  }
  cfg.input = path;
  auto run = [&](auto cmd) {
    std::ostringstream out, err;
    const int code = cmd(cfg, out, err);
    return std::make_pair(code, out.str());
  };
  const auto e1 = run(app::cmd_replay), e2 = run(app::cmd_replay);
  const auto x1 = run(app::cmd_export), x2 = run(app::cmd_export);
  std::remove(path.c_str());
  const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
  const double dt = seconds_since(t0);
  return {e1.first == 0 && x1.first == 0 && e1 == e2 && x1 == x2 && count(e1.second) > 0,
          fmt("events: %ld lines identical=%s; export: %ld lines identical=%s in %.1fs", count(e1.second),
              e1 == e2 ? "yes" : "no", count(x1.second), x1 == x2 ? "yes" : "no", dt)};
}

// 10
Result scaler_round_trip() {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> expo(-4, 4), u(-1, 1);
  double worst = 0;
  std::size_t degenerate_violations = 0, degenerate_seen = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<FeatureVector> rows(1 + trial % 20);
    FeatureVector scale{}, centre{};
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      scale[f] = std::pow(10.0, expo(rng));
      centre[f] = 100 * u(rng) * scale[f];
    }
    const bool constant_feature = trial % 7 == 0;
    for (auto& r : rows)
      for (std::size_t f = 0; f < kNumFeatures; ++f) r[f] = constant_feature && f == 2 ? centre[f] : centre[f] + scale[f] * u(rng);
    const auto kind = trial % 2 ? ScalerKind::Standard : ScalerKind::MinMax;
    const auto st = fit_scaler(rows, kind);
    FeatureVector v{};
    for (std::size_t f = 0; f < kNumFeatures; ++f) v[f] = centre[f] + 3 * scale[f] * u(rng);
    const auto y = transform(st, v);
    const auto back = inverse_transform(st, y);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      if (st.degenerate(f)) {
        ++degenerate_seen;
        const double constant = st.offset[f];  // min or mean of a constant column
        degenerate_violations += y[f] != 0.0 || back[f] != constant || constant != rows[0][f];
        continue;
      }
      worst = std::max(worst, std::abs(back[f] - v[f]) / std::max(1.0, std::abs(v[f])));
    }
  }
  return {worst <= 1e-9 && degenerate_violations == 0 && degenerate_seen > 0,
          fmt("10000 states, max_rel_error=%.2e (<= 1e-9), degenerate features checked=%zu violations=%zu", worst,
              degenerate_seen, degenerate_violations)};
}

}  // namespace

// Usage: acceptance [N ...] runs only the listed criteria.
int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria{
      {"parameter-budget", parameter_budget},
      {"gradient-check", gradient_check},
      {"training-convergence", training_convergence},
      {"detection-quality", detection_quality},
      {"overlap-oracle", overlap_oracle},
      {"threshold-semantics", threshold_semantics},
      {"downsampler-oracle", downsampler_oracle},
      {"no-stall", no_stall},
      {"determinism", determinism},
      {"scaler-round-trip", scaler_round_trip},
  };
  std::vector<bool> selected(criteria.size(), argc <= 1);
  for (int a = 1; a < argc; ++a) {
    const auto n = static_cast<std::size_t>(std::atoi(argv[a]));
    if (n >= 1 && n <= criteria.size()) selected[n - 1] = true;
  }
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Result r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failed += !r.pass;
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << i + 1 << ' ' << criteria[i].first << ": " << r.detail << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : std::string("acceptance: all criteria passed"))
            << std::endl;
  return failed ? 1 : 0;
}
