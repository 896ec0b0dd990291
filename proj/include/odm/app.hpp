#pragma once

// Command implementations behind the `odm` executable. Each command takes
// a RunConfig plus output streams and returns a process exit code:
// 0 success, 1 internal failure, 2 bad input.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "odm/detect.hpp"
#include "odm/format.hpp"
#include "odm/gradcheck.hpp"
#include "odm/orchestrate.hpp"
#include "odm/score.hpp"
#include "odm/synth.hpp"
#include "odm/telemetry.hpp"

namespace odm::app {

struct RunConfig {
  std::string input;
  std::string output;
  std::string labels;
  std::string state_dir;
  std::size_t window = 4;
  std::size_t stride = 1;
  std::int64_t bucket_seconds = 10;
  std::size_t retrain_buckets = 1440;
  ScalerKind scaler = ScalerKind::MinMax;
  int epochs = 50;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  bool deterministic = false;
  // synth / eval
  std::size_t pairs = 2;
  double hours = 16.0;
  std::string faults = "standard";
  std::int64_t slack = 2;
  // gradcheck negative control
  bool corrupt_gradient = false;

  EngineConfig engine() const {
    EngineConfig e;
    e.window = window;
    e.train_stride = stride;
    e.retrain_interval_buckets = retrain_buckets;
    e.scaler = scaler;
    e.train.epochs = epochs;
    e.train.learning_rate = lr;
    e.train.batch_size = batch_size;
    e.train.seed = seed;
    e.background_training = !deterministic;
    return e;
  }

  DownsampleConfig downsample() const { return DownsampleConfig{bucket_seconds, 3}; }
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitBadInput = 2;

/// Thrown for problems with user-supplied input (exit code 2).
class InputError : public Error {
 public:
  using Error::Error;
};

struct PipelineSummary {
  std::size_t samples = 0;
  std::size_t buckets = 0;
  std::size_t nodes = 0;
  std::uint64_t intervals = 0;
  std::size_t retrains = 0;
  std::size_t events = 0;
  std::size_t predictions = 0;
  std::vector<double> latencies;
  double wall_seconds = 0.0;
};

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, idx == 0 ? 0 : idx - 1)];
}

inline void print_summary(std::ostream& err, const PipelineSummary& s) {
  err << "samples=" << s.samples << " buckets=" << s.buckets << " nodes=" << s.nodes
      << " intervals=" << s.intervals << " retrains=" << s.retrains << " predictions=" << s.predictions
      << " events=" << s.events << '\n';
  err << "bucket latency ms: p50=" << 1e3 * percentile(s.latencies, 0.5)
      << " p90=" << 1e3 * percentile(s.latencies, 0.9) << " p99=" << 1e3 * percentile(s.latencies, 0.99)
      << " max=" << 1e3 * percentile(s.latencies, 1.0) << "  wall=" << s.wall_seconds << "s\n";
}

struct PipelineHooks {
  std::function<void(const AnomalyEvent&)> on_event;
  std::function<void(const Prediction&)> on_prediction;
  // Called after every input line has been handled (live mode flushes here).
  std::function<void()> on_line;
  Trainer trainer = default_trainer();
  // Skip malformed lines with a warning instead of failing.
  bool tolerate_bad_lines = false;
};

namespace detail {

inline std::filesystem::path state_path(const std::string& dir, const std::string& node) {
  return std::filesystem::path(dir) / (node + ".state");
}

inline void attach_state_dir(StreamProcessor& proc, const std::string& dir, std::ostream& err) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  proc.on_create = [dir, &err](NodeEngine& e) {
    const auto path = state_path(dir, e.node_id());
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path, std::ios::binary);
    std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
      e.restore_state(blob);
      err << "restored " << e.node_id() << " at interval " << e.interval_id() << '\n';
    } catch (const Error& ex) {
      err << "warning: ignoring state for " << e.node_id() << ": " << ex.what() << " (starting cold)\n";
    }
  };
  proc.on_swap = [dir](NodeEngine& e) {
    const auto blob = e.save_state();
    const auto path = state_path(dir, e.node_id());
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    }
    std::filesystem::rename(tmp, path);
  };
}

}  // namespace detail

/// Runs the full detection pipeline over a sample stream.
inline PipelineSummary run_pipeline(const RunConfig& cfg, std::istream& in, const PipelineHooks& hooks,
                                    std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  StreamProcessor proc(cfg.engine(), cfg.downsample(), hooks.trainer);
  detail::attach_state_dir(proc, cfg.state_dir, err);
  PipelineSummary summary;
  auto deliver = [&](BucketOutput&& out) {
    for (const auto& p : out.predictions) {
      ++summary.predictions;
      if (hooks.on_prediction) hooks.on_prediction(p);
    }
    for (const auto& e : out.events) {
      ++summary.events;
      if (hooks.on_event) hooks.on_event(e);
    }
  };

  SampleReader reader(in);
  while (true) {
    std::optional<RawSample> s;
    try {
      s = reader.next();
    } catch (const Error& ex) {
      if (!hooks.tolerate_bad_lines) throw InputError(ex.what());
      err << "warning: " << ex.what() << '\n';
      continue;
    }
    if (!s) break;
    ++summary.samples;
    try {
      deliver(proc.push(*s));
    } catch (const OutOfOrderAcrossBuckets& ex) {
      if (!hooks.tolerate_bad_lines) throw InputError("line " + std::to_string(reader.line_no()) + ": " + ex.what());
      err << "warning: line " << reader.line_no() << ": " << ex.what() << '\n';
    }
    if (hooks.on_line) hooks.on_line();
  }
  deliver(proc.finish());

  summary.buckets = proc.buckets();
  summary.nodes = proc.engines().size();
  for (const auto& [node, e] : proc.engines()) {
    summary.intervals = std::max(summary.intervals, e->interval_id());
    for (const auto& r : e->reports()) summary.retrains += r.trained ? 1 : 0;
  }
  summary.latencies = proc.latencies();
  summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summary;
}

namespace detail {

/// Opens `path` for writing, or returns `fallback` when path is empty.
class OutputTarget {
 public:
  OutputTarget(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
      if (!*file_) throw InputError("cannot open output file: " + path);
      stream_ = file_.get();
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

inline std::ifstream open_input(const std::string& path) {
  if (path.empty()) throw InputError("--input is required");
  std::ifstream in(path);
  if (!in) throw InputError("cannot open input file: " + path);
  return in;
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const InvalidConfig& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace detail

inline int cmd_replay(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    auto in = detail::open_input(cfg.input);
    detail::OutputTarget target(cfg.output, out);
    PipelineHooks hooks;
    hooks.on_event = [&](const AnomalyEvent& e) { target.get() << to_json_line(e) << '\n'; };
    const auto summary = run_pipeline(cfg, in, hooks, err);
    target.get().flush();
    print_summary(err, summary);
    return kExitOk;
  });
}

inline std::string export_header() {
  std::string h = "t,node,interval,coverage";
  for (auto name : kMetricNames) {
    for (const char* col : {"_value", "_actual", "_reconstructed", "_error", "_threshold"}) {
      h += ',';
      h += name;
      h += col;
    }
  }
  return h;
}

/// `*_actual`, `*_reconstructed`, `*_error` and `*_threshold` are in scaled
/// space; `*_value` is the raw bucket mean. Threshold cells are empty while
/// no thresholds exist.
inline std::string export_row(const Prediction& p) {
  std::string row = std::to_string(p.bucket_start) + ',' + p.node_id + ',' + std::to_string(p.interval_id) + ',' +
                    std::to_string(p.coverage);
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    row += ',' + format_double(p.raw_value[f]);
    row += ',' + format_double(p.actual_scaled[f]);
    row += ',' + format_double(p.predicted_scaled[f]);
    row += ',' + format_double(p.error[f]);
    row += ',';
    if (p.thresholds) row += format_double(p.thresholds->thresholds[f]);
  }
  return row;
}

inline int cmd_export(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    auto in = detail::open_input(cfg.input);
    detail::OutputTarget target(cfg.output, out);
    target.get() << export_header() << '\n';
    PipelineHooks hooks;
    hooks.on_prediction = [&](const Prediction& p) { target.get() << export_row(p) << '\n'; };
    const auto summary = run_pipeline(cfg, in, hooks, err);
    target.get().flush();
    print_summary(err, summary);
    return kExitOk;
  });
}

/// The scenario synth/eval generate from the config.
inline synth::Scenario make_scenario(const RunConfig& cfg) {
  const double interval_seconds = static_cast<double>(cfg.retrain_buckets) * static_cast<double>(cfg.bucket_seconds);
  auto s = synth::standard_scenario(cfg.seed, interval_seconds);
  s.config.node_pairs = cfg.pairs;
  s.config.duration_seconds = cfg.hours * 3600.0;
  if (cfg.faults == "none") {
    s.faults.clear();
  } else if (cfg.faults != "standard") {
    throw InvalidConfig("--faults must be 'standard' or 'none'");
  }
  std::erase_if(s.faults, [&](const synth::FaultSpec& f) {
    const auto idx = synth::detail::node_index(f.node_id);
    return f.end > s.config.duration_seconds || !idx || *idx >= s.config.node_count();
  });
  return s;
}

inline synth::LabeledDataset make_dataset(const RunConfig& cfg) {
  const auto scenario = make_scenario(cfg);
  return synth::inject(scenario.config, synth::generate(scenario.config), scenario.faults);
}

inline int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto data = make_dataset(cfg);
    detail::OutputTarget target(cfg.output, out);
    write_samples(target.get(), data.samples);
    if (!cfg.labels.empty()) {
      std::ofstream lf(cfg.labels, std::ios::trunc);
      if (!lf) throw InputError("cannot open labels file: " + cfg.labels);
      synth::write_labels(lf, data.labels);
    }
    err << "samples=" << data.samples.size() << " labels=" << data.labels.size() << '\n';
    return kExitOk;
  });
}

/// Replays a labeled dataset with synchronous retraining and scores the
/// events. The JSON report depends only on config and data.
inline nlohmann::ordered_json evaluate(const RunConfig& cfg, std::ostream& err) {
  std::vector<RawSample> samples;
  std::vector<synth::Label> labels;
  if (!cfg.input.empty()) {
    auto in = detail::open_input(cfg.input);
    try {
      samples = read_samples(in);
    } catch (const Error& e) {
      throw InputError(e.what());
    }
    if (!cfg.labels.empty()) {
      std::ifstream lf(cfg.labels);
      if (!lf) throw InputError("cannot open labels file: " + cfg.labels);
      try {
        labels = synth::read_labels(lf);
      } catch (const Error& e) {
        throw InputError(e.what());
      }
    }
  } else {
    auto data = make_dataset(cfg);
    samples = std::move(data.samples);
    labels = std::move(data.labels);
  }

  std::stringstream csv;
  write_samples(csv, samples);
  RunConfig run = cfg;
  run.deterministic = true;
  run.state_dir.clear();
  std::vector<AnomalyEvent> events;
  PipelineHooks hooks;
  hooks.on_event = [&](const AnomalyEvent& e) { events.push_back(e); };
  const auto summary = run_pipeline(run, csv, hooks, err);
  print_summary(err, summary);

  const auto report = synth::score(events, labels, cfg.slack, cfg.bucket_seconds);
  auto j = synth::to_json(report);
  j["buckets"] = summary.buckets;
  j["retrains"] = summary.retrains;
  return j;
}

inline int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto report = evaluate(cfg, err);
    detail::OutputTarget target(cfg.output, out);
    target.get() << report.dump(2) << '\n';
    return kExitOk;
  });
}

inline int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    model::GradcheckConfig gc;
    gc.seed = cfg.seed;
    gc.corrupt = cfg.corrupt_gradient;
    const auto r = model::gradcheck(gc);
    for (const auto& t : r.tensors) out << t.name << " n=" << t.size << " max_rel_error=" << t.max_rel_error << '\n';
    out << "coordinates=" << r.coordinates << " max_rel_error=" << r.max_rel_error << " tolerance=" << gc.tolerance
        << ' ' << (r.passed ? "PASS" : "FAIL") << '\n';
    return r.passed ? kExitOk : kExitInternal;
  });
}

}  // namespace odm::app
