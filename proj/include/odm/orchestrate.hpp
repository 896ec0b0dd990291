#pragma once

// Progressive-learning cycle per node.
//
// Every `retrain_interval_buckets` rows the engine closes the interval:
// thresholds become the per-feature max error of the finished interval,
// the scaler is refit on that interval, and the model is warm-retrained on
// it. The three are published together. With background training enabled
// the retrain runs on its own thread and inference keeps using the
// previous snapshot until the new one is published.
//
// Interval 0 is a bootstrap: no model or scaler exists yet, so rows are
// only collected. At its end the model is cold-trained, and the interval's
// own reconstruction errors under that model seed the first thresholds.
// Nothing is ever reported for interval 0.

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "odm/checkpoint.hpp"
#include "odm/detect.hpp"
#include "odm/errors.hpp"
#include "odm/model.hpp"
#include "odm/preprocess.hpp"
#include "odm/telemetry.hpp"
#include "odm/train.hpp"
#include "odm/window.hpp"

namespace odm {

struct EngineConfig {
  std::size_t window = 4;
  std::size_t train_stride = 1;
  std::size_t retrain_interval_buckets = 1440;
  ScalerKind scaler = ScalerKind::MinMax;
  std::vector<std::size_t> encoder{64, 32, 16};
  std::vector<std::size_t> decoder{16, 32, 64};
  model::TrainConfig train{};
  bool background_training = false;

  model::Architecture architecture() const { return model::Architecture{kNumFeatures, window, encoder, decoder}; }

  void validate() const {
    if (window < 1) throw InvalidConfig("window must be >= 1");
    if (train_stride < 1) throw InvalidConfig("stride must be >= 1");
    if (retrain_interval_buckets < window) throw InvalidConfig("retrain interval must hold at least one window");
    architecture().validate();
    train.validate();
  }
};

/// One finalized bucket: averaged reconstruction and its errors.
struct Prediction {
  std::int64_t bucket_start = 0;
  std::string node_id;
  std::uint64_t interval_id = 0;
  std::size_t coverage = 0;
  FeatureVector raw_value{};
  FeatureVector actual_scaled{};
  FeatureVector predicted_scaled{};
  FeatureVector predicted_raw{};
  FeatureVector error{};
  std::optional<ThresholdSet> thresholds;
};

struct RetrainReport {
  std::uint64_t interval_id = 0;  // interval whose data was used
  bool trained = false;
  std::string message;
  std::vector<double> loss_history;
};

struct BucketOutput {
  std::vector<Prediction> predictions;
  std::vector<AnomalyEvent> events;
  bool swapped = false;

  void append(BucketOutput&& o) {
    predictions.insert(predictions.end(), std::make_move_iterator(o.predictions.begin()),
                       std::make_move_iterator(o.predictions.end()));
    events.insert(events.end(), std::make_move_iterator(o.events.begin()), std::make_move_iterator(o.events.end()));
    swapped = swapped || o.swapped;
  }
};

/// The snapshot detection reads. Replaced as a whole, never mutated.
struct ActiveSet {
  std::shared_ptr<const model::AutoencoderParams> model;
  std::shared_ptr<const model::AdamState> optimizer;
  std::optional<ScalerState> scaler;
  std::optional<ThresholdSet> thresholds;
};

using Trainer = std::function<model::TrainResult(model::AutoencoderParams&, model::AdamState&,
                                                 std::span<const Matrix>, const model::TrainConfig&,
                                                 model::StartMode, std::stop_token)>;

inline Trainer default_trainer() {
  return [](model::AutoencoderParams& p, model::AdamState& o, std::span<const Matrix> w,
            const model::TrainConfig& c, model::StartMode m, std::stop_token st) {
    return model::train(p, o, w, c, m, std::move(st));
  };
}

inline constexpr std::uint8_t kStateFormatVersion = 1;
inline constexpr std::string_view kStateMagic = "ODMS";

namespace detail {

/// Windows over the scaled rows of every segment of one interval.
inline std::vector<Matrix> training_windows(std::span<const FeatureRow> rows, const ScalerState& scaler,
                                            std::size_t w, std::size_t stride) {
  std::vector<Matrix> out;
  for (auto seg : split_segments(rows)) {
    std::vector<FeatureVector> scaled;
    scaled.reserve(seg.size());
    for (const auto& r : seg) scaled.push_back(transform(scaler, r.features));
    for (auto& win : build_windows(scaled, w, stride)) out.push_back(std::move(win.rows));
  }
  return out;
}

/// Batch overlap-averaged predictions over every segment of `rows`.
inline std::vector<Prediction> predict_rows(std::span<const FeatureRow> rows, const model::AutoencoderParams& params,
                                            const ScalerState& scaler, std::uint64_t interval_id) {
  std::vector<Prediction> out;
  const std::size_t w = params.arch.window;
  for (auto seg : split_segments(rows)) {
    std::vector<FeatureVector> scaled;
    for (const auto& r : seg) scaled.push_back(transform(scaler, r.features));
    auto windows = build_windows(scaled, w, 1);
    if (windows.empty()) continue;
    std::vector<Matrix> inputs;
    for (const auto& win : windows) inputs.push_back(win.rows);
    auto recon = model::forward_batch(params, inputs);
    for (std::size_t k = 0; k < windows.size(); ++k) windows[k].rows = std::move(recon[k]);
    const auto avg = overlap_average(windows, seg.size());
    for (std::size_t t = 0; t < seg.size(); ++t) {
      if (!avg.present(t)) continue;
      Prediction p;
      p.bucket_start = seg[t].bucket_start;
      p.node_id = seg[t].node_id;
      p.interval_id = interval_id;
      p.coverage = avg.coverage[t];
      p.raw_value = seg[t].features;
      p.actual_scaled = scaled[t];
      for (std::size_t f = 0; f < kNumFeatures; ++f)
        p.predicted_scaled[f] = avg.mean(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(f));
      p.predicted_raw = inverse_transform(scaler, p.predicted_scaled);
      p.error = per_feature_error(p.predicted_scaled, p.actual_scaled);
      out.push_back(std::move(p));
    }
  }
  return out;
}

struct RetrainJob {
  std::uint64_t interval_id = 0;
  std::vector<FeatureRow> rows;
  std::vector<FeatureVector> errors;
  std::shared_ptr<const ActiveSet> base;
};

struct RetrainOutcome {
  std::shared_ptr<const ActiveSet> next;
  RetrainReport report;
  std::vector<Prediction> bootstrap_predictions;
};

inline RetrainOutcome run_retrain(const RetrainJob& job, const EngineConfig& cfg, const Trainer& trainer,
                                  std::stop_token stop) {
  auto next = std::make_shared<ActiveSet>(*job.base);
  RetrainOutcome outcome;
  outcome.report.interval_id = job.interval_id;
  const bool bootstrap = !job.base->model;
  if (!bootstrap && !job.errors.empty()) next->thresholds = update_thresholds(job.errors, job.interval_id);

  try {
    const ScalerState scaler = fit_scaler(job.rows, cfg.scaler);
    const auto windows = training_windows(job.rows, scaler, cfg.window, cfg.train_stride);
    auto params = bootstrap ? model::AutoencoderParams::zeros(cfg.architecture()) : *job.base->model;
    auto opt = bootstrap || !job.base->optimizer ? model::AdamState::zeros_like(params) : *job.base->optimizer;
    model::TrainConfig tc = cfg.train;
    if (!bootstrap) tc.seed = cfg.train.seed + 0x9e3779b97f4a7c15ULL * job.interval_id;
    auto result =
        trainer(params, opt, windows, tc, bootstrap ? model::StartMode::Cold : model::StartMode::Warm, stop);
    outcome.report.loss_history = std::move(result.loss_history);
    if (result.cancelled) {
      outcome.report.message = "cancelled";
      outcome.next = job.base;
      return outcome;
    }
    next->model = std::make_shared<const model::AutoencoderParams>(std::move(params));
    next->optimizer = std::make_shared<const model::AdamState>(std::move(opt));
    next->scaler = scaler;
    outcome.report.trained = true;
    if (bootstrap) {
      outcome.bootstrap_predictions = predict_rows(job.rows, *next->model, scaler, job.interval_id);
      std::vector<FeatureVector> errors;
      for (const auto& p : outcome.bootstrap_predictions) errors.push_back(p.error);
      if (!errors.empty()) next->thresholds = update_thresholds(errors, job.interval_id);
    }
  } catch (const TrainingFailed& e) {
    outcome.report.message = e.what();
  } catch (const EmptyTrainingSet& e) {
    outcome.report.message = e.what();
  }
  outcome.next = std::move(next);
  return outcome;
}

}  // namespace detail

/// Owns the cycle state of one node. Not thread-safe: one caller drives it;
/// only the retrain itself may run on a worker thread.
class NodeEngine {
 public:
  NodeEngine(std::string node_id, EngineConfig cfg, Trainer trainer = default_trainer())
      : node_id_(std::move(node_id)),
        cfg_(std::move(cfg)),
        trainer_(std::move(trainer)),
        active_(std::make_shared<const ActiveSet>()) {
    cfg_.validate();
  }

  NodeEngine(const NodeEngine&) = delete;
  NodeEngine& operator=(const NodeEngine&) = delete;

  ~NodeEngine() {
    if (worker_.joinable()) {
      worker_.request_stop();
      worker_.join();
    }
  }

  /// Feeds one downsampled row. Rows must be in bucket order.
  BucketOutput process_bucket(const FeatureRow& row) {
    if (row.node_id != node_id_) throw Error("row for node '" + row.node_id + "' sent to engine '" + node_id_ + "'");
    BucketOutput out;
    poll(out, false);
    if (segment_ && *segment_ != row.segment) reset_inference(out);
    segment_ = row.segment;
    infer(row, out);
    interval_rows_.push_back(row);
    if (interval_rows_.size() == cfg_.retrain_interval_buckets) end_of_interval(out);
    return out;
  }

  /// Closes the current interval immediately.
  BucketOutput end_of_interval() {
    BucketOutput out;
    end_of_interval(out);
    return out;
  }

  /// Waits for an in-flight retrain and publishes it.
  BucketOutput drain() {
    BucketOutput out;
    poll(out, true);
    return out;
  }

  /// End of input: publishes any pending retrain and finalizes the tail.
  BucketOutput finish() {
    BucketOutput out;
    poll(out, true);
    reset_inference(out);
    return out;
  }

  /// Serializes model, optimizer moments, scaler, thresholds and interval
  /// id. The partially collected interval is not included.
  std::vector<std::uint8_t> save_state() const {
    if (job_.valid()) throw Error("cannot save state while a retrain is in flight");
    io::Writer w;
    w.magic(kStateMagic);
    w.u8(kStateFormatVersion);
    w.u32(static_cast<std::uint32_t>(node_id_.size()));
    w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(node_id_.data()), node_id_.size()));
    w.u64(interval_id_);
    const auto& a = *active_;
    w.u8(a.scaler ? 1 : 0);
    if (a.scaler) {
      w.u8(static_cast<std::uint8_t>(a.scaler->kind));
      w.u64(a.scaler->fitted_on);
      w.f64s(a.scaler->offset);
      w.f64s(a.scaler->extent);
    }
    w.u8(a.thresholds ? 1 : 0);
    if (a.thresholds) {
      w.f64s(a.thresholds->thresholds);
      w.u64(a.thresholds->source_interval);
      w.u64(a.thresholds->row_count);
    }
    w.u8(a.model ? 1 : 0);
    if (a.model) {
      const auto blob = save_model(*a.model, a.optimizer.get());
      w.u32(static_cast<std::uint32_t>(blob.size()));
      w.bytes(blob);
    }
    return std::move(w).finish();
  }

  /// Replaces the active state with a saved one and starts a fresh interval.
  /// On error the engine is left unchanged.
  void restore_state(std::span<const std::uint8_t> blob) {
    if (job_.valid()) throw Error("cannot restore state while a retrain is in flight");
    io::Reader r(io::open_blob(blob, kStateMagic, kStateFormatVersion));
    const auto name_len = r.u32();
    const auto name = r.take(name_len);
    std::string node(name.begin(), name.end());
    if (node != node_id_) throw CorruptBlob("state belongs to node '" + node + "'");
    const auto interval = r.u64();
    ActiveSet a;
    if (r.u8()) {
      ScalerState s;
      const auto kind = r.u8();
      if (kind > 1) throw CorruptBlob("unknown scaler kind");
      s.kind = static_cast<ScalerKind>(kind);
      s.fitted_on = r.u64();
      r.f64s(s.offset);
      r.f64s(s.extent);
      a.scaler = s;
    }
    if (r.u8()) {
      ThresholdSet t;
      r.f64s(t.thresholds);
      t.source_interval = r.u64();
      t.row_count = r.u64();
      a.thresholds = t;
    }
    if (r.u8()) {
      const auto len = r.u32();
      auto cp = load_model(r.take(len));
      if (!(cp.params.arch == cfg_.architecture())) throw DimensionMismatch("saved model architecture differs");
      a.model = std::make_shared<const model::AutoencoderParams>(std::move(cp.params));
      a.optimizer = std::make_shared<const model::AdamState>(
          cp.optimizer ? std::move(*cp.optimizer) : model::AdamState::zeros_like(*a.model));
    }
    if (r.remaining() != 0) throw CorruptBlob("trailing bytes in state");

    BucketOutput discard;
    reset_inference(discard);
    interval_rows_.clear();
    interval_errors_.clear();
    interval_id_ = interval;
    active_ = std::make_shared<const ActiveSet>(std::move(a));
  }

  const std::string& node_id() const noexcept { return node_id_; }
  std::uint64_t interval_id() const noexcept { return interval_id_; }
  const ActiveSet& active() const noexcept { return *active_; }
  std::shared_ptr<const ActiveSet> active_snapshot() const noexcept { return active_; }
  bool retrain_pending() const noexcept { return job_.valid(); }
  std::size_t rows_in_interval() const noexcept { return interval_rows_.size(); }
  std::span<const FeatureVector> interval_errors() const noexcept { return interval_errors_; }
  const std::vector<RetrainReport>& reports() const noexcept { return reports_; }
  const EngineConfig& config() const noexcept { return cfg_; }

 private:
  struct PendingRow {
    std::int64_t bucket_start;
    FeatureVector raw;
    FeatureVector scaled;
  };

  void infer(const FeatureRow& row, BucketOutput& out) {
    const auto& a = *active_;
    if (!a.model || !a.scaler) return;
    const std::size_t w = cfg_.window;
    const FeatureVector scaled = transform(*a.scaler, row.features);
    pending_.push_back(PendingRow{row.bucket_start, row.features, scaled});
    recent_.push_back(scaled);
    if (recent_.size() > w) recent_.pop_front();
    const std::size_t index = next_index_++;
    if (recent_.size() < w) return;

    Matrix win(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(kNumFeatures));
    for (std::size_t t = 0; t < w; ++t)
      for (std::size_t f = 0; f < kNumFeatures; ++f)
        win(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(f)) = recent_[t][f];
    averager_.add(index + 1 - w, model::forward(*a.model, win));
    emit(averager_.finalize_before(index + 2 - w), out);
  }

  void emit(std::vector<OverlapAverager::Finalized>&& done, BucketOutput& out) {
    const auto& a = *active_;
    for (auto& f : done) {
      while (pending_base_ < f.index) {
        pending_.pop_front();
        ++pending_base_;
      }
      const PendingRow& row = pending_.front();
      Prediction p;
      p.bucket_start = row.bucket_start;
      p.node_id = node_id_;
      p.interval_id = interval_id_;
      p.coverage = f.coverage;
      p.raw_value = row.raw;
      p.actual_scaled = row.scaled;
      for (std::size_t k = 0; k < kNumFeatures; ++k) p.predicted_scaled[k] = f.mean(static_cast<Eigen::Index>(k));
      p.predicted_raw = inverse_transform(*a.scaler, p.predicted_scaled);
      p.error = per_feature_error(p.predicted_scaled, p.actual_scaled);
      p.thresholds = a.thresholds;
      interval_errors_.push_back(p.error);
      if (a.thresholds) {
        auto ev = detect(p.error, *a.thresholds, DetectionContext{p.bucket_start, node_id_, p.raw_value, p.predicted_raw});
        out.events.insert(out.events.end(), ev.begin(), ev.end());
      }
      out.predictions.push_back(std::move(p));
      pending_.pop_front();
      ++pending_base_;
    }
  }

  /// Finalizes every pending timestamp with whatever coverage it has and
  /// starts a new inference run.
  void reset_inference(BucketOutput& out) {
    if (active_->model && active_->scaler) emit(averager_.finalize_all(), out);
    averager_.reset();
    recent_.clear();
    pending_.clear();
    pending_base_ = 0;
    next_index_ = 0;
    segment_.reset();
  }

  void end_of_interval(BucketOutput& out) {
    reset_inference(out);
    detail::RetrainJob job{interval_id_, std::move(interval_rows_), std::move(interval_errors_), active_};
    interval_rows_.clear();
    interval_errors_.clear();
    ++interval_id_;
    if (job.rows.empty()) return;
    if (!cfg_.background_training) {
      apply(detail::run_retrain(job, cfg_, trainer_, {}), out);
      return;
    }
    poll(out, true);
    job.base = active_;
    std::promise<detail::RetrainOutcome> promise;
    job_ = promise.get_future();
    worker_ = std::jthread([job = std::move(job), cfg = cfg_, trainer = trainer_,
                            promise = std::move(promise)](std::stop_token st) mutable {
      try {
        promise.set_value(detail::run_retrain(job, cfg, trainer, st));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    });
  }

  void poll(BucketOutput& out, bool wait) {
    if (!job_.valid()) return;
    if (!wait && job_.wait_for(std::chrono::seconds(0)) != std::future_status::ready) return;
    auto outcome = job_.get();
    if (worker_.joinable()) worker_.join();
    apply(std::move(outcome), out);
  }

  void apply(detail::RetrainOutcome&& o, BucketOutput& out) {
    reset_inference(out);
    active_ = std::move(o.next);
    out.predictions.insert(out.predictions.end(), std::make_move_iterator(o.bootstrap_predictions.begin()),
                           std::make_move_iterator(o.bootstrap_predictions.end()));
    out.swapped = true;
    reports_.push_back(std::move(o.report));
  }

  std::string node_id_;
  EngineConfig cfg_;
  Trainer trainer_;
  std::shared_ptr<const ActiveSet> active_;
  std::uint64_t interval_id_ = 0;
  std::vector<FeatureRow> interval_rows_;
  std::vector<FeatureVector> interval_errors_;
  std::vector<RetrainReport> reports_;

  std::optional<std::uint32_t> segment_;
  std::deque<FeatureVector> recent_;
  std::deque<PendingRow> pending_;
  std::size_t pending_base_ = 0;
  std::size_t next_index_ = 0;
  OverlapAverager averager_;

  std::future<detail::RetrainOutcome> job_;
  std::jthread worker_;
};

/// Downsamples a mixed-node sample stream and routes rows to one
/// NodeEngine per node.
class StreamProcessor {
 public:
  StreamProcessor(EngineConfig cfg, DownsampleConfig ds = {}, Trainer trainer = default_trainer())
      : cfg_(std::move(cfg)), downsampler_(ds), trainer_(std::move(trainer)) {
    cfg_.validate();
  }

  /// Called once for every engine right after creation (e.g. to restore).
  std::function<void(NodeEngine&)> on_create;
  /// Called after an engine published a new snapshot (e.g. to persist it).
  std::function<void(NodeEngine&)> on_swap;

  BucketOutput push(const RawSample& s) { return route(downsampler_.push(s)); }

  BucketOutput process_row(const FeatureRow& row) {
    NodeEngine& e = engine(row.node_id);
    const auto t0 = std::chrono::steady_clock::now();
    auto out = e.process_bucket(row);
    latencies_.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    ++buckets_;
    if (out.swapped && on_swap) on_swap(e);
    return out;
  }

  BucketOutput finish() {
    BucketOutput out = route(downsampler_.flush());
    for (auto& [node, e] : engines_) {
      auto o = e->finish();
      if (o.swapped && on_swap) on_swap(*e);
      out.append(std::move(o));
    }
    return out;
  }

  NodeEngine& engine(const std::string& node) {
    auto it = engines_.find(node);
    if (it == engines_.end()) {
      it = engines_.emplace(node, std::make_unique<NodeEngine>(node, cfg_, trainer_)).first;
      if (on_create) on_create(*it->second);
    }
    return *it->second;
  }

  const std::map<std::string, std::unique_ptr<NodeEngine>>& engines() const noexcept { return engines_; }
  /// Wall time of every process_bucket call, in seconds.
  const std::vector<double>& latencies() const noexcept { return latencies_; }
  std::size_t buckets() const noexcept { return buckets_; }

 private:
  BucketOutput route(std::vector<FeatureRow>&& rows) {
    BucketOutput out;
    for (const auto& r : rows) out.append(process_row(r));
    return out;
  }

  EngineConfig cfg_;
  Downsampler downsampler_;
  Trainer trainer_;
  std::map<std::string, std::unique_ptr<NodeEngine>> engines_;
  std::vector<double> latencies_;
  std::size_t buckets_ = 0;
};

}  // namespace odm
