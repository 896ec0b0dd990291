#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stop_token>
#include <thread>
#include <vector>

#include "odm/errors.hpp"
#include "odm/model.hpp"

namespace odm::model {

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  // Sleep after every optimizer step. Test hook for exercising training
  // that runs alongside inference; zero in normal operation.
  std::chrono::milliseconds step_delay{0};

  void validate() const {
    if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
    if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidConfig("learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidConfig("betas must be in [0,1)");
    if (!(eps > 0.0)) throw InvalidConfig("eps must be > 0");
  }
};

/// First and second moment accumulators, shaped like the parameters.
struct AdamState {
  AutoencoderParams m;
  AutoencoderParams v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const AutoencoderParams& p) {
    return AdamState{AutoencoderParams::zeros(p.arch), AutoencoderParams::zeros(p.arch), 0};
  }
};

namespace detail {

template <class Params>
auto flat_tensors(Params& p) {
  using Elem = std::conditional_t<std::is_const_v<Params>, const double, double>;
  std::vector<std::span<Elem>> out;
  for_each_tensor(p, [&](std::span<Elem> t) { out.push_back(t); });
  return out;
}

}  // namespace detail

/// Adam with bias correction, applied element-wise.
inline void adam_step(AutoencoderParams& params, const AutoencoderParams& grads, AdamState& state,
                      const TrainConfig& cfg) {
  if (!(grads.arch == params.arch) || !(state.m.arch == params.arch) || !(state.v.arch == params.arch))
    throw DimensionMismatch("optimizer state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto p = detail::flat_tensors(params);
  auto g = detail::flat_tensors(grads);
  auto m = detail::flat_tensors(state.m);
  auto v = detail::flat_tensors(state.v);
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t j = 0; j < p[k].size(); ++j) {
      const double gj = g[k][j];
      m[k][j] = cfg.beta1 * m[k][j] + (1.0 - cfg.beta1) * gj;
      v[k][j] = cfg.beta2 * v[k][j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m[k][j] / c1;
      const double vhat = v[k][j] / c2;
      p[k][j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

enum class StartMode { Cold, Warm };

struct TrainResult {
  std::vector<double> loss_history;  // mean per-window loss of each epoch
  bool cancelled = false;
};

/// Mini-batch training. Cold start re-initializes `params` from cfg.seed
/// and resets `opt`; warm start continues from both.
///
/// Throws TrainingFailed if a batch loss becomes non-finite; `params` is
/// then left in an unspecified state, so callers train on a copy.
inline TrainResult train(AutoencoderParams& params, AdamState& opt, std::span<const Matrix> windows,
                         const TrainConfig& cfg, StartMode mode, std::stop_token stop = {}) {
  cfg.validate();
  if (windows.empty()) throw EmptyTrainingSet();
  if (mode == StartMode::Cold) {
    params = glorot_init(params.arch, cfg.seed);
    opt = AdamState::zeros_like(params);
  } else if (!(opt.m.arch == params.arch)) {
    opt = AdamState::zeros_like(params);
  }

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Matrix> batch;
  batch.reserve(cfg.batch_size);

  TrainResult result;
  result.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      if (stop.stop_requested()) {
        result.cancelled = true;
        return result;
      }
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      batch.clear();
      for (std::size_t k = begin; k < end; ++k) batch.push_back(windows[order[k]]);
      const Gradient g = backward(params, batch);
      if (!std::isfinite(g.loss)) throw TrainingFailed("non-finite loss in epoch " + std::to_string(epoch + 1));
      total += g.loss * static_cast<double>(batch.size());
      adam_step(params, g.grad, opt, cfg);
      if (cfg.step_delay.count() > 0) std::this_thread::sleep_for(cfg.step_delay);
    }
    result.loss_history.push_back(total / static_cast<double>(windows.size()));
  }
  return result;
}

}  // namespace odm::model
