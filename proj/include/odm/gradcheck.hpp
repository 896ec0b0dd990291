#pragma once

// Central finite-difference check of backward() on a small random model.
// The numeric side only evaluates forward passes and the MSE loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "odm/model.hpp"

namespace odm::model {

struct GradcheckConfig {
  Architecture arch{2, 3, {3, 2}, {2, 3}};
  std::size_t batch = 3;
  double epsilon = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, floor); coordinates whose
  // gradient is below `floor` in magnitude are effectively compared
  // absolutely.
  double floor = 1e-6;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  // Negative control: perturbs one analytic coordinate before comparing.
  bool corrupt = false;
};

struct TensorError {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<TensorError> tensors;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

inline double batch_loss(const AutoencoderParams& p, std::span<const Matrix> windows) {
  const auto recon = forward_batch(p, windows);
  double total = 0.0;
  for (std::size_t b = 0; b < windows.size(); ++b) total += loss(recon[b], windows[b]);
  return total / static_cast<double>(windows.size());
}

inline GradcheckReport gradcheck(const GradcheckConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> weight(-0.5, 0.5);
  std::uniform_real_distribution<double> value(0.0, 1.0);

  AutoencoderParams params = AutoencoderParams::zeros(cfg.arch);
  for_each_tensor(params, [&](std::span<double> t) {
    for (double& v : t) v = weight(rng);
  });
  std::vector<Matrix> windows;
  for (std::size_t b = 0; b < cfg.batch; ++b) {
    Matrix w(static_cast<Eigen::Index>(cfg.arch.window), static_cast<Eigen::Index>(cfg.arch.features));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = value(rng);
    windows.push_back(std::move(w));
  }

  Gradient analytic = backward(params, windows);
  if (cfg.corrupt) {
    for_each_tensor(analytic.grad, [first = true](std::span<double> t) mutable {
      if (first && !t.empty()) t[0] += 1e-2;
      first = false;
    });
  }

  std::vector<std::span<double>> p_tensors;
  std::vector<std::span<const double>> g_tensors;
  for_each_tensor(params, [&](std::span<double> t) { p_tensors.push_back(t); });
  for_each_tensor(std::as_const(analytic.grad), [&](std::span<const double> t) { g_tensors.push_back(t); });
  const auto names = tensor_names(cfg.arch);

  GradcheckReport report;
  for (std::size_t k = 0; k < p_tensors.size(); ++k) {
    TensorError te{names[k], p_tensors[k].size(), 0.0};
    for (std::size_t j = 0; j < p_tensors[k].size(); ++j) {
      double& x = p_tensors[k][j];
      const double saved = x;
      x = saved + cfg.epsilon;
      const double up = batch_loss(params, windows);
      x = saved - cfg.epsilon;
      const double down = batch_loss(params, windows);
      x = saved;
      const double numeric = (up - down) / (2.0 * cfg.epsilon);
      const double a = g_tensors[k][j];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), cfg.floor});
      te.max_rel_error = std::max(te.max_rel_error, rel);
    }
    report.coordinates += te.size;
    report.max_rel_error = std::max(report.max_rel_error, te.max_rel_error);
    report.tensors.push_back(std::move(te));
  }
  report.passed = report.max_rel_error < cfg.tolerance;
  return report;
}

}  // namespace odm::model
