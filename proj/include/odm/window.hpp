#pragma once

// Sliding windows over scaled rows, and merging of overlapping window
// reconstructions back into one prediction per timestamp.

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "odm/errors.hpp"
#include "odm/matrix.hpp"
#include "odm/telemetry.hpp"

namespace odm {

struct Window {
  std::size_t start_index = 0;
  Matrix rows;  // w x features

  std::size_t length() const { return static_cast<std::size_t>(rows.rows()); }
};

inline Matrix to_matrix(std::span<const FeatureVector> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) m(t, f) = rows[t][f];
  }
  return m;
}

/// Windows at starts 0, stride, 2*stride, ... while start + w <= N.
inline std::vector<Window> build_windows(const Matrix& series, std::size_t w, std::size_t stride = 1) {
  if (w < 1 || stride < 1) throw InvalidConfig("window length and stride must be >= 1");
  std::vector<Window> out;
  const auto n = static_cast<std::size_t>(series.rows());
  if (n < w) return out;
  out.reserve((n - w) / stride + 1);
  for (std::size_t s = 0; s + w <= n; s += stride) {
    out.push_back(Window{s, series.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(w))});
  }
  return out;
}

inline std::vector<Window> build_windows(std::span<const FeatureVector> rows, std::size_t w, std::size_t stride = 1) {
  return build_windows(to_matrix(rows), w, stride);
}

struct OverlapResult {
  Matrix mean;                        // N x features; rows with zero coverage are zero
  std::vector<std::size_t> coverage;  // windows contributing to each timestamp

  bool present(std::size_t t) const { return coverage[t] > 0; }
};

/// Per-timestamp mean over every reconstruction row that maps to it.
/// Contributions are summed in the order given.
inline OverlapResult overlap_average(std::span<const Window> reconstructions, std::size_t n) {
  OverlapResult r;
  const Eigen::Index features = reconstructions.empty() ? static_cast<Eigen::Index>(kNumFeatures)
                                                        : reconstructions.front().rows.cols();
  r.mean = Matrix::Zero(static_cast<Eigen::Index>(n), features);
  r.coverage.assign(n, 0);
  for (const auto& rec : reconstructions) {
    if (rec.rows.cols() != features) throw DimensionMismatch("reconstruction feature count differs");
    if (rec.start_index + rec.length() > n) throw DimensionMismatch("reconstruction extends past N");
    for (std::size_t k = 0; k < rec.length(); ++k) {
      r.mean.row(static_cast<Eigen::Index>(rec.start_index + k)) += rec.rows.row(static_cast<Eigen::Index>(k));
      ++r.coverage[rec.start_index + k];
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (r.coverage[t] > 0) r.mean.row(static_cast<Eigen::Index>(t)) /= static_cast<double>(r.coverage[t]);
  }
  return r;
}

/// Incremental form of overlap_average for streaming inference.
///
/// Windows must arrive in non-decreasing start order. A timestamp can be
/// finalized once no later window will cover it.
class OverlapAverager {
 public:
  struct Finalized {
    std::size_t index;
    Vector mean;
    std::size_t coverage;
  };

  explicit OverlapAverager(Eigen::Index features = kNumFeatures) : features_(features) {}

  void add(std::size_t start_index, const Matrix& recon) {
    if (recon.cols() != features_) throw DimensionMismatch("reconstruction feature count differs");
    if (start_index < base_) throw DimensionMismatch("window starts before finalized region");
    const std::size_t end = start_index + static_cast<std::size_t>(recon.rows());
    while (base_ + pending_.size() < end) pending_.push_back(Slot{Vector::Zero(features_), 0});
    for (Eigen::Index k = 0; k < recon.rows(); ++k) {
      Slot& slot = pending_[start_index + static_cast<std::size_t>(k) - base_];
      slot.sum += recon.row(k).transpose();
      ++slot.count;
    }
  }

  /// Pops every pending timestamp with index < `limit`.
  std::vector<Finalized> finalize_before(std::size_t limit) {
    std::vector<Finalized> out;
    while (!pending_.empty() && base_ < limit) {
      Slot& s = pending_.front();
      if (s.count > 0) out.push_back(Finalized{base_, s.sum / static_cast<double>(s.count), s.count});
      pending_.pop_front();
      ++base_;
    }
    return out;
  }

  std::vector<Finalized> finalize_all() { return finalize_before(base_ + pending_.size()); }

  void reset() {
    pending_.clear();
    base_ = 0;
  }

  std::size_t pending() const noexcept { return pending_.size(); }

 private:
  struct Slot {
    Vector sum;
    std::size_t count;
  };

  Eigen::Index features_;
  std::size_t base_ = 0;
  std::deque<Slot> pending_;
};

}  // namespace odm
