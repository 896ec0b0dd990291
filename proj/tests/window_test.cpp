#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "odm/window.hpp"

using namespace odm;

namespace {

Matrix series(std::size_t n) {
  Matrix m(static_cast<Eigen::Index>(n), 5);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < 5; ++j) m(i, j) = static_cast<double>(10 * i + j);
  return m;
}

std::vector<Window> random_recon(std::mt19937_64& rng, std::size_t n, std::size_t w, std::size_t stride) {
  std::uniform_real_distribution<double> u(-2, 2);
  auto windows = build_windows(series(n), w, stride);
  for (auto& win : windows)
    for (Eigen::Index i = 0; i < win.rows.size(); ++i) win.rows.data()[i] = u(rng);
  return windows;
}

}  // namespace

TEST(BuildWindows, Counts) {
  const auto w = build_windows(series(10), 4, 1);
  ASSERT_EQ(w.size(), 7u);
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_EQ(w[k].start_index, k);
  EXPECT_TRUE(build_windows(series(3), 4, 1).empty());
  const auto one = build_windows(series(4), 4, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].rows, series(4));
  EXPECT_EQ(build_windows(series(10), 4, 3).size(), 3u);
  EXPECT_THROW(build_windows(series(10), 0, 1), InvalidConfig);
  EXPECT_THROW(build_windows(series(10), 4, 0), InvalidConfig);
}

TEST(BuildWindows, CountFormula) {
  for (std::size_t n = 0; n < 30; ++n)
    for (std::size_t w = 1; w <= 6; ++w)
      for (std::size_t s = 1; s <= 4; ++s) {
        const std::size_t expect = n >= w ? (n - w) / s + 1 : 0;
        EXPECT_EQ(build_windows(series(n), w, s).size(), expect);
      }
}

TEST(OverlapAverage, InteriorAndEdges) {
  std::mt19937_64 rng(1);
  const auto rec = random_recon(rng, 10, 4, 1);
  const auto r = overlap_average(rec, 10);
  EXPECT_EQ(r.coverage[0], 1u);
  EXPECT_EQ(r.coverage[5], 4u);
  EXPECT_EQ(r.coverage[9], 1u);
  // t=5 is row 5-s of windows s=2..5.
  Vector expect = Vector::Zero(5);
  for (std::size_t s = 2; s <= 5; ++s) expect += rec[s].rows.row(static_cast<Eigen::Index>(5 - s)).transpose();
  expect /= 4.0;
  EXPECT_LE((r.mean.row(5).transpose() - expect).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(r.mean.row(0), rec[0].rows.row(0));
}

TEST(OverlapAverage, ConstantPrediction) {
  auto rec = build_windows(series(12), 4, 2);
  for (auto& w : rec) w.rows.setConstant(0.25);
  const auto r = overlap_average(rec, 12);
  for (std::size_t t = 0; t < 12; ++t) {
    ASSERT_TRUE(r.present(t));
    EXPECT_EQ(r.mean.row(static_cast<Eigen::Index>(t)).maxCoeff(), 0.25);
  }
}

TEST(OverlapAverage, UncoveredTimestampsAbsent) {
  const auto rec = build_windows(series(11), 3, 4);  // starts 0, 4, 8
  const auto r = overlap_average(rec, 11);
  EXPECT_FALSE(r.present(3));
  EXPECT_FALSE(r.present(7));
  EXPECT_TRUE(r.present(10));
}

TEST(OverlapProperty, CoverageSumAndEdgeProfile) {
  std::mt19937_64 rng(2);
  for (std::size_t w = 1; w <= 8; ++w)
    for (std::size_t n = 2 * w - 1; n < 40; ++n) {
      const auto rec = random_recon(rng, n, w, 1);
      const auto r = overlap_average(rec, n);
      std::size_t sum = 0;
      for (auto c : r.coverage) sum += c;
      EXPECT_EQ(sum, rec.size() * w);
      for (std::size_t k = 0; k + 1 < w; ++k) {
        EXPECT_EQ(r.coverage[k], k + 1);
        EXPECT_EQ(r.coverage[n - 1 - k], k + 1);
      }
      for (std::size_t t = w - 1; t + w - 1 < n; ++t) EXPECT_EQ(r.coverage[t], w);
    }
}

TEST(OverlapProperty, StreamingMatchesBatch) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t w = 1 + trial % 6;
    const std::size_t n = w + static_cast<std::size_t>(trial) % 25;
    const auto rec = random_recon(rng, n, w, 1);
    const auto batch = overlap_average(rec, n);
    OverlapAverager avg;
    std::vector<OverlapAverager::Finalized> got;
    for (const auto& win : rec) {
      avg.add(win.start_index, win.rows);
      auto done = avg.finalize_before(win.start_index + 1);
      got.insert(got.end(), done.begin(), done.end());
    }
    auto tail = avg.finalize_all();
    got.insert(got.end(), tail.begin(), tail.end());
    ASSERT_EQ(got.size(), n);
    for (const auto& f : got) {
      EXPECT_EQ(f.coverage, batch.coverage[f.index]);
      EXPECT_EQ(f.mean.transpose(), batch.mean.row(static_cast<Eigen::Index>(f.index)));
    }
  }
}
