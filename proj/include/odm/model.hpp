#pragma once

// LSTM sequence autoencoder: encoder stack -> repeated bottleneck state ->
// decoder stack -> per-timestep linear projection back to feature space.
//
// All math is 64-bit. Batched routines keep one column per window, so a
// batch of B windows of length w is a sequence of w matrices (dim x B).

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "odm/errors.hpp"
#include "odm/matrix.hpp"
#include "odm/telemetry.hpp"

namespace odm::model {

struct Architecture {
  std::size_t features = kNumFeatures;
  std::size_t window = 4;
  std::vector<std::size_t> encoder{64, 32, 16};
  std::vector<std::size_t> decoder{16, 32, 64};

  void validate() const {
    if (features == 0 || window == 0) throw InvalidConfig("features and window must be >= 1");
    if (encoder.empty() || decoder.empty()) throw InvalidConfig("encoder and decoder need at least one layer");
    for (auto d : encoder)
      if (d == 0) throw InvalidConfig("zero-width encoder layer");
    for (auto d : decoder)
      if (d == 0) throw InvalidConfig("zero-width decoder layer");
  }

  std::size_t bottleneck() const { return encoder.back(); }

  bool operator==(const Architecture&) const = default;
};

/// Gate blocks are stacked in the order input, forget, cell, output.
struct LstmLayer {
  Matrix wx;  // 4H x input_dim
  Matrix wh;  // 4H x H
  Vector b;   // 4H

  static LstmLayer zeros(std::size_t input_dim, std::size_t hidden_dim) {
    const auto in = static_cast<Eigen::Index>(input_dim);
    const auto h = static_cast<Eigen::Index>(hidden_dim);
    return LstmLayer{Matrix::Zero(4 * h, in), Matrix::Zero(4 * h, h), Vector::Zero(4 * h)};
  }

  std::size_t input_dim() const { return static_cast<std::size_t>(wx.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(wh.cols()); }
};

inline constexpr std::size_t lstm_parameter_count(std::size_t input_dim, std::size_t hidden_dim) {
  return 4 * ((input_dim + hidden_dim) * hidden_dim + hidden_dim);
}

struct AutoencoderParams {
  Architecture arch;
  std::vector<LstmLayer> encoder;
  std::vector<LstmLayer> decoder;
  Matrix proj_w;  // features x last decoder width
  Vector proj_b;  // features

  static AutoencoderParams zeros(const Architecture& arch) {
    arch.validate();
    AutoencoderParams p;
    p.arch = arch;
    std::size_t in = arch.features;
    for (auto h : arch.encoder) {
      p.encoder.push_back(LstmLayer::zeros(in, h));
      in = h;
    }
    in = arch.bottleneck();
    for (auto h : arch.decoder) {
      p.decoder.push_back(LstmLayer::zeros(in, h));
      in = h;
    }
    p.proj_w = Matrix::Zero(static_cast<Eigen::Index>(arch.features), static_cast<Eigen::Index>(in));
    p.proj_b = Vector::Zero(static_cast<Eigen::Index>(arch.features));
    return p;
  }
};

/// Visits every trainable tensor in checkpoint order: encoder layers
/// (wx, wh, b), decoder layers (wx, wh, b), proj_w, proj_b. Matrices are
/// exposed in Eigen's column-major storage order.
template <class Params, class Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  auto visit = [&](auto& t) { fn(std::span(t.data(), static_cast<std::size_t>(t.size()))); };
  for (auto& l : p.encoder) {
    visit(l.wx);
    visit(l.wh);
    visit(l.b);
  }
  for (auto& l : p.decoder) {
    visit(l.wx);
    visit(l.wh);
    visit(l.b);
  }
  visit(p.proj_w);
  visit(p.proj_b);
}

inline std::vector<std::string> tensor_names(const Architecture& arch) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < arch.encoder.size(); ++i)
    for (const char* t : {"wx", "wh", "b"}) out.push_back("encoder." + std::to_string(i) + "." + t);
  for (std::size_t i = 0; i < arch.decoder.size(); ++i)
    for (const char* t : {"wx", "wh", "b"}) out.push_back("decoder." + std::to_string(i) + "." + t);
  out.emplace_back("proj.w");
  out.emplace_back("proj.b");
  return out;
}

inline std::size_t count_parameters(const AutoencoderParams& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](std::span<const double> t) { n += t.size(); });
  return n;
}

inline std::size_t count_parameters(const Architecture& arch) {
  std::size_t n = 0;
  std::size_t in = arch.features;
  for (auto h : arch.encoder) {
    n += lstm_parameter_count(in, h);
    in = h;
  }
  in = arch.bottleneck();
  for (auto h : arch.decoder) {
    n += lstm_parameter_count(in, h);
    in = h;
  }
  return n + in * arch.features + arch.features;
}

/// Glorot-uniform weights, zero biases except forget gate = 1.
inline AutoencoderParams glorot_init(const Architecture& arch, std::uint64_t seed) {
  AutoencoderParams p = AutoencoderParams::zeros(arch);
  std::mt19937_64 rng(seed);
  auto fill = [&](Matrix& m, double fan_in, double fan_out) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = bound * dist(rng);
  };
  auto init_layer = [&](LstmLayer& l) {
    const auto h = static_cast<double>(l.hidden_dim());
    fill(l.wx, static_cast<double>(l.input_dim()), 4.0 * h);
    fill(l.wh, h, 4.0 * h);
    l.b.segment(l.wh.cols(), l.wh.cols()).setOnes();
  };
  for (auto& l : p.encoder) init_layer(l);
  for (auto& l : p.decoder) init_layer(l);
  fill(p.proj_w, static_cast<double>(p.proj_w.cols()), static_cast<double>(p.proj_w.rows()));
  return p;
}

namespace detail {

inline Matrix sigmoid(const Matrix& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

/// Everything backprop needs from one layer's forward pass.
struct LayerTrace {
  std::vector<Matrix> input;   // x_t
  std::vector<Matrix> h;       // h[0] = 0, h[t+1] = h_t
  std::vector<Matrix> c;       // c[0] = 0, c[t+1] = c_t
  std::vector<Matrix> gates;   // activated (i, f, g, o) at t
  std::vector<Matrix> tanh_c;  // tanh(c_t)
};

inline std::vector<Matrix> run_layer(const LstmLayer& layer, const std::vector<Matrix>& inputs, LayerTrace* trace) {
  const Eigen::Index hd = layer.wh.cols();
  const Eigen::Index batch = inputs.front().cols();
  Matrix h = Matrix::Zero(hd, batch);
  Matrix c = Matrix::Zero(hd, batch);
  std::vector<Matrix> out;
  out.reserve(inputs.size());
  if (trace) {
    trace->input = inputs;
    trace->h.assign(1, h);
    trace->c.assign(1, c);
    trace->gates.clear();
    trace->tanh_c.clear();
  }
  for (const auto& x : inputs) {
    if (x.rows() != layer.wx.cols()) throw DimensionMismatch("layer input width mismatch");
    Matrix z = layer.wx * x + layer.wh * h;
    z.colwise() += layer.b;
    z.topRows(2 * hd) = sigmoid(z.topRows(2 * hd));
    z.middleRows(2 * hd, hd) = z.middleRows(2 * hd, hd).array().tanh().matrix();
    z.bottomRows(hd) = sigmoid(z.bottomRows(hd));
    c = z.middleRows(hd, hd).cwiseProduct(c) + z.topRows(hd).cwiseProduct(z.middleRows(2 * hd, hd));
    Matrix tc = c.array().tanh().matrix();
    h = z.bottomRows(hd).cwiseProduct(tc);
    out.push_back(h);
    if (trace) {
      trace->h.push_back(h);
      trace->c.push_back(c);
      trace->gates.push_back(std::move(z));
      trace->tanh_c.push_back(std::move(tc));
    }
  }
  return out;
}

/// Backpropagates through one layer. `d_out[t]` is dLoss/dh_t from above;
/// gradients are accumulated into `grad`; returns dLoss/dx_t.
inline std::vector<Matrix> backprop_layer(const LstmLayer& layer, const LayerTrace& tr,
                                          const std::vector<Matrix>& d_out, LstmLayer& grad) {
  const Eigen::Index hd = layer.wh.cols();
  const Eigen::Index batch = d_out.front().cols();
  const std::size_t steps = d_out.size();
  std::vector<Matrix> d_in(steps);
  Matrix dh_next = Matrix::Zero(hd, batch);
  Matrix dc_next = Matrix::Zero(hd, batch);
  Matrix dz(4 * hd, batch);
  for (std::size_t s = steps; s-- > 0;) {
    const Matrix& gates = tr.gates[s];
    const auto i = gates.topRows(hd).array();
    const auto f = gates.middleRows(hd, hd).array();
    const auto g = gates.middleRows(2 * hd, hd).array();
    const auto o = gates.bottomRows(hd).array();
    const auto tc = tr.tanh_c[s].array();

    const Matrix dh = d_out[s] + dh_next;
    const Matrix dc = (dc_next.array() + dh.array() * o * (1.0 - tc.square())).matrix();
    dz.topRows(hd) = (dc.array() * g * i * (1.0 - i)).matrix();
    dz.middleRows(hd, hd) = (dc.array() * tr.c[s].array() * f * (1.0 - f)).matrix();
    dz.middleRows(2 * hd, hd) = (dc.array() * i * (1.0 - g.square())).matrix();
    dz.bottomRows(hd) = (dh.array() * tc * o * (1.0 - o)).matrix();
    dc_next = (dc.array() * f).matrix();

    grad.wx.noalias() += dz * tr.input[s].transpose();
    grad.wh.noalias() += dz * tr.h[s].transpose();
    grad.b += dz.rowwise().sum();
    d_in[s].noalias() = layer.wx.transpose() * dz;
    dh_next.noalias() = layer.wh.transpose() * dz;
  }
  return d_in;
}

struct ForwardTrace {
  std::vector<LayerTrace> encoder;
  std::vector<LayerTrace> decoder;
};

/// Returns y_t (features x B) for every timestep.
inline std::vector<Matrix> forward_sequence(const AutoencoderParams& p, const std::vector<Matrix>& xs,
                                            ForwardTrace* trace) {
  if (trace) {
    trace->encoder.resize(p.encoder.size());
    trace->decoder.resize(p.decoder.size());
  }
  std::vector<Matrix> seq = xs;
  for (std::size_t l = 0; l < p.encoder.size(); ++l)
    seq = run_layer(p.encoder[l], seq, trace ? &trace->encoder[l] : nullptr);
  seq = std::vector<Matrix>(xs.size(), seq.back());
  for (std::size_t l = 0; l < p.decoder.size(); ++l)
    seq = run_layer(p.decoder[l], seq, trace ? &trace->decoder[l] : nullptr);
  for (auto& h : seq) {
    Matrix y = p.proj_w * h;
    y.colwise() += p.proj_b;
    h = std::move(y);
  }
  return seq;
}

inline void check_window(const AutoencoderParams& p, const Matrix& w) {
  if (static_cast<std::size_t>(w.rows()) != p.arch.window || static_cast<std::size_t>(w.cols()) != p.arch.features)
    throw DimensionMismatch("window shape " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                            " does not match model " + std::to_string(p.arch.window) + "x" +
                            std::to_string(p.arch.features));
}

/// Packs B windows (w x F each) into w matrices of shape F x B.
inline std::vector<Matrix> pack(const AutoencoderParams& p, std::span<const Matrix> windows) {
  const auto batch = static_cast<Eigen::Index>(windows.size());
  std::vector<Matrix> xs(p.arch.window, Matrix(static_cast<Eigen::Index>(p.arch.features), batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Matrix& w = windows[static_cast<std::size_t>(b)];
    check_window(p, w);
    for (std::size_t t = 0; t < p.arch.window; ++t) xs[t].col(b) = w.row(static_cast<Eigen::Index>(t)).transpose();
  }
  return xs;
}

}  // namespace detail

struct CellState {
  Vector h;
  Vector c;
};

/// One step of the standard LSTM recurrence.
inline CellState lstm_cell_forward(const LstmLayer& layer, const Vector& x, const Vector& h_prev, const Vector& c_prev) {
  const Eigen::Index hd = layer.wh.cols();
  if (x.size() != layer.wx.cols() || h_prev.size() != hd || c_prev.size() != hd || layer.wx.rows() != 4 * hd ||
      layer.b.size() != 4 * hd)
    throw DimensionMismatch("lstm cell dimension mismatch");
  const Vector z = layer.wx * x + layer.wh * h_prev + layer.b;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Vector h(hd), c(hd);
  for (Eigen::Index k = 0; k < hd; ++k) {
    const double ig = sig(z(k));
    const double fg = sig(z(hd + k));
    const double gg = std::tanh(z(2 * hd + k));
    const double og = sig(z(3 * hd + k));
    c(k) = fg * c_prev(k) + ig * gg;
    h(k) = og * std::tanh(c(k));
  }
  return {h, c};
}

/// Reconstructs one window (w x F).
inline Matrix forward(const AutoencoderParams& p, const Matrix& window) {
  const auto ys = detail::forward_sequence(p, detail::pack(p, std::span(&window, 1)), nullptr);
  Matrix out(window.rows(), window.cols());
  for (std::size_t t = 0; t < ys.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = ys[t].col(0).transpose();
  return out;
}

/// Reconstructs a batch of windows in one pass.
inline std::vector<Matrix> forward_batch(const AutoencoderParams& p, std::span<const Matrix> windows) {
  if (windows.empty()) return {};
  const auto ys = detail::forward_sequence(p, detail::pack(p, windows), nullptr);
  std::vector<Matrix> out(windows.size(), Matrix(static_cast<Eigen::Index>(p.arch.window),
                                                 static_cast<Eigen::Index>(p.arch.features)));
  for (std::size_t t = 0; t < ys.size(); ++t)
    for (std::size_t b = 0; b < windows.size(); ++b)
      out[b].row(static_cast<Eigen::Index>(t)) = ys[t].col(static_cast<Eigen::Index>(b)).transpose();
  return out;
}

/// Mean squared error over every entry.
inline double loss(const Matrix& reconstruction, const Matrix& target) {
  if (reconstruction.rows() != target.rows() || reconstruction.cols() != target.cols())
    throw DimensionMismatch("loss operands differ in shape");
  if (target.size() == 0) return 0.0;
  return (reconstruction - target).squaredNorm() / static_cast<double>(target.size());
}

struct Gradient {
  AutoencoderParams grad;
  double loss = 0.0;
};

/// Full BPTT through decoder, bridge and encoder. The loss is the mean of
/// per-window MSE, so the gradient is the mean of per-window gradients.
inline Gradient backward(const AutoencoderParams& p, std::span<const Matrix> windows) {
  if (windows.empty()) throw DimensionMismatch("empty batch");
  const auto xs = detail::pack(p, windows);
  detail::ForwardTrace trace;
  const auto ys = detail::forward_sequence(p, xs, &trace);

  Gradient out{AutoencoderParams::zeros(p.arch), 0.0};
  const double denom = static_cast<double>(windows.size() * p.arch.window * p.arch.features);
  std::vector<Matrix> d_h(ys.size());
  const auto& top = trace.decoder.back();
  for (std::size_t t = 0; t < ys.size(); ++t) {
    const Matrix diff = ys[t] - xs[t];
    out.loss += diff.squaredNorm();
    const Matrix dy = (2.0 / denom) * diff;
    out.grad.proj_w.noalias() += dy * top.h[t + 1].transpose();
    out.grad.proj_b += dy.rowwise().sum();
    d_h[t].noalias() = p.proj_w.transpose() * dy;
  }
  out.loss /= denom;

  for (std::size_t l = p.decoder.size(); l-- > 0;)
    d_h = detail::backprop_layer(p.decoder[l], trace.decoder[l], d_h, out.grad.decoder[l]);

  // Bridge: every decoder step consumed the same bottleneck state.
  Matrix d_bottleneck = d_h.front();
  for (std::size_t t = 1; t < d_h.size(); ++t) d_bottleneck += d_h[t];
  for (auto& m : d_h) m.setZero(static_cast<Eigen::Index>(p.arch.bottleneck()), m.cols());
  d_h.back() = d_bottleneck;

  for (std::size_t l = p.encoder.size(); l-- > 0;)
    d_h = detail::backprop_layer(p.encoder[l], trace.encoder[l], d_h, out.grad.encoder[l]);
  return out;
}

}  // namespace odm::model
