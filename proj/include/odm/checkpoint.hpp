#pragma once

// Model checkpoint blob.
//
//   offset  size  field
//   0       4     magic "ODMM"
//   4       1     format version (kModelFormatVersion)
//   5       1     flags (bit 0: optimizer state present)
//   6       2     reserved, zero
//   8       4     features                       (u32 LE)
//   12      4     window                         (u32 LE)
//   16      4     encoder layer count E          (u32 LE)
//   ..      4*E   encoder widths                 (u32 LE)
//   ..      4     decoder layer count D          (u32 LE)
//   ..      4*D   decoder widths                 (u32 LE)
//   ..            parameter tensors, f64 LE, for_each_tensor() order
//   ..            [optimizer] step (u64 LE), first moments, second moments
//   end-4   4     CRC-32 of every preceding byte (u32 LE)

#include <algorithm>
#include <array>
#include <cmath>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "odm/errors.hpp"
#include "odm/model.hpp"
#include "odm/train.hpp"

namespace odm {

namespace io {

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = ::crc32(crc, bytes.data() + pos, n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

class Writer {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  void magic(std::string_view m) {
    for (char c : m) buf_.push_back(static_cast<std::uint8_t>(c));
  }

  /// Appends the CRC-32 trailer and returns the finished blob.
  std::vector<std::uint8_t> finish() && {
    u32(crc32(buf_));
    return std::move(buf_);
  }

  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : buf_(b) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void f64s(std::span<double> out) {
    for (double& v : out) v = f64();
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > buf_.size() - pos_) throw CorruptBlob("blob truncated");
    auto s = buf_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

/// Checks magic, version and CRC trailer; returns the payload after the
/// version byte (without the trailer).
inline std::span<const std::uint8_t> open_blob(std::span<const std::uint8_t> blob, std::string_view magic,
                                               std::uint8_t version) {
  if (blob.size() < magic.size() + 1 + 4) throw CorruptBlob("blob truncated");
  for (std::size_t i = 0; i < magic.size(); ++i) {
    if (blob[i] != static_cast<std::uint8_t>(magic[i])) throw CorruptBlob("bad magic");
  }
  const std::uint8_t found = blob[magic.size()];
  if (found != version) throw VersionMismatch(found, version);
  const auto body = blob.first(blob.size() - 4);
  Reader trailer(blob.last(4));
  if (trailer.u32() != crc32(body)) throw CorruptBlob("checksum mismatch");
  return body.subspan(magic.size() + 1);
}

}  // namespace io

inline constexpr std::uint8_t kModelFormatVersion = 1;
inline constexpr std::string_view kModelMagic = "ODMM";

struct Checkpoint {
  model::AutoencoderParams params;
  std::optional<model::AdamState> optimizer;
};

namespace detail {

inline void write_model_body(io::Writer& w, const model::AutoencoderParams& p, const model::AdamState* opt) {
  w.u8(opt ? 1 : 0);
  w.u8(0);
  w.u8(0);
  const auto& a = p.arch;
  w.u32(static_cast<std::uint32_t>(a.features));
  w.u32(static_cast<std::uint32_t>(a.window));
  w.u32(static_cast<std::uint32_t>(a.encoder.size()));
  for (auto d : a.encoder) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(a.decoder.size()));
  for (auto d : a.decoder) w.u32(static_cast<std::uint32_t>(d));
  model::for_each_tensor(p, [&](std::span<const double> t) { w.f64s(t); });
  if (opt) {
    w.u64(opt->step);
    model::for_each_tensor(opt->m, [&](std::span<const double> t) { w.f64s(t); });
    model::for_each_tensor(opt->v, [&](std::span<const double> t) { w.f64s(t); });
  }
}

inline Checkpoint read_model_body(io::Reader& r) {
  const std::uint8_t flags = r.u8();
  r.u8();
  r.u8();
  constexpr std::uint32_t kMaxDim = 1u << 16;
  constexpr std::uint32_t kMaxLayers = 64;
  auto dim = [&] {
    const auto d = r.u32();
    if (d == 0 || d > kMaxDim) throw CorruptBlob("implausible dimension");
    return static_cast<std::size_t>(d);
  };
  auto layers = [&] {
    const auto n = r.u32();
    if (n == 0 || n > kMaxLayers) throw CorruptBlob("implausible layer count");
    std::vector<std::size_t> out(n);
    for (auto& d : out) d = dim();
    return out;
  };
  model::Architecture a;
  a.features = dim();
  a.window = dim();
  a.encoder = layers();
  a.decoder = layers();

  Checkpoint cp{model::AutoencoderParams::zeros(a), std::nullopt};
  model::for_each_tensor(cp.params, [&](std::span<double> t) {
    r.f64s(t);
    for (double v : t)
      if (!std::isfinite(v)) throw CorruptBlob("non-finite weight");
  });
  if (flags & 1u) {
    cp.optimizer = model::AdamState::zeros_like(cp.params);
    cp.optimizer->step = r.u64();
    model::for_each_tensor(cp.optimizer->m, [&](std::span<double> t) { r.f64s(t); });
    model::for_each_tensor(cp.optimizer->v, [&](std::span<double> t) { r.f64s(t); });
  }
  return cp;
}

}  // namespace detail

inline std::vector<std::uint8_t> save_model(const model::AutoencoderParams& params,
                                            const model::AdamState* optimizer = nullptr) {
  io::Writer w;
  w.magic(kModelMagic);
  w.u8(kModelFormatVersion);
  detail::write_model_body(w, params, optimizer);
  return std::move(w).finish();
}

inline Checkpoint load_model(std::span<const std::uint8_t> blob) {
  io::Reader r(io::open_blob(blob, kModelMagic, kModelFormatVersion));
  Checkpoint cp = detail::read_model_body(r);
  if (r.remaining() != 0) throw CorruptBlob("trailing bytes after model");
  return cp;
}

}  // namespace odm
