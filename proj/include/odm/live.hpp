#pragma once

// Live mode: reads samples from stdin or a local stream socket as they
// arrive and prints events immediately.

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <istream>
#include <streambuf>
#include <string>

#include "odm/app.hpp"

namespace odm::app {

/// Read-only streambuf over a POSIX file descriptor it owns.
class FdStreambuf : public std::streambuf {
 public:
  explicit FdStreambuf(int fd) : fd_(fd) { setg(buf_.data(), buf_.data(), buf_.data()); }
  ~FdStreambuf() override {
    if (fd_ >= 0) ::close(fd_);
  }
  FdStreambuf(const FdStreambuf&) = delete;
  FdStreambuf& operator=(const FdStreambuf&) = delete;

 protected:
  int_type underflow() override {
    if (gptr() < egptr()) return traits_type::to_int_type(*gptr());
    ssize_t n;
    do {
      n = ::read(fd_, buf_.data(), buf_.size());
    } while (n < 0 && errno == EINTR);
    if (n <= 0) return traits_type::eof();
    setg(buf_.data(), buf_.data(), buf_.data() + n);
    return traits_type::to_int_type(*gptr());
  }

 private:
  int fd_;
  std::array<char, 4096> buf_{};
};

inline constexpr std::string_view kSocketPrefix = "unix:";

inline int connect_unix_socket(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) throw InputError("socket path too long: " + path);
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) throw InputError(std::string("socket: ") + std::strerror(errno));
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    const int e = errno;
    ::close(fd);
    throw InputError("cannot connect to " + path + ": " + std::strerror(e));
  }
  return fd;
}

/// `cfg.input` is empty or "-" for `in`, or "unix:<path>" for a socket.
/// Malformed lines are reported and skipped.
inline int cmd_live(const RunConfig& cfg, std::istream& in, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    std::unique_ptr<FdStreambuf> sockbuf;
    std::unique_ptr<std::istream> sockstream;
    std::istream* source = &in;
    if (cfg.input.starts_with(kSocketPrefix)) {
      sockbuf = std::make_unique<FdStreambuf>(connect_unix_socket(cfg.input.substr(kSocketPrefix.size())));
      sockstream = std::make_unique<std::istream>(sockbuf.get());
      source = sockstream.get();
    } else if (!cfg.input.empty() && cfg.input != "-") {
      throw InputError("live input must be '-' or unix:<path>");
    }
    detail::OutputTarget target(cfg.output, out);
    PipelineHooks hooks;
    hooks.tolerate_bad_lines = true;
    hooks.on_event = [&](const AnomalyEvent& e) { target.get() << to_json_line(e) << '\n'; };
    hooks.on_line = [&] { target.get().flush(); };
    const auto summary = run_pipeline(cfg, *source, hooks, err);
    target.get().flush();
    print_summary(err, summary);
    return kExitOk;
  });
}

}  // namespace odm::app
