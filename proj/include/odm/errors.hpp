#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace odm {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- ingestion ---

class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t line_no, const std::string& why)
      : Error("line " + std::to_string(line_no) + ": malformed (" + why + ")"), line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class UnknownMetric : public Error {
 public:
  UnknownMetric(std::size_t line_no, std::string name)
      : Error("line " + std::to_string(line_no) + ": unknown metric '" + name + "'"),
        line_no_(line_no),
        name_(std::move(name)) {}
  std::size_t line_no() const noexcept { return line_no_; }
  const std::string& name() const noexcept { return name_; }

 private:
  std::size_t line_no_;
  std::string name_;
};

class NonFiniteValue : public Error {
 public:
  explicit NonFiniteValue(std::size_t line_no)
      : Error("line " + std::to_string(line_no) + ": non-finite value"), line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class OutOfOrderAcrossBuckets : public Error {
 public:
  explicit OutOfOrderAcrossBuckets(double timestamp)
      : Error("sample at t=" + std::to_string(timestamp) + " precedes the open bucket"),
        timestamp_(timestamp) {}
  double timestamp() const noexcept { return timestamp_; }

 private:
  double timestamp_;
};

// --- numerics / model ---

class EmptyInput : public Error {
 public:
  EmptyInput() : Error("empty input") {}
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyTrainingSet : public Error {
 public:
  EmptyTrainingSet() : Error("no training windows") {}
};

class TrainingFailed : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

// --- persistence ---

class VersionMismatch : public Error {
 public:
  VersionMismatch(unsigned found, unsigned expected)
      : Error("blob version " + std::to_string(found) + ", expected " + std::to_string(expected)) {}
};

class CorruptBlob : public Error {
 public:
  using Error::Error;
};

// --- detection / evaluation ---

class EmptyInterval : public Error {
 public:
  EmptyInterval() : Error("interval has no error vectors") {}
};

class FaultOutOfRange : public Error {
 public:
  using Error::Error;
};

}  // namespace odm
