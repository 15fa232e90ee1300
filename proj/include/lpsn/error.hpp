#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lpsn {

/// Incompatible tensor shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid model, pipeline or training configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// API misuse, e.g. backward on a non-scalar or on a consumed tape.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class VocabularyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A feature whose statistics make normalization undefined (max == min, std == 0).
class DegenerateFeatureError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A metric with no admissible inputs (no comparable pairs, no uncensored records).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary or text file. `offset()` is the byte offset (binary files)
/// or line number (text manifests) where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace lpsn
