#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coficot {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid PipelineConfig; message names the first violated field.
struct ConfigError : Error {
  explicit ConfigError(const std::string& field, const std::string& detail = "")
      : Error(detail.empty() ? field : field + ": " + detail), field(field) {}
  std::string field;
};

struct EmptyCompletion : Error {
  EmptyCompletion() : Error("completion text is whitespace-only") {}
};

struct EmptyEnsemble : Error {
  EmptyEnsemble() : Error("no traces in ensemble") {}
};

struct InvalidDistribution : Error {
  using Error::Error;
};

struct MissingCalibration : Error {
  MissingCalibration() : Error("no calibration loaded") {}
  using Error::Error;
};

struct CalibrationTooSmall : Error {
  explicit CalibrationTooSmall(std::size_t n)
      : Error("calibration corpus has " + std::to_string(n) +
              " counts, need at least 10") {}
};

struct BackendUnavailable : Error {
  using Error::Error;
};

/// The scorer returned a step-score list whose length does not match the
/// trace. Treated as scorer failure; the trace passes through uncorrected.
struct LengthMismatch : Error {
  using Error::Error;
};

/// The backend returned no parseable steps; caller keeps the original trace.
struct DegenerateCompletion : Error {
  using Error::Error;
};

struct UnknownStage : Error {
  using Error::Error;
};

struct PoolTooSmall : Error {
  PoolTooSmall(std::size_t pool, std::size_t k)
      : Error("pool of " + std::to_string(pool) +
              " traces cannot fill k=" + std::to_string(k)) {}
};

struct UnknownQuestion : Error {
  explicit UnknownQuestion(const std::string& id)
      : Error("question not known to the mock world: " + id) {}
};

struct IdMismatch : Error {
  using Error::Error;
};

struct DatasetParseError : Error {
  DatasetParseError(const std::string& path, std::size_t line,
                    const std::string& detail)
      : Error(path + ":" + std::to_string(line) + ": " + detail) {}
};

}  // namespace coficot
