#pragma once

#include <stdexcept>
#include <string>

namespace expertroute {

/// Malformed or inconsistent input data (dataset rows, registry, config files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed an argument outside its documented domain.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Checkpoint could not be decoded: bad magic, version mismatch, truncation or checksum failure.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss. Carries the last finite epoch loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, double last_finite_loss)
      : std::runtime_error(what), last_finite_loss_(last_finite_loss) {}
  double last_finite_loss() const noexcept { return last_finite_loss_; }

 private:
  double last_finite_loss_;
};

}  // namespace expertroute
