#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsc {

/// Bad arguments: dimension mismatches, NaNs, out-of-range parameters.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A subdictionary required to have full column rank does not.
class RankDeficiencyError : public std::runtime_error {
 public:
  RankDeficiencyError(int rank, int expected)
      : std::runtime_error("subdictionary is rank deficient: rank " + std::to_string(rank) +
                           " of " + std::to_string(expected)),
        rank_(rank),
        expected_(expected) {}
  int rank() const { return rank_; }
  int expected() const { return expected_; }

 private:
  int rank_;
  int expected_;
};

/// Malformed binary file; offset points at the violating byte.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Requested instance cannot satisfy the certificate conditions.
class InfeasibleRequest : public std::runtime_error {
 public:
  InfeasibleRequest(const std::string& what, double limiting_bound)
      : std::runtime_error(what), limiting_bound_(limiting_bound) {}
  double limiting_bound() const { return limiting_bound_; }

 private:
  double limiting_bound_;
};

/// Block system violates the common-norm-per-group renormalization requirement.
class InvalidStructure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, int last_finite_epoch)
      : std::runtime_error(what), last_finite_epoch_(last_finite_epoch) {}
  int last_finite_epoch() const { return last_finite_epoch_; }

 private:
  int last_finite_epoch_;
};

class DeadDictionaryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A report was requested for a certificate whose hypotheses do not hold.
class PreconditionViolated : public std::runtime_error {
 public:
  PreconditionViolated(const std::string& what, std::vector<std::string> failed)
      : std::runtime_error(what), failed_(std::move(failed)) {}
  const std::vector<std::string>& failed_conditions() const { return failed_; }

 private:
  std::vector<std::string> failed_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gsc
