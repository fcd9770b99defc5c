// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#ifndef FSKATE_CORE_ERRORS_HPP
#define FSKATE_CORE_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fskate {

/// Base of every error raised by the core. The C API maps each subclass onto
/// one status code, so new subclasses need a matching entry there.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class SequenceTooShortError : public Error {
 public:
  SequenceTooShortError(std::size_t length, std::size_t kernel)
      : Error("sequence too short: T=" + std::to_string(length) +
              " < kernel " + std::to_string(kernel)),
        length_(length),
        kernel_(kernel) {}
  std::size_t length() const { return length_; }
  std::size_t kernel() const { return kernel_; }

 private:
  std::size_t length_;
  std::size_t kernel_;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed feature file (bad magic, version, truncation, non-finite data).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class KindMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(const std::string& sample_id, double value)
      : Error("non-finite loss (" + std::to_string(value) + ") on sample '" +
              sample_id + "'"),
        sample_id_(sample_id) {}
  const std::string& sample_id() const { return sample_id_; }

 private:
  std::string sample_id_;
};

/// Rank correlation with zero variance in one argument.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

}  // namespace fskate

#endif  // FSKATE_CORE_ERRORS_HPP
