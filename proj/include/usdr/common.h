// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef USDR_COMMON_H_
#define USDR_COMMON_H_

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace usdr {

using Complex = std::complex<double>;
// Time-frequency matrices are frames x bins, column-major, so each
// frequency is a contiguous column.
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;
using CVector = Eigen::VectorXcd;

inline constexpr int kDefaultSampleRate = 16000;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (STFT geometry, loss hyper-parameters, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Mismatched matrix/spectrogram geometry.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A normalizer or reference had zero energy.
class DegenerateInputError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Malformed or truncated file content.
class ParseError : public Error {
 public:
  using Error::Error;
};

class UnsupportedEncodingError : public ParseError {
 public:
  explicit UnsupportedEncodingError(const std::string& encoding)
      : ParseError("unsupported WAV encoding: " + encoding),
        encoding_(encoding) {}
  const std::string& encoding() const { return encoding_; }

 private:
  std::string encoding_;
};

class SchemaError : public ParseError {
 public:
  using ParseError::ParseError;
};

// Deterministic 64-bit seed derivation for named random sub-streams, so
// that e.g. the noise of utterance 7 does not depend on how many scenes
// were drawn before it.
uint64_t DeriveSeed(uint64_t base, const std::string& stream, uint64_t index);

}  // namespace usdr

#endif  // USDR_COMMON_H_
