#pragma once

#include <stdexcept>
#include <string>

namespace facet {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or network shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// backward() called on a tape whose parameters changed after the forward pass.
class StaleTapeError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A file does not follow its declared format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Frame timestamps go backwards.
class OrderingError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in a model configuration that does not support it.
class ModeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// A required artifact (model file, clip set) is missing.
class DependencyError : public Error {
 public:
  using Error::Error;
};

/// A model has no usable latent dimensions.
class DegenerateModelError : public Error {
 public:
  using Error::Error;
};

/// Multi-run logs of different lengths cannot be aggregated.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

}  // namespace facet
