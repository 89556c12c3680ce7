#pragma once

#include <stdexcept>
#include <string>

namespace vsseg {

/// Operand shapes do not satisfy an operation's contract.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Block grid does not divide the spatial extents of a volume.
struct PartitionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An API was invoked outside its usage contract (non-scalar loss,
/// stage run out of order, empty clip, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// A class has fewer correctly classified features than the memory
/// construction needs.
struct InsufficientClassSamples : std::runtime_error {
  InsufficientClassSamples(int cls, const std::string& what)
      : std::runtime_error(what), class_id(cls) {}
  int class_id;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BadMagicError : IoError {
  using IoError::IoError;
};

struct BadVersionError : IoError {
  using IoError::IoError;
};

struct TruncatedFileError : IoError {
  using IoError::IoError;
};

struct LabelRangeError : IoError {
  using IoError::IoError;
};

struct DuplicateNameError : IoError {
  using IoError::IoError;
};

/// Aggregated configuration validation report.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vsseg
