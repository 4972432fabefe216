#pragma once

#include <stdexcept>

namespace hymad {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint/config/dataset mismatch (e.g. differing digests).
class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mix would combine sources from different dataset splits.
class LeakageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A metric has no defined value for the given data (e.g. AUROC with no
/// label having both classes).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace hymad
