#pragma once

#include <stdexcept>
#include <string>

namespace futurist {

// Tensor or sequence dimensions do not agree with the layout they are used with.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A scalar argument or coordinate is outside its legal interval.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// A caller broke a documented precondition that is not a plain shape or range issue.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A required input file is missing or unreadable; `path()` names it.
class LoadError : public std::runtime_error {
 public:
  LoadError(std::string path, const std::string& what)
      : std::runtime_error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace futurist
