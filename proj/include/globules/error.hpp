#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace globules {

/// Invalid model, window or run parameter.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Two globule centers coincide, so the pair normal is undefined.
class DegenerateContactError : public std::runtime_error {
 public:
  DegenerateContactError(std::size_t i, std::size_t j)
      : std::runtime_error("coincident centers for globules " + std::to_string(i) + " and " +
                           std::to_string(j)),
        i_(i),
        j_(j) {}

  std::size_t first() const noexcept { return i_; }
  std::size_t second() const noexcept { return j_; }

 private:
  std::size_t i_;
  std::size_t j_;
};

/// Quadrature or fit did not reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Several validation failures collected at once (config loading).
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : std::invalid_argument(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& problems) {
    std::string out = "invalid configuration:";
    for (const auto& p : problems) {
      out += "\n  - " + p;
    }
    return out;
  }

  std::vector<std::string> problems_;
};

}  // namespace globules
