#ifndef PSALT_ERRORS_HPP
#define PSALT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace psalt {

/// Invalid argument: nonpositive rate, negative time, inadmissible tuning, ...
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A cell probability fell to the floor where a logarithm or reciprocal is needed.
class SingularCellError : public std::runtime_error {
 public:
  SingularCellError(std::size_t group, std::size_t cell, double p)
      : std::runtime_error("cell probability p[" + std::to_string(group) + "][" +
                           std::to_string(cell) + "] = " + std::to_string(p) +
                           " is at or below the probability floor"),
        group_(group),
        cell_(cell) {}

  std::size_t group() const noexcept { return group_; }
  std::size_t cell() const noexcept { return cell_; }

 private:
  std::size_t group_;
  std::size_t cell_;
};

/// Matrix not safely invertible; carries the condition number seen.
class SingularMatrixError : public std::runtime_error {
 public:
  explicit SingularMatrixError(double condition)
      : std::runtime_error("matrix is numerically singular (condition number " +
                           std::to_string(condition) + ")"),
        condition_(condition) {}

  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// Schema / configuration problem. `path` is the offending JSON path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace psalt

#endif
