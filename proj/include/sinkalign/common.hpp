#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sinkalign {

/// Dense row-major matrix; rows are vectors (embeddings, batch items).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Malformed input file. Carries the 1-based line number when one applies.
class ParseError : public std::runtime_error {
 public:
  enum class Kind {
    kHeader,
    kRowCount,
    kDimension,
    kDuplicateWord,
    kBadNumber,
    kColumnCount,
    kOutOfRange,
    kIo,
  };

  ParseError(Kind kind, std::size_t line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        kind_(kind),
        line_(line) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

/// A vector with (near) zero norm was given where a direction is required.
class DegenerateVectorError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Numerical failure in the scaling iterations (kernel underflow, non-finite values).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Nothing could be evaluated (all queries out of vocabulary, etc).
class EmptyEvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDegenerateNorm = 1e-12;

}  // namespace sinkalign
