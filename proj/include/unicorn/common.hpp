#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace unicorn {

// Base error for everything the toolkit raises on purpose. Subclasses let the
// CLI distinguish "your file is broken" from "your arguments are broken".
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Small dense row-major matrix of doubles. This is the plain-data carrier for
// observations and tables; the differentiable tensor type lives in tensor.hpp.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  bool operator==(const Mat&) const = default;
};

// Fixed-point CSV float formatting so identical runs produce identical bytes.
std::string csv_double(double x);

// 1-based line/column of a byte offset in a text buffer, for parser messages.
std::pair<int, int> line_col_of_offset(const std::string& text, size_t byte_offset);

}  // namespace unicorn
