#include "unicorn/common.hpp"

#include <cstdio>

namespace unicorn {

std::string csv_double(double x) {
  // %.6f keeps eval/metrics CSVs byte-stable across runs; avoid "-0.000000".
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

std::pair<int, int> line_col_of_offset(const std::string& text, size_t byte_offset) {
  int line = 1, col = 1;
  for (size_t i = 0; i < byte_offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace unicorn
