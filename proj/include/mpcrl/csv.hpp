#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "mpcrl/types.hpp"

namespace mpcrl {

/// Formats a double with 17 significant digits so that rewriting the same
/// value always produces the same bytes and parsing recovers it exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Minimal CSV writer with a fixed header row. Numeric cells are written
/// with round-trip-exact formatting.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header,
            char separator = ',')
      : out_(path), sep_(separator) {
    require(out_.good(), "cannot open '" + path + "' for writing");
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i > 0) out_ << sep_;
      out_ << header[i];
    }
    out_ << '\n';
  }

  void write_row(const std::vector<double>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out_ << sep_;
      out_ << format_double(cells[i]);
    }
    out_ << '\n';
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  char sep_;
};

}  // namespace mpcrl
