#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <unistd.h>

#include "tsdiff/errors.hpp"

namespace tsdiff {

/// Shortest form that keeps 17 significant digits (round-trips any double).
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Minimal CSV builder; values are written as-is, no quoting.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    write_row_strings(header);
  }

  template <typename... Cells>
  void row(const Cells&... cells) {
    std::vector<std::string> out;
    out.reserve(sizeof...(cells));
    (out.push_back(cell(cells)), ...);
    write_row_strings(out);
  }

  void row_strings(const std::vector<std::string>& cells) { write_row_strings(cells); }

  const std::string& str() const noexcept { return text_; }

 private:
  static std::string cell(double v) { return format_real(v); }
  static std::string cell(float v) { return format_real(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(std::string_view s) { return std::string(s); }
  static std::string cell(const char* s) { return s; }
  template <typename I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }

  void write_row_strings(const std::vector<std::string>& cells) {
    require(cells.size() == columns_, ErrorCategory::contract, "csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  std::size_t columns_;
  std::string text_;
};

/// Writes through a temporary file and renames it into place. Refuses to
/// replace an existing artifact.
inline void write_artifact(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (fs::exists(path))
    fail(ErrorCategory::io, "refusing to overwrite existing artifact: " + path.string());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::io, "cannot open " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorCategory::io, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    fail(ErrorCategory::io, "rename failed for " + path.string() + ": " + ec.message());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tsdiff
