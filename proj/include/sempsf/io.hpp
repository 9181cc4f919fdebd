#pragma once

#include "sempsf/types.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sempsf {

// Grayscale raster files. The format follows the extension:
//   .pgm        binary P5, 8- or 16-bit (maxval > 255 means 16-bit, big-endian)
//   .png        8- or 16-bit grayscale
//   .raw        little-endian uint16 with a "<path>.hdr" sidecar holding
//               `width = ...` and `height = ...`
// Loaded intensities keep their integer code values: 8-bit -> [0, 255],
// 16-bit -> [0, 65535].

Image2D load_image(const std::filesystem::path& path);

/// Values are rounded to the nearest integer and clamped to [0, 2^bit_depth - 1].
void save_image(const Image2D& img, const std::filesystem::path& path, int bit_depth = 16);

/// Nonzero pixels are positive.
BinaryImage2D load_mask(const std::filesystem::path& path);
void save_mask(const BinaryImage2D& mask, const std::filesystem::path& path);

/// UTF-8 `key = value` text, one pair per line. `#` starts a comment.
class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;
  std::string to_string() const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value);

  /// Applies a "key=value" override; throws on a malformed assignment.
  void apply_override(const std::string& assignment);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key) const;
  long get_int(const std::string& key, long fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

/// Whitespace-separated tap table, one row per line.
Image2D load_tap_table(const std::filesystem::path& path);
void save_tap_table(const Image2D& taps, const std::filesystem::path& path);

/// A tap table that is a single row or column, as a Kernel1D.
Kernel1D load_kernel1d(const std::filesystem::path& path);
void save_kernel1d(const Kernel1D& taps, const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace sempsf
