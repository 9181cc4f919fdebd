#include "sempsf/io.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace sempsf {

namespace fs = std::filesystem;

namespace {

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

void require_exists(const fs::path& path) {
  if (path.empty()) throw Error("empty path");
  if (!fs::exists(path)) throw Error("file not found: " + path.string());
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// --- PGM -------------------------------------------------------------------

// Reads the next header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& in) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

Image2D load_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string magic = pgm_token(in);
  if (magic == "P6" || magic == "P3") throw Error("color image not supported (calibration data must be grayscale): " + path.string());
  if (magic != "P5") throw Error("unsupported PGM variant '" + magic + "': " + path.string());
  long width = 0, height = 0, maxval = 0;
  try {
    width = std::stol(pgm_token(in));
    height = std::stol(pgm_token(in));
    maxval = std::stol(pgm_token(in));
  } catch (const std::exception&) {
    throw Error("malformed PGM header: " + path.string());
  }
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) {
    throw Error("unsupported PGM dimensions or bit depth: " + path.string());
  }
  const bool wide = maxval > 255;
  const std::size_t bytes = static_cast<std::size_t>(width * height) * (wide ? 2 : 1);
  std::vector<unsigned char> buf(bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) throw Error("truncated PGM data: " + path.string());

  Image2D img(height, width);
  for (long i = 0; i < width * height; ++i) {
    img.data()[i] = wide ? static_cast<double>((buf[2 * i] << 8) | buf[2 * i + 1]) : static_cast<double>(buf[i]);
  }
  return img;
}

std::vector<std::uint16_t> quantize(const Image2D& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw Error("unsupported bit depth " + std::to_string(bit_depth));
  if (!all_finite(img)) throw Error("cannot save an image with non-finite values");
  const double hi = bit_depth == 8 ? 255.0 : 65535.0;
  std::vector<std::uint16_t> out(static_cast<std::size_t>(img.size()));
  for (Index i = 0; i < img.size(); ++i) {
    out[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(std::clamp(std::round(img.data()[i]), 0.0, hi));
  }
  return out;
}

void save_pgm(const Image2D& img, const fs::path& path, int bit_depth) {
  const auto q = quantize(img, bit_depth);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << img.cols() << " " << img.rows() << "\n" << (bit_depth == 8 ? 255 : 65535) << "\n";
  std::vector<unsigned char> buf;
  buf.reserve(q.size() * 2);
  for (auto v : q) {
    if (bit_depth == 16) buf.push_back(static_cast<unsigned char>(v >> 8));
    buf.push_back(static_cast<unsigned char>(v & 0xFF));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("write failed: " + path.string());
}

// --- PNG -------------------------------------------------------------------

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image2D load_png(const fs::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("malformed PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("color image not supported (calibration data must be grayscale): " + path.string());
  }
  if (depth != 8 && depth != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("unsupported PNG bit depth " + std::to_string(depth) + ": " + path.string());
  }
  const std::size_t stride = png_get_rowbytes(png, info);
  std::vector<unsigned char> buf(stride * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = buf.data() + r * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image2D img(height, width);
  for (png_uint_32 r = 0; r < height; ++r) {
    for (png_uint_32 c = 0; c < width; ++c) {
      const unsigned char* p = rows[r];
      img(r, c) = depth == 16 ? static_cast<double>((p[2 * c] << 8) | p[2 * c + 1]) : static_cast<double>(p[c]);
    }
  }
  return img;
}

void save_png(const Image2D& img, const fs::path& path, int bit_depth) {
  const auto q = quantize(img, bit_depth);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  const auto width = static_cast<png_uint_32>(img.cols());
  const auto height = static_cast<png_uint_32>(img.rows());
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t bpp = bit_depth == 16 ? 2 : 1;
  std::vector<unsigned char> row(width * bpp);
  for (png_uint_32 r = 0; r < height; ++r) {
    for (png_uint_32 c = 0; c < width; ++c) {
      const auto v = q[r * width + c];
      if (bpp == 2) {
        row[2 * c] = static_cast<unsigned char>(v >> 8);
        row[2 * c + 1] = static_cast<unsigned char>(v & 0xFF);
      } else {
        row[c] = static_cast<unsigned char>(v);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// --- raw + sidecar -----------------------------------------------------------

fs::path sidecar_of(const fs::path& path) { return fs::path(path.string() + ".hdr"); }

Image2D load_raw(const fs::path& path) {
  const auto header = KeyValueFile::load(sidecar_of(path));
  const long width = header.get_int("width");
  const long height = header.get_int("height");
  if (width < 1 || height < 1) throw Error("invalid raw dimensions in " + sidecar_of(path).string());
  if (header.get_int("bit_depth", 16) != 16) throw Error("raw files must be 16-bit: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::size_t bytes = static_cast<std::size_t>(width * height) * 2;
  std::vector<unsigned char> buf(bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) throw Error("truncated raw data: " + path.string());
  Image2D img(height, width);
  for (long i = 0; i < width * height; ++i) {
    img.data()[i] = static_cast<double>(buf[2 * i] | (buf[2 * i + 1] << 8));
  }
  return img;
}

void save_raw(const Image2D& img, const fs::path& path, int bit_depth) {
  if (bit_depth != 16) throw Error("raw files are always 16-bit");
  const auto q = quantize(img, 16);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (auto v : q) {
    out.put(static_cast<char>(v & 0xFF));
    out.put(static_cast<char>(v >> 8));
  }
  if (!out) throw Error("write failed: " + path.string());
  KeyValueFile header;
  header.set("width", std::to_string(img.cols()));
  header.set("height", std::to_string(img.rows()));
  header.set("bit_depth", "16");
  header.save(sidecar_of(path));
}

}  // namespace

Image2D load_image(const fs::path& path) {
  require_exists(path);
  const auto ext = lower_extension(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".raw") return load_raw(path);
  if (ext == ".pgm" || ext == ".pnm") return load_pgm(path);
  // Unknown extension: sniff the magic bytes.
  std::ifstream in(path, std::ios::binary);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] == 'P') return load_pgm(path);
  if (static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P') return load_png(path);
  throw Error("unsupported image format: " + path.string());
}

void save_image(const Image2D& img, const fs::path& path, int bit_depth) {
  if (path.empty()) throw Error("empty path");
  if (img.size() == 0) throw Error("cannot save an empty image");
  const auto ext = lower_extension(path);
  if (ext == ".png") return save_png(img, path, bit_depth);
  if (ext == ".raw") return save_raw(img, path, bit_depth);
  return save_pgm(img, path, bit_depth);
}

BinaryImage2D load_mask(const fs::path& path) { return load_image(path) != 0.0; }

void save_mask(const BinaryImage2D& mask, const fs::path& path) {
  save_image(mask.cast<double>() * 255.0, path, 8);
}

// --- key-value files ---------------------------------------------------------

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(origin + ":" + std::to_string(lineno) + ": empty key");
    kv.values_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const fs::path& path) {
  require_exists(path);
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void KeyValueFile::save(const fs::path& path) const {
  if (path.empty()) throw Error("empty path");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_string();
}

std::string KeyValueFile::to_string() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
  return s;
}

void KeyValueFile::set(const std::string& key, double value) { values_[key] = format_double(value); }

void KeyValueFile::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty()) {
    throw Error("malformed override '" + assignment + "' (expected key=value)");
  }
  values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::string KeyValueFile::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error(origin_ + ": missing key '" + key + "'");
  return it->second;
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueFile::get_double(const std::string& key) const {
  const auto s = get_string(key);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(origin_ + ": key '" + key + "' is not a number: '" + s + "'");
  }
  return v;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long KeyValueFile::get_int(const std::string& key) const {
  const auto s = get_string(key);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(origin_ + ": key '" + key + "' is not an integer: '" + s + "'");
  }
  return v;
}

long KeyValueFile::get_int(const std::string& key, long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key) const {
  std::string text = get_string(key);
  for (char& ch : text) {
    if (ch == ',' || ch == '[' || ch == ']') ch = ' ';
  }
  std::istringstream in(text);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw Error(origin_ + ": key '" + key + "' has a non-numeric entry '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

// --- tap tables --------------------------------------------------------------

Image2D load_tap_table(const fs::path& path) {
  require_exists(path);
  std::ifstream in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw Error(path.string() + ": non-numeric tap '" + tok + "'");
      }
      row.push_back(v);
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(path.string() + ": empty tap table");
  const auto cols = rows.front().size();
  Image2D taps(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw Error(path.string() + ": ragged tap table");
    for (std::size_t c = 0; c < cols; ++c) taps(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  if (!all_finite(taps)) throw Error(path.string() + ": non-finite taps");
  return taps;
}

void save_tap_table(const Image2D& taps, const fs::path& path) {
  if (path.empty()) throw Error("empty path");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (Index r = 0; r < taps.rows(); ++r) {
    for (Index c = 0; c < taps.cols(); ++c) {
      if (c) out << ' ';
      out << format_double(taps(r, c));
    }
    out << '\n';
  }
}

Kernel1D load_kernel1d(const fs::path& path) {
  const Image2D t = load_tap_table(path);
  if (t.rows() != 1 && t.cols() != 1) throw Error(path.string() + ": expected a single row or column of taps");
  return Eigen::Map<const Kernel1D>(t.data(), t.size());
}

void save_kernel1d(const Kernel1D& taps, const fs::path& path) {
  save_tap_table(Image2D(Eigen::Map<const Image2D>(taps.data(), 1, taps.size())), path);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

}  // namespace sempsf
