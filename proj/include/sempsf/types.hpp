#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sempsf {

using Index = Eigen::Index;

/// Row-major raster: rows() is the image height, cols() the width.
template <typename Scalar>
using ImageT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using KernelT = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using Image2D = ImageT<double>;
using BinaryImage2D = ImageT<bool>;

/// Odd-length 1D taps with the center at index (size() - 1) / 2.
using Kernel1D = KernelT<double>;

/// Square (2D+1)x(2D+1) taps centered at (D, D).
using Kernel2D = ImageT<double>;

/// Error carrying the name of the pipeline stage that raised it. what() is
/// "[stage] message" when a stage is set.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
  Error(std::string stage, const std::string& message)
      : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Runs `body`, re-throwing any failure as an Error tagged with `stage`
/// unless it already carries one.
template <typename F>
auto run_stage(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw Error(stage, e.what());
  } catch (const std::exception& e) {
    throw Error(stage, e.what());
  }
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& a) {
  return a.derived().array().isFinite().all();
}

/// Throws unless the image is non-empty and every value is finite.
template <typename Derived>
void require_finite_image(const Eigen::DenseBase<Derived>& a, const char* what) {
  if (a.rows() < 1 || a.cols() < 1) {
    throw Error(std::string(what) + ": image must be at least 1x1");
  }
  if (!all_finite(a)) {
    throw Error(std::string(what) + ": image contains non-finite values");
  }
}

template <typename Derived>
Index half_width_of(const Eigen::DenseBase<Derived>& taps) {
  return (taps.size() - 1) / 2;
}

/// Circular shift: out(r, c) = in((r - dy) mod H, (c - dx) mod W).
template <typename Scalar>
ImageT<Scalar> circular_shift(const ImageT<Scalar>& in, Index dy, Index dx) {
  const Index h = in.rows();
  const Index w = in.cols();
  ImageT<Scalar> out(h, w);
  for (Index r = 0; r < h; ++r) {
    const Index sr = ((r - dy) % h + h) % h;
    for (Index c = 0; c < w; ++c) {
      out(r, c) = in(sr, ((c - dx) % w + w) % w);
    }
  }
  return out;
}

template <typename Derived>
double mean_squared_error(const Eigen::ArrayBase<Derived>& a, const Image2D& b) {
  return (a.derived() - b).square().mean();
}

}  // namespace sempsf
