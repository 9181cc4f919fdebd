#pragma once

#include "sempsf/rng.hpp"
#include "sempsf/types.hpp"

#include <filesystem>
#include <string>
#include <unistd.h>

namespace testing {

using namespace sempsf;

inline Image2D random_image(Index rows, Index cols, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Image2D img(rows, cols);
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform(lo, hi);
  return img;
}

/// Random nonnegative unit-sum (2d+1)x(2d+1) kernel.
inline Kernel2D random_kernel(Index d, Rng& rng) {
  Kernel2D k = random_image(2 * d + 1, 2 * d + 1, rng, 0.0, 1.0);
  return k / k.sum();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("sempsf_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Direct nested-loop circular convolution.
inline Image2D convolve_oracle(const Image2D& x, const Kernel2D& k) {
  const Index h = x.rows(), w = x.cols(), dy = (k.rows() - 1) / 2, dx = (k.cols() - 1) / 2;
  Image2D out = Image2D::Zero(h, w);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c)
      for (Index i = 0; i < k.rows(); ++i)
        for (Index j = 0; j < k.cols(); ++j) {
          const Index sr = ((r - (i - dy)) % h + h) % h, sc = ((c - (j - dx)) % w + w) % w;
          out(r, c) += k(i, j) * x(sr, sc);
        }
  return out;
}

}  // namespace testing
