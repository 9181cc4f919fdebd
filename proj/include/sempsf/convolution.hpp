#pragma once

#include "sempsf/types.hpp"

#include <complex>

namespace sempsf {

using Spectrum = Eigen::Array<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unnormalized forward 2D DFT.
Spectrum fft2(const Image2D& img);
Spectrum fft2(const Spectrum& data);

/// Inverse 2D DFT (scaled by 1/N), real part.
Image2D ifft2_real(const Spectrum& spec);

/// Spectrum of a centered kernel wrapped onto a rows x cols periodic grid,
/// i.e. the eigenvalues of the circulant matrix the kernel defines.
Spectrum kernel_spectrum(const Kernel2D& kernel, Index rows, Index cols);

/// Circulant (periodic) convolution by a fixed centered kernel:
///   (H x)(r, c) = sum_{i,j} K(i, j) x(r - i + Dy, c - j + Dx)   (indices mod size)
/// The adjoint is convolution with the point-reflected kernel.
class CirculantOperator {
 public:
  CirculantOperator(const Kernel2D& kernel, Index rows, Index cols);

  Image2D apply(const Image2D& x) const;
  Image2D apply_adjoint(const Image2D& x) const;
  /// H^T H x
  Image2D apply_normal(const Image2D& x) const;

  /// Largest eigenvalue of H^T H.
  double max_gain_squared() const;

  bool is_identity() const noexcept { return identity_; }
  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  const Spectrum& spectrum() const noexcept { return spectrum_; }

 private:
  Image2D filter(const Image2D& x, bool conjugate, bool normal) const;

  Index rows_;
  Index cols_;
  bool identity_ = false;
  Spectrum spectrum_;
  Spectrum half_;  ///< columns 0 .. cols / 2 of spectrum_
};

Image2D convolve_circular(const Image2D& img, const Kernel2D& kernel);

/// Point reflection K'(i, j) = K(-i, -j) about the kernel center.
Kernel2D reflect_kernel(const Kernel2D& kernel);

/// 1D circular convolution of every row with a centered kernel.
Image2D convolve_rows_circular(const Image2D& img, const Kernel1D& taps);

/// Separable Gaussian smoothing with reflective borders; sigma == 0 is the identity.
Image2D gaussian_smooth(const Image2D& img, double sigma);

}  // namespace sempsf
