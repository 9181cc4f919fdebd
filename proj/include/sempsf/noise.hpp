#pragma once

#include "sempsf/rng.hpp"
#include "sempsf/types.hpp"

#include <vector>

namespace sempsf {

/// Signal-dependent, scan-line-correlated noise: y = Hx + D(x) C n with
/// D(x)_ii = sqrt(sigma2 + alpha x_i) and C a circular row convolution by `corr`.
struct NoiseParams {
  double sigma2 = 0.0;
  double alpha = 0.0;
  /// Stored as given; rescaled to unit l2 energy whenever it is applied.
  Kernel1D corr = Kernel1D::Ones(1);
  /// Share of the unit variance of n carried by the standardized Poisson part.
  double poisson_fraction = 0.5;
  double poisson_mean = 16.0;
};

void validate(const NoiseParams& p);

/// corr / ||corr||_2
Kernel1D unit_energy(const Kernel1D& corr);

/// Per-pixel sqrt(sigma2 + alpha x_i).
Image2D noise_stddev(const Image2D& x, const NoiseParams& p);

/// The correlated unit-variance field C n. Row r draws from rng.split(r).
Image2D correlated_unit_noise(Index rows, Index cols, const NoiseParams& p, const Rng& rng);

/// clean_blurred + D(clean_blurred) C n. Negative results are kept.
Image2D synthesize_noise(const Image2D& clean_blurred, const NoiseParams& p, const Rng& rng);

/// Inverse-correlation weighting for patch rows of a fixed length L.
///
/// The whitening filter has the zero-phase response
///   F(w) = (1 + eps) / (|C(w)| + eps |C(0)|),   eps = 1e-3,
/// with C the spectrum of the unit-energy corr wrapped onto L samples. It is
/// exactly 1 for a delta corr. The squared norm of a whitened row d is
///   ||F * d||^2 = sum_g coefficient(g) * sum_a d_a d_{a+g},   g = 0 .. L-1,
/// which lets callers accumulate lagged products instead of filtering.
class ScanLineWhitener {
 public:
  static constexpr double kRegularization = 1e-3;

  ScanLineWhitener(const Kernel1D& corr, Index row_length);

  Index row_length() const noexcept { return length_; }
  const std::vector<double>& gain() const noexcept { return gain_; }
  const std::vector<double>& lag_coefficients() const noexcept { return coefficients_; }

  /// ||F * d||^2 for one row of length L.
  double row_energy(const double* d) const;

 private:
  Index length_;
  std::vector<double> gain_;
  std::vector<double> coefficients_;
};

/// Squared distance between two patches after whitening each row of their
/// difference and scaling by 1 / (sigma2 + alpha * max(local_mean, 0)).
/// Patches are row-major; row_length <= 0 treats the whole vector as one row.
double whitening_distance(const Eigen::Ref<const Eigen::VectorXd>& patch_a,
                          const Eigen::Ref<const Eigen::VectorXd>& patch_b, const NoiseParams& p,
                          double local_mean, Index row_length = 0);

/// The variance scale used by whitening_distance.
double noise_variance(const NoiseParams& p, double local_mean);

}  // namespace sempsf
