#pragma once

#include "sempsf/types.hpp"

#include <string>
#include <variant>

namespace sempsf {

/// Stretched Airy disk. The radial argument is u = (2 pi / lambda_wave) * na * tau * r.
struct AiryParams {
  double lambda_wave = 1.0;
  double na = 1.0;
  double tau = 1.0;
};

struct GaussianParams {
  double sigma_psf = 1.0;
};

using PsfModel = std::variant<AiryParams, GaussianParams>;

struct FitResult {
  PsfModel params;
  double residual = 0.0;  ///< sum of squared tap errors at the optimum
  int iterations = 0;
};

/// Search interval (pixels for sigma, dimensionless for tau).
struct FitBracket {
  double lo = 0.05;
  double hi = 20.0;
};

inline constexpr double kBesselJ1FirstZero = 3.8317059702075123156;

/// Bessel function of the first kind, order one. Power series for |x| <= 12,
/// Hankel asymptotic expansion beyond.
double bessel_j1(double x);

/// 2 J1(u) / u, continuous at u = 0 where it equals 1.
double jinc(double u);

/// Un-normalized Airy intensity (2 J1(u)/u)^2; equals 1 at r = 0.
double airy_radial(double r, const AiryParams& p);

/// exp(-r^2 / (2 sigma^2)), un-normalized.
template <typename Scalar>
Scalar gaussian_radial(Scalar r, const GaussianParams& p) {
  using std::exp;
  const Scalar s = static_cast<Scalar>(p.sigma_psf);
  return exp(-r * r / (Scalar(2) * s * s));
}

double radial_value(double r, const PsfModel& model);

/// Radius of the first dark ring of an Airy model.
double airy_first_zero_radius(const AiryParams& p);

/// Airy parameters (tau = 1) whose first dark ring lies at `radius` pixels.
AiryParams airy_with_first_zero(double radius, double na = 1.0);

void validate(const PsfModel& model);

/// taps[D + k] = radial(|k|) for k in [-D, D], normalized to unit sum.
Kernel1D discretize_1d(const PsfModel& model, Index half_width);

/// taps(D + i, D + j) = radial(sqrt(i^2 + j^2)), normalized to unit sum.
Kernel2D discretize_2d(const PsfModel& model, Index half_width);

/// Column sums of discretize_2d: the profile a straight edge sees, normalized to unit sum.
Kernel1D line_spread_1d(const PsfModel& model, Index half_width);

/// Which 1D model curve a measured kernel is compared against.
enum class FitProfile {
  slice,       ///< discretize_1d, the central cut through the PSF
  line_spread  ///< line_spread_1d; identical to slice for Gaussians
};

FitProfile parse_fit_profile(const std::string& text);
std::string to_string(FitProfile profile);

/// Least-squares fit of the stretch tau with lambda_wave and na held fixed.
FitResult fit_airy(const Kernel1D& h, double lambda_wave, double na, FitBracket bracket = {},
                   FitProfile profile = FitProfile::slice);

/// Least-squares fit of sigma_psf.
FitResult fit_gaussian(const Kernel1D& h, FitBracket bracket = {}, FitProfile profile = FitProfile::slice);

}  // namespace sempsf
