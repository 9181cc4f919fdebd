#pragma once

#include "sempsf/convolution.hpp"
#include "sempsf/psf_model.hpp"
#include "sempsf/types.hpp"

#include <optional>
#include <vector>

namespace sempsf {

/// How the end-segment variance threshold for profile rejection is chosen.
struct VarianceThreshold {
  enum class Mode { relative, absolute, none };
  Mode mode = Mode::relative;
  /// relative: multiple of the median end-segment variance; absolute: intensity^2.
  double value = 4.0;

  static VarianceThreshold parse(const std::string& text);
  std::string to_string() const;
};

struct ProfileConfig {
  Index half_width = 50;  ///< D: profiles have 2D + 1 samples
  /// Edge directions phi in radians; multiples of pi/2. The profile runs
  /// from the mu1 side to the mu2 side along (sin phi, -cos phi) in (x, y-down)
  /// image coordinates, so pi/2 is a vertical edge with mu1 on the left.
  std::vector<double> directions = {0.0, 1.5707963267948966, 3.141592653589793, 4.71238898038469};
  VarianceThreshold variance_threshold;
  Index min_profiles = 10;
  /// Lateral half-width (pixels) of the strip around a profile that must
  /// show the same clean step in the latent mask.
  Index edge_guard = 8;
};

void validate(const ProfileConfig& cfg);

struct EdgeProfileSet {
  std::vector<Eigen::VectorXd> profiles;  ///< accepted, oriented mu1 side first
  double mu1 = 0.0;
  double mu2 = 0.0;
  Index accepted_count = 0;
  Index rejected_count = 0;   ///< failed the variance test
  Index ineligible_count = 0; ///< boundary pixels without a clean strip or full support
  double variance_threshold = 0.0;
};

struct LatentEstimate {
  BinaryImage2D mask;
  double mu1 = 0.0;  ///< mean of y_M where the mask is false
  double mu2 = 0.0;  ///< mean of y_M where the mask is true
  double threshold = 0.0;
};

struct Shift {
  Index dy = 0;
  Index dx = 0;
  bool operator==(const Shift&) const = default;
};

/// Integer circular shift within [-max_shift, max_shift]^2 minimizing the sum
/// of squared differences between `reference` and circular_shift(img, shift).
/// Zero shift wins ties.
Shift estimate_shift(const Image2D& reference, const Image2D& img, Index max_shift);

/// Aligns every image to the first one; the first is returned unchanged.
std::vector<Image2D> register_stack(const std::vector<Image2D>& images, Index max_shift = 10,
                                    std::vector<Shift>* shifts = nullptr);

/// Pixel-wise mean.
Image2D average_stack(const std::vector<Image2D>& aligned);

LatentEstimate estimate_latent(const Image2D& y_mean, double smooth_sigma = 3.0);

EdgeProfileSet extract_profiles(const Image2D& y_mean, const LatentEstimate& latent, const ProfileConfig& cfg);

Eigen::VectorXd average_profiles(const EdgeProfileSet& set);

/// Exact solve of the step-edge convolution y'_k = sum_j h_j b_{k-j}, with b
/// stepping from mu1 to mu2 at sample D:
///   h_j = (y'_{D+j} - y'_{D+j-1}) / (mu2 - mu1),  j = -D+1 .. D,   h_{-D} = 0.
/// Taps below -1e-4 max(h) are clamped, then the kernel is normalized to unit sum.
Kernel1D solve_psf(const Eigen::VectorXd& y_prime, double mu1, double mu2, Index half_width);

struct PsfDiagnostics {
  std::vector<Shift> shifts;
  double threshold = 0.0;
  double mu1 = 0.0;
  double mu2 = 0.0;
  Index accepted_profiles = 0;
  Index rejected_profiles = 0;
  Index ineligible_profiles = 0;
  double variance_threshold = 0.0;
};

struct PsfEstimate {
  Kernel1D h_raw;
  std::optional<FitResult> airy_fit;  ///< absent without lambda_wave / na
  FitResult gaussian_fit;
  PsfDiagnostics diagnostics;
};

struct CalibrationConfig {
  ProfileConfig profile;
  double smooth_sigma = 3.0;
  Index max_shift = 10;
  std::optional<double> lambda_wave;
  std::optional<double> na;
  /// Edge profiles measure the line-spread function of the 2D PSF.
  FitProfile fit_profile = FitProfile::line_spread;
};

/// register -> average -> estimate_latent -> extract_profiles (all directions
/// pooled) -> average_profiles -> solve_psf -> fits. Failures are rethrown as
/// Error with the stage name set.
PsfEstimate estimate_psf_pipeline(const std::vector<Image2D>& images, const CalibrationConfig& cfg);

struct FourierDiagnostic {
  Spectrum ratio;              ///< F(y) / F(x); zero at flagged bins
  BinaryImage2D flagged;       ///< |F(x)| < floor
  Image2D magnitude;           ///< |ratio|
  Index flagged_count = 0;
};

/// Frequency-domain PSF estimate F(y) / F(x). Bins where |F(x)| < floor are
/// flagged instead of divided.
FourierDiagnostic fourier_psf_diagnostic(const Image2D& y, const Image2D& x, double floor);

}  // namespace sempsf
