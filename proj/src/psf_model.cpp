#include "sempsf/psf_model.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace sempsf {

namespace {

constexpr double kSeriesLimit = 12.0;

// sum_m (-1)^m (x/2)^(2m) / (m! (m+1)!), i.e. J1(x) / (x/2).
double j1_series_over_half_x(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int m = 0; m < 200; ++m) {
    term *= -q / ((m + 1.0) * (m + 2.0));
    sum += term;
    if (std::abs(term) < 1e-17 * std::max(1.0, std::abs(sum))) break;
  }
  return sum;
}

// Hankel expansion J1(x) = sqrt(2/(pi x)) (P cos chi - Q sin chi), chi = x - 3pi/4.
double j1_asymptotic(double x) {
  const double mu = 4.0;  // 4 nu^2
  double p = 1.0, q = 0.0;
  double term = 1.0;
  double previous = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 80; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= (mu - odd * odd) / (k * 8.0 * x);
    if (std::abs(term) >= previous) break;  // series starts diverging
    previous = std::abs(term);
    // k odd -> Q, k even -> P, signs alternate in pairs.
    const double sign = ((k / 2) % 2 == 0) ? 1.0 : -1.0;
    if (k % 2 == 1) {
      q += sign * term;
    } else {
      p += sign * term;
    }
    if (previous < 1e-17) break;
  }
  const double chi = x - 0.75 * std::numbers::pi;
  return std::sqrt(2.0 / (std::numbers::pi * x)) * (p * std::cos(chi) - q * std::sin(chi));
}

void require_fit_input(const Kernel1D& h) {
  if (h.size() < 3 || h.size() % 2 == 0) throw Error("fit", "kernel must have odd length >= 3");
  if (!all_finite(h)) throw Error("fit", "kernel contains non-finite taps");
}

// Global 1D minimization: log-spaced scan to locate the best basin, golden
// section inside the neighbouring grid cells, then parabolic polish.
FitResult minimize_scalar(const std::function<double(double)>& objective, FitBracket bracket,
                          const std::function<PsfModel(double)>& make) {
  if (!(bracket.lo > 0.0) || !(bracket.hi > bracket.lo)) throw Error("fit", "invalid search bracket");
  constexpr int kGrid = 241;
  const double log_lo = std::log(bracket.lo), log_hi = std::log(bracket.hi);
  std::vector<double> grid(kGrid), values(kGrid);
  int best = 0;
  for (int i = 0; i < kGrid; ++i) {
    grid[i] = std::exp(log_lo + (log_hi - log_lo) * i / (kGrid - 1));
    values[i] = objective(grid[i]);
    if (values[i] < values[best]) best = i;
  }
  int iterations = kGrid;
  if (best == 0 || best == kGrid - 1) {
    throw Error("fit", "fit bracket exhausted: optimum at the search boundary " + std::to_string(grid[best]) +
                           " (kernel inconsistent with the model in range)");
  }

  double a = grid[best - 1], b = grid[best + 1];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = objective(x1), f2 = objective(x2);
  while (b - a > 1e-12 * (a + b)) {
    ++iterations;
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = objective(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = objective(x2);
    }
    if (iterations > 10000) break;
  }
  double x = f1 <= f2 ? x1 : x2;
  double fx = std::min(f1, f2);

  // Parabolic refinement through three points around x.
  const double step = std::max(1e-7 * x, 1e-12);
  const double fl = objective(x - step), fr = objective(x + step);
  const double denom = fl - 2.0 * fx + fr;
  iterations += 2;
  if (denom > 0.0) {
    const double candidate = x + 0.5 * step * (fl - fr) / denom;
    if (std::abs(candidate - x) <= step) {
      const double fc = objective(candidate);
      ++iterations;
      if (fc < fx) {
        x = candidate;
        fx = fc;
      }
    }
  }
  return FitResult{make(x), std::max(fx, 0.0), iterations};
}

}  // namespace

double bessel_j1(double x) {
  const double ax = std::abs(x);
  double value;
  if (ax <= kSeriesLimit) {
    value = 0.5 * ax * j1_series_over_half_x(ax);
  } else {
    value = j1_asymptotic(ax);
  }
  return x < 0.0 ? -value : value;
}

double jinc(double u) {
  const double au = std::abs(u);
  if (au <= kSeriesLimit) return j1_series_over_half_x(au);
  return 2.0 * bessel_j1(au) / au;
}

double airy_radial(double r, const AiryParams& p) {
  const double u = 2.0 * std::numbers::pi / p.lambda_wave * p.na * p.tau * r;
  const double j = jinc(u);
  return j * j;
}

double radial_value(double r, const PsfModel& model) {
  return std::visit(
      [r](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, AiryParams>) {
          return airy_radial(r, p);
        } else {
          return gaussian_radial(r, p);
        }
      },
      model);
}

double airy_first_zero_radius(const AiryParams& p) {
  return kBesselJ1FirstZero / (2.0 * std::numbers::pi / p.lambda_wave * p.na * p.tau);
}

AiryParams airy_with_first_zero(double radius, double na) {
  // (2 pi / lambda) * na * radius = first zero
  return AiryParams{2.0 * std::numbers::pi * na * radius / kBesselJ1FirstZero, na, 1.0};
}

void validate(const PsfModel& model) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, AiryParams>) {
          if (!(p.lambda_wave > 0.0) || !(p.na > 0.0) || !(p.tau > 0.0)) {
            throw Error("Airy parameters must satisfy lambda_wave > 0, na > 0, tau > 0");
          }
        } else {
          if (!(p.sigma_psf > 0.0)) throw Error("Gaussian sigma_psf must be > 0");
        }
      },
      model);
}

Kernel1D discretize_1d(const PsfModel& model, Index half_width) {
  validate(model);
  if (half_width < 1) throw Error("half_width must be >= 1");
  Kernel1D taps(2 * half_width + 1);
  for (Index k = -half_width; k <= half_width; ++k) {
    taps(k + half_width) = radial_value(static_cast<double>(k < 0 ? -k : k), model);
  }
  const double sum = taps.sum();
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw Error("degenerate PSF: all taps vanish (model support far narrower than one pixel)");
  }
  return taps / sum;
}

Kernel2D discretize_2d(const PsfModel& model, Index half_width) {
  validate(model);
  if (half_width < 1) throw Error("half_width must be >= 1");
  const Index n = 2 * half_width + 1;
  // Evaluate each radius once so that the 8 symmetric positions share a value.
  Kernel2D taps(n, n);
  for (Index i = 0; i <= half_width; ++i) {
    for (Index j = 0; j <= i; ++j) {
      const double v = radial_value(std::sqrt(static_cast<double>(i * i + j * j)), model);
      for (const Index si : {-i, i}) {
        for (const Index sj : {-j, j}) {
          taps(half_width + si, half_width + sj) = v;
          taps(half_width + sj, half_width + si) = v;
        }
      }
    }
  }
  const double sum = taps.sum();
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw Error("degenerate PSF: all taps vanish (model support far narrower than one pixel)");
  }
  return taps / sum;
}

Kernel1D line_spread_1d(const PsfModel& model, Index half_width) {
  const Kernel2D taps = discretize_2d(model, half_width);
  Kernel1D lsf = taps.colwise().sum().transpose();
  return lsf / lsf.sum();
}

FitProfile parse_fit_profile(const std::string& text) {
  if (text == "slice") return FitProfile::slice;
  if (text == "line-spread" || text == "line_spread") return FitProfile::line_spread;
  throw Error("unknown fit_profile '" + text + "' (expected slice or line-spread)");
}

std::string to_string(FitProfile profile) { return profile == FitProfile::slice ? "slice" : "line-spread"; }

namespace {

Kernel1D model_curve(const PsfModel& model, Index half_width, FitProfile profile) {
  return profile == FitProfile::slice ? discretize_1d(model, half_width) : line_spread_1d(model, half_width);
}

}  // namespace

FitResult fit_airy(const Kernel1D& h, double lambda_wave, double na, FitBracket bracket, FitProfile profile) {
  require_fit_input(h);
  if (!(lambda_wave > 0.0) || !(na > 0.0)) throw Error("fit", "lambda_wave and na must be > 0");
  const Index d = half_width_of(h);
  auto make = [=](double tau) -> PsfModel { return AiryParams{lambda_wave, na, tau}; };
  auto objective = [&](double tau) { return (model_curve(make(tau), d, profile) - h).square().sum(); };
  return minimize_scalar(objective, bracket, make);
}

FitResult fit_gaussian(const Kernel1D& h, FitBracket bracket, FitProfile profile) {
  require_fit_input(h);
  const Index d = half_width_of(h);
  auto make = [](double sigma) -> PsfModel { return GaussianParams{sigma}; };
  auto objective = [&](double sigma) { return (model_curve(make(sigma), d, profile) - h).square().sum(); };
  return minimize_scalar(objective, bracket, make);
}

}  // namespace sempsf
