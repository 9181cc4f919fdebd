#include "sempsf/noise.hpp"

#include "sempsf/parallel.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace sempsf {

void validate(const NoiseParams& p) {
  if (!(p.sigma2 >= 0.0) || !std::isfinite(p.sigma2)) throw Error("noise sigma2 must be finite and >= 0");
  if (!(p.alpha >= 0.0) || !std::isfinite(p.alpha)) throw Error("noise alpha must be finite and >= 0");
  if (p.corr.size() < 1 || !all_finite(p.corr)) throw Error("noise corr taps must be finite and non-empty");
  if (!(p.corr.abs().sum() > 0.0)) throw Error("degenerate noise corr kernel (all zero)");
  if (!(p.poisson_fraction >= 0.0 && p.poisson_fraction <= 1.0)) throw Error("poisson_fraction must lie in [0, 1]");
  if (p.poisson_fraction > 0.0 && !(p.poisson_mean > 0.0)) throw Error("poisson_mean must be > 0");
}

Kernel1D unit_energy(const Kernel1D& corr) {
  const double norm = std::sqrt(corr.square().sum());
  if (!(norm > 0.0)) throw Error("degenerate noise corr kernel (all zero)");
  return corr / norm;
}

Image2D noise_stddev(const Image2D& x, const NoiseParams& p) {
  const Image2D var = p.sigma2 + p.alpha * x;
  if ((var < 0.0).any()) {
    throw Error("sigma2 + alpha * x is negative at some pixel (invalid parameter/image combination)");
  }
  return var.sqrt();
}

Image2D correlated_unit_noise(Index rows, Index cols, const NoiseParams& p, const Rng& rng) {
  validate(p);
  const Kernel1D c = unit_energy(p.corr);
  const double gauss_scale = std::sqrt(1.0 - p.poisson_fraction);
  const double poisson_scale = std::sqrt(p.poisson_fraction);
  const Index center = (c.size() - 1) / 2;
  Image2D out(rows, cols);
  parallel_for(0, rows, [&](std::ptrdiff_t r) {
    Rng row_rng = rng.split(static_cast<std::uint64_t>(r));
    std::vector<double> n(static_cast<std::size_t>(cols));
    for (auto& v : n) {
      double sample = gauss_scale * row_rng.normal();
      if (poisson_scale > 0.0) {
        const double k = static_cast<double>(row_rng.poisson(p.poisson_mean));
        sample += poisson_scale * (k - p.poisson_mean) / std::sqrt(p.poisson_mean);
      }
      v = sample;
    }
    for (Index col = 0; col < cols; ++col) {
      double acc = 0.0;
      for (Index k = 0; k < c.size(); ++k) {
        acc += c(k) * n[static_cast<std::size_t>(((col - (k - center)) % cols + cols) % cols)];
      }
      out(r, col) = acc;
    }
  });
  return out;
}

Image2D synthesize_noise(const Image2D& clean_blurred, const NoiseParams& p, const Rng& rng) {
  require_finite_image(clean_blurred, "synthesize_noise");
  validate(p);
  const Image2D sd = noise_stddev(clean_blurred, p);
  if (p.sigma2 == 0.0 && p.alpha == 0.0) return clean_blurred;
  return clean_blurred + sd * correlated_unit_noise(clean_blurred.rows(), clean_blurred.cols(), p, rng);
}

ScanLineWhitener::ScanLineWhitener(const Kernel1D& corr, Index row_length) : length_(row_length) {
  if (row_length < 1) throw Error("whitening row length must be >= 1");
  const Kernel1D c = unit_energy(corr);
  const Index center = (c.size() - 1) / 2;
  const auto L = static_cast<std::size_t>(row_length);
  std::vector<double> wrapped(L, 0.0);
  for (Index k = 0; k < c.size(); ++k) wrapped[static_cast<std::size_t>(((k - center) % row_length + row_length) % row_length)] += c(k);

  std::vector<double> magnitude(L);
  for (std::size_t f = 0; f < L; ++f) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      acc += wrapped[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(f * t % L) / double(L));
    }
    magnitude[f] = std::abs(acc);
  }
  const double dc = magnitude[0];
  if (!(dc > 0.0)) throw Error("noise corr kernel has zero DC response; cannot normalize whitening");
  gain_.resize(L);
  for (std::size_t f = 0; f < L; ++f) gain_[f] = (1.0 + kRegularization) / (magnitude[f] + kRegularization * dc);

  // m(g) = inverse DFT of gain^2; the lag coefficient is m(0) at g = 0 and
  // 2 m(g) otherwise (the wrap-around pairs fold onto the forward lags).
  coefficients_.assign(L, 0.0);
  for (std::size_t g = 0; g < L; ++g) {
    double m = 0.0;
    for (std::size_t f = 0; f < L; ++f) {
      m += gain_[f] * gain_[f] * std::cos(2.0 * std::numbers::pi * double(f * g % L) / double(L));
    }
    m /= double(L);
    coefficients_[g] = g == 0 ? m : 2.0 * m;
  }
  if (std::abs(coefficients_[0] - 1.0) < 1e-14 && L >= 1) {
    bool delta = true;
    for (std::size_t g = 1; g < L; ++g) delta = delta && std::abs(coefficients_[g]) < 1e-14;
    if (delta) {
      coefficients_.assign(L, 0.0);
      coefficients_[0] = 1.0;
    }
  }
}

double ScanLineWhitener::row_energy(const double* d) const {
  double total = 0.0;
  for (Index g = 0; g < length_; ++g) {
    const double coef = coefficients_[static_cast<std::size_t>(g)];
    if (coef == 0.0) continue;
    double s = 0.0;
    for (Index a = 0; a + g < length_; ++a) s += d[a] * d[a + g];
    total += coef * s;
  }
  return total;
}

double noise_variance(const NoiseParams& p, double local_mean) {
  const double v = p.sigma2 + p.alpha * std::max(local_mean, 0.0);
  if (!(v > 0.0)) throw Error("noise variance sigma2 + alpha * mean must be > 0 for noise-aware distances");
  return v;
}

double whitening_distance(const Eigen::Ref<const Eigen::VectorXd>& patch_a,
                          const Eigen::Ref<const Eigen::VectorXd>& patch_b, const NoiseParams& p,
                          double local_mean, Index row_length) {
  if (patch_a.size() != patch_b.size() || patch_a.size() < 1) {
    throw Error("whitening_distance: patches must have equal length >= 1");
  }
  const Index len = row_length > 0 ? row_length : patch_a.size();
  if (patch_a.size() % len != 0) throw Error("whitening_distance: patch length is not a multiple of the row length");
  const ScanLineWhitener whitener(p.corr, len);
  const Eigen::VectorXd diff = patch_a - patch_b;
  double total = 0.0;
  for (Index start = 0; start < diff.size(); start += len) total += whitener.row_energy(diff.data() + start);
  return std::max(total, 0.0) / noise_variance(p, local_mean);
}

}  // namespace sempsf
