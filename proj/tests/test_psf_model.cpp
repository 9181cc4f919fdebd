#include "helpers.hpp"
#include "sempsf/psf_model.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace sempsf;

namespace {

// 40-term power series, evaluated in long double.
double j1_series(double x) {
  long double sum = 0.0L, term = x / 2.0L;
  const long double q = static_cast<long double>(x) * x / 4.0L;
  for (int m = 0; m < 40; ++m) {
    sum += term;
    term *= -q / ((m + 1.0L) * (m + 2.0L));
  }
  return static_cast<double>(sum);
}

double first_root_by_bisection() {
  double a = 3.0, b = 4.5;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (a + b);
    (j1_series(a) * j1_series(m) <= 0.0 ? b : a) = m;
  }
  return 0.5 * (a + b);
}

double airy_oracle(double r, const AiryParams& p) {
  const double u = 2.0 * std::numbers::pi / p.lambda_wave * p.na * p.tau * r;
  if (u == 0.0) return 1.0;
  const double v = 2.0 * j1_series(u) / u;
  return v * v;
}

}  // namespace

TEST_CASE("bessel_j1 matches the series oracle") {
  CHECK(bessel_j1(0.0) == 0.0);
  CHECK(std::abs(bessel_j1(1.0) - 0.4400505857449335) < 1e-9);
  CHECK(std::abs(bessel_j1(3.8317059702)) < 1e-8);
  CHECK(std::abs(bessel_j1(first_root_by_bisection())) < 1e-8);
  CHECK(std::abs(first_root_by_bisection() - kBesselJ1FirstZero) < 1e-12);
  for (double x = -10.0; x <= 10.0; x += 0.37) CHECK(std::abs(bessel_j1(x) - j1_series(x)) < 1e-12);
  CHECK(bessel_j1(-2.5) == -bessel_j1(2.5));
}

TEST_CASE("bessel_j1 agrees with the standard library beyond the series range") {
  for (double x = 0.1; x < 60.0; x += 0.731) {
    CHECK(std::abs(bessel_j1(x) - std::cyl_bessel_j(1.0, x)) < 1e-10);
  }
}

TEST_CASE("airy_radial") {
  const AiryParams p{0.7, 0.9, 1.3};
  CHECK(airy_radial(0.0, p) == 1.0);
  CHECK(airy_radial(airy_first_zero_radius(p), p) < 1e-16);
  CHECK(airy_radial(kBesselJ1FirstZero / (2.0 * std::numbers::pi / p.lambda_wave * p.na * p.tau), p) < 1e-8);
  for (double r : {0.3, 1.0, 2.7, 6.1}) {
    CHECK(airy_radial(r, AiryParams{1.0, 1.0, 2.0}) == doctest::Approx(airy_radial(2.0 * r, AiryParams{1.0, 1.0, 1.0})));
  }
  // the series oracle is exact to ~1e-15 only for u <= 12
  for (double r : {0.05, 0.3, 0.6, 0.9}) CHECK(std::abs(airy_radial(r, p) - airy_oracle(r, p)) < 1e-12);
  CHECK(airy_first_zero_radius(airy_with_first_zero(4.0)) == doctest::Approx(4.0));
}

TEST_CASE("gaussian_radial") {
  const GaussianParams g{1.7};
  CHECK(gaussian_radial(0.0, g) == 1.0);
  CHECK(gaussian_radial(1.7, g) == doctest::Approx(std::exp(-0.5)));
  CHECK(gaussian_radial(1e3, g) == 0.0);
  CHECK(gaussian_radial(0.5f, g) == doctest::Approx(std::exp(-0.125 / (1.7 * 1.7))));
}

TEST_CASE("discretize_1d") {
  SUBCASE("unit sum and symmetry") {
    for (const PsfModel& m : {PsfModel{GaussianParams{2.0}}, PsfModel{AiryParams{1.0, 0.8, 1.1}}}) {
      const Kernel1D k = discretize_1d(m, 25);
      CHECK(k.size() == 51);
      CHECK(std::abs(k.sum() - 1.0) < 1e-9);
      CHECK((k - k.reverse()).abs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("narrow Gaussian approaches a delta") {
    const Kernel1D k = discretize_1d(GaussianParams{0.05}, 5);
    CHECK(k(5) == doctest::Approx(1.0));
    CHECK(k.sum() - k(5) < 1e-100);
  }
  SUBCASE("Airy tap ratios follow the radial profile") {
    const AiryParams p = airy_with_first_zero(3.5);
    const Index d = 10;
    const Kernel1D k = discretize_1d(p, d);
    for (Index j = 1; j <= 3; ++j) {
      CHECK(k(d) / k(d + j) == doctest::Approx(airy_oracle(0.0, p) / airy_oracle(double(j), p)).epsilon(1e-10));
    }
  }
  CHECK_THROWS_AS(discretize_1d(GaussianParams{-1.0}, 3), Error);
  CHECK_THROWS_AS(discretize_1d(GaussianParams{1.0}, 0), Error);
}

TEST_CASE("discretize_2d symmetry") {
  for (const PsfModel& m : {PsfModel{GaussianParams{1.5}}, PsfModel{AiryParams{1.0, 1.0, 0.9}}}) {
    const Index d = 7;
    const Kernel2D k = discretize_2d(m, d);
    CHECK(std::abs(k.sum() - 1.0) < 1e-9);
    CHECK(k(d, d) == k.maxCoeff());
    for (Index i = -d; i <= d; ++i) {
      for (Index j = -d; j <= d; ++j) {
        CHECK(std::abs(k(d + i, d + j) - k(d + j, d + i)) <= 1e-12);
        CHECK(std::abs(k(d + i, d + j) - k(d - i, d + j)) <= 1e-12);
        CHECK(std::abs(k(d + i, d + j) - k(d + i, d - j)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("line_spread_1d") {
  // Separable model: the column sums reproduce the 1D Gaussian.
  const Kernel1D a = line_spread_1d(GaussianParams{2.0}, 12);
  const Kernel1D b = discretize_1d(GaussianParams{2.0}, 12);
  CHECK((a - b).abs().maxCoeff() < 1e-14);
  // The Airy line-spread function is wider than its central slice.
  const AiryParams p = airy_with_first_zero(4.0);
  CHECK(line_spread_1d(p, 30)(30) < discretize_1d(p, 30)(30));
}

TEST_CASE("fits recover generating parameters") {
  const FitResult g = fit_gaussian(discretize_1d(GaussianParams{2.0}, 25));
  CHECK(std::abs(std::get<GaussianParams>(g.params).sigma_psf - 2.0) <= 1e-4);
  CHECK(g.residual <= 1e-10);

  const AiryParams p{5.0, 0.8, 1.5};
  const FitResult a = fit_airy(discretize_1d(p, 25), p.lambda_wave, p.na);
  CHECK(std::abs(std::get<AiryParams>(a.params).tau - 1.5) <= 1e-3);

  const AiryParams q{5.0, 0.8, 1.3};
  const FitResult l = fit_airy(line_spread_1d(q, 30), q.lambda_wave, q.na, {}, FitProfile::line_spread);
  CHECK(std::abs(std::get<AiryParams>(l.params).tau - 1.3) <= 1e-3);
}

namespace {

double grid_best_gaussian_residual(const Kernel1D& h) {
  const Index d = half_width_of(h);
  double best = 1e300;
  for (int i = 0; i <= 9900; ++i) {
    best = std::min(best, (discretize_1d(GaussianParams{0.1 + 1e-3 * i}, d) - h).square().sum());
  }
  return best;
}

}  // namespace

TEST_CASE("Gaussian approximates the Airy disk closely") {
  const Kernel1D h = discretize_1d(AiryParams{1.0, 1.0, 1.0}, 25);
  const FitResult g = fit_gaussian(h);
  CHECK(g.residual > 0.0);
  CHECK(g.residual <= grid_best_gaussian_residual(h) * (1.0 + 1e-9));
  CHECK(g.residual <= 1e-3 * h.square().sum());

  // Well sampled (first zero at 4 px) the relative misfit is about 1.25e-3.
  const Kernel1D w = discretize_1d(airy_with_first_zero(4.0), 25);
  const FitResult gw = fit_gaussian(w);
  CHECK(gw.residual <= grid_best_gaussian_residual(w) * (1.0 + 1e-9));
  CHECK(gw.residual <= 2e-3 * w.square().sum());
}

TEST_CASE("fit errors") {
  Kernel1D delta = Kernel1D::Zero(11);
  delta(5) = 1.0;
  CHECK_THROWS_WITH_AS(fit_gaussian(delta), doctest::Contains("bracket exhausted"), Error);
  CHECK_THROWS_AS(fit_gaussian(Kernel1D::Ones(4) / 4.0), Error);
  CHECK_THROWS_AS(fit_airy(discretize_1d(GaussianParams{2.0}, 5), -1.0, 1.0), Error);
}
