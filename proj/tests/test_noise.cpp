#include "helpers.hpp"
#include "sempsf/noise.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

using namespace sempsf;

namespace {

double sample_variance(const Image2D& a) {
  return (a - a.mean()).square().sum() / double(a.size() - 1);
}

// ||F * d||^2 by naive DFTs: gain from the wrapped unit-energy taps, then the
// filtered row's energy via Parseval.
double filtered_row_energy(const Kernel1D& corr, const std::vector<double>& d) {
  const std::size_t L = d.size();
  const Kernel1D c = corr / std::sqrt(corr.square().sum());
  const long center = (c.size() - 1) / 2;
  std::vector<double> wrapped(L, 0.0);
  for (long k = 0; k < c.size(); ++k) wrapped[((k - center) % long(L) + long(L)) % long(L)] += c(k);
  auto dft = [&](const std::vector<double>& v, std::size_t f) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < L; ++t) acc += v[t] * std::exp(std::complex<double>(0, -2.0 * std::numbers::pi * f * t / L));
    return acc;
  };
  const double dc = std::abs(dft(wrapped, 0));
  double energy = 0.0;
  for (std::size_t f = 0; f < L; ++f) {
    const double gain = (1.0 + 1e-3) / (std::abs(dft(wrapped, f)) + 1e-3 * dc);
    energy += std::norm(gain * dft(d, f));
  }
  return energy / double(L);
}

}  // namespace

TEST_CASE("noise_stddev") {
  NoiseParams p;
  p.sigma2 = 4.0;
  p.alpha = 0.5;
  Image2D x(1, 3);
  x << 0.0, 10.0, 24.0;
  const Image2D sd = noise_stddev(x, p);
  CHECK(sd(0, 0) == doctest::Approx(2.0));
  CHECK(sd(0, 1) == doctest::Approx(3.0));
  CHECK(sd(0, 2) == doctest::Approx(4.0));

  x(0, 0) = -20.0;
  CHECK_THROWS_AS(noise_stddev(x, p), Error);
}

TEST_CASE("parameter validation") {
  NoiseParams p;
  p.sigma2 = -1.0;
  CHECK_THROWS_AS(validate(p), Error);
  p = {};
  p.corr = Kernel1D::Zero(3);
  CHECK_THROWS_WITH_AS(validate(p), doctest::Contains("degenerate"), Error);
  p = {};
  p.poisson_fraction = 1.5;
  CHECK_THROWS_AS(validate(p), Error);
}

TEST_CASE("zero noise leaves the image untouched") {
  Rng rng(3);
  const Image2D x = testing::random_image(16, 16, rng, 0.0, 100.0);
  NoiseParams p;
  CHECK((synthesize_noise(x, p, Rng(1)) == x).all());
}

TEST_CASE("unit noise field statistics") {
  NoiseParams p;
  p.sigma2 = 1.0;
  const Image2D n = synthesize_noise(Image2D::Zero(256, 256), p, Rng(42));
  CHECK(std::abs(n.mean()) < 0.02);
  const double v = sample_variance(n);
  CHECK(v > 0.98);
  CHECK(v < 1.02);
}

TEST_CASE("signal-dependent variance") {
  NoiseParams p;
  p.sigma2 = 25.0;
  p.alpha = 0.1;
  const Image2D x = Image2D::Constant(256, 256, 100.0);
  const double v = sample_variance(synthesize_noise(x, p, Rng(7)) - x);
  CHECK(v == doctest::Approx(35.0).epsilon(0.05));
}

TEST_CASE("scan-line correlation") {
  NoiseParams p;
  p.sigma2 = 1.0;
  p.corr = Kernel1D(2);
  p.corr << 0.5, 0.5;
  const Image2D n = synthesize_noise(Image2D::Zero(256, 256), p, Rng(9));
  const double var = n.square().mean();
  const double horiz = (n.leftCols(255) * n.rightCols(255)).mean() / var;
  const double vert = (n.topRows(255) * n.bottomRows(255)).mean() / var;
  CHECK(horiz > 0.4);
  CHECK(horiz < 0.6);
  CHECK(std::abs(vert) < 0.05);
}

TEST_CASE("noise is reproducible and row-seeded") {
  NoiseParams p;
  p.sigma2 = 2.0;
  p.corr = Kernel1D::Ones(3);
  const Image2D a = synthesize_noise(Image2D::Zero(20, 30), p, Rng(5));
  const Image2D b = synthesize_noise(Image2D::Zero(20, 30), p, Rng(5));
  const Image2D c = synthesize_noise(Image2D::Zero(20, 30), p, Rng(6));
  CHECK((a == b).all());
  CHECK((a != c).any());
}

TEST_CASE("delta corr gives an identity whitener") {
  const ScanLineWhitener w(Kernel1D::Constant(1, 3.0), 7);
  for (double g : w.gain()) CHECK(g == 1.0);
  CHECK(w.lag_coefficients()[0] == 1.0);
  for (std::size_t k = 1; k < w.lag_coefficients().size(); ++k) CHECK(w.lag_coefficients()[k] == 0.0);
  const double d[7] = {1, -2, 3, 0, 0.5, 1, 2};
  CHECK(w.row_energy(d) == doctest::Approx(1 + 4 + 9 + 0.25 + 1 + 4));
}

TEST_CASE("row_energy equals explicit circular filtering") {
  Rng rng(13);
  for (int t = 0; t < 20; ++t) {
    const Index L = 1 + rng.uniform_int(0, 9);
    Kernel1D corr(2 * rng.uniform_int(0, 3) + 1);
    for (Index i = 0; i < corr.size(); ++i) corr(i) = rng.uniform(0.1, 1.0);
    std::vector<double> d(static_cast<std::size_t>(L));
    for (auto& v : d) v = rng.uniform(-2.0, 2.0);
    const ScanLineWhitener w(corr, L);
    CHECK(w.row_energy(d.data()) == doctest::Approx(filtered_row_energy(corr, d)).epsilon(1e-9));
  }
}

TEST_CASE("whitening_distance") {
  NoiseParams p;
  p.sigma2 = 2.0;
  Eigen::VectorXd a(4), b(4);
  a << 1, 2, 3, 4;
  b << 1, 2, 3, 4;
  CHECK(whitening_distance(a, b, p, 10.0) == 0.0);
  b << 0, 2, 5, 4;
  CHECK(whitening_distance(a, b, p, 10.0) == doctest::Approx(5.0 / 2.0));
  p.sigma2 = 4.0;
  CHECK(whitening_distance(a, b, p, 10.0) == doctest::Approx(5.0 / 4.0));
  p.alpha = 0.5;
  CHECK(whitening_distance(a, b, p, 8.0) == doctest::Approx(5.0 / 8.0));
  // negative means are treated as zero
  CHECK(whitening_distance(a, b, p, -8.0) == doctest::Approx(5.0 / 4.0));
  // symmetric
  CHECK(whitening_distance(b, a, p, 8.0) == whitening_distance(a, b, p, 8.0));

  p.corr = Kernel1D(3);
  p.corr << 0.2, 1.0, 0.2;
  Eigen::VectorXd x(6), y(6);
  x << 1, 0, -1, 2, 2, 0;
  y << 0, 0, 0, 1, 0, 1;
  const Eigen::VectorXd d = x - y;
  const double expected = (filtered_row_energy(p.corr, {d(0), d(1), d(2)}) +
                           filtered_row_energy(p.corr, {d(3), d(4), d(5)})) /
                          noise_variance(p, 3.0);
  CHECK(whitening_distance(x, y, p, 3.0, 3) == doctest::Approx(expected).epsilon(1e-10));
  CHECK_THROWS_AS(whitening_distance(x, y, p, 3.0, 4), Error);

  NoiseParams zero;
  CHECK_THROWS_AS(whitening_distance(a, b, zero, 1.0), Error);
}
