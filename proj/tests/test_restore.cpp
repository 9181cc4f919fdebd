#include "helpers.hpp"
#include "sempsf/convolution.hpp"
#include "sempsf/restore.hpp"

#include <doctest.h>

#include <cmath>

using namespace sempsf;

namespace {

Index reflect(Index i, Index n) {
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

// Row-major patch of radius p around (r, c) with mirrored borders.
Eigen::VectorXd patch(const Image2D& g, Index r, Index c, Index p) {
  Eigen::VectorXd v((2 * p + 1) * (2 * p + 1));
  Index k = 0;
  for (Index u = -p; u <= p; ++u)
    for (Index t = -p; t <= p; ++t) v(k++) = g(reflect(r + u, g.rows()), reflect(c + t, g.cols()));
  return v;
}

double weight_oracle(const Image2D& g, Index r1, Index c1, Index r2, Index c2, const NlmConfig& cfg,
                     const NoiseParams& noise) {
  const Index p = cfg.patch_radius, span = 2 * p + 1;
  const Eigen::VectorXd a = patch(g, r1, c1, p), b = patch(g, r2, c2, p);
  double d;
  if (cfg.weight_mode == WeightMode::classic) {
    d = (a - b).squaredNorm() / double(a.size());
  } else {
    d = whitening_distance(a, b, noise, 0.5 * (a.mean() + b.mean()), span) / double(a.size());
  }
  return std::exp(-d / (cfg.h_filter * cfg.h_filter));
}

// sum over ordered pairs i != j of w_ij (x_i - x_j)^2, straight from weight(i, j).
double regularizer_oracle(const Image2D& x, const WeightField& w) {
  const Index n = x.size();
  double total = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j) {
        const double d = x.data()[i] - x.data()[j];
        total += w.weight(i, j) * d * d;
      }
  return total;
}

WeightField random_weights(Index rows, Index cols, Index radius, Rng& rng) {
  WeightField w(rows, cols, radius);
  for (Index i = 0; i < w.pixels(); ++i)
    for (std::size_t k = 0; k < w.offsets().size(); ++k) {
      const auto [dy, dx] = w.offsets()[k];
      const Index r = i / cols, c = i % cols;
      if (r + dy < rows && c + dx >= 0 && c + dx < cols) w.pair(i, k) = rng.uniform();
    }
  w.set_self_to_window_max();
  return w;
}

Kernel2D delta_kernel() {
  Kernel2D k = Kernel2D::Zero(3, 3);
  k(1, 1) = 1.0;
  return k;
}

}  // namespace

TEST_CASE("weights match a per-pair oracle") {
  Rng rng(21);
  const Image2D g = testing::random_image(12, 11, rng, 0.0, 100.0);
  NoiseParams noise;
  noise.sigma2 = 20.0;
  noise.alpha = 0.3;
  noise.corr = Kernel1D(3);
  noise.corr << 0.3, 1.0, 0.3;
  for (WeightMode mode : {WeightMode::classic, WeightMode::noise_aware}) {
    NlmConfig cfg;
    cfg.patch_radius = 2;
    cfg.search_radius = 3;
    cfg.h_filter = mode == WeightMode::classic ? 40.0 : 2.0;
    cfg.weight_mode = mode;
    const WeightField w = compute_weights(g, cfg, noise);
    for (Index r = 0; r < g.rows(); ++r)
      for (Index c = 0; c < g.cols(); ++c)
        for (Index dy = -4; dy <= 4; ++dy)
          for (Index dx = -4; dx <= 4; ++dx) {
            const Index r2 = r + dy, c2 = c + dx;
            if (r2 < 0 || c2 < 0 || r2 >= g.rows() || c2 >= g.cols() || (dy == 0 && dx == 0)) continue;
            const double got = w.weight(r * g.cols() + c, r2 * g.cols() + c2);
            const double expected =
                std::abs(dy) <= 3 && std::abs(dx) <= 3 ? weight_oracle(g, r, c, r2, c2, cfg, noise) : 0.0;
            CHECK(std::abs(got - expected) < 1e-12);
          }
  }
}

TEST_CASE("weight examples") {
  NoiseParams noise;
  noise.sigma2 = 1.0;
  NlmConfig cfg;
  cfg.patch_radius = 1;
  cfg.search_radius = 3;

  SUBCASE("constant guide gives unit weights") {
    const WeightField w = compute_weights(Image2D::Constant(10, 10, 7.0), cfg, noise);
    for (Index i = 0; i < w.pixels(); ++i) {
      CHECK(w.self(i) == 1.0);
      for (const auto& [j, v] : w.neighbors(i)) CHECK(v == 1.0);
    }
  }
  SUBCASE("identical distant patches get weight 1") {
    Rng rng(3);
    Image2D g = testing::random_image(12, 12, rng, 0.0, 50.0);
    g.block(6, 7, 3, 3) = g.block(2, 2, 3, 3);  // patch centers (3,3) and (7,8), no overlap
    const WeightField w = compute_weights(g, cfg, noise);
    CHECK(w.weight(3 * 12 + 3, 7 * 12 + 8) == 0.0);  // outside the search window
    cfg.search_radius = 5;
    const WeightField wide = compute_weights(g, cfg, noise);
    CHECK(wide.weight(3 * 12 + 3, 7 * 12 + 8) == 1.0);
    CHECK(wide.weight(7 * 12 + 8, 3 * 12 + 3) == 1.0);
  }
  SUBCASE("doubling h never decreases a weight") {
    Rng rng(4);
    const Image2D g = testing::random_image(10, 10, rng, 0.0, 10.0);
    const WeightField a = compute_weights(g, cfg, noise);
    cfg.h_filter *= 2.0;
    const WeightField b = compute_weights(g, cfg, noise);
    for (Index i = 0; i < a.pixels(); ++i)
      for (std::size_t k = 0; k < a.offsets().size(); ++k) CHECK(b.pair(i, k) >= a.pair(i, k));
  }
  SUBCASE("weights are symmetric and bounded") {
    Rng rng(5);
    const WeightField w = compute_weights(testing::random_image(9, 9, rng, 0.0, 10.0), cfg, noise);
    for (Index i = 0; i < w.pixels(); ++i)
      for (Index j = 0; j < w.pixels(); ++j) {
        CHECK(w.weight(i, j) == w.weight(j, i));
        CHECK(w.weight(i, j) >= 0.0);
        CHECK(w.weight(i, j) <= 1.0);
      }
  }
  SUBCASE("invalid configuration") {
    cfg.search_radius = 0;
    CHECK_THROWS_AS(compute_weights(Image2D::Zero(4, 4), cfg, noise), Error);
    cfg.search_radius = 3;
    cfg.h_filter = 0.0;
    CHECK_THROWS_AS(compute_weights(Image2D::Zero(4, 4), cfg, noise), Error);
  }
}

TEST_CASE("WeightField bookkeeping") {
  Rng rng(6);
  const WeightField w = random_weights(7, 9, 2, rng);
  const Eigen::ArrayXd deg = w.degree();
  for (Index i = 0; i < w.pixels(); ++i) {
    double sum = 0.0, best = 0.0;
    for (const auto& [j, v] : w.neighbors(i)) {
      CHECK(v == w.weight(i, j));
      sum += v;
      best = std::max(best, v);
    }
    CHECK(deg(i) == doctest::Approx(sum).epsilon(1e-14));
    CHECK(w.self(i) == best);
    // every nonzero weight in the window is listed
    Index nonzero = 0;
    for (Index j = 0; j < w.pixels(); ++j) nonzero += j != i && w.weight(i, j) > 0.0;
    CHECK(nonzero == Index(w.neighbors(i).size()));
  }
  const WeightField s = WeightField::self_only(3, 3);
  CHECK(s.offsets().empty());
  CHECK(s.weight(4, 4) == 1.0);
  CHECK(s.weight(4, 5) == 0.0);
}

TEST_CASE("nlms_filter") {
  NoiseParams noise;
  noise.sigma2 = 25.0;
  NlmConfig cfg;
  cfg.patch_radius = 1;
  cfg.search_radius = 4;

  const Image2D c = Image2D::Constant(8, 8, 3.0);
  CHECK((nlms_filter(c, compute_weights(c, cfg, noise)) == c).all());

  Rng rng(7);
  const Image2D y = testing::random_image(6, 5, rng);
  CHECK((nlms_filter(y, WeightField::self_only(6, 5)) == y).all());

  // weighted mean oracle
  const WeightField w = random_weights(6, 5, 2, rng);
  const Image2D out = nlms_filter(y, w);
  for (Index i = 0; i < y.size(); ++i) {
    double num = 0.0, den = 0.0;
    for (Index j = 0; j < y.size(); ++j) {
      num += w.weight(i, j) * y.data()[j];
      den += w.weight(i, j);
    }
    CHECK(out.data()[i] == doctest::Approx(num / den).epsilon(1e-12));
  }

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Image2D noisy = synthesize_noise(Image2D::Constant(16, 16, 100.0), noise, Rng(seed));
    const Image2D filtered = nlms_filter(noisy, compute_weights(noisy, cfg, noise));
    const auto var = [](const Image2D& a) { return (a - a.mean()).square().mean(); };
    CHECK(var(filtered) < var(noisy));
  }
}

TEST_CASE("energy matches direct summation") {
  Rng rng(8);
  for (int t = 0; t < 5; ++t) {
    const Image2D x = testing::random_image(4, 4, rng, -3.0, 3.0);
    const Image2D y = testing::random_image(4, 4, rng, -3.0, 3.0);
    const Kernel2D k = testing::random_kernel(1, rng);
    const WeightField w = random_weights(4, 4, 2, rng);
    const double lambda = 0.37;
    const double expected = (y - testing::convolve_oracle(x, k)).square().sum() + lambda * regularizer_oracle(x, w);
    CHECK(std::abs(energy(x, y, k, w, lambda) - expected) <= 1e-12 * expected);
    CHECK(std::abs(regularizer(x, w) - regularizer_oracle(x, w)) <= 1e-12 * regularizer_oracle(x, w));
  }
  // Hx = y and lambda = 0
  const Image2D x = testing::random_image(5, 5, rng);
  const Kernel2D k = testing::random_kernel(1, rng);
  CHECK(energy(x, convolve_circular(x, k), k, WeightField::self_only(5, 5), 0.0) == 0.0);
  // constant x has no regularizer term
  CHECK(regularizer(Image2D::Constant(5, 5, 2.0), random_weights(5, 5, 2, rng)) == 0.0);
}

TEST_CASE("energy gradient") {
  Rng rng(9);
  SUBCASE("central finite differences") {
    for (int t = 0; t < 5; ++t) {
      const Image2D x = testing::random_image(8, 8, rng, 0.0, 10.0);
      const Image2D y = testing::random_image(8, 8, rng, 0.0, 10.0);
      const Kernel2D k = testing::random_kernel(1, rng);
      const WeightField w = random_weights(8, 8, 2, rng);
      const double lambda = 0.5;
      const Image2D g = energy_gradient(x, y, k, w, lambda);
      Image2D fd(8, 8);
      for (Index i = 0; i < x.size(); ++i) {
        Image2D xp = x, xm = x;
        xp.data()[i] += 1e-5;
        xm.data()[i] -= 1e-5;
        fd.data()[i] = (energy(xp, y, k, w, lambda) - energy(xm, y, k, w, lambda)) / 2e-5;
      }
      CHECK(std::sqrt((g - fd).square().sum() / fd.square().sum()) <= 1e-5);
    }
  }
  SUBCASE("zero at the minimizer") {
    const Image2D y = testing::random_image(6, 6, rng);
    CHECK((energy_gradient(y, y, delta_kernel(), WeightField::self_only(6, 6), 0.0) == 0.0).all());
  }
  SUBCASE("constant x with the data term removed") {
    const Image2D x = Image2D::Constant(6, 6, 4.0);
    const WeightField w = random_weights(6, 6, 2, rng);
    const Image2D g = energy_gradient(x, x, delta_kernel(), w, 1.0);
    CHECK(g.abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("deconvolve_map") {
  Rng rng(10);
  NoiseParams noise;
  noise.sigma2 = 1.0;
  NlmConfig cfg;
  cfg.patch_radius = 1;
  cfg.search_radius = 2;

  SUBCASE("lambda 0 with a delta PSF returns y after one step") {
    const Image2D y = testing::random_image(16, 16, rng, 0.0, 100.0);
    SolverOptions opts;
    opts.lambda_reg = 0.0;
    const DeconvolutionResult r = deconvolve_map(y, delta_kernel(), cfg, noise, opts);
    REQUIRE(r.log.size() >= 2);
    CHECK(r.log[1].energy <= 1e-20);
    CHECK((r.x - y).abs().maxCoeff() <= 1e-12);
    CHECK(r.converged);

    opts.init_mode = InitMode::observed;
    const DeconvolutionResult o = deconvolve_map(y, delta_kernel(), cfg, noise, opts);
    CHECK((o.x == y).all());
    CHECK(o.log.back().energy == 0.0);
  }
  SUBCASE("noiseless well-conditioned blur is inverted") {
    const Image2D truth = testing::random_image(32, 32, rng, 0.0, 100.0);
    Kernel2D k = Kernel2D::Zero(3, 3);
    k(1, 1) = 0.6;
    k(0, 1) = k(2, 1) = k(1, 0) = k(1, 2) = 0.1;
    SolverOptions opts;
    opts.lambda_reg = 0.0;
    opts.max_iters = 2000;
    opts.tol_rel = 1e-14;
    opts.init_mode = InitMode::observed;
    const DeconvolutionResult r = deconvolve_map(convolve_circular(truth, k), k, cfg, noise, opts);
    CHECK((r.x - truth).abs().maxCoeff() <= 1e-3 * (truth.maxCoeff() - truth.minCoeff()));
  }
  SUBCASE("energy log never increases") {
    const Image2D truth = testing::random_image(24, 24, rng, 0.0, 100.0);
    const Kernel2D k = testing::random_kernel(2, rng);
    const Image2D y = synthesize_noise(convolve_circular(truth, k), noise, Rng(3));
    for (StepPolicy policy : {StepPolicy::lipschitz, StepPolicy::adaptive}) {
      SolverOptions opts;
      opts.lambda_reg = 0.05;
      opts.max_iters = 120;
      opts.step_policy = policy;
      const DeconvolutionResult r = deconvolve_map(y, k, cfg, noise, opts);
      REQUIRE(r.log.size() > 1);
      for (std::size_t i = 1; i < r.log.size(); ++i) {
        CHECK(r.log[i].energy <= r.log[i - 1].energy * (1.0 + 1e-12));
        CHECK(r.log[i].step > 0.0);
      }
      const WeightField w = compute_weights(r.x0, cfg, noise);
      CHECK(r.log.back().energy == doctest::Approx(energy(r.x, y, k, w, opts.lambda_reg)).epsilon(1e-9));
      CHECK(r.log.front().energy == doctest::Approx(energy(r.x0, y, k, w, opts.lambda_reg)).epsilon(1e-12));
    }
  }
  SUBCASE("errors") {
    SolverOptions opts;
    const Image2D y = Image2D::Zero(8, 8);
    CHECK_THROWS_WITH_AS(deconvolve_map(y, 2.0 * delta_kernel(), cfg, noise, opts), doctest::Contains("unit sum"),
                         Error);
    opts.lambda_reg = -1.0;
    CHECK_THROWS_AS(deconvolve_map(y, delta_kernel(), cfg, noise, opts), Error);
    opts.lambda_reg = 0.0;
    Image2D bad = y;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(deconvolve_map(bad, delta_kernel(), cfg, noise, opts), Error);
  }
}

TEST_CASE("enum parsing") {
  CHECK(parse_weight_mode("classic") == WeightMode::classic);
  CHECK(parse_weight_mode("noise-aware") == WeightMode::noise_aware);
  CHECK(parse_step_policy(to_string(StepPolicy::adaptive)) == StepPolicy::adaptive);
  CHECK(parse_init_mode(to_string(InitMode::observed)) == InitMode::observed);
  CHECK_THROWS_AS(parse_weight_mode("fancy"), Error);
}
