#include "sempsf/restore.hpp"

#include "sempsf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sempsf {

namespace {

Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * n - 2;
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

Image2D reflect_pad(const Image2D& img, Index pad) {
  const Index h = img.rows(), w = img.cols();
  Image2D out(h + 2 * pad, w + 2 * pad);
  for (Index r = 0; r < out.rows(); ++r) {
    const Index sr = reflect_index(r - pad, h);
    for (Index c = 0; c < out.cols(); ++c) out(r, c) = img(sr, reflect_index(c - pad, w));
  }
  return out;
}

// Window sums of `src` over (2p+1) x (2p+1) boxes: out(i, j) = sum_{u<=2p, v<=2p} src(i+u, j+v).
Image2D box_sums(const Image2D& src, Index p) {
  const Index n = 2 * p + 1;
  const Index out_rows = src.rows() - 2 * p, out_cols = src.cols() - 2 * p;
  Image2D horizontal(src.rows(), out_cols);
  for (Index u = 0; u < src.rows(); ++u) {
    for (Index j = 0; j < out_cols; ++j) {
      double acc = 0.0;
      for (Index v = 0; v < n; ++v) acc += src(u, j + v);
      horizontal(u, j) = acc;
    }
  }
  Image2D out(out_rows, out_cols);
  for (Index i = 0; i < out_rows; ++i) {
    for (Index j = 0; j < out_cols; ++j) {
      double acc = 0.0;
      for (Index u = 0; u < n; ++u) acc += horizontal(i + u, j);
      out(i, j) = acc;
    }
  }
  return out;
}

std::vector<Offset> half_window(Index radius) {
  std::vector<Offset> offsets;
  for (Index dy = 0; dy <= radius; ++dy) {
    for (Index dx = -radius; dx <= radius; ++dx) {
      if (dy == 0 && dx <= 0) continue;
      offsets.push_back({dy, dx});
    }
  }
  return offsets;
}

struct Range {
  Index lo;
  Index hi;  // exclusive
};

// Pixels p (along one axis of length n) whose neighbour p + d is inside.
Range valid_range(Index n, Index d) { return {std::max<Index>(0, -d), std::min(n, n - d)}; }

}  // namespace

WeightMode parse_weight_mode(const std::string& text) {
  if (text == "classic") return WeightMode::classic;
  if (text == "noise-aware" || text == "noise_aware") return WeightMode::noise_aware;
  throw Error("unknown weight_mode '" + text + "' (expected classic or noise-aware)");
}

std::string to_string(WeightMode mode) { return mode == WeightMode::classic ? "classic" : "noise-aware"; }

InitMode parse_init_mode(const std::string& text) {
  if (text == "nlms") return InitMode::nlms;
  if (text == "observed") return InitMode::observed;
  throw Error("unknown init_mode '" + text + "' (expected nlms or observed)");
}

StepPolicy parse_step_policy(const std::string& text) {
  if (text == "lipschitz") return StepPolicy::lipschitz;
  if (text == "adaptive") return StepPolicy::adaptive;
  throw Error("unknown step_policy '" + text + "' (expected lipschitz or adaptive)");
}

std::string to_string(InitMode mode) { return mode == InitMode::nlms ? "nlms" : "observed"; }
std::string to_string(StepPolicy policy) { return policy == StepPolicy::lipschitz ? "lipschitz" : "adaptive"; }

void validate(const NlmConfig& cfg) {
  if (cfg.patch_radius < 1) throw Error("patch_radius must be >= 1");
  if (cfg.search_radius < cfg.patch_radius) throw Error("search_radius must be >= patch_radius");
  if (!(cfg.h_filter > 0.0) || !std::isfinite(cfg.h_filter)) throw Error("h_filter must be > 0");
}

void validate(const SolverOptions& opts) {
  if (!(opts.lambda_reg >= 0.0) || !std::isfinite(opts.lambda_reg)) throw Error("lambda_reg must be >= 0");
  if (opts.max_iters < 1) throw Error("max_iters must be >= 1");
  if (!(opts.tol_rel > 0.0)) throw Error("tol_rel must be > 0");
}

// --- WeightField ---------------------------------------------------------------

WeightField::WeightField(Index rows, Index cols, Index search_radius)
    : rows_(rows), cols_(cols), radius_(search_radius), offsets_(half_window(search_radius)) {
  if (rows < 1 || cols < 1) throw Error("weight field needs a non-empty image");
  pairs_ = Eigen::ArrayXXd::Zero(rows * cols, static_cast<Index>(offsets_.size()));
  self_ = Eigen::ArrayXd::Ones(rows * cols);
}

WeightField WeightField::self_only(Index rows, Index cols) { return WeightField(rows, cols, 0); }

double WeightField::weight(Index i, Index j) const {
  if (i == j) return self_(i);
  Index ri = i / cols_, ci = i % cols_, rj = j / cols_, cj = j % cols_;
  if (rj < ri || (rj == ri && cj < ci)) {
    std::swap(ri, rj);
    std::swap(ci, cj);
  }
  const Index dy = rj - ri, dx = cj - ci;
  if (dy > radius_ || dx > radius_ || dx < -radius_) return 0.0;
  // Index of (dy, dx) in half_window order.
  const Index k = dy == 0 ? dx - 1 : radius_ + (dy - 1) * (2 * radius_ + 1) + (dx + radius_);
  return pairs_(ri * cols_ + ci, k);
}

std::vector<std::pair<Index, double>> WeightField::neighbors(Index i) const {
  std::vector<std::pair<Index, double>> out;
  const Index r = i / cols_, c = i % cols_;
  for (std::size_t k = 0; k < offsets_.size(); ++k) {
    const auto [dy, dx] = offsets_[k];
    if (r + dy < rows_ && c + dx >= 0 && c + dx < cols_) {
      const double w = pairs_(i, static_cast<Index>(k));
      if (w > 0.0) out.emplace_back((r + dy) * cols_ + c + dx, w);
    }
    if (r - dy >= 0 && c - dx >= 0 && c - dx < cols_) {
      const Index j = (r - dy) * cols_ + c - dx;
      const double w = pairs_(j, static_cast<Index>(k));
      if (w > 0.0) out.emplace_back(j, w);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::ArrayXd WeightField::degree() const {
  Eigen::ArrayXd deg = Eigen::ArrayXd::Zero(pixels());
  parallel_for(0, rows_, [&](std::ptrdiff_t r) {
    for (Index c = 0; c < cols_; ++c) {
      const Index i = r * cols_ + c;
      double acc = 0.0;
      for (std::size_t k = 0; k < offsets_.size(); ++k) {
        const auto [dy, dx] = offsets_[k];
        if (r + dy < rows_ && c + dx >= 0 && c + dx < cols_) acc += pairs_(i, static_cast<Index>(k));
        if (r - dy >= 0 && c - dx >= 0 && c - dx < cols_) acc += pairs_((r - dy) * cols_ + c - dx, static_cast<Index>(k));
      }
      deg(i) = acc;
    }
  });
  return deg;
}

void WeightField::set_self_to_window_max() {
  parallel_for(0, rows_, [&](std::ptrdiff_t r) {
    for (Index c = 0; c < cols_; ++c) {
      const Index i = r * cols_ + c;
      double best = 0.0;
      for (std::size_t k = 0; k < offsets_.size(); ++k) {
        const auto [dy, dx] = offsets_[k];
        if (r + dy < rows_ && c + dx >= 0 && c + dx < cols_) best = std::max(best, pairs_(i, static_cast<Index>(k)));
        if (r - dy >= 0 && c - dx >= 0 && c - dx < cols_) {
          best = std::max(best, pairs_((r - dy) * cols_ + c - dx, static_cast<Index>(k)));
        }
      }
      self_(i) = best > 0.0 ? best : 1.0;
    }
  });
}

// --- weights ------------------------------------------------------------------

WeightField compute_weights(const Image2D& guide, const NlmConfig& cfg, const NoiseParams& noise) {
  validate(cfg);
  require_finite_image(guide, "compute_weights");
  const bool aware = cfg.weight_mode == WeightMode::noise_aware;
  if (aware) validate(noise);

  const Index h = guide.rows(), w = guide.cols();
  const Index p = cfg.patch_radius;
  const Index span = 2 * p + 1;
  const double patch_size = static_cast<double>(span * span);
  const double inv_h2 = 1.0 / (cfg.h_filter * cfg.h_filter);
  const Image2D padded = reflect_pad(guide, p);

  std::vector<double> lag(static_cast<std::size_t>(span), 0.0);
  lag[0] = 1.0;
  Image2D local_mean;
  if (aware) {
    lag = ScanLineWhitener(noise.corr, span).lag_coefficients();
    local_mean = box_sums(padded, p) / patch_size;
  }

  WeightField field(h, w, cfg.search_radius);
  const auto& offsets = field.offsets();

  parallel_for(0, static_cast<std::ptrdiff_t>(offsets.size()), [&](std::ptrdiff_t k) {
    const auto [dy, dx] = offsets[static_cast<std::size_t>(k)];
    const Range rows = valid_range(h, dy), cols = valid_range(w, dx);
    const Index n_i = rows.hi - rows.lo, n_j = cols.hi - cols.lo;
    if (n_i <= 0 || n_j <= 0) return;

    // Patch difference over the padded support of all valid pixels.
    const Index n_u = n_i + 2 * p, n_v = n_j + 2 * p;
    Image2D diff(n_u, n_v);
    for (Index u = 0; u < n_u; ++u) {
      for (Index v = 0; v < n_v; ++v) {
        diff(u, v) = padded(rows.lo + u, cols.lo + v) - padded(rows.lo + u + dy, cols.lo + v + dx);
      }
    }

    Image2D dist = Image2D::Zero(n_i, n_j);
    Image2D horizontal(n_u, n_j);
    std::vector<double> prefix(static_cast<std::size_t>(n_v + 1));
    for (Index g = 0; g < span; ++g) {
      const double coef = lag[static_cast<std::size_t>(g)];
      if (coef == 0.0) continue;
      // sum over the patch row of d_a d_{a+g}, a = 0 .. span-1-g
      for (Index u = 0; u < n_u; ++u) {
        prefix[0] = 0.0;
        for (Index v = 0; v < n_v; ++v) {
          const double prod = v + g < n_v ? diff(u, v) * diff(u, v + g) : 0.0;
          prefix[static_cast<std::size_t>(v + 1)] = prefix[static_cast<std::size_t>(v)] + prod;
        }
        for (Index j = 0; j < n_j; ++j) {
          horizontal(u, j) = prefix[static_cast<std::size_t>(j + span - g)] - prefix[static_cast<std::size_t>(j)];
        }
      }
      for (Index i = 0; i < n_i; ++i) {
        for (Index j = 0; j < n_j; ++j) {
          double acc = 0.0;
          for (Index u = 0; u < span; ++u) acc += horizontal(i + u, j);
          dist(i, j) += coef * acc;
        }
      }
    }

    for (Index i = 0; i < n_i; ++i) {
      const Index r = rows.lo + i;
      for (Index j = 0; j < n_j; ++j) {
        const Index c = cols.lo + j;
        double d = std::max(dist(i, j), 0.0) / patch_size;
        if (aware) d /= noise_variance(noise, 0.5 * (local_mean(r, c) + local_mean(r + dy, c + dx)));
        field.pair(r * w + c, static_cast<std::size_t>(k)) = std::exp(-d * inv_h2);
      }
    }
  });

  field.set_self_to_window_max();
  return field;
}

// --- filtering and energy ---------------------------------------------------------

Image2D nlms_filter(const Image2D& y, const WeightField& weights) {
  require_finite_image(y, "nlms_filter");
  if (y.rows() != weights.rows() || y.cols() != weights.cols()) {
    throw Error("nlms_filter: weight field does not match the image");
  }
  const Index h = y.rows(), w = y.cols();
  const double lo = y.minCoeff(), hi = y.maxCoeff();
  const auto& offsets = weights.offsets();
  Image2D out(h, w);
  parallel_for(0, h, [&](std::ptrdiff_t r) {
    for (Index c = 0; c < w; ++c) {
      const Index i = r * w + c;
      double num = weights.self(i) * y(r, c);
      double den = weights.self(i);
      for (std::size_t k = 0; k < offsets.size(); ++k) {
        const auto [dy, dx] = offsets[k];
        if (r + dy < h && c + dx >= 0 && c + dx < w) {
          const double wk = weights.pair(i, k);
          num += wk * y(r + dy, c + dx);
          den += wk;
        }
        if (r - dy >= 0 && c - dx >= 0 && c - dx < w) {
          const double wk = weights.pair((r - dy) * w + c - dx, k);
          num += wk * y(r - dy, c - dx);
          den += wk;
        }
      }
      if (!(den > 0.0)) throw Error("nlms_filter: zero weight sum");
      out(r, c) = std::clamp(num / den, lo, hi);
    }
  });
  return out;
}

double regularizer(const Image2D& x, const WeightField& weights) {
  if (x.rows() != weights.rows() || x.cols() != weights.cols()) {
    throw Error("regularizer: weight field does not match the image");
  }
  const Index h = x.rows(), w = x.cols();
  const auto& offsets = weights.offsets();
  std::vector<double> row_sums(static_cast<std::size_t>(h), 0.0);
  parallel_for(0, h, [&](std::ptrdiff_t r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      const auto [dy, dx] = offsets[k];
      if (r + dy >= h) continue;
      const Range cols = valid_range(w, dx);
      const Index n = cols.hi - cols.lo;
      const auto d = x.row(r).segment(cols.lo, n) - x.row(r + dy).segment(cols.lo + dx, n);
      acc += (weights.pair_column(k).segment(r * w + cols.lo, n).transpose() * d.square()).sum();
    }
    row_sums[static_cast<std::size_t>(r)] = acc;
  });
  double total = 0.0;
  for (double s : row_sums) total += s;
  return 2.0 * total;  // each unordered pair appears twice in the ordered sum
}

namespace {

// 4 sum_{j != i} w_ij (x_i - x_j), the gradient of regularizer() for symmetric w.
Image2D regularizer_gradient(const Image2D& x, const WeightField& weights) {
  const Index h = x.rows(), w = x.cols();
  const auto& offsets = weights.offsets();
  Image2D g = Image2D::Zero(h, w);
  parallel_for(0, h, [&](std::ptrdiff_t r) {
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      const auto [dy, dx] = offsets[k];
      const auto wk = weights.pair_column(k);
      if (r + dy < h) {
        const Range cols = valid_range(w, dx);
        const Index n = cols.hi - cols.lo;
        g.row(r).segment(cols.lo, n) += wk.segment(r * w + cols.lo, n).transpose() *
                                        (x.row(r).segment(cols.lo, n) - x.row(r + dy).segment(cols.lo + dx, n));
      }
      if (r - dy >= 0) {
        const Range cols = valid_range(w, -dx);
        const Index n = cols.hi - cols.lo;
        g.row(r).segment(cols.lo, n) += wk.segment((r - dy) * w + cols.lo - dx, n).transpose() *
                                        (x.row(r).segment(cols.lo, n) - x.row(r - dy).segment(cols.lo - dx, n));
      }
    }
  });
  return 4.0 * g;
}

double squared_norm(const Image2D& a) {
  // Fixed-order row reduction.
  double total = 0.0;
  for (Index r = 0; r < a.rows(); ++r) total += a.row(r).square().sum();
  return total;
}

}  // namespace

double energy(const Image2D& x, const Image2D& y, const CirculantOperator& blur, const WeightField& weights,
              double lambda_reg) {
  const double data = squared_norm(y - blur.apply(x));
  return lambda_reg == 0.0 ? data : data + lambda_reg * regularizer(x, weights);
}

double energy(const Image2D& x, const Image2D& y, const Kernel2D& kernel, const WeightField& weights,
              double lambda_reg) {
  return energy(x, y, CirculantOperator(kernel, x.rows(), x.cols()), weights, lambda_reg);
}

Image2D energy_gradient(const Image2D& x, const Image2D& y, const CirculantOperator& blur,
                        const WeightField& weights, double lambda_reg) {
  Image2D g = 2.0 * blur.apply_adjoint(blur.apply(x) - y);
  if (lambda_reg != 0.0) g += lambda_reg * regularizer_gradient(x, weights);
  return g;
}

Image2D energy_gradient(const Image2D& x, const Image2D& y, const Kernel2D& kernel, const WeightField& weights,
                        double lambda_reg) {
  return energy_gradient(x, y, CirculantOperator(kernel, x.rows(), x.cols()), weights, lambda_reg);
}

// --- MAP deconvolution --------------------------------------------------------------

DeconvolutionResult deconvolve_map(const Image2D& y, const Kernel2D& kernel, const WeightField& weights,
                                   const Image2D& x0, const SolverOptions& opts) {
  validate(opts);
  require_finite_image(y, "deconvolve_map");
  if (std::abs(kernel.sum() - 1.0) > 1e-6) throw Error("deconvolve_map: PSF kernel must have unit sum");
  if (weights.rows() != y.rows() || weights.cols() != y.cols()) {
    throw Error("deconvolve_map: weight field does not match the image");
  }
  const CirculantOperator blur(kernel, y.rows(), y.cols());
  const double lambda = opts.lambda_reg;

  DeconvolutionResult result;
  result.x0 = x0;
  const double max_degree = lambda > 0.0 ? weights.degree().maxCoeff() : 0.0;
  // Hessian of the energy: 2 H^T H + 4 lambda (Deg - W), whose Laplacian part is bounded by 2 max degree.
  result.lipschitz = 2.0 * blur.max_gain_squared() + 8.0 * lambda * max_degree;
  const double base_step = 1.0 / result.lipschitz;

  Image2D x = x0;
  Image2D hx = blur.apply(x);
  auto energy_at = [&](const Image2D& xv, const Image2D& hxv) {
    const double data = squared_norm(y - hxv);
    return lambda == 0.0 ? data : data + lambda * regularizer(xv, weights);
  };
  double e = energy_at(x, hx);
  result.log.push_back({0, e, 0.0});

  double step = base_step;
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxHalvings = 60;
  constexpr int kRefresh = 25;
  for (int it = 1; it <= opts.max_iters; ++it) {
    if (it % kRefresh == 0) {
      // Drop the rounding drift of the incrementally updated H x.
      hx = blur.apply(x);
      e = energy_at(x, hx);
    }
    Image2D grad = 2.0 * blur.apply_adjoint(hx - y);
    if (lambda != 0.0) grad += lambda * regularizer_gradient(x, weights);
    const double gg = squared_norm(grad);
    if (gg == 0.0) {
      result.converged = true;
      break;
    }
    const Image2D hgrad = blur.apply(grad);

    double t = opts.step_policy == StepPolicy::adaptive ? 2.0 * step : base_step;
    bool accepted = false;
    Image2D x_try, hx_try;
    double e_try = e;
    for (int halving = 0; halving <= kMaxHalvings; ++halving, t *= 0.5) {
      x_try = x - t * grad;
      hx_try = hx - t * hgrad;
      e_try = energy_at(x_try, hx_try);
      if (!std::isfinite(e_try)) throw Error("deconvolve_map", "non-finite energy (step-size policy failure)");
      if (e_try <= e - kArmijo * t * gg) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      result.converged = true;  // no representable descent step left
      break;
    }
    step = t;
    x = std::move(x_try);
    hx = std::move(hx_try);
    const double decrease = e - e_try;
    e = e_try;
    result.log.push_back({it, e, t});
    if (e == 0.0 || decrease < opts.tol_rel * e) {
      result.converged = true;
      break;
    }
  }
  result.x = std::move(x);
  return result;
}

DeconvolutionResult deconvolve_map(const Image2D& y, const Kernel2D& kernel, const NlmConfig& cfg,
                                   const NoiseParams& noise, const SolverOptions& opts) {
  validate(opts);
  validate(cfg);
  require_finite_image(y, "deconvolve_map");
  Image2D x0 = y;
  if (opts.init_mode == InitMode::nlms) x0 = nlms_filter(y, compute_weights(y, cfg, noise));
  const WeightField weights = compute_weights(x0, cfg, noise);
  return deconvolve_map(y, kernel, weights, x0, opts);
}

}  // namespace sempsf
