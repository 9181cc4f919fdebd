#include "sempsf/psf_estimate.hpp"

#include "sempsf/eval.hpp"
#include "sempsf/io.hpp"
#include "sempsf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

namespace sempsf {

namespace {

struct Step {
  Index dx;
  Index dy;
};

// Profile direction (mu1 -> mu2) for an edge direction that is a multiple of pi/2.
Step normal_of(double phi) {
  const double quarter = phi / (0.5 * std::numbers::pi);
  const double rounded = std::round(quarter);
  if (std::abs(quarter - rounded) > 1e-6) {
    throw Error("edge direction " + format_double(phi) + " rad is not a multiple of pi/2");
  }
  switch (((static_cast<long>(rounded) % 4) + 4) % 4) {
    case 0: return {0, -1};
    case 1: return {1, 0};
    case 2: return {0, 1};
    default: return {-1, 0};
  }
}

double population_variance(const double* v, Index n) {
  double mean = 0.0;
  for (Index i = 0; i < n; ++i) mean += v[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (Index i = 0; i < n; ++i) var += (v[i] - mean) * (v[i] - mean);
  return var / static_cast<double>(n);
}

}  // namespace

VarianceThreshold VarianceThreshold::parse(const std::string& text) {
  VarianceThreshold t;
  if (text == "auto" || text.empty()) return t;
  if (text == "none") {
    t.mode = Mode::none;
    return t;
  }
  const auto colon = text.find(':');
  const std::string mode = text.substr(0, colon);
  if (colon == std::string::npos) throw Error("variance threshold '" + text + "': expected auto, none, relative:<k> or absolute:<v>");
  t.value = KeyValueFile::parse("v = " + text.substr(colon + 1)).get_double("v");
  if (mode == "relative") {
    t.mode = Mode::relative;
  } else if (mode == "absolute") {
    t.mode = Mode::absolute;
  } else {
    throw Error("unknown variance threshold mode '" + mode + "'");
  }
  if (!(t.value >= 0.0)) throw Error("variance threshold must be >= 0");
  return t;
}

std::string VarianceThreshold::to_string() const {
  switch (mode) {
    case Mode::none: return "none";
    case Mode::absolute: return "absolute:" + format_double(value);
    default: return "relative:" + format_double(value);
  }
}

void validate(const ProfileConfig& cfg) {
  if (cfg.half_width < 2) throw Error("profile half_width must be >= 2");
  if (cfg.directions.empty()) throw Error("at least one edge direction is required");
  for (double phi : cfg.directions) normal_of(phi);
  if (cfg.min_profiles < 1) throw Error("min_profiles must be >= 1");
  if (cfg.edge_guard < 0) throw Error("edge_guard must be >= 0");
  if (cfg.variance_threshold.mode != VarianceThreshold::Mode::none && !(cfg.variance_threshold.value >= 0.0)) {
    throw Error("variance threshold must be >= 0");
  }
}

Shift estimate_shift(const Image2D& reference, const Image2D& img, Index max_shift) {
  if (reference.rows() != img.rows() || reference.cols() != img.cols()) {
    throw Error("register", "image dimensions differ from the reference frame");
  }
  if (max_shift < 0) throw Error("register", "max_shift must be >= 0");
  const Index h = img.rows(), w = img.cols();
  const Index reach_y = std::min(max_shift, h - 1), reach_x = std::min(max_shift, w - 1);

  auto ssd = [&](Index dy, Index dx) {
    // shifted(r, c) = img(r - dy, c - dx); split each row at the wrap point.
    double total = 0.0;
    const Index split = ((dx % w) + w) % w;  // columns [0, split) read from the row tail
    for (Index r = 0; r < h; ++r) {
      const double* ref = reference.data() + r * w;
      const double* src = img.data() + (((r - dy) % h + h) % h) * w;
      double acc = 0.0;
      for (Index c = 0; c < split; ++c) {
        const double d = ref[c] - src[c - split + w];
        acc += d * d;
      }
      for (Index c = split; c < w; ++c) {
        const double d = ref[c] - src[c - split];
        acc += d * d;
      }
      total += acc;
    }
    return total;
  };

  Shift best{0, 0};
  double best_ssd = ssd(0, 0);
  for (Index dy = -reach_y; dy <= reach_y; ++dy) {
    for (Index dx = -reach_x; dx <= reach_x; ++dx) {
      if (dy == 0 && dx == 0) continue;
      const double v = ssd(dy, dx);
      if (v < best_ssd) {
        best_ssd = v;
        best = {dy, dx};
      }
    }
  }
  return best;
}

std::vector<Image2D> register_stack(const std::vector<Image2D>& images, Index max_shift, std::vector<Shift>* shifts) {
  if (images.empty()) throw Error("register", "no images");
  for (const auto& img : images) require_finite_image(img, "register");
  std::vector<Image2D> out(images.size());
  std::vector<Shift> found(images.size());
  out[0] = images[0];
  parallel_for(1, static_cast<std::ptrdiff_t>(images.size()), [&](std::ptrdiff_t i) {
    found[i] = estimate_shift(images[0], images[i], max_shift);
    out[i] = circular_shift(images[i], found[i].dy, found[i].dx);
  });
  if (shifts) *shifts = found;
  return out;
}

Image2D average_stack(const std::vector<Image2D>& aligned) {
  if (aligned.empty()) throw Error("average", "empty image list");
  Image2D sum = Image2D::Zero(aligned[0].rows(), aligned[0].cols());
  for (const auto& img : aligned) {
    if (img.rows() != sum.rows() || img.cols() != sum.cols()) throw Error("average", "image dimensions differ");
    sum += img;
  }
  return sum / static_cast<double>(aligned.size());
}

LatentEstimate estimate_latent(const Image2D& y_mean, double smooth_sigma) {
  require_finite_image(y_mean, "estimate_latent");
  if (smooth_sigma < 0.0) throw Error("estimate_latent", "smooth_sigma must be >= 0");
  const Image2D smooth = gaussian_smooth(y_mean, smooth_sigma);
  OtsuResult split;
  try {
    split = otsu(smooth);
  } catch (const Error& e) {
    throw Error("estimate_latent", std::string(e.what()) + " (calibration sample lacks two intensity levels)");
  }
  LatentEstimate latent;
  latent.mask = apply_threshold(smooth, split);
  latent.threshold = split.threshold;
  const Index n2 = latent.mask.count();
  const Index n1 = latent.mask.size() - n2;
  if (n1 == 0 || n2 == 0) throw Error("estimate_latent", "binarization produced a single class");
  latent.mu2 = latent.mask.select(y_mean, 0.0).sum() / static_cast<double>(n2);
  latent.mu1 = latent.mask.select(0.0, y_mean).sum() / static_cast<double>(n1);
  return latent;
}

EdgeProfileSet extract_profiles(const Image2D& y_mean, const LatentEstimate& latent, const ProfileConfig& cfg) {
  validate(cfg);
  const BinaryImage2D& mask = latent.mask;
  if (mask.rows() != y_mean.rows() || mask.cols() != y_mean.cols()) {
    throw Error("extract_profiles", "latent mask and image dimensions differ");
  }
  const Index h = y_mean.rows(), w = y_mean.cols();
  const Index d = cfg.half_width, g = cfg.edge_guard;
  const Index len = 2 * d + 1;

  struct Candidate {
    Eigen::VectorXd samples;
    double end_variance;
  };
  std::vector<Candidate> candidates;
  EdgeProfileSet set;
  set.mu1 = latent.mu1;
  set.mu2 = latent.mu2;

  auto inside = [&](Index x, Index y) { return x >= 0 && y >= 0 && x < w && y < h; };

  for (const double phi : cfg.directions) {
    const Step n = normal_of(phi);
    const Step lateral{-n.dy, n.dx};
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        if (!mask(y, x)) continue;
        if (!inside(x - n.dx, y - n.dy) || mask(y - n.dy, x - n.dx)) continue;
        // Boundary pixel of this direction: first mu2-side sample of the profile.
        bool clean = true;
        for (Index s = -g; s <= g && clean; ++s) {
          for (Index t = -d; t <= d; ++t) {
            const Index px = x + t * n.dx + s * lateral.dx;
            const Index py = y + t * n.dy + s * lateral.dy;
            if (!inside(px, py) || mask(py, px) != (t >= 0)) {
              clean = false;
              break;
            }
          }
        }
        if (!clean) {
          ++set.ineligible_count;
          continue;
        }
        Candidate cand;
        cand.samples.resize(len);
        for (Index t = -d; t <= d; ++t) cand.samples(t + d) = y_mean(y + t * n.dy, x + t * n.dx);
        const Index seg = std::max<Index>(d / 2, 2);
        cand.end_variance = std::max(population_variance(cand.samples.data(), seg),
                                     population_variance(cand.samples.data() + len - seg, seg));
        candidates.push_back(std::move(cand));
      }
    }
  }

  double threshold = std::numeric_limits<double>::infinity();
  if (!candidates.empty()) {
    switch (cfg.variance_threshold.mode) {
      case VarianceThreshold::Mode::relative: {
        std::vector<double> v;
        v.reserve(candidates.size());
        for (const auto& c : candidates) v.push_back(c.end_variance);
        const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
        std::nth_element(v.begin(), mid, v.end());
        threshold = cfg.variance_threshold.value * *mid;
        break;
      }
      case VarianceThreshold::Mode::absolute:
        threshold = cfg.variance_threshold.value;
        break;
      case VarianceThreshold::Mode::none:
        break;
    }
  }
  set.variance_threshold = threshold;

  for (auto& c : candidates) {
    if (c.end_variance > threshold) {
      ++set.rejected_count;
    } else {
      set.profiles.push_back(std::move(c.samples));
    }
  }
  set.accepted_count = static_cast<Index>(set.profiles.size());
  if (set.accepted_count < cfg.min_profiles) {
    throw Error("extract_profiles", "only " + std::to_string(set.accepted_count) + " profiles accepted (" +
                                        std::to_string(set.rejected_count) + " rejected, " +
                                        std::to_string(set.ineligible_count) + " ineligible); need " +
                                        std::to_string(cfg.min_profiles));
  }
  return set;
}

Eigen::VectorXd average_profiles(const EdgeProfileSet& set) {
  if (set.profiles.empty()) throw Error("average_profiles", "no accepted profiles");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(set.profiles.front().size());
  for (const auto& p : set.profiles) {
    if (p.size() != sum.size()) throw Error("average_profiles", "profiles have different lengths");
    sum += p;
  }
  return sum / static_cast<double>(set.profiles.size());
}

Kernel1D solve_psf(const Eigen::VectorXd& y_prime, double mu1, double mu2, Index half_width) {
  if (half_width < 1) throw Error("solve_psf", "half_width must be >= 1");
  if (y_prime.size() != 2 * half_width + 1) throw Error("solve_psf", "profile length must be 2D + 1");
  if (!all_finite(y_prime)) throw Error("solve_psf", "profile contains non-finite samples");
  if (!(std::isfinite(mu1) && std::isfinite(mu2)) || mu1 == mu2) {
    throw Error("solve_psf", "singular system: mu1 == mu2");
  }
  const Index len = y_prime.size();
  Kernel1D h = Kernel1D::Zero(len);
  for (Index k = 1; k < len; ++k) h(k) = (y_prime(k) - y_prime(k - 1)) / (mu2 - mu1);

  const double positive = h.max(0.0).sum();
  const double negative = (-h).max(0.0).sum();
  if (!(positive > 0.0)) throw Error("solve_psf", "zero difference signal (profile is constant; mu1 == mu2 inferred)");
  if (negative > 0.1 * positive) {
    throw Error("solve_psf", "negative mass " + format_double(negative / positive) +
                                 " of the positive mass exceeds 10% (inconsistent profiles)");
  }
  const double eps_tap = 1e-4 * h.maxCoeff();
  h = h.max(-eps_tap);
  return h / h.sum();
}

PsfEstimate estimate_psf_pipeline(const std::vector<Image2D>& images, const CalibrationConfig& cfg) {
  PsfEstimate est;
  run_stage("config", [&] { validate(cfg.profile); });
  const auto aligned = run_stage("register", [&] { return register_stack(images, cfg.max_shift, &est.diagnostics.shifts); });
  const Image2D mean = run_stage("average", [&] { return average_stack(aligned); });
  const LatentEstimate latent = run_stage("estimate_latent", [&] { return estimate_latent(mean, cfg.smooth_sigma); });
  const EdgeProfileSet set = run_stage("extract_profiles", [&] { return extract_profiles(mean, latent, cfg.profile); });
  const Eigen::VectorXd y_prime = run_stage("average_profiles", [&] { return average_profiles(set); });
  est.h_raw = run_stage("solve_psf", [&] { return solve_psf(y_prime, set.mu1, set.mu2, cfg.profile.half_width); });
  est.gaussian_fit = run_stage("fit_gaussian", [&] { return fit_gaussian(est.h_raw, FitBracket{}, cfg.fit_profile); });
  if (cfg.lambda_wave && cfg.na) {
    est.airy_fit = run_stage("fit_airy", [&] { return fit_airy(est.h_raw, *cfg.lambda_wave, *cfg.na, FitBracket{}, cfg.fit_profile); });
  }
  auto& diag = est.diagnostics;
  diag.threshold = latent.threshold;
  diag.mu1 = latent.mu1;
  diag.mu2 = latent.mu2;
  diag.accepted_profiles = set.accepted_count;
  diag.rejected_profiles = set.rejected_count;
  diag.ineligible_profiles = set.ineligible_count;
  diag.variance_threshold = set.variance_threshold;
  return est;
}

FourierDiagnostic fourier_psf_diagnostic(const Image2D& y, const Image2D& x, double floor) {
  if (y.rows() != x.rows() || y.cols() != x.cols()) throw Error("fourier_psf_diagnostic: dimensions differ");
  const Spectrum fy = fft2(y);
  const Spectrum fx = fft2(x);
  FourierDiagnostic out;
  out.ratio = Spectrum::Zero(y.rows(), y.cols());
  out.flagged = fx.abs() < floor;
  for (Index i = 0; i < fx.size(); ++i) {
    if (!out.flagged.data()[i]) out.ratio.data()[i] = fy.data()[i] / fx.data()[i];
  }
  out.magnitude = out.ratio.abs();
  out.flagged_count = out.flagged.count();
  return out;
}

}  // namespace sempsf
