#include "sempsf/simulate.hpp"

#include "sempsf/convolution.hpp"
#include "sempsf/parallel.hpp"
#include "sempsf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sempsf {

Pattern parse_pattern(const std::string& text) {
  if (text == "cross") return Pattern::cross;
  if (text == "half-plane" || text == "half_plane") return Pattern::half_plane;
  if (text == "custom") return Pattern::custom;
  throw Error("unknown pattern '" + text + "' (expected cross, half-plane or custom)");
}

std::string to_string(Pattern pattern) {
  switch (pattern) {
    case Pattern::cross: return "cross";
    case Pattern::half_plane: return "half-plane";
    default: return "custom";
  }
}

void validate(const SceneSpec& spec) {
  if (spec.width < 2 || spec.height < 2) throw Error("scene must be at least 2x2");
  if (!(spec.mu1 != spec.mu2) || !std::isfinite(spec.mu1) || !std::isfinite(spec.mu2)) {
    throw Error("mu1 and mu2 must be finite and differ");
  }
  if (spec.margin < 0) throw Error("margin must be >= 0");
  if (spec.pattern == Pattern::cross) {
    if (spec.arm_width < 1) throw Error("arm_width must be >= 1");
    const Index inner_w = spec.width - 2 * spec.margin, inner_h = spec.height - 2 * spec.margin;
    if (inner_w < spec.arm_width || inner_h < spec.arm_width) {
      throw Error("pattern exceeds frame: cross with arm_width " + std::to_string(spec.arm_width) + " and margin " +
                  std::to_string(spec.margin) + " does not fit " + std::to_string(spec.width) + "x" +
                  std::to_string(spec.height));
    }
  }
  if (spec.pattern == Pattern::custom &&
      (spec.custom_mask.rows() != spec.height || spec.custom_mask.cols() != spec.width)) {
    throw Error("pattern exceeds frame: custom mask size differs from the scene size");
  }
  if (spec.texture_defect) {
    const auto& t = *spec.texture_defect;
    if (t.width < 0 || t.height < 0 || t.x < 0 || t.y < 0 || t.x + t.width > spec.width ||
        t.y + t.height > spec.height) {
      throw Error("pattern exceeds frame: texture defect rectangle lies outside the scene");
    }
    if (!(t.period > 0.0)) throw Error("texture defect period must be > 0");
    if (!std::isfinite(t.amplitude)) throw Error("texture defect amplitude must be finite");
  }
}

BinaryImage2D render_mask(const SceneSpec& spec) {
  validate(spec);
  const Index h = spec.height, w = spec.width;
  switch (spec.pattern) {
    case Pattern::half_plane: {
      BinaryImage2D mask(h, w);
      for (Index r = 0; r < h; ++r)
        for (Index c = 0; c < w; ++c) mask(r, c) = c >= w / 2;
      return mask;
    }
    case Pattern::custom:
      return spec.custom_mask;
    case Pattern::cross:
      break;
  }
  BinaryImage2D mask = BinaryImage2D::Constant(h, w, false);
  const Index a = spec.arm_width;
  const Index col0 = (w - a) / 2, row0 = (h - a) / 2;
  // vertical arm
  mask.block(spec.margin, col0, h - 2 * spec.margin, a).setConstant(true);
  // horizontal arm
  mask.block(row0, spec.margin, a, w - 2 * spec.margin).setConstant(true);
  return mask;
}

Image2D render_scene(const SceneSpec& spec) {
  const BinaryImage2D mask = render_mask(spec);
  Image2D x = mask.select(Image2D::Constant(mask.rows(), mask.cols(), spec.mu2),
                          Image2D::Constant(mask.rows(), mask.cols(), spec.mu1));
  if (spec.texture_defect && spec.texture_defect->amplitude != 0.0) {
    const auto& t = *spec.texture_defect;
    for (Index r = t.y; r < t.y + t.height; ++r) {
      for (Index c = t.x; c < t.x + t.width; ++c) {
        x(r, c) += t.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(c - t.x) / t.period);
      }
    }
  }
  return x;
}

namespace {

// ceil that ignores rounding noise just above an integer
Index whole_pixels(double v) { return std::max<Index>(1, static_cast<Index>(std::ceil(v - 1e-9 * std::abs(v)))); }

}  // namespace

Index default_psf_half_width(const PsfModel& model) {
  validate(model);
  if (const auto* g = std::get_if<GaussianParams>(&model)) return whole_pixels(5.0 * g->sigma_psf);
  return whole_pixels(12.0 * airy_first_zero_radius(std::get<AiryParams>(model)));
}

void validate(const AcquisitionSpec& spec) {
  validate(spec.psf);
  validate(spec.noise);
  if (spec.frames < 1) throw Error("frames must be >= 1");
  if (spec.max_jitter < 0) throw Error("max_jitter must be >= 0");
  if (spec.psf_half_width < 0) throw Error("psf_half_width must be >= 0");
}

Acquisition acquire(const Image2D& x, const AcquisitionSpec& spec) {
  validate(spec);
  require_finite_image(x, "acquire");
  const Index d = spec.psf_half_width > 0 ? spec.psf_half_width : default_psf_half_width(spec.psf);
  Acquisition out;
  out.kernel = discretize_2d(spec.psf, d);
  out.blurred = convolve_circular(x, out.kernel);
  out.frames.resize(static_cast<std::size_t>(spec.frames));
  out.jitters.resize(static_cast<std::size_t>(spec.frames));
  const Rng root(spec.seed);
  parallel_for(0, spec.frames, [&](std::ptrdiff_t i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    Jitter j;
    if (spec.max_jitter > 0) {
      j.dy = rng.uniform_int(-spec.max_jitter, spec.max_jitter);
      j.dx = rng.uniform_int(-spec.max_jitter, spec.max_jitter);
    }
    const Image2D shifted = circular_shift(out.blurred, j.dy, j.dx);
    out.frames[static_cast<std::size_t>(i)] = synthesize_noise(shifted, spec.noise, rng.split(0));
    out.jitters[static_cast<std::size_t>(i)] = j;
  });
  return out;
}

}  // namespace sempsf
