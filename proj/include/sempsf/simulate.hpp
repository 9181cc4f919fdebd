#pragma once

#include "sempsf/noise.hpp"
#include "sempsf/psf_model.hpp"
#include "sempsf/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sempsf {

enum class Pattern { cross, half_plane, custom };

Pattern parse_pattern(const std::string& text);
std::string to_string(Pattern pattern);

/// Additive sinusoidal grating amplitude * sin(2 pi (c - x) / period) inside a rectangle.
struct TextureDefect {
  Index x = 0;
  Index y = 0;
  Index width = 0;
  Index height = 0;
  double amplitude = 0.0;
  double period = 8.0;
};

struct SceneSpec {
  Index width = 512;
  Index height = 512;
  Pattern pattern = Pattern::cross;
  /// Width of both cross arms. Arms span the frame minus `margin` on each side.
  Index arm_width = 80;
  double mu1 = 50.0;   ///< background
  double mu2 = 200.0;  ///< foreground
  Index margin = 64;
  BinaryImage2D custom_mask;  ///< used by Pattern::custom
  std::optional<TextureDefect> texture_defect;
};

void validate(const SceneSpec& spec);

/// Foreground mask of the scene (true where the latent intensity is mu2).
BinaryImage2D render_mask(const SceneSpec& spec);

/// Two-valued latent image, plus the texture defect if present.
Image2D render_scene(const SceneSpec& spec);

struct AcquisitionSpec {
  PsfModel psf = GaussianParams{2.0};
  /// Kernel half-width; 0 picks default_psf_half_width().
  Index psf_half_width = 0;
  NoiseParams noise;
  Index frames = 1;
  Index max_jitter = 0;
  std::uint64_t seed = 0;
};

void validate(const AcquisitionSpec& spec);

/// ceil(5 sigma) for Gaussians, ceil(12 r0) for Airy with r0 the first dark ring.
Index default_psf_half_width(const PsfModel& model);

struct Jitter {
  Index dy = 0;
  Index dx = 0;
};

struct Acquisition {
  std::vector<Image2D> frames;
  std::vector<Jitter> jitters;
  Image2D blurred;  ///< H x before shifting and noise
  Kernel2D kernel;
};

/// frame_i = circular_shift(H x, jitter_i) + D C n_i. Frame i draws its jitter
/// and noise from Rng(seed).split(i), so frames are generated in parallel.
Acquisition acquire(const Image2D& x, const AcquisitionSpec& spec);

}  // namespace sempsf
