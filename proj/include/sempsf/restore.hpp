#pragma once

#include "sempsf/convolution.hpp"
#include "sempsf/noise.hpp"
#include "sempsf/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sempsf {

enum class WeightMode { classic, noise_aware };

WeightMode parse_weight_mode(const std::string& text);
std::string to_string(WeightMode mode);

struct NlmConfig {
  Index patch_radius = 3;
  Index search_radius = 10;
  /// Weights are exp(-d / h_filter^2) with d the per-pixel patch distance
  /// (noise-normalized in noise_aware mode, intensity^2 in classic mode).
  double h_filter = 2.0;
  WeightMode weight_mode = WeightMode::noise_aware;
};

void validate(const NlmConfig& cfg);

struct Offset {
  Index dy = 0;
  Index dx = 0;
};

/// Symmetric non-local weights w_ij = w_ji over a square search window.
///
/// Each unordered pair is stored once, under the half-window offset o with
/// dy > 0 or (dy == 0 and dx > 0): pair(i, k) is the weight between pixel i
/// and pixel i + offsets()[k], zero when that neighbour falls outside the
/// image. Self weights are stored separately.
class WeightField {
 public:
  WeightField() = default;
  WeightField(Index rows, Index cols, Index search_radius);

  /// Every pair weight zero, every self weight one.
  static WeightField self_only(Index rows, Index cols);

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index pixels() const noexcept { return rows_ * cols_; }
  Index search_radius() const noexcept { return radius_; }
  const std::vector<Offset>& offsets() const noexcept { return offsets_; }

  double pair(Index pixel, std::size_t k) const { return pairs_(pixel, static_cast<Index>(k)); }
  double& pair(Index pixel, std::size_t k) { return pairs_(pixel, static_cast<Index>(k)); }
  /// Weights of offset k for every pixel, indexed by the pixel's row-major index.
  auto pair_column(std::size_t k) const { return pairs_.col(static_cast<Index>(k)); }
  double self(Index pixel) const { return self_(pixel); }
  double& self(Index pixel) { return self_(pixel); }

  /// w_ij for arbitrary pixels (zero outside the window).
  double weight(Index i, Index j) const;

  /// (neighbour index, weight) for every j != i in the window with w_ij > 0.
  std::vector<std::pair<Index, double>> neighbors(Index i) const;

  /// sum_{j != i} w_ij
  Eigen::ArrayXd degree() const;

  /// Self weight := largest neighbour weight (1 when every neighbour weight is 0).
  void set_self_to_window_max();

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  Index radius_ = 0;
  std::vector<Offset> offsets_;
  Eigen::ArrayXXd pairs_;  // pixels x offsets, column-major
  Eigen::ArrayXd self_;
};

/// Patch-similarity weights computed on `guide`.
///
/// classic:     d_ij = mean over the patch of (g_i+a - g_j+a)^2
/// noise_aware: d_ij = whitening_distance(patch_i, patch_j, noise, (m_i + m_j) / 2) / patch_size
///              with m the local patch mean of the guide
/// w_ij = exp(-d_ij / h_filter^2). Patches use reflective padding at the border.
WeightField compute_weights(const Image2D& guide, const NlmConfig& cfg, const NoiseParams& noise);

/// x_i = sum_j w_ij y_j / sum_j w_ij (self included), clamped to [min y, max y].
Image2D nlms_filter(const Image2D& y, const WeightField& weights);

/// sum over ordered pairs of w_ij (x_i - x_j)^2.
double regularizer(const Image2D& x, const WeightField& weights);

/// ||y - Hx||^2 + lambda * regularizer(x).
double energy(const Image2D& x, const Image2D& y, const CirculantOperator& blur, const WeightField& weights,
              double lambda_reg);
double energy(const Image2D& x, const Image2D& y, const Kernel2D& kernel, const WeightField& weights,
              double lambda_reg);

/// 2 H^T (Hx - y) + 2 lambda sum_j (w_ij + w_ji)(x_i - x_j).
Image2D energy_gradient(const Image2D& x, const Image2D& y, const CirculantOperator& blur,
                        const WeightField& weights, double lambda_reg);
Image2D energy_gradient(const Image2D& x, const Image2D& y, const Kernel2D& kernel, const WeightField& weights,
                        double lambda_reg);

enum class InitMode { nlms, observed };
enum class StepPolicy {
  lipschitz,  ///< every iteration starts backtracking from 1 / L
  adaptive    ///< starts from twice the previous accepted step
};

InitMode parse_init_mode(const std::string& text);
StepPolicy parse_step_policy(const std::string& text);
std::string to_string(InitMode mode);
std::string to_string(StepPolicy policy);

struct SolverOptions {
  double lambda_reg = 0.01;
  int max_iters = 500;
  StepPolicy step_policy = StepPolicy::lipschitz;
  double tol_rel = 1e-6;
  InitMode init_mode = InitMode::nlms;
};

void validate(const SolverOptions& opts);

struct IterationRecord {
  int iteration = 0;
  double energy = 0.0;
  double step = 0.0;
};

struct DeconvolutionResult {
  Image2D x;
  Image2D x0;  ///< initial solution
  std::vector<IterationRecord> log;
  double lipschitz = 0.0;
  bool converged = false;
};

/// Steepest descent with Armijo backtracking (factor 0.5, c = 1e-4) on the
/// MAP energy, with weights computed once from the initial solution.
DeconvolutionResult deconvolve_map(const Image2D& y, const Kernel2D& kernel, const NlmConfig& cfg,
                                   const NoiseParams& noise, const SolverOptions& opts);

/// Same, with weights supplied by the caller and the given starting point.
DeconvolutionResult deconvolve_map(const Image2D& y, const Kernel2D& kernel, const WeightField& weights,
                                   const Image2D& x0, const SolverOptions& opts);

}  // namespace sempsf
