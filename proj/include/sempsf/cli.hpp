#pragma once

#include "sempsf/eval.hpp"
#include "sempsf/io.hpp"
#include "sempsf/psf_estimate.hpp"
#include "sempsf/restore.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sempsf {

namespace fs = std::filesystem;

/// Flags shared by every command.
struct CommonOptions {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  fs::path out = ".";
  std::vector<std::string> overrides;  ///< "key=value", applied after the files are read
  std::ostream* log = nullptr;         ///< progress messages; null is silent
};

/// Merges the key-value files in order (later keys win) and applies the overrides.
KeyValueFile merge_parameters(const std::vector<fs::path>& files, const std::vector<std::string>& overrides);

/// Loads a PSF for deconvolution. Accepts a square odd tap table, a model
/// file (`model = gaussian|airy` plus parameters) or an estimate-psf fit.txt
/// (uses sigma_hat). Models are discretized with `half_width`, or
/// ceil(4 sigma) (Gaussian) / ceil(12 r0) (Airy) when it is 0.
Kernel2D load_psf(const fs::path& path, Index half_width = 0);

/// Writes frame_%03d.pgm, ground_truth.pgm, ground_truth_mask.pgm, psf.txt,
/// scene.txt, acquisition.txt and truth.txt (all parameters plus jitter_%03d = dy dx).
void cmd_simulate(const fs::path& scene_file, const fs::path& acquisition_file, const CommonOptions& opts);

/// Writes h_raw.txt, fit.txt and diagnostics.txt.
PsfEstimate cmd_estimate_psf(const std::vector<fs::path>& frames, const std::optional<fs::path>& config,
                             const CommonOptions& opts);

/// Writes denoised.pgm.
Image2D cmd_denoise(const fs::path& image, const std::optional<fs::path>& noise_file,
                    const std::optional<fs::path>& config, const CommonOptions& opts);

/// Writes restored.pgm and solver_log.csv. The solver file may also carry
/// NLM keys and psf_half_width.
DeconvolutionResult cmd_deconvolve(const fs::path& image, const fs::path& psf_file,
                                   const std::optional<fs::path>& noise_file,
                                   const std::optional<fs::path>& solver_file, const CommonOptions& opts);

/// Writes metrics.csv (slice, recall, hd_avg, then the means). With
/// `otsu`, predictions are grayscale images segmented by Otsu thresholding.
MetricReport cmd_evaluate(const std::vector<fs::path>& pred, const std::vector<fs::path>& gt, bool otsu,
                          const CommonOptions& opts);

struct CriterionOutcome {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestResult {
  std::vector<CriterionOutcome> criteria;
  std::string report;  ///< also written to report.txt; contains no timings
  bool passed() const;
};

/// Simulates the calibration scenes, runs estimate-psf, denoise, deconvolve
/// and evaluate through the files they write, and checks PSF recovery,
/// monotone solver energy, restoration ordering and segmentation recall.
SelftestResult cmd_selftest(const CommonOptions& opts);

/// Shortest round-trip text of every solver log line: "iteration,energy,step".
std::string solver_log_csv(const DeconvolutionResult& result);

/// True when every energy is at most the previous one plus 1e-12 relative.
bool energy_non_increasing(const std::vector<IterationRecord>& log);

}  // namespace sempsf
