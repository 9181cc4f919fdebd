#pragma once

#include "sempsf/io.hpp"
#include "sempsf/noise.hpp"
#include "sempsf/psf_estimate.hpp"
#include "sempsf/psf_model.hpp"
#include "sempsf/restore.hpp"
#include "sempsf/simulate.hpp"

#include <filesystem>
#include <set>
#include <string>

namespace sempsf {

// Conversions between key-value parameter files and the module structs.
// Readers fall back to the struct defaults for missing keys; writers emit
// every key so that a written file reproduces the struct exactly.
//
// Keys:
//   scene:        width height pattern arm_width mu1 mu2 margin mask
//                 defect_x defect_y defect_width defect_height defect_amplitude defect_period
//   psf model:    model (gaussian|airy) sigma_psf lambda_wave na tau
//   noise:        sigma2 alpha corr poisson_fraction poisson_mean
//   acquisition:  psf model + noise keys + psf_half_width frames max_jitter seed
//   calibration:  half_width directions (degrees) variance_threshold_mode min_profiles
//                 edge_guard smooth_sigma max_shift lambda_wave na fit_profile
//   nlm:          patch_radius search_radius h_filter weight_mode
//   solver:       lambda_reg max_iters step_policy tol_rel init_mode

const std::set<std::string>& scene_keys();
const std::set<std::string>& psf_model_keys();
const std::set<std::string>& noise_keys();
const std::set<std::string>& acquisition_keys();
const std::set<std::string>& calibration_keys();
const std::set<std::string>& nlm_keys();
const std::set<std::string>& solver_keys();

/// Throws naming the first key of `kv` that is in none of the allowed sets.
void require_known_keys(const KeyValueFile& kv, std::initializer_list<const std::set<std::string>*> allowed);

/// `mask` paths are resolved relative to `base_dir`.
SceneSpec read_scene(const KeyValueFile& kv, const std::filesystem::path& base_dir = {});
void write_scene(const SceneSpec& spec, KeyValueFile& kv);

PsfModel read_psf_model(const KeyValueFile& kv);
void write_psf_model(const PsfModel& model, KeyValueFile& kv);

NoiseParams read_noise(const KeyValueFile& kv);
void write_noise(const NoiseParams& p, KeyValueFile& kv);

AcquisitionSpec read_acquisition(const KeyValueFile& kv);
void write_acquisition(const AcquisitionSpec& spec, KeyValueFile& kv);

CalibrationConfig read_calibration(const KeyValueFile& kv);
void write_calibration(const CalibrationConfig& cfg, KeyValueFile& kv);

NlmConfig read_nlm(const KeyValueFile& kv);
void write_nlm(const NlmConfig& cfg, KeyValueFile& kv);

SolverOptions read_solver(const KeyValueFile& kv);
void write_solver(const SolverOptions& opts, KeyValueFile& kv);

}  // namespace sempsf
