#include "sempsf/cli.hpp"
#include "sempsf/parallel.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace sempsf;

namespace {

struct Flags {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = ".";
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Flags& f, const std::string& default_out = ".") {
  f.out = default_out;
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--threads", f.threads, "Worker threads (results do not depend on it)")->check(CLI::Range(1, 1024));
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_option("--set", f.overrides, "Parameter override key=value (repeatable)");
  cmd->add_flag("--quiet", f.quiet, "No progress messages");
}

CommonOptions to_common(const CLI::App* cmd, const Flags& f) {
  CommonOptions o;
  if (cmd->count("--seed") > 0) o.seed = f.seed;
  o.threads = f.threads;
  o.out = f.out;
  o.overrides = f.overrides;
  o.log = f.quiet ? nullptr : &std::cerr;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SEM point-spread-function estimation, denoising and MAP deconvolution"};
  app.require_subcommand(1);

  Flags f_sim, f_est, f_den, f_dec, f_eval, f_self;

  auto* sim = app.add_subcommand("simulate", "Render a scene and acquire a noisy, blurred, jittered frame stack");
  std::string scene, acquisition;
  sim->add_option("--scene", scene, "Scene parameter file")->required()->check(CLI::ExistingFile);
  sim->add_option("--acquisition", acquisition, "Acquisition parameter file")->required()->check(CLI::ExistingFile);
  add_common(sim, f_sim);

  auto* est = app.add_subcommand("estimate-psf", "Estimate the PSF from calibration frames of a two-intensity sample");
  std::vector<std::string> frames;
  std::string calib;
  est->add_option("frames", frames, "Frame images, or directories holding frame_* images")
      ->required()
      ->check(CLI::ExistingPath);
  est->add_option("--config", calib, "Calibration parameter file")->check(CLI::ExistingFile);
  add_common(est, f_est);

  auto* den = app.add_subcommand("denoise", "Non-local means denoising");
  std::string den_image, den_noise, den_config;
  den->add_option("image", den_image, "Input image")->required()->check(CLI::ExistingFile);
  den->add_option("--noise", den_noise, "Noise parameter file")->check(CLI::ExistingFile);
  den->add_option("--config", den_config, "NLM parameter file")->check(CLI::ExistingFile);
  add_common(den, f_den);

  auto* dec = app.add_subcommand("deconvolve", "MAP deconvolution with a non-local prior");
  std::string dec_image, dec_psf, dec_noise, dec_solver;
  dec->add_option("image", dec_image, "Input image")->required()->check(CLI::ExistingFile);
  dec->add_option("--psf", dec_psf, "PSF tap table, model file or estimate-psf fit.txt")
      ->required()
      ->check(CLI::ExistingFile);
  dec->add_option("--noise", dec_noise, "Noise parameter file")->check(CLI::ExistingFile);
  dec->add_option("--solver", dec_solver, "Solver / NLM parameter file")->check(CLI::ExistingFile);
  add_common(dec, f_dec);

  auto* ev = app.add_subcommand("evaluate", "Recall and averaged boundary distance of segmentations");
  std::vector<std::string> pred, gt;
  bool otsu = false;
  ev->add_option("--pred", pred, "Predicted masks (nonzero = positive)")->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", gt, "Ground-truth masks")->required()->check(CLI::ExistingFile);
  ev->add_flag("--otsu", otsu, "Segment the predictions by Otsu thresholding first");
  add_common(ev, f_eval);

  auto* self = app.add_subcommand("selftest", "End-to-end check on simulated data");
  add_common(self, f_self, "selftest_out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto paths = [](const std::vector<std::string>& v) { return std::vector<fs::path>(v.begin(), v.end()); };
  auto optional_path = [](const std::string& s) { return s.empty() ? std::optional<fs::path>{} : fs::path(s); };

  try {
    if (*sim) {
      set_thread_count(f_sim.threads);
      cmd_simulate(scene, acquisition, to_common(sim, f_sim));
    } else if (*est) {
      set_thread_count(f_est.threads);
      const PsfEstimate e = cmd_estimate_psf(paths(frames), optional_path(calib), to_common(est, f_est));
      std::cout << "sigma_hat = " << std::get<GaussianParams>(e.gaussian_fit.params).sigma_psf << "\n";
      if (e.airy_fit) std::cout << "tau_hat = " << std::get<AiryParams>(e.airy_fit->params).tau << "\n";
    } else if (*den) {
      set_thread_count(f_den.threads);
      cmd_denoise(den_image, optional_path(den_noise), optional_path(den_config), to_common(den, f_den));
    } else if (*dec) {
      set_thread_count(f_dec.threads);
      cmd_deconvolve(dec_image, dec_psf, optional_path(dec_noise), optional_path(dec_solver), to_common(dec, f_dec));
    } else if (*ev) {
      set_thread_count(f_eval.threads);
      const MetricReport r = cmd_evaluate(paths(pred), paths(gt), otsu, to_common(ev, f_eval));
      std::cout << "recall = " << r.recall << "\nhd_avg = " << r.hausdorff_avg << "\n";
    } else if (*self) {
      set_thread_count(f_self.threads);
      const SelftestResult r = cmd_selftest(to_common(self, f_self));
      std::cout << r.report;
      if (!r.passed()) {
        std::cerr << "sempsf: error: [selftest] one or more checks failed\n";
        return 2;
      }
    }
  } catch (const Error& e) {
    std::cerr << "sempsf: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "sempsf: error: [internal] " << e.what() << "\n";
    return 2;
  }
  return 0;
}
