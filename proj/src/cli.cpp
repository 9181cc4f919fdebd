#include "sempsf/cli.hpp"

#include "sempsf/config.hpp"
#include "sempsf/io.hpp"
#include "sempsf/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace sempsf {

namespace {

void note(const CommonOptions& opts, const std::string& message) {
  if (opts.log) *opts.log << message << std::endl;
}

std::string frame_name(Index i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03ld.pgm", static_cast<long>(i));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void make_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("write", "cannot create output directory " + dir.string());
}

std::vector<fs::path> expand_frames(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> out;
  for (const auto& p : inputs) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(p)) {
        const std::string name = entry.path().filename().string();
        const std::string ext = entry.path().extension().string();
        if (entry.is_regular_file() && name.rfind("frame_", 0) == 0 && (ext == ".pgm" || ext == ".png" || ext == ".raw")) {
          found.push_back(entry.path());
        }
      }
      std::sort(found.begin(), found.end());
      if (found.empty()) throw Error("load", "no frame_* images in " + p.string());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

Index psf_default_half_width(const PsfModel& model) {
  if (const auto* g = std::get_if<GaussianParams>(&model)) {
    return std::max<Index>(1, static_cast<Index>(std::ceil(4.0 * g->sigma_psf)));
  }
  return default_psf_half_width(model);
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

}  // namespace

KeyValueFile merge_parameters(const std::vector<fs::path>& files, const std::vector<std::string>& overrides) {
  KeyValueFile merged;
  for (const auto& f : files) {
    const KeyValueFile kv = KeyValueFile::load(f);
    for (const auto& [key, value] : kv.values()) merged.set(key, value);
  }
  for (const auto& o : overrides) merged.apply_override(o);
  return merged;
}

Kernel2D load_psf(const fs::path& path, Index half_width) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  std::string line;
  bool key_value = false;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    key_value = line.find('=') != std::string::npos;
    break;
  }
  if (key_value) {
    const KeyValueFile kv = KeyValueFile::load(path);
    PsfModel model;
    if (kv.has("model")) {
      model = read_psf_model(kv);
    } else if (kv.has("sigma_hat")) {
      model = GaussianParams{kv.get_double("sigma_hat")};
      validate(model);
    } else {
      throw Error(path.string() + ": PSF parameter file needs 'model' or 'sigma_hat'");
    }
    return discretize_2d(model, half_width > 0 ? half_width : psf_default_half_width(model));
  }
  Kernel2D taps = load_tap_table(path);
  if (taps.rows() != taps.cols() || taps.rows() % 2 == 0) {
    throw Error(path.string() + ": PSF tap table must be square with odd size");
  }
  if (!all_finite(taps) || (taps < 0.0).any()) throw Error(path.string() + ": PSF taps must be finite and >= 0");
  const double sum = taps.sum();
  if (std::abs(sum - 1.0) > 1e-3) throw Error(path.string() + ": PSF taps must sum to 1 (sum is " + fixed(sum) + ")");
  return taps / sum;
}

// --- simulate ----------------------------------------------------------------------

void cmd_simulate(const fs::path& scene_file, const fs::path& acquisition_file, const CommonOptions& opts) {
  const KeyValueFile kv =
      run_stage("config", [&] { return merge_parameters({scene_file, acquisition_file}, opts.overrides); });
  SceneSpec scene;
  AcquisitionSpec acq;
  run_stage("config", [&] {
    require_known_keys(kv, {&scene_keys(), &acquisition_keys()});
    scene = read_scene(kv, scene_file.parent_path());
    acq = read_acquisition(kv);
  });
  if (opts.seed) acq.seed = *opts.seed;
  if (acq.psf_half_width == 0) acq.psf_half_width = default_psf_half_width(acq.psf);

  const Image2D x = run_stage("render_scene", [&] { return render_scene(scene); });
  const BinaryImage2D mask = run_stage("render_scene", [&] { return render_mask(scene); });
  note(opts, "simulate: " + std::to_string(acq.frames) + " frames " + std::to_string(scene.width) + "x" +
                 std::to_string(scene.height));
  const Acquisition data = run_stage("acquire", [&] { return acquire(x, acq); });

  run_stage("write", [&] {
    make_output_dir(opts.out);
    for (std::size_t i = 0; i < data.frames.size(); ++i) {
      save_image(data.frames[i], opts.out / frame_name(static_cast<Index>(i)), 16);
    }
    save_image(x, opts.out / "ground_truth.pgm", 16);
    save_mask(mask, opts.out / "ground_truth_mask.pgm");
    save_tap_table(data.kernel, opts.out / "psf.txt");

    KeyValueFile scene_kv, acq_kv, truth;
    write_scene(scene, scene_kv);
    if (scene.pattern == Pattern::custom) {
      save_mask(scene.custom_mask, opts.out / "scene_mask.pgm");
      scene_kv.set("mask", "scene_mask.pgm");
    }
    write_acquisition(acq, acq_kv);
    scene_kv.save(opts.out / "scene.txt");
    acq_kv.save(opts.out / "acquisition.txt");
    for (const auto& [k, v] : scene_kv.values()) truth.set(k, v);
    for (const auto& [k, v] : acq_kv.values()) truth.set(k, v);
    for (std::size_t i = 0; i < data.jitters.size(); ++i) {
      char key[32];
      std::snprintf(key, sizeof key, "jitter_%03zu", i);
      truth.set(key, std::to_string(data.jitters[i].dy) + " " + std::to_string(data.jitters[i].dx));
    }
    truth.save(opts.out / "truth.txt");
  });
}

// --- estimate-psf ------------------------------------------------------------------

PsfEstimate cmd_estimate_psf(const std::vector<fs::path>& frames, const std::optional<fs::path>& config,
                             const CommonOptions& opts) {
  CalibrationConfig cfg;
  run_stage("config", [&] {
    std::vector<fs::path> files;
    if (config) files.push_back(*config);
    const KeyValueFile kv = merge_parameters(files, opts.overrides);
    require_known_keys(kv, {&calibration_keys()});
    cfg = read_calibration(kv);
  });
  const std::vector<fs::path> paths = run_stage("load", [&] { return expand_frames(frames); });
  if (paths.empty()) throw Error("load", "no input frames");
  std::vector<Image2D> images;
  run_stage("load", [&] {
    for (const auto& p : paths) images.push_back(load_image(p));
  });
  note(opts, "estimate-psf: " + std::to_string(images.size()) + " frames");
  PsfEstimate est = estimate_psf_pipeline(images, cfg);

  run_stage("write", [&] {
    make_output_dir(opts.out);
    save_kernel1d(est.h_raw, opts.out / "h_raw.txt");
    KeyValueFile fit;
    fit.set("half_width", static_cast<double>(cfg.profile.half_width));
    fit.set("fit_profile", to_string(cfg.fit_profile));
    fit.set("sigma_hat", std::get<GaussianParams>(est.gaussian_fit.params).sigma_psf);
    fit.set("gaussian_residual", est.gaussian_fit.residual);
    if (est.airy_fit) {
      const auto& a = std::get<AiryParams>(est.airy_fit->params);
      fit.set("tau_hat", a.tau);
      fit.set("airy_residual", est.airy_fit->residual);
      fit.set("lambda_wave", a.lambda_wave);
      fit.set("na", a.na);
    }
    fit.save(opts.out / "fit.txt");

    const auto& d = est.diagnostics;
    KeyValueFile diag;
    diag.set("frames", static_cast<double>(images.size()));
    std::string shifts;
    for (const auto& s : d.shifts) shifts += (shifts.empty() ? "" : " ") + std::to_string(s.dy) + "," + std::to_string(s.dx);
    diag.set("shifts", shifts);
    diag.set("otsu_threshold", d.threshold);
    diag.set("mu1", d.mu1);
    diag.set("mu2", d.mu2);
    diag.set("accepted_profiles", static_cast<double>(d.accepted_profiles));
    diag.set("rejected_profiles", static_cast<double>(d.rejected_profiles));
    diag.set("ineligible_profiles", static_cast<double>(d.ineligible_profiles));
    diag.set("variance_threshold", d.variance_threshold);
    diag.save(opts.out / "diagnostics.txt");
  });
  return est;
}

// --- denoise / deconvolve ------------------------------------------------------------

Image2D cmd_denoise(const fs::path& image, const std::optional<fs::path>& noise_file,
                    const std::optional<fs::path>& config, const CommonOptions& opts) {
  NoiseParams noise;
  NlmConfig nlm;
  run_stage("config", [&] {
    std::vector<fs::path> files;
    if (noise_file) files.push_back(*noise_file);
    if (config) files.push_back(*config);
    const KeyValueFile kv = merge_parameters(files, opts.overrides);
    require_known_keys(kv, {&noise_keys(), &nlm_keys()});
    noise = read_noise(kv);
    nlm = read_nlm(kv);
  });
  const Image2D y = run_stage("load", [&] { return load_image(image); });
  note(opts, "denoise: " + to_string(nlm.weight_mode) + " weights");
  const WeightField w = run_stage("weights", [&] { return compute_weights(y, nlm, noise); });
  Image2D out = run_stage("nlms", [&] { return nlms_filter(y, w); });
  run_stage("write", [&] {
    make_output_dir(opts.out);
    save_image(out, opts.out / "denoised.pgm", 16);
  });
  return out;
}

std::string solver_log_csv(const DeconvolutionResult& result) {
  std::string out = "iteration,energy,step\n";
  for (const auto& r : result.log) {
    out += std::to_string(r.iteration) + "," + format_double(r.energy) + "," + format_double(r.step) + "\n";
  }
  return out;
}

bool energy_non_increasing(const std::vector<IterationRecord>& log) {
  for (std::size_t i = 1; i < log.size(); ++i) {
    if (log[i].energy > log[i - 1].energy + 1e-12 * std::abs(log[i - 1].energy)) return false;
  }
  return true;
}

DeconvolutionResult cmd_deconvolve(const fs::path& image, const fs::path& psf_file,
                                   const std::optional<fs::path>& noise_file,
                                   const std::optional<fs::path>& solver_file, const CommonOptions& opts) {
  NoiseParams noise;
  NlmConfig nlm;
  SolverOptions solver;
  Index half_width = 0;
  run_stage("config", [&] {
    std::vector<fs::path> files;
    if (noise_file) files.push_back(*noise_file);
    if (solver_file) files.push_back(*solver_file);
    const KeyValueFile kv = merge_parameters(files, opts.overrides);
    static const std::set<std::string> extra = {"psf_half_width"};
    require_known_keys(kv, {&noise_keys(), &nlm_keys(), &solver_keys(), &extra});
    noise = read_noise(kv);
    nlm = read_nlm(kv);
    solver = read_solver(kv);
    half_width = kv.get_int("psf_half_width", 0);
    if (half_width < 0) throw Error("psf_half_width must be >= 0");
  });
  const Kernel2D kernel = run_stage("load_psf", [&] { return load_psf(psf_file, half_width); });
  const Image2D y = run_stage("load", [&] { return load_image(image); });
  note(opts, "deconvolve: kernel " + std::to_string(kernel.rows()) + "x" + std::to_string(kernel.cols()) +
                 ", lambda_reg " + fixed(solver.lambda_reg));
  DeconvolutionResult result = run_stage("deconvolve", [&] { return deconvolve_map(y, kernel, nlm, noise, solver); });
  run_stage("write", [&] {
    make_output_dir(opts.out);
    save_image(result.x, opts.out / "restored.pgm", 16);
    write_text(opts.out / "solver_log.csv", solver_log_csv(result));
  });
  note(opts, "deconvolve: " + std::to_string(result.log.size() - 1) + " iterations, energy " +
                 fixed(result.log.back().energy));
  return result;
}

// --- evaluate ----------------------------------------------------------------------

MetricReport cmd_evaluate(const std::vector<fs::path>& pred, const std::vector<fs::path>& gt, bool otsu,
                          const CommonOptions& opts) {
  if (pred.empty() || pred.size() != gt.size()) {
    throw Error("config", "need equally many prediction and ground-truth files (got " + std::to_string(pred.size()) +
                              " and " + std::to_string(gt.size()) + ")");
  }
  std::vector<BinaryImage2D> p, g;
  run_stage("load", [&] {
    for (const auto& f : pred) p.push_back(otsu ? otsu_segment(load_image(f)) : load_mask(f));
    for (const auto& f : gt) g.push_back(load_mask(f));
  });
  const MetricReport report = run_stage("evaluate", [&] { return evaluate_stack(p, g); });
  run_stage("write", [&] {
    make_output_dir(opts.out);
    std::string csv = "slice,recall,hd_avg\n";
    for (std::size_t i = 0; i < report.slices.size(); ++i) {
      csv += std::to_string(i) + "," + format_double(report.slices[i].recall) + "," +
             format_double(report.slices[i].hausdorff_avg) + "\n";
    }
    csv += "mean," + format_double(report.recall) + "," + format_double(report.hausdorff_avg) + "\n";
    write_text(opts.out / "metrics.csv", csv);
  });
  return report;
}

// --- selftest ----------------------------------------------------------------------

bool SelftestResult::passed() const {
  return !criteria.empty() && std::all_of(criteria.begin(), criteria.end(), [](const auto& c) { return c.passed; });
}

namespace {

constexpr int kRestorationSeeds = 5;

struct SeedOutcome {
  std::uint64_t seed = 0;
  double sigma_hat = 0.0;
  double mse_raw = 0.0, mse_nlm = 0.0, mse_dec = 0.0;
  double recall_raw = 0.0, recall_dec = 0.0;
  bool monotone = false;
  Index iterations = 0;
};

KeyValueFile selftest_scene() {
  return KeyValueFile::parse(
      "width = 512\nheight = 512\npattern = cross\narm_width = 80\nmu1 = 50\nmu2 = 200\nmargin = 64\n", "selftest");
}

KeyValueFile selftest_noise() {
  return KeyValueFile::parse("sigma2 = 25\nalpha = 0.1\ncorr_taps = 0.25 0.5 0.25\n", "selftest");
}

// Airy parameters placing the first dark ring at 4.8 px for tau = 1, i.e. 4 px at tau = 1.2.
AiryParams selftest_airy() { return airy_with_first_zero(4.8); }

std::pair<Index, Index> read_jitter(const KeyValueFile& truth, Index frame) {
  char key[32];
  std::snprintf(key, sizeof key, "jitter_%03ld", static_cast<long>(frame));
  const auto v = truth.get_doubles(key);
  if (v.size() != 2) throw Error("truth sidecar: malformed " + std::string(key));
  return {static_cast<Index>(v[0]), static_cast<Index>(v[1])};
}

std::vector<fs::path> frame_paths(const fs::path& dir, Index count) {
  std::vector<fs::path> out;
  for (Index i = 0; i < count; ++i) out.push_back(dir / frame_name(i));
  return out;
}

CommonOptions sub_options(const CommonOptions& opts, const fs::path& out) {
  CommonOptions o;
  o.threads = opts.threads;
  o.out = out;
  o.log = opts.log;
  return o;
}

SeedOutcome run_restoration_seed(const fs::path& root, std::uint64_t seed, const CommonOptions& opts) {
  SeedOutcome r;
  r.seed = seed;
  const fs::path dir = root / ("seed_" + std::to_string(seed));
  make_output_dir(dir);

  KeyValueFile acq = selftest_noise();
  acq.set("model", "gaussian");
  acq.set("sigma_psf", 2.0);
  acq.set("frames", 16.0);
  acq.set("max_jitter", 3.0);
  acq.set("seed", std::to_string(seed));
  selftest_scene().save(dir / "scene.txt");
  acq.save(dir / "acquisition.txt");
  selftest_noise().save(dir / "noise.txt");
  KeyValueFile solver;
  write_solver(SolverOptions{0.01, 200, StepPolicy::adaptive, 1e-6, InitMode::nlms}, solver);
  write_nlm(NlmConfig{3, 5, 2.0, WeightMode::noise_aware}, solver);
  solver.save(dir / "solver.txt");

  cmd_simulate(dir / "scene.txt", dir / "acquisition.txt", sub_options(opts, dir / "sim"));
  const PsfEstimate est = cmd_estimate_psf(frame_paths(dir / "sim", 16), std::nullopt, sub_options(opts, dir / "psf"));
  r.sigma_hat = std::get<GaussianParams>(est.gaussian_fit.params).sigma_psf;

  const fs::path frame0 = dir / "sim" / frame_name(0);
  CommonOptions denoise_opts = sub_options(opts, dir / "denoise");
  denoise_opts.overrides = {"patch_radius=3", "search_radius=5", "h_filter=2"};
  const Image2D nlm = cmd_denoise(frame0, dir / "noise.txt", std::nullopt, denoise_opts);
  const DeconvolutionResult dec =
      cmd_deconvolve(frame0, dir / "psf" / "fit.txt", dir / "noise.txt", dir / "solver.txt", sub_options(opts, dir / "deconv"));
  r.monotone = energy_non_increasing(dec.log);
  r.iterations = static_cast<Index>(dec.log.size()) - 1;

  // Everything below is read back from the written files.
  const KeyValueFile truth = KeyValueFile::load(dir / "sim" / "truth.txt");
  const auto [dy, dx] = read_jitter(truth, 0);
  const Image2D latent = circular_shift(load_image(dir / "sim" / "ground_truth.pgm"), dy, dx);
  save_mask(circular_shift(load_mask(dir / "sim" / "ground_truth_mask.pgm"), dy, dx), dir / "truth_mask_frame0.pgm");
  r.mse_raw = mean_squared_error(load_image(frame0), latent);
  r.mse_nlm = mean_squared_error(load_image(dir / "denoise" / "denoised.pgm"), latent);
  r.mse_dec = mean_squared_error(load_image(dir / "deconv" / "restored.pgm"), latent);

  const MetricReport metrics = cmd_evaluate({frame0, dir / "deconv" / "restored.pgm"},
                                            {dir / "truth_mask_frame0.pgm", dir / "truth_mask_frame0.pgm"}, true,
                                            sub_options(opts, dir / "evaluate"));
  r.recall_raw = metrics.slices[0].recall;
  r.recall_dec = metrics.slices[1].recall;
  return r;
}

}  // namespace

SelftestResult cmd_selftest(const CommonOptions& opts) {
  const std::uint64_t base = opts.seed.value_or(1);
  make_output_dir(opts.out);
  SelftestResult result;
  std::ostringstream rep;
  rep << "sempsf selftest\n";
  rep << "seed = " << base << "\n";
  rep << "scene = cross 512x512, arm_width 80, mu1 50, mu2 200\n";
  rep << "acquisition = 16 frames, max_jitter 3, sigma2 25, alpha 0.1, corr 0.25 0.5 0.25\n";
  rep << "restoration = noise-aware NLM (patch 3, search 5, h 2), lambda_reg 0.01, adaptive steps, max 200 iterations\n\n";

  // Gaussian round trip and restoration share the simulated stacks.
  std::vector<SeedOutcome> seeds;
  for (int i = 0; i < kRestorationSeeds; ++i) {
    note(opts, "selftest: restoration seed " + std::to_string(base + static_cast<std::uint64_t>(i)));
    seeds.push_back(run_restoration_seed(opts.out, base + static_cast<std::uint64_t>(i), opts));
  }

  // Airy round trip.
  note(opts, "selftest: Airy round trip");
  const fs::path airy_dir = opts.out / "airy";
  make_output_dir(airy_dir);
  const AiryParams airy = selftest_airy();
  KeyValueFile acq = selftest_noise();
  write_psf_model(AiryParams{airy.lambda_wave, airy.na, 1.2}, acq);
  acq.set("frames", 16.0);
  acq.set("max_jitter", 3.0);
  acq.set("seed", std::to_string(base));
  selftest_scene().save(airy_dir / "scene.txt");
  acq.save(airy_dir / "acquisition.txt");
  KeyValueFile calib;
  calib.set("lambda_wave", airy.lambda_wave);
  calib.set("na", airy.na);
  calib.save(airy_dir / "calibration.txt");
  cmd_simulate(airy_dir / "scene.txt", airy_dir / "acquisition.txt", sub_options(opts, airy_dir / "sim"));
  cmd_estimate_psf(frame_paths(airy_dir / "sim", 16), airy_dir / "calibration.txt", sub_options(opts, airy_dir / "psf"));
  const KeyValueFile airy_fit = KeyValueFile::load(airy_dir / "psf" / "fit.txt");
  const double tau_hat = airy_fit.get_double("tau_hat");
  const double airy_res = airy_fit.get_double("airy_residual");
  const double gauss_res = airy_fit.get_double("gaussian_residual");

  // Read sigma_hat back from the written fit of the first seed.
  const double sigma_hat =
      KeyValueFile::load(opts.out / ("seed_" + std::to_string(base)) / "psf" / "fit.txt").get_double("sigma_hat");

  auto add = [&](int id, std::string name, bool passed, std::string detail) {
    result.criteria.push_back({id, std::move(name), passed, std::move(detail)});
  };
  add(1, "Gaussian PSF round trip", std::abs(sigma_hat - 2.0) <= 0.1,
      "sigma_hat = " + fixed(sigma_hat) + " (true 2, tolerance 0.1)");
  add(2, "Airy PSF round trip", std::abs(tau_hat - 1.2) <= 0.06 && airy_res <= gauss_res,
      "tau_hat = " + fixed(tau_hat) + " (true 1.2, tolerance 0.06), airy_residual = " + fixed(airy_res) +
          ", gaussian_residual = " + fixed(gauss_res));

  int monotone = 0, ordered = 0, recall_ok = 0;
  std::ostringstream per_seed;
  for (const auto& s : seeds) {
    monotone += s.monotone;
    ordered += (s.mse_dec < s.mse_nlm && s.mse_nlm < s.mse_raw);
    recall_ok += (s.recall_dec >= s.recall_raw);
    per_seed << "  seed " << s.seed << ": sigma_hat " << fixed(s.sigma_hat) << ", iterations " << s.iterations
             << ", mse raw " << fixed(s.mse_raw) << " nlm " << fixed(s.mse_nlm) << " deconvolved " << fixed(s.mse_dec)
             << ", recall raw " << fixed(s.recall_raw) << " deconvolved " << fixed(s.recall_dec) << "\n";
  }
  const int n = kRestorationSeeds;
  add(5, "non-increasing solver energy", monotone == n,
      std::to_string(monotone) + "/" + std::to_string(n) + " runs non-increasing");
  add(6, "restoration ordering mse(deconvolved) < mse(nlm) < mse(raw)", ordered == n,
      std::to_string(ordered) + "/" + std::to_string(n) + " seeds ordered");
  add(10, "segmentation recall(deconvolved) >= recall(raw)", recall_ok >= 4,
      std::to_string(recall_ok) + "/" + std::to_string(n) + " seeds (need 4)");

  for (const auto& c : result.criteria) {
    rep << (c.passed ? "[PASS] " : "[FAIL] ") << c.id << " " << c.name << ": " << c.detail << "\n";
  }
  rep << "\nper seed:\n" << per_seed.str();
  rep << "\nresult = " << (result.passed() ? "PASS" : "FAIL") << "\n";
  result.report = rep.str();
  write_text(opts.out / "report.txt", result.report);
  return result;
}

}  // namespace sempsf
