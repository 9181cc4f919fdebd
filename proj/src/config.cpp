#include "sempsf/config.hpp"

#include <cmath>
#include <numbers>

namespace sempsf {

namespace {

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  return out;
}

std::set<std::string> merged(std::initializer_list<const std::set<std::string>*> sets) {
  std::set<std::string> out;
  for (const auto* s : sets) out.insert(s->begin(), s->end());
  return out;
}

}  // namespace

const std::set<std::string>& scene_keys() {
  static const std::set<std::string> keys = {"width",         "height",        "pattern",         "arm_width",
                                             "mu1",           "mu2",           "margin",          "mask",
                                             "defect_x",      "defect_y",      "defect_width",    "defect_height",
                                             "defect_amplitude", "defect_period"};
  return keys;
}

const std::set<std::string>& psf_model_keys() {
  static const std::set<std::string> keys = {"model", "sigma_psf", "lambda_wave", "na", "tau"};
  return keys;
}

const std::set<std::string>& noise_keys() {
  static const std::set<std::string> keys = {"sigma2", "alpha", "corr_taps", "poisson_fraction", "poisson_mean"};
  return keys;
}

const std::set<std::string>& acquisition_keys() {
  static const std::set<std::string> keys = [] {
    auto k = merged({&psf_model_keys(), &noise_keys()});
    k.insert({"psf_half_width", "frames", "max_jitter", "seed"});
    return k;
  }();
  return keys;
}

const std::set<std::string>& calibration_keys() {
  static const std::set<std::string> keys = {"half_width",   "directions", "variance_threshold_mode",
                                             "min_profiles", "edge_guard", "smooth_sigma",
                                             "max_shift",    "lambda_wave", "na",
                                             "fit_profile"};
  return keys;
}

const std::set<std::string>& nlm_keys() {
  static const std::set<std::string> keys = {"patch_radius", "search_radius", "h_filter", "weight_mode"};
  return keys;
}

const std::set<std::string>& solver_keys() {
  static const std::set<std::string> keys = {"lambda_reg", "max_iters", "step_policy", "tol_rel", "init_mode"};
  return keys;
}

void require_known_keys(const KeyValueFile& kv, std::initializer_list<const std::set<std::string>*> allowed) {
  for (const auto& [key, value] : kv.values()) {
    bool known = false;
    for (const auto* s : allowed) known = known || s->count(key) != 0;
    if (!known) throw Error("unknown parameter '" + key + "'");
  }
}

SceneSpec read_scene(const KeyValueFile& kv, const std::filesystem::path& base_dir) {
  SceneSpec s;
  s.width = kv.get_int("width", s.width);
  s.height = kv.get_int("height", s.height);
  s.pattern = parse_pattern(kv.get_string("pattern", to_string(s.pattern)));
  s.arm_width = kv.get_int("arm_width", s.arm_width);
  s.mu1 = kv.get_double("mu1", s.mu1);
  s.mu2 = kv.get_double("mu2", s.mu2);
  s.margin = kv.get_int("margin", s.margin);
  if (s.pattern == Pattern::custom) {
    if (!kv.has("mask")) throw Error("pattern custom needs a 'mask' image path");
    std::filesystem::path mask = kv.get_string("mask");
    if (mask.is_relative() && !base_dir.empty()) mask = base_dir / mask;
    s.custom_mask = load_mask(mask);
    if (!kv.has("width")) s.width = s.custom_mask.cols();
    if (!kv.has("height")) s.height = s.custom_mask.rows();
  }
  if (kv.has("defect_amplitude")) {
    TextureDefect t;
    t.x = kv.get_int("defect_x", 0);
    t.y = kv.get_int("defect_y", 0);
    t.width = kv.get_int("defect_width", 0);
    t.height = kv.get_int("defect_height", 0);
    t.amplitude = kv.get_double("defect_amplitude");
    t.period = kv.get_double("defect_period", t.period);
    s.texture_defect = t;
  }
  validate(s);
  return s;
}

void write_scene(const SceneSpec& spec, KeyValueFile& kv) {
  kv.set("width", static_cast<double>(spec.width));
  kv.set("height", static_cast<double>(spec.height));
  kv.set("pattern", to_string(spec.pattern));
  kv.set("arm_width", static_cast<double>(spec.arm_width));
  kv.set("mu1", spec.mu1);
  kv.set("mu2", spec.mu2);
  kv.set("margin", static_cast<double>(spec.margin));
  if (spec.texture_defect) {
    const auto& t = *spec.texture_defect;
    kv.set("defect_x", static_cast<double>(t.x));
    kv.set("defect_y", static_cast<double>(t.y));
    kv.set("defect_width", static_cast<double>(t.width));
    kv.set("defect_height", static_cast<double>(t.height));
    kv.set("defect_amplitude", t.amplitude);
    kv.set("defect_period", t.period);
  }
}

PsfModel read_psf_model(const KeyValueFile& kv) {
  const std::string model = kv.get_string("model", "gaussian");
  PsfModel out;
  if (model == "gaussian") {
    out = GaussianParams{kv.get_double("sigma_psf", GaussianParams{}.sigma_psf)};
  } else if (model == "airy") {
    AiryParams p;
    p.lambda_wave = kv.get_double("lambda_wave", p.lambda_wave);
    p.na = kv.get_double("na", p.na);
    p.tau = kv.get_double("tau", p.tau);
    out = p;
  } else {
    throw Error("unknown PSF model '" + model + "' (expected gaussian or airy)");
  }
  validate(out);
  return out;
}

void write_psf_model(const PsfModel& model, KeyValueFile& kv) {
  if (const auto* g = std::get_if<GaussianParams>(&model)) {
    kv.set("model", "gaussian");
    kv.set("sigma_psf", g->sigma_psf);
  } else {
    const auto& a = std::get<AiryParams>(model);
    kv.set("model", "airy");
    kv.set("lambda_wave", a.lambda_wave);
    kv.set("na", a.na);
    kv.set("tau", a.tau);
  }
}

NoiseParams read_noise(const KeyValueFile& kv) {
  NoiseParams p;
  p.sigma2 = kv.get_double("sigma2", p.sigma2);
  p.alpha = kv.get_double("alpha", p.alpha);
  if (kv.has("corr_taps")) {
    const auto taps = kv.get_doubles("corr_taps");
    p.corr = Eigen::Map<const Kernel1D>(taps.data(), static_cast<Index>(taps.size()));
  }
  p.poisson_fraction = kv.get_double("poisson_fraction", p.poisson_fraction);
  p.poisson_mean = kv.get_double("poisson_mean", p.poisson_mean);
  validate(p);
  return p;
}

void write_noise(const NoiseParams& p, KeyValueFile& kv) {
  kv.set("sigma2", p.sigma2);
  kv.set("alpha", p.alpha);
  kv.set("corr_taps", join(std::vector<double>(p.corr.data(), p.corr.data() + p.corr.size())));
  kv.set("poisson_fraction", p.poisson_fraction);
  kv.set("poisson_mean", p.poisson_mean);
}

AcquisitionSpec read_acquisition(const KeyValueFile& kv) {
  AcquisitionSpec a;
  a.psf = read_psf_model(kv);
  a.noise = read_noise(kv);
  a.psf_half_width = kv.get_int("psf_half_width", a.psf_half_width);
  a.frames = kv.get_int("frames", a.frames);
  a.max_jitter = kv.get_int("max_jitter", a.max_jitter);
  const long seed = kv.get_int("seed", 0);
  if (seed < 0) throw Error("seed must be >= 0");
  a.seed = static_cast<std::uint64_t>(seed);
  validate(a);
  return a;
}

void write_acquisition(const AcquisitionSpec& spec, KeyValueFile& kv) {
  write_psf_model(spec.psf, kv);
  write_noise(spec.noise, kv);
  kv.set("psf_half_width", static_cast<double>(spec.psf_half_width));
  kv.set("frames", static_cast<double>(spec.frames));
  kv.set("max_jitter", static_cast<double>(spec.max_jitter));
  kv.set("seed", std::to_string(spec.seed));
}

CalibrationConfig read_calibration(const KeyValueFile& kv) {
  CalibrationConfig c;
  auto& p = c.profile;
  p.half_width = kv.get_int("half_width", p.half_width);
  if (kv.has("directions")) {
    p.directions.clear();
    for (double deg : kv.get_doubles("directions")) p.directions.push_back(deg * std::numbers::pi / 180.0);
  }
  p.variance_threshold = VarianceThreshold::parse(kv.get_string("variance_threshold_mode", "auto"));
  p.min_profiles = kv.get_int("min_profiles", p.min_profiles);
  p.edge_guard = kv.get_int("edge_guard", p.edge_guard);
  c.smooth_sigma = kv.get_double("smooth_sigma", c.smooth_sigma);
  c.max_shift = kv.get_int("max_shift", c.max_shift);
  if (kv.has("lambda_wave")) c.lambda_wave = kv.get_double("lambda_wave");
  if (kv.has("na")) c.na = kv.get_double("na");
  c.fit_profile = parse_fit_profile(kv.get_string("fit_profile", to_string(c.fit_profile)));
  validate(p);
  if (!(c.smooth_sigma >= 0.0)) throw Error("smooth_sigma must be >= 0");
  if (c.max_shift < 0) throw Error("max_shift must be >= 0");
  return c;
}

void write_calibration(const CalibrationConfig& cfg, KeyValueFile& kv) {
  const auto& p = cfg.profile;
  kv.set("half_width", static_cast<double>(p.half_width));
  std::vector<double> degrees;
  for (double phi : p.directions) degrees.push_back(std::round(phi * 180.0 / std::numbers::pi * 1e9) / 1e9);
  kv.set("directions", join(degrees));
  kv.set("variance_threshold_mode", p.variance_threshold.to_string());
  kv.set("min_profiles", static_cast<double>(p.min_profiles));
  kv.set("edge_guard", static_cast<double>(p.edge_guard));
  kv.set("smooth_sigma", cfg.smooth_sigma);
  kv.set("max_shift", static_cast<double>(cfg.max_shift));
  if (cfg.lambda_wave) kv.set("lambda_wave", *cfg.lambda_wave);
  if (cfg.na) kv.set("na", *cfg.na);
  kv.set("fit_profile", to_string(cfg.fit_profile));
}

NlmConfig read_nlm(const KeyValueFile& kv) {
  NlmConfig c;
  c.patch_radius = kv.get_int("patch_radius", c.patch_radius);
  c.search_radius = kv.get_int("search_radius", c.search_radius);
  c.h_filter = kv.get_double("h_filter", c.h_filter);
  c.weight_mode = parse_weight_mode(kv.get_string("weight_mode", to_string(c.weight_mode)));
  validate(c);
  return c;
}

void write_nlm(const NlmConfig& cfg, KeyValueFile& kv) {
  kv.set("patch_radius", static_cast<double>(cfg.patch_radius));
  kv.set("search_radius", static_cast<double>(cfg.search_radius));
  kv.set("h_filter", cfg.h_filter);
  kv.set("weight_mode", to_string(cfg.weight_mode));
}

SolverOptions read_solver(const KeyValueFile& kv) {
  SolverOptions o;
  o.lambda_reg = kv.get_double("lambda_reg", o.lambda_reg);
  o.max_iters = static_cast<int>(kv.get_int("max_iters", o.max_iters));
  o.step_policy = parse_step_policy(kv.get_string("step_policy", to_string(o.step_policy)));
  o.tol_rel = kv.get_double("tol_rel", o.tol_rel);
  o.init_mode = parse_init_mode(kv.get_string("init_mode", to_string(o.init_mode)));
  validate(o);
  return o;
}

void write_solver(const SolverOptions& opts, KeyValueFile& kv) {
  kv.set("lambda_reg", opts.lambda_reg);
  kv.set("max_iters", static_cast<double>(opts.max_iters));
  kv.set("step_policy", to_string(opts.step_policy));
  kv.set("tol_rel", opts.tol_rel);
  kv.set("init_mode", to_string(opts.init_mode));
}

}  // namespace sempsf
