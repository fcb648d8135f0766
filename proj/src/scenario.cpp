#include "dynmask/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dynmask/errors.hpp"
#include "dynmask/privacy.hpp"
#include "dynmask/rng.hpp"
#include "json.hpp"

namespace dynmask::scenario {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using lti::Complex;
using lti::Vec;

namespace {

Vec to_vec(const std::vector<double>& v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out(i) = v[i];
  return out;
}

std::vector<double> from_vec(const Vec& v) {
  return {v.data(), v.data() + v.size()};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Max-modulus numerator root, the zero the attack pipeline keys on.
std::optional<Complex> dominant_zero(const TransferFunction& tf) {
  const auto roots = lti::poly_roots(tf.num);
  if (roots.empty()) return std::nullopt;
  Complex best = roots[0];
  for (const auto& r : roots)
    if (std::abs(r) > std::abs(best)) best = r;
  return best;
}

double min_distance_to_zeros(Complex value, const TransferFunction& tf) {
  const auto roots = lti::poly_roots(tf.num);
  double best = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : roots) {
    const double d = std::abs(value - r);
    if (std::isnan(best) || d < best) best = d;
  }
  return best;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TransferFunction shift_zeros(const TransferFunction& plant, double delta) {
  auto roots = lti::poly_roots(plant.num);
  for (auto& r : roots) r += delta;
  const double lead = plant.num(0);
  return TransferFunction::make(lti::poly_from_roots(roots, lead), plant.den);
}

ExperimentSetup ScenarioConfig::to_setup() const {
  ExperimentSetup s;
  s.plant = plant;
  s.cipher = cipher;
  s.noise = noise;
  s.controller = controller;
  s.noise_variance = noise_variance;
  s.excitation_variance = excitation_variance;
  s.n_id = n_id;
  s.n_attack = n_attack;
  s.structure = structure;
  if (estimator_auto)
    s.structure.estimator = noise_variance > 0.0 ? adversary::EstimatorKind::OutputErrorPem
                                                 : adversary::EstimatorKind::ArxLeastSquares;
  s.policy = policy;
  s.zero_index = zero_index;
  s.amplitude = amplitude;
  s.attack_start = attack_start;
  s.placement = placement;
  s.threshold = threshold;
  s.calibration_quantile = calibration_quantile;
  s.calibration_runs = calibration_runs;
  s.seed = seed;
  return s;
}

namespace {

class Validator {
 public:
  void fail(const std::string& key, const std::string& why) {
    problems_.push_back(key + ": " + why);
  }
  void check_keys(const json& obj, const std::string& prefix,
                  const std::vector<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
        fail(prefix.empty() ? it.key() : prefix + "." + it.key(), "unknown key");
    }
  }
  std::vector<double> coeffs(const json& obj, const std::string& key) {
    if (!obj.contains(key)) {
      fail(key, "required coefficient array missing");
      return {1.0};
    }
    if (!obj[key].is_array() || obj[key].empty()) {
      fail(key, "must be a non-empty array of numbers");
      return {1.0};
    }
    std::vector<double> out;
    for (const auto& c : obj[key]) {
      if (!c.is_number()) {
        fail(key, "must contain only numbers");
        return {1.0};
      }
      out.push_back(c.get<double>());
    }
    return out;
  }
  bool ok() const { return problems_.empty(); }
  void raise_if_failed() const {
    if (problems_.empty()) return;
    std::string msg = "invalid scenario config:";
    for (const auto& p : problems_) msg += "\n  " + p;
    throw ConfigError(msg);
  }

 private:
  std::vector<std::string> problems_;
};

}  // namespace

ScenarioConfig load_config_text(const std::string& text, const std::string& id_hint) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  Validator v;
  ScenarioConfig cfg;
  cfg.id = id_hint;

  v.check_keys(j, "", {"id", "seed", "out_dir", "plant", "cipher", "noise", "controller",
                       "detector", "horizons", "adversary", "excitation", "privacy", "sweep"});

  if (j.contains("id")) {
    if (j["id"].is_string())
      cfg.id = j["id"].get<std::string>();
    else
      v.fail("id", "must be a string");
  }
  if (!j.contains("seed"))
    v.fail("seed", "required (runs must not draw entropy from the clock)");
  else if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
    v.fail("seed", "must be a non-negative integer");
  else
    cfg.seed = j["seed"].get<std::uint64_t>();
  cfg.out_dir = "out/" + cfg.id;
  if (j.contains("out_dir")) {
    if (j["out_dir"].is_string())
      cfg.out_dir = j["out_dir"].get<std::string>();
    else
      v.fail("out_dir", "must be a string");
  }

  if (!j.contains("plant") || !j["plant"].is_object()) {
    v.fail("plant", "required object with num/den coefficient arrays");
  } else {
    v.check_keys(j["plant"], "plant", {"num", "den"});
    const auto num = v.coeffs(j["plant"], "num");
    const auto den = v.coeffs(j["plant"], "den");
    try {
      cfg.plant = TransferFunction::make(to_vec(num), to_vec(den));
    } catch (const std::exception& e) {
      v.fail("plant", e.what());
    }
  }

  if (!j.contains("cipher") || !j["cipher"].is_object()) {
    v.fail("cipher", "required object: either {delta} or {num, den}");
  } else {
    const json& c = j["cipher"];
    v.check_keys(c, "cipher", {"delta", "num", "den"});
    const bool has_delta = c.contains("delta");
    const bool has_coeffs = c.contains("num") || c.contains("den");
    if (has_delta && has_coeffs) {
      v.fail("cipher", "delta shorthand and explicit coefficients are mutually exclusive");
    } else if (has_delta) {
      if (!c["delta"].is_number()) {
        v.fail("cipher.delta", "must be a number");
      } else if (v.ok()) {
        cfg.delta = c["delta"].get<double>();
        try {
          cfg.cipher = shift_zeros(cfg.plant, *cfg.delta);
        } catch (const std::exception& e) {
          v.fail("cipher.delta", e.what());
        }
      }
    } else if (has_coeffs) {
      const auto num = v.coeffs(c, "num");
      const auto den = v.coeffs(c, "den");
      try {
        cfg.cipher = TransferFunction::make(to_vec(num), to_vec(den));
      } catch (const std::exception& e) {
        v.fail("cipher", e.what());
      }
    } else {
      v.fail("cipher", "provide either delta or explicit num/den");
    }
  }

  if (j.contains("noise")) {
    const json& n = j["noise"];
    if (!n.is_object()) {
      v.fail("noise", "must be an object");
    } else {
      v.check_keys(n, "noise", {"variance", "num", "den"});
      if (n.contains("variance")) {
        if (!n["variance"].is_number() || n["variance"].get<double>() < 0.0)
          v.fail("noise.variance", "must be a non-negative number");
        else
          cfg.noise_variance = n["variance"].get<double>();
      }
      if (n.contains("num") || n.contains("den")) {
        const auto num = v.coeffs(n, "num");
        const auto den = v.coeffs(n, "den");
        try {
          cfg.noise = TransferFunction::make(to_vec(num), to_vec(den));
        } catch (const std::exception& e) {
          v.fail("noise", e.what());
        }
      }
    }
  }

  double pole_radius = 0.6;
  bool builder = true;
  if (j.contains("controller")) {
    const json& c = j["controller"];
    if (!c.is_object()) {
      v.fail("controller", "must be an object");
    } else {
      v.check_keys(c, "controller", {"builder", "pole_radius", "num_y", "num_r", "den"});
      if (c.contains("num_y") || c.contains("num_r") || c.contains("den")) {
        builder = false;
        const auto num_y = v.coeffs(c, "num_y");
        const auto num_r = v.coeffs(c, "num_r");
        const auto den = v.coeffs(c, "den");
        try {
          cfg.controller.from_measurement = TransferFunction::make(to_vec(num_y), to_vec(den));
          cfg.controller.from_reference = TransferFunction::make(to_vec(num_r), to_vec(den));
        } catch (const std::exception& e) {
          v.fail("controller", e.what());
        }
      } else if (c.contains("builder") &&
                 (!c["builder"].is_string() ||
                  c["builder"].get<std::string>() != "stabilizing_output_feedback")) {
        v.fail("controller.builder", "unknown builder (use stabilizing_output_feedback)");
      }
      if (c.contains("pole_radius")) {
        if (!c["pole_radius"].is_number())
          v.fail("controller.pole_radius", "must be a number");
        else
          pole_radius = c["pole_radius"].get<double>();
      }
    }
  }

  if (j.contains("detector")) {
    const json& d = j["detector"];
    if (!d.is_object()) {
      v.fail("detector", "must be an object");
    } else {
      v.check_keys(d, "detector", {"placement", "threshold", "calibration"});
      if (d.contains("placement")) {
        const std::string p = d["placement"].is_string() ? d["placement"].get<std::string>() : "";
        if (p == "d1")
          cfg.placement = loop::Placement::D1;
        else if (p == "d2")
          cfg.placement = loop::Placement::D2;
        else
          v.fail("detector.placement", "must be \"d1\" or \"d2\"");
      }
      if (d.contains("threshold")) {
        if (!d["threshold"].is_number() || d["threshold"].get<double>() < 0.0)
          v.fail("detector.threshold", "must be a non-negative number");
        else
          cfg.threshold = d["threshold"].get<double>();
      }
      if (d.contains("calibration")) {
        const json& cal = d["calibration"];
        if (!cal.is_object()) {
          v.fail("detector.calibration", "must be an object");
        } else {
          v.check_keys(cal, "detector.calibration", {"quantile", "runs"});
          if (cal.contains("quantile")) {
            const double q = cal["quantile"].is_number() ? cal["quantile"].get<double>() : -1.0;
            if (q <= 0.0 || q >= 1.0)
              v.fail("detector.calibration.quantile", "must lie in (0, 1)");
            else
              cfg.calibration_quantile = q;
          }
          if (cal.contains("runs")) {
            const int runs = cal["runs"].is_number_integer() ? cal["runs"].get<int>() : -1;
            if (runs < 1)
              v.fail("detector.calibration.runs", "must be a positive integer");
            else
              cfg.calibration_runs = runs;
          }
        }
      }
    }
  }

  if (j.contains("horizons")) {
    const json& h = j["horizons"];
    if (!h.is_object()) {
      v.fail("horizons", "must be an object");
    } else {
      v.check_keys(h, "horizons", {"learn", "attack"});
      if (h.contains("learn")) {
        const int n = h["learn"].is_number_integer() ? h["learn"].get<int>() : -1;
        if (n < 1)
          v.fail("horizons.learn", "must be a positive integer");
        else
          cfg.n_id = n;
      }
      if (h.contains("attack")) {
        const int n = h["attack"].is_number_integer() ? h["attack"].get<int>() : -1;
        if (n < 1)
          v.fail("horizons.attack", "must be a positive integer");
        else
          cfg.n_attack = n;
      }
    }
  }

  if (j.contains("adversary")) {
    const json& a = j["adversary"];
    if (!a.is_object()) {
      v.fail("adversary", "must be an object");
    } else {
      v.check_keys(a, "adversary",
                   {"nb", "nf", "estimator", "noise_model", "zero_policy", "zero_index",
                    "amplitude", "start"});
      if (a.contains("nb")) {
        const int nb = a["nb"].is_number_integer() ? a["nb"].get<int>() : -1;
        if (nb < 1)
          v.fail("adversary.nb", "must be >= 1 (the adversary assumes at least one zero)");
        else
          cfg.structure.nb = nb;
      }
      if (a.contains("nf")) {
        const int nf = a["nf"].is_number_integer() ? a["nf"].get<int>() : -1;
        if (nf < 1)
          v.fail("adversary.nf", "must be a positive integer");
        else
          cfg.structure.nf = nf;
      }
      if (cfg.structure.nf < cfg.structure.nb)
        v.fail("adversary.nf", "must be >= nb (proper model)");
      if (a.contains("estimator")) {
        const std::string e = a["estimator"].is_string() ? a["estimator"].get<std::string>() : "";
        if (e == "auto") {
          cfg.estimator_auto = true;
        } else if (e == "arx") {
          cfg.estimator_auto = false;
          cfg.structure.estimator = adversary::EstimatorKind::ArxLeastSquares;
        } else if (e == "oe") {
          cfg.estimator_auto = false;
          cfg.structure.estimator = adversary::EstimatorKind::OutputErrorPem;
        } else {
          v.fail("adversary.estimator", "must be \"auto\", \"arx\" or \"oe\"");
        }
      }
      if (a.contains("noise_model")) {
        const std::string m =
            a["noise_model"].is_string() ? a["noise_model"].get<std::string>() : "";
        if (m == "none")
          cfg.structure.noise_model = adversary::NoiseModelFamily::None;
        else if (m == "independent")
          cfg.structure.noise_model = adversary::NoiseModelFamily::Independent;
        else
          v.fail("adversary.noise_model", "must be \"none\" or \"independent\"");
      }
      if (a.contains("zero_policy")) {
        const std::string p =
            a["zero_policy"].is_string() ? a["zero_policy"].get<std::string>() : "";
        if (p == "max_modulus")
          cfg.policy = adversary::ZeroPolicy::MaxModulus;
        else if (p == "min_modulus")
          cfg.policy = adversary::ZeroPolicy::MinModulus;
        else if (p == "index")
          cfg.policy = adversary::ZeroPolicy::Index;
        else
          v.fail("adversary.zero_policy", "must be max_modulus, min_modulus or index");
      }
      if (a.contains("zero_index")) {
        if (!a["zero_index"].is_number_integer())
          v.fail("adversary.zero_index", "must be an integer");
        else
          cfg.zero_index = a["zero_index"].get<int>();
      }
      if (a.contains("amplitude")) {
        const double amp = a["amplitude"].is_number() ? a["amplitude"].get<double>() : -1.0;
        if (amp <= 0.0)
          v.fail("adversary.amplitude", "must be a positive number");
        else
          cfg.amplitude = amp;
      }
      if (a.contains("start")) {
        const int k0 = a["start"].is_number_integer() ? a["start"].get<int>() : -1;
        if (k0 < 0)
          v.fail("adversary.start", "must be a non-negative integer");
        else
          cfg.attack_start = k0;
      }
    }
  }

  if (j.contains("excitation")) {
    const json& e = j["excitation"];
    if (!e.is_object()) {
      v.fail("excitation", "must be an object");
    } else {
      v.check_keys(e, "excitation", {"variance"});
      if (e.contains("variance")) {
        const double var = e["variance"].is_number() ? e["variance"].get<double>() : -1.0;
        if (var < 0.0)
          v.fail("excitation.variance", "must be a non-negative number");
        else
          cfg.excitation_variance = var;
      }
    }
  }

  if (j.contains("privacy")) {
    const json& p = j["privacy"];
    if (!p.is_object()) {
      v.fail("privacy", "must be an object");
    } else {
      v.check_keys(p, "privacy", {"delta", "replicates", "curve", "grid_points"});
      ScenarioConfig::PrivacySpec spec;
      if (p.contains("delta")) {
        const double d = p["delta"].is_number() ? p["delta"].get<double>() : -1.0;
        if (d <= 0.0)
          v.fail("privacy.delta", "must be a positive number");
        else
          spec.delta = d;
      }
      if (p.contains("replicates")) {
        const int r = p["replicates"].is_number_integer() ? p["replicates"].get<int>() : -1;
        if (r < 2)
          v.fail("privacy.replicates", "must be >= 2");
        else
          spec.replicates = r;
      }
      if (p.contains("curve")) {
        if (!p["curve"].is_boolean())
          v.fail("privacy.curve", "must be a boolean");
        else
          spec.curve = p["curve"].get<bool>();
      }
      if (p.contains("grid_points")) {
        const int gp = p["grid_points"].is_number_integer() ? p["grid_points"].get<int>() : -1;
        if (gp < 2)
          v.fail("privacy.grid_points", "must be >= 2");
        else
          spec.grid_points = gp;
      }
      cfg.privacy = spec;
    }
  }

  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    if (!s.is_object()) {
      v.fail("sweep", "must be an object");
    } else {
      v.check_keys(s, "sweep", {"replicates"});
      if (s.contains("replicates")) {
        const int r = s["replicates"].is_number_integer() ? s["replicates"].get<int>() : -1;
        if (r < 1)
          v.fail("sweep.replicates", "must be a positive integer");
        else
          cfg.sweep_replicates = r;
      }
    }
  }

  // Build the default controller only once the plant parsed cleanly.
  if (v.ok() && builder) {
    try {
      cfg.controller = loop::design_output_feedback(cfg.plant, pole_radius);
      cfg.controller_pole_radius = pole_radius;
    } catch (const std::exception& e) {
      v.fail("controller", e.what());
    }
  }

  if (v.ok() && !lti::is_stable(cfg.cipher))
    v.fail("cipher", "cipher plant is unstable (all poles must lie inside the unit circle)");

  v.raise_if_failed();
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_config_text(buf.str(), fs::path(path).stem().string());
}

namespace {

json tf_json(const TransferFunction& tf) {
  return json{{"num", from_vec(tf.num)}, {"den", from_vec(tf.den)}};
}

json config_json(const ScenarioConfig& c) {
  json j;
  j["id"] = c.id;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["plant"] = tf_json(c.plant);
  j["cipher"] = tf_json(c.cipher);
  if (c.delta) j["cipher"]["delta"] = *c.delta;
  j["noise"] = tf_json(c.noise);
  j["noise"]["variance"] = c.noise_variance;
  j["controller"] = {{"from_measurement", tf_json(c.controller.from_measurement)},
                     {"from_reference", tf_json(c.controller.from_reference)}};
  if (c.controller_pole_radius) j["controller"]["pole_radius"] = *c.controller_pole_radius;
  // the threshold default is 0.5 for noise-free runs; with noise it comes
  // from the calibration quantile at run time
  const json threshold_echo = c.threshold         ? json(*c.threshold)
                              : c.noise_variance > 0.0 ? json("calibrated")
                                                       : json(0.5);
  j["detector"] = {
      {"placement", c.placement == loop::Placement::D1 ? "d1" : "d2"},
      {"threshold", threshold_echo},
      {"calibration", {{"quantile", c.calibration_quantile}, {"runs", c.calibration_runs}}}};
  j["horizons"] = {{"learn", c.n_id}, {"attack", c.n_attack}};
  const ExperimentSetup setup = c.to_setup();
  j["adversary"] = {
      {"nb", c.structure.nb},
      {"nf", c.structure.nf},
      {"estimator", setup.structure.estimator == adversary::EstimatorKind::ArxLeastSquares
                        ? "arx"
                        : "oe"},
      {"estimator_auto", c.estimator_auto},
      {"noise_model",
       c.structure.noise_model == adversary::NoiseModelFamily::None ? "none" : "independent"},
      {"zero_policy", c.policy == adversary::ZeroPolicy::MaxModulus   ? "max_modulus"
                      : c.policy == adversary::ZeroPolicy::MinModulus ? "min_modulus"
                                                                      : "index"},
      {"zero_index", c.zero_index},
      {"amplitude", c.amplitude},
      {"start", c.attack_start}};
  j["excitation"] = {{"variance", c.excitation_variance}};
  if (c.privacy) {
    j["privacy"] = {{"delta", c.privacy->delta},
                    {"replicates", c.privacy->replicates},
                    {"curve", c.privacy->curve},
                    {"grid_points", c.privacy->grid_points}};
  }
  j["sweep"] = {{"replicates", c.sweep_replicates}};
  return j;
}

json zero_json(const lti::ZeroData& z) {
  return json{{"re", z.beta.real()},
              {"im", z.beta.imag()},
              {"modulus", std::abs(z.beta)},
              {"classification", z.unstable ? "unstable" : "stable"},
              {"residual", z.residual}};
}

}  // namespace

std::string echo_config(const ScenarioConfig& config) { return config_json(config).dump(2); }

ExperimentReport run_scenario(const ScenarioConfig& config, bool write_artifacts) {
  ExperimentReport report;
  report.scenario_id = config.id;
  const ExperimentSetup setup = config.to_setup();

  try {
    report.result = adversary::run_attack_experiment(setup);
  } catch (const std::exception& e) {
    throw NumericError("scenario '" + config.id + "' failed: " + e.what());
  }

  json j;
  j["id"] = config.id;
  j["config"] = config_json(config);

  const auto zhat = dominant_zero(report.result.estimation.model);
  json ident;
  ident["theta"] = from_vec(report.result.estimation.theta);
  ident["model"] = tf_json(report.result.estimation.model);
  ident["cost"] = report.result.estimation.cost;
  ident["iterations"] = report.result.estimation.iterations;
  ident["converged"] = report.result.estimation.converged;
  ident["sample_count"] = report.result.estimation.sample_count;
  if (zhat) {
    report.identified_zero_re = zhat->real();
    report.identified_zero_im = zhat->imag();
    report.dist_to_cipher_zero = min_distance_to_zeros(*zhat, config.cipher);
    report.dist_to_plant_zero = min_distance_to_zeros(*zhat, config.plant);
    ident["identified_zero"] = {{"re", zhat->real()}, {"im", zhat->imag()}};
    ident["dist_to_cipher_zero"] = report.dist_to_cipher_zero;
    ident["dist_to_plant_zero"] = report.dist_to_plant_zero;
  }
  j["identification"] = ident;

  j["attack"] = {{"zero", zero_json(report.result.plan.zero)},
                 {"amplitude", report.result.plan.amplitude},
                 {"start", report.result.plan.start},
                 {"conjugate_pair", report.result.plan.conjugate_pair},
                 {"stealth_init_applied", report.result.stealth_init_applied}};

  const auto& det = report.result.detector;
  j["detector"] = {{"placement", det.placement == loop::Placement::D1 ? "d1" : "d2"},
                   {"threshold", report.result.threshold},
                   {"alarm", det.alarm},
                   {"first_alarm_step",
                    det.first_alarm_step ? json(*det.first_alarm_step) : json(nullptr)},
                   {"final_energy",
                    det.cumulative_energy.empty() ? 0.0 : det.cumulative_energy.back()}};

  j["energies"] = {{"benign", report.result.benign_energy},
                   {"attacked", report.result.attacked_energy},
                   {"divergent", report.result.divergent}};

  if (config.privacy) {
    const auto true_zero = dominant_zero(config.plant);
    if (true_zero) {
      const auto verdict = privacy::delta_privacy_check(
          privacy::zero_extractor(*true_zero), "plant zero", *true_zero, setup,
          config.privacy->delta, config.n_id, config.privacy->replicates);
      report.privacy_mse = verdict.mse;
      report.privacy_verdict = verdict.is_private;
      j["privacy"] = {{"property", verdict.property},
                      {"true_value", {{"re", verdict.true_value.real()},
                                      {"im", verdict.true_value.imag()}}},
                      {"mse", verdict.mse},
                      {"delta", verdict.delta},
                      {"is_private", verdict.is_private},
                      {"replicates", static_cast<int>(verdict.estimates.size())}};
    }
  }

  if (write_artifacts) {
    fs::create_directories(config.out_dir);
    const fs::path dir(config.out_dir);
    const auto add = [&](const fs::path& p) { report.files.push_back(p.string()); };

    std::ofstream echo(dir / "echo.json");
    echo << config_json(config).dump(2) << '\n';
    add(dir / "echo.json");

    loop::write_trace_csv(report.result.benign, (dir / "benign_trace.csv").string());
    add(dir / "benign_trace.csv");
    loop::write_trace_csv(report.result.attacked, (dir / "attacked_trace.csv").string());
    add(dir / "attacked_trace.csv");
    adversary::write_estimation_json(report.result.estimation,
                                     (dir / "identification.json").string());
    add(dir / "identification.json");

    if (config.privacy && config.privacy->curve) {
      const Vec grid = lti::default_grid(config.privacy->grid_points);
      const auto curve = privacy::empirical_bias_variance(setup, config.n_id,
                                                          config.privacy->replicates, grid);
      const auto bound = privacy::mse_lower_bound(curve, config.plant, config.cipher);
      privacy::write_curve_csv(curve, bound, (dir / "privacy_curve.csv").string());
      add(dir / "privacy_curve.csv");
    }

    j["files"] = report.files;
    std::ofstream rep(dir / "report.json");
    rep << j.dump(2) << '\n';
    report.files.push_back((dir / "report.json").string());
  } else {
    j["files"] = json::array();
  }

  report.json = j.dump(2);
  return report;
}

SweepReport sweep(const ScenarioConfig& config, const std::string& parameter,
                  const std::vector<double>& values, bool write_artifacts) {
  static const std::vector<std::string> sweepable = {"delta", "n_id", "noise_variance",
                                                     "amplitude", "threshold"};
  if (std::find(sweepable.begin(), sweepable.end(), parameter) == sweepable.end())
    throw ConfigError("parameter '" + parameter +
                      "' is not sweepable (use delta, n_id, noise_variance, amplitude, threshold)");
  if (values.empty()) throw ConfigError("sweep needs at least one value");

  SweepReport out;
  out.parameter = parameter;

  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    const double value = values[vi];
    SweepEntry entry;
    entry.value = value;

    ScenarioConfig patched = config;
    try {
      if (parameter == "delta") {
        patched.delta = value;
        patched.cipher = shift_zeros(config.plant, value);
        if (!lti::is_stable(patched.cipher)) throw ConfigError("shifted cipher is unstable");
      } else if (parameter == "n_id") {
        if (value < 1.0) throw ConfigError("n_id must be positive");
        patched.n_id = static_cast<int>(value);
      } else if (parameter == "noise_variance") {
        if (value < 0.0) throw ConfigError("noise_variance must be non-negative");
        patched.noise_variance = value;
      } else if (parameter == "amplitude") {
        if (value <= 0.0) throw ConfigError("amplitude must be positive");
        patched.amplitude = value;
      } else {  // threshold
        if (value < 0.0) throw ConfigError("threshold must be non-negative");
        patched.threshold = value;
      }

      std::vector<double> bias_cipher, bias_plant, benign_e, attacked_e, alarm_steps;
      std::vector<Complex> zeros_found;
      int alarms = 0, divergent = 0;
      const int reps = std::max(1, patched.sweep_replicates);
      for (int rep = 0; rep < reps; ++rep) {
        ScenarioConfig rep_cfg = patched;
        if (rep > 0) rep_cfg.seed = rng::derive(patched.seed, rng::streams::kReplicateBase + rep);
        const ExperimentReport r = run_scenario(rep_cfg, /*write_artifacts=*/false);
        if (r.identified_zero_re) {
          bias_cipher.push_back(r.dist_to_cipher_zero);
          bias_plant.push_back(r.dist_to_plant_zero);
          zeros_found.emplace_back(*r.identified_zero_re, *r.identified_zero_im);
        }
        benign_e.push_back(r.result.benign_energy);
        attacked_e.push_back(r.result.attacked_energy);
        if (r.result.detector.alarm) {
          ++alarms;
          alarm_steps.push_back(static_cast<double>(*r.result.detector.first_alarm_step));
        }
        if (r.result.divergent) ++divergent;
      }
      entry.zero_bias_cipher_median = median(bias_cipher);
      entry.zero_bias_plant_median = median(bias_plant);
      if (!zeros_found.empty()) {
        Complex mean(0.0, 0.0);
        for (const auto& z : zeros_found) mean += z;
        mean /= static_cast<double>(zeros_found.size());
        double var = 0.0;
        for (const auto& z : zeros_found) var += std::norm(z - mean);
        entry.zero_variance = var / zeros_found.size();
      }
      entry.alarm_rate = static_cast<double>(alarms) / reps;
      if (!alarm_steps.empty()) entry.median_first_alarm = static_cast<int>(median(alarm_steps));
      entry.benign_energy_median = median(benign_e);
      entry.attacked_energy_median = median(attacked_e);
      entry.divergent_rate = static_cast<double>(divergent) / reps;
    } catch (const std::exception& e) {
      entry.failed = true;
      entry.error = e.what();
    }
    out.entries.push_back(std::move(entry));
  }

  json j;
  j["parameter"] = parameter;
  j["entries"] = json::array();
  for (const auto& e : out.entries) {
    json ej;
    ej["value"] = e.value;
    ej["failed"] = e.failed;
    if (e.failed) {
      ej["error"] = e.error;
    } else {
      ej["zero_bias_cipher_median"] = e.zero_bias_cipher_median;
      ej["zero_bias_plant_median"] = e.zero_bias_plant_median;
      ej["zero_variance"] = e.zero_variance;
      ej["alarm_rate"] = e.alarm_rate;
      ej["median_first_alarm"] =
          e.median_first_alarm ? json(*e.median_first_alarm) : json(nullptr);
      ej["benign_energy_median"] = e.benign_energy_median;
      ej["attacked_energy_median"] = e.attacked_energy_median;
      ej["divergent_rate"] = e.divergent_rate;
    }
    j["entries"].push_back(ej);
  }

  if (write_artifacts) {
    fs::create_directories(config.out_dir);
    const fs::path path = fs::path(config.out_dir) / "sweep_summary.csv";
    std::ofstream csv(path);
    csv << "param,value,failed,zero_bias_cipher_median,zero_bias_plant_median,zero_variance,"
           "alarm_rate,median_first_alarm,benign_energy_median,attacked_energy_median,"
           "divergent_rate\n";
    for (const auto& e : out.entries) {
      csv << parameter << ',' << fmt17(e.value) << ',' << (e.failed ? 1 : 0) << ','
          << fmt17(e.zero_bias_cipher_median) << ',' << fmt17(e.zero_bias_plant_median) << ','
          << fmt17(e.zero_variance) << ',' << fmt17(e.alarm_rate) << ','
          << (e.median_first_alarm ? std::to_string(*e.median_first_alarm) : std::string()) << ','
          << fmt17(e.benign_energy_median) << ',' << fmt17(e.attacked_energy_median) << ','
          << fmt17(e.divergent_rate) << '\n';
    }
    out.summary_csv_path = path.string();
    j["summary_csv"] = out.summary_csv_path;
  }

  out.json = j.dump(2);
  return out;
}

std::string zeros_report(const ScenarioConfig& config) {
  json j;
  j["id"] = config.id;
  for (const char* which : {"plant", "cipher"}) {
    const TransferFunction& tf = std::string(which) == "plant" ? config.plant : config.cipher;
    const auto zeros = lti::invariant_zeros(lti::tf_to_ss(tf));
    json arr = json::array();
    for (const auto& z : zeros) arr.push_back(zero_json(z));
    j[which] = arr;
  }
  return j.dump(2);
}

std::string identify_report(const ScenarioConfig& config, bool write_artifacts) {
  const ExperimentSetup setup = config.to_setup();
  loop::LoopEngine engine(adversary::make_loop_systems(setup),
                          adversary::resolve_threshold(setup), setup.placement);
  const auto r = rng::white_noise(rng::derive(setup.seed, rng::streams::kExcitation), setup.n_id,
                                  setup.excitation_variance);
  const auto e = rng::white_noise(rng::derive(setup.seed, rng::streams::kBenignNoise), setup.n_id,
                                  setup.noise_variance);
  const std::vector<double> a(setup.n_id, 0.0);
  const loop::LoopTrace benign = engine.run(r, a, e);
  const auto est = adversary::identify(adversary::eavesdrop(benign), setup.structure);

  json j;
  j["id"] = config.id;
  j["theta"] = from_vec(est.theta);
  j["model"] = tf_json(est.model);
  j["cost"] = est.cost;
  j["iterations"] = est.iterations;
  j["converged"] = est.converged;
  j["sample_count"] = est.sample_count;
  const auto zhat = dominant_zero(est.model);
  if (zhat) {
    j["identified_zero"] = {{"re", zhat->real()}, {"im", zhat->imag()}};
    j["dist_to_cipher_zero"] = min_distance_to_zeros(*zhat, config.cipher);
    j["dist_to_plant_zero"] = min_distance_to_zeros(*zhat, config.plant);
  }
  if (write_artifacts) {
    fs::create_directories(config.out_dir);
    const fs::path dir(config.out_dir);
    loop::write_trace_csv(benign, (dir / "benign_trace.csv").string());
    adversary::write_estimation_json(est, (dir / "identification.json").string());
    j["files"] = {(dir / "benign_trace.csv").string(), (dir / "identification.json").string()};
  }
  return j.dump(2);
}

}  // namespace dynmask::scenario
