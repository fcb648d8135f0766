#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dynmask/adversary.hpp"
#include "dynmask/lti.hpp"
#include "dynmask/masking_loop.hpp"

namespace dynmask::scenario {

using adversary::ExperimentSetup;
using lti::TransferFunction;

/// Fully resolved experiment description. Every default the loader fills in
/// is visible here and in the echoed JSON; nothing is decided later.
struct ScenarioConfig {
  std::string id = "scenario";
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  TransferFunction plant = TransferFunction::unity();
  TransferFunction cipher = TransferFunction::unity();
  std::optional<double> delta;  // set when the cipher came from the zero-shift shorthand

  TransferFunction noise = TransferFunction::unity();
  double noise_variance = 0.0;

  loop::ControllerTf controller;
  std::optional<double> controller_pole_radius;  // set when the builder was used

  loop::Placement placement = loop::Placement::D1;
  std::optional<double> threshold;  // empty: default 0.5 or calibration
  double calibration_quantile = 0.999;
  int calibration_runs = 200;

  int n_id = 2000;
  int n_attack = 100;

  adversary::ModelStructure structure;
  bool estimator_auto = true;
  adversary::ZeroPolicy policy = adversary::ZeroPolicy::MaxModulus;
  int zero_index = -1;
  double amplitude = 1e-3;
  int attack_start = 0;
  double excitation_variance = 1.0;

  struct PrivacySpec {
    double delta = 0.03;
    int replicates = 4;
    bool curve = false;  // also export the bias/variance curve CSV
    int grid_points = 512;
  };
  std::optional<PrivacySpec> privacy;

  int sweep_replicates = 1;

  ExperimentSetup to_setup() const;
};

/// Builds the cipher by moving every zero of the plant by delta along the
/// real axis, keeping poles and gain.
TransferFunction shift_zeros(const TransferFunction& plant, double delta);

/// Parses and validates a JSON scenario file. All schema violations are
/// collected and reported together in one ConfigError. An unstable cipher is
/// rejected at load time.
ScenarioConfig load_config(const std::string& path);
ScenarioConfig load_config_text(const std::string& text, const std::string& id_hint = "scenario");

/// The fully resolved config as JSON text (the echo).
std::string echo_config(const ScenarioConfig& config);

struct ExperimentReport {
  std::string scenario_id;
  adversary::AttackExperimentResult result;
  std::optional<double> identified_zero_re, identified_zero_im;
  double dist_to_cipher_zero = 0.0;
  double dist_to_plant_zero = 0.0;
  std::optional<double> privacy_mse;
  std::optional<bool> privacy_verdict;
  std::vector<std::string> files;
  std::string json;  // the full serialized report
};

/// Full pipeline: benign run, eavesdrop, identify, synthesize, attacked run,
/// detect, metrics, CSV artifacts. Byte-reproducible for a fixed
/// (config, seed). write_artifacts=false skips file output (used by sweeps).
ExperimentReport run_scenario(const ScenarioConfig& config, bool write_artifacts = true);

struct SweepEntry {
  double value = 0.0;
  bool failed = false;
  std::string error;
  double zero_bias_cipher_median = 0.0;  // |z^ - cipher zero|, median over replicates
  double zero_bias_plant_median = 0.0;   // |z^ - plant zero|
  double zero_variance = 0.0;            // sample variance of z^ across replicates
  double alarm_rate = 0.0;
  std::optional<int> median_first_alarm;
  double benign_energy_median = 0.0;
  double attacked_energy_median = 0.0;
  double divergent_rate = 0.0;
};

struct SweepReport {
  std::string parameter;
  std::vector<SweepEntry> entries;
  std::string summary_csv_path;
  std::string json;
};

/// Sweepable parameters: delta, n_id, noise_variance, amplitude, threshold.
/// One run per (value, replicate); failures are recorded and the sweep
/// continues. Writes sweep_summary.csv under the config's out_dir.
SweepReport sweep(const ScenarioConfig& config, const std::string& parameter,
                  const std::vector<double>& values, bool write_artifacts = true);

/// Invariant zeros of the plant and cipher as a JSON report.
std::string zeros_report(const ScenarioConfig& config);

/// Identification phase only, as a JSON report (writes identification.json
/// and the benign trace when write_artifacts).
std::string identify_report(const ScenarioConfig& config, bool write_artifacts = true);

}  // namespace dynmask::scenario
