#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dynmask/lti.hpp"
#include "dynmask/masking_loop.hpp"

namespace dynmask::adversary {

using lti::StateSpace;
using lti::TransferFunction;
using lti::Vec;
using loop::Placement;

/// Everything the eavesdropper collects from the channel: paired (u, w)
/// samples, append-only.
struct DisclosureSet {
  std::vector<double> u;
  std::vector<double> w;

  void append(double uk, double wk) {
    u.push_back(uk);
    w.push_back(wk);
  }
  std::size_t size() const { return u.size(); }
};

DisclosureSet eavesdrop(const loop::LoopTrace& trace);

enum class EstimatorKind { ArxLeastSquares, OutputErrorPem };
enum class NoiseModelFamily { None, Independent };

/// Model orders assumed by the adversary: numerator degree nb >= 1 (at least
/// one zero) and denominator degree nf >= nb.
struct ModelStructure {
  int nb = 1;
  int nf = 2;
  NoiseModelFamily noise_model = NoiseModelFamily::None;
  EstimatorKind estimator = EstimatorKind::ArxLeastSquares;
};

struct EstimationResult {
  Vec theta;                      // [f_1..f_nf, b_0..b_nb]
  TransferFunction model;         // B(z)/F(z)
  double cost = 0.0;
  int iterations = 0;
  bool converged = true;          // false marks the result unreliable
  int sample_count = 0;
  std::vector<double> cost_trace;
};

/// Fits B(z)/F(z) to the disclosed (u, w) pairs. ARX solves the linear
/// regression in closed form; output-error PEM runs a damped Gauss-Newton on
/// the simulation error, initialized at the ARX solution. Throws
/// NumericError("input not persistently exciting") on a rank-deficient
/// regressor; Gauss-Newton non-convergence is flagged, not thrown.
EstimationResult identify(const DisclosureSet& data, const ModelStructure& structure);

/// JSON export: theta, polynomial roots, per-iteration cost trace.
void write_estimation_json(const EstimationResult& est, const std::string& path);

enum class ZeroPolicy { MaxModulus, MinModulus, Index };

/// An output-nulling attack a_k = amplitude * Re(g beta^(k - start)) built
/// from one invariant zero of the source model, together with the initial
/// state the source must hold for its output to vanish. Complex zeros use
/// the conjugate-pair superposition 2 Re(.), which nulls as well since the
/// conjugate triple also solves the pencil.
struct AttackPlan {
  lti::ZeroData zero;
  double amplitude = 1.0;
  int start = 0;
  Vec initial_state;              // real initial condition, already scaled
  bool conjugate_pair = false;

  std::vector<double> sequence(int length) const;
};

/// Throws NumericError("model has no invariant zeros") when the source has
/// none, and "pole-zero cancellation: zero direction ill-conditioned" when
/// the selected zero sits within 1e-8 of a pole.
AttackPlan synthesize_zda(const StateSpace& model, ZeroPolicy policy, double amplitude,
                          int start, int index = -1);

/// Full experiment description shared by the adversary pipeline and the
/// privacy metrics: systems, noise and excitation levels, horizons, the
/// adversary's assumptions, detector settings and the seed.
struct ExperimentSetup {
  TransferFunction plant;
  TransferFunction cipher;
  TransferFunction noise = TransferFunction::unity();
  loop::ControllerTf controller;
  double noise_variance = 0.0;
  double excitation_variance = 1.0;
  int n_id = 2000;
  int n_attack = 100;
  ModelStructure structure;
  ZeroPolicy policy = ZeroPolicy::MaxModulus;
  int zero_index = -1;
  double amplitude = 1e-3;
  int attack_start = 0;
  Placement placement = Placement::D1;
  std::optional<double> threshold;      // empty: default / calibration
  double calibration_quantile = 0.999;
  int calibration_runs = 200;
  std::uint64_t seed = 1;
};

/// No-attack Monte Carlo of the residual energy over the attack horizon;
/// returns the requested quantile. Used to place the threshold when the
/// loop runs with noise.
double calibrate_threshold(const ExperimentSetup& setup);

/// Threshold actually in force for a setup: explicit value, the noise-free
/// default 0.5, or the calibrated quantile.
double resolve_threshold(const ExperimentSetup& setup);

struct AttackExperimentResult {
  EstimationResult estimation;
  AttackPlan plan;
  loop::LoopTrace benign;
  loop::LoopTrace attacked;
  loop::DetectorReport detector;
  double threshold = 0.0;
  double benign_energy = 0.0;
  double attacked_energy = 0.0;
  bool divergent = false;
  bool stealth_init_applied = false;
};

/// The two-stage attack pipeline: benign run under white-noise excitation,
/// eavesdrop, identify, synthesize a ZDA from the identified model, re-run
/// the loop with the attack injected (reference grounded), detect and report
/// energies. When the identified model's order matches, the plant-side
/// cipher copy starts at the plan's initial state; with the mask disabled
/// (cipher == plant) the plant, twin and cipher all start there, since
/// identical systems driven by the same input hold identical states.
AttackExperimentResult run_attack_experiment(const ExperimentSetup& setup);

/// Benign phase only: run, eavesdrop, identify.
EstimationResult run_identification(const ExperimentSetup& setup);

loop::LoopSystems make_loop_systems(const ExperimentSetup& setup);

}  // namespace dynmask::adversary
