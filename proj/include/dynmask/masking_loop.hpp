#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dynmask/lti.hpp"

namespace dynmask::loop {

using lti::StateSpace;
using lti::TransferFunction;
using lti::Vec;

enum class Placement { D1, D2 };  // plant output / controller side

/// Two-channel controller u = C_y(q) y + C_r(q) r, kept as separate rational
/// channels and realized as a stacked-input state space when the loop is
/// built.
struct ControllerTf {
  TransferFunction from_measurement;
  TransferFunction from_reference;
};

/// Pole-placement output feedback: solves A R + B S = (z - radius)^(2n-1)
/// for the plant num/den = B/A and returns C_y = -S/R, C_r = t0/R with t0
/// chosen for unit DC tracking. Throws NumericError if the design system is
/// singular (non-coprime plant) and ConfigError if the plant has a zero at
/// z = 1.
ControllerTf design_output_feedback(const TransferFunction& plant, double pole_radius);

/// Stacked-input realization [y; r] of the two channels (block diagonal).
StateSpace controller_to_ss(const ControllerTf& c);

struct LoopSystems {
  TransferFunction plant;       // drives y together with the noise filter
  TransferFunction noise;       // H, filters e into the measurement
  TransferFunction cipher;      // S, replaces the plant's signature on the channel
  ControllerTf controller;
};

/// Time-indexed record of every loop signal over the horizon. y_nom is the
/// noise-free nominal closed-loop output driven by the same reference; the
/// detector residual is taken against it.
struct LoopTrace {
  std::vector<double> r, u, a, u_tilde, e, y, v, l, w, y_hat, d, y_nom;
  lti::Mat z;                   // plant state per step (performance output)
  std::vector<double> z_sq;     // ||z_k||^2 per step
  Placement placement = Placement::D1;
  double threshold = 0.0;

  std::size_t size() const { return y.size(); }
};

struct DetectorReport {
  Placement placement = Placement::D1;
  std::vector<double> cumulative_energy;  // ||d||^2 on [0, k], non-decreasing
  double threshold = 0.0;
  bool alarm = false;
  std::optional<int> first_alarm_step;
};

struct StepRecord {
  double r, u, a, u_tilde, e, y, v, l, w, y_hat, d, y_nom;
  Vec z;
};

/// Which subsystem state an initial condition targets.
enum class Block { Plant, Twin, Cipher, NoiseFilter, CtrlCipher, CtrlTwin, Controller };

/// The full masking architecture stepped as one synchronous loop: plant with
/// filtered noise, digital twin v = -G u~, cipher l = S u~, channel signal
/// w = y + v + l (so w = S u~ + H e holds exactly), controller-side copies of
/// G and S driven by the controller's own u, output reconstruction
/// y^ = w - S u + G u, controller acting on (y^, r), and residual detectors
/// at D1 (plant output) or D2 (reconstructed output).
///
/// Single-threaded stateful object; run independent engines for parallel
/// experiments. With custom initial states, the twin state must mirror the
/// plant state at step 0 or the channel identity no longer holds.
class LoopEngine {
 public:
  /// Validates the architecture: S internally stable, the (plant, controller)
  /// closed loop asymptotically stable, and the feedthrough loop well posed.
  LoopEngine(const LoopSystems& systems, double threshold,
             Placement placement = Placement::D1);

  void set_initial_state(Block block, const Vec& x);
  void reset();

  StepRecord step(double r_k, double a_k, double e_k);
  LoopTrace run(const std::vector<double>& r, const std::vector<double>& a,
                const std::vector<double>& e);

  const LoopSystems& systems() const { return systems_; }
  double threshold() const { return threshold_; }
  Placement placement() const { return placement_; }
  int plant_order() const { return plant_.n(); }
  int cipher_order() const { return cipher_.n(); }

 private:
  LoopSystems systems_;
  StateSpace plant_, noise_, cipher_, ctrl_;
  double threshold_;
  Placement placement_;
  int nc_y_ = 0;  // controller input split: [y; r]

  Vec x_plant_, x_twin_, x_cipher_, x_noise_, x_ctrl_cipher_, x_ctrl_twin_, x_ctrl_;
  Vec x_plant0_, x_twin0_, x_cipher0_, x_noise0_, x_ctrl_cipher0_, x_ctrl_twin0_, x_ctrl0_;
  Vec x_nom_plant_, x_nom_ctrl_;
};

/// Residual energy detector: d is the deviation of y (D1) or y^ (D2) from the
/// noise-free nominal trajectory; alarm once the cumulative energy exceeds
/// the threshold.
DetectorReport detect(const LoopTrace& trace, Placement placement, double threshold);

/// Sum of ||z_k||^2 for k in [0, horizon] (inclusive; clamped to the trace).
double performance_energy(const LoopTrace& trace, int horizon = -1);

/// Window-doubling divergence test on the performance energy.
bool energy_divergent(const LoopTrace& trace);

/// CSV export, one row per step, 17 significant digits:
/// k,r,u,a,u_tilde,e,y,v,l,w,y_hat,d,z_energy_cum
void write_trace_csv(const LoopTrace& trace, const std::string& path);

}  // namespace dynmask::loop
