#include "dynmask/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "dynmask/errors.hpp"
#include "dynmask/rng.hpp"
#include "json.hpp"

namespace dynmask::adversary {

using lti::Complex;
using lti::Mat;

DisclosureSet eavesdrop(const loop::LoopTrace& trace) {
  DisclosureSet set;
  set.u = trace.u;
  set.w = trace.w;
  return set;
}

namespace {

// theta = [f_1..f_nf, b_0..b_nb] for w_k = -sum f_i w_{k-i} + sum b_j u_{k-d-j},
// d = nf - nb the relative degree.
TransferFunction theta_to_tf(const Vec& theta, const ModelStructure& s) {
  Vec den(s.nf + 1);
  den(0) = 1.0;
  den.tail(s.nf) = theta.head(s.nf);
  Vec num = theta.tail(s.nb + 1);
  return TransferFunction::make(num, den);
}

// Simulation error of the output-error predictor B/F against the data.
std::vector<double> oe_prediction(const Vec& theta, const ModelStructure& s,
                                  const std::vector<double>& u) {
  const TransferFunction g = theta_to_tf(theta, s);
  const StateSpace ss = lti::tf_to_ss(g);
  return lti::simulate_siso(ss, u, Vec::Zero(ss.n()));
}

double oe_cost(const std::vector<double>& w, const std::vector<double>& pred) {
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double e = w[k] - pred[k];
    acc += e * e;
  }
  return acc;
}

bool poly_is_stable(const Vec& monic) {
  for (const Complex& r : lti::poly_roots(monic))
    if (std::abs(r) >= 1.0 - 1e-10) return false;
  return true;
}

// Reflects roots outside the unit circle to their stable mirror; used only
// to start Gauss-Newton from a simulable point.
Vec stabilize_monic(const Vec& monic) {
  auto roots = lti::poly_roots(monic);
  bool changed = false;
  for (auto& r : roots) {
    const double m = std::abs(r);
    if (m >= 1.0) {
      r *= 0.98 / m;
      changed = true;
    }
  }
  if (!changed) return monic;
  return lti::poly_from_roots(roots);
}

EstimationResult arx_least_squares(const DisclosureSet& data, const ModelStructure& s) {
  const int nf = s.nf, nb = s.nb;
  const int d = nf - nb;
  const int np = nf + nb + 1;
  const int N = static_cast<int>(data.size());
  const int rows = N - nf;
  Mat phi(rows, np);
  Vec rhs(rows);
  for (int k = nf; k < N; ++k) {
    const int row = k - nf;
    for (int i = 1; i <= nf; ++i) phi(row, i - 1) = -data.w[k - i];
    for (int j = 0; j <= nb; ++j) phi(row, nf + j) = data.u[k - d - j];
    rhs(row) = data.w[k];
  }
  Eigen::JacobiSVD<Mat> svd(phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(0) <= 0.0 || sv(sv.size() - 1) <= 1e-10 * sv(0))
    throw NumericError("input not persistently exciting");
  EstimationResult res;
  res.theta = svd.solve(rhs);
  res.model = theta_to_tf(res.theta, s);
  res.cost = (phi * res.theta - rhs).squaredNorm();
  res.iterations = 0;
  res.converged = true;
  res.sample_count = N;
  res.cost_trace = {res.cost};
  return res;
}

// Damped Gauss-Newton on the simulation error. The Jacobian columns are
// linear filterings of u and the current prediction:
//   d pred / d b_j = [z^(nb-j) / F] u,   d pred / d f_i = -[z^(nf-i) / F] pred.
EstimationResult output_error_pem(const DisclosureSet& data, const ModelStructure& s,
                                  const Vec& theta_init, int max_iter = 200) {
  const int nf = s.nf, nb = s.nb;
  const int np = nf + nb + 1;
  const int N = static_cast<int>(data.size());

  EstimationResult res;
  res.sample_count = N;
  Vec theta = theta_init;
  {  // the initializer must be simulable
    Vec den(nf + 1);
    den(0) = 1.0;
    den.tail(nf) = theta.head(nf);
    const Vec stabilized = stabilize_monic(den);
    theta.head(nf) = stabilized.tail(nf);
  }

  std::vector<double> pred = oe_prediction(theta, s, data.u);
  double cost = oe_cost(data.w, pred);
  res.cost_trace.push_back(cost);

  int iter = 0;
  bool converged = false;
  for (; iter < max_iter; ++iter) {
    Vec den(nf + 1);
    den(0) = 1.0;
    den.tail(nf) = theta.head(nf);

    Mat jac(N, np);
    for (int i = 1; i <= nf; ++i) {
      Vec mono = Vec::Zero(nf - i + 1);
      mono(0) = 1.0;
      const StateSpace filt = lti::tf_to_ss(TransferFunction::make(mono, den));
      const auto col = lti::simulate_siso(filt, pred, Vec::Zero(filt.n()));
      for (int k = 0; k < N; ++k) jac(k, i - 1) = -col[k];
    }
    for (int j = 0; j <= nb; ++j) {
      Vec mono = Vec::Zero(nb - j + 1);
      mono(0) = 1.0;
      const StateSpace filt = lti::tf_to_ss(TransferFunction::make(mono, den));
      const auto col = lti::simulate_siso(filt, data.u, Vec::Zero(filt.n()));
      for (int k = 0; k < N; ++k) jac(k, nf + j) = col[k];
    }
    Vec residual(N);
    for (int k = 0; k < N; ++k) residual(k) = data.w[k] - pred[k];

    Eigen::ColPivHouseholderQR<Mat> qr(jac);
    const Vec step_full = qr.solve(residual);
    if (!step_full.allFinite()) break;

    double alpha = 1.0;
    bool accepted = false;
    for (int half = 0; half < 12; ++half, alpha *= 0.5) {
      const Vec cand = theta + alpha * step_full;
      Vec cden(nf + 1);
      cden(0) = 1.0;
      cden.tail(nf) = cand.head(nf);
      if (!poly_is_stable(cden)) continue;
      const auto cand_pred = oe_prediction(cand, s, data.u);
      const double cand_cost = oe_cost(data.w, cand_pred);
      if (std::isfinite(cand_cost) && cand_cost < cost) {
        theta = cand;
        pred = cand_pred;
        const double rel_drop = (cost - cand_cost) / std::max(cost, 1e-300);
        cost = cand_cost;
        res.cost_trace.push_back(cost);
        accepted = true;
        if (rel_drop < 1e-12 || step_full.norm() < 1e-12 * (1.0 + theta.norm()))
          converged = true;
        break;
      }
    }
    if (!accepted) {
      // no descent direction left at the smallest damping: treat as converged
      converged = true;
      break;
    }
    if (converged) break;
  }

  res.theta = theta;
  res.model = theta_to_tf(theta, s);
  res.cost = cost;
  res.iterations = iter + 1;
  res.converged = converged || iter < max_iter;
  if (iter >= max_iter) res.converged = false;
  return res;
}

}  // namespace

EstimationResult identify(const DisclosureSet& data, const ModelStructure& s) {
  if (s.nb < 1 || s.nf < s.nb) throw std::invalid_argument("model structure requires 1 <= nb <= nf");
  const int N = static_cast<int>(data.size());
  if (data.u.size() != data.w.size())
    throw std::invalid_argument("disclosure set streams have unequal length");
  if (N < 10 * (s.nb + s.nf)) throw NumericError("too few samples for the requested structure");

  EstimationResult arx = arx_least_squares(data, s);
  if (s.estimator == EstimatorKind::ArxLeastSquares) return arx;
  return output_error_pem(data, s, arx.theta);
}

void write_estimation_json(const EstimationResult& est, const std::string& path) {
  nlohmann::json j;
  j["theta"] = std::vector<double>(est.theta.data(), est.theta.data() + est.theta.size());
  j["numerator"] =
      std::vector<double>(est.model.num.data(), est.model.num.data() + est.model.num.size());
  j["denominator"] =
      std::vector<double>(est.model.den.data(), est.model.den.data() + est.model.den.size());
  auto roots_json = [](const std::vector<Complex>& roots) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : roots) arr.push_back({{"re", r.real()}, {"im", r.imag()}});
    return arr;
  };
  j["numerator_roots"] = roots_json(lti::poly_roots(est.model.num));
  j["denominator_roots"] = roots_json(lti::poly_roots(est.model.den));
  j["cost"] = est.cost;
  j["iterations"] = est.iterations;
  j["converged"] = est.converged;
  j["sample_count"] = est.sample_count;
  j["cost_trace"] = est.cost_trace;
  std::ofstream out(path);
  if (!out) throw NumericError("cannot open estimation output file: " + path);
  out << j.dump(2) << '\n';
}

std::vector<double> AttackPlan::sequence(int length) const {
  std::vector<double> a(length, 0.0);
  const Complex g0 = zero.g(0);
  Complex pow(1.0, 0.0);
  for (int k = start; k < length; ++k) {
    const Complex val = g0 * pow;
    a[k] = amplitude * (conjugate_pair ? 2.0 * val.real() : val.real());
    pow *= zero.beta;
  }
  return a;
}

AttackPlan synthesize_zda(const StateSpace& model, ZeroPolicy policy, double amplitude,
                          int start, int index) {
  const auto zeros = lti::invariant_zeros(model);
  if (zeros.empty()) throw NumericError("model has no invariant zeros");

  std::size_t pick = 0;
  switch (policy) {
    case ZeroPolicy::MaxModulus:
      for (std::size_t i = 1; i < zeros.size(); ++i)
        if (std::abs(zeros[i].beta) > std::abs(zeros[pick].beta)) pick = i;
      break;
    case ZeroPolicy::MinModulus:
      for (std::size_t i = 1; i < zeros.size(); ++i)
        if (std::abs(zeros[i].beta) < std::abs(zeros[pick].beta)) pick = i;
      break;
    case ZeroPolicy::Index:
      if (index < 0 || index >= static_cast<int>(zeros.size()))
        throw std::invalid_argument("zero index out of range");
      pick = static_cast<std::size_t>(index);
      break;
  }
  const lti::ZeroData& zd = zeros[pick];

  if (model.n() > 0) {
    Eigen::EigenSolver<Mat> es(model.A, false);
    for (int i = 0; i < es.eigenvalues().size(); ++i)
      if (std::abs(es.eigenvalues()(i) - zd.beta) < 1e-8)
        throw NumericError("pole-zero cancellation: zero direction ill-conditioned");
  }

  AttackPlan plan;
  plan.zero = zd;
  plan.amplitude = amplitude;
  plan.start = start;
  const bool real_zero = std::abs(zd.beta.imag()) <= 1e-10 * (1.0 + std::abs(zd.beta.real()));
  plan.conjugate_pair = !real_zero;
  plan.initial_state = Vec(model.n());
  for (int i = 0; i < model.n(); ++i) {
    plan.initial_state(i) =
        amplitude * (plan.conjugate_pair ? 2.0 * zd.x0(i).real() : zd.x0(i).real());
  }
  return plan;
}

loop::LoopSystems make_loop_systems(const ExperimentSetup& setup) {
  loop::LoopSystems sys;
  sys.plant = setup.plant;
  sys.noise = setup.noise;
  sys.cipher = setup.cipher;
  sys.controller = setup.controller;
  return sys;
}

double calibrate_threshold(const ExperimentSetup& setup) {
  const loop::LoopSystems sys = make_loop_systems(setup);
  std::vector<double> energies;
  energies.reserve(setup.calibration_runs);
  const std::vector<double> zeros_seq(setup.n_attack, 0.0);
  for (int run = 0; run < setup.calibration_runs; ++run) {
    loop::LoopEngine engine(sys, 0.0, setup.placement);
    const auto e = rng::white_noise(
        rng::derive(setup.seed, rng::streams::kCalibration + 31ull * run), setup.n_attack,
        setup.noise_variance);
    const loop::LoopTrace t = engine.run(zeros_seq, zeros_seq, e);
    const auto rep = loop::detect(t, setup.placement, std::numeric_limits<double>::infinity());
    energies.push_back(rep.cumulative_energy.empty() ? 0.0 : rep.cumulative_energy.back());
  }
  std::sort(energies.begin(), energies.end());
  const double q = setup.calibration_quantile;
  const std::size_t idx = std::min(
      energies.size() - 1,
      static_cast<std::size_t>(std::ceil(q * static_cast<double>(energies.size())) - 1));
  return energies[idx];
}

double resolve_threshold(const ExperimentSetup& setup) {
  if (setup.threshold) return *setup.threshold;
  if (setup.noise_variance > 0.0) return calibrate_threshold(setup);
  return 0.5;
}

EstimationResult run_identification(const ExperimentSetup& setup) {
  loop::LoopEngine engine(make_loop_systems(setup), resolve_threshold(setup), setup.placement);
  const auto r = rng::white_noise(rng::derive(setup.seed, rng::streams::kExcitation), setup.n_id,
                                  setup.excitation_variance);
  const auto e = rng::white_noise(rng::derive(setup.seed, rng::streams::kBenignNoise), setup.n_id,
                                  setup.noise_variance);
  const std::vector<double> a(setup.n_id, 0.0);
  const loop::LoopTrace benign = engine.run(r, a, e);
  return identify(eavesdrop(benign), setup.structure);
}

AttackExperimentResult run_attack_experiment(const ExperimentSetup& setup) {
  AttackExperimentResult out;
  out.threshold = resolve_threshold(setup);
  const loop::LoopSystems sys = make_loop_systems(setup);

  {  // benign phase with white-noise excitation
    loop::LoopEngine engine(sys, out.threshold, setup.placement);
    const auto r = rng::white_noise(rng::derive(setup.seed, rng::streams::kExcitation),
                                    setup.n_id, setup.excitation_variance);
    const auto e = rng::white_noise(rng::derive(setup.seed, rng::streams::kBenignNoise),
                                    setup.n_id, setup.noise_variance);
    const std::vector<double> a(setup.n_id, 0.0);
    out.benign = engine.run(r, a, e);
  }

  out.estimation = identify(eavesdrop(out.benign), setup.structure);
  const StateSpace identified = lti::tf_to_ss(out.estimation.model);
  out.plan = synthesize_zda(identified, setup.policy, setup.amplitude, setup.attack_start,
                            setup.zero_index);

  {  // attack phase, reference grounded
    loop::LoopEngine engine(sys, out.threshold, setup.placement);
    const bool mask_off = lti::tf_equal(setup.cipher, setup.plant);
    if (out.plan.initial_state.size() == engine.cipher_order()) {
      engine.set_initial_state(loop::Block::Cipher, out.plan.initial_state);
      out.stealth_init_applied = true;
    }
    if (mask_off && out.plan.initial_state.size() == engine.plant_order()) {
      // identical systems driven by the same input hold identical states
      engine.set_initial_state(loop::Block::Plant, out.plan.initial_state);
      engine.set_initial_state(loop::Block::Twin, out.plan.initial_state);
    }
    const std::vector<double> r(setup.n_attack, 0.0);
    const auto e = rng::white_noise(rng::derive(setup.seed, rng::streams::kAttackNoise),
                                    setup.n_attack, setup.noise_variance);
    const auto a = out.plan.sequence(setup.n_attack);
    out.attacked = engine.run(r, a, e);
  }

  out.detector = loop::detect(out.attacked, setup.placement, out.threshold);
  out.benign_energy = loop::performance_energy(out.benign);
  out.attacked_energy = loop::performance_energy(out.attacked);
  out.divergent = loop::energy_divergent(out.attacked);
  return out;
}

}  // namespace dynmask::adversary
