#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "dynmask/adversary.hpp"
#include "dynmask/errors.hpp"
#include "dynmask/rng.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace dynmask;
using adversary::DisclosureSet;
using adversary::EstimatorKind;
using adversary::ExperimentSetup;
using adversary::ModelStructure;
using adversary::ZeroPolicy;
using lti::Complex;
using lti::StateSpace;
using lti::TransferFunction;
using lti::Vec;

namespace {

Vec coeffs(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TransferFunction example_plant() {
  return TransferFunction::make(coeffs({1.0, -1.1}), coeffs({1.0, -0.7, 0.1}));
}

TransferFunction example_cipher(double delta) {
  return TransferFunction::make(coeffs({1.0, -(1.1 + delta)}), coeffs({1.0, -0.7, 0.1}));
}

ExperimentSetup example_setup(double delta, double noise_variance = 0.0) {
  ExperimentSetup s;
  s.plant = example_plant();
  s.cipher = example_cipher(delta);
  s.controller = loop::design_output_feedback(s.plant, 0.6);
  s.noise_variance = noise_variance;
  s.n_id = 2000;
  s.n_attack = 100;
  s.structure.nb = 1;
  s.structure.nf = 2;
  s.structure.estimator =
      noise_variance > 0.0 ? EstimatorKind::OutputErrorPem : EstimatorKind::ArxLeastSquares;
  s.seed = 42;
  return s;
}

loop::LoopTrace benign_trace(const ExperimentSetup& s) {
  loop::LoopEngine engine(adversary::make_loop_systems(s), 0.5, s.placement);
  const auto r = rng::white_noise(rng::derive(s.seed, rng::streams::kExcitation), s.n_id,
                                  s.excitation_variance);
  const auto e = rng::white_noise(rng::derive(s.seed, rng::streams::kBenignNoise), s.n_id,
                                  s.noise_variance);
  return engine.run(r, std::vector<double>(s.n_id, 0.0), e);
}

double dominant_zero_re(const TransferFunction& tf) {
  const auto roots = lti::poly_roots(tf.num);
  REQUIRE(!roots.empty());
  Complex best = roots[0];
  for (const auto& r : roots)
    if (std::abs(r) > std::abs(best)) best = r;
  REQUIRE(std::abs(best.imag()) < 1e-6);
  return best.real();
}

// Synthetic open-loop ARX data w_k = -f1 w_{k-1} - f2 w_{k-2} + b0 u_{k-1}
// + b1 u_{k-2} + e_k, the estimator's own model class.
DisclosureSet synthetic_arx(const Vec& theta, int n, std::uint64_t seed, double noise_var) {
  DisclosureSet data;
  const auto u = rng::white_noise(rng::derive(seed, 1), n, 1.0);
  const auto e = rng::white_noise(rng::derive(seed, 2), n, noise_var);
  std::vector<double> w(n, 0.0);
  for (int k = 0; k < n; ++k) {
    double acc = e[k];
    if (k >= 1) acc += -theta(0) * w[k - 1] + theta(2) * u[k - 1];
    if (k >= 2) acc += -theta(1) * w[k - 2] + theta(3) * u[k - 2];
    w[k] = acc;
    data.append(u[k], w[k]);
  }
  return data;
}

}  // namespace

TEST_CASE("eavesdrop: a zero trace discloses only zeros") {
  ExperimentSetup s = example_setup(0.2);
  loop::LoopEngine engine(adversary::make_loop_systems(s), 0.5);
  const std::vector<double> z(50, 0.0);
  const auto set = adversary::eavesdrop(engine.run(z, z, z));
  CHECK(set.size() == 50);
  for (std::size_t k = 0; k < set.size(); ++k) {
    CHECK(set.u[k] == 0.0);
    CHECK(set.w[k] == 0.0);
  }
}

TEST_CASE("eavesdrop: the disclosed channel tracks the cipher, not the plant") {
  ExperimentSetup s = example_setup(0.2);
  s.n_id = 1000;
  const auto trace = benign_trace(s);
  const auto set = adversary::eavesdrop(trace);
  CHECK(set.size() == 1000);
  const auto via_cipher = oracles::difference_filter(s.cipher.num, s.cipher.den, set.u);
  const auto via_plant = oracles::difference_filter(s.plant.num, s.plant.den, set.u);
  double err_cipher = 0.0, err_plant = 0.0;
  for (std::size_t k = 0; k < set.size(); ++k) {
    err_cipher = std::max(err_cipher, std::abs(set.w[k] - via_cipher[k]));
    err_plant = std::max(err_plant, std::abs(set.w[k] - via_plant[k]));
  }
  CHECK(err_cipher <= 1e-10);
  CHECK(err_plant > 1e-2);
}

TEST_CASE("identify: noise-free masked data yields the cipher's zero and poles") {
  ExperimentSetup s = example_setup(0.2);
  const auto est = adversary::identify(adversary::eavesdrop(benign_trace(s)), s.structure);
  CHECK(est.converged);
  CHECK(std::abs(dominant_zero_re(est.model) - 1.3) <= 1e-3);
  CHECK(oracles::root_set_distance(lti::poly_roots(est.model.den),
                                   {Complex(0.2, 0.0), Complex(0.5, 0.0)}) <= 1e-3);
}

TEST_CASE("identify: an ARX system is recovered exactly from its own data") {
  Vec theta(4);
  theta << -0.7, 0.1, 1.0, -1.1;
  const auto data = synthetic_arx(theta, 600, 9, 0.0);
  ModelStructure st;
  st.nb = 1;
  st.nf = 2;
  st.estimator = EstimatorKind::ArxLeastSquares;
  const auto est = adversary::identify(data, st);
  CHECK((est.theta - theta).norm() <= 1e-6);
}

TEST_CASE("identify: with the mask off the adversary learns the true plant") {
  ExperimentSetup s = example_setup(0.0);
  s.cipher = s.plant;
  const auto est = adversary::identify(adversary::eavesdrop(benign_trace(s)), s.structure);
  CHECK(std::abs(dominant_zero_re(est.model) - 1.1) <= 1e-3);
}

TEST_CASE("identify: output-error PEM recovers the cipher from noisy closed-loop data") {
  ExperimentSetup s = example_setup(0.2, 0.01);
  s.n_id = 4000;
  const auto est = adversary::identify(adversary::eavesdrop(benign_trace(s)), s.structure);
  CHECK(est.converged);
  CHECK(std::abs(dominant_zero_re(est.model) - 1.3) <= 0.05);
  for (std::size_t i = 1; i < est.cost_trace.size(); ++i)
    CHECK(est.cost_trace[i] <= est.cost_trace[i - 1]);
}

TEST_CASE("identify: an unexciting input is rejected") {
  DisclosureSet flat;
  for (int k = 0; k < 500; ++k) flat.append(1.0, 0.5);  // constant channel
  ModelStructure st;
  st.nb = 1;
  st.nf = 2;
  CHECK_THROWS_WITH_AS(adversary::identify(flat, st), "input not persistently exciting",
                       NumericError);
}

TEST_CASE("identify: too short a record is rejected") {
  DisclosureSet tiny;
  for (int k = 0; k < 20; ++k) tiny.append(k, k);
  ModelStructure st;
  st.nb = 1;
  st.nf = 2;
  CHECK_THROWS_AS(adversary::identify(tiny, st), NumericError);
}

TEST_CASE("identification bias: the mask shifts the learned zero by delta") {
  for (double delta : {0.1, 0.2, 0.5}) {
    ExperimentSetup s = example_setup(delta);
    const auto est = adversary::identify(adversary::eavesdrop(benign_trace(s)), s.structure);
    const double zhat = dominant_zero_re(est.model);
    CHECK(std::abs(zhat - (1.1 + delta)) <= 1e-3);
    CHECK(std::abs(zhat - 1.1) >= 0.9 * delta);
  }
}

TEST_CASE("estimator consistency: ARX error median shrinks as the record doubles") {
  Vec theta(4);
  theta << -0.7, 0.1, 1.0, -1.1;
  ModelStructure st;
  st.nb = 1;
  st.nf = 2;
  st.estimator = EstimatorKind::ArxLeastSquares;
  std::vector<double> medians;
  for (int n : {500, 1000, 2000, 4000}) {
    std::vector<double> errs;
    for (int seed = 0; seed < 20; ++seed) {
      const auto est =
          adversary::identify(synthetic_arx(theta, n, 100 + seed, 0.04), st);
      errs.push_back((est.theta - theta).norm());
    }
    std::sort(errs.begin(), errs.end());
    medians.push_back(0.5 * (errs[9] + errs[10]));
  }
  for (std::size_t i = 1; i < medians.size(); ++i) CHECK(medians[i] < medians[i - 1]);
}

TEST_CASE("synthesize_zda: the identified cipher gives the beta 1.3 attack") {
  ExperimentSetup s = example_setup(0.2);
  const auto est = adversary::identify(adversary::eavesdrop(benign_trace(s)), s.structure);
  const auto plan = adversary::synthesize_zda(lti::tf_to_ss(est.model),
                                              ZeroPolicy::MaxModulus, 1e-3, 0);
  CHECK(std::abs(plan.zero.beta - Complex(1.3, 0.0)) <= 1e-6);
  const auto a = plan.sequence(10);
  const double g0 = plan.zero.g(0).real();
  for (int k = 0; k < 10; ++k)
    CHECK(a[k] == doctest::Approx(1e-3 * g0 * std::pow(1.3, k)).epsilon(1e-9));
}

TEST_CASE("synthesize_zda: a plan nulls its own source by definition") {
  const StateSpace ss = lti::tf_to_ss(example_plant());
  const auto plan = adversary::synthesize_zda(ss, ZeroPolicy::MaxModulus, 1e-3, 0);
  const auto y = lti::simulate_siso(ss, plan.sequence(60), plan.initial_state);
  double worst = 0.0;
  for (double v : y) worst = std::max(worst, std::abs(v));
  CHECK(worst <= 1e-7);
}

TEST_CASE("synthesize_zda: the min-modulus policy picks the decaying zero") {
  const TransferFunction tf = TransferFunction::make(
      lti::poly_mul(coeffs({1.0, -0.4}), coeffs({1.0, -1.5})),
      lti::poly_mul(coeffs({1.0, -0.1}), lti::poly_mul(coeffs({1.0, -0.3}), coeffs({1.0, -0.6}))));
  const StateSpace ss = lti::tf_to_ss(tf);
  const auto plan = adversary::synthesize_zda(ss, ZeroPolicy::MinModulus, 1e-2, 0);
  CHECK(std::abs(plan.zero.beta - Complex(0.4, 0.0)) <= 1e-9);
  const int N = 80;
  const auto a = plan.sequence(N);
  CHECK(std::abs(a[N - 1]) < std::abs(a[0]));  // decaying attack
  const auto y = lti::simulate_siso(ss, a, plan.initial_state);
  double worst = 0.0;
  for (double v : y) worst = std::max(worst, std::abs(v));
  CHECK(worst <= 1e-7);
}

TEST_CASE("synthesize_zda: plans null randomly drawn source models") {
  rng::SplitMix64 gen(606);
  const int N = 50;
  int tested = 0;
  for (int trial = 0; trial < 15 && tested < 8; ++trial) {
    const int order = 2 + static_cast<int>(gen.next_u64() % 4);
    const TransferFunction tf = oracles::random_siso(gen, order, order - 1);
    const StateSpace ss = lti::tf_to_ss(tf);
    adversary::AttackPlan plan;
    try {
      plan = adversary::synthesize_zda(ss, ZeroPolicy::MaxModulus, 1e-3, 0);
    } catch (const NumericError&) {
      continue;
    }
    ++tested;
    const auto y = lti::simulate_siso(ss, plan.sequence(N), plan.initial_state);
    double worst = 0.0;
    for (double v : y) worst = std::max(worst, std::abs(v));
    CHECK(worst <= 1e-7 * std::max(1.0, std::pow(std::abs(plan.zero.beta), N)));
  }
  CHECK(tested >= 8);
}

TEST_CASE("synthesize_zda: a delayed start keeps the attack silent before k0") {
  const StateSpace ss = lti::tf_to_ss(example_plant());
  const auto plan = adversary::synthesize_zda(ss, ZeroPolicy::MaxModulus, 1e-3, 7);
  const auto a = plan.sequence(20);
  for (int k = 0; k < 7; ++k) CHECK(a[k] == 0.0);
  CHECK(a[7] != 0.0);
}

TEST_CASE("synthesize_zda: a zero-free model is rejected") {
  const StateSpace ss = lti::tf_to_ss(TransferFunction::make(coeffs({1.0}), coeffs({1.0, -0.5})));
  CHECK_THROWS_WITH_AS(adversary::synthesize_zda(ss, ZeroPolicy::MaxModulus, 1.0, 0),
                       "model has no invariant zeros", NumericError);
}

TEST_CASE("synthesize_zda: near pole-zero cancellations are rejected") {
  const TransferFunction tf = TransferFunction::make(
      lti::poly_mul(coeffs({1.0, -0.500000002}), coeffs({1.0, -1.4})),
      lti::poly_mul(coeffs({1.0, -0.5}), lti::poly_mul(coeffs({1.0, -0.2}), coeffs({1.0, -0.7}))));
  const StateSpace ss = lti::tf_to_ss(tf);
  // rejected either as an ill-conditioned direction or as a non-minimal realization
  CHECK_THROWS_AS(adversary::synthesize_zda(ss, ZeroPolicy::MinModulus, 1.0, 0), NumericError);
}

TEST_CASE("run_attack_experiment: masked pipeline detects and diverges") {
  ExperimentSetup s = example_setup(0.2);
  const auto res = adversary::run_attack_experiment(s);
  CHECK(res.estimation.converged);
  CHECK(std::abs(dominant_zero_re(res.estimation.model) - 1.3) <= 1e-3);
  CHECK(res.detector.alarm);
  CHECK(*res.detector.first_alarm_step < 80);
  CHECK(res.divergent);
  CHECK(res.stealth_init_applied);
}

TEST_CASE("run_attack_experiment: a stable-zero cipher bounds the damage") {
  ExperimentSetup s = example_setup(0.2);
  s.cipher = TransferFunction::make(coeffs({1.0, -0.8}), coeffs({1.0, -0.7, 0.1}));
  s.n_attack = 200;
  const auto res = adversary::run_attack_experiment(s);
  CHECK_FALSE(res.detector.alarm);
  CHECK_FALSE(res.divergent);
  const int k_star = static_cast<int>(std::ceil(std::log(1e-8) / std::log(0.8)));
  for (int k = k_star + 1; k < 200; ++k) CHECK(res.attacked.z_sq[k] < 1e-12);
}

TEST_CASE("run_attack_experiment: the unmasked baseline is stealthy and unbounded") {
  ExperimentSetup s = example_setup(0.0);
  s.cipher = s.plant;
  const auto res = adversary::run_attack_experiment(s);
  CHECK(std::abs(dominant_zero_re(res.estimation.model) - 1.1) <= 1e-3);
  CHECK_FALSE(res.detector.alarm);
  CHECK(res.detector.cumulative_energy.back() <= 1e-10);
  CHECK(res.divergent);
  // monotone state growth at the zero's own rate
  const auto& zsq = res.attacked.z_sq;
  const double rate = 1.1 * 1.1;
  for (int k = 40; k + 1 < static_cast<int>(zsq.size()); ++k)
    CHECK(zsq[k + 1] / zsq[k] == doctest::Approx(rate).epsilon(0.05));
}

TEST_CASE("calibrated threshold dominates the no-attack residual energies") {
  ExperimentSetup s = example_setup(0.2, 0.01);
  s.calibration_runs = 50;
  const double eps = adversary::calibrate_threshold(s);
  CHECK(eps > 0.0);
  // the 0.999 quantile of 50 benign energies is their maximum
  loop::LoopEngine engine(adversary::make_loop_systems(s), eps, s.placement);
  const std::vector<double> z(s.n_attack, 0.0);
  for (int run = 0; run < 50; ++run) {
    engine.reset();
    const auto e = rng::white_noise(rng::derive(s.seed, rng::streams::kCalibration + 31ull * run),
                                    s.n_attack, s.noise_variance);
    const auto rep = loop::detect(engine.run(z, z, e), s.placement, eps);
    CHECK_FALSE(rep.alarm);
  }
}

TEST_CASE("resolve_threshold: explicit, default and calibrated paths") {
  ExperimentSetup s = example_setup(0.2);
  CHECK(adversary::resolve_threshold(s) == 0.5);
  s.threshold = 2.5;
  CHECK(adversary::resolve_threshold(s) == 2.5);
  s.threshold.reset();
  s.noise_variance = 0.01;
  s.calibration_runs = 20;
  CHECK(adversary::resolve_threshold(s) > 0.0);
}

TEST_CASE("estimation JSON export carries the roots and the cost trace") {
  ExperimentSetup s = example_setup(0.2);
  const auto est = adversary::identify(adversary::eavesdrop(benign_trace(s)), s.structure);
  const std::string path = "test_estimation_tmp.json";
  adversary::write_estimation_json(est, path);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  CHECK(j["theta"].size() == 4);
  CHECK(j["numerator_roots"].size() == 1);
  CHECK(j["numerator_roots"][0]["re"].get<double>() == doctest::Approx(1.3).epsilon(1e-6));
  CHECK(j["denominator_roots"].size() == 2);
  CHECK(j["cost_trace"].size() >= 1);
  CHECK(j["converged"].get<bool>());
  in.close();
  std::remove(path.c_str());
}
