#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <fstream>

#include "doctest.h"
#include "dynmask/errors.hpp"
#include "dynmask/privacy.hpp"
#include "dynmask/rng.hpp"
#include "oracles.hpp"

using namespace dynmask;
using adversary::EstimatorKind;
using adversary::ExperimentSetup;
using lti::Complex;
using lti::TransferFunction;
using lti::Vec;
using privacy::BiasVarianceCurve;

namespace {

constexpr double kPi = 3.14159265358979323846;

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
  s.structure.nb = 1;
  s.structure.nf = 2;
  s.structure.estimator =
      noise_variance > 0.0 ? EstimatorKind::OutputErrorPem : EstimatorKind::ArxLeastSquares;
  s.seed = 42;
  return s;
}

}  // namespace

TEST_CASE("empirical_bias_variance: noise-free replicates collapse onto the cipher") {
  const ExperimentSetup s = example_setup(0.2);
  const Vec grid = lti::default_grid(128);
  const auto curve = privacy::empirical_bias_variance(s, 2000, 4, grid);
  CHECK(curve.replicates == 4);
  CHECK(curve.failures == 0);
  CHECK(curve.variance.maxCoeff() <= 1e-12);
  CHECK(curve.bias.cwiseAbs().maxCoeff() <= 1e-6);
  // and the mean lands at the cipher's offset from the plant
  const auto fg = lti::frequency_response(s.plant, grid).value;
  const auto fs = lti::frequency_response(s.cipher, grid).value;
  CHECK(((curve.mean - fg) - (fs - fg)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("empirical_bias_variance: under noise the bias stays an order below the mask gap") {
  const ExperimentSetup s = example_setup(0.2, 0.01);
  const Vec grid = lti::default_grid(128);
  const auto curve = privacy::empirical_bias_variance(s, 4000, 50, grid);
  const auto fg = lti::frequency_response(s.plant, grid).value;
  const auto fs = lti::frequency_response(s.cipher, grid).value;
  const double gap_sup = (fs - fg).cwiseAbs().maxCoeff();
  CHECK(curve.bias.cwiseAbs().maxCoeff() * 10.0 <= gap_sup);
}

TEST_CASE("empirical_bias_variance: the estimate's distance to the plant equals the mask gap") {
  const ExperimentSetup s = example_setup(0.2);
  Vec grid(3);
  grid << 0.1, kPi / 4.0, 2.0;
  const auto curve = privacy::empirical_bias_variance(s, 2000, 3, grid);
  const Complex g_pi4 = lti::frequency_response(s.plant, grid).value(1);
  const Complex s_pi4 = lti::frequency_response(s.cipher, grid).value(1);
  const double observed = std::abs(curve.mean(1) - g_pi4);
  const double expected = std::abs(s_pi4 - g_pi4);
  CHECK(observed == doctest::Approx(expected).epsilon(0.2));
}

TEST_CASE("empirical_bias_variance: degenerate setups are reported, not averaged over") {
  ExperimentSetup s = example_setup(0.2);
  s.n_id = 20;  // below the sample floor, every replicate fails
  CHECK_THROWS_WITH_AS(privacy::empirical_bias_variance(s, 20, 4, lti::default_grid(16)),
                       "unreliable Monte Carlo", NumericError);
  CHECK_THROWS_AS(privacy::empirical_bias_variance(s, 2000, 1, lti::default_grid(16)),
                  std::invalid_argument);
}

TEST_CASE("mse_lower_bound: with an unbiased-for-cipher estimator it is gap^2 plus variance") {
  const ExperimentSetup s = example_setup(0.2);
  const Vec grid = lti::default_grid(64);
  const auto curve = privacy::empirical_bias_variance(s, 2000, 3, grid);
  const auto bound = privacy::mse_lower_bound(curve, s.plant, s.cipher);
  const auto fg = lti::frequency_response(s.plant, grid).value;
  const auto fs = lti::frequency_response(s.cipher, grid).value;
  for (int k = 0; k < grid.size(); ++k) {
    const double gap_sq = std::norm(fs(k) - fg(k));
    CHECK(bound.bound(k) ==
          doctest::Approx(gap_sq + curve.variance(k)).epsilon(1e-6).scale(1.0));
  }
  CHECK(bound.satisfied);
}

TEST_CASE("mse_lower_bound: with the mask off the bound collapses to the variance") {
  ExperimentSetup s = example_setup(0.0);
  s.cipher = s.plant;
  const Vec grid = lti::default_grid(64);
  const auto curve = privacy::empirical_bias_variance(s, 2000, 3, grid);
  const auto bound = privacy::mse_lower_bound(curve, s.plant, s.cipher);
  for (int k = 0; k < grid.size(); ++k)
    CHECK(std::abs(bound.bound(k) - curve.variance(k)) <= 1e-10);
  CHECK(bound.empirical_mse.maxCoeff() <= 1e-12);
}

TEST_CASE("mse_lower_bound: the DC gap of the worked example is exactly 0.25") {
  const ExperimentSetup s = example_setup(0.2);
  const Vec grid = lti::default_grid(64);  // grid point 0 is omega = 0
  const auto fg = lti::frequency_response(s.plant, grid).value;
  const auto fs = lti::frequency_response(s.cipher, grid).value;
  CHECK(std::norm(fs(0) - fg(0)) == doctest::Approx(0.25).epsilon(1e-12));
  const auto curve = privacy::empirical_bias_variance(s, 2000, 3, grid);
  const auto bound = privacy::mse_lower_bound(curve, s.plant, s.cipher);
  CHECK(bound.empirical_mse(0) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("decomposition identity: empirical MSE against the cipher is bias^2 plus variance") {
  const ExperimentSetup s = example_setup(0.2, 0.01);
  const Vec grid = lti::default_grid(32);
  const auto curve = privacy::empirical_bias_variance(s, 1000, 10, grid);
  const auto fs = lti::frequency_response(s.cipher, grid).value;
  for (int k = 0; k < grid.size(); ++k) {
    double mse_vs_cipher = 0.0;
    for (int i = 0; i < curve.replicates; ++i)
      mse_vs_cipher += std::norm(curve.responses(i, k) - fs(k));
    mse_vs_cipher /= curve.replicates;
    const double recomposed = std::norm(curve.bias(k)) + curve.variance(k);
    CHECK(std::abs(mse_vs_cipher - recomposed) <= 1e-9 * std::max(1.0, mse_vs_cipher));
  }
}

TEST_CASE("delta_privacy_check: the 0.2 shift makes the zero 0.03-private") {
  const ExperimentSetup s = example_setup(0.2);
  const auto verdict = privacy::delta_privacy_check(privacy::zero_extractor(Complex(1.1, 0.0)),
                                                    "plant zero", Complex(1.1, 0.0), s, 0.03,
                                                    2000, 4);
  CHECK(verdict.mse == doctest::Approx(0.04).epsilon(1e-3));
  CHECK(verdict.is_private);
}

TEST_CASE("delta_privacy_check: without masking no privacy remains") {
  ExperimentSetup s = example_setup(0.0);
  s.cipher = s.plant;
  const auto verdict = privacy::delta_privacy_check(privacy::zero_extractor(Complex(1.1, 0.0)),
                                                    "plant zero", Complex(1.1, 0.0), s, 1e-9,
                                                    2000, 4);
  CHECK(verdict.mse <= 1e-10);
  CHECK_FALSE(verdict.is_private);
}

TEST_CASE("delta_privacy_check: an undefined property is an error, not a zero") {
  const ExperimentSetup s = example_setup(0.2);
  const privacy::PropertyExtractor never = [](const TransferFunction&) {
    return std::optional<Complex>{};
  };
  CHECK_THROWS_AS(
      privacy::delta_privacy_check(never, "nothing", Complex(0.0, 0.0), s, 0.1, 2000, 4),
      NumericError);
}

TEST_CASE("delta_privacy_check: a large shift keeps the MSE above 0.2 under noise") {
  const ExperimentSetup s = example_setup(0.5, 0.01);
  const auto verdict = privacy::delta_privacy_check(privacy::zero_extractor(Complex(1.1, 0.0)),
                                                    "plant zero", Complex(1.1, 0.0), s, 0.2,
                                                    4000, 50);
  CHECK(verdict.mse >= 0.2);
  CHECK(verdict.is_private);
}

TEST_CASE("believed_controller: the mask-off case is singular") {
  const ExperimentSetup s = example_setup(0.2);
  CHECK_THROWS_AS(privacy::believed_controller(s.plant, s.plant, s.controller), NumericError);
}

TEST_CASE("believed_controller: matches the empirical channel-to-input transfer estimate") {
  ExperimentSetup s = example_setup(0.2, 0.1);
  const TransferFunction believed =
      privacy::believed_controller(s.plant, s.cipher, s.controller);

  // Reference grounded: the controller side is a deterministic filter w -> u,
  // so the cross-over-auto spectral ratio averaged over independent noise
  // realizations estimates that map.
  Vec grid(64);
  for (int j = 0; j < 64; ++j) grid(j) = kPi * (j + 1) / 65.0;
  const int N = 8192;
  const std::vector<double> zeros_seq(N, 0.0);
  std::vector<Complex> cross(64, Complex(0.0, 0.0));
  std::vector<double> auto_w(64, 0.0);
  for (int run = 0; run < 10; ++run) {
    loop::LoopEngine engine(adversary::make_loop_systems(s), 0.5);
    const auto e = rng::white_noise(777 + run, N, s.noise_variance);
    const auto trace = engine.run(zeros_seq, zeros_seq, e);
    for (int j = 0; j < 64; ++j) {
      const Complex wj = oracles::dft_at(trace.w, grid(j));
      cross[j] += oracles::dft_at(trace.u, grid(j)) * std::conj(wj);
      auto_w[j] += std::norm(wj);
    }
  }
  const auto analytic = lti::frequency_response(believed, grid).value;
  for (int j = 0; j < 64; ++j) {
    const Complex emp = cross[j] / auto_w[j];
    CHECK(std::abs(emp - analytic(j)) <= 0.05 * std::abs(analytic(j)));
  }
}

TEST_CASE("believed_controller: swapping plant and cipher changes the answer") {
  const ExperimentSetup s = example_setup(0.2);
  const auto forward = privacy::believed_controller(s.plant, s.cipher, s.controller);
  const auto swapped = privacy::believed_controller(s.cipher, s.plant, s.controller);
  const Vec grid = lti::default_grid(64);
  const auto a = lti::frequency_response(forward, grid).value;
  const auto b = lti::frequency_response(swapped, grid).value;
  CHECK((a - b).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("input_spectrum_decomposition: sources switch their parts off") {
  ExperimentSetup s = example_setup(0.2);
  const Vec grid = lti::default_grid(64);
  s.noise_variance = 0.0;
  auto spec = privacy::input_spectrum_decomposition(s, grid);
  CHECK(spec.from_noise.maxCoeff() == 0.0);
  CHECK(spec.from_reference.minCoeff() >= 0.0);
  s.noise_variance = 0.05;
  s.excitation_variance = 0.0;
  spec = privacy::input_spectrum_decomposition(s, grid);
  CHECK(spec.from_reference.maxCoeff() == 0.0);
  CHECK(spec.from_noise.maxCoeff() > 0.0);
}

TEST_CASE("input_spectrum_decomposition: an unstable closed loop is rejected") {
  ExperimentSetup s = example_setup(0.2);
  s.controller.from_measurement =
      TransferFunction::make(coeffs({40.0}), coeffs({1.0}));  // destabilizing gain
  s.controller.from_reference = TransferFunction::unity();
  CHECK_THROWS_AS(privacy::input_spectrum_decomposition(s, lti::default_grid(64)), NumericError);
}

TEST_CASE("input_spectrum_decomposition: additivity is exact on the grid") {
  ExperimentSetup s = example_setup(0.2, 0.05);
  const Vec grid = lti::default_grid(128);
  const auto spec = privacy::input_spectrum_decomposition(s, grid);
  for (int k = 0; k < grid.size(); ++k) {
    CHECK(std::abs(spec.total(k) - spec.from_reference(k) - spec.from_noise(k)) <= 1e-9);
    CHECK(spec.from_reference(k) >= 0.0);
    CHECK(spec.from_noise(k) >= 0.0);
  }
}

TEST_CASE("input_spectrum_decomposition: the analytic spectrum matches averaged periodograms") {
  ExperimentSetup s = example_setup(0.2, 0.05);
  const int n_freq = 64;
  Vec grid(n_freq);
  for (int j = 0; j < n_freq; ++j) grid(j) = kPi * (j + 0.5) / n_freq;
  const auto spec = privacy::input_spectrum_decomposition(s, grid);

  const int runs = 100;
  const int N = 2048;
  std::vector<double> avg(n_freq, 0.0);
  const std::vector<double> zero_seq(N, 0.0);
  for (int run = 0; run < runs; ++run) {
    loop::LoopEngine engine(adversary::make_loop_systems(s), 0.5);
    const auto r = rng::white_noise(rng::derive(1000 + run, 1), N, s.excitation_variance);
    const auto e = rng::white_noise(rng::derive(1000 + run, 2), N, s.noise_variance);
    const auto trace = engine.run(r, zero_seq, e);
    for (int j = 0; j < n_freq; ++j)
      avg[j] += std::norm(oracles::dft_at(trace.u, grid(j))) / N;
  }
  for (auto& v : avg) v /= runs;

  const int bands = 8;
  const int per_band = n_freq / bands;
  for (int b = 0; b < bands; ++b) {
    double emp = 0.0, ana = 0.0;
    for (int j = b * per_band; j < (b + 1) * per_band; ++j) {
      emp += avg[j];
      ana += spec.total(j);
    }
    CHECK(emp == doctest::Approx(ana).epsilon(0.10));
  }
}

TEST_CASE("asymptotic_criterion: zero exactly at the cipher, positive at the plant") {
  const ExperimentSetup s = example_setup(0.2, 0.01);
  const Vec grid = lti::default_grid(512);
  privacy::ModelFamily family;
  family.model = [&](const Vec& theta) {
    return TransferFunction::make(coeffs({theta(0), theta(1)}), coeffs({1.0, -0.7, 0.1}));
  };
  Vec at_cipher(2);
  at_cipher << 1.0, -1.3;
  const auto crit_s = privacy::asymptotic_criterion(family, at_cipher, s, grid);
  CHECK(crit_s.v1 <= 1e-20);
  CHECK(crit_s.v2 == 0.0);
  CHECK_FALSE(crit_s.noise_model_mismatch);
  Vec at_plant(2);
  at_plant << 1.0, -1.1;
  const auto crit_g = privacy::asymptotic_criterion(family, at_plant, s, grid);
  CHECK(crit_g.v1 > 1e-4);
}

TEST_CASE("asymptotic_criterion: its numerical argmin brackets the PEM estimate") {
  ExperimentSetup s = example_setup(0.2, 0.01);
  s.n_id = 8000;
  const Vec grid = lti::default_grid(256);
  privacy::ModelFamily family;
  family.model = [&](const Vec& theta) {
    return TransferFunction::make(coeffs({theta(0), theta(1)}), coeffs({1.0, -0.7, 0.1}));
  };

  // coarse-to-fine grid search over the two numerator coefficients
  double b0 = 1.0, b1 = -1.25, radius = 0.5;
  for (int level = 0; level < 4; ++level) {
    double best = std::numeric_limits<double>::infinity();
    double best_b0 = b0, best_b1 = b1;
    for (int i = -10; i <= 10; ++i) {
      for (int j = -10; j <= 10; ++j) {
        Vec theta(2);
        theta << b0 + radius * i / 10.0, b1 + radius * j / 10.0;
        const double v = privacy::asymptotic_criterion(family, theta, s, grid).v1;
        if (v < best) {
          best = v;
          best_b0 = theta(0);
          best_b1 = theta(1);
        }
      }
    }
    b0 = best_b0;
    b1 = best_b1;
    radius /= 10.0;
  }

  const auto est = adversary::run_identification(s);
  Vec argmin(2);
  argmin << b0, b1;
  const auto f_min = lti::frequency_response(family.model(argmin), grid).value;
  const auto f_pem = lti::frequency_response(est.model, grid).value;
  for (int k = 0; k < grid.size(); ++k)
    CHECK(std::abs(f_min(k) - f_pem(k)) <= 0.01 * std::max(0.05, std::abs(f_pem(k))));
}

TEST_CASE("asymptotic_criterion: a mismatched unit noise model switches the second term on") {
  ExperimentSetup s = example_setup(0.2, 0.05);
  s.noise = TransferFunction::make(coeffs({1.0, 0.2}), coeffs({1.0, -0.3}));
  const Vec grid = lti::default_grid(512);
  privacy::ModelFamily family;
  family.model = [&](const Vec& theta) {
    return TransferFunction::make(coeffs({theta(0), theta(1)}), coeffs({1.0, -0.7, 0.1}));
  };
  family.noise = privacy::ModelFamily::NoiseModel::Unit;
  Vec theta(2);
  theta << 1.0, -1.3;
  const auto crit = privacy::asymptotic_criterion(family, theta, s, grid);
  CHECK(crit.noise_model_mismatch);
  CHECK(crit.v2 > 0.0);
  CHECK(crit.v1 > 0.0);  // the distortion term keeps v1 off its zero

  family.noise = privacy::ModelFamily::NoiseModel::True;
  const auto crit_true = privacy::asymptotic_criterion(family, theta, s, grid);
  CHECK_FALSE(crit_true.noise_model_mismatch);
  CHECK(crit_true.v2 == 0.0);
  CHECK(crit_true.v1 <= 1e-20);
}

TEST_CASE("asymptotic_criterion: coarse grids are rejected") {
  const ExperimentSetup s = example_setup(0.2);
  privacy::ModelFamily family;
  family.model = [&](const Vec&) { return example_cipher(0.2); };
  CHECK_THROWS_AS(privacy::asymptotic_criterion(family, Vec::Zero(1), s, lti::default_grid(128)),
                  std::invalid_argument);
}

TEST_CASE("lower-bound property holds across the tested scenarios") {
  const Vec grid = lti::default_grid(64);
  for (double noise : {0.0, 0.01}) {
    for (double delta : {0.0, 0.2}) {
      ExperimentSetup s = example_setup(delta, noise);
      if (delta == 0.0) s.cipher = s.plant;
      // the noisy masked case needs enough replicates for a stable
      // standard-error slack
      const int replicates = noise > 0.0 ? 50 : 10;
      const int n_samples = noise > 0.0 ? 4000 : 2000;
      const auto curve = privacy::empirical_bias_variance(s, n_samples, replicates, grid);
      const auto bound = privacy::mse_lower_bound(curve, s.plant, s.cipher);
      CHECK(bound.satisfied);
    }
  }
}

TEST_CASE("curve CSV export carries the documented columns") {
  const ExperimentSetup s = example_setup(0.2);
  const Vec grid = lti::default_grid(16);
  const auto curve = privacy::empirical_bias_variance(s, 1000, 3, grid);
  const auto bound = privacy::mse_lower_bound(curve, s.plant, s.cipher);
  const std::string path = "test_curve_tmp.csv";
  privacy::write_curve_csv(curve, bound, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "omega,re_mean,im_mean,re_bias,im_bias,variance,mse_vs_G,lower_bound");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 16);
  in.close();
  std::remove(path.c_str());
}
