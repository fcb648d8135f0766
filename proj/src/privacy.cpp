#include "dynmask/privacy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dynmask/errors.hpp"
#include "dynmask/rng.hpp"

namespace dynmask::privacy {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Identification replicate with a derived seed. Returns the identified model
// or nothing when the estimator flags itself unreliable.
std::optional<TransferFunction> replicate_model(const ExperimentSetup& setup, int n_samples,
                                                int replicate) {
  ExperimentSetup rep = setup;
  rep.n_id = n_samples;
  rep.seed = rng::derive(setup.seed, rng::streams::kReplicateBase + replicate);
  try {
    const auto est = adversary::run_identification(rep);
    if (!est.converged) return std::nullopt;
    return est.model;
  } catch (const NumericError&) {
    return std::nullopt;
  }
}

double trapezoid(const Vec& omega, const Vec& f) {
  double acc = 0.0;
  for (int i = 1; i < omega.size(); ++i)
    acc += 0.5 * (f(i) + f(i - 1)) * (omega(i) - omega(i - 1));
  return acc;
}

}  // namespace

BiasVarianceCurve empirical_bias_variance(const ExperimentSetup& setup, int n_samples,
                                          int replicates, const Vec& grid) {
  if (replicates < 2) throw std::invalid_argument("at least two replicates required");
  std::vector<CVec> responses;
  int failures = 0;
  for (int rep = 0; rep < replicates; ++rep) {
    const auto model = replicate_model(setup, n_samples, rep);
    if (!model) {
      ++failures;
      continue;
    }
    responses.push_back(lti::frequency_response(*model, grid).value);
  }
  if (failures * 10 > replicates) throw NumericError("unreliable Monte Carlo");

  const int R = static_cast<int>(responses.size());
  const int nw = static_cast<int>(grid.size());
  BiasVarianceCurve curve;
  curve.omega = grid;
  curve.replicates = R;
  curve.sample_count = n_samples;
  curve.failures = failures;
  curve.responses.resize(R, nw);
  for (int i = 0; i < R; ++i) curve.responses.row(i) = responses[i].transpose();

  curve.mean = CVec::Zero(nw);
  for (int i = 0; i < R; ++i) curve.mean += responses[i];
  curve.mean /= static_cast<double>(R);

  const CVec cipher_fr = lti::frequency_response(setup.cipher, grid).value;
  curve.bias = curve.mean - cipher_fr;

  curve.variance = Vec::Zero(nw);
  for (int i = 0; i < R; ++i)
    curve.variance += (responses[i] - curve.mean).cwiseAbs2();
  curve.variance /= static_cast<double>(R);
  return curve;
}

MseBound mse_lower_bound(const BiasVarianceCurve& curve, const TransferFunction& plant,
                         const TransferFunction& cipher) {
  const int nw = static_cast<int>(curve.omega.size());
  const int R = curve.replicates;
  const CVec plant_fr = lti::frequency_response(plant, curve.omega).value;
  const CVec cipher_fr = lti::frequency_response(cipher, curve.omega).value;

  MseBound out;
  out.bound.resize(nw);
  out.empirical_mse.resize(nw);
  out.standard_error.resize(nw);
  out.satisfied = true;
  for (int k = 0; k < nw; ++k) {
    const double gap_sq = std::norm(cipher_fr(k) - plant_fr(k));
    out.bound(k) = std::abs(std::norm(curve.bias(k)) - gap_sq) + curve.variance(k);
    double mean_sq = 0.0, mean_q4 = 0.0;
    for (int i = 0; i < R; ++i) {
      const double err_sq = std::norm(curve.responses(i, k) - plant_fr(k));
      mean_sq += err_sq;
      mean_q4 += err_sq * err_sq;
    }
    mean_sq /= R;
    mean_q4 /= R;
    out.empirical_mse(k) = mean_sq;
    const double var_of_sq = std::max(0.0, mean_q4 - mean_sq * mean_sq);
    out.standard_error(k) = std::sqrt(var_of_sq / R);
    // absolute epsilon keeps deterministic scenarios, where both sides agree
    // to rounding, from flipping on the last bit
    const double floor_eps = 1e-12 * (1.0 + out.bound(k));
    if (out.empirical_mse(k) < out.bound(k) - 3.0 * out.standard_error(k) - floor_eps)
      out.satisfied = false;
  }
  return out;
}

PropertyExtractor zero_extractor(Complex true_zero) {
  return [true_zero](const TransferFunction& model) -> std::optional<Complex> {
    const auto roots = lti::poly_roots(model.num);
    if (roots.empty()) return std::nullopt;
    Complex best = roots[0];
    for (const auto& r : roots)
      if (std::abs(r - true_zero) < std::abs(best - true_zero)) best = r;
    return best;
  };
}

PrivacyVerdict delta_privacy_check(const PropertyExtractor& extractor, const std::string& name,
                                   Complex true_value, const ExperimentSetup& setup, double delta,
                                   int n_samples, int replicates) {
  PrivacyVerdict verdict;
  verdict.property = name;
  verdict.true_value = true_value;
  verdict.delta = delta;
  int undefined = 0;
  for (int rep = 0; rep < replicates; ++rep) {
    const auto model = replicate_model(setup, n_samples, rep);
    std::optional<Complex> value;
    if (model) value = extractor(*model);
    if (!value) {
      ++undefined;
      continue;
    }
    verdict.estimates.push_back(*value);
  }
  if (undefined * 10 > replicates)
    throw NumericError("property extractor undefined on too many replicates");
  double acc = 0.0;
  for (const Complex& v : verdict.estimates) acc += std::norm(v - true_value);
  verdict.mse = verdict.estimates.empty() ? 0.0 : acc / verdict.estimates.size();
  verdict.is_private = verdict.mse >= delta;
  return verdict;
}

TransferFunction believed_controller(const TransferFunction& plant,
                                     const TransferFunction& cipher,
                                     const loop::ControllerTf& controller) {
  const TransferFunction gap = lti::tf_sub(plant, cipher);
  if (lti::poly_trim(gap.num).cwiseAbs().maxCoeff() == 0.0)
    throw NumericError("plant and cipher coincide: masked controller view is singular");
  const TransferFunction cy = controller.from_measurement;
  const TransferFunction denom = lti::tf_sub(TransferFunction::unity(), lti::tf_mul(cy, gap));
  return lti::tf_div(cy, denom);
}

SpectrumDecomposition input_spectrum_decomposition(const ExperimentSetup& setup, const Vec& grid) {
  const TransferFunction& g = setup.plant;
  const TransferFunction& h = setup.noise;
  const TransferFunction& cy = setup.controller.from_measurement;
  const TransferFunction& cr = setup.controller.from_reference;

  const TransferFunction loop_den = lti::tf_sub(TransferFunction::unity(), lti::tf_mul(cy, g));
  // the closed-loop characteristic polynomial is the numerator of 1 - C_y G
  for (const lti::Complex& p : lti::poly_roots(loop_den.num))
    if (std::abs(p) >= 1.0 - 1e-10)
      throw NumericError("closed loop unstable: input spectrum undefined");
  const TransferFunction t_ru = lti::tf_div(cr, loop_den);
  const TransferFunction t_eu = lti::tf_div(lti::tf_mul(cy, h), loop_den);

  SpectrumDecomposition out;
  out.omega = grid;
  const CVec ru = lti::frequency_response(t_ru, grid).value;
  const CVec eu = lti::frequency_response(t_eu, grid).value;
  out.from_reference = ru.cwiseAbs2() * setup.excitation_variance;
  out.from_noise = eu.cwiseAbs2() * setup.noise_variance;
  out.total = out.from_reference + out.from_noise;
  return out;
}

AsymptoticCriterion asymptotic_criterion(const ModelFamily& family, const Vec& theta,
                                         const ExperimentSetup& setup, const Vec& grid) {
  if (grid.size() < 256) throw std::invalid_argument("criterion grid needs at least 256 points");
  const TransferFunction model = family.model(theta);
  const CVec model_fr = lti::frequency_response(model, grid).value;
  const CVec cipher_fr = lti::frequency_response(setup.cipher, grid).value;
  const CVec h_true = lti::frequency_response(setup.noise, grid).value;
  const bool unit_noise = family.noise == ModelFamily::NoiseModel::Unit;
  const CVec h_model = unit_noise ? CVec::Ones(grid.size()).eval() : h_true;

  const SpectrumDecomposition spec = input_spectrum_decomposition(setup, grid);

  AsymptoticCriterion crit;
  Vec f1(grid.size()), f2(grid.size());
  bool mismatch_seen = false;
  for (int k = 0; k < grid.size(); ++k) {
    const double phi_u = spec.total(k);
    const double h_gap_sq = std::norm(h_true(k) - h_model(k));
    if (h_gap_sq > 1e-24) mismatch_seen = true;
    double distortion = 0.0;
    if (phi_u > 1e-300 && h_gap_sq > 0.0)
      distortion = setup.noise_variance / phi_u * (spec.from_noise(k) / phi_u) * h_gap_sq;
    const Complex diff = cipher_fr(k) - model_fr(k) + distortion;
    f1(k) = std::norm(diff) * phi_u / std::norm(h_model(k));
    f2(k) = phi_u > 1e-300 ? h_gap_sq / std::norm(h_model(k)) * (spec.from_reference(k) / phi_u)
                           : 0.0;
    if (!std::isfinite(f1(k)) || !std::isfinite(f2(k)))
      throw NumericError("non-finite integrand in asymptotic criterion");
  }
  // even integrands: 1/(2 pi) over [-pi, pi] equals 1/pi over [0, pi]
  crit.v1 = trapezoid(grid, f1) / kPi;
  crit.v2 = mismatch_seen ? setup.noise_variance * trapezoid(grid, f2) / kPi : 0.0;
  crit.noise_model_mismatch = mismatch_seen;
  return crit;
}

void write_curve_csv(const BiasVarianceCurve& curve, const MseBound& bound,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw NumericError("cannot open curve output file: " + path);
  out << "omega,re_mean,im_mean,re_bias,im_bias,variance,mse_vs_G,lower_bound\n";
  char buf[32];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (int k = 0; k < curve.omega.size(); ++k) {
    out << fmt(curve.omega(k)) << ',' << fmt(curve.mean(k).real()) << ','
        << fmt(curve.mean(k).imag()) << ',' << fmt(curve.bias(k).real()) << ','
        << fmt(curve.bias(k).imag()) << ',' << fmt(curve.variance(k)) << ','
        << fmt(bound.empirical_mse(k)) << ',' << fmt(bound.bound(k)) << '\n';
  }
}

}  // namespace dynmask::privacy
