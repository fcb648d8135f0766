#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dynmask/adversary.hpp"
#include "dynmask/lti.hpp"

// Pure computations over immutable inputs. Monte Carlo replicates derive
// independent seeds and are aggregated as a deterministic fold in replicate
// order.
namespace dynmask::privacy {

using adversary::ExperimentSetup;
using lti::Complex;
using lti::CVec;
using lti::TransferFunction;
using lti::Vec;

/// Monte Carlo frequency-domain statistics of the adversary's estimate:
/// mean of G^_N(e^{iw}), bias against the cipher's response, and the
/// population variance around the mean. Replicate responses are kept so the
/// MSE bound can attach standard errors.
struct BiasVarianceCurve {
  Vec omega;
  CVec mean;
  CVec bias;       // mean - S(e^{iw})
  Vec variance;    // (1/R) sum |G^_i - mean|^2
  int replicates = 0;
  int sample_count = 0;
  int failures = 0;
  lti::CMat responses;  // replicate x frequency
};

/// Runs R seeded identifications of the masked loop at sample size N and
/// aggregates. Replicates whose estimator did not converge are excluded and
/// counted; more than 10% failures throws
/// NumericError("unreliable Monte Carlo").
BiasVarianceCurve empirical_bias_variance(const ExperimentSetup& setup, int n_samples,
                                          int replicates, const Vec& grid);

struct MseBound {
  Vec bound;           // ||B|^2 - |S - G|^2| + P per frequency
  Vec empirical_mse;   // (1/R) sum |G^_i - G|^2
  Vec standard_error;  // of the empirical MSE
  bool satisfied = false;  // empirical >= bound - 3 SE everywhere
};

MseBound mse_lower_bound(const BiasVarianceCurve& curve, const TransferFunction& plant,
                         const TransferFunction& cipher);

/// Extracts a scalar property from an identified model; empty when the
/// property is undefined for that model.
using PropertyExtractor = std::function<std::optional<Complex>(const TransferFunction&)>;

/// Numerator root closest to the given true value.
PropertyExtractor zero_extractor(Complex true_zero);

struct PrivacyVerdict {
  std::string property;
  Complex true_value;
  std::vector<Complex> estimates;
  double mse = 0.0;
  double delta = 0.0;
  bool is_private = false;  // mse >= delta
};

/// Definition check: Monte Carlo MSE of the extracted property against its
/// true value, verdict mse >= delta. Throws when the extractor is undefined
/// on more than 10% of replicates.
PrivacyVerdict delta_privacy_check(const PropertyExtractor& extractor, const std::string& name,
                                   Complex true_value, const ExperimentSetup& setup, double delta,
                                   int n_samples, int replicates);

/// The w -> u map implemented by the controller side under masking,
/// C_y / (1 - C_y (G - S)), as a rational function. Diagnostic only. Throws
/// NumericError when the plant and cipher coincide (the masked view
/// degenerates: G - S is identically zero and its inverse does not exist).
TransferFunction believed_controller(const TransferFunction& plant,
                                     const TransferFunction& cipher,
                                     const loop::ControllerTf& controller);

struct SpectrumDecomposition {
  Vec omega;
  Vec total;
  Vec from_reference;  // |T_ru|^2 sigma_r^2
  Vec from_noise;      // |T_eu|^2 lambda
};

/// Analytic input-spectrum split from the closed-loop maps r -> u and
/// e -> u with white sources.
SpectrumDecomposition input_spectrum_decomposition(const ExperimentSetup& setup, const Vec& grid);

/// theta-parameterized model family with a restricted noise-model choice:
/// the true filter H, or a unit filter.
struct ModelFamily {
  std::function<TransferFunction(const Vec&)> model;
  enum class NoiseModel { True, Unit } noise = NoiseModel::True;
};

struct AsymptoticCriterion {
  double v1 = 0.0;
  double v2 = 0.0;
  bool noise_model_mismatch = false;
};

/// Trapezoidal quadrature of the asymptotic prediction-error criterion at a
/// given parameter point, normalized by 1/(2 pi) over the full circle. The
/// bias distortion term and v2 vanish when the noise model matches the true
/// one. Grid must have at least 256 points.
AsymptoticCriterion asymptotic_criterion(const ModelFamily& family, const Vec& theta,
                                         const ExperimentSetup& setup, const Vec& grid);

/// CSV export: omega,re_mean,im_mean,re_bias,im_bias,variance,mse_vs_G,lower_bound
void write_curve_csv(const BiasVarianceCurve& curve, const MseBound& bound,
                     const std::string& path);

}  // namespace dynmask::privacy
