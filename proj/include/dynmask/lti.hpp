#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

// All types here are immutable value objects after construction and every
// operation is a pure function, so concurrent use needs no synchronization.
namespace dynmask::lti {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Complex = std::complex<double>;

// ---------------------------------------------------------------------------
// Polynomials. Coefficients are stored in descending powers of z:
// {1, -0.7, 0.1} is z^2 - 0.7 z + 0.1. This is the single convention used
// throughout; nothing else stores polynomials.
// ---------------------------------------------------------------------------

/// Drops leading coefficients whose magnitude is negligible relative to the
/// largest coefficient. An all-zero polynomial collapses to {0}.
Vec poly_trim(const Vec& p, double rel_tol = 1e-14);

Vec poly_mul(const Vec& a, const Vec& b);
Vec poly_add(const Vec& a, const Vec& b);
Vec poly_sub(const Vec& a, const Vec& b);
Complex poly_eval(const Vec& p, Complex z);

/// Roots via the companion-matrix eigenproblem. Degree 0 has no roots.
std::vector<Complex> poly_roots(const Vec& p);

/// Real-coefficient polynomial from a conjugate-closed root set.
Vec poly_from_roots(const std::vector<Complex>& roots, double leading = 1.0);

// ---------------------------------------------------------------------------
// Representations
// ---------------------------------------------------------------------------

/// Rational function in z with a monic denominator. Numerator degree never
/// exceeds denominator degree (proper).
struct TransferFunction {
  Vec num;
  Vec den;

  /// Normalizes (monic denominator, trimmed leading zeros) and validates.
  /// Throws std::invalid_argument("improper transfer function") if the
  /// numerator degree exceeds the denominator degree.
  static TransferFunction make(Vec num, Vec den);

  static TransferFunction unity() { return make(Vec::Ones(1), Vec::Ones(1)); }
  static TransferFunction zero() { return make(Vec::Zero(1), Vec::Ones(1)); }

  int order() const { return static_cast<int>(den.size()) - 1; }
  bool strictly_proper() const { return num.size() < den.size(); }
};

TransferFunction tf_add(const TransferFunction& a, const TransferFunction& b);
TransferFunction tf_sub(const TransferFunction& a, const TransferFunction& b);
TransferFunction tf_mul(const TransferFunction& a, const TransferFunction& b);
/// a / b; throws NumericError if b's numerator is identically zero or the
/// quotient would be improper.
TransferFunction tf_div(const TransferFunction& a, const TransferFunction& b);
TransferFunction tf_scale(const TransferFunction& a, double k);
bool tf_equal(const TransferFunction& a, const TransferFunction& b, double tol = 1e-12);

struct StateSpace {
  Mat A, B, C, D;

  static StateSpace make(Mat A, Mat B, Mat C, Mat D);

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int p() const { return static_cast<int>(C.rows()); }
};

/// Controllability/observability rank test with tolerance
/// 1e-8 * (largest singular value). Zeros are only well defined on minimal
/// realizations, so invariant_zeros() gates on this.
bool is_minimal(const StateSpace& ss);

/// One invariant zero with its direction pair from the system pencil
/// [beta*I - A, -B; C, D] [x0; g] = 0. The stacked direction [x0; g] has
/// unit 2-norm and the first significant entry of g is made real-positive.
struct ZeroData {
  Complex beta;
  CVec x0;
  CVec g;
  bool unstable = false;  // |beta| > 1
  double residual = 0.0;  // ||pencil * [x0; g]||_2
};

struct FrequencyResponse {
  Vec omega;    // radians/sample, strictly increasing, within [0, pi]
  CVec value;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Controllable canonical realization. Throws on improper input.
StateSpace tf_to_ss(const TransferFunction& tf);

/// C (zI - A)^-1 B + D as a coefficient ratio; SISO only.
TransferFunction ss_to_tf(const StateSpace& ss);

struct SimResult {
  Mat y;  // p x N
  Mat x;  // n x N, state at each step (the state that produced y_k)
};

/// Exact recursion x_{k+1} = A x_k + B u_k, y_k = C x_k + D u_k.
SimResult simulate(const StateSpace& ss, const Mat& input, const Vec& x_init);
/// SISO convenience overload.
std::vector<double> simulate_siso(const StateSpace& ss, const std::vector<double>& input,
                                  const Vec& x_init);

/// Finite generalized eigenvalues of the pencil ([A, B; C, D], diag(I, 0))
/// with directions recovered by SVD. Requires a square (p == m) minimal
/// realization. Results are sorted by (Re, Im).
std::vector<ZeroData> invariant_zeros(const StateSpace& ss);

/// Evaluates at e^{i omega}. Throws NumericError("evaluation at pole") if a
/// pole lies within 1e-12 of a grid point on the unit circle.
FrequencyResponse frequency_response(const TransferFunction& tf, const Vec& grid);
FrequencyResponse frequency_response(const StateSpace& ss, const Vec& grid);

/// All eigenvalues of A strictly inside the unit circle (modulus < 1 - 1e-10).
bool is_stable(const StateSpace& ss);
/// Same test on the poles.
bool is_stable(const TransferFunction& tf);

/// Uniform grid of `points` frequencies on [0, pi].
Vec default_grid(int points = 512);

}  // namespace dynmask::lti
