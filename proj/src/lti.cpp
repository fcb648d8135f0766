#include "dynmask/lti.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dynmask/errors.hpp"

namespace dynmask::lti {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Faddeev-LeVerrier: coefficients of det(zI - A), monic, descending powers.
Vec char_poly(const Mat& A) {
  const int n = static_cast<int>(A.rows());
  Vec c(n + 1);
  c(0) = 1.0;
  Mat M = Mat::Identity(n, n);
  for (int k = 1; k <= n; ++k) {
    M = A * M;
    c(k) = -M.trace() / static_cast<double>(k);
    M.diagonal().array() += c(k);
  }
  return c;
}

int rank_with_tol(const Mat& M, double rel_tol) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(M);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++r;
  return r;
}

}  // namespace

Vec poly_trim(const Vec& p, double rel_tol) {
  if (p.size() == 0) return Vec::Zero(1);
  const double scale = p.cwiseAbs().maxCoeff();
  if (scale == 0.0) return Vec::Zero(1);
  int first = 0;
  while (first < p.size() - 1 && std::abs(p(first)) <= rel_tol * scale) ++first;
  return p.tail(p.size() - first);
}

Vec poly_mul(const Vec& a, const Vec& b) {
  Vec out = Vec::Zero(a.size() + b.size() - 1);
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < b.size(); ++j) out(i + j) += a(i) * b(j);
  return out;
}

Vec poly_add(const Vec& a, const Vec& b) {
  const int n = static_cast<int>(std::max(a.size(), b.size()));
  Vec out = Vec::Zero(n);
  out.tail(a.size()) += a;
  out.tail(b.size()) += b;
  return out;
}

Vec poly_sub(const Vec& a, const Vec& b) { return poly_add(a, Vec(-b)); }

Complex poly_eval(const Vec& p, Complex z) {
  Complex acc = 0.0;
  for (int i = 0; i < p.size(); ++i) acc = acc * z + p(i);
  return acc;
}

std::vector<Complex> poly_roots(const Vec& p_in) {
  const Vec p = poly_trim(p_in);
  const int deg = static_cast<int>(p.size()) - 1;
  if (deg <= 0 || p.cwiseAbs().maxCoeff() == 0.0) return {};
  Mat companion = Mat::Zero(deg, deg);
  for (int j = 0; j < deg; ++j) companion(0, j) = -p(j + 1) / p(0);
  if (deg > 1) companion.block(1, 0, deg - 1, deg - 1).setIdentity();
  Eigen::EigenSolver<Mat> es(companion, /*computeEigenvectors=*/false);
  std::vector<Complex> roots(deg);
  for (int i = 0; i < deg; ++i) roots[i] = es.eigenvalues()(i);
  std::sort(roots.begin(), roots.end(), [](Complex a, Complex b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return roots;
}

Vec poly_from_roots(const std::vector<Complex>& roots, double leading) {
  std::vector<Complex> coeffs{Complex(leading, 0.0)};
  for (const Complex& r : roots) {
    std::vector<Complex> next(coeffs.size() + 1, Complex(0.0, 0.0));
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      next[i] += coeffs[i];
      next[i + 1] -= coeffs[i] * r;
    }
    coeffs = std::move(next);
  }
  Vec out(coeffs.size());
  for (std::size_t i = 0; i < coeffs.size(); ++i) out(i) = coeffs[i].real();
  return out;
}

TransferFunction TransferFunction::make(Vec num, Vec den) {
  den = poly_trim(den);
  if (den.cwiseAbs().maxCoeff() == 0.0)
    throw std::invalid_argument("denominator is identically zero");
  num = poly_trim(num);
  if (num.size() > den.size()) throw std::invalid_argument("improper transfer function");
  const double lead = den(0);
  TransferFunction tf;
  tf.num = num / lead;
  tf.den = den / lead;
  return tf;
}

TransferFunction tf_add(const TransferFunction& a, const TransferFunction& b) {
  return TransferFunction::make(
      poly_add(poly_mul(a.num, b.den), poly_mul(b.num, a.den)), poly_mul(a.den, b.den));
}

TransferFunction tf_sub(const TransferFunction& a, const TransferFunction& b) {
  return TransferFunction::make(
      poly_sub(poly_mul(a.num, b.den), poly_mul(b.num, a.den)), poly_mul(a.den, b.den));
}

TransferFunction tf_mul(const TransferFunction& a, const TransferFunction& b) {
  return TransferFunction::make(poly_mul(a.num, b.num), poly_mul(a.den, b.den));
}

TransferFunction tf_div(const TransferFunction& a, const TransferFunction& b) {
  const Vec bnum = poly_trim(b.num);
  if (bnum.cwiseAbs().maxCoeff() == 0.0)
    throw NumericError("division by a zero transfer function");
  try {
    return TransferFunction::make(poly_mul(a.num, b.den), poly_mul(a.den, bnum));
  } catch (const std::invalid_argument& e) {
    throw NumericError(e.what());
  }
}

TransferFunction tf_scale(const TransferFunction& a, double k) {
  return TransferFunction::make(Vec(a.num * k), a.den);
}

bool tf_equal(const TransferFunction& a, const TransferFunction& b, double tol) {
  if (a.num.size() != b.num.size() || a.den.size() != b.den.size()) return false;
  const double scale = std::max({1.0, a.num.cwiseAbs().maxCoeff(), a.den.cwiseAbs().maxCoeff()});
  return (a.num - b.num).cwiseAbs().maxCoeff() <= tol * scale &&
         (a.den - b.den).cwiseAbs().maxCoeff() <= tol * scale;
}

StateSpace StateSpace::make(Mat A, Mat B, Mat C, Mat D) {
  if (A.rows() != A.cols()) throw std::invalid_argument("A must be square");
  if (B.rows() != A.rows()) throw std::invalid_argument("B row count must match A");
  if (C.cols() != A.cols()) throw std::invalid_argument("C column count must match A");
  if (D.rows() != C.rows() || D.cols() != B.cols())
    throw std::invalid_argument("D dimensions must match C rows and B columns");
  return StateSpace{std::move(A), std::move(B), std::move(C), std::move(D)};
}

bool is_minimal(const StateSpace& ss) {
  const int n = ss.n();
  if (n == 0) return true;
  Mat ctrb(n, n * ss.m());
  Mat block = ss.B;
  for (int k = 0; k < n; ++k) {
    ctrb.block(0, k * ss.m(), n, ss.m()) = block;
    block = ss.A * block;
  }
  if (rank_with_tol(ctrb, 1e-8) < n) return false;
  Mat obsv(n * ss.p(), n);
  Mat oblock = ss.C;
  for (int k = 0; k < n; ++k) {
    obsv.block(k * ss.p(), 0, ss.p(), n) = oblock;
    oblock = oblock * ss.A;
  }
  return rank_with_tol(obsv, 1e-8) >= n;
}

StateSpace tf_to_ss(const TransferFunction& tf) {
  if (tf.num.size() > tf.den.size()) throw std::invalid_argument("improper transfer function");
  const int n = tf.order();
  Vec b = Vec::Zero(n + 1);  // numerator padded to denominator length
  b.tail(tf.num.size()) = tf.num;
  const double d = b(0);
  if (n == 0)
    return StateSpace::make(Mat(0, 0), Mat(0, 1), Mat(1, 0), Mat::Constant(1, 1, d));
  Mat A = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j) A(0, j) = -tf.den(j + 1);
  if (n > 1) A.block(1, 0, n - 1, n - 1).setIdentity();
  Mat B = Mat::Zero(n, 1);
  B(0, 0) = 1.0;
  Mat C(1, n);
  for (int j = 0; j < n; ++j) C(0, j) = b(j + 1) - tf.den(j + 1) * d;
  return StateSpace::make(A, B, C, Mat::Constant(1, 1, d));
}

TransferFunction ss_to_tf(const StateSpace& ss) {
  if (ss.m() != 1 || ss.p() != 1) throw std::invalid_argument("SISO only");
  const int n = ss.n();
  if (n == 0) return TransferFunction::make(ss.D, Vec::Ones(1));
  const Vec den = char_poly(ss.A);
  // C (zI-A)^-1 B = det(zI - A + B C)/det(zI - A) - 1, so the strictly
  // proper numerator is the difference of the two characteristic polynomials.
  const Vec shifted = char_poly(Mat(ss.A - ss.B * ss.C));
  Vec num = poly_add(poly_sub(shifted, den), Vec(den * ss.D(0, 0)));
  return TransferFunction::make(num, den);
}

SimResult simulate(const StateSpace& ss, const Mat& input, const Vec& x_init) {
  if (input.rows() != ss.m()) throw std::invalid_argument("input dimension mismatch");
  if (input.cols() < 1) throw std::invalid_argument("input must have at least one sample");
  if (x_init.size() != ss.n()) throw std::invalid_argument("initial state dimension mismatch");
  const int N = static_cast<int>(input.cols());
  SimResult out;
  out.y.resize(ss.p(), N);
  out.x.resize(ss.n(), N);
  Vec x = x_init;
  for (int k = 0; k < N; ++k) {
    out.x.col(k) = x;
    out.y.col(k) = ss.C * x + ss.D * input.col(k);
    x = ss.A * x + ss.B * input.col(k);
  }
  return out;
}

std::vector<double> simulate_siso(const StateSpace& ss, const std::vector<double>& input,
                                  const Vec& x_init) {
  Mat u(1, input.size());
  for (std::size_t k = 0; k < input.size(); ++k) u(0, k) = input[k];
  const SimResult res = simulate(ss, u, x_init);
  return {res.y.data(), res.y.data() + res.y.cols()};
}

std::vector<ZeroData> invariant_zeros(const StateSpace& ss) {
  if (ss.p() != ss.m())
    throw std::invalid_argument("invariant zeros require a square system");
  if (!is_minimal(ss)) throw NumericError("zeros ill-defined on non-minimal realization");
  const int n = ss.n();
  const int m = ss.m();
  if (n == 0) return {};

  Mat M(n + m, n + m);
  M << ss.A, ss.B, ss.C, ss.D;
  Mat N = Mat::Zero(n + m, n + m);
  N.topLeftCorner(n, n).setIdentity();

  Eigen::GeneralizedEigenSolver<Mat> ges;
  ges.compute(M, N, /*computeEigenvectors=*/false);

  std::vector<Complex> finite;
  for (int i = 0; i < ges.alphas().size(); ++i) {
    const Complex alpha = ges.alphas()(i);
    const double beta = ges.betas()(i);
    if (!std::isfinite(alpha.real()) || !std::isfinite(alpha.imag()) || !std::isfinite(beta))
      continue;
    if (std::abs(beta) <= 1e-12 * (1.0 + std::abs(alpha))) continue;  // infinite pair
    const Complex z = alpha / beta;
    if (std::abs(z) > 1e12) continue;
    finite.push_back(z);
  }

  std::vector<ZeroData> zeros;
  zeros.reserve(finite.size());
  const double a_norm = ss.A.norm();
  for (const Complex& z : finite) {
    CMat pencil(n + m, n + m);
    pencil.setZero();
    pencil.topLeftCorner(n, n) = (z * CMat::Identity(n, n)).eval() - ss.A.cast<Complex>();
    pencil.topRightCorner(n, m) = -ss.B.cast<Complex>();
    pencil.bottomLeftCorner(m, n) = ss.C.cast<Complex>();
    pencil.bottomRightCorner(m, m) = ss.D.cast<Complex>();
    Eigen::JacobiSVD<CMat> svd(pencil, Eigen::ComputeFullV);
    CVec v = svd.matrixV().col(n + m - 1);
    v /= v.norm();
    // Phase convention: first significant entry of g real-positive.
    for (int j = 0; j < m; ++j) {
      const Complex gj = v(n + j);
      if (std::abs(gj) > 1e-12) {
        v *= std::conj(gj) / std::abs(gj);
        break;
      }
    }
    ZeroData zd;
    zd.beta = z;
    zd.x0 = v.head(n);
    zd.g = v.tail(m);
    zd.unstable = std::abs(z) > 1.0;
    zd.residual = (pencil * v).norm();
    if (zd.residual > 1e-8 * (1.0 + a_norm))
      throw NumericError("invariant zero direction residual out of tolerance");
    zeros.push_back(std::move(zd));
  }
  std::sort(zeros.begin(), zeros.end(), [](const ZeroData& a, const ZeroData& b) {
    return a.beta.real() != b.beta.real() ? a.beta.real() < b.beta.real()
                                          : a.beta.imag() < b.beta.imag();
  });
  return zeros;
}

namespace {

void validate_grid(const Vec& grid) {
  if (grid.size() == 0) throw std::invalid_argument("empty frequency grid");
  for (int i = 0; i < grid.size(); ++i) {
    if (grid(i) < -1e-12 || grid(i) > kPi + 1e-12)
      throw std::invalid_argument("frequency grid must lie within [0, pi]");
    if (i > 0 && grid(i) <= grid(i - 1))
      throw std::invalid_argument("frequency grid must be strictly increasing");
  }
}

void check_poles_off_grid(const std::vector<Complex>& poles, const Vec& grid) {
  for (int i = 0; i < grid.size(); ++i) {
    const Complex z = std::polar(1.0, grid(i));
    for (const Complex& p : poles)
      if (std::abs(z - p) <= 1e-12) throw NumericError("evaluation at pole");
  }
}

}  // namespace

FrequencyResponse frequency_response(const TransferFunction& tf, const Vec& grid) {
  validate_grid(grid);
  check_poles_off_grid(poly_roots(tf.den), grid);
  FrequencyResponse fr;
  fr.omega = grid;
  fr.value.resize(grid.size());
  for (int i = 0; i < grid.size(); ++i) {
    const Complex z = std::polar(1.0, grid(i));
    fr.value(i) = poly_eval(tf.num, z) / poly_eval(tf.den, z);
  }
  return fr;
}

FrequencyResponse frequency_response(const StateSpace& ss, const Vec& grid) {
  validate_grid(grid);
  if (ss.n() == 0) {
    FrequencyResponse fr;
    fr.omega = grid;
    fr.value = CVec::Constant(grid.size(), Complex(ss.D(0, 0), 0.0));
    return fr;
  }
  Eigen::EigenSolver<Mat> es(ss.A, /*computeEigenvectors=*/false);
  std::vector<Complex> poles(es.eigenvalues().data(),
                             es.eigenvalues().data() + es.eigenvalues().size());
  check_poles_off_grid(poles, grid);
  if (ss.m() != 1 || ss.p() != 1)
    throw std::invalid_argument("frequency response supports SISO state space");
  FrequencyResponse fr;
  fr.omega = grid;
  fr.value.resize(grid.size());
  const CMat A = ss.A.cast<Complex>();
  const CVec B = ss.B.col(0).cast<Complex>();
  const Eigen::RowVectorXcd C = ss.C.row(0).cast<Complex>();
  for (int i = 0; i < grid.size(); ++i) {
    const Complex z = std::polar(1.0, grid(i));
    CMat zIA = -A;
    zIA.diagonal().array() += z;
    fr.value(i) = (C * zIA.lu().solve(B))(0) + ss.D(0, 0);
  }
  return fr;
}

bool is_stable(const StateSpace& ss) {
  if (ss.n() == 0) return true;
  Eigen::EigenSolver<Mat> es(ss.A, /*computeEigenvectors=*/false);
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()(i)) >= 1.0 - 1e-10) return false;
  return true;
}

bool is_stable(const TransferFunction& tf) {
  for (const Complex& p : poly_roots(tf.den))
    if (std::abs(p) >= 1.0 - 1e-10) return false;
  return true;
}

Vec default_grid(int points) {
  if (points < 2) throw std::invalid_argument("grid needs at least two points");
  return Vec::LinSpaced(points, 0.0, kPi);
}

}  // namespace dynmask::lti
