#include "dynmask/masking_loop.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "dynmask/errors.hpp"

namespace dynmask::loop {

using lti::Mat;

ControllerTf design_output_feedback(const TransferFunction& plant, double pole_radius) {
  if (pole_radius <= 0.0 || pole_radius >= 1.0)
    throw ConfigError("controller pole radius must lie in (0, 1)");
  const int n = plant.order();
  if (n < 1) throw ConfigError("static plants need no dynamic controller");
  Vec a = plant.den;                  // monic, length n+1
  Vec b = Vec::Zero(n + 1);           // numerator padded to the same length
  b.tail(plant.num.size()) = plant.num;

  // Target closed-loop poles: distinct real poles fanned inward from the
  // requested radius. A repeated root would make the Sylvester system
  // ill-conditioned and the transient amplification explode with order.
  std::vector<lti::Complex> target_roots;
  double pole = pole_radius;
  for (int i = 0; i < 2 * n - 1; ++i, pole *= 0.92)
    target_roots.emplace_back(pole, 0.0);
  const Vec a_cl = lti::poly_from_roots(target_roots);

  // Sylvester system for R (degree n-1, leading coefficient free) and
  // S (degree n-1): coefficients of A R + B S matched to a_cl.
  const int nr = n;  // coefficients of R
  const int ns = n;  // coefficients of S
  Mat sys = Mat::Zero(2 * n, nr + ns);
  for (int j = 0; j < nr; ++j)
    for (int i = 0; i < a.size(); ++i) sys(i + j, j) = a(i);
  for (int j = 0; j < ns; ++j)
    for (int i = 0; i < b.size(); ++i) sys(i + j, nr + j) = b(i);
  const Vec rhs = a_cl;
  Eigen::ColPivHouseholderQR<Mat> qr(sys);
  if (qr.rank() < 2 * n)
    throw NumericError("pole placement failed: plant numerator and denominator not coprime");
  const Vec sol = qr.solve(rhs);
  Vec r_poly = sol.head(nr);
  Vec s_poly = sol.tail(ns);
  if (std::abs(r_poly(0)) < 1e-10)
    throw NumericError("pole placement produced an improper controller");

  const lti::Complex b1 = lti::poly_eval(b, 1.0);
  if (std::abs(b1) < 1e-9)
    throw ConfigError("plant has a zero at z = 1; unit DC tracking is infeasible");
  const double t0 = lti::poly_eval(a_cl, 1.0).real() / b1.real();

  ControllerTf c;
  c.from_measurement = TransferFunction::make(Vec(-s_poly), r_poly);
  c.from_reference = TransferFunction::make(Vec::Constant(1, t0), r_poly);
  return c;
}

StateSpace controller_to_ss(const ControllerTf& c) {
  const Vec& den_y = c.from_measurement.den;
  const Vec& den_r = c.from_reference.den;
  if (den_y.size() == den_r.size() &&
      (den_y - den_r).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + den_y.cwiseAbs().maxCoeff())) {
    // Shared denominator: one observable-canonical state vector serves both
    // channels, so the realization adds no modes beyond the denominator's.
    const int n = static_cast<int>(den_y.size()) - 1;
    auto padded = [&](const Vec& num) {
      Vec b = Vec::Zero(n + 1);
      b.tail(num.size()) = num;
      return b;
    };
    const Vec by = padded(c.from_measurement.num);
    const Vec br = padded(c.from_reference.num);
    Mat D(1, 2);
    D << by(0), br(0);
    if (n == 0) return StateSpace::make(Mat(0, 0), Mat(0, 2), Mat(1, 0), D);
    Mat A = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) A(i, 0) = -den_y(i + 1);
    if (n > 1) A.block(0, 1, n - 1, n - 1).setIdentity();
    Mat B(n, 2);
    for (int i = 0; i < n; ++i) {
      B(i, 0) = by(i + 1) - den_y(i + 1) * by(0);
      B(i, 1) = br(i + 1) - den_y(i + 1) * br(0);
    }
    Mat C = Mat::Zero(1, n);
    C(0, 0) = 1.0;
    return StateSpace::make(A, B, C, D);
  }
  // Distinct denominators: block-diagonal channels. Each channel's own poles
  // must then be stable for internal stability.
  const StateSpace sy = lti::tf_to_ss(c.from_measurement);
  const StateSpace sr = lti::tf_to_ss(c.from_reference);
  const int n = sy.n() + sr.n();
  Mat A = Mat::Zero(n, n);
  A.topLeftCorner(sy.n(), sy.n()) = sy.A;
  A.bottomRightCorner(sr.n(), sr.n()) = sr.A;
  Mat B = Mat::Zero(n, 2);
  B.block(0, 0, sy.n(), 1) = sy.B;
  B.block(sy.n(), 1, sr.n(), 1) = sr.B;
  Mat C = Mat::Zero(1, n);
  C.block(0, 0, 1, sy.n()) = sy.C;
  C.block(0, sy.n(), 1, sr.n()) = sr.C;
  Mat D(1, 2);
  D << sy.D(0, 0), sr.D(0, 0);
  return StateSpace::make(A, B, C, D);
}

namespace {

// Nominal closed loop state matrix over [x_plant; x_ctrl], reference and
// noise grounded. u is eliminated through the feedthrough fixed point.
Mat closed_loop_matrix(const StateSpace& plant, const StateSpace& ctrl) {
  const double dg = plant.D(0, 0);
  const double dcy = ctrl.D(0, 0);
  const double denom = 1.0 - dcy * dg;
  if (std::abs(denom) < 1e-9) throw NumericError("algebraic loop: feedthrough product is one");
  const int ng = plant.n();
  const int nc = ctrl.n();
  // u = (dcy * Cg x_g + Cc x_c) / denom
  Eigen::RowVectorXd ku(ng + nc);
  ku << (dcy / denom) * plant.C.row(0), (1.0 / denom) * ctrl.C.row(0);
  // y = Cg x_g + dg u
  Eigen::RowVectorXd ky(ng + nc);
  ky.setZero();
  ky.head(ng) = plant.C.row(0);
  ky += dg * ku;
  Mat acl = Mat::Zero(ng + nc, ng + nc);
  acl.topLeftCorner(ng, ng) = plant.A;
  acl.topRows(ng) += plant.B * ku;
  acl.bottomRightCorner(nc, nc) = ctrl.A;
  acl.bottomRows(nc) += ctrl.B.col(0) * ky;
  return acl;
}

bool spectral_radius_stable(const Mat& A) {
  if (A.rows() == 0) return true;
  Eigen::EigenSolver<Mat> es(A, false);
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()(i)) >= 1.0 - 1e-10) return false;
  return true;
}

}  // namespace

LoopEngine::LoopEngine(const LoopSystems& systems, double threshold, Placement placement)
    : systems_(systems),
      plant_(lti::tf_to_ss(systems.plant)),
      noise_(lti::tf_to_ss(systems.noise)),
      cipher_(lti::tf_to_ss(systems.cipher)),
      ctrl_(controller_to_ss(systems.controller)),
      threshold_(threshold),
      placement_(placement) {
  if (!lti::is_stable(cipher_)) throw NumericError("cipher plant is not internally stable");
  if (!spectral_radius_stable(closed_loop_matrix(plant_, ctrl_)))
    throw NumericError("controller does not stabilize plant");
  x_plant0_ = Vec::Zero(plant_.n());
  x_twin0_ = Vec::Zero(plant_.n());
  x_cipher0_ = Vec::Zero(cipher_.n());
  x_noise0_ = Vec::Zero(noise_.n());
  x_ctrl_cipher0_ = Vec::Zero(cipher_.n());
  x_ctrl_twin0_ = Vec::Zero(plant_.n());
  x_ctrl0_ = Vec::Zero(ctrl_.n());
  reset();
}

void LoopEngine::set_initial_state(Block block, const Vec& x) {
  auto assign = [&](Vec& target, const char* name) {
    if (x.size() != target.size())
      throw std::invalid_argument(std::string("initial state dimension mismatch for ") + name);
    target = x;
  };
  switch (block) {
    case Block::Plant: assign(x_plant0_, "plant"); break;
    case Block::Twin: assign(x_twin0_, "twin"); break;
    case Block::Cipher: assign(x_cipher0_, "cipher"); break;
    case Block::NoiseFilter: assign(x_noise0_, "noise filter"); break;
    case Block::CtrlCipher: assign(x_ctrl_cipher0_, "controller-side cipher"); break;
    case Block::CtrlTwin: assign(x_ctrl_twin0_, "controller-side twin"); break;
    case Block::Controller: assign(x_ctrl0_, "controller"); break;
  }
  reset();
}

void LoopEngine::reset() {
  x_plant_ = x_plant0_;
  x_twin_ = x_twin0_;
  x_cipher_ = x_cipher0_;
  x_noise_ = x_noise0_;
  x_ctrl_cipher_ = x_ctrl_cipher0_;
  x_ctrl_twin_ = x_ctrl_twin0_;
  x_ctrl_ = x_ctrl0_;
  x_nom_plant_ = Vec::Zero(plant_.n());
  x_nom_ctrl_ = Vec::Zero(ctrl_.n());
}

StepRecord LoopEngine::step(double r_k, double a_k, double e_k) {
  const double dg = plant_.D(0, 0);
  const double ds = cipher_.D(0, 0);
  const double dh = noise_.D(0, 0);
  const double dcy = ctrl_.D(0, 0);
  const double dcr = ctrl_.D(0, 1);
  const double denom = 1.0 - dcy * dg;

  auto out = [](const StateSpace& s, const Vec& x) {
    return s.n() > 0 ? (s.C * x)(0, 0) : 0.0;
  };

  const double eta = out(noise_, x_noise_) + dh * e_k;  // H e term
  // y^ = alpha + dg * u: everything in the reconstruction that does not
  // depend on the controller output.
  const double alpha = out(plant_, x_plant_) - out(plant_, x_twin_) + out(cipher_, x_cipher_) -
                       out(cipher_, x_ctrl_cipher_) + out(plant_, x_ctrl_twin_) + eta + ds * a_k;
  const double gamma = out(ctrl_, x_ctrl_) + dcr * r_k;
  const double u = (gamma + dcy * alpha) / denom;
  const double ut = u + a_k;

  const double y = out(plant_, x_plant_) + dg * ut + eta;
  const double v = -(out(plant_, x_twin_) + dg * ut);
  const double l = out(cipher_, x_cipher_) + ds * ut;
  const double w = y + v + l;
  const double y_hat = w - (out(cipher_, x_ctrl_cipher_) + ds * u) +
                       (out(plant_, x_ctrl_twin_) + dg * u);

  // Nominal noise-free closed loop driven by the same reference.
  const double gamma_n = out(ctrl_, x_nom_ctrl_) + dcr * r_k;
  const double u_n = (gamma_n + dcy * out(plant_, x_nom_plant_)) / denom;
  const double y_nom = out(plant_, x_nom_plant_) + dg * u_n;

  StepRecord rec;
  rec.r = r_k;
  rec.u = u;
  rec.a = a_k;
  rec.u_tilde = ut;
  rec.e = e_k;
  rec.y = y;
  rec.v = v;
  rec.l = l;
  rec.w = w;
  rec.y_hat = y_hat;
  rec.y_nom = y_nom;
  rec.d = (placement_ == Placement::D1 ? y : y_hat) - y_nom;
  rec.z = x_plant_;

  auto advance = [](const StateSpace& s, Vec& x, double input) {
    if (s.n() > 0) x = s.A * x + s.B.col(0) * input;
  };
  advance(plant_, x_plant_, ut);
  advance(plant_, x_twin_, ut);
  advance(cipher_, x_cipher_, ut);
  advance(noise_, x_noise_, e_k);
  advance(cipher_, x_ctrl_cipher_, u);
  advance(plant_, x_ctrl_twin_, u);
  if (ctrl_.n() > 0) x_ctrl_ = ctrl_.A * x_ctrl_ + ctrl_.B.col(0) * y_hat + ctrl_.B.col(1) * r_k;
  advance(plant_, x_nom_plant_, u_n);
  if (ctrl_.n() > 0)
    x_nom_ctrl_ = ctrl_.A * x_nom_ctrl_ + ctrl_.B.col(0) * y_nom + ctrl_.B.col(1) * r_k;
  return rec;
}

LoopTrace LoopEngine::run(const std::vector<double>& r, const std::vector<double>& a,
                          const std::vector<double>& e) {
  if (r.size() != a.size() || r.size() != e.size())
    throw std::invalid_argument("reference, attack and noise sequences must have equal length");
  const std::size_t N = r.size();
  LoopTrace t;
  t.placement = placement_;
  t.threshold = threshold_;
  t.r.reserve(N);
  t.u.reserve(N);
  t.a.reserve(N);
  t.u_tilde.reserve(N);
  t.e.reserve(N);
  t.y.reserve(N);
  t.v.reserve(N);
  t.l.reserve(N);
  t.w.reserve(N);
  t.y_hat.reserve(N);
  t.d.reserve(N);
  t.y_nom.reserve(N);
  t.z_sq.reserve(N);
  t.z.resize(plant_.n(), N);
  for (std::size_t k = 0; k < N; ++k) {
    const StepRecord rec = step(r[k], a[k], e[k]);
    t.r.push_back(rec.r);
    t.u.push_back(rec.u);
    t.a.push_back(rec.a);
    t.u_tilde.push_back(rec.u_tilde);
    t.e.push_back(rec.e);
    t.y.push_back(rec.y);
    t.v.push_back(rec.v);
    t.l.push_back(rec.l);
    t.w.push_back(rec.w);
    t.y_hat.push_back(rec.y_hat);
    t.d.push_back(rec.d);
    t.y_nom.push_back(rec.y_nom);
    t.z.col(k) = rec.z;
    t.z_sq.push_back(rec.z.squaredNorm());
  }
  return t;
}

DetectorReport detect(const LoopTrace& trace, Placement placement, double threshold) {
  DetectorReport rep;
  rep.placement = placement;
  rep.threshold = threshold;
  rep.cumulative_energy.reserve(trace.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const double base = placement == Placement::D1 ? trace.y[k] : trace.y_hat[k];
    const double d = base - trace.y_nom[k];
    acc += d * d;
    rep.cumulative_energy.push_back(acc);
    if (!rep.first_alarm_step && acc > threshold) {
      rep.alarm = true;
      rep.first_alarm_step = static_cast<int>(k);
    }
  }
  return rep;
}

double performance_energy(const LoopTrace& trace, int horizon) {
  const std::size_t n = trace.z_sq.size();
  std::size_t last = horizon < 0 ? n : std::min<std::size_t>(n, horizon + 1);
  double acc = 0.0;
  for (std::size_t k = 0; k < last; ++k) acc += trace.z_sq[k];
  return acc;
}

bool energy_divergent(const LoopTrace& trace) {
  const std::size_t n = trace.z_sq.size();
  if (n < 8) return false;
  const std::size_t q = n / 4;
  auto window = [&](std::size_t from, std::size_t to) {
    double acc = 0.0;
    for (std::size_t k = from; k < to; ++k) acc += trace.z_sq[k];
    return acc;
  };
  const double third = window(2 * q, 3 * q);
  const double fourth = window(3 * q, n);
  return third > 1e-12 && fourth >= 2.0 * third;
}

void write_trace_csv(const LoopTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw NumericError("cannot open trace output file: " + path);
  out << "k,r,u,a,u_tilde,e,y,v,l,w,y_hat,d,z_energy_cum\n";
  char buf[32];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  double zcum = 0.0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    zcum += trace.z_sq[k];
    out << k << ',' << fmt(trace.r[k]) << ',' << fmt(trace.u[k]) << ',' << fmt(trace.a[k]) << ','
        << fmt(trace.u_tilde[k]) << ',' << fmt(trace.e[k]) << ',' << fmt(trace.y[k]) << ','
        << fmt(trace.v[k]) << ',' << fmt(trace.l[k]) << ',' << fmt(trace.w[k]) << ','
        << fmt(trace.y_hat[k]) << ',' << fmt(trace.d[k]) << ',' << fmt(zcum) << '\n';
  }
}

}  // namespace dynmask::loop
