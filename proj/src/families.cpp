#include "ala/families.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ala/errors.hpp"

namespace ala {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

void RequireExpfam(const FamilySpec& f) {
  if (!f.is_expfam()) {
    throw DomainError("family '" + f.name() +
                      "' is not an exponential family");
  }
}

double Sigmoid(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

// Root of a decreasing function on [lo, hi] by Newton steps, falling back
// to bisection (geometric, since the brackets span many decades).
template <class Score, class Slope>
double BracketedNewton(Score score, Slope slope, double lo, double hi,
                       double x) {
  if (!(x > lo && x < hi)) x = std::sqrt(lo * hi);
  for (int it = 0; it < 500; ++it) {
    const double f = score(x);
    if (f == 0.0) return x;
    if (f > 0) lo = x; else hi = x;
    const double d = slope(x);
    double next = (d < 0 && std::isfinite(d)) ? x - f / d : lo - 1.0;
    if (!(next > lo && next < hi)) next = std::sqrt(lo * hi);
    if (std::abs(next - x) <= 1e-15 * x || hi / lo - 1.0 < 1e-15) return next;
    x = next;
  }
  throw NoConvergence("bracketed Newton did not converge on [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

}  // namespace

FamilySpec FamilySpec::Parse(const std::string& name, double phi) {
  if (name == "logistic") return Logistic();
  if (name == "poisson") return Poisson();
  if (name == "gaussian") return GaussianKnownPhi(phi);
  if (name == "gaussian-unknown") return GaussianUnknownPhi();
  if (name == "aft" || name == "aft-lognormal") return AftLognormal();
  throw ConfigError("unknown family '" + name + "'");
}

std::string FamilySpec::name() const {
  switch (kind) {
    case FamilyKind::kLogistic: return "logistic";
    case FamilyKind::kPoisson: return "poisson";
    case FamilyKind::kGaussianKnownPhi: return "gaussian";
    case FamilyKind::kGaussianUnknownPhi: return "gaussian-unknown";
    case FamilyKind::kAftLognormal: return "aft";
  }
  return "unknown";
}

double FamilySpec::b(double u) const {
  switch (kind) {
    case FamilyKind::kLogistic:
      return u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
    case FamilyKind::kPoisson:
      return std::exp(u);
    case FamilyKind::kGaussianKnownPhi:
    case FamilyKind::kGaussianUnknownPhi:
      return 0.5 * u * u;
    default:
      RequireExpfam(*this);
  }
  return 0.0;
}

double FamilySpec::b1(double u) const {
  switch (kind) {
    case FamilyKind::kLogistic: return Sigmoid(u);
    case FamilyKind::kPoisson: return std::exp(u);
    case FamilyKind::kGaussianKnownPhi:
    case FamilyKind::kGaussianUnknownPhi: return u;
    default: RequireExpfam(*this);
  }
  return 0.0;
}

double FamilySpec::b2(double u) const {
  switch (kind) {
    case FamilyKind::kLogistic: {
      const double s = Sigmoid(u);
      return s * (1.0 - s);
    }
    case FamilyKind::kPoisson: return std::exp(u);
    case FamilyKind::kGaussianKnownPhi:
    case FamilyKind::kGaussianUnknownPhi: return 1.0;
    default: RequireExpfam(*this);
  }
  return 0.0;
}

double FamilySpec::link(double mu) const {
  switch (kind) {
    case FamilyKind::kLogistic: return std::log(mu / (1.0 - mu));
    case FamilyKind::kPoisson: return std::log(mu);
    case FamilyKind::kGaussianKnownPhi:
    case FamilyKind::kGaussianUnknownPhi: return mu;
    default: RequireExpfam(*this);
  }
  return 0.0;
}

double FamilySpec::c(double y, double phi_) const {
  switch (kind) {
    case FamilyKind::kPoisson: return -std::lgamma(y + 1.0);
    case FamilyKind::kGaussianKnownPhi:
    case FamilyKind::kGaussianUnknownPhi:
      return -y * y / (2.0 * phi_) - 0.5 * (kLog2Pi + std::log(phi_));
    default: return 0.0;
  }
}

double FamilySpec::dc(double y, double phi_) const {
  if (!is_gaussian()) return 0.0;
  return y * y / (2.0 * phi_ * phi_) - 0.5 / phi_;
}

double FamilySpec::d2c(double y, double phi_) const {
  if (!is_gaussian()) return 0.0;
  return -y * y / (phi_ * phi_ * phi_) + 0.5 / (phi_ * phi_);
}

double loglik(const FamilySpec& family, const Vector& eta, const Vector& y,
              double phi, bool* overflow) {
  RequireExpfam(family);
  if (eta.size() != y.size()) {
    throw DomainError("loglik: predictor and response lengths differ");
  }
  if (!(phi > 0)) throw DomainError("loglik: phi must be positive");
  if (overflow) *overflow = false;
  double s = 0.0;
  double c = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double b = family.b(eta[i]);
    if (!std::isfinite(b)) {
      if (overflow) *overflow = true;
      return -kInf;
    }
    s += y[i] * eta[i] - b;
    c += family.c(y[i], phi);
  }
  return s / phi + c;
}

GradHess grad_hess(const FamilySpec& family, const Vector& beta, double phi,
                   const Matrix& Z, const Vector& y, double offset) {
  RequireExpfam(family);
  if (!(phi > 0)) throw DomainError("grad_hess: phi must be positive");
  const Eigen::Index p = Z.cols();
  const Vector eta = (Z * beta).array() + offset;
  Vector resid(y.size());
  Vector w(y.size());
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double mu = family.b1(eta[i]);
    if (!std::isfinite(mu)) throw DomainError("grad_hess: predictor overflow");
    resid[i] = y[i] - mu;
    w[i] = family.b2(eta[i]);
    s += y[i] * eta[i] - family.b(eta[i]);
  }
  const bool with_phi = !family.dispersion_known();
  const Eigen::Index d = with_phi ? p + 1 : p;
  GradHess out{Vector::Zero(d), Matrix::Zero(d, d)};
  out.grad.head(p) = -Z.transpose() * resid / phi;
  out.hess.topLeftCorner(p, p) = Z.transpose() * w.asDiagonal() * Z / phi;
  if (with_phi) {
    double sdc = 0.0;
    double sd2c = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      sdc += family.dc(y[i], phi);
      sd2c += family.d2c(y[i], phi);
    }
    out.grad[p] = s / (phi * phi) - sdc;
    const Vector cross = Z.transpose() * resid / (phi * phi);
    out.hess.col(p).head(p) = cross;
    out.hess.row(p).head(p) = cross.transpose();
    out.hess(p, p) = -2.0 * s / (phi * phi * phi) - sd2c;
  }
  return out;
}

double phi0_mle(const FamilySpec& family, const Vector& y, double offset) {
  if (family.dispersion_known()) return family.phi;
  RequireExpfam(family);
  if (family.is_gaussian()) {
    const double phi0 = (y.array() - offset).square().mean();
    if (!(phi0 > 0)) {
      throw DegenerateResponse("phi0 = 0: response identical to the offset");
    }
    return phi0;
  }
  double s = 0.0;
  for (double yi : y) s += yi * offset - family.b(offset);
  auto score = [&](double phi) {
    double v = -s / (phi * phi);
    for (double yi : y) v += family.dc(yi, phi);
    return v;
  };
  auto slope = [&](double phi) {
    double v = 2.0 * s / (phi * phi * phi);
    for (double yi : y) v += family.d2c(yi, phi);
    return v;
  };
  return BracketedNewton(score, slope, 1e-10, 1e10, 1.0);
}

double s_phi0(const FamilySpec& family, const Vector& y, double phi0,
              double offset) {
  RequireExpfam(family);
  double s = 0.0;
  double sd2c = 0.0;
  for (double yi : y) {
    s += yi * offset - family.b(offset);
    sd2c += family.d2c(yi, phi0);
  }
  const double hpp = -2.0 * s / (phi0 * phi0 * phi0) - sd2c;
  return hpp * phi0 / family.b2(offset);
}

SurvivalData::SurvivalData(Vector log_times, Eigen::VectorXi event)
    : times(std::move(log_times)), status(std::move(event)) {
  if (times.size() != status.size()) {
    throw DomainError("survival data: times and status lengths differ");
  }
  for (Eigen::Index i = 0; i < status.size(); ++i) {
    if (status[i] != 0 && status[i] != 1) {
      throw DomainError("survival data: status must be 0 or 1");
    }
    if (!std::isfinite(times[i])) {
      throw DomainError("survival data: non-finite log-time");
    }
  }
  n_o = status.sum();
}

AftEval aft_loglik_grad_hess(const AftParams& params, const Matrix& Z,
                             const SurvivalData& data) {
  const double tau = params.tau;
  if (!(tau > 0)) throw DomainError("AFT: tau must be positive");
  const Eigen::Index p = Z.cols();
  const Vector lin = p > 0 ? Vector(Z * params.alpha) : Vector::Zero(Z.rows());
  AftEval out{0.0, Vector::Zero(p + 1), Matrix::Zero(p + 1, p + 1)};
  out.loglik = data.n_o * (std::log(tau) - 0.5 * kLog2Pi);
  double g_tau = data.n_o / tau;
  double h_tt = data.n_o / (tau * tau);
  Matrix& H = out.hess;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const double y = data.times[i];
    const double t = tau * y - lin[i];
    double w;   // weight on z z'
    double gz;  // coefficient of z in the log-likelihood gradient
    if (data.status[i] == 1) {
      out.loglik -= 0.5 * t * t;
      gz = t;
      g_tau -= y * t;
      w = 1.0;
    } else {
      out.loglik += log_norm_cdf(-t);
      const double r = mills_ratio(-t);
      gz = r;
      g_tau -= y * r;
      w = mills_d(t);
    }
    const auto z = Z.row(i).transpose();
    out.grad.head(p) -= gz * z;
    H.topLeftCorner(p, p).selfadjointView<Eigen::Lower>().rankUpdate(z, w);
    H.col(p).head(p) -= w * y * z;
    h_tt += w * y * y;
  }
  H.topLeftCorner(p, p) =
      H.topLeftCorner(p, p).selfadjointView<Eigen::Lower>().toDenseMatrix();
  H.row(p).head(p) = H.col(p).head(p).transpose();
  H(p, p) = h_tt;
  out.grad[p] = -g_tau;
  return out;
}

double aft_loglik(const AftParams& params, const Matrix& Z,
                  const SurvivalData& data) {
  const double tau = params.tau;
  if (!(tau > 0)) throw DomainError("AFT: tau must be positive");
  const Vector lin =
      Z.cols() > 0 ? Vector(Z * params.alpha) : Vector::Zero(Z.rows());
  double ll = data.n_o * (std::log(tau) - 0.5 * kLog2Pi);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const double t = tau * data.times[i] - lin[i];
    ll += data.status[i] == 1 ? -0.5 * t * t : log_norm_cdf(-t);
  }
  return ll;
}

bool aft_concavity_check(const Matrix& Z, const SurvivalData& data) {
  const Eigen::Index p = Z.cols();
  if (data.n_o < p) return false;
  if (p == 0) return true;
  Matrix events(data.n_o, p);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    if (data.status[i] == 1) events.row(k++) = Z.row(i);
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(events);
  qr.setThreshold(1e-10);
  return qr.rank() == p;
}

double aft_tau0(const SurvivalData& data) {
  if (data.n_o < 1) throw DegenerateResponse("AFT: no uncensored observation");
  double syy = 0.0;
  for (Eigen::Index i = 0; i < data.times.size(); ++i) {
    if (data.status[i] == 1) syy += data.times[i] * data.times[i];
  }
  auto score = [&](double tau) {
    double v = data.n_o / tau - tau * syy;
    for (Eigen::Index i = 0; i < data.times.size(); ++i) {
      if (data.status[i] == 0) {
        const double y = data.times[i];
        v -= y * mills_ratio(-tau * y);
      }
    }
    return v;
  };
  auto slope = [&](double tau) {
    double v = -data.n_o / (tau * tau) - syy;
    for (Eigen::Index i = 0; i < data.times.size(); ++i) {
      if (data.status[i] == 0) {
        const double y = data.times[i];
        v -= y * y * mills_d(tau * y);
      }
    }
    return v;
  };
  const double guess = syy > 0 ? std::sqrt(data.n_o / syy) : 1.0;
  return BracketedNewton(score, slope, 1e-8, 1e8, guess);
}

double erfcx(double x) {
  if (x < 5.0) return std::exp(x * x) * std::erfc(x);
  // Laplace continued fraction, evaluated backwards.
  double f = x;
  for (int k = 120; k >= 1; --k) f = x + 0.5 * k / f;
  return 1.0 / (std::sqrt(std::numbers::pi) * f);
}

double mills_ratio(double t) {
  if (t < -6.0) {
    return std::sqrt(2.0 / std::numbers::pi) / erfcx(-t / std::numbers::sqrt2);
  }
  const double pdf = std::exp(-0.5 * t * t - 0.5 * kLog2Pi);
  return pdf / (0.5 * std::erfc(-t / std::numbers::sqrt2));
}

double mills_d(double z) {
  const double r = mills_ratio(-z);
  const double d = r * (r - z);
  return std::clamp(d, 0.0, 1.0);
}

double log_norm_cdf(double t) {
  if (t < -6.0) return -0.5 * t * t - 0.5 * kLog2Pi - std::log(mills_ratio(t));
  if (t <= 0.0) return std::log(0.5 * std::erfc(-t / std::numbers::sqrt2));
  return std::log1p(-0.5 * std::erfc(t / std::numbers::sqrt2));
}

}  // namespace ala
