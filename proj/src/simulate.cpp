#include "ala/simulate.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <random>

#include "ala/errors.hpp"

namespace ala {
namespace {

double Expit(double u) { return 1.0 / (1.0 + std::exp(-u)); }

Vector Normals(int n, double sd, Rng& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

Vector Bernoulli(const Vector& prob, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector y(prob.size());
  for (Eigen::Index i = 0; i < prob.size(); ++i) y[i] = unif(rng) < prob[i] ? 1.0 : 0.0;
  return y;
}

Vector PoissonDraws(const Vector& mean, Rng& rng) {
  Vector y(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    std::poisson_distribution<long> pois(mean[i]);
    y[i] = static_cast<double>(pois(rng));
  }
  return y;
}

std::vector<std::string> Names(int p, const std::string& stem = "x") {
  std::vector<std::string> names;
  for (int j = 1; j <= p; ++j) names.push_back(stem + std::to_string(j));
  return names;
}

/// Singleton groups, optionally behind a forced intercept column.
SimDataset Singletons(const Matrix& X, Vector y, bool intercept, const FamilySpec& family,
                      const std::vector<int>& active_covariates,
                      std::vector<std::string> names) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  const int off = intercept ? 1 : 0;
  Matrix full(n, p + off);
  if (intercept) {
    full.col(0).setOnes();
    names.insert(names.begin(), "(Intercept)");
  }
  full.rightCols(p) = X;
  SimDataset out;
  out.family = family;
  std::vector<int> sizes(p + off, 1);
  const std::optional<int> forced = intercept ? std::optional<int>(0) : std::nullopt;
  out.data.design = std::make_shared<const DesignMatrix>(std::move(full), sizes, forced, names);
  out.data.y = std::move(y);
  if (intercept) out.data.group_ids.push_back(-1);
  for (int j = 1; j <= p; ++j) out.data.group_ids.push_back(j);
  out.data.constraints = ConstraintSet(p + off, -1, {}, forced);
  for (int j = 0; j < p; ++j) {
    const bool on = std::find(active_covariates.begin(), active_covariates.end(), j) !=
                    active_covariates.end();
    (on ? out.active : out.inactive).push_back(j + off);
  }
  out.model_prior.constraints = out.data.constraints;
  out.model_prior.p_total = p;
  return out;
}

/// Intercept, p linear groups and p spline-deviation groups, each spline group
/// requiring its linear group.
SimDataset SplineDesign(const Matrix& X, SurvivalData surv) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  constexpr int kDim = 5;
  Matrix full(n, 1 + p + p * kDim);
  full.col(0).setOnes();
  full.middleCols(1, p) = X;
  std::vector<int> sizes(1 + p, 1);
  std::vector<std::string> names{"(Intercept)"};
  for (int j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  std::vector<std::pair<int, int>> deps;
  for (int j = 0; j < p; ++j) {
    full.middleCols(1 + p + j * kDim, kDim) = spline_deviation_basis(X.col(j), kDim);
    sizes.push_back(kDim);
    for (int k = 1; k <= kDim; ++k) names.push_back("x" + std::to_string(j + 1) + "_s" + std::to_string(k));
    deps.emplace_back(1 + p + j, 1 + j);
  }
  SimDataset out;
  out.family = FamilySpec::AftLognormal();
  out.data.design = std::make_shared<const DesignMatrix>(std::move(full), sizes, 0, names);
  out.data.y = surv.times;
  out.data.surv = std::move(surv);
  out.data.group_ids.push_back(-1);
  for (int j = 1; j <= 2 * p; ++j) out.data.group_ids.push_back(j);
  out.data.constraints = ConstraintSet(1 + 2 * p, -1, deps, 0);
  out.model_prior.constraints = out.data.constraints;
  out.model_prior.p_total = p + p * kDim;
  // x1 linear, x2 linear and x2's deviation from linearity.
  out.active = {1, 2, 1 + p + 1};
  for (int j = 1; j < 1 + 2 * p; ++j) {
    if (std::find(out.active.begin(), out.active.end(), j) == out.active.end()) {
      out.inactive.push_back(j);
    }
  }
  return out;
}

SurvivalData Censor(const Vector& log_times, double log_censor) {
  const int n = static_cast<int>(log_times.size());
  Vector y(n);
  Eigen::VectorXi status(n);
  for (int i = 0; i < n; ++i) {
    status[i] = log_times[i] < log_censor ? 1 : 0;
    y[i] = std::min(log_times[i], log_censor);
  }
  return SurvivalData(y, status);
}

}  // namespace

SimDesign ParseSimDesign(const std::string& name) {
  if (name == "fig1") return SimDesign::kFig1;
  if (name == "logistic-fig2") return SimDesign::kLogisticFig2;
  if (name == "poisson-figS1") return SimDesign::kPoissonFigS1;
  if (name == "gmom-accuracy-fig3") return SimDesign::kGmomAccuracy;
  if (name == "aft-scenario1") return SimDesign::kAftScenario1;
  if (name == "aft-scenario2") return SimDesign::kAftScenario2;
  if (name == "is-logistic") return SimDesign::kIsLogistic;
  if (name == "is-poisson") return SimDesign::kIsPoisson;
  if (name == "mixture") return SimDesign::kMixture;
  throw ConfigError("unknown design '" + name +
                    "' (fig1 | logistic-fig2 | poisson-figS1 | gmom-accuracy-fig3 | "
                    "aft-scenario1 | aft-scenario2 | is-logistic | is-poisson | mixture)");
}

std::string SimDesignName(SimDesign design) {
  switch (design) {
    case SimDesign::kFig1: return "fig1";
    case SimDesign::kLogisticFig2: return "logistic-fig2";
    case SimDesign::kPoissonFigS1: return "poisson-figS1";
    case SimDesign::kGmomAccuracy: return "gmom-accuracy-fig3";
    case SimDesign::kAftScenario1: return "aft-scenario1";
    case SimDesign::kAftScenario2: return "aft-scenario2";
    case SimDesign::kIsLogistic: return "is-logistic";
    case SimDesign::kIsPoisson: return "is-poisson";
    case SimDesign::kMixture: return "mixture";
  }
  return "unknown";
}

Matrix equicorrelated_normals(int n, int p, double rho, Rng& rng) {
  if (rho < 0.0 || rho >= 1.0) throw ConfigError("equicorrelation must lie in [0, 1)");
  std::normal_distribution<double> normal;
  Matrix X(n, p);
  const double a = std::sqrt(rho);
  const double b = std::sqrt(1.0 - rho);
  for (int i = 0; i < n; ++i) {
    const double shared = normal(rng);
    for (int j = 0; j < p; ++j) X(i, j) = a * shared + b * normal(rng);
  }
  return X;
}

Matrix random_correlation(int p, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix W(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) W(i, j) = normal(rng);
  }
  const Matrix S = W.transpose() * W;
  const Vector d = S.diagonal().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * S * d.asDiagonal();
}

SimDataset simulate(SimDesign design, const SimOptions& o, Rng& rng) {
  const int n = o.n;
  if (n < 2) throw ConfigError("simulation needs n >= 2");
  switch (design) {
    case SimDesign::kFig1: {
      const Matrix X = Normals(n, 1.0, rng);
      const Vector y = Bernoulli((X.col(0) * o.beta).unaryExpr(&Expit), rng);
      return Singletons(X, y, false, FamilySpec::Logistic(), {0}, {"x1"});
    }
    case SimDesign::kLogisticFig2:
    case SimDesign::kPoissonFigS1: {
      const int p = o.p > 0 ? o.p : 10;
      if (p < 2) throw ConfigError("this design needs p >= 2");
      const Matrix X = equicorrelated_normals(n, p, o.rho, rng);
      const Vector eta = 0.5 * X.col(p - 2) + X.col(p - 1);
      const bool logistic = design == SimDesign::kLogisticFig2;
      const Vector y = logistic ? Bernoulli(eta.unaryExpr(&Expit), rng)
                                : PoissonDraws(eta.array().exp().matrix(), rng);
      return Singletons(X, y, true, logistic ? FamilySpec::Logistic() : FamilySpec::Poisson(),
                        {p - 2, p - 1}, Names(p));
    }
    case SimDesign::kGmomAccuracy: {
      const int p = o.p > 0 ? o.p : 10;
      if (p < 4) throw ConfigError("this design needs p >= 4");
      Matrix X = Normals(n * p, 1.0, rng).reshaped(n, p);
      if (o.correlated) {
        const Matrix V = random_correlation(p, rng);
        X = X * Eigen::LLT<Matrix>(V).matrixU();
      }
      Vector beta = Vector::Zero(p);
      beta.head(4) << 0.4, 0.6, 1.2, 0.8;
      const Vector y = X * beta + Normals(n, 1.0, rng);
      return Singletons(X, y, false, FamilySpec::GaussianKnownPhi(1.0), {0, 1, 2, 3}, Names(p));
    }
    case SimDesign::kAftScenario1:
    case SimDesign::kAftScenario2: {
      const int p = o.p > 0 ? o.p : 10;
      if (p < 2) throw ConfigError("this design needs p >= 2");
      const Matrix X = equicorrelated_normals(n, p, o.rho, rng);
      Vector log_t(n);
      if (design == SimDesign::kAftScenario1) {
        const Vector eps = Normals(n, 0.5, rng);
        for (int i = 0; i < n; ++i) {
          log_t[i] = X(i, 0) + 0.5 * std::log(std::abs(X(i, 1))) + eps[i];
        }
        return SplineDesign(X, Censor(log_t, 0.5));
      }
      // S(t|x) = S0(t)^exp(lp) with S0 the log-Normal(0, 0.5) survivor.
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      const boost::math::normal_distribution<double> std_normal;
      for (int i = 0; i < n; ++i) {
        const double lp = 0.75 * X(i, 0) - 1.25 * std::log(std::abs(X(i, 1)));
        double u = unif(rng);
        while (u <= 0.0) u = unif(rng);
        const double s0 = std::exp(std::log(u) * std::exp(-lp));
        const double cdf = std::clamp(1.0 - s0, 1e-300, 1.0 - 1e-16);
        log_t[i] = 0.5 * boost::math::quantile(std_normal, cdf);
      }
      return SplineDesign(X, Censor(log_t, 0.55));
    }
    case SimDesign::kIsLogistic: {
      // Columns: intercept (not forced) and nine correlated covariates.
      const int p = 9;
      const Matrix Z = equicorrelated_normals(n, p, o.rho, rng);
      Matrix X(n, p + 1);
      X.col(0).setOnes();
      X.rightCols(p) = Z;
      const Vector eta = Vector::Constant(n, 2.0) + 0.5 * Z.col(7) + Z.col(8);
      const Vector y = Bernoulli(eta.unaryExpr(&Expit), rng);
      std::vector<std::string> names{"(Intercept)"};
      for (int j = 2; j <= p + 1; ++j) names.push_back("x" + std::to_string(j));
      return Singletons(X, y, false, FamilySpec::Logistic(), {0, 8, 9}, names);
    }
    case SimDesign::kIsPoisson: {
      const Matrix Z = equicorrelated_normals(n, 5, o.rho, rng);
      Matrix X(n, 10);
      X.leftCols(5) = Z;
      X.rightCols(5) = Z.array().square().matrix();
      const Vector eta = 0.5 * Z.col(3) + Z.col(4);
      const Vector y = PoissonDraws(eta.array().exp().matrix(), rng);
      std::vector<std::string> names = Names(5);
      for (int j = 1; j <= 5; ++j) names.push_back("x" + std::to_string(j) + "_sq");
      return Singletons(X, y, true, FamilySpec::Poisson(), {3, 4}, names);
    }
    case SimDesign::kMixture: {
      const int p = o.p > 0 ? o.p : 10;
      if (p < 3) throw ConfigError("this design needs p >= 3");
      const Matrix X = equicorrelated_normals(n, p, o.rho, rng);
      Vector prob(n);
      for (int i = 0; i < n; ++i) {
        prob[i] = 0.5 * Expit(X(i, 0) + X(i, 1)) + 0.5 * Expit(-1.5 * X(i, 2));
      }
      const Vector y = Bernoulli(prob, rng);
      return Singletons(X, y, true, FamilySpec::Logistic(), {0, 1, 2}, Names(p));
    }
  }
  throw ConfigError("unhandled design");
}

}  // namespace ala
