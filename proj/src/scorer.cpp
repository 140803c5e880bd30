#include "ala/scorer.hpp"

#include <cmath>

#include "ala/errors.hpp"
#include "ala/quadrature.hpp"

namespace ala {

Method ParseMethod(const std::string& name) {
  if (name == "ala") return Method::kAla;
  if (name == "ala-curvadj") return Method::kAlaCurvadj;
  if (name == "ala-refined") return Method::kAlaRefined;
  if (name == "la") return Method::kLa;
  if (name == "exact" || name == "exact-gaussian") return Method::kExactGaussian;
  if (name == "quadrature") return Method::kQuadrature;
  throw ConfigError("unknown method '" + name +
                    "' (ala | ala-curvadj | ala-refined | la | exact | quadrature)");
}

ScorerConfig ScorerConfig::Defaults(const FamilySpec& family) {
  ScorerConfig c;
  c.family = family;
  if (family.kind == FamilyKind::kLogistic || family.kind == FamilyKind::kPoisson) {
    c.curvature = true;
    c.center = Center::kInterceptMle;
  }
  if (!family.dispersion_known()) c.prior.phi_prior = InverseGamma{};
  return c;
}

ModelScorer::ModelScorer(std::shared_ptr<const DesignMatrix> design, Vector y,
                         ScorerConfig config)
    : design_(std::move(design)), y_(std::move(y)), config_(config) {
  if (!config_.family.is_expfam()) {
    throw ConfigError("survival data are required for the AFT family");
  }
  if (config_.method == Method::kAlaCurvadj) {
    config_.curvature = true;
    config_.center = Center::kInterceptMle;
  }
  cache_ = build_cache(design_, y_, config_.family, config_.center);
  ctx_ = ExpfamContext::Make(cache_, config_.family, config_.curvature);
}

ModelScorer::ModelScorer(std::shared_ptr<const DesignMatrix> design,
                         SurvivalData data, ScorerConfig config)
    : design_(std::move(design)), surv_(std::move(data)), config_(config) {
  if (config_.family.kind != FamilyKind::kAftLognormal) {
    throw ConfigError("survival data need the AFT family");
  }
  if (!config_.prior.phi_prior) {
    throw ConfigError("AFT scoring requires a prior on the dispersion");
  }
  y_ = surv_->times;
  cache_ = build_cache(design_, y_, config_.family, Center::kZero);
  tau0_ = aft_tau0(*surv_);
}

ModelScorer ModelScorer::with_method(Method method, int refine_steps) const {
  ModelScorer copy = *this;
  copy.config_.method = method;
  copy.config_.refine_steps = refine_steps;
  return copy;
}

double ModelScorer::phi0() const {
  if (surv_) return 1.0 / (tau0_ * tau0_);
  return ctx_->phi;
}

Matrix ModelScorer::GramOf(const ModelId& model) const {
  Matrix xtx;
  cache_->gram_block(model.columns(), &xtx);
  return xtx;
}

MarginalScore ModelScorer::score(const ModelId& model) const {
  if (model.J() != design_->J()) {
    throw InvalidModel("model has " + std::to_string(model.J()) +
                       " groups, design has " + std::to_string(design_->J()));
  }
  if (surv_) return ScoreAft(model);
  const FamilySpec& family = config_.family;
  AlaOptions options{config_.prior_eval, config_.rank};
  switch (config_.method) {
    case Method::kAla:
    case Method::kAlaCurvadj:
      return family.dispersion_known()
                 ? ala_expfam_known_phi(*ctx_, model, config_.prior, options)
                 : ala_expfam_unknown_phi(*ctx_, model, config_.prior, options);
    case Method::kExactGaussian: {
      if (!family.is_gaussian()) {
        throw ConfigError("exact marginals exist only for Gaussian outcomes");
      }
      MarginalScore out;
      out.method = Method::kExactGaussian;
      out.phi0 = ctx_->phi;
      if (family.dispersion_known()) {
        out.log_ml = config_.prior.kind == PriorKind::kGmom
                         ? exact_gmom_gaussian(*cache_, model, config_.prior.g, family.phi)
                         : exact_gaussian_marginal(*cache_, model, config_.prior, family.phi);
      } else {
        if (config_.prior.kind == PriorKind::kGmom) {
          throw ConfigError("no exact gMOM marginal with unknown dispersion");
        }
        if (!config_.prior.phi_prior) {
          throw ConfigError("unknown-dispersion scoring requires a prior on phi");
        }
        out.log_ml = exact_gaussian_marginal_nig(*cache_, model, config_.prior,
                                                 *config_.prior.phi_prior);
      }
      return out;
    }
    default:
      return ScoreExpfamDense(model);
  }
}

MarginalScore ModelScorer::Quadrature(const Likelihood& lik, const ParamPrior& prior,
                                      const Vector& hint_mean,
                                      const Matrix& hint_cov) const {
  const int d = lik.dim();
  MarginalScore out;
  out.method = Method::kQuadrature;
  auto logf = [&](const Vector& eta) { return lik.value(eta) + prior.log_density(eta); };
  if (d == 0) {
    out.log_ml = logf(Vector(0));
    return out;
  }
  if (d > 2) throw ConfigError("quadrature oracle supports at most 2 parameters");
  auto sd = [&](int k) { return std::sqrt(std::max(hint_cov(k, k), 1e-12)); };
  if (d == 1) {
    out.log_ml = log_integral_1d(
        [&](double x) { return logf(Vector::Constant(1, x)); }, hint_mean[0], sd(0));
  } else {
    out.log_ml = log_integral_2d_whitened(
        [&](double a, double b) {
          Vector e(2);
          e << a, b;
          return logf(e);
        },
        hint_mean.head<2>(), hint_cov.topLeftCorner<2, 2>());
  }
  return out;
}

MarginalScore ModelScorer::ScoreExpfamDense(const ModelId& model) const {
  const FamilySpec& family = config_.family;
  const ParamPriorSpec& spec = config_.prior;
  const int d = model.dim();
  const int n = design_->n();
  ExpFamLikelihood lik(family, design_->columns(model), y_, 0.0);
  const Matrix P0 = d > 0 ? prior_precision(spec, GramOf(model), model, n) : Matrix(0, 0);
  const bool gmom = spec.kind == PriorKind::kGmom;

  std::unique_ptr<ParamPrior> prior;
  Vector init = Vector::Zero(lik.dim());
  if (family.dispersion_known()) {
    prior = std::make_unique<NormalPrior>(P0 / family.phi);
  } else {
    if (!spec.phi_prior) {
      throw ConfigError("unknown-dispersion scoring requires a prior on phi");
    }
    prior = std::make_unique<NormalInvGammaPrior>(P0, *spec.phi_prior);
    init[d] = ctx_->phi;
  }

  MarginalScore out;
  if (config_.method == Method::kQuadrature) {
    if (!family.dispersion_known()) {
      throw ConfigError("quadrature oracle needs a known dispersion");
    }
    const MarginalScore hint = la_marginal(lik, *prior, init);
    if (gmom) {
      GmomPrior full(P0, model, family.phi);
      out = Quadrature(lik, full, hint.post_mean, hint.post_cov);
    } else {
      out = Quadrature(lik, *prior, hint.post_mean, hint.post_cov);
    }
    out.phi0 = ctx_->phi;
    return out;
  }
  if (config_.method == Method::kLa) {
    out = la_marginal(lik, *prior, init);
  } else if (config_.method == Method::kAlaRefined) {
    out = ala_refined(lik, *prior, config_.refine_steps, init, config_.prior_eval);
  } else {
    throw ConfigError("unsupported method for this family");
  }
  if (gmom && d > 0) {
    // Penalty tilt from the Normal approximation under the kernel.
    const double phi = family.dispersion_known() ? family.phi : out.expansion[d];
    const Matrix S = out.post_cov.topLeftCorner(d, d) / phi;
    out.log_ml += gmom_tilt(model, P0, S, out.post_mean.head(d), 1.0 / phi);
  }
  out.phi0 = ctx_->phi;
  return out;
}

MarginalScore ModelScorer::ScoreAft(const ModelId& model) const {
  const int d = model.dim();
  const int n = design_->n();
  const ParamPriorSpec& spec = config_.prior;
  AftLikelihood lik(design_->columns(model), *surv_);
  const Matrix P0 = d > 0 ? prior_precision(spec, GramOf(model), model, n) : Matrix(0, 0);
  AftPrior prior(P0, *spec.phi_prior);
  Vector init = Vector::Zero(d + 1);
  init[d] = tau0_;
  MarginalScore out;
  switch (config_.method) {
    case Method::kAla:
      out = ala_general(lik, prior, init, PriorEval::kPlugin);
      break;
    case Method::kAlaRefined:
      out = ala_refined(lik, prior, config_.refine_steps, init, PriorEval::kPlugin);
      break;
    case Method::kLa:
      out = la_marginal(lik, prior, init);
      break;
    default: {
      MarginalScore named;
      named.method = config_.method;
      throw ConfigError("method '" + named.method_name() +
                        "' is not available for the AFT family");
    }
  }
  if (spec.kind == PriorKind::kGmom && d > 0) {
    out.log_ml += gmom_tilt(model, P0, out.post_cov.topLeftCorner(d, d),
                            out.post_mean.head(d), 1.0);
  }
  out.phi0 = phi0();
  return out;
}

}  // namespace ala
