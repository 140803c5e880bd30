#include <cmath>

#include "ala/errors.hpp"
#include "ala/marginal.hpp"

namespace ala {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

ExpfamContext ExpfamContext::Make(std::shared_ptr<const SuffStatsCache> cache,
                                  const FamilySpec& family, bool curvature) {
  if (!family.is_expfam()) {
    throw ConfigError("cached ALA requires an exponential family");
  }
  ExpfamContext ctx;
  ctx.family = family;
  const TransformTag& tag = cache->tag();
  const Vector& y = cache->y();
  if (family.dispersion_known()) {
    ctx.phi = family.phi;
  } else {
    ctx.phi = phi0_mle(family, y, tag.nu0);
    ctx.s = s_phi0(family, y, ctx.phi, tag.nu0);
  }
  ctx.ell0 = loglik(family, Vector::Constant(y.size(), tag.nu0), y, ctx.phi);
  if (curvature) {
    if (!family.dispersion_known()) {
      throw ConfigError("curvature adjustment needs a known dispersion");
    }
    if (tag.center != Center::kInterceptMle) {
      throw ConfigError("curvature adjustment needs center = intercept-mle");
    }
    ctx.rho = curvature_context(family, y).rho_hat;
    ctx.curvature = true;
  }
  ctx.cache = std::move(cache);
  return ctx;
}

double ExpfamContext::kappa() const {
  return cache->tag().b2 / (rho * phi);
}

double gmom_tilt(const ModelId& model, const Matrix& W, const Matrix& S,
                 const Vector& m, double inv_phi) {
  double out = 0.0;
  for (const GroupRange& r : local_blocks(model)) {
    const Matrix Wj = W.block(r.begin, r.begin, r.size(), r.size());
    const Vector mj = m.segment(r.begin, r.size());
    const double e =
        ((Wj * S.block(r.begin, r.begin, r.size(), r.size())).trace() +
         inv_phi * mj.dot(Wj * mj)) / r.size();
    out += std::log(e);
  }
  return out;
}

MarginalScore ala_expfam_known_phi(const ExpfamContext& ctx,
                                   const ModelId& model,
                                   const ParamPriorSpec& prior,
                                   const AlaOptions& options) {
  if (!ctx.family.dispersion_known()) {
    throw ConfigError("ala_expfam_known_phi: family has unknown dispersion");
  }
  MarginalScore out;
  out.method = ctx.curvature ? Method::kAlaCurvadj : Method::kAla;
  out.rho_hat = ctx.rho;
  out.phi0 = ctx.phi;
  out.expansion = Vector::Zero(model.dim());
  out.log_ml = ctx.ell0;
  const int d = model.dim();
  if (d == 0) return out;

  const SubmodelStats st = submodel_stats(*ctx.cache, model);
  const int n = ctx.cache->design().n();
  const double kappa = ctx.kappa();
  const double phi = ctx.phi;
  const Matrix P0 = prior_precision(prior, st.xtx, model, n);
  const Matrix P = P0 / phi;
  const std::string bits = model.bits();

  Vector m;
  Matrix Sigma;
  if (options.prior_eval == PriorEval::kIntegrated) {
    const Matrix M = kappa * st.xtx + P;
    const SpdFactor fm = spd_factor(M, options.rank, bits);
    const SpdFactor fp = spd_factor(P, options.rank, bits);
    const Vector r = kappa * st.xty;
    m = fm.llt.solve(r);
    out.log_ml += 0.5 * r.dot(m) + 0.5 * fp.logdet - 0.5 * fm.logdet;
    out.jittered = fm.jittered || fp.jittered;
    if (prior.kind == PriorKind::kGmom) Sigma = fm.llt.solve(Matrix::Identity(d, d));
  } else {
    const LsSolution ls = ls_solve(st.xtx, st.xty, options.rank, bits);
    m = ls.beta;
    out.log_ml += 0.5 * kappa * ls.quad + 0.5 * d * (kLog2Pi - std::log(kappa)) -
                  0.5 * ls.factor.logdet + log_normal_precision(ls.beta, P);
    out.jittered = ls.factor.jittered;
    if (prior.kind == PriorKind::kGmom) {
      Sigma = ls.factor.llt.solve(Matrix::Identity(d, d)) / kappa;
    }
  }
  if (prior.kind == PriorKind::kGmom) {
    out.log_ml += gmom_tilt(model, P0, Sigma / phi, m, 1.0 / phi);
  }
  out.post_mean = std::move(m);
  out.post_cov = std::move(Sigma);
  return out;
}

double ala_bf_known_phi(const ExpfamContext& ctx, const ModelId& a,
                        const ModelId& b, const ParamPriorSpec& prior,
                        const AlaOptions& options) {
  if (a == b) return 0.0;
  return ala_expfam_known_phi(ctx, a, prior, options).log_ml -
         ala_expfam_known_phi(ctx, b, prior, options).log_ml;
}

UnknownPhiTerms unknown_phi_terms(const ExpfamContext& ctx,
                                  const SubmodelStats& st, const ModelId& model,
                                  RankPolicy rank) {
  UnknownPhiTerms out;
  const int d = model.dim();
  const double phi0 = ctx.phi;
  const double c = ctx.cache->tag().b2 / phi0;
  double logdet_a = 0.0;
  if (d > 0) {
    const LsSolution ls = ls_solve(st.xtx, st.xty, rank, model.bits());
    out.Q = ls.quad;
    out.beta_tilde = ls.beta;
    logdet_a = ls.factor.logdet;
  } else {
    out.beta_tilde = Vector(0);
  }
  const double denom = phi0 * phi0 * ctx.s - out.Q;
  if (!(denom > 0)) {
    throw NotConcaveAtExpansion(
        "unknown-phi ALA: phi0^2 s(phi0) <= beta~'Z'Z beta~ for model " +
        model.bits());
  }
  out.t = 1.0 + out.Q / denom;
  out.phi_tilde = phi0 - out.Q * phi0 / denom;
  out.quad = c * out.t * out.Q;
  out.logdet_h = (d + 1) * std::log(c) + logdet_a + std::log(denom / (phi0 * phi0));
  return out;
}

MarginalScore ala_expfam_unknown_phi(const ExpfamContext& ctx,
                                     const ModelId& model,
                                     const ParamPriorSpec& prior,
                                     const AlaOptions& options) {
  if (ctx.family.dispersion_known()) {
    throw ConfigError("ala_expfam_unknown_phi: family has known dispersion");
  }
  if (!prior.phi_prior) {
    throw ConfigError("unknown-dispersion scoring requires a prior on phi");
  }
  const InverseGamma& ig = *prior.phi_prior;
  const SubmodelStats st = submodel_stats(*ctx.cache, model);
  const int d = model.dim();
  const int n = ctx.cache->design().n();
  MarginalScore out;
  out.method = Method::kAla;
  out.phi0 = ctx.phi;
  out.expansion = Vector::Zero(d + 1);
  out.expansion[d] = ctx.phi;

  if (prior.kind == PriorKind::kGmom && ctx.family.is_gaussian()) {
    // Exact Normal-IG marginal under the kernel times the penalty tilt.
    out.log_ml = exact_gaussian_marginal_nig(*ctx.cache, model, prior, ig);
    if (d == 0) return out;
    const Matrix W = gmom_kernel_precision(st.xtx, model, n, prior.g);
    Vector m;
    Matrix S;
    double ssr;
    if (options.prior_eval == PriorEval::kIntegrated) {
      const SpdFactor f = spd_factor(st.xtx + W, options.rank, model.bits());
      m = f.llt.solve(st.xty);
      S = f.llt.solve(Matrix::Identity(d, d));
      ssr = ctx.cache->yty() - st.xty.dot(m);
      out.jittered = f.jittered;
    } else {
      const LsSolution ls = ls_solve(st.xtx, st.xty, options.rank, model.bits());
      m = ls.beta;
      S = ls.factor.llt.solve(Matrix::Identity(d, d));
      ssr = ctx.cache->yty() - ls.quad;
      out.jittered = ls.factor.jittered;
    }
    const double inv_phi = (ig.a + 0.5 * n) / (ig.b + 0.5 * ssr);
    out.log_ml += gmom_tilt(model, W, S, m, inv_phi);
    out.post_mean = m;
    out.post_cov = S / inv_phi;
    return out;
  }

  const UnknownPhiTerms terms = unknown_phi_terms(ctx, st, model, options.rank);
  if (!(terms.phi_tilde > 0)) {
    throw NotConcaveAtExpansion("unknown-phi ALA: Newton step gives phi <= 0 for model " +
                                model.bits());
  }
  const Matrix P0 = prior_precision(prior, st.xtx, model, n);
  const Vector beta_t = terms.t * terms.beta_tilde;
  double log_prior = ig.log_density(terms.phi_tilde);
  if (d > 0) log_prior += log_normal_precision(beta_t, P0 / terms.phi_tilde);
  out.log_ml = ctx.ell0 + 0.5 * terms.quad + 0.5 * (d + 1) * kLog2Pi -
               0.5 * terms.logdet_h + log_prior;
  if (prior.kind == PriorKind::kGmom && d > 0) {
    // Penalty tilt at the plug-in dispersion.
    const Matrix S = spd_factor(st.xtx).llt.solve(Matrix::Identity(d, d)) /
                     ctx.cache->tag().b2;
    out.log_ml += gmom_tilt(model, P0, S, beta_t, 1.0 / terms.phi_tilde);
  }
  out.post_mean = beta_t;
  return out;
}

CurvatureContext curvature_context(const FamilySpec& family, const Vector& y) {
  if (!family.is_expfam() || !family.dispersion_known()) {
    throw ConfigError("curvature adjustment needs a known-dispersion exponential family");
  }
  const double n = static_cast<double>(y.size());
  if (n < 2) throw DegenerateResponse("curvature adjustment needs n >= 2");
  const double ybar = y.mean();
  const double ss = (y.array() - ybar).square().sum();
  if (!(ss > 0)) throw DegenerateResponse("response is constant");
  CurvatureContext ctx;
  ctx.nu0 = family.link(ybar);
  if (!std::isfinite(ctx.nu0)) throw DegenerateResponse("h(ybar) is not finite");
  ctx.bpp_nu0 = family.b2(ctx.nu0);
  ctx.rho_hat = ss / (family.phi * ctx.bpp_nu0 * (n - 1.0));
  return ctx;
}

double ala_curvadj_bf(const ModelId& a, const ModelId& b,
                      const CurvatureContext& cc,
                      std::shared_ptr<const SuffStatsCache> cache,
                      const FamilySpec& family, const ParamPriorSpec& prior,
                      const AlaOptions& options) {
  if (cache->tag().center != Center::kInterceptMle) {
    throw ConfigError("curvature-adjusted Bayes factors need center = intercept-mle");
  }
  ExpfamContext ctx = ExpfamContext::Make(std::move(cache), family, false);
  ctx.rho = cc.rho_hat;
  ctx.curvature = true;
  return ala_bf_known_phi(ctx, a, b, prior, options);
}

}  // namespace ala
