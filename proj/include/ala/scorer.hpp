#pragma once

#include <memory>
#include <optional>
#include <string>

#include "ala/data_model.hpp"
#include "ala/marginal.hpp"
#include "ala/priors.hpp"

namespace ala {

Method ParseMethod(const std::string& name);

struct ScorerConfig {
  FamilySpec family;
  ParamPriorSpec prior;
  Method method = Method::kAla;
  int refine_steps = 1;
  PriorEval prior_eval = PriorEval::kIntegrated;
  Center center = Center::kZero;
  bool curvature = false;
  RankPolicy rank = RankPolicy::kJitter;

  /// Curvature adjustment (and intercept-MLE centering) on for logistic and
  /// Poisson, off otherwise.
  static ScorerConfig Defaults(const FamilySpec& family);
};

/// Scores models of one dataset with one configured engine. Thread-safe.
class ModelScorer {
 public:
  ModelScorer(std::shared_ptr<const DesignMatrix> design, Vector y,
              ScorerConfig config);
  ModelScorer(std::shared_ptr<const DesignMatrix> design, SurvivalData data,
              ScorerConfig config);

  MarginalScore score(const ModelId& model) const;

  /// Same data and cache with a different method.
  ModelScorer with_method(Method method, int refine_steps = 0) const;

  const ScorerConfig& config() const { return config_; }
  const DesignMatrix& design() const { return *design_; }
  const std::shared_ptr<const DesignMatrix>& design_ptr() const { return design_; }
  const std::shared_ptr<const SuffStatsCache>& cache() const { return cache_; }
  /// Null for the AFT family.
  const ExpfamContext* context() const { return ctx_ ? &*ctx_ : nullptr; }
  double rho_hat() const { return ctx_ ? ctx_->rho : 1.0; }
  /// phi (known), phi0 (unknown dispersion) or tau0^{-2} (AFT).
  double phi0() const;

 private:
  ModelScorer() = default;
  MarginalScore ScoreExpfamDense(const ModelId& model) const;
  MarginalScore ScoreAft(const ModelId& model) const;
  MarginalScore Quadrature(const Likelihood& lik, const ParamPrior& prior,
                           const Vector& hint_mean, const Matrix& hint_cov) const;
  Matrix GramOf(const ModelId& model) const;

  std::shared_ptr<const DesignMatrix> design_;
  Vector y_;
  std::optional<SurvivalData> surv_;
  ScorerConfig config_;
  std::shared_ptr<const SuffStatsCache> cache_;
  std::optional<ExpfamContext> ctx_;
  double tau0_ = 1.0;
};

}  // namespace ala
