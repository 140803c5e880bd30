#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ala/io.hpp"
#include "ala/priors.hpp"
#include "ala/rng.hpp"

namespace ala {

enum class SimDesign {
  kFig1,             ///< one covariate, logistic, no intercept
  kLogisticFig2,     ///< logistic, beta* = (0, ..., 0, 0.5, 1)
  kPoissonFigS1,     ///< Poisson, same coefficients
  kGmomAccuracy,     ///< Gaussian phi = 1, beta* = (0.4, 0.6, 1.2, 0.8, 0, ...)
  kAftScenario1,     ///< log T = x1 + 0.5 log|x2| + N(0, 0.5^2), censored at 0.5
  kAftScenario2,     ///< proportional hazards truth, censored at 0.55
  kIsLogistic,       ///< logistic with intercept 2, beta_9 = 0.5, beta_10 = 1
  kIsPoisson,        ///< Poisson with five linear and five squared terms
  kMixture,          ///< two-component logistic mixture, Gaussian covariates
};

SimDesign ParseSimDesign(const std::string& name);
std::string SimDesignName(SimDesign design);

struct SimOptions {
  int n = 100;
  /// Covariates (excluding any intercept); 0 picks the design default.
  int p = 0;
  double rho = 0.5;
  /// Coefficient of the single covariate in kFig1.
  double beta = 1.099;
  /// kGmomAccuracy: random non-diagonal covariate correlation.
  bool correlated = false;
};

struct SimDataset {
  Dataset data;
  FamilySpec family;
  ModelPriorSpec model_prior;
  /// Design groups with a nonzero data-generating effect.
  std::vector<int> active;
  std::vector<int> inactive;
};

/// n x p Gaussian rows with unit variances and all pairwise correlations rho.
Matrix equicorrelated_normals(int n, int p, double rho, Rng& rng);
/// Correlation matrix of W'W for a p x p standard Gaussian W.
Matrix random_correlation(int p, Rng& rng);

SimDataset simulate(SimDesign design, const SimOptions& options, Rng& rng);

}  // namespace ala
