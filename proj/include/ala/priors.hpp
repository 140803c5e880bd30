#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ala/data_model.hpp"

namespace ala {

/// Inverse gamma with shape a and scale b: density b^a/Gamma(a) x^{-a-1} e^{-b/x}.
struct InverseGamma {
  double a = 0.01;
  double b = 0.01;

  double log_density(double x) const;
  double mean_inverse() const { return a / b; }
};

enum class PriorKind { kGroupZellner, kGmom };

struct ParamPriorSpec {
  PriorKind kind = PriorKind::kGroupZellner;
  double g = 1.0;
  /// Prior on the dispersion; required for unknown-dispersion families.
  std::optional<InverseGamma> phi_prior;

  static PriorKind ParseKind(const std::string& name);
  std::string name() const;
};

/// Column ranges of each active group inside beta_gamma.
std::vector<GroupRange> local_blocks(const ModelId& model);

/// blockdiag(p_j / (g n) * Z_j'Z_j): the group-Zellner precision times phi.
Matrix zellner_precision(const Matrix& xtx, const ModelId& model, int n,
                         double g);
/// blockdiag(W_j), W_j = Z_j'Z_j (p_j + 2) / (n g): the gMOM kernel
/// precision times phi.
Matrix gmom_kernel_precision(const Matrix& xtx, const ModelId& model, int n,
                             double g);
/// Precision times phi of the Normal part of the prior: Zellner or the gMOM
/// kernel.
Matrix prior_precision(const ParamPriorSpec& spec, const Matrix& xtx,
                       const ModelId& model, int n);

/// log N(x; 0, P^{-1}). Throws NotInvertible when P is singular.
double log_normal_precision(const Vector& x, const Matrix& P);

double log_gzellner(const Vector& beta, double phi, const ModelId& model,
                    const SuffStatsCache& cache, double g);
/// -inf when some active group has beta_j = 0.
double log_gmom(const Vector& beta, double phi, const ModelId& model,
                const SuffStatsCache& cache, double g);
/// Sum over groups of log(beta_j' W_j beta_j / (phi p_j)), W as above.
double log_gmom_penalty(const Vector& beta, double phi, const Matrix& W,
                        const ModelId& model);

struct ModelPriorSpec {
  double c = 0.0;  ///< complexity exponent; 0 gives Beta-Binomial(1, 1)
  ConstraintSet constraints{0};
  int p_total = 1;  ///< p in the p^{-c |gamma|} penalty
};

/// log p(gamma) up to the normalizing constant; -inf outside the constraint
/// set.
double log_model_prior(const ModelId& model, const ModelPriorSpec& spec);
/// Throws InvalidModel if either model violates the constraints.
double log_model_prior_ratio(const ModelId& a, const ModelId& b,
                             const ModelPriorSpec& spec);

/// E[xi' A xi / phi] for xi ~ N(m, phi S).
double quadratic_mean_known_phi(const Matrix& A, const Matrix& S, const Vector& m,
                        double phi);
/// The same expectation with phi ~ IG(a, b) integrated out.
double quadratic_mean_inverse_gamma(const Matrix& A, const Matrix& S, const Vector& m,
                            const InverseGamma& ig);

}  // namespace ala
