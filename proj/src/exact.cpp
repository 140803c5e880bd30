#include <cmath>
#include <string>
#include <unordered_map>

#include "ala/errors.hpp"
#include "ala/marginal.hpp"

namespace ala {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void RequireGaussianCache(const SuffStatsCache& cache) {
  const TransformTag& t = cache.tag();
  if (t.nu0 != 0.0 || t.b1 != 0.0 || t.b2 != 1.0) {
    throw ConfigError("exact Gaussian marginals need an uncentred Gaussian cache");
  }
}

struct Conjugate {
  double logdet_p0 = 0.0;
  double logdet_m = 0.0;
  double fit = 0.0;  // b' (A + P0)^{-1} b
  Vector mean;
  SpdFactor factor;
};

Conjugate Solve(const SuffStatsCache& cache, const ModelId& model,
                const Matrix& P0) {
  Conjugate c;
  if (model.dim() == 0) {
    c.mean = Vector(0);
    return c;
  }
  const SubmodelStats st = submodel_stats(cache, model);
  c.logdet_p0 = spd_factor(P0, RankPolicy::kThrow, model.bits()).logdet;
  c.factor = spd_factor(st.xtx + P0, RankPolicy::kThrow, model.bits());
  c.logdet_m = c.factor.logdet;
  c.mean = c.factor.llt.solve(st.xty);
  c.fit = st.xty.dot(c.mean);
  return c;
}

Matrix PriorP0(const SuffStatsCache& cache, const ModelId& model,
               const ParamPriorSpec& prior) {
  if (model.dim() == 0) return Matrix(0, 0);
  Matrix xtx;
  cache.gram_block(model.columns(), &xtx);
  return prior_precision(prior, xtx, model, cache.design().n());
}

class MomentMemo {
 public:
  MomentMemo(const Vector& mu, const Matrix& sigma) : mu_(mu), sigma_(sigma) {}

  double Get(std::vector<int>& a) {
    int i = 0;
    while (i < static_cast<int>(a.size()) && a[i] == 0) ++i;
    if (i == static_cast<int>(a.size())) return 1.0;
    const std::string key(a.begin(), a.end());
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    // Stein: E[x_i x^b] = mu_i E[x^b] + sum_k Sigma_ik b_k E[x^{b - e_k}].
    --a[i];
    double v = mu_[i] * Get(a);
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a[k] == 0 || sigma_(i, k) == 0.0) continue;
      const double coef = sigma_(i, k) * a[k];
      --a[k];
      v += coef * Get(a);
      ++a[k];
    }
    ++a[i];
    memo_.emplace(key, v);
    return v;
  }

 private:
  const Vector& mu_;
  const Matrix& sigma_;
  std::unordered_map<std::string, double> memo_;
};

}  // namespace

double gaussian_product_moment(const Vector& mu, const Matrix& Sigma,
                               const std::vector<int>& exponents) {
  if (static_cast<Eigen::Index>(exponents.size()) != mu.size()) {
    throw DomainError("product moment: exponent vector has the wrong length");
  }
  MomentMemo memo(mu, Sigma);
  std::vector<int> a = exponents;
  return memo.Get(a);
}

double exact_gaussian_marginal(const SuffStatsCache& cache, const ModelId& model,
                               const ParamPriorSpec& prior, double phi) {
  RequireGaussianCache(cache);
  const int n = cache.design().n();
  const Conjugate c = Solve(cache, model, PriorP0(cache, model, prior));
  return -0.5 * n * (kLog2Pi + std::log(phi)) - 0.5 * cache.yty() / phi +
         0.5 * c.logdet_p0 - 0.5 * c.logdet_m + 0.5 * c.fit / phi;
}

double exact_gaussian_marginal_nig(const SuffStatsCache& cache,
                                   const ModelId& model,
                                   const ParamPriorSpec& prior,
                                   const InverseGamma& ig) {
  RequireGaussianCache(cache);
  const double n = cache.design().n();
  const Conjugate c = Solve(cache, model, PriorP0(cache, model, prior));
  const double ssr = cache.yty() - c.fit;
  const double a_n = ig.a + 0.5 * n;
  return -0.5 * n * kLog2Pi + 0.5 * c.logdet_p0 - 0.5 * c.logdet_m +
         ig.a * std::log(ig.b) - std::lgamma(ig.a) + std::lgamma(a_n) -
         a_n * std::log(ig.b + 0.5 * ssr);
}

double exact_gmom_gaussian(const SuffStatsCache& cache, const ModelId& model,
                           double g, double phi) {
  ParamPriorSpec kernel;
  kernel.kind = PriorKind::kGmom;
  kernel.g = g;
  const double base = exact_gaussian_marginal(cache, model, kernel, phi);
  const int d = model.dim();
  if (d == 0) return base;
  const Matrix W = PriorP0(cache, model, kernel);
  const Conjugate c = Solve(cache, model, W);
  const Matrix Sigma = phi * c.factor.llt.solve(Matrix::Identity(d, d));

  // Whiten each group so its penalty becomes a plain sum of squares.
  const std::vector<GroupRange> blocks = local_blocks(model);
  Matrix L = Matrix::Zero(d, d);
  double log_norm = 0.0;
  for (const GroupRange& r : blocks) {
    Eigen::LLT<Matrix> llt(W.block(r.begin, r.begin, r.size(), r.size()));
    L.block(r.begin, r.begin, r.size(), r.size()) = llt.matrixL();
    log_norm += std::log(phi * r.size());
  }
  const Vector mu = L.transpose() * c.mean;
  const Matrix S = L.transpose() * Sigma * L;

  // E[prod_j sum_k x_{jk}^2] expanded over one coordinate per group.
  MomentMemo memo(mu, S);
  std::vector<int> pick(blocks.size(), 0);
  double total = 0.0;
  for (;;) {
    std::vector<int> a(d, 0);
    for (std::size_t j = 0; j < blocks.size(); ++j) a[blocks[j].begin + pick[j]] = 2;
    total += memo.Get(a);
    std::size_t j = 0;
    while (j < blocks.size() && ++pick[j] == blocks[j].size()) pick[j++] = 0;
    if (j == blocks.size()) break;
  }
  if (!(total > 0)) throw DomainError("gMOM product moment is not positive");
  return base + std::log(total) - log_norm;
}

}  // namespace ala
