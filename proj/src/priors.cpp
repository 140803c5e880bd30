#include "ala/priors.hpp"

#include <cmath>
#include <limits>

#include "ala/errors.hpp"

namespace ala {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double LogChoose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

Matrix BlockScaled(const Matrix& xtx, const ModelId& model, int n, double g,
                   bool gmom) {
  if (!(g > 0)) throw ConfigError("prior dispersion g must be positive");
  Matrix P = Matrix::Zero(xtx.rows(), xtx.cols());
  for (const GroupRange& r : local_blocks(model)) {
    const double pj = r.size();
    const double scale = gmom ? (pj + 2.0) / (n * g) : pj / (n * g);
    P.block(r.begin, r.begin, r.size(), r.size()) =
        scale * xtx.block(r.begin, r.begin, r.size(), r.size());
  }
  return P;
}

}  // namespace

double InverseGamma::log_density(double x) const {
  if (!(x > 0)) return -std::numeric_limits<double>::infinity();
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

PriorKind ParamPriorSpec::ParseKind(const std::string& name) {
  if (name == "zellner" || name == "group-zellner") return PriorKind::kGroupZellner;
  if (name == "gmom") return PriorKind::kGmom;
  throw ConfigError("unknown prior '" + name + "' (zellner | gmom)");
}

std::string ParamPriorSpec::name() const {
  return kind == PriorKind::kGmom ? "gmom" : "zellner";
}

std::vector<GroupRange> local_blocks(const ModelId& model) {
  std::vector<GroupRange> out;
  int begin = 0;
  for (int j : model.active()) {
    const int s = model.layout().size(j);
    out.push_back({begin, begin + s});
    begin += s;
  }
  return out;
}

Matrix zellner_precision(const Matrix& xtx, const ModelId& model, int n,
                         double g) {
  return BlockScaled(xtx, model, n, g, false);
}

Matrix gmom_kernel_precision(const Matrix& xtx, const ModelId& model, int n,
                             double g) {
  return BlockScaled(xtx, model, n, g, true);
}

Matrix prior_precision(const ParamPriorSpec& spec, const Matrix& xtx,
                       const ModelId& model, int n) {
  return spec.kind == PriorKind::kGmom
             ? gmom_kernel_precision(xtx, model, n, spec.g)
             : zellner_precision(xtx, model, n, spec.g);
}

double log_normal_precision(const Vector& x, const Matrix& P) {
  if (x.size() == 0) return 0.0;
  const SpdFactor f = spd_factor(P);
  return -0.5 * x.size() * kLog2Pi + 0.5 * f.logdet - 0.5 * x.dot(P * x);
}

double log_gzellner(const Vector& beta, double phi, const ModelId& model,
                    const SuffStatsCache& cache, double g) {
  const SubmodelStats st = submodel_stats(cache, model);
  const Matrix P = zellner_precision(st.xtx, model, cache.design().n(), g) / phi;
  double out = 0.0;
  for (const GroupRange& r : local_blocks(model)) {
    out += log_normal_precision(beta.segment(r.begin, r.size()),
                                P.block(r.begin, r.begin, r.size(), r.size()));
  }
  return out;
}

double log_gmom_penalty(const Vector& beta, double phi, const Matrix& W,
                        const ModelId& model) {
  double out = 0.0;
  for (const GroupRange& r : local_blocks(model)) {
    const auto bj = beta.segment(r.begin, r.size());
    const double q = bj.dot(W.block(r.begin, r.begin, r.size(), r.size()) * bj);
    out += std::log(q / (phi * r.size()));
  }
  return out;
}

double log_gmom(const Vector& beta, double phi, const ModelId& model,
                const SuffStatsCache& cache, double g) {
  const SubmodelStats st = submodel_stats(cache, model);
  const Matrix W = gmom_kernel_precision(st.xtx, model, cache.design().n(), g);
  double out = log_gmom_penalty(beta, phi, W, model);
  if (!std::isfinite(out)) return out;
  for (const GroupRange& r : local_blocks(model)) {
    out += log_normal_precision(
        beta.segment(r.begin, r.size()),
        W.block(r.begin, r.begin, r.size(), r.size()) / phi);
  }
  return out;
}

double log_model_prior(const ModelId& model, const ModelPriorSpec& spec) {
  if (!spec.constraints.satisfied(model)) {
    return -std::numeric_limits<double>::infinity();
  }
  const int k = spec.constraints.free_size(model);
  const int J = spec.constraints.free_count();
  return -spec.c * k * std::log(static_cast<double>(spec.p_total)) -
         LogChoose(J, k);
}

double log_model_prior_ratio(const ModelId& a, const ModelId& b,
                             const ModelPriorSpec& spec) {
  for (const ModelId* m : {&a, &b}) {
    const std::string why = spec.constraints.violation(*m);
    if (!why.empty()) throw InvalidModel("model " + m->bits() + ": " + why);
  }
  return log_model_prior(a, spec) - log_model_prior(b, spec);
}

double quadratic_mean_known_phi(const Matrix& A, const Matrix& S, const Vector& m,
                        double phi) {
  return (A * S).trace() + m.dot(A * m) / phi;
}

double quadratic_mean_inverse_gamma(const Matrix& A, const Matrix& S, const Vector& m,
                            const InverseGamma& ig) {
  return (A * S).trace() + ig.mean_inverse() * m.dot(A * m);
}

}  // namespace ala
