#include "ala/study.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "ala/errors.hpp"
#include "ala/quadrature.hpp"

namespace ala {
namespace {

using Clock = std::chrono::steady_clock;

/// Wraps a scorer, recording total time spent in fresh evaluations.
struct TimedMemo {
  explicit TimedMemo(const ModelScorer& scorer)
      : memo([this, &scorer](const ModelId& m) {
          const auto t0 = Clock::now();
          MarginalScore s = scorer.score(m);
          nanos += std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
          return s;
        }) {}
  double seconds_per_model() const {
    const auto k = memo.evaluations();
    return k ? nanos.load() * 1e-9 / static_cast<double>(k) : 0.0;
  }
  std::atomic<std::int64_t> nanos{0};
  ScoreMemo memo;
};

ModelPriorSpec PriorFor(const SimDataset& sim, const StudyOptions& study) {
  ModelPriorSpec p = sim.model_prior;
  p.c = study.c;
  return p;
}

ParamPriorSpec ParamPriorFor(const SimDataset& sim, const StudyOptions& study) {
  ParamPriorSpec p = ScorerConfig::Defaults(sim.family).prior;
  p.kind = study.prior;
  p.g = study.g;
  return p;
}

struct Emitter {
  std::vector<MetricRow>* rows;
  int replicate;
  std::uint64_t seed;
  int n;
  void operator()(const std::string& method, const std::string& stratum,
                  const std::string& metric, double value) const {
    rows->push_back({replicate, seed, n, method, stratum, metric, value});
  }
};

std::vector<StudyMethod> MethodsOr(const StudyOptions& study,
                                   std::initializer_list<const char*> fallback) {
  if (!study.methods.empty()) return study.methods;
  std::vector<StudyMethod> out;
  for (const char* name : fallback) out.push_back(ParseStudyMethod(name));
  return out;
}

bool IsActive(const SimDataset& sim, int j) {
  return std::find(sim.active.begin(), sim.active.end(), j) != sim.active.end();
}

PosteriorSummary Search(ScoreMemo& memo, const SimDataset& sim, const ModelPriorSpec& prior,
                        const StudyOptions& study, std::uint64_t seed) {
  auto layout = sim.data.design->layout_ptr();
  if (!study.gibbs) return enumerate_posterior(memo, prior, layout, 25, 1);
  GibbsOptions g;
  g.n_scans = study.n_scans;
  g.seed = seed;
  return gibbs_models(memo, prior, layout, g);
}

void InclusionMetrics(const SimDataset& sim, const StudyOptions& study, const Emitter& emit) {
  const ModelPriorSpec prior = PriorFor(sim, study);
  const ParamPriorSpec pp = ParamPriorFor(sim, study);
  for (const StudyMethod& m : MethodsOr(study, {"ala"})) {
    const ModelScorer scorer = make_scorer(sim.data, sim.family, pp, m);
    TimedMemo timed(scorer);
    const PosteriorSummary s = Search(timed.memo, sim, prior, study, emit.seed);
    double act = 0.0, inact = 0.0;
    for (int j : sim.active) act += s.inclusion[j];
    for (int j : sim.inactive) inact += s.inclusion[j];
    if (!sim.active.empty()) act /= static_cast<double>(sim.active.size());
    if (!sim.inactive.empty()) inact /= static_cast<double>(sim.inactive.size());
    const ModelId& top = s.top_model().model;
    bool correct = true;
    for (int j = 0; j < top.J(); ++j) {
      if (sim.data.design->intercept_group() == j) continue;
      correct = correct && (top.test(j) == IsActive(sim, j));
    }
    emit(m.label, "all", "mean_inclusion_active", act);
    emit(m.label, "all", "mean_inclusion_inactive", inact);
    emit(m.label, "all", "correct_selection", correct ? 1.0 : 0.0);
    emit(m.label, "all", "top_model_prob", s.top_model().prob);
    emit(m.label, "all", "seconds_per_model", timed.seconds_per_model());
    emit(m.label, "all", "models_scored", static_cast<double>(timed.memo.evaluations()));
    if (s.kind == PosteriorSummary::Kind::kGibbs) {
      emit(m.label, "all", "constraint_violations", static_cast<double>(s.constraint_violations));
    }
    for (int j = 0; j < top.J(); ++j) {
      const long id = sim.data.group_ids[j];
      emit(m.label, "group=" + (id < 0 ? std::string("intercept") : std::to_string(id)),
           "inclusion", s.inclusion[j]);
    }
  }
}

/// One covariate, N(0, 1) prior, no intercept: every method against the
/// quadrature oracle.
void Fig1Metrics(const SimDataset& sim, const StudyOptions& study, const Emitter& emit) {
  const Matrix& X = sim.data.design->values();
  ExpFamLikelihood lik(sim.family, X, sim.data.y);
  NormalPrior prior(Matrix::Identity(1, 1));
  const MarginalScore la = la_marginal(lik, prior, Vector::Zero(1));
  const double sd = std::sqrt(la.post_cov(0, 0));
  const double quad = log_integral_1d(
      [&](double b) {
        const Vector e = Vector::Constant(1, b);
        return lik.value(e) + prior.log_density(e);
      },
      la.post_mean[0], sd);
  emit("quadrature", "model", "log_ml", quad);
  for (const StudyMethod& m : MethodsOr(study, {"ala", "la"})) {
    double v = 0.0;
    switch (m.method) {
      case Method::kAla:
      case Method::kAlaCurvadj:
        v = ala_general(lik, prior, Vector::Zero(1)).log_ml;
        break;
      case Method::kAlaRefined:
        v = ala_refined(lik, prior, m.refine_steps, Vector::Zero(1)).log_ml;
        break;
      case Method::kLa:
        v = la.log_ml;
        break;
      case Method::kQuadrature:
        v = quad;
        break;
      default:
        throw ConfigError("method '" + m.label + "' does not apply to fig1");
    }
    emit(m.label, "model", "log_ml", v);
    emit(m.label, "model", "log_error", v - quad);
    emit(m.label, "model", "rel_error", (v - quad) / std::abs(quad));
    emit(m.label, "model", "underestimates", v < quad ? 1.0 : 0.0);
  }
}

/// Every model scored by each method against the exact gMOM marginal.
void GmomAccuracyMetrics(const SimDataset& sim, const StudyOptions& study, const Emitter& emit) {
  ScorerConfig cfg = ScorerConfig::Defaults(sim.family);
  cfg.prior.kind = PriorKind::kGmom;
  cfg.prior.g = study.g;
  const ModelScorer scorer(sim.data.design, sim.data.y, cfg);
  const DesignMatrix& design = *sim.data.design;
  const int n = design.n();
  const double phi = sim.family.phi;
  const auto models = enumerate_models(design.layout_ptr(), sim.data.constraints, 16);
  const auto methods = MethodsOr(study, {"ala", "la"});

  std::map<std::pair<std::string, int>, std::vector<double>> errors;
  for (const ModelId& model : models) {
    if (model.size() == 0) continue;
    const double exact = scorer.with_method(Method::kExactGaussian).score(model).log_ml;
    for (const StudyMethod& m : methods) {
      double v = 0.0;
      if (m.method == Method::kLa) {
        // Laplace directly on the non-local posterior, started at least squares.
        const Matrix Z = design.columns(model);
        const Matrix W = gmom_kernel_precision(Z.transpose() * Z, model, n, study.g);
        ExpFamLikelihood lik(sim.family, Z, sim.data.y);
        GmomPrior prior(W, model, phi);
        const Vector init = Z.colPivHouseholderQr().solve(sim.data.y);
        v = la_gmom_direct(lik, prior, init).log_ml;
      } else {
        v = scorer.with_method(m.method, m.refine_steps).score(model).log_ml;
      }
      errors[{m.label, model.size()}].push_back(v - exact);
    }
  }
  for (const auto& [key, errs] : errors) {
    double mean = 0.0, abs_mean = 0.0;
    for (double e : errs) {
      mean += e;
      abs_mean += std::abs(e);
    }
    const std::string stratum = "size=" + std::to_string(key.second);
    emit(key.first, stratum, "mean_log_error", mean / errs.size());
    emit(key.first, stratum, "mean_abs_log_error", abs_mean / errs.size());
  }
}

/// ALA Gibbs draws re-weighted by LA, plus ALA screening followed by LA.
void ImportanceMetrics(const SimDataset& sim, const StudyOptions& study, const Emitter& emit) {
  const ModelPriorSpec prior = PriorFor(sim, study);
  const ParamPriorSpec pp = ParamPriorFor(sim, study);
  const ModelScorer ala = make_scorer(sim.data, sim.family, pp, ParseStudyMethod("ala"));
  const ModelScorer la = ala.with_method(Method::kLa);
  ScoreMemo ala_memo([&](const ModelId& m) { return ala.score(m); });
  ScoreMemo la_memo([&](const ModelId& m) { return la.score(m); });
  auto layout = sim.data.design->layout_ptr();

  GibbsOptions g;
  g.n_scans = study.n_scans;
  g.seed = emit.seed;
  const PosteriorSummary chain = gibbs_models(ala_memo, prior, layout, g);
  const ImportanceReport r = importance_reweight(chain.samples(), la_memo, ala_memo);
  emit("is", "all", "ess_fraction", r.effective_sample_size / static_cast<double>(r.draws));
  emit("is", "all", "degenerate", r.degenerate ? 1.0 : 0.0);
  emit("is", "all", "max_weight", r.max_weight);
  emit("is", "all", "max_normalized_weight", r.max_normalized_weight);
  emit("is", "all", "distinct_models", static_cast<double>(r.models.size()));

  const PosteriorSummary ala_post = enumerate_posterior(ala_memo, prior, layout, 25, 1);
  const PosteriorSummary la_post = enumerate_posterior(la_memo, prior, layout, 25, 1);
  emit("is", "all", "max_inclusion_gap_vs_la",
       (r.inclusion - la_post.inclusion).cwiseAbs().maxCoeff());
  emit("ala", "all", "max_inclusion_gap_vs_la",
       (ala_post.inclusion - la_post.inclusion).cwiseAbs().maxCoeff());

  // Weights over the whole enumerated space rather than the sampled support.
  auto log_posts = [](const PosteriorSummary& post) {
    std::unordered_map<ModelId, double, ModelIdHash> out;
    double m = -INFINITY;
    for (const auto& e : post.models) m = std::max(m, e.log_score + e.log_prior);
    double sum = 0.0;
    for (const auto& e : post.models) sum += std::exp(e.log_score + e.log_prior - m);
    for (const auto& e : post.models) out[e.model] = e.log_score + e.log_prior - m - std::log(sum);
    return out;
  };
  const auto la_log = log_posts(la_post);
  const auto ala_log = log_posts(ala_post);
  double max_log10_w = -INFINITY;
  int huge = 0;
  for (const auto& [model, lp] : la_log) {
    const double log10_w = (lp - ala_log.at(model)) / std::log(10.0);
    max_log10_w = std::max(max_log10_w, log10_w);
    if (log10_w > 10.0) ++huge;
  }
  emit("is", "all", "full_space_max_log10_weight", max_log10_w);
  emit("is", "all", "full_space_fraction_weight_over_1e10",
       huge / static_cast<double>(la_log.size()));

  const PosteriorSummary screened =
      screen_then_refine(ala_post, study.screen_threshold, la_memo, prior, layout);
  bool kept = true;
  for (int j : sim.active) kept = kept && ala_post.inclusion[j] > study.screen_threshold;
  emit("screen", "all", "active_survive", kept ? 1.0 : 0.0);
  emit("screen", "all", "max_inclusion_gap_vs_la",
       (screened.inclusion - la_post.inclusion).cwiseAbs().maxCoeff());
}

std::string Fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

StudyMethod ParseStudyMethod(const std::string& token) {
  StudyMethod m;
  m.label = token;
  std::string name = token;
  if (const auto colon = token.find(':'); colon != std::string::npos) {
    name = token.substr(0, colon);
    const std::string k = token.substr(colon + 1);
    try {
      std::size_t used = 0;
      m.refine_steps = std::stoi(k, &used);
      if (used != k.size() || m.refine_steps < 0) throw std::invalid_argument(k);
    } catch (const std::exception&) {
      throw ConfigError("bad refinement count in '" + token + "'");
    }
    if (name != "ala-refined") throw ConfigError("only ala-refined takes ':k', got '" + token + "'");
  }
  if (name == "ala-unadjusted") {
    m.method = Method::kAla;
    m.curvature = false;
    return m;
  }
  m.method = ParseMethod(name);
  if (m.method == Method::kAlaCurvadj) m.curvature = true;
  return m;
}

ModelScorer make_scorer(const Dataset& data, const FamilySpec& family,
                        const ParamPriorSpec& prior, const StudyMethod& method) {
  ScorerConfig cfg = ScorerConfig::Defaults(family);
  if (!data.design->intercept_group()) {
    // Without a forced intercept the centring offset would act as one.
    cfg.curvature = false;
    cfg.center = Center::kZero;
  }
  cfg.prior = prior;
  if (!family.dispersion_known() && !cfg.prior.phi_prior) cfg.prior.phi_prior = InverseGamma{};
  cfg.method = method.method;
  cfg.refine_steps = method.refine_steps;
  if (method.curvature) cfg.curvature = *method.curvature;
  if (data.surv) return ModelScorer(data.design, *data.surv, cfg);
  return ModelScorer(data.design, data.y, cfg);
}

std::vector<MetricRow> run_replicate(SimDesign design, const SimOptions& sim,
                                     const StudyOptions& study, int replicate,
                                     std::uint64_t seed) {
  Rng rng(seed);
  const SimDataset data = simulate(design, sim, rng);
  std::vector<MetricRow> rows;
  const Emitter emit{&rows, replicate, seed, sim.n};
  switch (design) {
    case SimDesign::kFig1:
      Fig1Metrics(data, study, emit);
      break;
    case SimDesign::kGmomAccuracy:
      GmomAccuracyMetrics(data, study, emit);
      break;
    case SimDesign::kIsLogistic:
    case SimDesign::kIsPoisson:
      ImportanceMetrics(data, study, emit);
      break;
    case SimDesign::kPoissonFigS1: {
      StudyOptions s = study;
      if (s.methods.empty()) {
        s.methods = {ParseStudyMethod("ala-unadjusted"), ParseStudyMethod("ala")};
      }
      InclusionMetrics(data, s, emit);
      break;
    }
    default:
      InclusionMetrics(data, study, emit);
  }
  return rows;
}

std::vector<MetricRow> run_study(SimDesign design, const SimOptions& sim,
                                 const StudyOptions& study, int replicates,
                                 std::uint64_t seed) {
  if (replicates < 0) throw ConfigError("replicates must be non-negative");
  std::vector<std::vector<MetricRow>> per(static_cast<std::size_t>(replicates));
  parallel_for(per.size(), study.threads, [&](std::size_t r) {
    per[r] = run_replicate(design, sim, study, static_cast<int>(r), seed + r);
  });
  std::vector<MetricRow> rows;
  for (auto& p : per) rows.insert(rows.end(), p.begin(), p.end());
  return rows;
}

std::vector<AggregateRow> aggregate(const std::vector<MetricRow>& rows) {
  using Key = std::tuple<int, std::string, std::string, std::string>;
  std::map<Key, std::vector<double>> groups;
  std::vector<Key> order;
  for (const MetricRow& r : rows) {
    const Key k{r.n, r.method, r.stratum, r.metric};
    auto [it, fresh] = groups.try_emplace(k);
    if (fresh) order.push_back(k);
    it->second.push_back(r.value);
  }
  std::vector<AggregateRow> out;
  for (const Key& k : order) {
    const auto& v = groups[k];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k),
                   static_cast<int>(v.size()), mean, sd});
  }
  return out;
}

double mean_metric(const std::vector<MetricRow>& rows, const std::string& method,
                   const std::string& stratum, const std::string& metric) {
  double sum = 0.0;
  int count = 0;
  for (const MetricRow& r : rows) {
    if (r.method == method && r.stratum == stratum && r.metric == metric) {
      sum += r.value;
      ++count;
    }
  }
  return count ? sum / count : std::nan("");
}

void write_replicates_csv(const std::string& path, const std::string& design,
                          const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "design,replicate,seed,n,method,stratum,metric,value\n";
  for (const MetricRow& r : rows) {
    out << design << "," << r.replicate << "," << r.seed << "," << r.n << "," << r.method << ","
        << r.stratum << "," << r.metric << "," << Fmt(r.value) << "\n";
  }
}

void write_aggregate_csv(const std::string& path, const std::string& design,
                         const std::vector<AggregateRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "design,n,method,stratum,metric,replicates,mean,sd\n";
  for (const AggregateRow& r : rows) {
    out << design << "," << r.n << "," << r.method << "," << r.stratum << "," << r.metric << ","
        << r.count << "," << Fmt(r.mean) << "," << Fmt(r.sd) << "\n";
  }
}

MonteCarloEstimate monte_carlo_marginal(const Likelihood& lik, const ParamPrior& prior,
                                        const Vector& mean, const Matrix& cov,
                                        std::int64_t draws, Rng& rng) {
  const int d = lik.dim();
  if (draws < 2) throw ConfigError("Monte Carlo oracle needs at least 2 draws");
  MonteCarloEstimate out;
  out.draws = draws;
  if (d == 0) {
    out.log_ml = lik.value(Vector(0)) + prior.log_density(Vector(0));
    return out;
  }
  constexpr double nu = 4.0;
  const Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw NotInvertible("proposal covariance is not SPD");
  const Matrix L = llt.matrixL();
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  const double log_norm = std::lgamma((nu + d) / 2) - std::lgamma(nu / 2) -
                          0.5 * d * std::log(nu * M_PI) - 0.5 * log_det;
  std::normal_distribution<double> normal;
  std::chi_squared_distribution<double> chi2(nu);
  std::vector<double> logw(static_cast<std::size_t>(draws));
  Vector z(d);
  for (auto& lw : logw) {
    for (int k = 0; k < d; ++k) z[k] = normal(rng);
    const double scale = std::sqrt(nu / chi2(rng));
    const Vector eta = mean + scale * (L * z);
    const double maha = z.squaredNorm() * scale * scale;
    const double log_q = log_norm - 0.5 * (nu + d) * std::log1p(maha / nu);
    lw = lik.value(eta) + prior.log_density(eta) - log_q;
  }
  const double m = *std::max_element(logw.begin(), logw.end());
  double s1 = 0.0, s2 = 0.0;
  for (double lw : logw) {
    const double w = std::isfinite(lw) ? std::exp(lw - m) : 0.0;
    s1 += w;
    s2 += w * w;
  }
  const double mean_w = s1 / static_cast<double>(draws);
  const double var_w = s2 / static_cast<double>(draws) - mean_w * mean_w;
  out.log_ml = m + std::log(mean_w);
  out.se = std::sqrt(std::max(var_w, 0.0) / static_cast<double>(draws)) / mean_w;
  return out;
}

}  // namespace ala
