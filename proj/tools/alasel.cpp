// alasel: Bayesian variable selection with approximate Laplace marginals.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ala/errors.hpp"
#include "ala/io.hpp"
#include "ala/scorer.hpp"
#include "ala/search.hpp"
#include "ala/simulate.hpp"
#include "ala/study.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ala;

namespace {

using Clock = std::chrono::steady_clock;

double Since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string Fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Finite doubles as numbers, the rest as strings, so the JSON stays valid.
json Num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

void WriteJson(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

struct DataArgs {
  std::string data;
  std::string groups;
  std::string constraints;
  std::string response = "y";
  std::string status;
  bool no_intercept = false;
  bool standardize = false;
  int max_groups = -1;

  void Add(CLI::App* app) {
    app->add_option("--data", data, "CSV with a header row: covariates and response")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--groups", groups, "CSV mapping column name to integer group id")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--constraints", constraints,
                    "CSV of child_group,parent_group rows: child requires parent")
        ->check(CLI::ExistingFile);
    app->add_option("--response", response, "response column (log-times for aft)")
        ->capture_default_str();
    app->add_option("--status", status, "event indicator column for aft (1 = observed)");
    app->add_flag("--no-intercept", no_intercept, "do not add a forced intercept group");
    app->add_flag("--standardize", standardize, "centre and scale covariates to unit variance");
    app->add_option("--max-groups", max_groups,
                    "largest model size counted in groups, excluding the intercept "
                    "(-1 = no cap)")
        ->capture_default_str();
  }

  Dataset Load(const FamilySpec& family) const {
    IngestOptions o;
    o.response = response;
    if (!status.empty()) o.status = status;
    if (family.kind == FamilyKind::kAftLognormal && status.empty()) {
      throw ConfigError("--status is required for the aft family");
    }
    o.add_intercept = !no_intercept;
    o.standardize = standardize;
    o.max_groups = max_groups;
    return ingest(data, groups, constraints.empty() ? std::nullopt : std::optional(constraints), o);
  }
};

struct ModelArgs {
  std::string family = "logistic";
  double phi = 1.0;
  std::string prior = "zellner";
  double g = 1.0;
  double ig_a = 0.01;
  double ig_b = 0.01;
  double c = 0.0;
  std::string center;
  std::string curvature;  // "", "on", "off"
  std::string prior_eval = "integrated";

  void Add(CLI::App* app) {
    app->add_option("--family", family, "logistic | poisson | gaussian | gaussian-unknown | aft")
        ->capture_default_str();
    app->add_option("--phi", phi, "dispersion for the known-dispersion gaussian family")
        ->capture_default_str();
    app->add_option("--prior", prior, "coefficient prior: zellner | gmom")->capture_default_str();
    app->add_option("--g", g, "prior dispersion g")->capture_default_str();
    app->add_option("--phi-prior-a", ig_a, "inverse-gamma shape for unknown dispersion")
        ->capture_default_str();
    app->add_option("--phi-prior-b", ig_b, "inverse-gamma scale for unknown dispersion")
        ->capture_default_str();
    app->add_option("--c", c, "model-size penalty exponent (0 = Beta-Binomial(1,1))")
        ->capture_default_str();
    app->add_option("--center", center,
                    "expansion offset: zero | intercept-mle (default by family)");
    app->add_option("--curvature", curvature,
                    "over-dispersion curvature adjustment: on | off (default on for "
                    "logistic and poisson)")
        ->check(CLI::IsMember({"on", "off"}));
    app->add_option("--prior-eval", prior_eval, "integrated | plugin")->capture_default_str();
  }

  FamilySpec Family() const { return FamilySpec::Parse(family, phi); }

  ScorerConfig Config(Method method, int refine, bool intercept) const {
    ScorerConfig cfg = ScorerConfig::Defaults(Family());
    if (!intercept) {
      cfg.curvature = false;
      cfg.center = Center::kZero;
    }
    cfg.prior.kind = ParamPriorSpec::ParseKind(prior);
    cfg.prior.g = g;
    if (!cfg.family.dispersion_known()) cfg.prior.phi_prior = InverseGamma{ig_a, ig_b};
    if (!center.empty()) cfg.center = ParseCenter(center);
    if (!curvature.empty()) cfg.curvature = curvature == "on";
    if (cfg.curvature && cfg.center != Center::kInterceptMle) {
      throw ConfigError("the curvature adjustment needs --center intercept-mle");
    }
    cfg.prior_eval = ParsePriorEval(prior_eval);
    cfg.method = method;
    cfg.refine_steps = refine;
    return cfg;
  }

  json ToJson(const ScorerConfig& cfg) const {
    json j;
    j["family"] = cfg.family.name();
    if (cfg.family.kind == FamilyKind::kGaussianKnownPhi) j["phi"] = cfg.family.phi;
    j["prior"] = cfg.prior.name();
    j["g"] = cfg.prior.g;
    if (cfg.prior.phi_prior) j["phi_prior"] = {cfg.prior.phi_prior->a, cfg.prior.phi_prior->b};
    j["c"] = c;
    j["center"] = cfg.center == Center::kZero ? "zero" : "intercept-mle";
    j["curvature"] = cfg.curvature;
    j["prior_eval"] = prior_eval;
    return j;
  }
};

ModelScorer MakeScorer(const Dataset& data, const ScorerConfig& cfg) {
  if (cfg.family.kind == FamilyKind::kAftLognormal) {
    return ModelScorer(data.design, *data.surv, cfg);
  }
  return ModelScorer(data.design, data.y, cfg);
}

// ---------------------------------------------------------------------------

struct SelectArgs {
  DataArgs data;
  ModelArgs model;
  std::string method = "ala";
  int refine = 1;
  std::string search = "enumerate";
  int n_scans = 10000;
  std::uint64_t seed = 0;
  int enum_limit = ModelEnumerator::kDefaultLimit;
  double screen = -1.0;
  std::string refine_method = "la";
  std::string out_dir = ".";
  std::string models_csv;
  std::string inclusion_csv;
  std::string meta_json;
};

int RunSelect(const SelectArgs& a) {
  const auto t0 = Clock::now();
  const FamilySpec family = a.model.Family();
  const Dataset data = a.data.Load(family);
  const double t_ingest = Since(t0);

  const auto t1 = Clock::now();
  const ScorerConfig cfg = a.model.Config(ParseMethod(a.method), a.refine, !a.data.no_intercept);
  const ModelScorer scorer = MakeScorer(data, cfg);
  const double t_precompute = Since(t1);

  ModelPriorSpec prior{a.model.c, data.constraints, data.design->p()};
  auto layout = data.design->layout_ptr();
  ScoreMemo memo([&](const ModelId& m) { return scorer.score(m); });

  const auto t2 = Clock::now();
  PosteriorSummary summary;
  if (a.search == "enumerate") {
    summary = enumerate_posterior(memo, prior, layout, a.enum_limit);
  } else if (a.search == "gibbs") {
    GibbsOptions g;
    g.n_scans = a.n_scans;
    g.seed = a.seed;
    summary = gibbs_models(memo, prior, layout, g);
  } else {
    throw ConfigError("unknown search '" + a.search + "' (enumerate | gibbs)");
  }
  std::optional<ModelScorer> refiner;
  std::optional<ScoreMemo> refine_memo;
  if (a.screen >= 0.0) {
    refiner.emplace(scorer.with_method(ParseMethod(a.refine_method), a.refine));
    refine_memo.emplace([&](const ModelId& m) { return refiner->score(m); });
    summary = screen_then_refine(summary, a.screen, *refine_memo, prior, layout, a.enum_limit);
  }
  const double t_search = Since(t2);

  fs::create_directories(a.out_dir);
  auto path = [&](const std::string& given, const std::string& name) {
    return given.empty() ? (fs::path(a.out_dir) / name).string() : given;
  };
  write_models_csv(path(a.models_csv, "models.csv"), summary, data);
  write_inclusion_csv(path(a.inclusion_csv, "inclusion.csv"), summary, data);

  json config = a.model.ToJson(cfg);
  config["method"] = a.method;
  if (cfg.method == Method::kAlaRefined) config["refine_steps"] = a.refine;
  config["search"] = a.search;
  if (a.search == "gibbs") config["n_scans"] = a.n_scans;
  config["seed"] = a.seed;
  config["max_groups"] = a.data.max_groups;
  config["standardize"] = a.data.standardize;
  config["intercept"] = !a.data.no_intercept;
  if (a.screen >= 0.0) {
    config["screen_threshold"] = a.screen;
    config["refine_method"] = a.refine_method;
  }
  config["data"] = fs::path(a.data.data).filename().string();
  config["response"] = a.data.response;

  json meta;
  meta["version"] = ALA_VERSION;
  meta["seed"] = a.seed;
  meta["config_hash"] = Fnv1a(config.dump());
  meta["config"] = config;
  meta["method"] = a.method;
  meta["search"] = summary.method_label();
  meta["n"] = data.design->n();
  meta["p"] = data.design->p();
  meta["groups"] = data.design->J();
  meta["rho_hat"] = Num(scorer.rho_hat());
  meta["phi0"] = Num(scorer.phi0());
  if (scorer.cache()) meta["expansion"] = scorer.cache()->tag().str();
  meta["models_reported"] = summary.models.size();
  meta["models_scored"] = memo.evaluations() + (refine_memo ? refine_memo->evaluations() : 0);
  if (summary.kind == PosteriorSummary::Kind::kGibbs) {
    meta["burnin"] = summary.burnin;
    meta["constraint_violations"] = summary.constraint_violations;
  }
  meta["warnings"] = summary.warnings;
  meta["timings"] = {{"ingest_s", t_ingest},
                     {"precompute_s", t_precompute},
                     {"search_s", t_search},
                     {"total_s", Since(t0)}};
  WriteJson(path(a.meta_json, "meta.json"), meta);
  for (const auto& w : summary.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct ExpandArgs {
  std::string data;
  std::vector<std::string> columns;
  std::string response = "y";
  std::vector<std::string> keep;
  int dim = 5;
  std::string out_data = "expanded.csv";
  std::string out_groups = "groups.csv";
  std::string out_constraints = "constraints.csv";
};

int RunExpand(const ExpandArgs& a) {
  expand_splines(a.data, a.columns, a.response, a.out_data, a.out_groups, a.out_constraints, a.dim,
                 a.keep);
  return 0;
}

// ---------------------------------------------------------------------------

struct SimArgs {
  std::string design;
  int replicates = 50;
  std::vector<int> n{100};
  int p = 0;
  double rho = 0.5;
  double beta = 1.099;
  bool correlated = false;
  std::vector<std::string> methods;
  std::string prior = "zellner";
  double g = 1.0;
  double c = 0.0;
  std::string search = "enumerate";
  int n_scans = 10000;
  double screen = 0.5;
  std::uint64_t seed = 1;
  std::string out_prefix = "simstudy";
};

int RunSimstudy(const SimArgs& a) {
  const auto t0 = Clock::now();
  const SimDesign design = ParseSimDesign(a.design);
  StudyOptions study;
  for (const auto& m : a.methods) study.methods.push_back(ParseStudyMethod(m));
  study.prior = ParamPriorSpec::ParseKind(a.prior);
  study.g = a.g;
  study.c = a.c;
  if (a.search != "enumerate" && a.search != "gibbs") {
    throw ConfigError("unknown search '" + a.search + "' (enumerate | gibbs)");
  }
  study.gibbs = a.search == "gibbs";
  study.n_scans = a.n_scans;
  study.screen_threshold = a.screen;
  study.threads = default_threads();

  std::vector<MetricRow> rows;
  for (int n : a.n) {
    SimOptions sim;
    sim.n = n;
    sim.p = a.p;
    sim.rho = a.rho;
    sim.beta = a.beta;
    sim.correlated = a.correlated;
    const auto part = run_study(design, sim, study, a.replicates, a.seed);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const std::string name = SimDesignName(design);
  write_replicates_csv(a.out_prefix + "_replicates.csv", name, rows);
  write_aggregate_csv(a.out_prefix + "_aggregate.csv", name, aggregate(rows));

  json config;
  config["design"] = name;
  config["replicates"] = a.replicates;
  config["n"] = a.n;
  config["p"] = a.p;
  config["rho"] = a.rho;
  if (design == SimDesign::kFig1) config["beta"] = a.beta;
  config["correlated"] = a.correlated;
  config["methods"] = a.methods;
  config["prior"] = a.prior;
  config["g"] = a.g;
  config["c"] = a.c;
  config["search"] = a.search;
  config["n_scans"] = a.n_scans;
  config["screen_threshold"] = a.screen;
  json meta;
  meta["version"] = ALA_VERSION;
  meta["seed"] = a.seed;
  meta["seeding"] = "replicate r uses seed + r";
  meta["config_hash"] = Fnv1a(config.dump());
  meta["config"] = config;
  meta["threads"] = study.threads;
  meta["timings"] = {{"total_s", Since(t0)}};
  WriteJson(a.out_prefix + "_meta.json", meta);
  return 0;
}

// ---------------------------------------------------------------------------

struct OracleArgs {
  DataArgs data;
  ModelArgs model;
  std::string bits;
  std::vector<long> group_ids;
  int refine = 2;
  std::int64_t draws = 100000;
  std::uint64_t seed = 0;
  std::string out;
};

int RunOracle(const OracleArgs& a) {
  const FamilySpec family = a.model.Family();
  const Dataset data = a.data.Load(family);
  const ScorerConfig cfg = a.model.Config(Method::kAla, 0, !a.data.no_intercept);
  const ModelScorer scorer = MakeScorer(data, cfg);
  auto layout = data.design->layout_ptr();

  ModelId model;
  if (!a.bits.empty()) {
    model = ModelId::FromBits(layout, a.bits);
  } else {
    std::vector<int> groups;
    if (data.design->intercept_group()) groups.push_back(*data.design->intercept_group());
    for (long id : a.group_ids) {
      const auto it = std::find(data.group_ids.begin(), data.group_ids.end(), id);
      if (it == data.group_ids.end()) throw InvalidModel("unknown group id " + std::to_string(id));
      groups.push_back(static_cast<int>(it - data.group_ids.begin()));
    }
    model = ModelId::FromGroups(layout, groups);
  }
  if (const std::string why = data.constraints.violation(model); !why.empty()) {
    throw InvalidModel(why);
  }

  json result;
  result["version"] = ALA_VERSION;
  result["model"] = model.bits();
  result["groups"] = model_groups(model, data);
  result["dim"] = model.dim();
  result["config"] = a.model.ToJson(cfg);
  json scores = json::object();
  auto attempt = [&](const std::string& name, const std::function<double()>& fn) {
    try {
      scores[name] = Num(fn());
    } catch (const AlaError& e) {
      scores[name] = std::string("unavailable: ") + e.what();
    }
  };
  attempt("ala", [&] { return scorer.score(model).log_ml; });
  attempt("ala-refined", [&] {
    return scorer.with_method(Method::kAlaRefined, a.refine).score(model).log_ml;
  });
  MarginalScore la;
  attempt("la", [&] {
    la = scorer.with_method(Method::kLa).score(model);
    return la.log_ml;
  });
  if (family.is_gaussian()) {
    attempt("exact", [&] { return scorer.with_method(Method::kExactGaussian).score(model).log_ml; });
  }
  if (family.is_expfam() && family.dispersion_known() && model.dim() <= 2) {
    attempt("quadrature",
            [&] { return scorer.with_method(Method::kQuadrature).score(model).log_ml; });
  }

  // Monte Carlo from a t proposal fitted to the Laplace approximation.
  if (a.draws > 0 && la.post_mean.size() > 0 && family.is_expfam()) {
    try {
      const Matrix Z = data.design->columns(model);
      const int n = data.design->n();
      Matrix xtx;
      scorer.cache()->gram_block(model.columns(), &xtx);
      const Matrix P0 = prior_precision(cfg.prior, xtx, model, n);
      ExpFamLikelihood lik(family, Z, data.y);
      std::unique_ptr<ParamPrior> prior;
      if (cfg.prior.kind == PriorKind::kGmom) {
        if (!family.dispersion_known()) throw ConfigError("gMOM needs a known dispersion here");
        prior = std::make_unique<GmomPrior>(P0, model, family.phi);
      } else if (family.dispersion_known()) {
        prior = std::make_unique<NormalPrior>(P0 / family.phi);
      } else {
        prior = std::make_unique<NormalInvGammaPrior>(P0, *cfg.prior.phi_prior);
      }
      Vector mean = la.post_mean;
      Matrix cov = la.post_cov;
      if (mean.size() != lik.dim()) throw ConfigError("no proposal for this model");
      if (cfg.prior.kind == PriorKind::kGmom) cov *= 4.0;  // cover both signs of each mode
      Rng rng(a.seed);
      const MonteCarloEstimate mc = monte_carlo_marginal(lik, *prior, mean, cov, a.draws, rng);
      scores["monte-carlo"] = Num(mc.log_ml);
      result["monte_carlo"] = {{"se", Num(mc.se)}, {"draws", mc.draws}, {"seed", a.seed}};
    } catch (const AlaError& e) {
      scores["monte-carlo"] = std::string("unavailable: ") + e.what();
    }
  }
  result["log_marginal"] = scores;
  result["rho_hat"] = Num(scorer.rho_hat());
  result["phi0"] = Num(scorer.phi0());
  if (a.out.empty()) {
    std::cout << result.dump(2) << "\n";
  } else {
    WriteJson(a.out, result);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alasel: Bayesian variable selection with approximate Laplace marginals.\n"
               "Thread count comes from the ALA_THREADS environment variable."};
  app.set_version_flag("--version", ALA_VERSION);
  app.require_subcommand(1);

  SelectArgs sel;
  auto* select = app.add_subcommand("select", "score models and write posterior summaries");
  sel.data.Add(select);
  sel.model.Add(select);
  select->add_option("--method", sel.method,
                     "ala | ala-curvadj | ala-refined | la | exact | quadrature")
      ->capture_default_str();
  select->add_option("--refine", sel.refine, "Newton steps for ala-refined")->capture_default_str();
  select->add_option("--search", sel.search, "enumerate | gibbs")->capture_default_str();
  select->add_option("--n-scans", sel.n_scans, "Gibbs scans (10% burn-in)")->capture_default_str();
  select->add_option("--seed", sel.seed, "random seed")->capture_default_str();
  select->add_option("--enum-limit", sel.enum_limit, "largest free group count to enumerate")
      ->capture_default_str();
  select->add_option("--screen", sel.screen,
                     "drop groups with inclusion <= threshold, then re-enumerate the rest "
                     "with --refine-method (off when negative)")
      ->capture_default_str();
  select->add_option("--refine-method", sel.refine_method, "method used after screening")
      ->capture_default_str();
  select->add_option("--out-dir", sel.out_dir, "directory for models.csv, inclusion.csv, meta.json")
      ->capture_default_str();
  select->add_option("--models-out", sel.models_csv, "explicit models.csv path");
  select->add_option("--inclusion-out", sel.inclusion_csv, "explicit inclusion.csv path");
  select->add_option("--meta-out", sel.meta_json, "explicit meta.json path");

  ExpandArgs exp;
  auto* expand = app.add_subcommand("expand", "add spline deviation-from-linearity groups");
  expand->add_option("--data", exp.data, "input CSV")->required()->check(CLI::ExistingFile);
  expand->add_option("--columns", exp.columns, "columns to expand")->required()->delimiter(',');
  expand->add_option("--response", exp.response, "response column")->capture_default_str();
  expand->add_option("--keep", exp.keep, "extra columns copied through ungrouped (e.g. status)")
      ->delimiter(',');
  expand->add_option("--dim", exp.dim, "spline columns per expanded covariate")
      ->capture_default_str();
  expand->add_option("--out-data", exp.out_data, "expanded data CSV")->capture_default_str();
  expand->add_option("--out-groups", exp.out_groups, "groups CSV")->capture_default_str();
  expand->add_option("--out-constraints", exp.out_constraints, "constraints CSV")
      ->capture_default_str();

  SimArgs sim;
  auto* simstudy = app.add_subcommand("simstudy", "run a simulation design and tabulate metrics");
  simstudy->add_option("--design", sim.design,
                       "fig1 | logistic-fig2 | poisson-figS1 | gmom-accuracy-fig3 | "
                       "aft-scenario1 | aft-scenario2 | is-logistic | is-poisson | mixture")
      ->required();
  simstudy->add_option("--replicates", sim.replicates, "replicates per sample size")
      ->capture_default_str();
  simstudy->add_option("--n", sim.n, "sample sizes")->delimiter(',')->capture_default_str();
  simstudy->add_option("--p", sim.p, "covariates (0 = design default)")->capture_default_str();
  simstudy->add_option("--rho", sim.rho, "pairwise covariate correlation")->capture_default_str();
  simstudy->add_option("--beta", sim.beta, "coefficient for fig1")->capture_default_str();
  simstudy->add_flag("--correlated", sim.correlated,
                     "random covariate correlation for gmom-accuracy-fig3");
  simstudy->add_option("--methods", sim.methods,
                       "methods to compare (ala, ala-unadjusted, ala-curvadj, ala-refined:k, "
                       "la, exact, quadrature); default per design")
      ->delimiter(',');
  simstudy->add_option("--prior", sim.prior, "zellner | gmom")->capture_default_str();
  simstudy->add_option("--g", sim.g, "prior dispersion g")->capture_default_str();
  simstudy->add_option("--c", sim.c, "model-size penalty exponent")->capture_default_str();
  simstudy->add_option("--search", sim.search, "enumerate | gibbs")->capture_default_str();
  simstudy->add_option("--n-scans", sim.n_scans, "Gibbs scans")->capture_default_str();
  simstudy->add_option("--screen", sim.screen, "screening threshold for is-* designs")
      ->capture_default_str();
  simstudy->add_option("--seed", sim.seed, "base seed; replicate r uses seed + r")
      ->capture_default_str();
  simstudy->add_option("--out-prefix", sim.out_prefix,
                       "writes <prefix>_replicates.csv, _aggregate.csv and _meta.json")
      ->capture_default_str();

  OracleArgs orc;
  auto* oracle = app.add_subcommand("oracle", "compare every engine with quadrature and Monte "
                                              "Carlo for one model");
  orc.data.Add(oracle);
  orc.model.Add(oracle);
  auto* bits = oracle->add_option("--model", orc.bits, "model as a 0/1 string over design groups");
  oracle->add_option("--model-groups", orc.group_ids, "model as user group ids (intercept added)")
      ->delimiter(',')
      ->excludes(bits);
  oracle->add_option("--refine", orc.refine, "Newton steps for ala-refined")->capture_default_str();
  oracle->add_option("--draws", orc.draws, "Monte Carlo draws (0 = skip)")->capture_default_str();
  oracle->add_option("--seed", orc.seed, "Monte Carlo seed")->capture_default_str();
  oracle->add_option("--out", orc.out, "write JSON here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorCode::kConfig);
  }

  try {
    if (*select) return RunSelect(sel);
    if (*expand) return RunExpand(exp);
    if (*simstudy) return RunSimstudy(sim);
    if (*oracle) return RunOracle(orc);
  } catch (const AlaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorCode::kGeneric);
  }
  return 0;
}
