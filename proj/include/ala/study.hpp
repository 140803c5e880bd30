#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ala/marginal.hpp"
#include "ala/rng.hpp"
#include "ala/scorer.hpp"
#include "ala/search.hpp"
#include "ala/simulate.hpp"

namespace ala {

/// A scoring method as named in study configurations: any ParseMethod name,
/// "ala-unadjusted" (curvature adjustment off) or "ala-refined:k".
struct StudyMethod {
  std::string label = "ala";
  Method method = Method::kAla;
  int refine_steps = 1;
  std::optional<bool> curvature;
};

StudyMethod ParseStudyMethod(const std::string& token);

struct StudyOptions {
  /// Empty picks the design's default comparison.
  std::vector<StudyMethod> methods;
  PriorKind prior = PriorKind::kGroupZellner;
  double g = 1.0;
  double c = 0.0;
  bool gibbs = false;
  int n_scans = 10000;
  double screen_threshold = 0.5;
  /// Replicates run concurrently.
  int threads = 1;
};

/// One metric of one replicate, in long format.
struct MetricRow {
  int replicate = 0;
  std::uint64_t seed = 0;
  int n = 0;
  std::string method;
  std::string stratum;
  std::string metric;
  double value = 0.0;
};

struct AggregateRow {
  int n = 0;
  std::string method;
  std::string stratum;
  std::string metric;
  int count = 0;
  double mean = 0.0;
  double sd = 0.0;
};

/// Scorer for a dataset under a study method, from the family defaults.
ModelScorer make_scorer(const Dataset& data, const FamilySpec& family,
                        const ParamPriorSpec& prior, const StudyMethod& method);

/// Simulates one replicate with its own seed and evaluates it.
std::vector<MetricRow> run_replicate(SimDesign design, const SimOptions& sim,
                                     const StudyOptions& study, int replicate,
                                     std::uint64_t seed);

/// Replicate r uses seed + r. Rows come back in replicate order.
std::vector<MetricRow> run_study(SimDesign design, const SimOptions& sim,
                                 const StudyOptions& study, int replicates,
                                 std::uint64_t seed);

/// Mean and standard deviation of each (n, method, stratum, metric).
std::vector<AggregateRow> aggregate(const std::vector<MetricRow>& rows);

/// Mean of the matching rows; NaN when none match.
double mean_metric(const std::vector<MetricRow>& rows, const std::string& method,
                   const std::string& stratum, const std::string& metric);

void write_replicates_csv(const std::string& path, const std::string& design,
                          const std::vector<MetricRow>& rows);
void write_aggregate_csv(const std::string& path, const std::string& design,
                         const std::vector<AggregateRow>& rows);

struct MonteCarloEstimate {
  double log_ml = 0.0;
  /// Standard error of log_ml by the delta method.
  double se = 0.0;
  std::int64_t draws = 0;
};

/// Importance-sampling estimate of log of the integral of p(y|eta) p(eta),
/// with a multivariate t_4 proposal centred at `mean` with scale `cov`.
MonteCarloEstimate monte_carlo_marginal(const Likelihood& lik, const ParamPrior& prior,
                                        const Vector& mean, const Matrix& cov,
                                        std::int64_t draws, Rng& rng);

}  // namespace ala
