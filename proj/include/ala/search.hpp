#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ala/data_model.hpp"
#include "ala/marginal.hpp"
#include "ala/priors.hpp"

namespace ala {

/// Worker count from ALA_THREADS (default 1).
int default_threads();

/// Runs fn(0..n-1) on up to `threads` workers; rethrows the first exception.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

/// Thread-safe memo of per-model scores. The score function runs outside the
/// lock, so two threads may race to score the same model; the first result
/// is kept.
class ScoreMemo {
 public:
  using ScoreFn = std::function<MarginalScore(const ModelId&)>;
  explicit ScoreMemo(ScoreFn fn) : fn_(std::move(fn)) {}

  MarginalScore score(const ModelId& model);
  double log_score(const ModelId& model) { return score(model).log_ml; }
  std::size_t size() const;
  /// Calls to the underlying score function.
  std::uint64_t evaluations() const;

 private:
  ScoreFn fn_;
  mutable std::mutex mu_;
  std::unordered_map<ModelId, MarginalScore, ModelIdHash> memo_;
  std::uint64_t evaluations_ = 0;
};

struct ModelEntry {
  ModelId model;
  double log_score = 0.0;
  double log_prior = 0.0;
  double prob = 0.0;
  std::int64_t count = 0;  ///< Gibbs visits after burn-in
};

struct PosteriorSummary {
  enum class Kind { kEnumerate, kGibbs, kScreened };
  Kind kind = Kind::kEnumerate;
  int n_scans = 0;
  int burnin = 0;
  std::uint64_t seed = 0;
  /// Sorted by decreasing probability.
  std::vector<ModelEntry> models;
  /// Frequencies (Gibbs) or exact sums over the enumerated space.
  Vector inclusion;
  /// Rao-Blackwellized inclusion from per-update conditionals; Gibbs only.
  Vector inclusion_rb;
  std::int64_t constraint_violations = 0;
  std::vector<std::string> warnings;

  const ModelEntry& top_model() const;
  std::string method_label() const;
  /// (model, visit count) pairs; Gibbs only.
  std::vector<std::pair<ModelId, std::int64_t>> samples() const;
};

/// Exhaustive normalization over every constraint-satisfying model.
PosteriorSummary enumerate_posterior(ScoreMemo& scorer, const ModelPriorSpec& prior,
                                     std::shared_ptr<const GroupLayout> layout,
                                     int limit = ModelEnumerator::kDefaultLimit,
                                     int threads = 0);

struct GibbsOptions {
  int n_scans = 10000;
  std::uint64_t seed = 0;
  double burnin_fraction = 0.1;
  /// Largest number of legal configurations for a blocked subtree update;
  /// bigger subtrees fall back to masked single-site updates.
  int max_block = 64;
};

/// Systematic-scan Gibbs over groups. A group with dependents is updated
/// jointly with its dependent subtree from the exact block conditional.
PosteriorSummary gibbs_models(ScoreMemo& scorer, const ModelPriorSpec& prior,
                              std::shared_ptr<const GroupLayout> layout,
                              const GibbsOptions& options = {});

struct ImportanceReport {
  std::vector<ModelId> models;  ///< unique sampled models
  std::vector<std::int64_t> counts;
  /// w(gamma) = p^(gamma|y) / p~(gamma|y), both restricted to the sampled
  /// support and normalized there.
  Vector weights;
  std::int64_t draws = 0;
  double effective_sample_size = 0.0;
  double max_weight = 0.0;
  /// max w(gamma) / sum of w over the unique sampled models.
  double max_normalized_weight = 0.0;
  /// max_normalized_weight > 0.5 with more than one sampled model.
  bool degenerate = false;
  /// Reweighted inclusion probabilities.
  Vector inclusion;
};

ImportanceReport importance_reweight(
    const std::vector<std::pair<ModelId, std::int64_t>>& samples,
    ScoreMemo& la_scorer, ScoreMemo& ala_scorer);

/// Drops groups whose ALA inclusion is not above `threshold` and enumerates
/// the survivors with `refine_scorer`. threshold <= 0 keeps every group.
PosteriorSummary screen_then_refine(const PosteriorSummary& ala_summary,
                                    double threshold, ScoreMemo& refine_scorer,
                                    const ModelPriorSpec& prior,
                                    std::shared_ptr<const GroupLayout> layout,
                                    int limit = ModelEnumerator::kDefaultLimit);

}  // namespace ala
