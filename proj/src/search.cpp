#include "ala/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "ala/errors.hpp"
#include "ala/rng.hpp"

namespace ala {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogSumExp(const std::vector<double>& v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void SortEntries(std::vector<ModelEntry>* models) {
  std::sort(models->begin(), models->end(), [](const ModelEntry& a, const ModelEntry& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    return a.model < b.model;
  });
}

/// Normalizes log_score + log_prior and fills probabilities and inclusion.
void Normalize(std::vector<ModelEntry>* models, int J, Vector* inclusion) {
  std::vector<double> lp;
  lp.reserve(models->size());
  for (const auto& e : *models) lp.push_back(e.log_score + e.log_prior);
  const double lse = LogSumExp(lp);
  if (!std::isfinite(lse)) {
    throw NoConvergence("every model has a non-finite posterior score");
  }
  *inclusion = Vector::Zero(J);
  for (std::size_t i = 0; i < models->size(); ++i) {
    auto& e = (*models)[i];
    e.prob = std::exp(lp[i] - lse);
    for (int j = 0; j < J; ++j) {
      if (e.model.test(j)) (*inclusion)[j] += e.prob;
    }
  }
  SortEntries(models);
}

void CheckLayout(const GroupLayout& layout, const ModelPriorSpec& prior) {
  if (prior.constraints.J() != layout.J()) {
    throw ConfigError("model prior has " + std::to_string(prior.constraints.J()) +
                      " groups, design has " + std::to_string(layout.J()));
  }
}

/// Uniform on [0, 1) with 53 random bits.
double Uniform(Rng& rng) {
  const std::uint64_t hi = rng();
  const std::uint64_t lo = rng();
  return static_cast<double>((hi << 21) ^ (lo >> 11)) * 0x1p-53;
}

int SampleIndex(const std::vector<double>& logw, Rng& rng, std::vector<double>* probs) {
  const double lse = LogSumExp(logw);
  probs->resize(logw.size());
  for (std::size_t i = 0; i < logw.size(); ++i) (*probs)[i] = std::exp(logw[i] - lse);
  const double u = Uniform(rng);
  double acc = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < probs->size(); ++i) {
    if ((*probs)[i] <= 0.0) continue;
    last = static_cast<int>(i);
    acc += (*probs)[i];
    if (u < acc) return last;
  }
  return last;
}

}  // namespace

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  const int k = std::min<int>(threads, static_cast<int>(n));
  for (int t = 0; t < k; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

int default_threads() {
  if (const char* env = std::getenv("ALA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw ConfigError(std::string("ALA_THREADS must be a positive integer, got '") +
                      env + "'");
  }
  return 1;
}

MarginalScore ScoreMemo::score(const ModelId& model) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = memo_.find(model);
    if (it != memo_.end()) return it->second;
  }
  MarginalScore s = fn_(model);
  std::lock_guard<std::mutex> lock(mu_);
  ++evaluations_;
  return memo_.try_emplace(model, std::move(s)).first->second;
}

std::size_t ScoreMemo::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return memo_.size();
}

std::uint64_t ScoreMemo::evaluations() const {
  std::lock_guard<std::mutex> lock(mu_);
  return evaluations_;
}

const ModelEntry& PosteriorSummary::top_model() const {
  if (models.empty()) throw InvalidModel("empty posterior summary");
  return models.front();
}

std::string PosteriorSummary::method_label() const {
  std::ostringstream s;
  switch (kind) {
    case Kind::kEnumerate:
      s << "enumerate";
      break;
    case Kind::kGibbs:
      s << "gibbs(n_scans=" << n_scans << ",seed=" << seed << ")";
      break;
    case Kind::kScreened:
      s << "screen-then-refine";
      break;
  }
  return s.str();
}

std::vector<std::pair<ModelId, std::int64_t>> PosteriorSummary::samples() const {
  std::vector<std::pair<ModelId, std::int64_t>> out;
  for (const auto& e : models) {
    if (e.count > 0) out.emplace_back(e.model, e.count);
  }
  return out;
}

PosteriorSummary enumerate_posterior(ScoreMemo& scorer, const ModelPriorSpec& prior,
                                     std::shared_ptr<const GroupLayout> layout,
                                     int limit, int threads) {
  CheckLayout(*layout, prior);
  const int J = layout->J();
  const std::vector<ModelId> space = enumerate_models(layout, prior.constraints, limit);
  std::vector<ModelEntry> models(space.size());
  parallel_for(space.size(), threads > 0 ? threads : default_threads(), [&](std::size_t i) {
    models[i].model = space[i];
    models[i].log_prior = log_model_prior(space[i], prior);
    models[i].log_score = scorer.log_score(space[i]);
  });
  PosteriorSummary out;
  out.kind = PosteriorSummary::Kind::kEnumerate;
  out.models = std::move(models);
  Normalize(&out.models, J, &out.inclusion);
  return out;
}

PosteriorSummary gibbs_models(ScoreMemo& scorer, const ModelPriorSpec& prior,
                              std::shared_ptr<const GroupLayout> layout,
                              const GibbsOptions& options) {
  CheckLayout(*layout, prior);
  if (options.n_scans < 1) throw ConfigError("n_scans must be positive");
  const ConstraintSet& cs = prior.constraints;
  const int J = layout->J();
  const std::optional<int> forced = cs.forced_group();

  // Update blocks: a group with dependents carries its whole subtree.
  std::vector<std::vector<int>> blocks;
  for (int j = 0; j < J; ++j) {
    if (forced && *forced == j) continue;
    std::vector<int> block{j};
    for (int d : cs.descendants(j)) {
      if (!forced || *forced != d) block.push_back(d);
    }
    if (block.size() > 1 && (block.size() >= 31 || (1 << block.size()) > options.max_block)) {
      block.resize(1);
    }
    blocks.push_back(std::move(block));
  }

  auto log_post = [&](const ModelId& m) {
    if (!cs.satisfied(m)) return kNegInf;
    return scorer.log_score(m) + log_model_prior(m, prior);
  };

  Rng rng(options.seed);
  ModelId state(layout);
  if (forced) state.set(*forced, true);

  const int burnin = static_cast<int>(std::floor(options.burnin_fraction * options.n_scans));
  const int kept = options.n_scans - burnin;
  if (kept < 1) throw ConfigError("burn-in discards every scan");

  std::unordered_map<ModelId, std::int64_t, ModelIdHash> counts;
  Vector rb = Vector::Zero(J);
  Vector cond = Vector::Zero(J);
  std::int64_t violations = 0;
  std::vector<double> logw;
  std::vector<double> probs;
  std::vector<ModelId> candidates;

  for (int scan = 0; scan < options.n_scans; ++scan) {
    for (const auto& block : blocks) {
      const int head = block.front();
      const int configs = 1 << block.size();
      candidates.clear();
      logw.clear();
      for (int mask = 0; mask < configs; ++mask) {
        ModelId m = state;
        for (std::size_t k = 0; k < block.size(); ++k) m.set(block[k], (mask >> k) & 1);
        const double lp = log_post(m);
        if (lp == kNegInf) continue;
        candidates.push_back(std::move(m));
        logw.push_back(lp);
      }
      if (candidates.empty()) continue;
      const int pick = SampleIndex(logw, rng, &probs);
      if (pick < 0) continue;
      double p_on = 0.0;
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].test(head)) p_on += probs[i];
      }
      cond[head] = p_on;
      state = candidates[pick];
    }
    if (!cs.satisfied(state)) ++violations;
    if (scan >= burnin) {
      ++counts[state];
      rb += cond;
    }
  }
  if (forced) rb[*forced] = kept;

  PosteriorSummary out;
  out.kind = PosteriorSummary::Kind::kGibbs;
  out.n_scans = options.n_scans;
  out.burnin = burnin;
  out.seed = options.seed;
  out.constraint_violations = violations;
  out.inclusion = Vector::Zero(J);
  for (const auto& [model, count] : counts) {
    ModelEntry e;
    e.model = model;
    e.count = count;
    e.prob = static_cast<double>(count) / kept;
    e.log_score = scorer.log_score(model);
    e.log_prior = log_model_prior(model, prior);
    for (int j = 0; j < J; ++j) {
      if (model.test(j)) out.inclusion[j] += e.prob;
    }
    out.models.push_back(std::move(e));
  }
  SortEntries(&out.models);
  out.inclusion_rb = rb / kept;
  return out;
}

ImportanceReport importance_reweight(
    const std::vector<std::pair<ModelId, std::int64_t>>& samples,
    ScoreMemo& la_scorer, ScoreMemo& ala_scorer) {
  std::unordered_map<ModelId, std::size_t, ModelIdHash> index;
  ImportanceReport out;
  for (const auto& [model, count] : samples) {
    if (count <= 0) continue;
    auto [it, fresh] = index.try_emplace(model, out.models.size());
    if (fresh) {
      out.models.push_back(model);
      out.counts.push_back(0);
    }
    out.counts[it->second] += count;
    out.draws += count;
  }
  const std::size_t K = out.models.size();
  if (K == 0) throw ConfigError("importance reweighting needs at least one draw");
  const int J = out.models.front().J();

  std::vector<double> la(K), ala(K);
  for (std::size_t k = 0; k < K; ++k) {
    la[k] = la_scorer.log_score(out.models[k]);
    ala[k] = ala_scorer.log_score(out.models[k]);
  }
  // Model priors cancel in the ratio of the two restricted posteriors.
  const double la_lse = LogSumExp(la);
  const double ala_lse = LogSumExp(ala);
  std::vector<double> logw(K), logcw(K), logcw2(K);
  for (std::size_t k = 0; k < K; ++k) {
    logw[k] = (la[k] - la_lse) - (ala[k] - ala_lse);
    const double logc = std::log(static_cast<double>(out.counts[k]));
    logcw[k] = logc + logw[k];
    logcw2[k] = logc + 2.0 * logw[k];
  }
  const double total = LogSumExp(logcw);
  out.weights.resize(static_cast<Eigen::Index>(K));
  out.inclusion = Vector::Zero(J);
  double max_logw = kNegInf;
  for (std::size_t k = 0; k < K; ++k) {
    out.weights[k] = std::exp(logw[k]);
    max_logw = std::max(max_logw, logw[k]);
    const double share = std::exp(logcw[k] - total);
    for (int j = 0; j < J; ++j) {
      if (out.models[k].test(j)) out.inclusion[j] += share;
    }
  }
  out.max_weight = std::exp(max_logw);
  out.max_normalized_weight = std::exp(max_logw - LogSumExp(logw));
  out.effective_sample_size = std::exp(2.0 * total - LogSumExp(logcw2));
  out.degenerate = K > 1 && out.max_normalized_weight > 0.5;
  return out;
}

PosteriorSummary screen_then_refine(const PosteriorSummary& ala_summary,
                                    double threshold, ScoreMemo& refine_scorer,
                                    const ModelPriorSpec& prior,
                                    std::shared_ptr<const GroupLayout> layout,
                                    int limit) {
  CheckLayout(*layout, prior);
  const ConstraintSet& cs = prior.constraints;
  const int J = layout->J();
  if (ala_summary.inclusion.size() != J) {
    throw ConfigError("screening summary does not match the design");
  }
  const std::optional<int> forced = cs.forced_group();
  std::vector<int> survivors;
  for (int j = 0; j < J; ++j) {
    if (forced && *forced == j) continue;
    if (threshold <= 0.0 || ala_summary.inclusion[j] > threshold) survivors.push_back(j);
  }
  if (static_cast<int>(survivors.size()) > limit || survivors.size() >= 31) {
    throw RefuseEnumeration(std::to_string(survivors.size()) +
                            " groups survive screening, above the enumeration limit " +
                            std::to_string(limit));
  }

  PosteriorSummary out;
  out.kind = PosteriorSummary::Kind::kScreened;
  const std::uint32_t configs = 1u << survivors.size();
  for (std::uint32_t mask = 0; mask < configs; ++mask) {
    ModelId m(layout);
    if (forced) m.set(*forced, true);
    for (std::size_t k = 0; k < survivors.size(); ++k) {
      if ((mask >> k) & 1u) m.set(survivors[k], true);
    }
    if (!cs.satisfied(m)) continue;
    ModelEntry e;
    e.model = std::move(m);
    out.models.push_back(std::move(e));
  }
  parallel_for(out.models.size(), default_threads(), [&](std::size_t i) {
    out.models[i].log_prior = log_model_prior(out.models[i].model, prior);
    out.models[i].log_score = refine_scorer.log_score(out.models[i].model);
  });
  if (survivors.empty()) {
    out.warnings.push_back("every group was screened out; only the null model remains");
  }
  Normalize(&out.models, J, &out.inclusion);
  return out;
}

}  // namespace ala
