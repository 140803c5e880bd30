#include "ala/data_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <mutex>
#include <sstream>

#include "ala/errors.hpp"

namespace ala {

GroupLayout::GroupLayout(const std::vector<int>& sizes) {
  if (sizes.empty()) throw ConfigError("design needs at least one group");
  int begin = 0;
  for (int s : sizes) {
    if (s < 1) throw ConfigError("every group needs at least one column");
    ranges_.push_back({begin, begin + s});
    begin += s;
  }
  p_ = begin;
}

ModelId::ModelId(std::shared_ptr<const GroupLayout> layout)
    : layout_(std::move(layout)),
      words_((layout_->J() + 63) / 64, 0) {}

ModelId ModelId::FromBits(std::shared_ptr<const GroupLayout> layout,
                          const std::string& bits) {
  ModelId m(std::move(layout));
  if (static_cast<int>(bits.size()) != m.J()) {
    throw ConfigError("model bit string '" + bits + "' has length " +
                      std::to_string(bits.size()) + ", expected " +
                      std::to_string(m.J()));
  }
  for (int j = 0; j < m.J(); ++j) {
    if (bits[j] != '0' && bits[j] != '1') {
      throw ConfigError("model bit string must contain only 0 and 1");
    }
    m.set(j, bits[j] == '1');
  }
  return m;
}

ModelId ModelId::FromGroups(std::shared_ptr<const GroupLayout> layout,
                            const std::vector<int>& groups) {
  ModelId m(std::move(layout));
  for (int j : groups) m.set(j, true);
  return m;
}

void ModelId::set(int j, bool on) {
  if (j < 0 || j >= J()) throw ConfigError("group index out of range");
  if (test(j) == on) return;
  const std::uint64_t bit = std::uint64_t{1} << (j & 63);
  const int sign = on ? 1 : -1;
  if (on) words_[j >> 6] |= bit; else words_[j >> 6] &= ~bit;
  size_ += sign;
  dim_ += sign * layout_->size(j);
}

std::vector<int> ModelId::active() const {
  std::vector<int> out;
  out.reserve(size_);
  for (int j = 0; j < J(); ++j) {
    if (test(j)) out.push_back(j);
  }
  return out;
}

std::vector<int> ModelId::columns() const {
  std::vector<int> out;
  out.reserve(dim_);
  for (int j = 0; j < J(); ++j) {
    if (!test(j)) continue;
    const GroupRange& g = layout_->group(j);
    for (int c = g.begin; c < g.end; ++c) out.push_back(c);
  }
  return out;
}

std::string ModelId::bits() const {
  std::string s(J(), '0');
  for (int j = 0; j < J(); ++j) {
    if (test(j)) s[j] = '1';
  }
  return s;
}

std::size_t ModelId::hash() const {
  std::size_t h = 0x9E3779B97F4A7C15ull;
  for (std::uint64_t w : words_) {
    h ^= std::hash<std::uint64_t>{}(w) + 0x9E3779B97F4A7C15ull + (h << 6) +
         (h >> 2);
  }
  return h;
}

DesignMatrix::DesignMatrix(Matrix values, const std::vector<int>& group_sizes,
                           std::optional<int> intercept_group,
                           std::vector<std::string> column_names)
    : values_(std::move(values)),
      layout_(std::make_shared<GroupLayout>(group_sizes)),
      intercept_(intercept_group),
      names_(std::move(column_names)) {
  if (values_.rows() < 1) throw ConfigError("design needs at least one row");
  if (layout_->p() != values_.cols()) {
    throw ConfigError("group sizes sum to " + std::to_string(layout_->p()) +
                      " but the design has " +
                      std::to_string(values_.cols()) + " columns");
  }
  if (intercept_ && (*intercept_ < 0 || *intercept_ >= layout_->J())) {
    throw ConfigError("intercept group index out of range");
  }
  if (!values_.allFinite()) throw DomainError("design has non-finite entries");
  if (names_.empty()) {
    for (int c = 0; c < p(); ++c) names_.push_back("x" + std::to_string(c + 1));
  } else if (static_cast<int>(names_.size()) != p()) {
    throw ConfigError("column name count does not match the design");
  }
}

DesignMatrix DesignMatrix::Singletons(Matrix values,
                                      std::optional<int> intercept_group) {
  std::vector<int> sizes(values.cols(), 1);
  return DesignMatrix(std::move(values), sizes, intercept_group);
}

Matrix DesignMatrix::columns(const ModelId& model) const {
  const std::vector<int> cols = model.columns();
  Matrix out(n(), cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(k) = values_.col(cols[k]);
  return out;
}

ModelId DesignMatrix::empty_model() const {
  ModelId m(layout_);
  if (intercept_) m.set(*intercept_, true);
  return m;
}

ModelId DesignMatrix::full_model() const {
  ModelId m(layout_);
  for (int j = 0; j < J(); ++j) m.set(j, true);
  return m;
}

ConstraintSet::ConstraintSet(int J, int max_groups,
                             std::vector<std::pair<int, int>> dependencies,
                             std::optional<int> forced_group)
    : J_(J),
      max_groups_(max_groups),
      deps_(std::move(dependencies)),
      forced_(forced_group),
      parents_(J),
      children_(J) {
  if (J < 0) throw ConfigError("J must be non-negative");
  if (forced_ && (*forced_ < 0 || *forced_ >= J)) {
    throw ConfigError("forced group index out of range");
  }
  if (max_groups_ < 0) max_groups_ = free_count();
  if (max_groups_ > J) {
    throw ConfigError("maximum model size " + std::to_string(max_groups_) +
                      " exceeds J = " + std::to_string(J));
  }
  for (const auto& [child, parent] : deps_) {
    if (child < 0 || child >= J || parent < 0 || parent >= J) {
      throw ConfigError("constraint refers to a group outside [0, J)");
    }
    if (child == parent) {
      throw ConfigError("group " + std::to_string(child + 1) +
                        " cannot require itself");
    }
    parents_[child].push_back(parent);
    children_[parent].push_back(child);
  }
  if (auto cycle = FindCycle(J, deps_)) {
    std::ostringstream msg;
    msg << "constraints contain a cycle:";
    for (std::size_t k = 0; k < cycle->size(); ++k) {
      msg << (k ? " -> " : " ") << (*cycle)[k] + 1;
    }
    throw ConfigError(msg.str());
  }
}

std::optional<std::vector<int>> ConstraintSet::FindCycle(
    int J, const std::vector<std::pair<int, int>>& dependencies) {
  std::vector<std::vector<int>> out(J);
  for (const auto& [child, parent] : dependencies) {
    if (child >= 0 && child < J && parent >= 0 && parent < J) {
      out[child].push_back(parent);
    }
  }
  std::vector<int> color(J, 0);  // 0 new, 1 on stack, 2 done
  std::vector<int> stack;
  std::optional<std::vector<int>> found;
  std::function<bool(int)> visit = [&](int v) {
    color[v] = 1;
    stack.push_back(v);
    for (int w : out[v]) {
      if (color[w] == 1) {
        auto it = std::find(stack.begin(), stack.end(), w);
        std::vector<int> cycle(it, stack.end());
        cycle.push_back(w);
        found = cycle;
        return true;
      }
      if (color[w] == 0 && visit(w)) return true;
    }
    stack.pop_back();
    color[v] = 2;
    return false;
  };
  for (int v = 0; v < J; ++v) {
    if (color[v] == 0 && visit(v)) return found;
  }
  return std::nullopt;
}

std::vector<int> ConstraintSet::descendants(int j) const {
  std::vector<int> out;
  std::vector<char> seen(J_, 0);
  std::vector<int> todo = children_.at(j);
  while (!todo.empty()) {
    const int v = todo.back();
    todo.pop_back();
    if (seen[v]) continue;
    seen[v] = 1;
    out.push_back(v);
    for (int w : children_[v]) todo.push_back(w);
  }
  std::sort(out.begin(), out.end());
  return out;
}

int ConstraintSet::free_size(const ModelId& m) const {
  return m.size() - ((forced_ && m.test(*forced_)) ? 1 : 0);
}

std::string ConstraintSet::violation(const ModelId& m) const {
  if (m.J() != J_) return "model has the wrong number of groups";
  if (forced_ && !m.test(*forced_)) {
    return "forced group " + std::to_string(*forced_ + 1) + " is off";
  }
  if (free_size(m) > max_groups_) {
    return "model size " + std::to_string(free_size(m)) + " exceeds " +
           std::to_string(max_groups_);
  }
  for (const auto& [child, parent] : deps_) {
    if (m.test(child) && !m.test(parent)) {
      return "group " + std::to_string(child + 1) + " requires group " +
             std::to_string(parent + 1);
    }
  }
  return {};
}

bool ConstraintSet::satisfied(const ModelId& m) const {
  return violation(m).empty();
}

ModelEnumerator::ModelEnumerator(std::shared_ptr<const GroupLayout> layout,
                                 const ConstraintSet& constraints, int limit)
    : layout_(std::move(layout)), constraints_(constraints) {
  if (constraints.J() != layout_->J()) {
    throw ConfigError("constraints and design disagree on J");
  }
  for (int j = 0; j < layout_->J(); ++j) {
    if (!constraints.forced_group() || *constraints.forced_group() != j) {
      free_.push_back(j);
    }
  }
  if (static_cast<int>(free_.size()) > limit || free_.size() >= 63) {
    throw RefuseEnumeration("J = " + std::to_string(free_.size()) +
                            " exceeds the enumeration limit " +
                            std::to_string(limit) + "; use Gibbs sampling");
  }
  end_ = std::uint64_t{1} << free_.size();
}

bool ModelEnumerator::next(ModelId* out) {
  const int F = static_cast<int>(free_.size());
  for (; mask_ < end_; ++mask_) {
    if (std::popcount(mask_) > constraints_.max_groups()) continue;
    ModelId m(layout_);
    if (constraints_.forced_group()) m.set(*constraints_.forced_group(), true);
    for (int k = 0; k < F; ++k) {
      if ((mask_ >> (F - 1 - k)) & 1u) m.set(free_[k], true);
    }
    if (!constraints_.satisfied(m)) continue;
    *out = std::move(m);
    ++mask_;
    return true;
  }
  return false;
}

std::vector<ModelId> enumerate_models(std::shared_ptr<const GroupLayout> layout,
                                      const ConstraintSet& constraints,
                                      int limit) {
  ModelEnumerator e(std::move(layout), constraints, limit);
  std::vector<ModelId> out;
  ModelId m;
  while (e.next(&m)) out.push_back(m);
  return out;
}

Center ParseCenter(const std::string& name) {
  if (name == "zero") return Center::kZero;
  if (name == "intercept-mle") return Center::kInterceptMle;
  throw ConfigError("unknown center '" + name + "' (zero | intercept-mle)");
}

std::string TransformTag::str() const {
  std::ostringstream s;
  s.precision(17);
  s << (center == Center::kZero ? "zero" : "intercept-mle") << "(nu0=" << nu0
    << ",b1=" << b1 << ",b2=" << b2 << ")";
  return s.str();
}

SuffStatsCache::SuffStatsCache(std::shared_ptr<const DesignMatrix> design,
                               Vector y, Vector ytilde, TransformTag tag)
    : design_(std::move(design)),
      y_(std::move(y)),
      ytilde_(std::move(ytilde)),
      tag_(tag) {
  zty_ = design_->values().transpose() * ytilde_;
  yty_ = ytilde_.squaredNorm();
}

double SuffStatsCache::Dot(int i, int j) const {
  dots_.fetch_add(1, std::memory_order_relaxed);
  return design_->values().col(i).dot(design_->values().col(j));
}

double SuffStatsCache::gram(int i, int j) const {
  const std::uint64_t key = Key(i, j);
  {
    std::shared_lock lock(mutex_);
    auto it = gram_.find(key);
    if (it != gram_.end()) return it->second;
  }
  const double v = Dot(i, j);
  std::unique_lock lock(mutex_);
  return gram_.try_emplace(key, v).first->second;
}

void SuffStatsCache::gram_block(const std::vector<int>& cols,
                                Matrix* xtx) const {
  const int d = static_cast<int>(cols.size());
  xtx->resize(d, d);
  std::vector<std::pair<int, int>> missing;
  {
    std::shared_lock lock(mutex_);
    for (int a = 0; a < d; ++a) {
      for (int b = a; b < d; ++b) {
        auto it = gram_.find(Key(cols[a], cols[b]));
        if (it == gram_.end()) {
          missing.emplace_back(a, b);
        } else {
          (*xtx)(a, b) = (*xtx)(b, a) = it->second;
        }
      }
    }
  }
  if (missing.empty()) return;
  std::vector<double> values(missing.size());
  for (std::size_t k = 0; k < missing.size(); ++k) {
    values[k] = Dot(cols[missing[k].first], cols[missing[k].second]);
  }
  std::unique_lock lock(mutex_);
  for (std::size_t k = 0; k < missing.size(); ++k) {
    const auto [a, b] = missing[k];
    const double v =
        gram_.try_emplace(Key(cols[a], cols[b]), values[k]).first->second;
    (*xtx)(a, b) = (*xtx)(b, a) = v;
  }
}

std::size_t SuffStatsCache::filled() const {
  std::shared_lock lock(mutex_);
  return gram_.size();
}

std::shared_ptr<const SuffStatsCache> build_cache(
    std::shared_ptr<const DesignMatrix> design, const Vector& y,
    const FamilySpec& family, Center center) {
  if (y.size() != design->n()) {
    throw DomainError("response length " + std::to_string(y.size()) +
                      " does not match n = " + std::to_string(design->n()));
  }
  if (!y.allFinite()) throw DomainError("response has non-finite entries");
  TransformTag tag;
  tag.center = center;
  if (!family.is_expfam()) {
    return std::make_shared<SuffStatsCache>(std::move(design), y, y, tag);
  }
  if (family.kind == FamilyKind::kLogistic &&
      ((y.array() < 0).any() || (y.array() > 1).any())) {
    throw DomainError("logistic response must lie in [0, 1]");
  }
  if (family.kind == FamilyKind::kPoisson && (y.array() < 0).any()) {
    throw DomainError("Poisson response must be non-negative");
  }
  if (center == Center::kInterceptMle) tag.nu0 = family.link(y.mean());
  if (!std::isfinite(tag.nu0)) {
    throw DegenerateResponse("h(ybar) is not finite (ybar = " +
                             std::to_string(y.mean()) + ")");
  }
  tag.b1 = family.b1(tag.nu0);
  tag.b2 = family.b2(tag.nu0);
  if (!(tag.b2 > 0)) {
    throw DegenerateResponse("b''(nu0) = 0 at nu0 = " + std::to_string(tag.nu0));
  }
  Vector ytilde = (y.array() - tag.b1) / tag.b2;
  return std::make_shared<SuffStatsCache>(std::move(design), y,
                                          std::move(ytilde), tag);
}

SubmodelStats submodel_stats(const SuffStatsCache& cache, const ModelId& model) {
  const std::vector<int> cols = model.columns();
  SubmodelStats out;
  cache.gram_block(cols, &out.xtx);
  out.xty.resize(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) out.xty[k] = cache.zty()[cols[k]];
  return out;
}

namespace {

bool TryFactor(const Matrix& m, SpdFactor* f) {
  f->llt.compute(m);
  if (f->llt.info() != Eigen::Success) return false;
  const Vector d = f->llt.matrixLLT().diagonal();
  const double scale = m.diagonal().cwiseAbs().maxCoeff();
  if (!(d.minCoeff() > 0) || d.cwiseAbs2().minCoeff() < 1e-12 * scale) {
    return false;
  }
  f->logdet = 2.0 * d.array().log().sum();
  return std::isfinite(f->logdet);
}

}  // namespace

SpdFactor spd_factor(const Matrix& m, RankPolicy policy,
                     const std::string& model) {
  SpdFactor f;
  if (m.rows() == 0) {
    f.llt.compute(m);
    return f;
  }
  if (TryFactor(m, &f)) return f;
  if (policy == RankPolicy::kJitter) {
    Matrix j = m;
    j.diagonal().array() += 1e-10 * m.trace() / m.rows();
    if (TryFactor(j, &f)) {
      f.jittered = true;
      return f;
    }
  }
  throw NotInvertible("matrix is not positive definite", model);
}

LsSolution ls_solve(const Matrix& xtx, const Vector& xty, RankPolicy policy,
                    const std::string& model) {
  LsSolution out;
  out.factor = spd_factor(xtx, policy, model);
  if (xtx.rows() == 0) {
    out.beta = Vector(0);
    return out;
  }
  out.beta = out.factor.llt.solve(xty);
  out.quad = xty.dot(out.beta);
  return out;
}

}  // namespace ala
