#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ala/families.hpp"

namespace ala {

struct GroupRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};

/// Partition of [0, p) into J contiguous column groups.
class GroupLayout {
 public:
  explicit GroupLayout(const std::vector<int>& sizes);

  int J() const { return static_cast<int>(ranges_.size()); }
  int p() const { return p_; }
  const GroupRange& group(int j) const { return ranges_.at(j); }
  int size(int j) const { return ranges_.at(j).size(); }

 private:
  std::vector<GroupRange> ranges_;
  int p_ = 0;
};

/// Group inclusion vector gamma with cached |gamma| and p_gamma.
class ModelId {
 public:
  ModelId() = default;
  explicit ModelId(std::shared_ptr<const GroupLayout> layout);

  static ModelId FromBits(std::shared_ptr<const GroupLayout> layout,
                          const std::string& bits);
  static ModelId FromGroups(std::shared_ptr<const GroupLayout> layout,
                            const std::vector<int>& groups);

  int J() const { return layout_ ? layout_->J() : 0; }
  bool test(int j) const { return (words_[j >> 6] >> (j & 63)) & 1u; }
  bool operator[](int j) const { return test(j); }
  void set(int j, bool on = true);

  int size() const { return size_; }
  int dim() const { return dim_; }
  std::vector<int> active() const;
  /// Column indices of the active groups, in group order.
  std::vector<int> columns() const;
  /// "0110..." with group 0 first.
  std::string bits() const;

  const GroupLayout& layout() const { return *layout_; }
  const std::shared_ptr<const GroupLayout>& layout_ptr() const {
    return layout_;
  }

  bool operator==(const ModelId& other) const { return words_ == other.words_; }
  bool operator!=(const ModelId& other) const { return !(*this == other); }
  bool operator<(const ModelId& other) const { return bits() < other.bits(); }
  std::size_t hash() const;

 private:
  std::shared_ptr<const GroupLayout> layout_;
  std::vector<std::uint64_t> words_;
  int size_ = 0;
  int dim_ = 0;
};

struct ModelIdHash {
  std::size_t operator()(const ModelId& m) const { return m.hash(); }
};

/// n x p covariates split into column groups, optionally with a group that
/// every model must contain.
class DesignMatrix {
 public:
  DesignMatrix(Matrix values, const std::vector<int>& group_sizes,
               std::optional<int> intercept_group = std::nullopt,
               std::vector<std::string> column_names = {});
  static DesignMatrix Singletons(Matrix values,
                                 std::optional<int> intercept_group = {});

  const Matrix& values() const { return values_; }
  int n() const { return static_cast<int>(values_.rows()); }
  int p() const { return static_cast<int>(values_.cols()); }
  int J() const { return layout_->J(); }
  const GroupLayout& layout() const { return *layout_; }
  const std::shared_ptr<const GroupLayout>& layout_ptr() const {
    return layout_;
  }
  const GroupRange& group(int j) const { return layout_->group(j); }
  std::optional<int> intercept_group() const { return intercept_; }
  const std::vector<std::string>& column_names() const { return names_; }

  /// Z_gamma, the active columns in group order.
  Matrix columns(const ModelId& model) const;
  /// The smallest model: only the forced group, if any.
  ModelId empty_model() const;
  ModelId full_model() const;

 private:
  Matrix values_;
  std::shared_ptr<const GroupLayout> layout_;
  std::optional<int> intercept_;
  std::vector<std::string> names_;
};

/// Maximum model size and "child requires parent" dependencies.
class ConstraintSet {
 public:
  /// max_groups < 0 means no size cap. Throws ConfigError on cycles.
  explicit ConstraintSet(int J, int max_groups = -1,
                         std::vector<std::pair<int, int>> dependencies = {},
                         std::optional<int> forced_group = std::nullopt);

  int J() const { return J_; }
  int max_groups() const { return max_groups_; }
  std::optional<int> forced_group() const { return forced_; }
  const std::vector<std::pair<int, int>>& dependencies() const { return deps_; }
  const std::vector<int>& parents(int j) const { return parents_.at(j); }
  const std::vector<int>& children(int j) const { return children_.at(j); }
  /// Transitive dependents of j.
  std::vector<int> descendants(int j) const;

  /// Number of groups that may vary (J minus the forced group).
  int free_count() const { return J_ - (forced_ ? 1 : 0); }
  /// |gamma| not counting the forced group.
  int free_size(const ModelId& m) const;
  bool satisfied(const ModelId& m) const;
  /// Empty when satisfied, else a human-readable reason.
  std::string violation(const ModelId& m) const;

  /// A dependency cycle as a list of groups, if any.
  static std::optional<std::vector<int>> FindCycle(
      int J, const std::vector<std::pair<int, int>>& dependencies);

 private:
  int J_;
  int max_groups_;
  std::vector<std::pair<int, int>> deps_;
  std::optional<int> forced_;
  std::vector<std::vector<int>> parents_;
  std::vector<std::vector<int>> children_;
};

/// Lexicographic walk over all constraint-satisfying models.
class ModelEnumerator {
 public:
  static constexpr int kDefaultLimit = 25;

  ModelEnumerator(std::shared_ptr<const GroupLayout> layout,
                  const ConstraintSet& constraints,
                  int limit = kDefaultLimit);
  bool next(ModelId* out);

 private:
  std::shared_ptr<const GroupLayout> layout_;
  const ConstraintSet& constraints_;
  std::vector<int> free_;
  std::uint64_t mask_ = 0;
  std::uint64_t end_ = 0;
};

std::vector<ModelId> enumerate_models(
    std::shared_ptr<const GroupLayout> layout, const ConstraintSet& constraints,
    int limit = ModelEnumerator::kDefaultLimit);

enum class Center { kZero, kInterceptMle };

Center ParseCenter(const std::string& name);

/// Shift and scale used to form the working response.
struct TransformTag {
  Center center = Center::kZero;
  double nu0 = 0.0;
  double b1 = 0.0;  ///< b'(nu0)
  double b2 = 1.0;  ///< b''(nu0)
  std::string str() const;
};

/// Z'y~ and y~'y~ for y~ = (y - b'(nu0)) / b''(nu0), plus Z'Z entries
/// computed on first touch and shared between all models.
class SuffStatsCache {
 public:
  SuffStatsCache(std::shared_ptr<const DesignMatrix> design, Vector y,
                 Vector ytilde, TransformTag tag);

  const DesignMatrix& design() const { return *design_; }
  const std::shared_ptr<const DesignMatrix>& design_ptr() const {
    return design_;
  }
  const Vector& y() const { return y_; }
  const Vector& ytilde() const { return ytilde_; }
  const Vector& zty() const { return zty_; }
  double yty() const { return yty_; }
  const TransformTag& tag() const { return tag_; }

  /// (Z'Z)_{ij}, computed and memoized on first request.
  double gram(int i, int j) const;
  /// Fills xtx with Z'Z restricted to `cols`, touching each entry once.
  void gram_block(const std::vector<int>& cols, Matrix* xtx) const;

  std::uint64_t dot_products() const { return dots_.load(); }
  std::size_t filled() const;

 private:
  std::uint64_t Key(int i, int j) const {
    if (i > j) std::swap(i, j);
    return static_cast<std::uint64_t>(i) * design_->p() + j;
  }
  double Dot(int i, int j) const;

  std::shared_ptr<const DesignMatrix> design_;
  Vector y_;
  Vector ytilde_;
  Vector zty_;
  double yty_ = 0.0;
  TransformTag tag_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::uint64_t, double> gram_;
  mutable std::atomic<std::uint64_t> dots_{0};
};

/// Throws DegenerateResponse when b''(nu0) = 0 or ybar sits on the boundary
/// of the mean space, DomainError on non-finite y.
std::shared_ptr<const SuffStatsCache> build_cache(
    std::shared_ptr<const DesignMatrix> design, const Vector& y,
    const FamilySpec& family, Center center);

struct SubmodelStats {
  Matrix xtx;
  Vector xty;
};

SubmodelStats submodel_stats(const SuffStatsCache& cache, const ModelId& model);

enum class RankPolicy { kThrow, kJitter };

/// Cholesky factor of a symmetric positive-definite matrix.
struct SpdFactor {
  Eigen::LLT<Matrix> llt;
  double logdet = 0.0;
  bool jittered = false;
};

/// On failure either throws NotInvertible or adds 1e-10 * trace / dim to the
/// diagonal and retries.
SpdFactor spd_factor(const Matrix& m, RankPolicy policy = RankPolicy::kThrow,
                     const std::string& model = {});

struct LsSolution {
  Vector beta;
  double quad = 0.0;  ///< xty' beta = beta' xtx beta
  SpdFactor factor;
};

LsSolution ls_solve(const Matrix& xtx, const Vector& xty,
                    RankPolicy policy = RankPolicy::kThrow,
                    const std::string& model = {});

}  // namespace ala
