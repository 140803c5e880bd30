#include "doctest.h"

#include <map>

#include "ala/errors.hpp"
#include "ala/scorer.hpp"
#include "ala/search.hpp"
#include "support.hpp"

using namespace ala;
using namespace ala::testing;

namespace {

ScoreMemo Constant(double value) {
  return ScoreMemo([value](const ModelId&) {
    MarginalScore s;
    s.log_ml = value;
    return s;
  });
}

ModelPriorSpec Uniformish(int J, int max_groups = -1,
                          std::vector<std::pair<int, int>> deps = {}) {
  return ModelPriorSpec{0.0, ConstraintSet(J, max_groups, std::move(deps)), J};
}

double LogBinom(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

TEST_CASE("enumeration of tiny spaces") {
  SUBCASE("only the empty model") {
    auto layout = std::make_shared<const GroupLayout>(std::vector<int>{1, 1});
    ScoreMemo memo = Constant(-3.0);
    const PosteriorSummary s = enumerate_posterior(memo, Uniformish(2, 0), layout);
    REQUIRE(s.models.size() == 1);
    CHECK(s.models[0].prob == 1.0);
    CHECK(s.top_model().model.size() == 0);
  }
  SUBCASE("two equal models") {
    auto layout = std::make_shared<const GroupLayout>(std::vector<int>{1});
    ScoreMemo memo = Constant(-1.0);
    const PosteriorSummary s = enumerate_posterior(memo, Uniformish(1), layout);
    REQUIRE(s.models.size() == 2);
    CHECK(s.models[0].prob == doctest::Approx(0.5));
    CHECK(s.models[1].prob == doctest::Approx(0.5));
  }
}

TEST_CASE("enumeration against a conjugate oracle") {
  Rng rng(41);
  const int n = 60, J = 6;
  const Eigen::HouseholderQR<Matrix> qr(RandomNormal(n, J, rng));
  const Matrix X = Matrix(qr.householderQ() * Matrix::Identity(n, J)) * std::sqrt(double(n));
  const Vector y = X * (Vector(J) << 0.4, 0, 0.2, 0, 0, 0.1).finished() + RandomVector(n, rng);
  auto design = Singletons(X);
  ScorerConfig config = ScorerConfig::Defaults(FamilySpec::GaussianKnownPhi(1.0));
  ModelScorer scorer(design, y, config);
  ScoreMemo memo([&](const ModelId& m) { return scorer.score(m); });
  const ModelPriorSpec prior = Uniformish(J);
  const PosteriorSummary s = enumerate_posterior(memo, prior, design->layout_ptr());
  REQUIRE(s.models.size() == 64);

  std::map<std::string, double> oracle;
  double lse = -INFINITY;
  for (int mask = 0; mask < 64; ++mask) {
    std::string bits;
    std::vector<int> cols;
    for (int j = 0; j < J; ++j) {
      const bool on = (mask >> j) & 1;
      bits += on ? '1' : '0';
      if (on) cols.push_back(j);
    }
    Matrix Z(n, static_cast<int>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) Z.col(k) = X.col(cols[k]);
    const int k = static_cast<int>(cols.size());
    const Matrix P0 = (Z.transpose() * Z) / double(n);  // singletons: p_j / (g n) Z_j'Z_j
    const double lp = DenseGaussianLogMarginal(Z, y, P0, 1.0) - std::log(J + 1.0) - LogBinom(J, k);
    oracle[bits] = lp;
    lse = std::max(lse, lp) + std::log1p(std::exp(-std::abs(lse - lp)));
  }
  double total = 0.0, size_sum = 0.0;
  for (const auto& e : s.models) {
    CHECK(std::abs(e.prob - std::exp(oracle[e.model.bits()] - lse)) <= 1e-8);
    total += e.prob;
    size_sum += e.model.size() * e.prob;
  }
  CHECK(std::abs(total - 1.0) <= 1e-10);
  CHECK(std::abs(s.inclusion.sum() - size_sum) <= 1e-10);
}

TEST_CASE("enumeration is exchangeable in group order") {
  Rng rng(42);
  const int n = 50;
  const Matrix X = RandomNormal(n, 3, rng);
  const Vector y = 0.5 * X.col(0) + RandomVector(n, rng);
  Matrix Xp(n, 3);
  Xp << X.col(2), X.col(0), X.col(1);
  const auto config = ScorerConfig::Defaults(FamilySpec::GaussianKnownPhi(1.0));
  ModelScorer a(Singletons(X), y, config), b(Singletons(Xp), y, config);
  ScoreMemo ma([&](const ModelId& m) { return a.score(m); });
  ScoreMemo mb([&](const ModelId& m) { return b.score(m); });
  const auto sa = enumerate_posterior(ma, Uniformish(3), a.design().layout_ptr());
  const auto sb = enumerate_posterior(mb, Uniformish(3), b.design().layout_ptr());
  CHECK(sa.inclusion[0] == doctest::Approx(sb.inclusion[1]).epsilon(1e-12));
  CHECK(sa.inclusion[1] == doctest::Approx(sb.inclusion[2]).epsilon(1e-12));
  CHECK(sa.inclusion[2] == doctest::Approx(sb.inclusion[0]).epsilon(1e-12));
}

TEST_CASE("gibbs with one group") {
  auto layout = std::make_shared<const GroupLayout>(std::vector<int>{1});
  ScoreMemo memo([](const ModelId& m) {
    MarginalScore s;
    s.log_ml = m.size() ? 0.8 : 0.0;
    return s;
  });
  const ModelPriorSpec prior = Uniformish(1);
  const auto exact = enumerate_posterior(memo, prior, layout);
  GibbsOptions opts;
  opts.n_scans = 20000;
  opts.seed = 5;
  const auto gibbs = gibbs_models(memo, prior, layout, opts);
  const double p = exact.inclusion[0];
  const double kept = opts.n_scans - gibbs.burnin;
  CHECK(std::abs(gibbs.inclusion[0] - p) <= 2 * std::sqrt(p * (1 - p) / kept));
  double total = 0.0;
  for (const auto& e : gibbs.models) total += e.prob;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(gibbs.inclusion_rb[0] == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("gibbs never leaves the constraint set") {
  auto layout = std::make_shared<const GroupLayout>(std::vector<int>{1, 1});
  ScoreMemo memo([](const ModelId& m) {
    MarginalScore s;
    s.log_ml = m.test(1) ? 3.0 : 0.0;  // pull towards the dependent group
    return s;
  });
  const ModelPriorSpec prior = Uniformish(2, -1, {{1, 0}});
  GibbsOptions opts;
  opts.n_scans = 100000;
  const auto s = gibbs_models(memo, prior, layout, opts);
  CHECK(s.constraint_violations == 0);
  for (const auto& e : s.models) CHECK_FALSE((e.model.test(1) && !e.model.test(0)));
  CHECK(s.inclusion[1] > 0.5);
}

TEST_CASE("gibbs is deterministic given the seed") {
  Rng rng(43);
  const Matrix X = RandomNormal(40, 5, rng);
  const Vector y = X.col(1) * 0.4 + RandomVector(40, rng);
  ModelScorer scorer(Singletons(X), y, ScorerConfig::Defaults(FamilySpec::GaussianKnownPhi(1.0)));
  auto run = [&](std::uint64_t seed) {
    ScoreMemo memo([&](const ModelId& m) { return scorer.score(m); });
    GibbsOptions opts;
    opts.n_scans = 500;
    opts.seed = seed;
    return gibbs_models(memo, Uniformish(5), scorer.design().layout_ptr(), opts);
  };
  const auto a = run(9), b = run(9), c = run(10);
  REQUIRE(a.models.size() == b.models.size());
  for (std::size_t k = 0; k < a.models.size(); ++k) {
    CHECK(a.models[k].model == b.models[k].model);
    CHECK(a.models[k].count == b.models[k].count);
  }
  CHECK(a.inclusion_rb == b.inclusion_rb);
  CHECK(a.inclusion_rb != c.inclusion_rb);
  CHECK(a.method_label() == "gibbs(n_scans=500,seed=9)");
}

TEST_CASE("importance weights with identical scorers") {
  auto layout = std::make_shared<const GroupLayout>(std::vector<int>{1, 1});
  ScoreMemo la([](const ModelId& m) {
    MarginalScore s;
    s.log_ml = 0.3 * m.size();
    return s;
  });
  ScoreMemo ala([](const ModelId& m) {
    MarginalScore s;
    s.log_ml = 0.3 * m.size();
    return s;
  });
  const std::vector<std::pair<ModelId, std::int64_t>> samples{
      {ModelId::FromBits(layout, "00"), 3}, {ModelId::FromBits(layout, "10"), 5},
      {ModelId::FromBits(layout, "11"), 2}};
  const ImportanceReport r = importance_reweight(samples, la, ala);
  CHECK(r.draws == 10);
  for (Eigen::Index k = 0; k < r.weights.size(); ++k) CHECK(r.weights[k] == doctest::Approx(1.0));
  CHECK(r.effective_sample_size == doctest::Approx(10.0));
  CHECK_FALSE(r.degenerate);
  CHECK(r.inclusion[0] == doctest::Approx(0.7));
}

TEST_CASE("importance weights flag a dominating draw") {
  auto layout = std::make_shared<const GroupLayout>(std::vector<int>{1});
  ScoreMemo la([](const ModelId& m) {
    MarginalScore s;
    s.log_ml = m.size() ? 50.0 : 0.0;
    return s;
  });
  ScoreMemo ala = Constant(0.0);
  const ImportanceReport r = importance_reweight(
      {{ModelId::FromBits(layout, "0"), 99}, {ModelId::FromBits(layout, "1"), 1}}, la, ala);
  CHECK(r.degenerate);
  CHECK(r.effective_sample_size > 0.0);
  CHECK(r.effective_sample_size < 1.1);
}

TEST_CASE("screening") {
  Rng rng(44);
  const int n = 200;
  const Matrix X = RandomNormal(n, 4, rng);
  const Vector y = X.col(0) + RandomVector(n, rng);
  ModelScorer scorer(Singletons(X), y, ScorerConfig::Defaults(FamilySpec::GaussianKnownPhi(1.0)));
  ScoreMemo memo([&](const ModelId& m) { return scorer.score(m); });
  const ModelPriorSpec prior = Uniformish(4);
  auto layout = scorer.design().layout_ptr();
  const auto full = enumerate_posterior(memo, prior, layout);

  const auto none = screen_then_refine(full, 0.0, memo, prior, layout);
  CHECK(none.models.size() == full.models.size());
  CHECK(none.inclusion.isApprox(full.inclusion, 1e-12));

  const auto all = screen_then_refine(full, 1.0, memo, prior, layout);
  REQUIRE(all.models.size() == 1);
  CHECK(all.models[0].model.size() == 0);
  CHECK(all.warnings.size() == 1);

  const auto half = screen_then_refine(full, 0.5, memo, prior, layout);
  CHECK(half.inclusion[0] > 0.99);
  CHECK(half.models.size() == 2);
}

TEST_CASE("scorer dispatch") {
  Rng rng(45);
  const int n = 60;
  const Matrix X = RandomNormal(n, 3, rng);
  const Vector y = X * Vector::Constant(3, 0.3) + RandomVector(n, rng);
  auto design = Singletons(X);
  const ModelId model = design->full_model();

  SUBCASE("gaussian known dispersion") {
    ModelScorer ala(design, y, ScorerConfig::Defaults(FamilySpec::GaussianKnownPhi(1.0)));
    const double exact = ala.with_method(Method::kExactGaussian).score(model).log_ml;
    CHECK(std::abs(ala.score(model).log_ml - exact) <= 1e-8);
    CHECK(std::abs(ala.with_method(Method::kLa).score(model).log_ml - exact) <= 1e-8);
    CHECK(std::abs(ala.with_method(Method::kAlaRefined, 2).score(model).log_ml - exact) <= 1e-8);
  }
  SUBCASE("gaussian unknown dispersion") {
    // Laplace error over (beta, phi) is O(1/n): ten times the data, a tenth the gap.
    auto gap = [&](int rows) {
      Rng r(46);
      const Matrix Xn = RandomNormal(rows, 3, r);
      const Vector yn = Xn * Vector::Constant(3, 0.3) + RandomVector(rows, r);
      auto dn = Singletons(Xn);
      ModelScorer s(dn, yn, ScorerConfig::Defaults(FamilySpec::GaussianUnknownPhi()));
      const ModelId full = dn->full_model();
      CHECK(std::isfinite(s.score(ModelId::FromBits(dn->layout_ptr(), "100")).log_ml));
      return std::abs(s.with_method(Method::kLa).score(full).log_ml -
                      s.with_method(Method::kExactGaussian).score(full).log_ml);
    };
    const double small = gap(60), large = gap(600);
    CHECK(small < 0.5);
    CHECK(large < small / 5);
  }
  SUBCASE("gmom gaussian") {
    ScorerConfig c = ScorerConfig::Defaults(FamilySpec::GaussianKnownPhi(1.0));
    c.prior.kind = PriorKind::kGmom;
    ModelScorer s(design, y, c);
    const double exact = s.with_method(Method::kExactGaussian).score(model).log_ml;
    CHECK(std::abs(s.score(model).log_ml - exact) < 0.5);
    CHECK(std::abs(s.with_method(Method::kLa).score(model).log_ml - s.score(model).log_ml) < 1e-8);
  }
  SUBCASE("one-dimensional quadrature") {
    Vector yb(n);
    for (int i = 0; i < n; ++i) yb[i] = Uniform(rng) < 1 / (1 + std::exp(-X(i, 0))) ? 1.0 : 0.0;
    ScorerConfig c = ScorerConfig::Defaults(FamilySpec::Logistic());
    ModelScorer s(design, yb, c);
    const ModelId one = ModelId::FromBits(design->layout_ptr(), "100");
    const double quad = s.with_method(Method::kQuadrature).score(one).log_ml;
    const double la = s.with_method(Method::kLa).score(one).log_ml;
    CHECK(std::abs(la - quad) <= 0.05 * std::abs(quad));
    CHECK_THROWS_AS(s.with_method(Method::kQuadrature).score(model), ConfigError);
    CHECK(s.rho_hat() > 0);
  }
  SUBCASE("wrong model size") {
    ModelScorer s(design, y, ScorerConfig::Defaults(FamilySpec::GaussianKnownPhi(1.0)));
    auto other = std::make_shared<const GroupLayout>(std::vector<int>{1, 1});
    CHECK_THROWS_AS(s.score(ModelId(other)), InvalidModel);
  }
}
