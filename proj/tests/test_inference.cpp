#include <gtest/gtest.h>

#include <random>

#include "sdpm/inference.hpp"
#include "support.hpp"

using namespace sdpm;
using testing_support::toy_chain;

namespace {

DatasetSchema continuous_schema(int p) {
  std::vector<VariableMeta> vars;
  for (int j = 0; j < p; ++j) vars.push_back(VariableMeta::continuous("x" + std::to_string(j + 1)));
  return make_schema(vars);
}

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

std::vector<double> as_vector(const Vec& v) { return {v.data(), v.data() + v.size()}; }

// NaN when no pair is comparable
double brute(const Vec& risk, const Vec& time, const std::vector<std::uint8_t>& ev) {
  return testing_support::concordance_bruteforce(as_vector(risk), as_vector(time), {ev.begin(), ev.end()});
}

}  // namespace

// ---------------------------------------------------------------- concordance

TEST(Concordance, PerfectAndReversedRankings) {
  const Vec t = vec({1, 2, 3});
  const std::vector<std::uint8_t> all(3, 1);
  EXPECT_DOUBLE_EQ(concordance(vec({3, 2, 1}), t, all), 1.0);
  EXPECT_DOUBLE_EQ(concordance(vec({1, 2, 3}), t, all), 0.0);
}

TEST(Concordance, CensoredExampleMatchesEnumeration) {
  const Vec t = vec({1, 2, 3}), r = vec({3, 1, 2});
  const std::vector<std::uint8_t> e{1, 0, 1};
  // comparable: (1,2) and (1,3); subject 1 has the higher risk in both
  EXPECT_DOUBLE_EQ(concordance(r, t, e), 1.0);
  EXPECT_DOUBLE_EQ(concordance(r, t, e), brute(r, t, e));
}

TEST(Concordance, ErrorsAndTies) {
  EXPECT_THROW(concordance(vec({1, 2}), vec({1, 2}), {0, 0}), InvalidArgument);
  EXPECT_THROW(concordance(vec({1, 2}), vec({1, 2, 3}), {1, 1}), InvalidArgument);
  EXPECT_THROW(concordance(vec({1, 2}), vec({0, 2}), {1, 1}), InvalidArgument);
  EXPECT_DOUBLE_EQ(concordance(vec({5, 5}), vec({1, 2}), {1, 1}), 0.5);
  // equal times are not comparable
  EXPECT_THROW(concordance(vec({1, 2}), vec({2, 2}), {1, 1}), InvalidArgument);
}

TEST(Concordance, RandomInstancesMatchBruteForceExactly) {
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> size(2, 60), grid(1, 12);
  std::bernoulli_distribution coin(0.6);
  int checked = 0;
  for (int rep = 0; checked < 200; ++rep) {
    const int n = size(gen);
    Vec risk(n), time(n);
    std::vector<std::uint8_t> ev(n);
    for (int i = 0; i < n; ++i) {
      risk(i) = grid(gen);  // coarse grids force ties in both risk and time
      time(i) = grid(gen);
      ev[i] = coin(gen);
    }
    const double oracle = brute(risk, time, ev);
    if (std::isnan(oracle)) {
      EXPECT_THROW(concordance(risk, time, ev), InvalidArgument);
      continue;
    }
    ASSERT_EQ(concordance(risk, time, ev), oracle) << "instance " << rep;
    // rank statistic: positive rescaling of the scores changes nothing
    ASSERT_EQ(concordance(risk * 3.7, time, ev), oracle);
    ++checked;
  }
}

// ---------------------------------------------------------------- risk R^2 and selection

TEST(RiskR2, IdentityAffineAndOrthogonal) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  const int n = 10000;
  Vec truth(n), noise(n);
  for (int i = 0; i < n; ++i) {
    truth(i) = nd(gen);
    noise(i) = nd(gen);
  }
  EXPECT_NEAR(risk_r2(truth, truth), 1.0, 1e-12);
  EXPECT_NEAR(risk_r2((2.5 * truth).array() - 4.0, truth), 1.0, 1e-12);
  const Vec tc = truth.array() - truth.mean();
  Vec orth = noise.array() - noise.mean();
  orth -= tc * (orth.dot(tc) / tc.squaredNorm());
  EXPECT_NEAR(risk_r2(orth, truth), 0.0, 0.01);
  EXPECT_NEAR(risk_r2(noise, truth), 0.0, 0.01);
  EXPECT_THROW(risk_r2(truth, Vec::Constant(n, 2.0)), InvalidArgument);
  EXPECT_THROW(risk_r2(vec({1}), vec({1})), InvalidArgument);
}

TEST(Selection, ProportionOfVariablesCorrect) {
  const auto s = continuous_schema(4);
  auto ch = toy_chain(s, Vec::Zero(4), Mat::Identity(4, 4), vec({0, 1, 0, 0, 0}), 10);
  const std::set<std::string> truth{"x1", "x2"};
  const auto m = selection_metrics(ch, &truth);
  EXPECT_DOUBLE_EQ(m.pvc, 0.75);
  EXPECT_DOUBLE_EQ(m.model_size, 1.0);
  ASSERT_EQ(m.inclusion.size(), 4u);
  EXPECT_DOUBLE_EQ(m.inclusion[0], 1.0);
  EXPECT_DOUBLE_EQ(m.inclusion[1], 0.0);

  for (auto& d : ch.draws) d.delta = {1, 1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(selection_metrics(ch, &truth).pvc, 1.0);
  EXPECT_DOUBLE_EQ(selection_metrics(ch, &truth).model_size, 2.0);
  EXPECT_TRUE(std::isnan(selection_metrics(ch).pvc));

  // half the draws include x3: probability exactly 0.5 is not selected
  for (std::size_t d = 0; d < ch.draws.size(); d += 2) ch.draws[d].delta[3] = 1;
  const auto half = selection_metrics(ch, &truth);
  EXPECT_DOUBLE_EQ(half.inclusion[2], 0.5);
  EXPECT_DOUBLE_EQ(half.pvc, 1.0);
  EXPECT_DOUBLE_EQ(half.model_size, 2.5);
}

// ---------------------------------------------------------------- prediction

TEST(Prediction, FullyObservedRowIsDeterministicPerDraw) {
  const auto s = continuous_schema(2);
  auto ch = toy_chain(s, Vec::Zero(2), Mat::Identity(2, 2), vec({0.1, 0.5, -1.0}), 20);
  for (std::size_t d = 0; d < ch.draws.size(); ++d) ch.draws[d].beta(1) = 0.05 * d;
  const Vec x = vec({0.7, -0.2});
  const auto dist = Predictor(ch).predict_one(x, 10, 5, 3);
  ASSERT_EQ(dist.log_risk.size(), 60);
  for (int d = 0; d < 20; ++d)
    for (int r = 0; r < 3; ++r)
      EXPECT_DOUBLE_EQ(dist.log_risk(d * 3 + r), 0.1 + 0.05 * d * 0.7 + 0.2);

  // point prediction does not depend on the order of the draws
  auto rev = ch;
  std::reverse(rev.draws.begin(), rev.draws.end());
  EXPECT_NEAR(predict_risk(x, rev, 10, 9).summary().mean, predict_risk(x, ch, 10, 1).summary().mean, 1e-12);
}

TEST(Prediction, NullModelIsDegenerateAtIntercept) {
  const auto s = continuous_schema(2);
  auto ch = toy_chain(s, Vec::Zero(2), Mat::Identity(2, 2), vec({0, 0, 0}), 30);
  for (std::size_t d = 0; d < ch.draws.size(); ++d) ch.draws[d].beta(0) = -1.0 + 0.01 * d;
  const auto dist = predict_risk(vec({kMissing, kMissing}), ch, 5, 2);
  for (int d = 0; d < 30; ++d) EXPECT_DOUBLE_EQ(dist.log_risk(d), -1.0 + 0.01 * d);
}

TEST(Prediction, MissingPredictorAveragesOverTheMixture) {
  // x1 ~ 0.3 N(-1, 1) + 0.7 N(2, 0.25); E[x1] = 1.1
  const auto s = continuous_schema(1);
  auto ch = toy_chain(s, vec({-1.0}), Mat::Identity(1, 1), vec({0.2, 0.8}), 200);
  for (auto& d : ch.draws) {
    d.pi = vec({0.3, 0.7});
    d.means.push_back(vec({2.0}));
    d.precisions.push_back(Mat::Constant(1, 1, 4.0));
  }
  const auto dist = Predictor(ch).predict_one(vec({kMissing}), 10, 7, 50, true);
  const double expected = 0.2 + 0.8 * 1.1;
  const auto v = as_vector(dist.log_risk);
  EXPECT_NEAR(testing_support::mean(v), expected, 3 * testing_support::mcse_iid(v));
  const double var_x = 0.3 * (1.0 + 1.0) + 0.7 * (0.25 + 4.0) - 1.1 * 1.1;
  EXPECT_NEAR(testing_support::var(v), 0.64 * var_x, 0.05 * 0.64 * var_x);
}

TEST(Prediction, PrepareRowScalesAndFillsIndicators) {
  SurvivalDataset ds;
  ds.schema = make_schema({VariableMeta::categorical("b", 2), VariableMeta::continuous("c")});
  ds.x.resize(4, 2);
  ds.x << 0, 1, 1, 3, 0, kMissing, 1, 5;
  ds.y = Vec::Ones(4);
  ds.event.assign(4, 1);
  const auto prepared = prepare_dataset(ds, ModelVariant::sdpm_mnar);
  const auto& s = prepared.schema;
  const Vec x = prepare_row({{"b", 1}, {"c", 3}}, s);
  const int jc = s.index_of("c"), jb = s.index_of("b"), ji = s.index_of("c.missing");
  ASSERT_GE(ji, 0);
  EXPECT_NEAR(x(jc), 0.0, 1e-12);
  EXPECT_EQ(x(jb), 1.0);
  EXPECT_EQ(x(ji), 0.0);
  const Vec y = prepare_row({{"b", 0}}, s);
  EXPECT_TRUE(is_missing(y(jc)));
  EXPECT_EQ(y(ji), 1.0);
  EXPECT_THROW(prepare_row({{"nope", 1}}, s), InvalidArgument);
  EXPECT_THROW(prepare_row({{"c.missing", 1}}, s), InvalidArgument);
  EXPECT_THROW(prepare_row({{"b", 2}}, s), InvalidArgument);
}

// ---------------------------------------------------------------- main-effect index

TEST(MainEffect, SingleDriverAndAdditiveSplit) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  const int n = 4000;
  Vec x1(n), x2(n);
  for (int i = 0; i < n; ++i) {
    x1(i) = nd(gen);
    x2(i) = nd(gen);
  }
  const Vec only1 = (0.5 * x1).array().exp();
  EXPECT_NEAR(variance_ratio_smoothed(x1, only1, false), 1.0, 0.05);
  EXPECT_NEAR(variance_ratio_smoothed(x2, only1, false), 0.0, 0.05);
  const Vec additive = x1 + x2;
  EXPECT_NEAR(variance_ratio_smoothed(x1, additive, false), 0.5, 0.05);
  EXPECT_NEAR(variance_ratio_smoothed(x2, additive, false), 0.5, 0.05);
  EXPECT_EQ(variance_ratio_smoothed(x1, Vec::Constant(n, 3.0), false), 0.0);
}

TEST(MainEffect, CategoricalUsesGroupMeans) {
  const Vec x = vec({0, 0, 1, 1, 2, 2});
  const Vec lam = vec({1, 1, 2, 2, 4, 4});
  EXPECT_NEAR(variance_ratio_smoothed(x, lam, true), 1.0, 1e-12);
  const Vec lam2 = vec({1, 3, 1, 3, 1, 3});
  EXPECT_NEAR(variance_ratio_smoothed(x, lam2, true), 0.0, 1e-12);
}

TEST(MainEffect, IndicesFromChainRows) {
  const auto s = continuous_schema(2);
  const auto ch = toy_chain(s, Vec::Zero(2), Mat::Identity(2, 2), vec({0.0, 0.6, 0.0}), 5);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  std::vector<RowMat> rows(5, RowMat(2000, 2));
  for (auto& r : rows)
    for (int i = 0; i < 2000; ++i) r.row(i) << nd(gen), nd(gen);
  const auto me = main_effect_indices(ch, rows);
  EXPECT_NEAR(me[0].mean, 1.0, 0.05);
  EXPECT_NEAR(me[1].mean, 0.0, 0.05);
  EXPECT_LE(me[0].lo, me[0].mean);
  EXPECT_GE(me[0].hi, me[0].mean);

  SurvivalDataset few;
  few.schema = s;
  few.x = Mat::Constant(30, 2, kMissing);
  few.x.col(1).setZero();
  few.y = Vec::Ones(30);
  few.event.assign(30, 1);
  EXPECT_THROW(main_effect_index(ch, few, 0), InvalidArgument);
}

// ---------------------------------------------------------------- influence index

TEST(Influence, SingleMissingPredictorCarriesAllVariance) {
  const auto s = continuous_schema(2);
  const auto ch = toy_chain(s, Vec::Zero(2), Mat::Identity(2, 2), vec({0.0, 0.5, 0.8}), 100);
  const double i1 = influence_index(vec({kMissing, 0.3}), ch, 0, 1);
  EXPECT_NEAR(i1, 1.0, 0.05);
  EXPECT_LE(i1, 1.0);
  EXPECT_THROW(influence_index(vec({kMissing, 0.3}), ch, 1, 1), InvalidArgument);
}

TEST(Influence, NullPredictorHasNoInfluence) {
  const auto s = continuous_schema(2);
  const auto ch = toy_chain(s, Vec::Zero(2), Mat::Identity(2, 2), vec({0.0, 0.0, 0.8}), 100);
  const Vec x = vec({kMissing, kMissing});
  EXPECT_NEAR(influence_index(x, ch, 0, 3), 0.0, 0.05);
  EXPECT_NEAR(influence_index(x, ch, 1, 3), 1.0, 0.05);
  // a constant model is defined to have zero influence
  const auto flat = toy_chain(s, Vec::Zero(2), Mat::Identity(2, 2), vec({0.4, 0.0, 0.0}), 20);
  EXPECT_EQ(influence_index(x, flat, 0, 3), 0.0);
}

TEST(Influence, SymmetricPairSplitsVariance) {
  // lambda = exp(a x1 + a x2), independent standard normals:
  // Var E[lambda | x1] / Var lambda = 1 / (exp(a^2) + 1)
  const double a = 0.5;
  const double oracle = 1.0 / (std::exp(a * a) + 1.0);
  const auto s = continuous_schema(2);
  const auto ch = toy_chain(s, Vec::Zero(2), Mat::Identity(2, 2), vec({0.0, a, a}), 100);
  InfluenceOptions opt;
  opt.min_samples = 20000;
  const Vec x = vec({kMissing, kMissing});
  EXPECT_NEAR(influence_index(x, ch, 0, 5, opt), oracle, 0.05);
  EXPECT_NEAR(influence_index(x, ch, 1, 5, opt), oracle, 0.05);
}

// ---------------------------------------------------------------- greedy acquisition

TEST(Greedy, StopsImmediatelyWhenIntervalExcludesThreshold) {
  const auto s = continuous_schema(2);
  const auto ch = toy_chain(s, Vec::Zero(2), Mat::Identity(2, 2), vec({0.0, 0.5, 0.2}), 50);
  EXPECT_TRUE(greedy_acquire(vec({kMissing, kMissing}), ch, -6.0, 1).empty());
  EXPECT_TRUE(greedy_acquire(vec({kMissing, kMissing}), ch, 6.0, 1).empty());
}

TEST(Greedy, SingleMissingPredictorTakesAtMostOneStep) {
  const auto s = continuous_schema(2);
  const auto ch = toy_chain(s, Vec::Zero(2), Mat::Identity(2, 2), vec({0.0, 1.0, 0.2}), 50);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto tr = greedy_acquire(vec({kMissing, 0.5}), ch, 0.1, seed);
    ASSERT_LE(tr.size(), 1u);
    if (!tr.empty()) {
      EXPECT_EQ(tr[0].name, "x1");
      EXPECT_LT(tr[0].after.hi - tr[0].after.lo, 1e-12);  // nothing stochastic remains
    }
  }
}

TEST(Greedy, PicksLargestInfluenceAndNarrowsOnAverage) {
  const auto s = continuous_schema(3);
  const auto ch = toy_chain(s, Vec::Zero(3), Mat::Identity(3, 3), vec({0.0, 1.0, 0.4, 0.2}), 50);
  const Vec x = vec({kMissing, kMissing, kMissing});
  double before = 0.0, after = 0.0;
  int steps = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto tr = greedy_acquire(x, ch, 0.0, seed);
    ASSERT_FALSE(tr.empty());
    ASSERT_LE(tr.size(), 3u);
    EXPECT_EQ(tr[0].name, "x1");
    std::set<int> seen;
    for (const auto& a : tr) {
      EXPECT_TRUE(seen.insert(a.predictor).second);
      EXPECT_GE(a.influence, 0.0);
      EXPECT_LE(a.influence, 1.0);
      before += a.before.hi - a.before.lo;
      after += a.after.hi - a.after.lo;
      ++steps;
    }
    for (std::size_t k = 1; k < tr.size(); ++k)
      EXPECT_DOUBLE_EQ(tr[k].before.hi - tr[k].before.lo, tr[k - 1].after.hi - tr[k - 1].after.lo);
  }
  EXPECT_LT(after / steps, before / steps);
}
