#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "parlab/learners.hpp"
#include "parlab/metrics.hpp"
#include "parlab/simulator.hpp"

using namespace parlab;

namespace {

Dataset make_1d(std::initializer_list<std::pair<double, bool>> rows) {
  Dataset d(1);
  for (const auto& [x, y] : rows) d.add(std::vector<double>{x}, y);
  return d;
}

// y depends on x0 strongly, on x1 weakly, not at all on x2.
Dataset synthetic(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d(3);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x{uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2)};
    const double p = sigmoid(2.5 * x[0] + 0.4 * x[1] - 0.5);
    d.add(x, bernoulli(rng, p));
  }
  return d;
}

double error_rate(const BoostModel& m, const Dataset& d) {
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const bool pred = boost_margin(m, d.row(i)) > 0;
    wrong += pred != (d.y[i] != 0);
  }
  return static_cast<double>(wrong) / static_cast<double>(d.rows());
}

double training_auc(const Model& m, const Dataset& d) {
  std::vector<double> s;
  for (std::size_t i = 0; i < d.rows(); ++i) s.push_back(predict_proba(m, d.row(i)));
  return auc(s, d.y).value;
}

}  // namespace

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

TEST(Logistic, AntisymmetricPairGivesPositiveWeightZeroIntercept) {
  HyperParams hp;
  hp.l2_lambda = 1.0;
  const auto m = fit_logistic(make_1d({{-1, false}, {1, true}}), hp);
  ASSERT_EQ(m.weights.size(), 1u);
  EXPECT_GT(m.weights[0], 0.0);
  EXPECT_NEAR(m.intercept, 0.0, 1e-9);
}

TEST(Logistic, SingleClassRejected) {
  EXPECT_THROW(fit_logistic(make_1d({{0, true}, {1, true}}), HyperParams{}), Error);
  try {
    fit_logistic(make_1d({{0, false}, {1, false}}), HyperParams{});
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate labels"), std::string::npos);
  }
}

TEST(Logistic, GradientMatchesCentralDifferences) {
  const auto data = synthetic(200, 3);
  HyperParams hp;
  hp.l2_lambda = 0.3;
  hp.positive_weight = 2.0;
  LinearModel scratch;
  const auto obj = make_logistic_objective(data, hp, scratch);
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(obj.parameters()));
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = uniform(rng, -1.5, 1.5);
    Eigen::VectorXd grad;
    obj.value_and_gradient(theta, grad);
    const double h = 1e-5;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      Eigen::VectorXd up = theta, dn = theta;
      up[j] += h;
      dn[j] -= h;
      const double fd = (obj.value(up) - obj.value(dn)) / (2 * h);
      const double scale = std::max(std::abs(fd), std::abs(grad[j]));
      EXPECT_LT(std::abs(fd - grad[j]), 1e-6 * std::max(scale, 1.0)) << "param " << j;
    }
  }
}

TEST(Logistic, LossNonIncreasing) {
  const auto data = synthetic(300, 5);
  HyperParams hp;
  hp.learning_rate = 5.0;  // large on purpose so halving kicks in
  std::vector<double> history;
  fit_logistic(data, hp, &history);
  ASSERT_GT(history.size(), 2u);
  for (std::size_t i = 1; i < history.size(); ++i) EXPECT_LE(history[i], history[i - 1]);
}

TEST(Logistic, Deterministic) {
  const auto data = synthetic(300, 6);
  EXPECT_EQ(fit_logistic(data, HyperParams{}), fit_logistic(data, HyperParams{}));
}

TEST(Logistic, ConstantColumnGetsZeroWeight) {
  Dataset d(2);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const double x = uniform(rng, -1, 1);
    d.add(std::vector<double>{x, 7.0}, bernoulli(rng, sigmoid(3 * x)));
  }
  const auto m = fit_logistic(d, HyperParams{});
  EXPECT_EQ(m.weights[1], 0.0);
  EXPECT_EQ(m.sds[1], 1.0);
}

TEST(Logistic, AffineRescaledInputsGiveSamePredictions) {
  const auto data = synthetic(300, 8);
  Dataset moved(3);
  const double a[3] = {3.0, 0.01, 250.0}, b[3] = {-4.0, 1e3, 2.0};
  auto transform = [&](std::span<const double> x) {
    std::vector<double> out(3);
    for (int j = 0; j < 3; ++j) out[static_cast<std::size_t>(j)] = a[j] * x[static_cast<std::size_t>(j)] + b[j];
    return out;
  };
  for (std::size_t i = 0; i < data.rows(); ++i) moved.add(transform(data.row(i)), data.y[i] != 0);
  const auto m1 = fit_logistic(data, HyperParams{});
  const auto m2 = fit_logistic(moved, HyperParams{});
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x{uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2)};
    EXPECT_NEAR(predict_proba_linear(m1, x), predict_proba_linear(m2, transform(x)), 1e-6);
  }
}

TEST(Logistic, ZeroModelPredictsHalf) {
  LinearModel m{{0.0, 0.0}, 0.0, {0.0, 0.0}, {1.0, 1.0}};
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x{uniform(rng, -100, 100), uniform(rng, -100, 100)};
    EXPECT_EQ(predict_proba_linear(m, x), 0.5);
  }
}

TEST(Logistic, MonotoneInPositiveWeightFeature) {
  LinearModel m{{1.3, -0.7}, 0.2, {0.5, 1.0}, {2.0, 0.5}};
  double prev = -1.0;
  for (int k = -50; k <= 50; ++k) {
    const double p = predict_proba_linear(m, std::vector<double>{k * 0.2, 0.3});
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(Logistic, LogitIsAffineInStandardizedInput) {
  const LinearModel m{{0.8, -1.1, 0.05}, -0.4, {1.0, -2.0, 0.5}, {0.5, 3.0, 1.5}};
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> x{uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3)};
    const double p = predict_proba_linear(m, x);
    const double logit = std::log(p / (1 - p));
    double expected = m.intercept;
    for (std::size_t j = 0; j < 3; ++j) expected += m.weights[j] * (x[j] - m.means[j]) / m.sds[j];
    EXPECT_NEAR(logit, expected, 1e-9);
  }
}

TEST(Logistic, DimensionMismatchThrows) {
  LinearModel m{{1.0}, 0.0, {0.0}, {1.0}};
  EXPECT_THROW(predict_proba_linear(m, std::vector<double>{1.0, 2.0}), Error);
}

TEST(Logistic, RanksDetectReclamationCountOnSimulatedLog) {
  SimConfig cfg;
  cfg.population = 1500;
  cfg.horizon_months = 12;
  cfg.seed = 21;
  const auto pop = generate_population(cfg, derive_seed(cfg.seed, "population"));
  const auto truth = calibrate_intercept(GroundTruthModel{}, pop, cfg, 0.08);
  const auto sim = simulate(cfg, truth, pop, no_intervention());
  const auto schema = build_schema(sim.log, LabelMode::eventual);
  const auto data = Dataset::from_vectors(encode_log(sim.log, schema));
  HyperParams hp;
  hp.l2_lambda = 0.01;
  const auto m = fit_logistic(data, hp);
  const long detect = schema.activity_index(cfg.activities.detect);
  ASSERT_GE(detect, 0);
  const auto ranking = feature_importance(m);
  std::size_t rank = 0;
  while (ranking[rank].feature != static_cast<std::size_t>(detect)) ++rank;
  EXPECT_LT(rank, 3u) << "detect count ranked " << rank;
  EXPECT_GT(m.weights[static_cast<std::size_t>(detect)], 0.0);
}

// ---------------------------------------------------------------------------
// AdaBoost
// ---------------------------------------------------------------------------

TEST(AdaBoost, SeparableSetOneRound) {
  const auto d = make_1d({{0, false}, {1, false}, {2, true}, {3, true}});
  HyperParams hp;
  hp.num_rounds = 50;
  const auto m = fit_adaboost(d, hp);
  ASSERT_EQ(m.rounds.size(), 1u);
  EXPECT_DOUBLE_EQ(m.rounds[0].stump.threshold, 1.5);
  EXPECT_EQ(m.rounds[0].stump.polarity, 1);
  EXPECT_EQ(error_rate(m, d), 0.0);
  EXPECT_DOUBLE_EQ(m.rounds[0].alpha, stump_alpha(0.0));
  EXPECT_TRUE(std::isfinite(m.rounds[0].alpha));
}

TEST(AdaBoost, RoundsBelowHalfErrorAndWeightsNormalized) {
  const auto d = synthetic(200, 11);
  HyperParams hp;
  hp.num_rounds = 40;
  BoostTrace trace;
  const auto m = fit_adaboost(d, hp, &trace);
  ASSERT_EQ(trace.weights.size(), m.rounds.size());
  for (const auto& r : m.rounds) {
    EXPECT_LT(r.weighted_error, 0.5);
    EXPECT_GE(r.alpha, 0.0);
  }
  for (const auto& w : trace.weights) EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-9);
}

TEST(AdaBoost, ReplayedWeightedErrorsMatch) {
  // Recompute each round's weighted error from the replayed weights.
  const auto d = synthetic(150, 12);
  HyperParams hp;
  hp.num_rounds = 15;
  BoostTrace trace;
  const auto m = fit_adaboost(d, hp, &trace);
  std::vector<double> w(d.rows(), 1.0 / static_cast<double>(d.rows()));
  for (std::size_t t = 0; t < m.rounds.size(); ++t) {
    double err = 0.0;
    for (std::size_t i = 0; i < d.rows(); ++i) {
      const int yi = d.y[i] ? 1 : -1;
      if (m.rounds[t].stump.predict(d.row(i)) != yi) err += w[i];
    }
    EXPECT_NEAR(err, m.rounds[t].weighted_error, 1e-9);
    w = trace.weights[t];
  }
}

TEST(AdaBoost, TrainingErrorNonIncreasingOnSeparable1D) {
  const auto d = make_1d({{0, false}, {1, false}, {2, false}, {3, true}, {4, true}, {5, true}, {6, true}});
  HyperParams hp;
  hp.num_rounds = 20;
  const auto m = fit_adaboost(d, hp);
  double prev = 1.0;
  for (std::size_t t = 1; t <= m.rounds.size(); ++t) {
    const double e = error_rate(m.truncated(t), d);
    EXPECT_LE(e, prev);
    prev = e;
  }
  EXPECT_EQ(prev, 0.0);
}

TEST(AdaBoost, ExponentialLossBoundNonIncreasing) {
  // Separable in 2-D by x0 + x1 > 0, which no single axis stump captures.
  // The 0/1 error may wobble; the exponential loss bounding it may not.
  Rng rng(13);
  Dataset d(2);
  for (int i = 0; i < 60; ++i) {
    double a = uniform(rng, -1, 1), b = uniform(rng, -1, 1);
    if (std::abs(a + b) < 0.2) continue;
    d.add(std::vector<double>{a, b}, a + b > 0);
  }
  HyperParams hp;
  hp.num_rounds = 60;
  const auto m = fit_adaboost(d, hp);
  double prev = 1.0;
  for (std::size_t t = 1; t <= m.rounds.size(); ++t) {
    const auto mt = m.truncated(t);
    double loss = 0.0;
    for (std::size_t i = 0; i < d.rows(); ++i) {
      loss += std::exp(-(d.y[i] ? 1.0 : -1.0) * boost_margin(mt, d.row(i)));
    }
    loss /= static_cast<double>(d.rows());
    EXPECT_LE(loss, prev + 1e-12);
    EXPECT_LE(error_rate(mt, d), loss + 1e-12);
    prev = loss;
  }
  EXPECT_LT(error_rate(m, d), error_rate(m.truncated(1), d));
}

TEST(AdaBoost, InterleavedBeatsBestSingleStump) {
  const auto d = make_1d({{0, false}, {1, true}, {2, true}, {3, false}, {4, false}, {5, true}, {6, true}, {7, false}});
  // Exhaustive single-stump oracle.
  double best = 1.0;
  for (double thr = -0.5; thr <= 7.5; thr += 1.0) {
    for (int pol : {1, -1}) {
      std::size_t wrong = 0;
      for (std::size_t i = 0; i < d.rows(); ++i) {
        const int h = d.at(i, 0) > thr ? pol : -pol;
        wrong += (h > 0) != (d.y[i] != 0);
      }
      best = std::min(best, static_cast<double>(wrong) / 8.0);
    }
  }
  HyperParams hp;
  hp.num_rounds = 100;
  const auto m = fit_adaboost(d, hp);
  EXPECT_GT(m.rounds.size(), 1u);
  EXPECT_LT(error_rate(m, d), best);
}

TEST(AdaBoost, EmptyModelPredictsHalf) {
  BoostModel m{2, {}};
  EXPECT_EQ(predict_proba_boost(m, std::vector<double>{1.0, -4.0}), 0.5);
}

TEST(AdaBoost, ProbabilitySignMatchesMargin) {
  const auto d = synthetic(200, 14);
  HyperParams hp;
  hp.num_rounds = 25;
  const auto m = fit_adaboost(d, hp);
  Rng rng(15);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x{uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2)};
    const double f = boost_margin(m, x);
    const double p = predict_proba_boost(m, x);
    if (f == 0) {
      EXPECT_EQ(p, 0.5);
    } else {
      EXPECT_EQ(p > 0.5, f > 0);
    }
    EXPECT_NEAR(p, 1.0 / (1.0 + std::exp(-2 * f)), 1e-12);
  }
}

TEST(AdaBoost, ProbabilityIncreasesWithMargin) {
  BoostModel m{1, {{{0, 0.0, 1}, 0.0, 0.1}}};
  double prev = -1.0;
  for (int k = 0; k <= 40; ++k) {
    m.rounds[0].alpha = k * 0.1;
    const double p = predict_proba_boost(m, std::vector<double>{1.0});
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(AdaBoost, SingleClassAndBadRoundsRejected) {
  EXPECT_THROW(fit_adaboost(make_1d({{0, false}, {1, false}}), HyperParams{}), Error);
  HyperParams hp;
  hp.num_rounds = 0;
  EXPECT_THROW(fit_adaboost(make_1d({{0, false}, {1, true}}), hp), Error);
}

TEST(AdaBoost, TruncationEqualsShorterFit) {
  const auto d = synthetic(120, 16);
  HyperParams a, b;
  a.num_rounds = 30;
  b.num_rounds = 12;
  EXPECT_EQ(fit_adaboost(d, a).truncated(12), fit_adaboost(d, b));
}

// ---------------------------------------------------------------------------
// Importance and serialization
// ---------------------------------------------------------------------------

TEST(Importance, LogisticByAbsoluteWeight) {
  const Model m = LinearModel{{0.5, -2.0}, 0.0, {0, 0}, {1, 1}};
  const auto r = feature_importance(m);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].feature, 1u);
  EXPECT_EQ(r[1].feature, 0u);
  EXPECT_DOUBLE_EQ(r[0].importance, 2.0);
}

TEST(Importance, TiesByIndex) {
  const Model m = LinearModel{{1.0, -1.0, 1.0}, 0.0, {0, 0, 0}, {1, 1, 1}};
  const auto r = feature_importance(m);
  EXPECT_EQ(r[0].feature, 0u);
  EXPECT_EQ(r[1].feature, 1u);
  EXPECT_EQ(r[2].feature, 2u);
}

TEST(Importance, BoostSingleFeatureHoldsAllMass) {
  BoostModel b{5, {}};
  b.rounds.push_back({{3, 0.5, 1}, 0.7, 0.2});
  b.rounds.push_back({{3, 1.5, -1}, 0.4, 0.3});
  const auto r = feature_importance(Model{b});
  EXPECT_EQ(r[0].feature, 3u);
  EXPECT_DOUBLE_EQ(r[0].importance, 1.1);
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_EQ(r[i].importance, 0.0);
}

TEST(Importance, AgreesWithPermutationOracle) {
  const auto d = synthetic(600, 18);
  for (LearnerKind kind : {LearnerKind::logistic, LearnerKind::adaboost}) {
    HyperParams hp;
    hp.num_rounds = 40;
    const auto m = fit_model(kind, d, hp);
    const auto ranking = feature_importance(m);
    const double base = training_auc(m, d);
    auto permuted_drop = [&](std::size_t feature) {
      Rng rng(99);
      std::vector<std::size_t> perm(d.rows());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      shuffle(perm.begin(), perm.end(), rng);
      Dataset p = d;
      for (std::size_t i = 0; i < d.rows(); ++i) p.x[i * d.cols + feature] = d.at(perm[i], feature);
      return base - training_auc(m, p);
    };
    EXPECT_EQ(ranking.front().feature, 0u);
    EXPECT_GT(permuted_drop(ranking.front().feature), permuted_drop(ranking.back().feature)) << to_string(kind);
  }
}

TEST(ModelJson, RoundTripIsExact) {
  const auto d = synthetic(150, 19);
  HyperParams hp;
  hp.num_rounds = 10;
  for (LearnerKind kind : {LearnerKind::logistic, LearnerKind::adaboost}) {
    const auto m = fit_model(kind, d, hp);
    const auto text = model_to_json(m).dump();
    const auto back = model_from_json(nlohmann::json::parse(text));
    EXPECT_TRUE(m == back);
    EXPECT_EQ(model_to_json(back).dump(), text);
  }
}
