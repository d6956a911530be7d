#include <gtest/gtest.h>

#include <filesystem>
#include <optional>
#include <thread>

#include "fixtures.hpp"
#include "parlab/predictor.hpp"
#include "parlab/simulator.hpp"

using namespace parlab;

namespace {

EventLog simulated_log(std::size_t n, int months, std::uint64_t seed) {
  SimConfig cfg;
  cfg.population = n;
  cfg.horizon_months = months;
  cfg.seed = seed;
  const auto pop = generate_population(cfg, derive_seed(seed, "population"));
  const auto truth = calibrate_intercept(GroundTruthModel{}, pop, cfg, 0.06);
  return simulate(cfg, truth, pop, no_intervention()).log;
}

TrainConfig quick_config(LearnerKind kind) {
  TrainConfig c;
  c.training.learner = kind;
  if (kind == LearnerKind::logistic) {
    c.training.grid = {HyperParams{}};
  } else {
    HyperParams hp;
    hp.num_rounds = 25;
    c.training.grid = {hp};
  }
  c.training.seed = 5;
  c.training.min_bucket_size = 50;
  return c;
}

int calendar_months(const EventLog& log) {
  std::optional<YearMonth> lo, hi;
  for (const auto& t : log.traces()) {
    for (const auto& e : t.events) {
      const auto ym = e.date.year_month();
      if (!lo || ym < *lo) lo = ym;
      if (!hi || ym > *hi) hi = ym;
    }
  }
  return *hi - *lo + 1;
}

// Income months plus the detection tail: four simulated months cover six
// calendar months.
const EventLog& six_month_log() {
  static const EventLog log = simulated_log(2500, 4, 61);
  return log;
}

const TrainResult& logistic_bundle() {
  static const TrainResult r = train_bundle(six_month_log(), quick_config(LearnerKind::logistic));
  return r;
}

// A trace with one form cycle per month over `months` months.
Trace monthly_trace(const std::string& id, int months) {
  Trace t;
  t.case_id = id;
  t.attributes.age = 40;
  t.attributes.max_benefit_months = 12;
  for (int m = 0; m < months; ++m) {
    const YearMonth ym = YearMonth::of(2017, 1) + m;
    t.events.push_back({id, Date{ym.year(), ym.month(), 3}, "Send Income Form"});
    t.events.push_back({id, Date{ym.year(), ym.month(), 25}, "Initialize the Income Form"});
  }
  return t;
}

}  // namespace

TEST(TrainBundle, BucketKeysWithinHorizon) {
  ASSERT_EQ(calendar_months(six_month_log()), 6);
  const auto& r = logistic_bundle();
  ASSERT_FALSE(r.bundle.models.empty());
  for (const auto& [k, m] : r.bundle.models) {
    EXPECT_GE(k, 1);
    EXPECT_LE(k, 6);
  }
  EXPECT_EQ(r.bundle.threshold, 0.8);
  EXPECT_EQ(r.bundle.training.log_hash, log_fingerprint(six_month_log()));
  EXPECT_EQ(r.bucket_cv.size(), r.bundle.models.size());
}

TEST(TrainBundle, RetrainIsByteIdentical) {
  for (LearnerKind kind : {LearnerKind::logistic, LearnerKind::adaboost}) {
    auto cfg = quick_config(kind);
    const auto a = dump_json(bundle_to_json(train_bundle(six_month_log(), cfg).bundle));
    cfg.training.threads = 4;
    const auto b = dump_json(bundle_to_json(train_bundle(six_month_log(), cfg).bundle));
    EXPECT_EQ(a, b) << to_string(kind);
  }
}

TEST(TrainBundle, HeldOutPerBucketAucAboveChance) {
  const auto log = simulated_log(3000, 6, 62);
  const auto [train, test] = split_train_test(log, 0.8, 3);
  const auto r = train_bundle(train, quick_config(LearnerKind::adaboost));
  std::map<int, std::pair<std::vector<double>, std::vector<std::uint8_t>>> per_bucket;
  for (const auto& v : encode_log(test, r.bundle.schema)) {
    auto& b = per_bucket[v.prefix_months];
    b.first.push_back(score_vector(r.bundle, v));
    b.second.push_back(v.label);
  }
  int checked = 0;
  for (const auto& [k, sl] : per_bucket) {
    const auto pos = std::count(sl.second.begin(), sl.second.end(), 1);
    if (pos == 0 || pos == static_cast<long>(sl.second.size())) continue;
    EXPECT_GT(auc(sl.first, sl.second).value, 0.5) << "bucket " << k;
    ++checked;
  }
  EXPECT_GE(checked, 3);
}

TEST(TrainBundle, EmptyLogRejected) {
  EXPECT_THROW(train_bundle(EventLog{}, quick_config(LearnerKind::logistic)), Error);
}

TEST(ScoreCase, RoutesByPrefixMonths) {
  const auto& b = logistic_bundle().bundle;
  ASSERT_TRUE(b.models.count(1));
  const int top = b.models.rbegin()->first;
  ASSERT_LT(top, 9);
  const auto one = monthly_trace("x1", 1);
  const auto nine = monthly_trace("x9", 9);
  const YearMonth end = YearMonth::of(2017, 9);
  auto direct = [&](const Trace& t, int bucket) {
    const auto prefix = make_prefix(t, t.events.size(), b.schema.reclamation_activity);
    return predict_proba(b.models.at(bucket), encode(prefix, b.schema).values);
  };
  EXPECT_EQ(score_case(b, one, end), direct(one, 1));
  EXPECT_EQ(score_case(b, nine, end), direct(nine, top));
}

TEST(ScoreCase, LogisticMatchesDirectLinearPrediction) {
  const auto& b = logistic_bundle().bundle;
  const auto& log = six_month_log();
  for (std::size_t i = 0; i < 40; ++i) {
    const auto& t = log.traces()[i * 7];
    const YearMonth last = t.events.back().date.year_month();
    for (YearMonth ym = t.events.front().date.year_month(); ym.index <= last.index; ym = ym + 1) {
      const auto n = events_through(t, ym);
      const auto v = encode(make_prefix(t, n, b.schema.reclamation_activity), b.schema);
      const auto key = route_bucket(b.models, v.prefix_months);
      const auto& lin = std::get<LinearModel>(key ? b.models.at(*key) : b.pooled_fallback);
      EXPECT_EQ(score_case(b, t, ym), predict_proba_linear(lin, v.values));
    }
  }
}

TEST(ScoreCase, OnlyEventsThroughAsOfCount) {
  const auto& b = logistic_bundle().bundle;
  const auto t = monthly_trace("x", 4);
  auto cut = t;
  cut.events.resize(4);  // two months
  EXPECT_EQ(score_case(b, t, YearMonth::of(2017, 2)), score_case(b, cut, YearMonth::of(2017, 2)));
  EXPECT_EQ(score_case(b, cut, YearMonth::of(2017, 2)), score_case(b, cut, YearMonth::of(2018, 2)));
}

TEST(ScoreCase, NoEventsBeforeAsOf) {
  const auto& b = logistic_bundle().bundle;
  EXPECT_THROW(score_case(b, monthly_trace("x", 2), YearMonth::of(2016, 12)), Error);
}

TEST(ScoreCase, RepeatedAndConcurrentScoringIsStable) {
  const auto& b = logistic_bundle().bundle;
  const auto& log = six_month_log();
  const YearMonth as_of = YearMonth::of(2017, 1);
  std::vector<double> serial;
  for (const auto& t : log.traces()) serial.push_back(score_case(b, t, as_of));
  std::vector<double> parallel(serial.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < 4; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < serial.size(); i += 4) parallel[i] = score_case(b, log.traces()[i], as_of);
    });
  }
  for (auto& th : pool) th.join();
  EXPECT_EQ(serial, parallel);
}

TEST(Flag, StrictThreshold) {
  const std::map<std::string, double> scores{{"a", 0.81}, {"b", 0.80}, {"c", 0.79}};
  EXPECT_EQ(flag_risky(scores, 0.8), (std::set<std::string>{"a"}));
  PredictorBundle b;
  EXPECT_EQ(flag_risky(b, scores), (std::set<std::string>{"a"}));
  EXPECT_TRUE(flag_risky(std::map<std::string, double>{}, 0.8).empty());
}

TEST(Flag, SweepMonotoneAndPartition) {
  Rng rng(63);
  std::map<std::string, double> scores;
  for (int i = 0; i < 500; ++i) scores["c" + std::to_string(i)] = std::round(uniform01(rng) * 50) / 50;
  std::size_t prev = scores.size() + 1;
  for (int k = 0; k <= 100; ++k) {
    const double thr = k / 100.0;
    const auto flagged = flag_risky(scores, thr);
    EXPECT_LE(flagged.size(), prev);
    prev = flagged.size();
    std::size_t expected = 0;
    for (const auto& [id, p] : scores) {
      expected += p > thr;
      EXPECT_EQ(flagged.count(id) == 1, p > thr);
    }
    EXPECT_EQ(flagged.size(), expected);
  }
}

TEST(BundleJson, SaveLoadRoundTrip) {
  const auto& b = logistic_bundle().bundle;
  const auto path = std::filesystem::temp_directory_path() / "parlab_test_bundle.json";
  save_bundle(path.string(), b);
  const auto back = load_bundle(path.string());
  EXPECT_EQ(dump_json(bundle_to_json(back)), dump_json(bundle_to_json(b)));
  const auto t = monthly_trace("x", 3);
  EXPECT_EQ(score_case(back, t, YearMonth::of(2017, 3)), score_case(b, t, YearMonth::of(2017, 3)));
  std::filesystem::remove(path);
}

TEST(BundleJson, RejectsTampering) {
  const auto j = bundle_to_json(logistic_bundle().bundle);
  auto bad_fp = j;
  bad_fp["schema"]["activities"].push_back("Zzz");
  EXPECT_THROW(bundle_from_json(bad_fp), Error);
  auto bad_thr = j;
  bad_thr["threshold"] = 1.5;
  EXPECT_THROW(bundle_from_json(bad_thr), Error);
  auto bad_fmt = j;
  bad_fmt["format"] = "something-else";
  EXPECT_THROW(bundle_from_json(bad_fmt), Error);
  auto bad_ver = j;
  bad_ver["version"] = 99;
  EXPECT_THROW(bundle_from_json(bad_ver), Error);
}
