#pragma once

// Selection protocol: trace-level train/test split, stratified k-fold cross
// validation ranked by AUC, bucketed versus pooled training, and the
// architecture comparison.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "parlab/core.hpp"
#include "parlab/csv.hpp"
#include "parlab/encoding.hpp"
#include "parlab/event_log.hpp"
#include "parlab/learners.hpp"
#include "parlab/metrics.hpp"
#include "parlab/parallel.hpp"

namespace parlab {

/// Splits at trace level: floor(n * train_fraction) traces go to training.
inline std::pair<EventLog, EventLog> split_train_test(const EventLog& log, double train_fraction,
                                                      std::uint64_t seed) {
  if (log.size() < 2) throw Error("split needs at least 2 traces, log has " + std::to_string(log.size()));
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("train fraction must be in (0, 1)");
  std::vector<std::size_t> idx(log.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  shuffle(idx.begin(), idx.end(), rng);
  auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(log.size()) * train_fraction));
  n_train = std::clamp<std::size_t>(n_train, 1, log.size() - 1);
  std::vector<Trace> train, test;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    (k < n_train ? train : test).push_back(log.traces()[idx[k]]);
  }
  return {EventLog(std::move(train), log.reclamation_activity()),
          EventLog(std::move(test), log.reclamation_activity())};
}

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

namespace detail {

inline void check_folds(std::span<const std::uint8_t> labels, const std::vector<int>& fold, int k) {
  std::vector<int> pos(static_cast<std::size_t>(k), 0), neg(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg)[static_cast<std::size_t>(fold[i])]++;
  for (int f = 0; f < k; ++f) {
    if (pos[static_cast<std::size_t>(f)] == 0 || neg[static_cast<std::size_t>(f)] == 0) {
      throw Error("fold " + std::to_string(f) + " of " + std::to_string(k) +
                  " contains a single class; reduce k or provide more data");
    }
  }
}

}  // namespace detail

/// Stratified fold index per instance. Positives and negatives are each
/// shuffled and dealt round-robin, negatives continuing where positives
/// stopped, so fold sizes differ by at most one.
inline std::vector<int> stratified_folds(std::span<const std::uint8_t> labels, int k, std::uint64_t seed) {
  if (k < 2) throw Error("k must be >= 2");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  Rng rng(derive_seed(seed, "folds"));
  shuffle(pos.begin(), pos.end(), rng);
  shuffle(neg.begin(), neg.end(), rng);
  std::vector<int> fold(labels.size(), 0);
  std::size_t slot = 0;
  for (auto i : pos) fold[i] = static_cast<int>(slot++ % static_cast<std::size_t>(k));
  for (auto i : neg) fold[i] = static_cast<int>(slot++ % static_cast<std::size_t>(k));
  detail::check_folds(labels, fold, k);
  return fold;
}

/// Fold per instance keeping all instances of a group (case) together.
/// Groups are stratified by whether any of their instances is positive.
inline std::vector<int> grouped_folds(std::span<const std::uint8_t> labels, std::span<const std::string> groups,
                                      int k, std::uint64_t seed) {
  if (k < 2) throw Error("k must be >= 2");
  if (groups.size() != labels.size()) throw Error("grouped folds: groups and labels differ in length");
  std::map<std::string, bool> group_label;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& g = group_label[groups[i]];
    g = g || labels[i];
  }
  std::vector<std::string> pos, neg;
  for (const auto& [g, l] : group_label) (l ? pos : neg).push_back(g);
  Rng rng(derive_seed(seed, "folds"));
  shuffle(pos.begin(), pos.end(), rng);
  shuffle(neg.begin(), neg.end(), rng);
  std::map<std::string, int> group_fold;
  std::size_t slot = 0;
  for (const auto& g : pos) group_fold[g] = static_cast<int>(slot++ % static_cast<std::size_t>(k));
  for (const auto& g : neg) group_fold[g] = static_cast<int>(slot++ % static_cast<std::size_t>(k));
  std::vector<int> fold(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) fold[i] = group_fold[groups[i]];
  detail::check_folds(labels, fold, k);
  return fold;
}

// ---------------------------------------------------------------------------
// Cross validation
// ---------------------------------------------------------------------------

struct GridResult {
  HyperParams params;
  std::vector<double> fold_aucs;
  double mean_auc = 0.0;
};

struct CvReport {
  LearnerKind learner = LearnerKind::adaboost;
  int k = 5;
  std::vector<GridResult> grid;
  std::size_t winner = 0;

  const GridResult& best() const { return grid.at(winner); }
};

struct CvOptions {
  int k = 5;
  LearnerKind learner = LearnerKind::adaboost;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// When set, folds keep each case's vectors together.
  std::span<const std::string> groups = {};
};

inline std::vector<HyperParams> default_grid(LearnerKind kind) {
  std::vector<HyperParams> grid;
  if (kind == LearnerKind::logistic) {
    for (double l : {0.001, 0.01, 0.1, 1.0}) {
      HyperParams hp;
      hp.l2_lambda = l;
      grid.push_back(hp);
    }
  } else {
    for (int r : {50, 100, 200}) {
      HyperParams hp;
      hp.num_rounds = r;
      grid.push_back(hp);
    }
  }
  return grid;
}

/// k-fold cross validation of every grid point; the winner has the highest
/// mean held-out AUC, ties going to the first-listed point. For boosting,
/// one fit with the largest round count per fold serves every grid point,
/// since a boosted model's first n rounds are the n-round fit.
inline CvReport cross_validate(const Dataset& data, std::span<const HyperParams> grid, const CvOptions& options) {
  if (grid.empty()) throw Error("cross validation needs a non-empty grid");
  check_labels(data);
  const int k = options.k;
  const auto fold = options.groups.empty() ? stratified_folds(data.y, k, options.seed)
                                           : grouped_folds(data.y, options.groups, k, options.seed);
  std::vector<std::vector<std::size_t>> train_idx(static_cast<std::size_t>(k)), test_idx(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (int f = 0; f < k; ++f) {
      (fold[i] == f ? test_idx : train_idx)[static_cast<std::size_t>(f)].push_back(i);
    }
  }
  CvReport report;
  report.learner = options.learner;
  report.k = k;
  for (const auto& hp : grid) report.grid.push_back({hp, std::vector<double>(static_cast<std::size_t>(k)), 0.0});

  auto held_out_auc = [&](const Model& model, int f) {
    const auto& idx = test_idx[static_cast<std::size_t>(f)];
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    scores.reserve(idx.size());
    for (auto i : idx) {
      scores.push_back(predict_proba(model, data.row(i)));
      labels.push_back(data.y[i]);
    }
    return auc(scores, labels).value;
  };

  if (options.learner == LearnerKind::adaboost) {
    HyperParams widest = grid.front();
    for (const auto& hp : grid) widest.num_rounds = std::max(widest.num_rounds, hp.num_rounds);
    parallel_for(static_cast<std::size_t>(k), options.threads, [&](std::size_t f) {
      const auto model = fit_adaboost(data.subset(train_idx[f]), widest);
      for (auto& g : report.grid) {
        g.fold_aucs[f] = held_out_auc(model.truncated(static_cast<std::size_t>(g.params.num_rounds)),
                                      static_cast<int>(f));
      }
    });
  } else {
    const std::size_t tasks = grid.size() * static_cast<std::size_t>(k);
    parallel_for(tasks, options.threads, [&](std::size_t t) {
      const std::size_t g = t / static_cast<std::size_t>(k), f = t % static_cast<std::size_t>(k);
      const auto model = fit_logistic(data.subset(train_idx[f]), grid[g]);
      report.grid[g].fold_aucs[f] = held_out_auc(model, static_cast<int>(f));
    });
  }
  for (std::size_t g = 0; g < report.grid.size(); ++g) {
    auto& r = report.grid[g];
    r.mean_auc = std::accumulate(r.fold_aucs.begin(), r.fold_aucs.end(), 0.0) / static_cast<double>(k);
    if (r.mean_auc > report.grid[report.winner].mean_auc) report.winner = g;
  }
  return report;
}

inline nlohmann::json to_json(const HyperParams& hp, LearnerKind kind) {
  if (kind == LearnerKind::logistic) {
    return {{"l2_lambda", hp.l2_lambda},           {"learning_rate", hp.learning_rate},
            {"max_iters", hp.max_iters},           {"grad_tolerance", hp.grad_tolerance},
            {"positive_weight", hp.positive_weight}};
  }
  return {{"num_rounds", hp.num_rounds}};
}

inline HyperParams hyper_params_from_json(const nlohmann::json& j) {
  HyperParams hp;
  hp.l2_lambda = j.value("l2_lambda", hp.l2_lambda);
  hp.learning_rate = j.value("learning_rate", hp.learning_rate);
  hp.max_iters = j.value("max_iters", hp.max_iters);
  hp.grad_tolerance = j.value("grad_tolerance", hp.grad_tolerance);
  hp.positive_weight = j.value("positive_weight", hp.positive_weight);
  hp.num_rounds = j.value("num_rounds", hp.num_rounds);
  return hp;
}

inline nlohmann::json to_json(const CvReport& r) {
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& g : r.grid) {
    grid.push_back({{"params", to_json(g.params, r.learner)}, {"fold_aucs", g.fold_aucs}, {"mean_auc", g.mean_auc}});
  }
  return {{"learner", to_string(r.learner)}, {"k", r.k}, {"grid", grid}, {"winner", r.winner}};
}

// ---------------------------------------------------------------------------
// Bucketed training
// ---------------------------------------------------------------------------

/// One row per (report, grid point); fold AUCs are ';'-joined.
inline void write_cv_csv(std::ostream& out, const std::vector<std::pair<std::string, CvReport>>& reports) {
  csv::write_row(out, {"bucket", "learner", "l2_lambda", "num_rounds", "mean_auc", "fold_aucs", "winner"});
  for (const auto& [name, r] : reports) {
    for (std::size_t g = 0; g < r.grid.size(); ++g) {
      const auto& res = r.grid[g];
      std::string folds;
      for (std::size_t f = 0; f < res.fold_aucs.size(); ++f) folds += (f ? ";" : "") + csv::num(res.fold_aucs[f]);
      csv::write_row(out, {name, to_string(r.learner), csv::num(res.params.l2_lambda), std::to_string(res.params.num_rounds),
                           csv::num(res.mean_auc), folds, g == r.winner ? "1" : "0"});
    }
  }
}

struct BucketTrainingConfig {
  LearnerKind learner = LearnerKind::adaboost;
  std::vector<HyperParams> grid;  // empty means default_grid(learner)
  int k = 5;
  std::uint64_t seed = 0;
  std::size_t min_bucket_size = 50;
  bool cv_by_trace = false;
  unsigned threads = 1;
};

struct TrainedModel {
  Model model;
  CvReport cv;
  std::size_t instances = 0;
  std::size_t positives = 0;
};

struct BucketedModels {
  std::map<int, TrainedModel> buckets;
  TrainedModel pooled;
  std::vector<int> absorbed;  // bucket keys left to the pooled model
};

/// Cross-validates the grid on `vectors` and refits the winner on all of them.
inline TrainedModel select_and_fit(std::span<const FeatureVector> vectors, const BucketTrainingConfig& config,
                                   std::uint64_t seed) {
  const auto grid = config.grid.empty() ? default_grid(config.learner) : config.grid;
  const auto data = Dataset::from_vectors(vectors);
  std::vector<std::string> groups;
  CvOptions cv{config.k, config.learner, seed, config.threads, {}};
  if (config.cv_by_trace) {
    for (const auto& v : vectors) groups.push_back(v.case_id);
    cv.groups = groups;
  }
  TrainedModel out;
  out.cv = cross_validate(data, grid, cv);
  out.model = fit_model(config.learner, data, out.cv.best().params);
  out.instances = data.rows();
  out.positives = data.positives();
  return out;
}

namespace detail {

inline bool cv_feasible(std::span<const FeatureVector> vectors, int k) {
  std::size_t pos = 0;
  for (const auto& v : vectors) pos += v.label ? 1 : 0;
  return pos >= static_cast<std::size_t>(k) && vectors.size() - pos >= static_cast<std::size_t>(k);
}

}  // namespace detail

/// One model per month bucket plus a pooled model over every vector.
/// Buckets smaller than min_bucket_size, or without k instances of each
/// class, get no model of their own and are served by the pooled model.
inline BucketedModels train_bucketed(std::span<const FeatureVector> vectors, const BucketTrainingConfig& config) {
  if (vectors.empty()) throw Error("no training vectors");
  BucketedModels out;
  out.pooled = select_and_fit(vectors, config, derive_seed(config.seed, "pooled"));
  for (const auto& [key, bucket] : bucket_by_months(vectors)) {
    if (bucket.size() < config.min_bucket_size || !detail::cv_feasible(bucket, config.k)) {
      out.absorbed.push_back(key);
      continue;
    }
    out.buckets.emplace(key, select_and_fit(bucket, config, derive_seed(config.seed, "bucket",
                                                                        static_cast<std::uint64_t>(key))));
  }
  return out;
}

/// Bucket key serving a prefix of `months` months: exact match, else the
/// nearest key (ties to the smaller). Empty when there are no keys.
template <typename Map>
std::optional<int> route_bucket(const Map& buckets, int months) {
  if (buckets.empty()) return std::nullopt;
  auto hi = buckets.lower_bound(months);
  if (hi != buckets.end() && hi->first == months) return months;
  if (hi == buckets.begin()) return hi->first;
  auto lo = std::prev(hi);
  if (hi == buckets.end()) return lo->first;
  return (months - lo->first) <= (hi->first - months) ? lo->first : hi->first;
}

inline const Model& routed_model(const BucketedModels& m, int months) {
  const auto key = route_bucket(m.buckets, months);
  return key ? m.buckets.at(*key).model : m.pooled.model;
}

// ---------------------------------------------------------------------------
// Architecture comparison
// ---------------------------------------------------------------------------

struct ArchitectureResult {
  std::string architecture;  // "single" or "bucketed"
  LearnerKind learner = LearnerKind::adaboost;
  std::optional<double> test_auc;
  std::map<int, double> bucket_test_auc;
};

struct ArchitectureReport {
  std::size_t train_traces = 0;
  std::size_t test_traces = 0;
  std::size_t train_vectors = 0;
  std::size_t test_vectors = 0;
  std::vector<ArchitectureResult> results;
};

struct ComparisonConfig {
  double train_fraction = 0.8;
  LabelMode label_mode = LabelMode::eventual;
  BucketTrainingConfig training;  // learner and grid are overridden per configuration
  std::vector<HyperParams> logistic_grid;
  std::vector<HyperParams> boost_grid;
};

namespace detail {

inline std::optional<double> maybe_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<long>(labels.size())) return std::nullopt;
  return auc(scores, labels).value;
}

inline void score_test(ArchitectureResult& r, std::span<const FeatureVector> test,
                       const std::function<const Model&(int)>& model_for) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::map<int, std::pair<std::vector<double>, std::vector<std::uint8_t>>> per_bucket;
  for (const auto& v : test) {
    const double s = predict_proba(model_for(v.prefix_months), v.values);
    scores.push_back(s);
    labels.push_back(v.label);
    auto& b = per_bucket[v.prefix_months];
    b.first.push_back(s);
    b.second.push_back(v.label);
  }
  r.test_auc = maybe_auc(scores, labels);
  for (const auto& [key, sl] : per_bucket) {
    if (auto a = maybe_auc(sl.first, sl.second)) r.bucket_test_auc[key] = *a;
  }
}

}  // namespace detail

/// Trains a single pooled predictor and per-month-bucket predictors for both
/// learners on the training split and reports their test-split AUCs.
inline ArchitectureReport compare_architectures(const EventLog& log, const ComparisonConfig& config) {
  auto [train_log, test_log] = split_train_test(log, config.train_fraction, config.training.seed);
  const auto schema = build_schema(train_log, config.label_mode);
  const auto train = encode_log(train_log, schema);
  const auto test = encode_log(test_log, schema);
  ArchitectureReport report;
  report.train_traces = train_log.size();
  report.test_traces = test_log.size();
  report.train_vectors = train.size();
  report.test_vectors = test.size();
  for (LearnerKind kind : {LearnerKind::logistic, LearnerKind::adaboost}) {
    auto tc = config.training;
    tc.learner = kind;
    tc.grid = kind == LearnerKind::logistic ? config.logistic_grid : config.boost_grid;
    const auto bucketed = train_bucketed(train, tc);

    ArchitectureResult single{"single", kind, {}, {}};
    detail::score_test(single, test, [&](int) -> const Model& { return bucketed.pooled.model; });
    ArchitectureResult per_bucket{"bucketed", kind, {}, {}};
    detail::score_test(per_bucket, test, [&](int months) -> const Model& { return routed_model(bucketed, months); });
    report.results.push_back(std::move(single));
    report.results.push_back(std::move(per_bucket));
  }
  return report;
}

inline nlohmann::json to_json(const ArchitectureReport& r) {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& c : r.results) {
    nlohmann::json buckets = nlohmann::json::object();
    for (const auto& [k, v] : c.bucket_test_auc) buckets[std::to_string(k)] = v;
    results.push_back({{"architecture", c.architecture},
                       {"learner", to_string(c.learner)},
                       {"test_auc", c.test_auc ? nlohmann::json(*c.test_auc) : nlohmann::json(nullptr)},
                       {"bucket_test_auc", buckets}});
  }
  return {{"train_traces", r.train_traces}, {"test_traces", r.test_traces},
          {"train_vectors", r.train_vectors}, {"test_vectors", r.test_vectors},
          {"configurations", results}};
}

inline void write_comparison_csv(std::ostream& out, const ArchitectureReport& r) {
  csv::write_row(out, {"architecture", "learner", "bucket", "test_auc"});
  for (const auto& c : r.results) {
    csv::write_row(out, {c.architecture, to_string(c.learner), "all", c.test_auc ? csv::num(*c.test_auc) : ""});
    for (const auto& [k, v] : c.bucket_test_auc) {
      csv::write_row(out, {c.architecture, to_string(c.learner), std::to_string(k), csv::num(v)});
    }
  }
}

}  // namespace parlab
