#pragma once

// Binary classifiers: L2-regularized logistic regression fitted by full-batch
// gradient descent, and discrete AdaBoost over decision stumps.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "parlab/core.hpp"
#include "parlab/encoding.hpp"

namespace parlab {

/// Dense row-major design matrix with boolean labels.
struct Dataset {
  std::size_t cols = 0;
  std::vector<double> x;
  std::vector<std::uint8_t> y;

  Dataset() = default;
  explicit Dataset(std::size_t columns) : cols(columns) {}

  std::size_t rows() const { return y.size(); }
  bool empty() const { return y.empty(); }

  std::span<const double> row(std::size_t i) const { return {x.data() + i * cols, cols}; }
  double at(std::size_t i, std::size_t j) const { return x[i * cols + j]; }

  void add(std::span<const double> values, bool label) {
    if (values.size() != cols) {
      throw Error("row has " + std::to_string(values.size()) + " values, dataset has " +
                  std::to_string(cols) + " columns");
    }
    x.insert(x.end(), values.begin(), values.end());
    y.push_back(label ? 1 : 0);
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset d(cols);
    d.x.reserve(indices.size() * cols);
    d.y.reserve(indices.size());
    for (auto i : indices) d.add(row(i), y[i] != 0);
    return d;
  }

  std::size_t positives() const { return static_cast<std::size_t>(std::count(y.begin(), y.end(), 1)); }

  static Dataset from_vectors(std::span<const FeatureVector> vectors) {
    Dataset d(vectors.empty() ? 0 : vectors.front().values.size());
    d.x.reserve(vectors.size() * d.cols);
    for (const auto& v : vectors) d.add(v.values, v.label);
    return d;
  }
};

enum class LearnerKind { logistic, adaboost };

inline std::string to_string(LearnerKind k) { return k == LearnerKind::logistic ? "logistic" : "adaboost"; }

inline LearnerKind parse_learner_kind(const std::string& s) {
  if (s == "logistic") return LearnerKind::logistic;
  if (s == "adaboost") return LearnerKind::adaboost;
  throw Error("unknown learner '" + s + "' (expected logistic or adaboost)");
}

struct HyperParams {
  // logistic
  double l2_lambda = 0.01;
  double learning_rate = 1.0;
  int max_iters = 500;
  double grad_tolerance = 1e-5;
  double positive_weight = 1.0;
  // boosting
  int num_rounds = 100;

  bool operator==(const HyperParams&) const = default;
};

inline void check_labels(const Dataset& data) {
  if (data.empty()) throw Error("empty training set");
  const auto pos = data.positives();
  if (pos == 0 || pos == data.rows()) throw Error("degenerate labels: training set has a single class");
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

struct LinearModel {
  std::vector<double> weights;  // on the standardized scale
  double intercept = 0.0;
  std::vector<double> means;
  std::vector<double> sds;

  std::size_t dimension() const { return weights.size(); }
  bool operator==(const LinearModel&) const = default;
};

/// Mean weighted negative log-likelihood plus (lambda/2)*|w|^2 over a
/// standardized design. Parameters are packed as [intercept, w_1..w_d].
class LogisticObjective {
 public:
  LogisticObjective(Eigen::MatrixXd z, Eigen::VectorXd y, Eigen::VectorXd sample_weights, double l2_lambda)
      : z_(std::move(z)), y_(std::move(y)), s_(std::move(sample_weights)), lambda_(l2_lambda),
        total_weight_(s_.sum()) {}

  std::size_t parameters() const { return static_cast<std::size_t>(z_.cols()) + 1; }

  double value(const Eigen::VectorXd& theta) const { return evaluate(theta, nullptr); }

  double value_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
    return evaluate(theta, &grad);
  }

 private:
  double evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
    const auto w = theta.tail(z_.cols());
    const Eigen::VectorXd margin = (z_ * w).array() + theta[0];
    double loss = 0.0;
    Eigen::VectorXd residual(margin.size());
    for (Eigen::Index i = 0; i < margin.size(); ++i) {
      loss += s_[i] * (softplus(margin[i]) - y_[i] * margin[i]);
      residual[i] = s_[i] * (sigmoid(margin[i]) - y_[i]);
    }
    loss = loss / total_weight_ + 0.5 * lambda_ * w.squaredNorm();
    if (grad) {
      grad->resize(theta.size());
      (*grad)[0] = residual.sum() / total_weight_;
      grad->tail(z_.cols()) = z_.transpose() * residual / total_weight_ + lambda_ * w;
    }
    return loss;
  }

  Eigen::MatrixXd z_;
  Eigen::VectorXd y_;
  Eigen::VectorXd s_;
  double lambda_;
  double total_weight_;
};

namespace detail {

inline void fit_standardization(const Dataset& data, std::vector<double>& means, std::vector<double>& sds) {
  const std::size_t n = data.rows(), d = data.cols;
  means.assign(d, 0.0);
  sds.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) means[j] += data.at(i, j);
  for (auto& m : means) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = data.at(i, j) - means[j];
      sds[j] += c * c;
    }
  for (auto& s : sds) s = std::sqrt(s / static_cast<double>(n));
}

inline bool is_constant(double sd, double mean) { return sd <= 1e-12 * std::max(1.0, std::abs(mean)); }

}  // namespace detail

inline std::vector<double> standardize(const LinearModel& m, std::span<const double> x) {
  std::vector<double> z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - m.means[j]) / m.sds[j];
  return z;
}

/// Builds the objective used by `fit_logistic` together with the model's
/// standardization (constant columns get sd 1).
inline LogisticObjective make_logistic_objective(const Dataset& data, const HyperParams& hp, LinearModel& model) {
  detail::fit_standardization(data, model.means, model.sds);
  const std::size_t n = data.rows(), d = data.cols;
  std::vector<bool> constant(d);
  for (std::size_t j = 0; j < d; ++j) {
    constant[j] = detail::is_constant(model.sds[j], model.means[j]);
    if (constant[j]) model.sds[j] = 1.0;
  }
  Eigen::MatrixXd z(n, d);
  Eigen::VectorXd y(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = constant[j] ? 0.0 : data.at(i, j) - model.means[j];
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c / model.sds[j];
    }
    y[static_cast<Eigen::Index>(i)] = data.y[i];
    s[static_cast<Eigen::Index>(i)] = data.y[i] ? hp.positive_weight : 1.0;
  }
  return LogisticObjective(std::move(z), std::move(y), std::move(s), hp.l2_lambda);
}

/// Full-batch gradient descent with step halving whenever a step would raise
/// the loss, so accepted iterates have non-increasing loss. Stops when the
/// gradient max-norm drops below `grad_tolerance` or after `max_iters`.
/// When `loss_history` is given it receives the loss of every accepted iterate.
inline LinearModel fit_logistic(const Dataset& data, const HyperParams& hp,
                                std::vector<double>* loss_history = nullptr) {
  check_labels(data);
  if (hp.l2_lambda < 0) throw Error("l2_lambda must be >= 0");
  if (!(hp.learning_rate > 0)) throw Error("learning_rate must be > 0");
  LinearModel model;
  const auto objective = make_logistic_objective(data, hp, model);
  const std::size_t d = data.cols;
  // A constant column standardizes to zeros; its gradient is lambda*w, so
  // starting at zero keeps its weight at exactly zero.
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d + 1));
  Eigen::VectorXd grad, cand_grad;
  double loss = objective.value_and_gradient(theta, grad);
  if (loss_history) loss_history->assign(1, loss);
  double step = hp.learning_rate;
  for (int it = 0; it < hp.max_iters; ++it) {
    if (grad.lpNorm<Eigen::Infinity>() < hp.grad_tolerance) break;
    bool accepted = false;
    while (step > 1e-14) {
      Eigen::VectorXd cand = theta - step * grad;
      const double cand_loss = objective.value_and_gradient(cand, cand_grad);
      if (cand_loss <= loss) {
        theta = std::move(cand);
        loss = cand_loss;
        grad.swap(cand_grad);
        accepted = true;
        step = std::min(step * 1.25, 64.0 * hp.learning_rate);
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (loss_history) loss_history->push_back(loss);
  }
  model.intercept = theta[0];
  model.weights.assign(theta.data() + 1, theta.data() + theta.size());
  return model;
}

inline double linear_score(const LinearModel& m, std::span<const double> x) {
  if (x.size() != m.dimension()) {
    throw Error("dimension mismatch: model expects " + std::to_string(m.dimension()) + ", got " +
                std::to_string(x.size()));
  }
  double z = m.intercept;
  for (std::size_t j = 0; j < x.size(); ++j) z += m.weights[j] * (x[j] - m.means[j]) / m.sds[j];
  return z;
}

inline double predict_proba_linear(const LinearModel& m, std::span<const double> x) {
  return sigmoid(linear_score(m, x));
}

// ---------------------------------------------------------------------------
// AdaBoost
// ---------------------------------------------------------------------------

/// h(x) = polarity if x[feature] > threshold, else -polarity.
struct Stump {
  std::size_t feature = 0;
  double threshold = 0.0;
  int polarity = 1;

  int predict(std::span<const double> x) const { return x[feature] > threshold ? polarity : -polarity; }
  bool operator==(const Stump&) const = default;
};

struct BoostRound {
  Stump stump;
  double alpha = 0.0;
  double weighted_error = 0.0;  // at selection time

  bool operator==(const BoostRound&) const = default;
};

struct BoostModel {
  std::size_t dimension = 0;
  std::vector<BoostRound> rounds;

  /// The model made of the first `n` rounds; boosting is sequential, so this
  /// equals a fresh fit with num_rounds = n.
  BoostModel truncated(std::size_t n) const {
    BoostModel m{dimension, {}};
    m.rounds.assign(rounds.begin(), rounds.begin() + static_cast<long>(std::min(n, rounds.size())));
    return m;
  }

  bool operator==(const BoostModel&) const = default;
};

inline constexpr double kMinStumpError = 1e-10;

inline double stump_alpha(double weighted_error) {
  const double e = std::max(weighted_error, kMinStumpError);
  return 0.5 * std::log((1.0 - e) / e);
}

/// Optional per-round diagnostics from `fit_adaboost`.
struct BoostTrace {
  std::vector<std::vector<double>> weights;  // sample weights after each round
};

namespace detail {

struct StumpChoice {
  Stump stump;
  double error = 1.0;
  bool found = false;
};

/// Exhaustive search over every feature and every midpoint between
/// consecutive distinct values. `order[j]` lists rows sorted by feature j.
inline StumpChoice best_stump(const Dataset& data, const std::vector<std::vector<std::size_t>>& order,
                              const std::vector<double>& w) {
  StumpChoice best;
  double wp_total = 0.0, wn_total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) (data.y[i] ? wp_total : wn_total) += w[i];
  for (std::size_t j = 0; j < data.cols; ++j) {
    const auto& ord = order[j];
    double wp_le = 0.0, wn_le = 0.0;
    for (std::size_t k = 0; k + 1 < ord.size(); ++k) {
      const std::size_t i = ord[k];
      (data.y[i] ? wp_le : wn_le) += w[i];
      const double here = data.at(i, j), next = data.at(ord[k + 1], j);
      if (!(next > here)) continue;
      // polarity +1 predicts positive above the threshold
      const double err_pos = wp_le + (wn_total - wn_le);
      const double err_neg = wn_le + (wp_total - wp_le);
      const double thr = here + (next - here) / 2.0;
      if (err_pos < best.error) best = {{j, thr, 1}, err_pos, true};
      if (err_neg < best.error) best = {{j, thr, -1}, err_neg, true};
    }
  }
  return best;
}

}  // namespace detail

/// Discrete AdaBoost. Each round takes the stump with the smallest weighted
/// error; training stops early when no stump beats 0.5 or a stump is perfect.
inline BoostModel fit_adaboost(const Dataset& data, const HyperParams& hp, BoostTrace* trace = nullptr) {
  check_labels(data);
  if (hp.num_rounds < 1) throw Error("num_rounds must be >= 1");
  const std::size_t n = data.rows();
  std::vector<std::vector<std::size_t>> order(data.cols);
  for (std::size_t j = 0; j < data.cols; ++j) {
    order[j].resize(n);
    std::iota(order[j].begin(), order[j].end(), std::size_t{0});
    std::stable_sort(order[j].begin(), order[j].end(),
                     [&](std::size_t a, std::size_t b) { return data.at(a, j) < data.at(b, j); });
  }
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  BoostModel model{data.cols, {}};
  for (int round = 0; round < hp.num_rounds; ++round) {
    const auto choice = detail::best_stump(data, order, w);
    if (!choice.found || choice.error >= 0.5) break;
    const double alpha = stump_alpha(choice.error);
    model.rounds.push_back({choice.stump, alpha, choice.error});
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int yi = data.y[i] ? 1 : -1;
      w[i] *= std::exp(-alpha * yi * choice.stump.predict(data.row(i)));
      total += w[i];
    }
    for (auto& wi : w) wi /= total;
    if (trace) trace->weights.push_back(w);
    if (choice.error < kMinStumpError) break;
  }
  return model;
}

inline double boost_margin(const BoostModel& m, std::span<const double> x) {
  if (x.size() != m.dimension) {
    throw Error("dimension mismatch: model expects " + std::to_string(m.dimension) + ", got " +
                std::to_string(x.size()));
  }
  double f = 0.0;
  for (const auto& r : m.rounds) f += r.alpha * r.stump.predict(x);
  return f;
}

inline double predict_proba_boost(const BoostModel& m, std::span<const double> x) {
  return sigmoid(2.0 * boost_margin(m, x));
}

// ---------------------------------------------------------------------------
// Common interface
// ---------------------------------------------------------------------------

using Model = std::variant<LinearModel, BoostModel>;

inline double predict_proba(const Model& model, std::span<const double> x) {
  return std::visit(
      [&](const auto& m) {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, LinearModel>) {
          return predict_proba_linear(m, x);
        } else {
          return predict_proba_boost(m, x);
        }
      },
      model);
}

inline Model fit_model(LearnerKind kind, const Dataset& data, const HyperParams& hp) {
  if (kind == LearnerKind::logistic) return fit_logistic(data, hp);
  return fit_adaboost(data, hp);
}

inline LearnerKind kind_of(const Model& m) {
  return std::holds_alternative<LinearModel>(m) ? LearnerKind::logistic : LearnerKind::adaboost;
}

struct FeatureImportance {
  std::size_t feature = 0;
  double importance = 0.0;
};

/// Logistic: |beta| on the standardized scale. Boosting: total alpha of the
/// rounds splitting on the feature. Sorted descending, ties by index.
inline std::vector<FeatureImportance> feature_importance(const Model& model) {
  std::vector<FeatureImportance> out;
  if (const auto* lin = std::get_if<LinearModel>(&model)) {
    for (std::size_t j = 0; j < lin->weights.size(); ++j) out.push_back({j, std::abs(lin->weights[j])});
  } else {
    const auto& boost = std::get<BoostModel>(model);
    for (std::size_t j = 0; j < boost.dimension; ++j) out.push_back({j, 0.0});
    for (const auto& r : boost.rounds) out[r.stump.feature].importance += r.alpha;
  }
  std::stable_sort(out.begin(), out.end(), [](const FeatureImportance& a, const FeatureImportance& b) {
    return a.importance > b.importance;
  });
  return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json model_to_json(const Model& model) {
  using nlohmann::json;
  if (const auto* lin = std::get_if<LinearModel>(&model)) {
    return json{{"kind", "logistic"},
                {"intercept", lin->intercept},
                {"weights", lin->weights},
                {"means", lin->means},
                {"sds", lin->sds}};
  }
  const auto& boost = std::get<BoostModel>(model);
  json rounds = json::array();
  for (const auto& r : boost.rounds) {
    rounds.push_back({{"feature", r.stump.feature},
                      {"threshold", r.stump.threshold},
                      {"polarity", r.stump.polarity},
                      {"alpha", r.alpha},
                      {"weighted_error", r.weighted_error}});
  }
  return json{{"kind", "adaboost"}, {"dimension", boost.dimension}, {"rounds", rounds}};
}

inline Model model_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "logistic") {
    LinearModel m;
    m.intercept = j.at("intercept").get<double>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.means = j.at("means").get<std::vector<double>>();
    m.sds = j.at("sds").get<std::vector<double>>();
    if (m.means.size() != m.weights.size() || m.sds.size() != m.weights.size()) {
      throw Error("logistic model: weights, means and sds differ in length");
    }
    return m;
  }
  if (kind == "adaboost") {
    BoostModel m;
    m.dimension = j.at("dimension").get<std::size_t>();
    for (const auto& r : j.at("rounds")) {
      BoostRound round;
      round.stump.feature = r.at("feature").get<std::size_t>();
      round.stump.threshold = r.at("threshold").get<double>();
      round.stump.polarity = r.at("polarity").get<int>();
      round.alpha = r.at("alpha").get<double>();
      round.weighted_error = r.at("weighted_error").get<double>();
      if (round.stump.feature >= m.dimension) throw Error("adaboost model: stump feature out of range");
      m.rounds.push_back(round);
    }
    return m;
  }
  throw Error("unknown model kind '" + kind + "'");
}

}  // namespace parlab
