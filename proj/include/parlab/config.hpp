#pragma once

// Plain-text key-value configuration:
//
//   seed = 7
//   sim.n = 10000
//   [truth]
//   theta_click = 0.5
//
// A "[section]" header prefixes the keys that follow it. '#' starts a comment.

#include <algorithm>
#include <functional>
#include <istream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "parlab/core.hpp"
#include "parlab/csv.hpp"
#include "parlab/experiment.hpp"
#include "parlab/learners.hpp"
#include "parlab/model_selection.hpp"
#include "parlab/simulator.hpp"

namespace parlab {

class Settings {
 public:
  static Settings parse(std::istream& in, const std::string& source = "config") {
    Settings s;
    std::string line, section;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto text = trim(line);
      if (text.empty()) continue;
      const auto where = source + ":" + std::to_string(lineno);
      if (text.front() == '[') {
        if (text.back() != ']') throw Error(where + ": unterminated section header");
        section = trim(text.substr(1, text.size() - 2));
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos) throw Error(where + ": expected 'key = value'");
      auto key = trim(text.substr(0, eq));
      if (key.empty()) throw Error(where + ": empty key");
      if (!section.empty()) key = section + "." + key;
      s.values_[key] = trim(text.substr(eq + 1));
    }
    return s;
  }

  static Settings parse_file(const std::string& path) {
    auto in = csv::open_in(path);
    return parse(in, path);
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void merge(const Settings& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? csv::to_double(values_.at(key), key) : fallback;
  }
  long long get_int(const std::string& key, long long fallback) const {
    return has(key) ? csv::to_int(values_.at(key), key) : fallback;
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = values_.at(key);
    std::size_t pos = 0;
    try {
      const auto out = std::stoull(v, &pos, 10);
      if (pos == v.size() && !v.empty() && v.front() != '-') return out;
    } catch (const std::exception&) {
    }
    throw Error("invalid unsigned integer for " + key + ": '" + v + "'");
  }
  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = values_.at(key);
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw Error("invalid boolean for " + key + ": '" + v + "'");
  }

  /// Throws on the first key that is not in `known`.
  void check_known(const std::vector<std::string>& known) const {
    for (const auto& [k, v] : values_) {
      if (std::find(known.begin(), known.end(), k) == known.end()) throw Error("unknown configuration key '" + k + "'");
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

namespace detail {

template <typename T>
struct DoubleKey {
  const char* key;
  double T::*member;
};

inline const std::vector<DoubleKey<SimConfig>>& sim_double_keys() {
  static const std::vector<DoubleKey<SimConfig>> keys{
      {"sim.base_rate", &SimConfig::base_rate},
      {"sim.open_rate", &SimConfig::open_rate},
      {"sim.click_rate_given_open", &SimConfig::click_rate_given_open},
      {"sim.four_weekly_share", &SimConfig::four_weekly_share},
      {"sim.earner_share_fulltime", &SimConfig::earner_share_fulltime},
      {"sim.earner_share_parttime", &SimConfig::earner_share_parttime},
      {"sim.earner_share_irregular", &SimConfig::earner_share_irregular},
      {"sim.earner_income_prob_low", &SimConfig::earner_income_prob_low},
      {"sim.earner_income_prob_high", &SimConfig::earner_income_prob_high},
      {"sim.nonearner_income_prob_high", &SimConfig::nonearner_income_prob_high},
      {"sim.exit_prob_low", &SimConfig::exit_prob_low},
      {"sim.exit_prob_high", &SimConfig::exit_prob_high},
      {"sim.open_propensity_low", &SimConfig::open_propensity_low},
      {"sim.open_propensity_high", &SimConfig::open_propensity_high},
      {"sim.click_propensity_scale", &SimConfig::click_propensity_scale},
      {"sim.click_income_coupling", &SimConfig::click_income_coupling},
      {"sim.click_prior_coupling", &SimConfig::click_prior_coupling},
  };
  return keys;
}

inline const std::vector<DoubleKey<GroundTruthModel>>& truth_double_keys() {
  static const std::vector<DoubleKey<GroundTruthModel>> keys{
      {"truth.b0", &GroundTruthModel::b0},
      {"truth.b_income", &GroundTruthModel::b_income},
      {"truth.b_prev_reclamation", &GroundTruthModel::b_prev_reclamation},
      {"truth.b_double_payment_month", &GroundTruthModel::b_double_payment_month},
      {"truth.b_age", &GroundTruthModel::b_age},
      {"truth.theta_open", &GroundTruthModel::theta_open},
      {"truth.theta_click", &GroundTruthModel::theta_click},
  };
  return keys;
}

}  // namespace detail

/// Every key the tool understands.
inline std::vector<std::string> known_setting_keys() {
  std::vector<std::string> keys{"seed",
                                "threads",
                                "sim.n",
                                "sim.months",
                                "sim.start",
                                "sim.entry_spread",
                                "sim.id_offset",
                                "sim.age_min",
                                "sim.age_max",
                                "sim.log_interventions",
                                "truth.detection_lag",
                                "train.learner",
                                "train.label_mode",
                                "train.grid",
                                "train.k",
                                "train.min_bucket_size",
                                "train.cv_by_trace",
                                "train.threshold",
                                "train.train_fraction",
                                "train.compare_architectures",
                                "score.as_of",
                                "eval.label_mode",
                                "eval.granularity",
                                "design.fraction",
                                "design.warmup",
                                "design.duration",
                                "design.threshold",
                                "design.policies",
                                "design.replications",
                                "report.marker",
                                "report.outcome_offset"};
  for (const auto& k : detail::sim_double_keys()) keys.push_back(k.key);
  for (const auto& k : detail::truth_double_keys()) keys.push_back(k.key);
  return keys;
}

inline SimConfig sim_config_from(const Settings& s) {
  SimConfig c;
  c.seed = s.get_u64("seed", c.seed);
  const auto n = s.get_int("sim.n", static_cast<long long>(c.population));
  if (n < 1) throw Error("sim.n must be >= 1");
  c.population = static_cast<std::size_t>(n);
  c.horizon_months = static_cast<int>(s.get_int("sim.months", c.horizon_months));
  if (s.has("sim.start")) c.start = YearMonth::parse(s.get("sim.start", ""));
  c.entry_spread_months = static_cast<int>(s.get_int("sim.entry_spread", c.entry_spread_months));
  c.id_offset = s.get_int("sim.id_offset", c.id_offset);
  c.age_min = static_cast<int>(s.get_int("sim.age_min", c.age_min));
  c.age_max = static_cast<int>(s.get_int("sim.age_max", c.age_max));
  c.log_interventions = s.get_bool("sim.log_interventions", c.log_interventions);
  for (const auto& k : detail::sim_double_keys()) c.*k.member = s.get_double(k.key, c.*k.member);
  c.validate();
  return c;
}

/// The intercept is calibrated to sim.base_rate unless truth.b0 is given.
inline GroundTruthModel truth_from(const Settings& s, std::span<const CustomerProfile> population,
                                   const SimConfig& config) {
  GroundTruthModel m;
  for (const auto& k : detail::truth_double_keys()) m.*k.member = s.get_double(k.key, m.*k.member);
  m.detection_lag = static_cast<int>(s.get_int("truth.detection_lag", m.detection_lag));
  m.validate();
  if (!s.has("truth.b0")) m = calibrate_intercept(m, population, config, config.base_rate);
  return m;
}

/// "default", "single-point" (the default hyper-parameters) or a comma list
/// of L2 strengths (logistic) or round counts (adaboost).
inline std::vector<HyperParams> grid_from(const std::string& spec, LearnerKind learner) {
  if (spec.empty() || spec == "default") return default_grid(learner);
  if (spec == "single-point") return {HyperParams{}};
  std::vector<HyperParams> grid;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ',');) {
    HyperParams hp;
    if (learner == LearnerKind::logistic) {
      hp.l2_lambda = csv::to_double(item, "train.grid");
      if (hp.l2_lambda < 0) throw Error("train.grid: L2 strength must be >= 0");
    } else {
      hp.num_rounds = static_cast<int>(csv::to_int(item, "train.grid"));
      if (hp.num_rounds < 1) throw Error("train.grid: rounds must be >= 1");
    }
    grid.push_back(hp);
  }
  if (grid.empty()) throw Error("train.grid is empty");
  return grid;
}

inline BucketTrainingConfig training_from(const Settings& s, unsigned threads) {
  BucketTrainingConfig t;
  t.learner = parse_learner_kind(s.get("train.learner", to_string(t.learner)));
  t.grid = grid_from(s.get("train.grid", "default"), t.learner);
  t.k = static_cast<int>(s.get_int("train.k", t.k));
  t.seed = s.get_u64("seed", t.seed);
  t.min_bucket_size = static_cast<std::size_t>(s.get_int("train.min_bucket_size", static_cast<long long>(t.min_bucket_size)));
  t.cv_by_trace = s.get_bool("train.cv_by_trace", t.cv_by_trace);
  t.threads = threads;
  return t;
}

inline ExperimentDesign design_from(const Settings& s) {
  ExperimentDesign d;
  d.seed = s.get_u64("seed", d.seed);
  d.experimental_fraction = s.get_double("design.fraction", d.experimental_fraction);
  d.warmup_months = static_cast<int>(s.get_int("design.warmup", d.warmup_months));
  d.duration_months = static_cast<int>(s.get_int("design.duration", d.duration_months));
  if (s.has("design.threshold")) d.threshold = s.get_double("design.threshold", 0.8);
  if (s.has("design.policies")) d.policies = parse_policies(s.get("design.policies", ""));
  d.validate();
  return d;
}

}  // namespace parlab
