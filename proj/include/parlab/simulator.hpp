#pragma once

// Synthetic benefit-process logs. Each customer receives benefits for a
// run of income months. For income month t the customer starts the income
// form in t; the form is sent, checked and paid in t+1; a mistake on the
// form (a reclamation) is detected `detection_lag` months after t.
//
// Reclamations are Bernoulli per income month with a logistic ground-truth
// model. A monthly policy may email customers at the end of a month; the
// email's funnel outcome (opened, clicked) scales the odds of a reclamation
// for that same income month, whose form is filled in right after.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "parlab/core.hpp"
#include "parlab/csv.hpp"
#include "parlab/event_log.hpp"

namespace parlab {

struct WeightedValue {
  std::string value;
  double weight = 1.0;
};

struct ActivityNames {
  std::string initialize = "Initialize the Income Form";
  std::string send = "Send Income Form";
  std::string declare_income = "Declare Income";  // empty: not logged
  std::string check = "Check Income Form";
  std::string pay = "Pay Benefits";
  std::string detect = kDefaultReclamationActivity;
  std::string intervention = "Send Support Email";
};

struct SimConfig {
  std::size_t population = 1000;
  int horizon_months = 12;
  YearMonth start = YearMonth::of(2016, 8);
  /// Entry months are uniform over [0, entry_spread_months].
  int entry_spread_months = 0;
  double base_rate = 0.04;
  double open_rate = 0.602;
  double click_rate_given_open = 0.0723;
  std::uint64_t seed = 1;
  long long id_offset = 100000;

  // population
  int age_min = 18;
  int age_max = 66;
  double four_weekly_share = 0.3;
  double earner_share_fulltime = 0.2;
  double earner_share_parttime = 0.6;
  double earner_share_irregular = 0.5;
  double earner_income_prob_low = 0.6;
  double earner_income_prob_high = 0.95;
  double nonearner_income_prob_high = 0.1;
  double exit_prob_low = 0.02;
  double exit_prob_high = 0.08;
  double open_propensity_low = 0.4;
  double open_propensity_high = 0.8;
  double click_propensity_scale = 0.03;
  /// Click propensity grows by this factor times has_income_prob.
  double click_income_coupling = 2.0;
  /// Click propensity grows by this factor once a reclamation was detected.
  double click_prior_coupling = 2.0;

  std::vector<WeightedValue> genders{{"female", 0.48}, {"male", 0.52}};
  std::vector<WeightedValue> marital_statuses{{"single", 0.4}, {"married", 0.4}, {"divorced", 0.15}, {"widowed", 0.05}};
  std::vector<WeightedValue> max_benefit_months{{"3", 0.1}, {"6", 0.2}, {"12", 0.3}, {"18", 0.2}, {"24", 0.2}};
  std::vector<WeightedValue> sectors{{"retail", 0.2},       {"industry", 0.2},   {"care", 0.15},
                                     {"construction", 0.15}, {"government", 0.1}, {"services", 0.2}};
  std::vector<WeightedValue> contract_types{{"permanent", 0.5}, {"temporary", 0.35}, {"on_call", 0.15}};
  std::vector<WeightedValue> working_patterns{{"fulltime", 0.6}, {"parttime", 0.3}, {"irregular", 0.1}};
  std::vector<WeightedValue> dismissal_reasons{
      {"reorganization", 0.35}, {"contract_end", 0.4}, {"bankruptcy", 0.1}, {"personal", 0.15}};

  ActivityNames activities;
  bool log_interventions = false;

  void validate() const {
    if (population < 1) throw Error("population size must be >= 1");
    if (horizon_months < 1) throw Error("horizon must be >= 1 month");
    if (entry_spread_months < 0) throw Error("entry spread must be >= 0");
    if (!(base_rate > 0.0 && base_rate < 1.0)) throw Error("target base rate must be in (0, 1)");
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string(what) + " must be in [0, 1]");
    };
    prob(open_rate, "open_rate");
    prob(click_rate_given_open, "click_rate_given_open");
    prob(four_weekly_share, "four_weekly_share");
    prob(earner_share_fulltime, "earner_share_fulltime");
    prob(earner_share_parttime, "earner_share_parttime");
    prob(earner_share_irregular, "earner_share_irregular");
    if (age_min < 16 || age_max < age_min) throw Error("age range must satisfy 16 <= age_min <= age_max");
  }
};

struct GroundTruthModel {
  double b0 = -3.5;
  double b_income = 1.6;
  double b_prev_reclamation = 1.0;
  double b_double_payment_month = 1.2;
  double b_age = 0.2;  // per decade above 40
  double theta_open = 1.0;
  double theta_click = 1.0;
  int detection_lag = 2;

  void validate() const {
    if (!(theta_open > 0.0) || !(theta_click > 0.0)) throw Error("intervention odds multipliers must be > 0");
    if (detection_lag < 1) throw Error("detection_lag must be >= 1");
  }
};

struct CustomerProfile {
  std::string case_id;
  CaseAttributes attributes;
  double has_income_prob = 0.0;
  bool four_weekly_pay = false;
  int double_pay_month = 1;  // calendar month with two 4-weekly payments
  double open_propensity = 0.5;
  double click_propensity_base = 0.05;
  double monthly_exit_prob = 0.05;
  int entry_month = 0;  // offset from the simulation start

  /// Customers who usually earn income next to their benefits.
  bool earns_income() const { return has_income_prob >= 0.5; }
};

namespace detail {

inline const std::string& draw_category(Rng& rng, const std::vector<WeightedValue>& dist) {
  if (dist.empty()) throw Error("empty categorical distribution");
  double total = 0.0;
  for (const auto& v : dist) total += v.weight;
  double u = uniform01(rng) * total;
  for (const auto& v : dist) {
    if (u < v.weight) return v.value;
    u -= v.weight;
  }
  return dist.back().value;
}

inline double earner_share(const SimConfig& c, const std::string& pattern) {
  if (pattern == "parttime") return c.earner_share_parttime;
  if (pattern == "irregular") return c.earner_share_irregular;
  return c.earner_share_fulltime;
}

}  // namespace detail

/// Mean of has_income_prob implied by the configured distributions.
inline double expected_income_prob(const SimConfig& c) {
  double total = 0.0, mean = 0.0;
  for (const auto& wp : c.working_patterns) total += wp.weight;
  const double earner_mean = (c.earner_income_prob_low + c.earner_income_prob_high) / 2.0;
  const double non_mean = c.nonearner_income_prob_high / 2.0;
  for (const auto& wp : c.working_patterns) {
    const double s = detail::earner_share(c, wp.value);
    mean += wp.weight / total * (s * earner_mean + (1.0 - s) * non_mean);
  }
  return mean;
}

/// Deterministic in (config, seed); customer i draws from its own stream,
/// so a profile does not depend on the population size.
inline std::vector<CustomerProfile> generate_population(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<CustomerProfile> pop;
  pop.reserve(config.population);
  for (std::size_t i = 0; i < config.population; ++i) {
    Rng rng(derive_seed(seed, "profile", i));
    CustomerProfile p;
    p.case_id = std::to_string(config.id_offset + static_cast<long long>(i));
    auto& a = p.attributes;
    a.age = config.age_min + static_cast<int>(below(rng, static_cast<std::uint64_t>(config.age_max - config.age_min + 1)));
    a.gender = detail::draw_category(rng, config.genders);
    a.marital_status = detail::draw_category(rng, config.marital_statuses);
    a.max_benefit_months = static_cast<int>(csv::to_int(detail::draw_category(rng, config.max_benefit_months),
                                                        "max_benefit_months"));
    a.sector = detail::draw_category(rng, config.sectors);
    a.contract_type = detail::draw_category(rng, config.contract_types);
    a.working_pattern = detail::draw_category(rng, config.working_patterns);
    a.dismissal_reason = detail::draw_category(rng, config.dismissal_reasons);

    const bool earner = bernoulli(rng, detail::earner_share(config, a.working_pattern));
    p.has_income_prob = earner ? uniform(rng, config.earner_income_prob_low, config.earner_income_prob_high)
                               : uniform(rng, 0.0, config.nonearner_income_prob_high);
    p.four_weekly_pay = bernoulli(rng, config.four_weekly_share);
    p.double_pay_month = 1 + static_cast<int>(below(rng, 12));
    p.open_propensity = uniform(rng, config.open_propensity_low, config.open_propensity_high);
    p.click_propensity_base = std::clamp(
        config.click_propensity_scale * uniform(rng, 0.5, 1.5) * (1.0 + config.click_income_coupling * p.has_income_prob),
        0.0, 1.0);
    p.monthly_exit_prob = uniform(rng, config.exit_prob_low, config.exit_prob_high);
    p.entry_month = static_cast<int>(below(rng, static_cast<std::uint64_t>(config.entry_spread_months) + 1));
    pop.push_back(std::move(p));
  }
  return pop;
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

inline double age_decades_over_40(int age) { return std::max(0, age - 40) / 10.0; }

inline bool is_double_payment_month(const CustomerProfile& p, YearMonth ym) {
  return p.four_weekly_pay && ym.month() == p.double_pay_month;
}

/// Reclamation log-odds for one income month, before any intervention.
inline double reclamation_logit(const GroundTruthModel& m, const CustomerProfile& p, bool income, bool prior_detected,
                                bool double_month) {
  return m.b0 + m.b_income * (income ? 1.0 : 0.0) + m.b_prev_reclamation * (prior_detected ? 1.0 : 0.0) +
         m.b_double_payment_month * (double_month ? 1.0 : 0.0) + m.b_age * age_decades_over_40(p.attributes.age);
}

inline double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

/// Expected reclamations per active income month over the population with
/// no intervention. Exact for the simulator's dynamics: income draws are
/// independent across months, exits are independent of reclamations, and
/// the prior-reclamation flag switches on `detection_lag` months after the
/// first reclamation.
inline double expected_monthly_rate(const GroundTruthModel& m, std::span<const CustomerProfile> population,
                                    const SimConfig& config) {
  double draws = 0.0, months = 0.0;
  for (const auto& p : population) {
    const double h = p.has_income_prob;
    std::vector<double> p0;  // reclamation probability without a prior, per income month
    double survive = 1.0;
    for (int k = 0;; ++k) {
      const int t = p.entry_month + k;
      if (t >= config.horizon_months || k >= p.attributes.max_benefit_months) break;
      const bool dbl = is_double_payment_month(p, config.start + t);
      auto prob = [&](bool prior) {
        return h * logistic(reclamation_logit(m, p, true, prior, dbl)) +
               (1.0 - h) * logistic(reclamation_logit(m, p, false, prior, dbl));
      };
      p0.push_back(prob(false));
      double none = 1.0;  // P(no reclamation in income months 0..k-lag)
      for (int j = 0; j <= k - m.detection_lag; ++j) none *= 1.0 - p0[static_cast<std::size_t>(j)];
      const double expected = none * p0.back() + (1.0 - none) * prob(true);
      draws += survive * expected;
      months += survive;
      survive *= 1.0 - p.monthly_exit_prob;
    }
  }
  if (months <= 0) throw Error("population has no active income months within the horizon");
  return draws / months;
}

/// Bisection on the intercept so the expected monthly rate hits the target
/// within 1e-6.
inline GroundTruthModel calibrate_intercept(GroundTruthModel model, std::span<const CustomerProfile> population,
                                            const SimConfig& config, double target_rate) {
  if (population.empty()) throw Error("cannot calibrate on an empty population");
  double lo = -20.0, hi = 20.0;
  auto rate_at = [&](double b0) {
    model.b0 = b0;
    return expected_monthly_rate(model, population, config);
  };
  if (rate_at(lo) > target_rate || rate_at(hi) < target_rate) {
    throw Error("target rate unreachable with intercept in [-20, 20]");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = (lo + hi) / 2.0;
    const double r = rate_at(mid);
    if (std::abs(r - target_rate) < 1e-9) {
      lo = hi = mid;
      break;
    }
    (r < target_rate ? lo : hi) = mid;
  }
  model.b0 = (lo + hi) / 2.0;
  return model;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Email channel parameters for one intervention arm.
struct InterventionArm {
  std::string name = "email";
  double open_rate = 0.602;
  double click_rate_given_open = 0.0723;
  double theta_open = 1.0;
  double theta_click = 1.0;
};

inline InterventionArm default_arm(const SimConfig& c, const GroundTruthModel& m) {
  return {"email", c.open_rate, c.click_rate_given_open, m.theta_open, m.theta_click};
}

struct EmailOrder {
  std::size_t customer = 0;  // index into the population
  std::size_t arm = 0;
};

/// What a policy sees at the end of a simulated month.
struct MonthState {
  int step = 0;  // months since the simulation start
  YearMonth month;
  Date send_date;
  std::span<const CustomerProfile> population;
  std::span<const Trace> traces;        // events up to the end of `month`
  std::span<const std::uint8_t> active;  // 1 when `month` is an income month of the customer
};

using Policy = std::function<std::vector<EmailOrder>(const MonthState&)>;

inline Policy no_intervention() {
  return [](const MonthState&) { return std::vector<EmailOrder>{}; };
}

inline Policy email_everyone() {
  return [](const MonthState& s) {
    std::vector<EmailOrder> orders;
    for (std::size_t i = 0; i < s.active.size(); ++i) {
      if (s.active[i]) orders.push_back({i, 0});
    }
    return orders;
  };
}

struct OutcomeRecord {
  std::string case_id;
  YearMonth month;  // income month
  bool emailed = false;
  bool opened = false;
  bool clicked = false;
  bool reclamation_drawn = false;
  std::optional<YearMonth> reclamation_detected_month;
  bool prior_reclamation = false;  // a reclamation was detected by the end of `month`
  std::size_t arm = 0;

  bool operator==(const OutcomeRecord&) const = default;
};

struct SimResult {
  EventLog log;
  std::vector<OutcomeRecord> outcomes;  // ordered by month, then population index
};

namespace detail {

struct CustomerState {
  bool started = false;
  bool active = false;
  bool done = false;
  bool prior_detected = false;
  int months_received = 0;
  bool pending_forms = false;
  bool pending_income = false;
};

}  // namespace detail

/// Runs the process month by month. Pure in its arguments: every customer
/// owns a "life" stream (income, reclamation and exit draws, consumed in a
/// fixed order every income month) and a separate "funnel" stream, so the
/// policy changes reclamation outcomes only through the intervention odds.
inline SimResult simulate(const SimConfig& config, const GroundTruthModel& model,
                          std::span<const CustomerProfile> population, const Policy& policy,
                          std::span<const InterventionArm> arms = {}) {
  config.validate();
  model.validate();
  std::vector<InterventionArm> arm_list(arms.begin(), arms.end());
  if (arm_list.empty()) arm_list.push_back(default_arm(config, model));

  const std::size_t n = population.size();
  const int horizon = config.horizon_months;
  const int lag = model.detection_lag;
  const auto& act = config.activities;

  std::vector<Trace> traces(n);
  std::vector<detail::CustomerState> state(n);
  std::vector<Rng> life, funnel;
  life.reserve(n);
  funnel.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    traces[i].case_id = population[i].case_id;
    traces[i].attributes = population[i].attributes;
    life.emplace_back(derive_seed(config.seed, "life", i));
    funnel.emplace_back(derive_seed(config.seed, "funnel", i));
  }
  std::vector<std::vector<std::size_t>> detections(static_cast<std::size_t>(horizon + lag + 1));
  std::vector<std::size_t> record_of(n, 0);
  std::vector<std::uint8_t> active(n, 0);
  SimResult result;

  const int last_step = horizon - 1 + lag;
  for (int t = 0; t <= last_step; ++t) {
    const YearMonth ym = config.start + t;
    auto emit = [&](std::size_t i, int day, const std::string& activity) {
      traces[i].events.push_back({population[i].case_id, Date{ym.year(), ym.month(), day}, activity});
    };
    std::vector<std::uint8_t> detected_now(n, 0);
    for (auto i : detections[static_cast<std::size_t>(t)]) detected_now[i] = 1;

    for (std::size_t i = 0; i < n; ++i) {
      auto& s = state[i];
      // forms for the previous income month, in date order with detections
      if (s.pending_forms) {
        emit(i, 3, act.send);
        if (s.pending_income && !act.declare_income.empty()) emit(i, 3, act.declare_income);
        emit(i, 8, act.check);
      }
      if (detected_now[i]) {
        emit(i, 12, act.detect);
        s.prior_detected = true;
      }
      if (s.pending_forms) emit(i, 15, act.pay);
      s.pending_forms = false;

      active[i] = 0;
      if (t >= horizon || s.done) continue;
      if (!s.started && t == population[i].entry_month) s.started = s.active = true;
      if (!s.active) continue;
      active[i] = 1;
      emit(i, 25, act.initialize);
    }
    if (t >= horizon) continue;

    // end of month: intervention, funnel, reclamation draws
    const Date send_date = intervention_date(ym);
    MonthState ms{t, ym, send_date, population, traces, active};
    auto orders = policy ? policy(ms) : std::vector<EmailOrder>{};
    std::vector<int> order_arm(n, -1);
    for (const auto& o : orders) {
      if (o.customer >= n) throw Error("policy ordered an email for an unknown customer");
      if (o.arm >= arm_list.size()) throw Error("policy used an unknown intervention arm");
      if (active[o.customer]) order_arm[o.customer] = static_cast<int>(o.arm);
    }
    std::vector<std::uint8_t> opened(n, 0), clicked(n, 0);
    for (std::size_t a = 0; a < arm_list.size(); ++a) {
      // normalise propensities within the cohort so the arm's rates hold on average
      std::vector<std::size_t> cohort;
      for (std::size_t i = 0; i < n; ++i) {
        if (order_arm[i] == static_cast<int>(a)) cohort.push_back(i);
      }
      if (cohort.empty()) continue;
      double open_mean = 0.0;
      for (auto i : cohort) open_mean += population[i].open_propensity;
      open_mean /= static_cast<double>(cohort.size());
      std::vector<double> u_click(n, 0.0);
      std::vector<std::size_t> openers;
      for (auto i : cohort) {
        const double u_open = uniform01(funnel[i]);
        u_click[i] = uniform01(funnel[i]);
        const double p_open = open_mean > 0
                                  ? std::clamp(arm_list[a].open_rate * population[i].open_propensity / open_mean, 0.0, 1.0)
                                  : arm_list[a].open_rate;
        if (u_open < p_open) {
          opened[i] = 1;
          openers.push_back(i);
        }
        if (config.log_interventions) {
          traces[i].events.push_back({population[i].case_id, send_date, act.intervention});
        }
      }
      auto click_weight = [&](std::size_t i) {
        return population[i].click_propensity_base * (1.0 + config.click_prior_coupling * (state[i].prior_detected ? 1.0 : 0.0));
      };
      double click_mean = 0.0;
      for (auto i : openers) click_mean += click_weight(i);
      if (!openers.empty()) click_mean /= static_cast<double>(openers.size());
      for (auto i : openers) {
        const double p_click = click_mean > 0
                                   ? std::clamp(arm_list[a].click_rate_given_open * click_weight(i) / click_mean, 0.0, 1.0)
                                   : arm_list[a].click_rate_given_open;
        if (u_click[i] < p_click) clicked[i] = 1;
      }
    }

    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      auto& s = state[i];
      const auto& p = population[i];
      const double u_income = uniform01(life[i]);
      const double u_reclaim = uniform01(life[i]);
      const double u_exit = uniform01(life[i]);
      const bool income = u_income < p.has_income_prob;
      double logit = reclamation_logit(model, p, income, s.prior_detected, is_double_payment_month(p, ym));
      if (order_arm[i] >= 0) {
        const auto& arm = arm_list[static_cast<std::size_t>(order_arm[i])];
        if (opened[i]) logit += std::log(arm.theta_open);
        if (clicked[i]) logit += std::log(arm.theta_click);
      }
      const bool drawn = u_reclaim < logistic(logit);
      OutcomeRecord rec;
      rec.case_id = p.case_id;
      rec.month = ym;
      rec.emailed = order_arm[i] >= 0;
      rec.opened = opened[i] != 0;
      rec.clicked = clicked[i] != 0;
      rec.reclamation_drawn = drawn;
      rec.prior_reclamation = s.prior_detected;
      rec.arm = order_arm[i] >= 0 ? static_cast<std::size_t>(order_arm[i]) : 0;
      if (drawn) {
        rec.reclamation_detected_month = ym + lag;
        detections[static_cast<std::size_t>(t + lag)].push_back(i);
      }
      result.outcomes.push_back(std::move(rec));

      s.pending_forms = true;
      s.pending_income = income;
      ++s.months_received;
      if (s.months_received >= p.attributes.max_benefit_months || u_exit < p.monthly_exit_prob) {
        s.active = false;
        s.done = true;
      }
    }
  }
  std::vector<Trace> non_empty;
  non_empty.reserve(n);
  for (auto& tr : traces) {
    if (!tr.events.empty()) non_empty.push_back(std::move(tr));
  }
  result.log = EventLog(std::move(non_empty), act.detect);
  return result;
}

/// Realized reclamations per income month.
inline double realized_monthly_rate(std::span<const OutcomeRecord> outcomes) {
  if (outcomes.empty()) return 0.0;
  std::size_t drawn = 0;
  for (const auto& o : outcomes) drawn += o.reclamation_drawn ? 1 : 0;
  return static_cast<double>(drawn) / static_cast<double>(outcomes.size());
}

inline void write_outcomes_csv(std::ostream& out, std::span<const OutcomeRecord> outcomes) {
  csv::write_row(out, {"case_id", "month", "emailed", "opened", "clicked", "reclamation_drawn",
                       "reclamation_detected_month"});
  for (const auto& o : outcomes) {
    csv::write_row(out, {o.case_id, o.month.str(), o.emailed ? "1" : "0", o.opened ? "1" : "0",
                         o.clicked ? "1" : "0", o.reclamation_drawn ? "1" : "0",
                         o.reclamation_detected_month ? o.reclamation_detected_month->str() : ""});
  }
}

inline void write_population_csv(std::ostream& out, std::span<const CustomerProfile> population) {
  csv::write_row(out, {"case_id", "age", "working_pattern", "has_income_prob", "four_weekly_pay", "double_pay_month",
                       "open_propensity", "click_propensity_base", "monthly_exit_prob", "entry_month"});
  for (const auto& p : population) {
    csv::write_row(out, {p.case_id, std::to_string(p.attributes.age), p.attributes.working_pattern,
                         csv::num(p.has_income_prob), p.four_weekly_pay ? "1" : "0", std::to_string(p.double_pay_month),
                         csv::num(p.open_propensity), csv::num(p.click_propensity_base),
                         csv::num(p.monthly_exit_prob), std::to_string(p.entry_month)});
  }
}

}  // namespace parlab
