#pragma once

// A/B harness on the simulator and the analyses run on its records.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "parlab/core.hpp"
#include "parlab/csv.hpp"
#include "parlab/event_log.hpp"
#include "parlab/parallel.hpp"
#include "parlab/predictor.hpp"
#include "parlab/simulator.hpp"
#include "parlab/stats.hpp"

namespace parlab {

struct PolicySpec {
  std::string name = "email";
  bool sends_email = true;
  std::optional<double> theta_open;  // unset: the ground-truth model's value
  std::optional<double> theta_click;
};

/// "none" flags but never emails; "email" sends the support email.
inline PolicySpec parse_policy(const std::string& name) {
  if (name == "none") return {"none", false, {}, {}};
  if (name == "email") return {"email", true, {}, {}};
  throw Error("unknown policy '" + name + "' (expected none or email)");
}

inline std::vector<PolicySpec> parse_policies(const std::string& list) {
  std::vector<PolicySpec> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(parse_policy(item));
  }
  if (out.empty()) throw Error("policy list is empty");
  return out;
}

struct ExperimentDesign {
  double experimental_fraction = 35812.0 / 86850.0;
  std::uint64_t seed = 1;
  int warmup_months = 12;  // simulated history before the first intervention month
  int duration_months = 3;
  std::optional<double> threshold;  // unset: the bundle's threshold
  std::vector<PolicySpec> policies{PolicySpec{}};

  void validate() const {
    if (!(experimental_fraction > 0.0 && experimental_fraction < 1.0)) {
      throw Error("experimental fraction must be in (0, 1)");
    }
    if (duration_months < 1) throw Error("experiment duration must be >= 1 month");
    if (warmup_months < 0) throw Error("warm-up must be >= 0 months");
    if (threshold && !(*threshold >= 0.0 && *threshold <= 1.0)) throw Error("threshold must be in [0, 1]");
    if (policies.empty()) throw Error("experiment needs at least one policy");
    std::set<std::string> names;
    for (const auto& p : policies) {
      if (p.name == "control" || !names.insert(p.name).second) {
        throw Error("policy names must be unique and not 'control'");
      }
    }
  }
};

struct GroupAssignment {
  std::vector<std::string> control;       // sorted
  std::vector<std::string> experimental;  // sorted
};

/// Random split; the experimental group has round(fraction * n) cases.
inline GroupAssignment assign_groups(std::span<const std::string> case_ids, double fraction, std::uint64_t seed) {
  if (case_ids.size() < 2) throw Error("group assignment needs at least 2 cases");
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("experimental fraction must be in (0, 1)");
  std::vector<std::string> ids(case_ids.begin(), case_ids.end());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw Error("duplicate case id in assignment");
  Rng rng(derive_seed(seed, "assignment"));
  shuffle(ids.begin(), ids.end(), rng);
  const auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  GroupAssignment out;
  out.experimental.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(m));
  out.control.assign(ids.begin() + static_cast<std::ptrdiff_t>(m), ids.end());
  std::sort(out.experimental.begin(), out.experimental.end());
  std::sort(out.control.begin(), out.control.end());
  return out;
}

inline GroupAssignment assign_groups(std::span<const std::string> case_ids, const ExperimentDesign& design) {
  return assign_groups(case_ids, design.experimental_fraction, design.seed);
}

/// Deals the experimental group over `k` policies in random order.
inline std::vector<std::vector<std::string>> split_policies(std::span<const std::string> experimental, std::size_t k,
                                                            std::uint64_t seed) {
  if (k == 0) throw Error("need at least one policy");
  std::vector<std::string> ids(experimental.begin(), experimental.end());
  Rng rng(derive_seed(seed, "policies"));
  shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::vector<std::string>> out(k);
  for (std::size_t i = 0; i < ids.size(); ++i) out[i % k].push_back(ids[i]);
  for (auto& g : out) std::sort(g.begin(), g.end());
  return out;
}

enum class FunnelStage { not_flagged, flagged_not_opened, opened_not_clicked, clicked };

inline const char* to_string(FunnelStage s) {
  switch (s) {
    case FunnelStage::not_flagged: return "not_flagged";
    case FunnelStage::flagged_not_opened: return "flagged_not_opened";
    case FunnelStage::opened_not_clicked: return "opened_not_clicked";
    case FunnelStage::clicked: return "clicked";
  }
  return "?";
}

inline constexpr FunnelStage kFunnelStages[] = {FunnelStage::not_flagged, FunnelStage::flagged_not_opened,
                                                FunnelStage::opened_not_clicked, FunnelStage::clicked};

/// One experimental case-month in the intervention window. The outcome is
/// the reclamation on the income form completed in the following month.
struct FunnelRecord {
  std::string case_id;
  YearMonth month;
  std::string group;
  FunnelStage stage = FunnelStage::not_flagged;
  bool outcome = false;
  double score = 0.0;
  bool prior_reclamation = false;

  bool flagged() const { return stage != FunnelStage::not_flagged; }
  bool operator==(const FunnelRecord&) const = default;
};

/// Counts are case-months within the intervention window.
struct GroupStats {
  std::string name;
  std::size_t n = 0;
  std::size_t count = 0;
  double rate = 0.0;
  stats::Interval ci;
};

inline GroupStats make_group_stats(std::string name, std::size_t count, std::size_t n) {
  if (count > n) throw Error("group count exceeds group size");
  GroupStats g{std::move(name), n, count, 0.0, {}};
  if (n > 0) {
    g.rate = static_cast<double>(count) / static_cast<double>(n);
    g.ci = stats::wald_interval(count, n);
  }
  return g;
}

struct AbResult {
  std::vector<FunnelRecord> records;  // experimental case-months, by month then case id
  GroupStats control;
  std::vector<GroupStats> policies;  // in design order
  std::vector<OutcomeRecord> outcomes;
  EventLog log;
  std::vector<Date> intervention_dates;
  std::vector<YearMonth> window;
  std::map<std::string, std::string> group_of;  // case id -> "control" or policy name
};

/// Simulates warm-up plus intervention months. In each intervention month
/// the running experimental cases are scored, cases above the threshold are
/// flagged and, for emailing policies, sent the email.
inline AbResult run_ab(SimConfig config, const GroundTruthModel& model, std::span<const CustomerProfile> population,
                       const PredictorBundle& bundle, const ExperimentDesign& design) {
  design.validate();
  config.horizon_months = design.warmup_months + design.duration_months;
  const double threshold = design.threshold.value_or(bundle.threshold);

  std::vector<std::string> ids;
  ids.reserve(population.size());
  for (const auto& p : population) ids.push_back(p.case_id);
  const auto assignment = assign_groups(ids, design);
  const auto groups = split_policies(assignment.experimental, design.policies.size(), design.seed);

  AbResult out;
  for (const auto& id : assignment.control) out.group_of[id] = "control";
  std::unordered_map<std::string, std::size_t> policy_of;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (const auto& id : groups[g]) {
      out.group_of[id] = design.policies[g].name;
      policy_of[id] = g;
    }
  }
  std::vector<int> policy_index(population.size(), -1);
  for (std::size_t i = 0; i < population.size(); ++i) {
    if (auto it = policy_of.find(population[i].case_id); it != policy_of.end()) {
      policy_index[i] = static_cast<int>(it->second);
    }
  }

  std::vector<InterventionArm> arms;
  for (const auto& p : design.policies) {
    auto arm = default_arm(config, model);
    arm.name = p.name;
    if (p.theta_open) arm.theta_open = *p.theta_open;
    if (p.theta_click) arm.theta_click = *p.theta_click;
    arms.push_back(arm);
  }

  struct Flag {
    double score = 0.0;
    bool flagged = false;
  };
  std::map<std::pair<int, std::size_t>, Flag> flags;  // (step, customer)
  Policy policy = [&](const MonthState& s) {
    std::vector<EmailOrder> orders;
    if (s.step < design.warmup_months) return orders;
    out.intervention_dates.push_back(s.send_date);
    out.window.push_back(s.month);
    std::map<std::string, double> scores;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < s.active.size(); ++i) {
      if (!s.active[i] || policy_index[i] < 0) continue;
      scores[s.population[i].case_id] = score_case(bundle, s.traces[i], s.month);
      members.push_back(i);
    }
    const auto risky = flag_risky(scores, threshold);
    for (auto i : members) {
      const auto& id = s.population[i].case_id;
      const bool flagged = risky.count(id) > 0;
      flags[{s.step, i}] = {scores.at(id), flagged};
      const auto g = static_cast<std::size_t>(policy_index[i]);
      if (flagged && design.policies[g].sends_email) orders.push_back({i, g});
    }
    return orders;
  };

  auto sim = simulate(config, model, population, policy, arms);
  out.log = std::move(sim.log);
  out.outcomes = std::move(sim.outcomes);

  std::vector<std::size_t> policy_n(design.policies.size(), 0), policy_count(design.policies.size(), 0);
  std::size_t control_n = 0, control_count = 0;
  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < population.size(); ++i) index_of[population[i].case_id] = i;
  for (const auto& o : out.outcomes) {
    const int step = o.month - config.start;
    if (step < design.warmup_months) continue;
    const std::size_t i = index_of.at(o.case_id);
    if (policy_index[i] < 0) {
      ++control_n;
      control_count += o.reclamation_drawn ? 1 : 0;
      continue;
    }
    const auto g = static_cast<std::size_t>(policy_index[i]);
    ++policy_n[g];
    policy_count[g] += o.reclamation_drawn ? 1 : 0;
    const auto& f = flags.at({step, i});
    FunnelRecord r;
    r.case_id = o.case_id;
    r.month = o.month;
    r.group = design.policies[g].name;
    r.outcome = o.reclamation_drawn;
    r.score = f.score;
    r.prior_reclamation = o.prior_reclamation;
    if (!f.flagged) {
      r.stage = FunnelStage::not_flagged;
    } else if (o.clicked) {
      r.stage = FunnelStage::clicked;
    } else if (o.opened) {
      r.stage = FunnelStage::opened_not_clicked;
    } else {
      r.stage = FunnelStage::flagged_not_opened;
    }
    out.records.push_back(std::move(r));
  }
  out.control = make_group_stats("control", control_count, control_n);
  for (std::size_t g = 0; g < design.policies.size(); ++g) {
    out.policies.push_back(make_group_stats(design.policies[g].name, policy_count[g], policy_n[g]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

struct RateComparison {
  double difference = 0.0;  // experimental - control
  double z = 0.0;
  double p_value = 1.0;
  stats::Interval control_ci;
  stats::Interval experimental_ci;
  bool small_count_warning = false;

  bool significant(double alpha = 0.05) const { return p_value < alpha; }
};

inline RateComparison analyze_rates(const GroupStats& control, const GroupStats& experimental) {
  if (control.n == 0 || experimental.n == 0) throw Error("rate comparison: empty group");
  const auto t = stats::two_proportion_z(control.count, control.n, experimental.count, experimental.n);
  RateComparison r;
  r.difference = t.difference;
  r.z = t.z;
  r.p_value = t.p_value;
  r.control_ci = stats::wald_interval(control.count, control.n);
  r.experimental_ci = stats::wald_interval(experimental.count, experimental.n);
  for (const auto* g : {&control, &experimental}) {
    const double n = static_cast<double>(g->n);
    if (n * g->rate < 5.0 || n * (1.0 - g->rate) < 5.0) r.small_count_warning = true;
  }
  return r;
}

struct StageSummary {
  FunnelStage stage = FunnelStage::not_flagged;
  std::size_t count = 0;
  std::size_t reclamations = 0;
  double rate = 0.0;
  double ratio_to_overall = 0.0;  // 0 when either rate is undefined
};

struct FunnelReport {
  std::size_t case_months = 0;
  std::size_t reclamations = 0;
  double overall_rate = 0.0;
  std::size_t flagged = 0;
  std::size_t opened = 0;
  std::size_t clicked = 0;
  std::vector<StageSummary> stages;  // one per FunnelStage, in funnel order

  const StageSummary& at(FunnelStage s) const { return stages[static_cast<std::size_t>(s)]; }
  double open_rate() const { return flagged ? static_cast<double>(opened) / static_cast<double>(flagged) : 0.0; }
  double click_rate_given_open() const {
    return opened ? static_cast<double>(clicked) / static_cast<double>(opened) : 0.0;
  }
  /// Reclamation rate of clickers over that of openers who did not click.
  double clicked_vs_opened_not_clicked() const {
    const double base = at(FunnelStage::opened_not_clicked).rate;
    return base > 0 ? at(FunnelStage::clicked).rate / base : 0.0;
  }
};

inline FunnelReport analyze_funnel(std::span<const FunnelRecord> records) {
  FunnelReport f;
  for (auto s : kFunnelStages) f.stages.push_back({s, 0, 0, 0.0, 0.0});
  for (const auto& r : records) {
    auto& st = f.stages[static_cast<std::size_t>(r.stage)];
    ++st.count;
    st.reclamations += r.outcome ? 1 : 0;
    ++f.case_months;
    f.reclamations += r.outcome ? 1 : 0;
  }
  f.overall_rate = f.case_months ? static_cast<double>(f.reclamations) / static_cast<double>(f.case_months) : 0.0;
  for (auto& st : f.stages) {
    if (st.count) st.rate = static_cast<double>(st.reclamations) / static_cast<double>(st.count);
    if (st.count && f.overall_rate > 0) st.ratio_to_overall = st.rate / f.overall_rate;
  }
  f.clicked = f.at(FunnelStage::clicked).count;
  f.opened = f.clicked + f.at(FunnelStage::opened_not_clicked).count;
  f.flagged = f.opened + f.at(FunnelStage::flagged_not_opened).count;
  return f;
}

struct CharacteristicGroup {
  FunnelStage stage = FunnelStage::flagged_not_opened;
  std::size_t n = 0;
  std::size_t with_income = 0;
  std::size_t with_prior_reclamation = 0;
  double income_share = 0.0;
  double prior_share = 0.0;
  double mean_age = 0.0;
};

struct CharacteristicTest {
  FunnelStage a = FunnelStage::flagged_not_opened;
  FunnelStage b = FunnelStage::clicked;
  stats::ChiSquare income;
  stats::ChiSquare prior;
  stats::WelchT age;
  bool income_significant = false;
  bool prior_significant = false;
  bool age_significant = false;
};

struct CharacteristicsTable {
  std::vector<CharacteristicGroup> groups;  // flagged stages with at least one record
  std::vector<CharacteristicTest> tests;    // pairs whose groups both have n >= 2
  std::vector<std::string> warnings;
};

/// Compares the flagged stages on income, previous reclamation and age.
inline CharacteristicsTable compare_characteristics(std::span<const FunnelRecord> records,
                                                    std::span<const CustomerProfile> profiles, double alpha = 0.05) {
  std::unordered_map<std::string, const CustomerProfile*> by_id;
  for (const auto& p : profiles) by_id[p.case_id] = &p;
  std::map<FunnelStage, std::vector<const FunnelRecord*>> members;
  for (const auto& r : records) {
    if (r.flagged()) members[r.stage].push_back(&r);
  }
  CharacteristicsTable t;
  std::map<FunnelStage, std::vector<double>> ages;
  for (const auto& [stage, rs] : members) {
    CharacteristicGroup g;
    g.stage = stage;
    g.n = rs.size();
    double age_sum = 0.0;
    for (const auto* r : rs) {
      const auto it = by_id.find(r->case_id);
      if (it == by_id.end()) throw Error("no profile for case '" + r->case_id + "'");
      g.with_income += it->second->earns_income() ? 1 : 0;
      g.with_prior_reclamation += r->prior_reclamation ? 1 : 0;
      ages[stage].push_back(it->second->attributes.age);
      age_sum += it->second->attributes.age;
    }
    g.income_share = static_cast<double>(g.with_income) / static_cast<double>(g.n);
    g.prior_share = static_cast<double>(g.with_prior_reclamation) / static_cast<double>(g.n);
    g.mean_age = age_sum / static_cast<double>(g.n);
    t.groups.push_back(g);
  }
  if (t.groups.size() < 2) throw Error("characteristics comparison needs at least 2 non-empty stage groups");
  for (const auto& g : t.groups) {
    if (g.n < 2) t.warnings.push_back(std::string("stage ") + to_string(g.stage) + " has a single member; tests suppressed");
  }
  for (std::size_t i = 0; i < t.groups.size(); ++i) {
    for (std::size_t j = i + 1; j < t.groups.size(); ++j) {
      const auto& a = t.groups[i];
      const auto& b = t.groups[j];
      if (a.n < 2 || b.n < 2) continue;
      CharacteristicTest c;
      c.a = a.stage;
      c.b = b.stage;
      c.income = stats::chi_square_2x2(a.with_income, a.n, b.with_income, b.n);
      c.prior = stats::chi_square_2x2(a.with_prior_reclamation, a.n, b.with_prior_reclamation, b.n);
      c.age = stats::welch_t(stats::summarize(ages[a.stage]), stats::summarize(ages[b.stage]));
      c.income_significant = c.income.p_value < alpha;
      c.prior_significant = c.prior.p_value < alpha;
      c.age_significant = c.age.p_value < alpha;
      t.tests.push_back(c);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Historical pre-assessment
// ---------------------------------------------------------------------------

struct PreAssessOptions {
  int outcome_offset_months = 1;
};

struct PreAssessment {
  std::string marker;
  GroupStats marked;
  GroupStats unmarked;  // case-months in calendar months where the marker occurs
  RateComparison comparison;  // marked against unmarked
  /// Mantel-Haenszel risk difference stratified on previous reclamation;
  /// nullopt when no stratum holds both kinds of case-month.
  std::optional<double> adjusted_difference;
  std::size_t censored = 0;  // case-months whose outcome month lies beyond the log
};

/// Next-month reclamation frequency after case-months with the marker
/// versus case-months of the same calendar months without it. Raw
/// differences carry any selection behind who got the marker.
inline PreAssessment pre_assess(const EventLog& log, const std::string& marker, const PreAssessOptions& options = {}) {
  if (options.outcome_offset_months < 1) throw Error("outcome offset must be >= 1 month");
  const auto& recl = log.reclamation_activity();
  bool found = false;
  std::optional<YearMonth> latest;
  for (const auto& t : log.traces()) {
    for (const auto& e : t.events) {
      found = found || e.activity == marker;
      if (!latest || e.date.year_month() > *latest) latest = e.date.year_month();
    }
  }
  if (!found) throw Error("marker activity '" + marker + "' does not occur in the log");
  const YearMonth last_month = *latest;

  struct CaseMonth {
    YearMonth month;
    bool marked, outcome, prior;
  };
  std::vector<CaseMonth> rows;
  std::set<YearMonth> marker_months;
  PreAssessment out;
  out.marker = marker;
  for (const auto& t : log.traces()) {
    if (t.events.empty()) continue;
    std::set<YearMonth> marked, recl_months;
    for (const auto& e : t.events) {
      if (e.activity == marker) marked.insert(e.date.year_month());
      if (e.activity == recl) recl_months.insert(e.date.year_month());
    }
    marker_months.insert(marked.begin(), marked.end());
    const YearMonth first = t.events.front().date.year_month(), last = t.events.back().date.year_month();
    for (YearMonth c = first; c <= last; c = c + 1) {
      if (c + options.outcome_offset_months > last_month) {
        ++out.censored;
        continue;
      }
      const bool prior = !recl_months.empty() && *recl_months.begin() <= c;
      rows.push_back({c, marked.count(c) > 0, recl_months.count(c + options.outcome_offset_months) > 0, prior});
    }
  }
  std::size_t mn = 0, mc = 0, un = 0, uc = 0;
  // strata [prior][marked] -> (n, events)
  std::size_t sn[2][2] = {}, se[2][2] = {};
  for (const auto& r : rows) {
    if (!marker_months.count(r.month)) continue;
    (r.marked ? mn : un) += 1;
    (r.marked ? mc : uc) += r.outcome ? 1 : 0;
    sn[r.prior][r.marked] += 1;
    se[r.prior][r.marked] += r.outcome ? 1 : 0;
  }
  if (mn == 0) throw Error("marker activity '" + marker + "' has no case-month with an observable outcome");
  if (un == 0) throw Error("no unmarked case-months to compare against");
  out.marked = make_group_stats("marked", mc, mn);
  out.unmarked = make_group_stats("unmarked", uc, un);
  out.comparison = analyze_rates(out.unmarked, out.marked);
  double num = 0.0, den = 0.0;
  for (int p = 0; p < 2; ++p) {
    const double n1 = static_cast<double>(sn[p][1]), n0 = static_cast<double>(sn[p][0]);
    if (n1 == 0 || n0 == 0) continue;
    const double w = n1 * n0 / (n1 + n0);
    num += w * (static_cast<double>(se[p][1]) / n1 - static_cast<double>(se[p][0]) / n0);
    den += w;
  }
  if (den > 0) out.adjusted_difference = num / den;
  return out;
}

// ---------------------------------------------------------------------------
// Replications and export
// ---------------------------------------------------------------------------

struct ExperimentAnalysis {
  std::vector<RateComparison> comparisons;  // one per policy against control
  FunnelReport funnel;                      // all experimental records
  std::vector<FunnelReport> policy_funnels;
  std::optional<CharacteristicsTable> characteristics;
};

inline ExperimentAnalysis analyze_experiment(const AbResult& r, const ExperimentDesign& design,
                                             std::span<const CustomerProfile> profiles) {
  ExperimentAnalysis a;
  for (const auto& g : r.policies) {
    if (g.n == 0 || r.control.n == 0) throw Error("group '" + g.name + "' has no case-months in the window");
    a.comparisons.push_back(analyze_rates(r.control, g));
  }
  a.funnel = analyze_funnel(r.records);
  for (const auto& p : design.policies) {
    std::vector<FunnelRecord> mine;
    for (const auto& rec : r.records) {
      if (rec.group == p.name) mine.push_back(rec);
    }
    a.policy_funnels.push_back(analyze_funnel(mine));
  }
  std::size_t nonempty = 0;
  for (auto s : {FunnelStage::flagged_not_opened, FunnelStage::opened_not_clicked, FunnelStage::clicked}) {
    nonempty += a.funnel.at(s).count > 0 ? 1 : 0;
  }
  if (nonempty >= 2) a.characteristics = compare_characteristics(r.records, profiles);
  return a;
}

struct ReplicationResult {
  std::uint64_t seed = 0;
  std::vector<RateComparison> comparisons;
};

/// Independent replications on a fixed population; replication r uses the
/// sub-seed ("replication", r) for both the simulation and the assignment.
inline std::vector<ReplicationResult> run_replications(const SimConfig& config, const GroundTruthModel& model,
                                                       std::span<const CustomerProfile> population,
                                                       const PredictorBundle& bundle, const ExperimentDesign& design,
                                                       std::size_t replications, std::uint64_t root_seed,
                                                       unsigned threads = 1) {
  std::vector<ReplicationResult> out(replications);
  parallel_for(replications, threads, [&](std::size_t r) {
    const auto seed = derive_seed(root_seed, "replication", r);
    auto c = config;
    c.seed = seed;
    auto d = design;
    d.seed = seed;
    const auto ab = run_ab(c, model, population, bundle, d);
    out[r].seed = seed;
    for (const auto& g : ab.policies) out[r].comparisons.push_back(analyze_rates(ab.control, g));
  });
  return out;
}

inline void write_groups_csv(std::ostream& out, const AbResult& r) {
  csv::write_row(out, {"group", "n", "reclamations", "rate", "ci_low", "ci_high"});
  std::vector<const GroupStats*> all{&r.control};
  for (const auto& g : r.policies) all.push_back(&g);
  for (const auto* g : all) {
    csv::write_row(out, {g->name, std::to_string(g->n), std::to_string(g->count), csv::num(g->rate),
                         csv::num(g->ci.low), csv::num(g->ci.high)});
  }
}

inline void write_funnel_csv(std::ostream& out, const ExperimentDesign& design, const ExperimentAnalysis& a) {
  csv::write_row(out, {"group", "stage", "case_months", "reclamations", "rate", "ratio_to_overall"});
  auto rows = [&](const std::string& group, const FunnelReport& f) {
    for (const auto& s : f.stages) {
      csv::write_row(out, {group, to_string(s.stage), std::to_string(s.count), std::to_string(s.reclamations),
                           csv::num(s.rate), csv::num(s.ratio_to_overall)});
    }
  };
  rows("experimental", a.funnel);
  if (design.policies.size() > 1) {
    for (std::size_t i = 0; i < design.policies.size(); ++i) rows(design.policies[i].name, a.policy_funnels[i]);
  }
}

inline void write_funnel_records_csv(std::ostream& out, std::span<const FunnelRecord> records) {
  csv::write_row(out, {"case_id", "month", "group", "stage", "score", "prior_reclamation", "outcome"});
  for (const auto& r : records) {
    csv::write_row(out, {r.case_id, r.month.str(), r.group, to_string(r.stage), csv::num(r.score),
                         r.prior_reclamation ? "1" : "0", r.outcome ? "1" : "0"});
  }
}

inline nlohmann::json to_json(const GroupStats& g) {
  return {{"name", g.name}, {"n", g.n}, {"reclamations", g.count}, {"rate", g.rate},
          {"ci", {g.ci.low, g.ci.high}}};
}

inline nlohmann::json to_json(const RateComparison& c) {
  return {{"difference", c.difference},
          {"z", c.z},
          {"p_value", c.p_value},
          {"control_ci", {c.control_ci.low, c.control_ci.high}},
          {"experimental_ci", {c.experimental_ci.low, c.experimental_ci.high}},
          {"small_count_warning", c.small_count_warning}};
}

inline nlohmann::json to_json(const FunnelReport& f) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : f.stages) {
    stages.push_back({{"stage", to_string(s.stage)},
                      {"case_months", s.count},
                      {"reclamations", s.reclamations},
                      {"rate", s.rate},
                      {"ratio_to_overall", s.ratio_to_overall}});
  }
  return {{"case_months", f.case_months},
          {"reclamations", f.reclamations},
          {"overall_rate", f.overall_rate},
          {"flagged", f.flagged},
          {"opened", f.opened},
          {"clicked", f.clicked},
          {"open_rate", f.open_rate()},
          {"click_rate_given_open", f.click_rate_given_open()},
          {"clicked_vs_opened_not_clicked", f.clicked_vs_opened_not_clicked()},
          {"stages", stages}};
}

inline nlohmann::json to_json(const CharacteristicsTable& t) {
  nlohmann::json groups = nlohmann::json::array(), tests = nlohmann::json::array();
  for (const auto& g : t.groups) {
    groups.push_back({{"stage", to_string(g.stage)},
                      {"n", g.n},
                      {"income_share", g.income_share},
                      {"prior_reclamation_share", g.prior_share},
                      {"mean_age", g.mean_age}});
  }
  for (const auto& c : t.tests) {
    tests.push_back({{"a", to_string(c.a)},
                     {"b", to_string(c.b)},
                     {"income_chi2", c.income.statistic},
                     {"income_p", c.income.p_value},
                     {"prior_chi2", c.prior.statistic},
                     {"prior_p", c.prior.p_value},
                     {"age_t", std::isfinite(c.age.t) ? nlohmann::json(c.age.t) : nlohmann::json(nullptr)},
                     {"age_df", c.age.df},
                     {"age_p", c.age.p_value},
                     {"significant", {{"income", c.income_significant},
                                      {"prior_reclamation", c.prior_significant},
                                      {"age", c.age_significant}}}});
  }
  return {{"groups", groups}, {"tests", tests}, {"warnings", t.warnings}};
}

inline nlohmann::json to_json(const AbResult& r, const ExperimentDesign& design, const ExperimentAnalysis& a) {
  nlohmann::json dates = nlohmann::json::array(), comps = nlohmann::json::array();
  for (const auto& d : r.intervention_dates) dates.push_back(d.str());
  for (std::size_t i = 0; i < a.comparisons.size(); ++i) {
    auto j = to_json(a.comparisons[i]);
    j["policy"] = design.policies[i].name;
    comps.push_back(j);
  }
  nlohmann::json groups = nlohmann::json::array({to_json(r.control)});
  for (const auto& g : r.policies) groups.push_back(to_json(g));
  nlohmann::json j{{"intervention_dates", dates},
                   {"groups", groups},
                   {"comparisons", comps},
                   {"funnel", to_json(a.funnel)}};
  j["characteristics"] = a.characteristics ? to_json(*a.characteristics) : nlohmann::json(nullptr);
  return j;
}

inline std::string percent(double v, int digits = 1) { return csv::fixed(100.0 * v, digits) + "%"; }

inline std::string summary_text(const AbResult& r, const ExperimentDesign& design, const ExperimentAnalysis& a) {
  std::ostringstream s;
  s << "Intervention dates:";
  for (const auto& d : r.intervention_dates) s << ' ' << d.str();
  s << "\n\nGroup rates (case-months in the intervention window)\n";
  auto group_line = [&](const GroupStats& g) {
    s << "  " << g.name << ": n=" << g.n << " reclamations=" << g.count << " rate=" << percent(g.rate, 2) << " [95% CI "
      << percent(g.ci.low, 2) << ", " << percent(g.ci.high, 2) << "]\n";
  };
  group_line(r.control);
  for (const auto& g : r.policies) group_line(g);
  s << "\nComparisons against control\n";
  for (std::size_t i = 0; i < a.comparisons.size(); ++i) {
    const auto& c = a.comparisons[i];
    s << "  " << design.policies[i].name << ": difference=" << csv::fixed(100.0 * c.difference, 2)
      << "pp z=" << csv::fixed(c.z, 3) << " p=" << csv::fixed(c.p_value, 4) << " -> "
      << (c.significant() ? "significant difference" : "no significant difference") << " at alpha 0.05\n";
    if (c.small_count_warning) s << "    warning: small counts, normal approximation is unreliable\n";
  }
  const auto& f = a.funnel;
  s << "\nFunnel (experimental case-months)\n";
  s << "  flagged=" << f.flagged << " opened=" << f.opened << " clicked=" << f.clicked
    << " open rate=" << percent(f.open_rate()) << " click rate given open=" << percent(f.click_rate_given_open(), 2)
    << "\n";
  for (const auto& st : f.stages) {
    s << "  " << to_string(st.stage) << ": n=" << st.count << " reclamation rate=" << percent(st.rate)
      << " ratio to overall=" << csv::fixed(st.ratio_to_overall, 2) << "\n";
  }
  s << "  overall experimental rate=" << percent(f.overall_rate, 2)
    << " clicked vs opened-not-clicked=" << csv::fixed(f.clicked_vs_opened_not_clicked(), 2) << "\n";
  if (a.characteristics) {
    s << "\nCharacteristics of flagged customers\n";
    for (const auto& g : a.characteristics->groups) {
      s << "  " << to_string(g.stage) << ": n=" << g.n << " income=" << percent(g.income_share)
        << " previous reclamation=" << percent(g.prior_share) << " mean age=" << csv::fixed(g.mean_age, 1) << "\n";
    }
    for (const auto& c : a.characteristics->tests) {
      s << "  " << to_string(c.a) << " vs " << to_string(c.b) << ": income p=" << csv::fixed(c.income.p_value, 4)
        << (c.income_significant ? "*" : "") << " previous reclamation p=" << csv::fixed(c.prior.p_value, 4)
        << (c.prior_significant ? "*" : "") << " age p=" << csv::fixed(c.age.p_value, 4)
        << (c.age_significant ? "*" : "") << "\n";
    }
    for (const auto& w : a.characteristics->warnings) s << "  warning: " << w << "\n";
  }
  return s.str();
}

inline void write_experiment_results(const std::filesystem::path& dir, const AbResult& r,
                                     const ExperimentDesign& design, const ExperimentAnalysis& a) {
  std::filesystem::create_directories(dir);
  {
    auto out = csv::open_out((dir / "groups.csv").string());
    write_groups_csv(out, r);
  }
  {
    auto out = csv::open_out((dir / "funnel.csv").string());
    write_funnel_csv(out, design, a);
  }
  {
    auto out = csv::open_out((dir / "funnel_records.csv").string());
    write_funnel_records_csv(out, r.records);
  }
  {
    auto out = csv::open_out((dir / "comparison.json").string());
    out << dump_json(to_json(r, design, a));
  }
  {
    auto out = csv::open_out((dir / "summary.txt").string());
    out << summary_text(r, design, a);
  }
}

}  // namespace parlab
