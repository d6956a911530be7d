#pragma once

// Prefix construction, monthly retention and fixed-layout vector encoding.
//
// Layout of an encoded vector:
//   [ count per activity | max_benefit_months | duration_months |
//     one-hot block per categorical attribute | age ]

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "parlab/core.hpp"
#include "parlab/csv.hpp"
#include "parlab/event_log.hpp"

namespace parlab {

enum class LabelMode { eventual, next_month };

inline std::string to_string(LabelMode m) {
  return m == LabelMode::eventual ? "eventual" : "next_month";
}

inline LabelMode parse_label_mode(const std::string& s) {
  if (s == "eventual") return LabelMode::eventual;
  if (s == "next_month") return LabelMode::next_month;
  throw Error("unknown label mode '" + s + "' (expected eventual or next_month)");
}

/// The first `length` events of a trace. `events` views the source trace,
/// which must outlive the prefix.
struct Prefix {
  std::string case_id;
  std::size_t length = 0;
  std::span<const Event> events;
  CaseAttributes attributes;
  bool full_trace_has_reclamation = false;
  bool next_month_has_reclamation = false;
};

namespace detail {

inline bool has_activity_in_month(const Trace& trace, const std::string& activity, YearMonth ym) {
  return std::any_of(trace.events.begin(), trace.events.end(), [&](const Event& e) {
    return e.activity == activity && e.date.year_month() == ym;
  });
}

}  // namespace detail

/// Builds the prefix ending at event `length` (1-based).
inline Prefix make_prefix(const Trace& trace, std::size_t length,
                          const std::string& reclamation_activity = kDefaultReclamationActivity) {
  if (length == 0 || length > trace.events.size()) {
    throw Error("prefix length " + std::to_string(length) + " out of range for case '" +
                trace.case_id + "'");
  }
  Prefix p;
  p.case_id = trace.case_id;
  p.length = length;
  p.events = std::span<const Event>(trace.events.data(), length);
  p.attributes = trace.attributes;
  p.full_trace_has_reclamation =
      std::any_of(trace.events.begin(), trace.events.end(),
                  [&](const Event& e) { return e.activity == reclamation_activity; });
  p.next_month_has_reclamation = detail::has_activity_in_month(
      trace, reclamation_activity, p.events.back().date.year_month() + 1);
  return p;
}

inline std::vector<Prefix> generate_prefixes(
    const Trace& trace, const std::string& reclamation_activity = kDefaultReclamationActivity) {
  if (trace.events.empty()) throw Error("case '" + trace.case_id + "' has no events");
  const bool eventual =
      std::any_of(trace.events.begin(), trace.events.end(),
                  [&](const Event& e) { return e.activity == reclamation_activity; });
  std::set<int> detection_months;
  for (const auto& e : trace.events) {
    if (e.activity == reclamation_activity) detection_months.insert(e.date.year_month().index);
  }
  std::vector<Prefix> out;
  out.reserve(trace.events.size());
  for (std::size_t i = 1; i <= trace.events.size(); ++i) {
    Prefix p;
    p.case_id = trace.case_id;
    p.length = i;
    p.events = std::span<const Event>(trace.events.data(), i);
    p.attributes = trace.attributes;
    p.full_trace_has_reclamation = eventual;
    p.next_month_has_reclamation =
        detection_months.count(trace.events[i - 1].date.year_month().index + 1) > 0;
    out.push_back(std::move(p));
  }
  return out;
}

/// Keeps the prefixes that close a calendar month: length i survives when it
/// is the full trace or event i+1 falls in a later month than event i.
/// Input must be the prefixes of one trace in increasing length.
inline std::vector<Prefix> retain_monthly(std::span<const Prefix> prefixes) {
  std::vector<Prefix> out;
  if (prefixes.empty()) return out;
  // The longest prefix holds every event the shorter ones view.
  const auto& full = prefixes.back();
  const std::size_t m = full.length;
  for (const auto& p : prefixes) {
    const std::size_t i = p.length;
    if (i == m || full.events[i].date.year_month() > full.events[i - 1].date.year_month()) {
      out.push_back(p);
    }
  }
  return out;
}

struct CategoricalBlock {
  std::string attribute;
  std::vector<std::string> values;  // ordered; always contains "other"

  std::size_t index_of(const std::string& v) const {
    auto it = std::find(values.begin(), values.end(), v);
    if (it == values.end()) it = std::find(values.begin(), values.end(), kOtherCategory);
    return static_cast<std::size_t>(it - values.begin());
  }

  bool operator==(const CategoricalBlock&) const = default;
};

struct EncodingSchema {
  std::vector<std::string> activities;  // sorted
  std::vector<CategoricalBlock> categoricals;
  LabelMode label_mode = LabelMode::eventual;
  std::string reclamation_activity = kDefaultReclamationActivity;

  bool operator==(const EncodingSchema&) const = default;

  std::size_t max_benefit_index() const { return activities.size(); }
  std::size_t duration_index() const { return activities.size() + 1; }
  std::size_t categorical_offset(std::size_t block) const {
    std::size_t off = activities.size() + 2;
    for (std::size_t b = 0; b < block; ++b) off += categoricals[b].values.size();
    return off;
  }
  std::size_t age_index() const { return categorical_offset(categoricals.size()); }
  std::size_t dimension() const { return age_index() + 1; }

  /// Index of `activity` in the alphabet, or -1.
  long activity_index(const std::string& activity) const {
    auto it = std::lower_bound(activities.begin(), activities.end(), activity);
    if (it == activities.end() || *it != activity) return -1;
    return static_cast<long>(it - activities.begin());
  }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> names;
    names.reserve(dimension());
    for (const auto& a : activities) names.push_back("count:" + a);
    names.push_back("max_benefit_months");
    names.push_back("duration_months");
    for (const auto& block : categoricals) {
      for (const auto& v : block.values) names.push_back(block.attribute + "=" + v);
    }
    names.push_back("age");
    return names;
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = fnv1a64(to_string(label_mode));
    h = fnv1a64(reclamation_activity, h);
    for (const auto& n : feature_names()) h = fnv1a64(n + "\x1f", h);
    return h;
  }
};

/// Derives the schema from a training log: the log's activity alphabet
/// (plus the reclamation activity) and the observed categorical values,
/// each vocabulary sorted and extended with the reserved "other" value.
inline EncodingSchema build_schema(const EventLog& log, LabelMode mode = LabelMode::eventual) {
  EncodingSchema s;
  std::set<std::string> acts(log.activity_alphabet().begin(), log.activity_alphabet().end());
  acts.insert(log.reclamation_activity());
  s.activities.assign(acts.begin(), acts.end());
  const auto& names = categorical_attribute_names();
  for (std::size_t b = 0; b < names.size(); ++b) {
    std::set<std::string> vals{kOtherCategory};
    for (const auto& t : log.traces()) vals.insert(categorical_value(t.attributes, b));
    s.categoricals.push_back({names[b], {vals.begin(), vals.end()}});
  }
  s.label_mode = mode;
  s.reclamation_activity = log.reclamation_activity();
  return s;
}

struct FeatureVector {
  std::vector<double> values;
  bool label = false;
  std::string case_id;
  int prefix_months = 1;

  bool operator==(const FeatureVector&) const = default;
};

inline FeatureVector encode(const Prefix& prefix, const EncodingSchema& schema) {
  if (prefix.events.empty()) throw Error("cannot encode an empty prefix");
  FeatureVector v;
  v.values.assign(schema.dimension(), 0.0);
  for (const auto& e : prefix.events) {
    const long idx = schema.activity_index(e.activity);
    if (idx < 0) {
      throw Error("case '" + prefix.case_id + "': activity '" + e.activity +
                  "' is not in the schema alphabet");
    }
    v.values[static_cast<std::size_t>(idx)] += 1.0;
  }
  const int duration =
      prefix.events.back().date.year_month() - prefix.events.front().date.year_month();
  v.values[schema.max_benefit_index()] = prefix.attributes.max_benefit_months;
  v.values[schema.duration_index()] = duration;
  for (std::size_t b = 0; b < schema.categoricals.size(); ++b) {
    const auto& block = schema.categoricals[b];
    const std::size_t which = block.index_of(categorical_value(prefix.attributes, b));
    v.values[schema.categorical_offset(b) + which] = 1.0;
  }
  v.values[schema.age_index()] = prefix.attributes.age;
  v.label = schema.label_mode == LabelMode::eventual ? prefix.full_trace_has_reclamation
                                                     : prefix.next_month_has_reclamation;
  v.case_id = prefix.case_id;
  v.prefix_months = duration + 1;
  return v;
}

/// Month-boundary prefixes of every trace, encoded, in log order.
inline std::vector<FeatureVector> encode_log(const EventLog& log, const EncodingSchema& schema) {
  std::vector<FeatureVector> out;
  for (const auto& t : log.traces()) {
    if (t.events.empty()) continue;
    const auto prefixes = generate_prefixes(t, schema.reclamation_activity);
    for (const auto& p : retain_monthly(prefixes)) out.push_back(encode(p, schema));
  }
  return out;
}

inline std::map<int, std::vector<FeatureVector>> bucket_by_months(
    std::span<const FeatureVector> vectors) {
  std::map<int, std::vector<FeatureVector>> buckets;
  for (const auto& v : vectors) buckets[v.prefix_months].push_back(v);
  return buckets;
}

inline void write_vectors_csv(std::ostream& out, const EncodingSchema& schema,
                              std::span<const FeatureVector> vectors) {
  csv::Row header = schema.feature_names();
  header.insert(header.end(), {"label", "case_id", "prefix_months"});
  csv::write_row(out, header);
  for (const auto& v : vectors) {
    csv::Row row;
    row.reserve(header.size());
    for (double x : v.values) row.push_back(csv::num(x));
    row.push_back(v.label ? "1" : "0");
    row.push_back(v.case_id);
    row.push_back(std::to_string(v.prefix_months));
    csv::write_row(out, row);
  }
}

}  // namespace parlab
