#pragma once

// Event-log data model and CSV ingestion. Rows are events; rows sharing a
// case_id form a trace ordered by event date, same-date events keeping
// their file order.

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "parlab/core.hpp"
#include "parlab/csv.hpp"

namespace parlab {

inline constexpr const char* kDefaultReclamationActivity = "Detect Reclamation";
inline constexpr const char* kOtherCategory = "other";

struct Event {
  std::string case_id;
  Date date;
  std::string activity;

  bool operator==(const Event&) const = default;
};

struct CaseAttributes {
  int age = 0;
  std::string gender = kOtherCategory;
  std::string marital_status = kOtherCategory;
  int max_benefit_months = 0;
  std::string sector = kOtherCategory;
  std::string contract_type = kOtherCategory;
  std::string working_pattern = kOtherCategory;
  std::string dismissal_reason = kOtherCategory;

  bool operator==(const CaseAttributes&) const = default;
};

/// Categorical attribute names in encoding order.
inline const std::vector<std::string>& categorical_attribute_names() {
  static const std::vector<std::string> names{"gender", "marital_status", "sector",
                                              "contract_type", "working_pattern",
                                              "dismissal_reason"};
  return names;
}

inline const std::string& categorical_value(const CaseAttributes& a, std::size_t which) {
  switch (which) {
    case 0: return a.gender;
    case 1: return a.marital_status;
    case 2: return a.sector;
    case 3: return a.contract_type;
    case 4: return a.working_pattern;
    default: return a.dismissal_reason;
  }
}

struct Trace {
  std::string case_id;
  CaseAttributes attributes;
  std::vector<Event> events;

  bool operator==(const Trace&) const = default;
};

/// Immutable collection of traces sorted by case_id.
class EventLog {
 public:
  EventLog() = default;

  /// Takes ownership of `traces`; sorts them by case_id, stably sorts each
  /// trace's events by date and derives the activity alphabet.
  explicit EventLog(std::vector<Trace> traces,
                    std::string reclamation_activity = kDefaultReclamationActivity)
      : traces_(std::move(traces)), reclamation_activity_(std::move(reclamation_activity)) {
    std::sort(traces_.begin(), traces_.end(),
              [](const Trace& a, const Trace& b) { return a.case_id < b.case_id; });
    for (std::size_t i = 1; i < traces_.size(); ++i) {
      if (traces_[i - 1].case_id == traces_[i].case_id) {
        throw Error("duplicate case_id '" + traces_[i].case_id + "'");
      }
    }
    std::set<std::string> alphabet;
    for (auto& t : traces_) {
      std::stable_sort(t.events.begin(), t.events.end(),
                       [](const Event& a, const Event& b) { return a.date < b.date; });
      for (const auto& e : t.events) alphabet.insert(e.activity);
    }
    alphabet_.assign(alphabet.begin(), alphabet.end());
  }

  const std::vector<Trace>& traces() const { return traces_; }
  std::size_t size() const { return traces_.size(); }
  bool empty() const { return traces_.empty(); }
  const std::vector<std::string>& activity_alphabet() const { return alphabet_; }
  const std::string& reclamation_activity() const { return reclamation_activity_; }

  const Trace* find(const std::string& case_id) const {
    auto it = std::lower_bound(traces_.begin(), traces_.end(), case_id,
                               [](const Trace& t, const std::string& id) { return t.case_id < id; });
    return it != traces_.end() && it->case_id == case_id ? &*it : nullptr;
  }

  std::size_t event_count() const {
    std::size_t n = 0;
    for (const auto& t : traces_) n += t.events.size();
    return n;
  }

  bool operator==(const EventLog&) const = default;

 private:
  std::vector<Trace> traces_;
  std::vector<std::string> alphabet_;
  std::string reclamation_activity_ = kDefaultReclamationActivity;
};

struct ParseOptions {
  std::string reclamation_activity = kDefaultReclamationActivity;
  char delimiter = ',';
};

namespace detail {

inline const std::vector<std::string>& attribute_columns() {
  static const std::vector<std::string> cols{"age",           "gender",          "marital_status",
                                             "max_benefit_months", "sector",     "contract_type",
                                             "working_pattern",    "dismissal_reason"};
  return cols;
}

inline void set_attribute(CaseAttributes& a, std::size_t col, const std::string& v,
                          std::size_t row) {
  auto as_int = [&](const char* what) {
    try {
      return static_cast<int>(csv::to_int(v, what));
    } catch (const Error&) {
      throw Error("row " + std::to_string(row) + ": invalid " + what + " '" + v + "'");
    }
  };
  switch (col) {
    case 0: a.age = as_int("age"); break;
    case 1: a.gender = v; break;
    case 2: a.marital_status = v; break;
    case 3: a.max_benefit_months = as_int("max_benefit_months"); break;
    case 4: a.sector = v; break;
    case 5: a.contract_type = v; break;
    case 6: a.working_pattern = v; break;
    default: a.dismissal_reason = v; break;
  }
}

}  // namespace detail

/// Reads an event log from CSV text. Row numbers in error messages count the
/// header as row 1.
inline EventLog parse_log(std::istream& in, const ParseOptions& options = {}) {
  csv::Row header;
  if (!csv::read_row(in, header, options.delimiter)) {
    throw Error("missing header row");
  }
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  std::size_t required[3];
  const char* required_names[3] = {"case_id", "event_date", "activity"};
  for (int i = 0; i < 3; ++i) {
    auto c = column(required_names[i]);
    if (!c) throw Error(std::string("missing required column '") + required_names[i] + "'");
    required[i] = *c;
  }
  std::vector<std::optional<std::size_t>> attr_cols;
  for (const auto& name : detail::attribute_columns()) attr_cols.push_back(column(name));

  std::map<std::string, Trace> by_case;
  csv::Row row;
  std::size_t row_no = 1;
  while (csv::read_row(in, row, options.delimiter)) {
    ++row_no;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size()) {
      throw Error("row " + std::to_string(row_no) + ": expected " + std::to_string(header.size()) +
                  " fields, found " + std::to_string(row.size()));
    }
    Event e;
    e.case_id = row[required[0]];
    if (e.case_id.empty()) throw Error("row " + std::to_string(row_no) + ": empty case_id");
    if (!Date::try_parse(row[required[1]], e.date)) {
      throw Error("row " + std::to_string(row_no) + ": malformed date '" + row[required[1]] + "'");
    }
    e.activity = row[required[2]];
    if (e.activity.empty()) throw Error("row " + std::to_string(row_no) + ": empty activity");

    CaseAttributes attrs;
    for (std::size_t c = 0; c < attr_cols.size(); ++c) {
      if (attr_cols[c]) detail::set_attribute(attrs, c, row[*attr_cols[c]], row_no);
    }
    auto [it, inserted] = by_case.try_emplace(e.case_id);
    Trace& trace = it->second;
    if (inserted) {
      trace.case_id = e.case_id;
      trace.attributes = attrs;
    } else if (!(trace.attributes == attrs)) {
      throw Error("case '" + e.case_id + "': attribute values vary within the case (row " +
                  std::to_string(row_no) + ")");
    }
    trace.events.push_back(std::move(e));
  }
  std::vector<Trace> traces;
  traces.reserve(by_case.size());
  for (auto& [id, t] : by_case) traces.push_back(std::move(t));
  return EventLog(std::move(traces), options.reclamation_activity);
}

inline EventLog parse_log_file(const std::string& path, const ParseOptions& options = {}) {
  auto in = csv::open_in(path);
  return parse_log(in, options);
}

inline EventLog parse_log_text(const std::string& text, const ParseOptions& options = {}) {
  std::istringstream in(text);
  return parse_log(in, options);
}

/// Writes the log as CSV with every attribute column on every row.
inline void write_log(std::ostream& out, const EventLog& log) {
  csv::Row header{"case_id", "event_date", "activity"};
  for (const auto& c : detail::attribute_columns()) header.push_back(c);
  csv::write_row(out, header);
  for (const auto& t : log.traces()) {
    const auto& a = t.attributes;
    for (const auto& e : t.events) {
      csv::write_row(out, {e.case_id, e.date.str(), e.activity, std::to_string(a.age), a.gender,
                           a.marital_status, std::to_string(a.max_benefit_months), a.sector,
                           a.contract_type, a.working_pattern, a.dismissal_reason});
    }
  }
}

inline void write_log_file(const std::string& path, const EventLog& log) {
  auto out = csv::open_out(path);
  write_log(out, log);
}

/// Content hash of the serialized log, used in training fingerprints.
inline std::uint64_t log_fingerprint(const EventLog& log) {
  std::ostringstream s;
  write_log(s, log);
  return fnv1a64(s.str());
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct CaseSummary {
  std::string case_id;
  std::size_t event_count = 0;
  int month_span = 0;
  std::size_t reclamation_events = 0;
};

struct ValidationWarning {
  std::string case_id;
  std::string message;
};

struct ValidationReport {
  std::vector<CaseSummary> cases;
  std::vector<ValidationWarning> warnings;

  bool clean() const { return warnings.empty(); }
};

/// Calendar months from the first to the last event, inclusive.
inline int month_span(const std::vector<Event>& events) {
  if (events.empty()) return 0;
  return events.back().date.year_month() - events.front().date.year_month() + 1;
}

inline ValidationReport validate_log(const EventLog& log) {
  ValidationReport report;
  report.cases.reserve(log.size());
  for (const auto& t : log.traces()) {
    CaseSummary s;
    s.case_id = t.case_id;
    s.event_count = t.events.size();
    s.month_span = month_span(t.events);
    auto warn = [&](std::string msg) { report.warnings.push_back({t.case_id, std::move(msg)}); };
    for (std::size_t i = 0; i < t.events.size(); ++i) {
      const auto& e = t.events[i];
      if (e.activity == log.reclamation_activity()) ++s.reclamation_events;
      if (e.case_id != t.case_id) warn("event carries foreign case_id '" + e.case_id + "'");
      if (i && t.events[i - 1].date > e.date) warn("events out of date order");
    }
    if (t.events.empty()) warn("empty trace");
    if (t.events.size() == 1) warn("single-event trace");
    if (t.attributes.age < 16) warn("age below 16");
    if (t.attributes.max_benefit_months < 1) warn("max_benefit_months below 1");
    report.cases.push_back(std::move(s));
  }
  return report;
}

}  // namespace parlab
