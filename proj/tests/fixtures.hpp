#pragma once

#include <string>
#include <vector>

#include "parlab/core.hpp"
#include "parlab/event_log.hpp"

namespace fixtures {

inline const char* kHeader =
    "case_id,event_date,activity,age,gender,marital_status,max_benefit_months,sector,contract_type,"
    "working_pattern,dismissal_reason\n";

// One event in June, three in July, three in August.
inline std::string fig4_csv() {
  const std::string attrs = ",52,male,married,12,retail,permanent,fulltime,reorganization\n";
  return std::string(kHeader) +                               //
         "25879,2017-06-25,Initialize the Income Form" + attrs +  //
         "25879,2017-07-03,Send Income Form" + attrs +            //
         "25879,2017-07-08,Check Income Form" + attrs +           //
         "25879,2017-07-25,Initialize the Income Form" + attrs +  //
         "25879,2017-08-03,Send Income Form" + attrs +            //
         "25879,2017-08-08,Check Income Form" + attrs +           //
         "25879,2017-08-15,Pay Benefits" + attrs;
}

inline std::string two_customer_csv() {
  return fig4_csv() +
         "31002,2017-07-25,Initialize the Income Form,34,female,single,6,care,temporary,parttime,contract_end\n"
         "31002,2017-08-03,Send Income Form,34,female,single,6,care,temporary,parttime,contract_end\n"
         "31002,2017-08-12,Detect Reclamation,34,female,single,6,care,temporary,parttime,contract_end\n";
}

/// Random trace with dates spread over a few months; activities from a
/// small alphabet that includes the reclamation activity.
inline parlab::Trace random_trace(parlab::Rng& rng, const std::string& id, std::size_t max_events = 25) {
  static const std::vector<std::string> acts{"Initialize the Income Form", "Send Income Form", "Check Income Form",
                                             "Pay Benefits", "Detect Reclamation"};
  parlab::Trace t;
  t.case_id = id;
  t.attributes.age = 18 + static_cast<int>(parlab::below(rng, 50));
  t.attributes.max_benefit_months = 1 + static_cast<int>(parlab::below(rng, 24));
  t.attributes.gender = parlab::bernoulli(rng, 0.5) ? "female" : "male";
  const auto n = 1 + parlab::below(rng, max_events);
  parlab::Date d{2016, 1 + static_cast<int>(parlab::below(rng, 12)), 1 + static_cast<int>(parlab::below(rng, 28))};
  for (std::size_t i = 0; i < n; ++i) {
    t.events.push_back({id, d, acts[parlab::below(rng, acts.size())]});
    d = parlab::add_days(d, static_cast<int>(parlab::below(rng, 20)));
  }
  return t;
}

}  // namespace fixtures
