#pragma once

// The deployable predictor: encoding schema, one model per month bucket, a
// pooled fallback and the flagging threshold.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "parlab/encoding.hpp"
#include "parlab/event_log.hpp"
#include "parlab/learners.hpp"
#include "parlab/model_selection.hpp"

namespace parlab {

inline constexpr const char* kBundleFormat = "parlab-predictor-bundle";
inline constexpr int kBundleVersion = 1;

struct TrainingFingerprint {
  std::uint64_t log_hash = 0;
  std::uint64_t seed = 0;
  std::vector<HyperParams> grid;

  bool operator==(const TrainingFingerprint&) const = default;
};

struct PredictorBundle {
  EncodingSchema schema;
  LearnerKind learner = LearnerKind::adaboost;
  std::map<int, Model> models;  // keyed by prefix_months
  Model pooled_fallback;
  double threshold = 0.8;
  TrainingFingerprint training;
};

struct TrainConfig {
  LabelMode label_mode = LabelMode::eventual;
  BucketTrainingConfig training;
  double threshold = 0.8;
};

struct TrainResult {
  PredictorBundle bundle;
  std::map<int, CvReport> bucket_cv;
  CvReport pooled_cv;
  std::vector<int> absorbed;
  std::size_t vectors = 0;
};

/// Prefixes, monthly retention, encoding, bucketing, then per-bucket grid
/// search and refit.
inline TrainResult train_bundle(const EventLog& log, const TrainConfig& config) {
  if (log.empty()) throw Error("cannot train on an empty log");
  if (!(config.threshold > 0.0 && config.threshold < 1.0)) throw Error("threshold must be in (0, 1)");
  TrainResult out;
  auto& b = out.bundle;
  b.schema = build_schema(log, config.label_mode);
  b.learner = config.training.learner;
  b.threshold = config.threshold;
  b.training.log_hash = log_fingerprint(log);
  b.training.seed = config.training.seed;
  b.training.grid = config.training.grid.empty() ? default_grid(config.training.learner) : config.training.grid;

  const auto vectors = encode_log(log, b.schema);
  out.vectors = vectors.size();
  auto training = config.training;
  training.grid = b.training.grid;
  auto trained = train_bucketed(vectors, training);
  b.pooled_fallback = std::move(trained.pooled.model);
  out.pooled_cv = std::move(trained.pooled.cv);
  for (auto& [key, t] : trained.buckets) {
    b.models.emplace(key, std::move(t.model));
    out.bucket_cv.emplace(key, std::move(t.cv));
  }
  out.absorbed = std::move(trained.absorbed);
  return out;
}

inline const Model& model_for(const PredictorBundle& bundle, int prefix_months) {
  const auto key = route_bucket(bundle.models, prefix_months);
  return key ? bundle.models.at(*key) : bundle.pooled_fallback;
}

inline double score_vector(const PredictorBundle& bundle, const FeatureVector& v) {
  return predict_proba(model_for(bundle, v.prefix_months), v.values);
}

/// Number of leading events dated on or before the end of `as_of`.
inline std::size_t events_through(const Trace& trace, YearMonth as_of) {
  const Date end = last_day(as_of);
  const auto it = std::upper_bound(trace.events.begin(), trace.events.end(), end,
                                   [](const Date& d, const Event& e) { return d < e.date; });
  return static_cast<std::size_t>(it - trace.events.begin());
}

/// Encodes the running case as of the end of `as_of` and scores it with the
/// model of its month bucket.
inline double score_case(const PredictorBundle& bundle, const Trace& running, YearMonth as_of) {
  const std::size_t n = events_through(running, as_of);
  if (n == 0) {
    throw Error("case '" + running.case_id + "' has no events on or before " + as_of.str());
  }
  const auto prefix = make_prefix(running, n, bundle.schema.reclamation_activity);
  return score_vector(bundle, encode(prefix, bundle.schema));
}

/// Cases whose score is strictly above the threshold.
inline std::set<std::string> flag_risky(const std::map<std::string, double>& scores, double threshold) {
  std::set<std::string> out;
  for (const auto& [id, p] : scores) {
    if (p > threshold) out.insert(id);
  }
  return out;
}

inline std::set<std::string> flag_risky(const PredictorBundle& bundle, const std::map<std::string, double>& scores) {
  return flag_risky(scores, bundle.threshold);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos, 16);
  if (pos != s.size()) throw Error("invalid hex value '" + s + "'");
  return v;
}

inline nlohmann::json schema_to_json(const EncodingSchema& s) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : s.categoricals) cats.push_back({{"attribute", c.attribute}, {"values", c.values}});
  return {{"activities", s.activities},
          {"categoricals", cats},
          {"label_mode", to_string(s.label_mode)},
          {"reclamation_activity", s.reclamation_activity}};
}

inline EncodingSchema schema_from_json(const nlohmann::json& j) {
  EncodingSchema s;
  s.activities = j.at("activities").get<std::vector<std::string>>();
  if (!std::is_sorted(s.activities.begin(), s.activities.end())) throw Error("schema activities must be sorted");
  for (const auto& c : j.at("categoricals")) {
    CategoricalBlock block{c.at("attribute").get<std::string>(), c.at("values").get<std::vector<std::string>>()};
    if (std::find(block.values.begin(), block.values.end(), kOtherCategory) == block.values.end()) {
      throw Error("schema block '" + block.attribute + "' lacks the 'other' value");
    }
    s.categoricals.push_back(std::move(block));
  }
  s.label_mode = parse_label_mode(j.at("label_mode").get<std::string>());
  s.reclamation_activity = j.at("reclamation_activity").get<std::string>();
  return s;
}

inline nlohmann::json bundle_to_json(const PredictorBundle& b) {
  nlohmann::json models = nlohmann::json::object();
  for (const auto& [k, m] : b.models) models[std::to_string(k)] = model_to_json(m);
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& hp : b.training.grid) grid.push_back(to_json(hp, b.learner));
  return {{"format", kBundleFormat},
          {"version", kBundleVersion},
          {"schema", schema_to_json(b.schema)},
          {"schema_fingerprint", hex64(b.schema.fingerprint())},
          {"learner", to_string(b.learner)},
          {"threshold", b.threshold},
          {"models", models},
          {"pooled_fallback", model_to_json(b.pooled_fallback)},
          {"training", {{"log_fingerprint", hex64(b.training.log_hash)}, {"seed", b.training.seed}, {"grid", grid}}}};
}

inline PredictorBundle bundle_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kBundleFormat) throw Error("not a predictor bundle document");
  if (j.at("version").get<int>() != kBundleVersion) {
    throw Error("unsupported bundle version " + j.at("version").dump());
  }
  PredictorBundle b;
  b.schema = schema_from_json(j.at("schema"));
  if (hex64(b.schema.fingerprint()) != j.at("schema_fingerprint").get<std::string>()) {
    throw Error("bundle schema fingerprint mismatch");
  }
  b.learner = parse_learner_kind(j.at("learner").get<std::string>());
  b.threshold = j.at("threshold").get<double>();
  if (!(b.threshold > 0.0 && b.threshold < 1.0)) throw Error("bundle threshold must be in (0, 1)");
  const std::size_t dim = b.schema.dimension();
  auto check_dim = [&](const Model& m) {
    const std::size_t d = std::visit(
        [](const auto& mm) {
          if constexpr (std::is_same_v<std::decay_t<decltype(mm)>, LinearModel>) {
            return mm.dimension();
          } else {
            return mm.dimension;
          }
        },
        m);
    if (d != dim) throw Error("bundle model dimension does not match its schema");
  };
  for (const auto& [k, m] : j.at("models").items()) {
    const int key = std::stoi(k);
    if (key < 1) throw Error("bundle bucket keys must be >= 1");
    b.models.emplace(key, model_from_json(m));
    check_dim(b.models.at(key));
  }
  b.pooled_fallback = model_from_json(j.at("pooled_fallback"));
  check_dim(b.pooled_fallback);
  const auto& t = j.at("training");
  b.training.log_hash = parse_hex64(t.at("log_fingerprint").get<std::string>());
  b.training.seed = t.at("seed").get<std::uint64_t>();
  for (const auto& hp : t.at("grid")) b.training.grid.push_back(hyper_params_from_json(hp));
  return b;
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline void save_bundle(const std::string& path, const PredictorBundle& b) {
  auto out = csv::open_out(path);
  out << dump_json(bundle_to_json(b));
}

inline PredictorBundle load_bundle(const std::string& path) {
  auto in = csv::open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("bundle '" + path + "': " + e.what());
  }
  return bundle_from_json(j);
}

}  // namespace parlab
