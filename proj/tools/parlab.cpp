// parlab: simulate, train, evaluate, score, experiment, report.
//
// Every run resolves its settings (defaults < --config < --set < flags),
// writes them to <out>/manifest.json and can be replayed with
// `parlab --manifest <file> --out <dir>`.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "parlab/parlab.hpp"

namespace fs = std::filesystem;
using namespace parlab;

namespace {

constexpr const char* kManifestFormat = "parlab-manifest";

// Reference operating point for the lift printout: 19% of positives in the
// top 10% of cases.
constexpr double kReferenceTargeted = 0.10;
constexpr double kReferenceCaptured = 0.19;

struct Run {
  std::string command;
  Settings settings;
  std::map<std::string, std::string> inputs;  // role -> path
  fs::path out = ".";
  unsigned threads = 1;

  std::uint64_t seed() const { return settings.get_u64("seed", 1); }

  const std::string& input(const std::string& role) const {
    const auto it = inputs.find(role);
    if (it == inputs.end()) throw Error(command + " needs --" + role);
    return it->second;
  }

  std::string path(const std::string& name) const { return (out / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  auto out = csv::open_out(path);
  out << text;
}

nlohmann::json manifest_json(const Run& run) {
  return {{"format", kManifestFormat},
          {"version", 1},
          {"command", run.command},
          {"settings", run.settings.values()},
          {"inputs", run.inputs}};
}

Run run_from_manifest(const std::string& path) {
  auto in = csv::open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("manifest '" + path + "': " + e.what());
  }
  if (j.value("format", "") != kManifestFormat) throw Error("'" + path + "' is not a run manifest");
  Run run;
  run.command = j.at("command").get<std::string>();
  for (const auto& [k, v] : j.at("settings").items()) run.settings.set(k, v.get<std::string>());
  run.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  return run;
}

// ---------------------------------------------------------------------------

void cmd_simulate(const Run& run) {
  const auto config = sim_config_from(run.settings);
  const auto population = generate_population(config, derive_seed(run.seed(), "population"));
  const auto model = truth_from(run.settings, population, config);
  const auto result = simulate(config, model, population, no_intervention());

  write_log_file(run.path("log.csv"), result.log);
  {
    auto out = csv::open_out(run.path("outcomes.csv"));
    write_outcomes_csv(out, result.outcomes);
  }
  {
    auto out = csv::open_out(run.path("population.csv"));
    write_population_csv(out, population);
  }
  const double realized = realized_monthly_rate(result.outcomes);
  const nlohmann::json truth{{"b0", model.b0},
                             {"b_income", model.b_income},
                             {"b_prev_reclamation", model.b_prev_reclamation},
                             {"b_double_payment_month", model.b_double_payment_month},
                             {"b_age", model.b_age},
                             {"theta_open", model.theta_open},
                             {"theta_click", model.theta_click},
                             {"detection_lag", model.detection_lag},
                             {"expected_monthly_rate", expected_monthly_rate(model, population, config)},
                             {"realized_monthly_rate", realized}};
  write_text(run.path("truth.json"), dump_json(truth));

  const auto report = validate_log(result.log);
  std::cout << "simulated " << result.log.size() << " traces, " << result.log.event_count() << " events, "
            << result.outcomes.size() << " income months\n"
            << "monthly reclamation rate " << percent(realized, 2) << " (target " << percent(config.base_rate, 2)
            << ", intercept " << csv::fixed(model.b0, 4) << ")\n"
            << "validation: " << report.warnings.size() << " warnings\n";
}

void cmd_train(const Run& run) {
  const auto& s = run.settings;
  const auto log = parse_log_file(run.input("log"));
  const double fraction = s.get_double("train.train_fraction", 0.8);
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("train.train_fraction must be in (0, 1]");

  EventLog train_log = log;
  if (fraction < 1.0) {
    auto [train, holdout] = split_train_test(log, fraction, run.seed());
    write_log_file(run.path("holdout.csv"), holdout);
    std::cout << "split " << log.size() << " traces: " << train.size() << " train, " << holdout.size()
              << " held out\n";
    train_log = std::move(train);
  }

  TrainConfig config;
  config.label_mode = parse_label_mode(s.get("train.label_mode", "eventual"));
  config.training = training_from(s, run.threads);
  config.threshold = s.get_double("train.threshold", 0.8);
  const auto result = train_bundle(train_log, config);
  save_bundle(run.path("bundle.json"), result.bundle);

  std::vector<std::pair<std::string, CvReport>> reports{{"pooled", result.pooled_cv}};
  nlohmann::json buckets = nlohmann::json::object();
  for (const auto& [key, cv] : result.bucket_cv) {
    reports.emplace_back(std::to_string(key), cv);
    buckets[std::to_string(key)] = to_json(cv);
  }
  {
    auto out = csv::open_out(run.path("cv_report.csv"));
    write_cv_csv(out, reports);
  }
  const nlohmann::json cv{{"vectors", result.vectors},
                          {"pooled", to_json(result.pooled_cv)},
                          {"buckets", buckets},
                          {"absorbed_buckets", result.absorbed}};
  write_text(run.path("cv_report.json"), dump_json(cv));

  std::cout << "trained " << to_string(config.training.learner) << " on " << result.vectors << " prefixes ("
            << result.bucket_cv.size() << " buckets, " << result.absorbed.size() << " absorbed into pooled)\n";
  for (const auto& [name, r] : reports) {
    const auto& b = r.best();
    std::cout << "  " << name << ": ";
    if (r.learner == LearnerKind::logistic) {
      std::cout << "l2_lambda=" << csv::num(b.params.l2_lambda);
    } else {
      std::cout << "num_rounds=" << b.params.num_rounds;
    }
    std::cout << " mean AUC " << csv::fixed(b.mean_auc, 4) << "\n";
  }

  if (s.get_bool("train.compare_architectures", false)) {
    ComparisonConfig cc;
    cc.train_fraction = 0.8;
    cc.label_mode = config.label_mode;
    cc.training = config.training;
    cc.logistic_grid = default_grid(LearnerKind::logistic);
    cc.boost_grid = default_grid(LearnerKind::adaboost);
    const auto report = compare_architectures(train_log, cc);
    write_text(run.path("architectures.json"), dump_json(to_json(report)));
    auto out = csv::open_out(run.path("architectures.csv"));
    write_comparison_csv(out, report);
    std::cout << "architecture comparison:\n";
    for (const auto& r : report.results) {
      std::cout << "  " << r.architecture << " " << to_string(r.learner) << ": test AUC "
                << (r.test_auc ? csv::fixed(*r.test_auc, 4) : std::string("undefined")) << "\n";
    }
  }
}

void cmd_evaluate(const Run& run) {
  const auto& s = run.settings;
  const auto bundle = load_bundle(run.input("bundle"));
  const auto log = parse_log_file(run.input("log"));
  auto schema = bundle.schema;
  schema.label_mode = parse_label_mode(s.get("eval.label_mode", "next_month"));
  const auto vectors = encode_log(log, schema);

  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> keys;
  for (const auto& v : vectors) {
    scores.push_back(score_vector(bundle, v));
    labels.push_back(v.label ? 1 : 0);
    char month[16];
    std::snprintf(month, sizeof month, "%04d", v.prefix_months);
    keys.push_back(v.case_id + ":" + month);
  }
  const auto a = auc(scores, labels);
  const auto granularity = static_cast<std::size_t>(s.get_int("eval.granularity", 100));
  const auto curve = cumulative_lift(scores, labels, keys, granularity);
  {
    auto out = csv::open_out(run.path("lift.csv"));
    write_lift_csv(out, curve);
  }
  const LiftReference ref{kReferenceTargeted, kReferenceCaptured, "reference: 19% at 10% (1.9x)"};
  write_text(run.path("lift.svg"), render_lift_svg(curve.points, &ref));
  const double captured = curve.captured_at(kReferenceTargeted);
  const nlohmann::json j{{"label_mode", to_string(schema.label_mode)},
                         {"instances", curve.instances},
                         {"positives", curve.positives},
                         {"base_rate", curve.base_rate},
                         {"auc", a.value},
                         {"captured_at_10pct", captured},
                         {"lift_at_10pct", captured / kReferenceTargeted},
                         {"reference", {{"targeted", kReferenceTargeted}, {"captured", kReferenceCaptured}}}};
  write_text(run.path("evaluation.json"), dump_json(j));
  std::cout << "evaluated " << curve.instances << " prefixes (" << curve.positives << " positive, "
            << to_string(schema.label_mode) << " labels)\n"
            << "AUC " << csv::fixed(a.value, 4) << "\n"
            << "top 10% captures " << percent(captured) << " of reclamations (" << csv::fixed(captured / 0.1, 2)
            << "x random); reference line: 19% at 10% (1.9x)\n";
}

void cmd_score(const Run& run) {
  const auto bundle = load_bundle(run.input("bundle"));
  const auto log = parse_log_file(run.input("log"));
  std::optional<YearMonth> as_of;
  if (run.settings.has("score.as_of")) {
    as_of = YearMonth::parse(run.settings.get("score.as_of", ""));
  } else {
    for (const auto& t : log.traces()) {
      if (!t.events.empty() && (!as_of || t.events.back().date.year_month() > *as_of)) {
        as_of = t.events.back().date.year_month();
      }
    }
  }
  if (!as_of) throw Error("log has no events to score");
  auto out = csv::open_out(run.path("scores.csv"));
  csv::write_row(out, {"case_id", "prefix_months", "score", "flagged"});
  std::size_t scored = 0, flagged = 0;
  for (const auto& t : log.traces()) {
    const auto n = events_through(t, *as_of);
    if (n == 0) continue;
    const auto v = encode(make_prefix(t, n, bundle.schema.reclamation_activity), bundle.schema);
    const double p = score_vector(bundle, v);
    const bool flag = p > bundle.threshold;
    csv::write_row(out, {t.case_id, std::to_string(v.prefix_months), csv::num(p), flag ? "1" : "0"});
    ++scored;
    flagged += flag ? 1 : 0;
  }
  std::cout << "scored " << scored << " cases as of " << as_of->str() << ", " << flagged << " above threshold "
            << csv::num(bundle.threshold) << "\n";
}

void cmd_experiment(const Run& run) {
  const auto& s = run.settings;
  const auto bundle = load_bundle(run.input("bundle"));
  auto config = sim_config_from(s);
  // field customers are distinct from the ones the bundle was trained on
  if (!s.has("sim.id_offset")) config.id_offset = 900000;
  const auto design = design_from(s);
  config.horizon_months = design.warmup_months + design.duration_months;
  const auto population = generate_population(config, derive_seed(run.seed(), "field-population"));
  const auto model = truth_from(s, population, config);

  const auto ab = run_ab(config, model, population, bundle, design);
  const auto analysis = analyze_experiment(ab, design, population);
  write_experiment_results(run.out, ab, design, analysis);
  write_log_file(run.path("field_log.csv"), ab.log);
  {
    auto out = csv::open_out(run.path("outcomes.csv"));
    write_outcomes_csv(out, ab.outcomes);
  }
  std::cout << summary_text(ab, design, analysis);

  const auto replications = static_cast<std::size_t>(s.get_int("design.replications", 1));
  if (replications > 1) {
    const auto reps = run_replications(config, model, population, bundle, design, replications, run.seed(), run.threads);
    auto out = csv::open_out(run.path("replications.csv"));
    csv::write_row(out, {"replication", "seed", "policy", "difference", "z", "p_value", "significant"});
    std::vector<std::size_t> significant(design.policies.size(), 0);
    for (std::size_t r = 0; r < reps.size(); ++r) {
      for (std::size_t p = 0; p < reps[r].comparisons.size(); ++p) {
        const auto& c = reps[r].comparisons[p];
        significant[p] += c.significant() ? 1 : 0;
        csv::write_row(out, {std::to_string(r), std::to_string(reps[r].seed), design.policies[p].name,
                             csv::num(c.difference), csv::num(c.z), csv::num(c.p_value), c.significant() ? "1" : "0"});
      }
    }
    std::cout << "\nReplications\n";
    for (std::size_t p = 0; p < design.policies.size(); ++p) {
      std::cout << "  " << design.policies[p].name << ": no significant difference in "
                << replications - significant[p] << " of " << replications << " replications\n";
    }
  }
}

void cmd_report(const Run& run) {
  const auto& s = run.settings;
  std::ostringstream text;
  bool any = false;
  if (run.inputs.count("results")) {
    any = true;
    std::ifstream in(fs::path(run.inputs.at("results")) / "summary.txt");
    if (!in) throw Error("no summary.txt in " + run.inputs.at("results"));
    text << "== Experiment results ==\n" << in.rdbuf() << "\n";
  }
  if (run.inputs.count("bundle")) {
    any = true;
    const auto bundle = load_bundle(run.inputs.at("bundle"));
    const auto names = bundle.schema.feature_names();
    auto section = [&](const std::string& title, const Model& m) {
      text << title << "\n";
      const auto imp = feature_importance(m);
      for (std::size_t i = 0; i < imp.size() && i < 10; ++i) {
        if (imp[i].importance <= 0) break;
        text << "  " << names.at(imp[i].feature) << " " << csv::fixed(imp[i].importance, 4) << "\n";
      }
    };
    text << "== Feature importance (" << to_string(bundle.learner) << ") ==\n";
    section("pooled model", bundle.pooled_fallback);
    for (const auto& [key, m] : bundle.models) section(std::to_string(key) + "-month bucket", m);
    text << "\n";
  }
  if (run.inputs.count("log")) {
    any = true;
    const auto log = parse_log_file(run.inputs.at("log"));
    const auto marker = s.get("report.marker", "Send Support Email");
    PreAssessOptions opt;
    opt.outcome_offset_months = static_cast<int>(s.get_int("report.outcome_offset", 1));
    const auto pa = pre_assess(log, marker, opt);
    text << "== Pre-assessment of '" << marker << "' ==\n"
         << "  marked case-months: n=" << pa.marked.n << " rate=" << percent(pa.marked.rate, 2) << "\n"
         << "  unmarked case-months (same calendar months): n=" << pa.unmarked.n
         << " rate=" << percent(pa.unmarked.rate, 2) << "\n"
         << "  difference " << csv::fixed(100.0 * pa.comparison.difference, 2) << "pp, p=" << csv::fixed(pa.comparison.p_value, 4)
         << "\n";
    if (pa.adjusted_difference) {
      text << "  difference stratified on previous reclamation " << csv::fixed(100.0 * *pa.adjusted_difference, 2)
           << "pp\n";
    }
    text << "  note: historical markers are not randomized; a difference may reflect who received the marker\n\n";
  }
  if (!any) throw Error("report needs at least one of --results, --bundle, --log");
  write_text(run.path("report.txt"), text.str());
  std::cout << text.str();
}

void execute(Run& run) {
  fs::create_directories(run.out);
  run.settings.check_known(known_setting_keys());
  write_text(run.path("manifest.json"), dump_json(manifest_json(run)));
  if (run.command == "simulate") {
    cmd_simulate(run);
  } else if (run.command == "train") {
    cmd_train(run);
  } else if (run.command == "evaluate") {
    cmd_evaluate(run);
  } else if (run.command == "score") {
    cmd_score(run);
  } else if (run.command == "experiment") {
    cmd_experiment(run);
  } else if (run.command == "report") {
    cmd_report(run);
  } else {
    throw Error("unknown command '" + run.command + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Process-aware recommender lab: simulate, train, evaluate, score, experiment, report"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path, manifest_path, out_dir = ".";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  Settings flags;
  std::map<std::string, std::string> inputs;

  app.add_option("--config", config_path, "key-value configuration file")->check(CLI::ExistingFile);
  app.add_option("--manifest", manifest_path, "replay the run recorded in this manifest")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "root seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads for grid, fold and replication work")->check(CLI::PositiveNumber);
  app.add_option("--set", sets, "override a setting, key=value (repeatable)");

  auto key_option = [&](CLI::App* sc, const std::string& flag, const std::string& key, const std::string& help) {
    sc->add_option_function<std::string>(flag, [&flags, key](const std::string& v) { flags.set(key, v); }, help);
  };
  auto key_flag = [&](CLI::App* sc, const std::string& flag, const std::string& key, const std::string& help) {
    sc->add_flag_callback(flag, [&flags, key] { flags.set(key, "true"); }, help);
  };
  auto input_option = [&](CLI::App* sc, const std::string& role, const std::string& help) {
    sc->add_option_function<std::string>("--" + role, [&inputs, role](const std::string& v) { inputs[role] = v; }, help);
  };

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic event log and outcomes");
  key_option(simulate, "--n", "sim.n", "population size");
  key_option(simulate, "--months", "sim.months", "horizon in months");
  key_option(simulate, "--start", "sim.start", "first month, YYYY-MM");
  key_option(simulate, "--base-rate", "sim.base_rate", "target monthly reclamation rate");

  auto* train = app.add_subcommand("train", "train a bucketed predictor bundle");
  input_option(train, "log", "event-log CSV");
  key_option(train, "--learner", "train.learner", "adaboost or logistic");
  key_option(train, "--grid", "train.grid", "default, single-point or a comma list");
  key_option(train, "--label-mode", "train.label_mode", "eventual or next_month");
  key_option(train, "--threshold", "train.threshold", "flagging threshold");
  key_option(train, "--train-fraction", "train.train_fraction", "trace fraction used for training (1 = no holdout)");
  key_flag(train, "--compare-architectures", "train.compare_architectures", "also compare single vs bucketed");

  auto* evaluate = app.add_subcommand("evaluate", "AUC and cumulative lift of a bundle on a log");
  input_option(evaluate, "bundle", "predictor bundle JSON");
  input_option(evaluate, "log", "event-log CSV");
  key_option(evaluate, "--label-mode", "eval.label_mode", "eventual or next_month (default)");

  auto* score = app.add_subcommand("score", "score running cases");
  input_option(score, "bundle", "predictor bundle JSON");
  input_option(score, "log", "event-log CSV");
  key_option(score, "--as-of", "score.as_of", "score events up to this month, YYYY-MM");

  auto* experiment = app.add_subcommand("experiment", "run the A/B harness on a simulated field population");
  input_option(experiment, "bundle", "predictor bundle JSON");
  key_option(experiment, "--n", "sim.n", "field population size");
  key_option(experiment, "--policies", "design.policies", "comma list of none, email");
  key_option(experiment, "--replications", "design.replications", "number of replications");
  key_option(experiment, "--threshold", "design.threshold", "flagging threshold override");

  auto* report = app.add_subcommand("report", "results summary, feature importance and pre-assessment");
  input_option(report, "results", "experiment output directory");
  input_option(report, "bundle", "predictor bundle JSON");
  input_option(report, "log", "event-log CSV for pre-assessment");
  key_option(report, "--marker", "report.marker", "activity to pre-assess");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    Run run;
    if (!manifest_path.empty()) {
      if (!app.get_subcommands().empty()) throw Error("--manifest replays a run; do not give a subcommand");
      run = run_from_manifest(manifest_path);
    } else {
      if (app.get_subcommands().empty()) throw Error("a subcommand is required (see --help)");
      run.command = app.get_subcommands().front()->get_name();
      if (!config_path.empty()) run.settings = Settings::parse_file(config_path);
      for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
        run.settings.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      run.settings.merge(flags);
      if (seed) run.settings.set("seed", std::to_string(*seed));
      if (!run.settings.has("seed")) run.settings.set("seed", "1");
      run.inputs = inputs;
    }
    run.out = out_dir;
    run.threads = threads;
    execute(run);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
