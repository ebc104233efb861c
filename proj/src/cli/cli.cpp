#include "healthprism/cli/cli.hpp"

#include <csignal>
#include <pthread.h>
#include <signal.h>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "healthprism/analytics/analytics.hpp"
#include "healthprism/dataio/io.hpp"
#include "healthprism/dataio/preprocess.hpp"
#include "healthprism/dataio/schema.hpp"
#include "healthprism/dataio/synth.hpp"
#include "healthprism/hash.hpp"
#include "healthprism/interpret/importance.hpp"
#include "healthprism/interpret/influence.hpp"
#include "healthprism/model/metrics.hpp"
#include "healthprism/model/train.hpp"
#include "healthprism/service/service.hpp"

namespace healthprism::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out = ".";
  bool quiet = false;
  bool force = false;
};

struct Options {
  // synth
  std::size_t n = 1000;
  bool csv = false;
  // preprocess
  std::string input, context, motion_dir, labels, schema;
  std::size_t knn_k = 5;
  // train / evaluate / importance / influence / serve
  std::string data;
  std::string models;
  std::string indicator = "all";
  int epochs = 0;
  bool parallel = false;
  std::string streams;
  bool no_gates = false;
  std::string level = "overall";
  std::size_t window = 60;
  std::string id;
  std::vector<std::string> genders, ages;
  std::string feature;
  long motion_start = -1;
  std::size_t motion_w = 0;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t cache_size = 64;
  int timeout = 30;
};

class Context {
 public:
  Context(const Globals& g, std::ostream& out, std::ostream& err) : g_(g), out_(out), err_(err) {
    if (!g_.config.empty()) {
      try {
        config_ = nlohmann::json::parse(dataio::read_file(g_.config));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::config, g_.config + ": " + e.what());
      }
      if (!config_.is_object()) fail(ErrorCode::config, g_.config + ": top level must be an object");
    }
  }

  const Globals& globals() const { return g_; }

  nlohmann::json section(const std::string& name) const {
    if (config_.contains(name)) return config_.at(name);
    return nlohmann::json::object();
  }

  fs::path out_path(const std::string& name) const { return fs::path(g_.out) / name; }

  void check_writable(const std::vector<fs::path>& paths) const {
    for (const auto& p : paths) {
      if (fs::exists(p) && !g_.force) {
        fail(ErrorCode::io, "refusing to overwrite " + p.string() + " (pass --force)");
      }
    }
  }

  void write(const fs::path& path, std::string_view bytes) const {
    check_writable({path});
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    dataio::write_file(path, bytes);
    say("wrote " + path.string() + " sha256=" + sha256_hex(bytes));
  }

  void say(const std::string& line) const {
    if (g_.quiet) return;
    std::lock_guard lock(mutex_);
    out_ << line << '\n';
  }
  void log(std::string_view line) const {
    if (g_.quiet) return;
    std::lock_guard lock(mutex_);
    err_ << line << '\n';
  }
  std::ostream& out() const { return out_; }

 private:
  Globals g_;
  nlohmann::json config_ = nlohmann::json::object();
  std::ostream& out_;
  std::ostream& err_;
  mutable std::mutex mutex_;
};

// Flags recorded into every artifact. Input paths are reduced to their file
// name and content hash so reruns from other directories match.
nlohmann::json echo_flags(const CLI::App& sub, const Globals& g, const Context& ctx) {
  static const std::vector<std::string> kPaths = {"--input", "--context", "--labels", "--schema", "--data"};
  static const std::vector<std::string> kSkip = {"--out", "--force", "--quiet", "--help", "--models", "--motion-dir"};
  nlohmann::json flags = nlohmann::json::object();
  for (const auto* opt : sub.get_options()) {
    if (opt->count() == 0 || opt->get_lnames().empty()) continue;
    const std::string name = "--" + opt->get_lnames().front();
    if (std::find(kSkip.begin(), kSkip.end(), name) != kSkip.end()) continue;
    const auto values = opt->results();
    if (std::find(kPaths.begin(), kPaths.end(), name) != kPaths.end()) {
      const auto& path = values.front();
      flags[name] = {{"file", fs::path(path).filename().string()}, {"sha256", sha256_hex(dataio::read_file(path))}};
    } else if (values.empty()) {
      flags[name] = true;
    } else if (values.size() == 1) {
      flags[name] = values.front();
    } else {
      flags[name] = values;
    }
  }
  nlohmann::json meta = {{"command", sub.get_name()}, {"flags", flags}, {"seed", g.seed}};
  if (!g.config.empty()) meta["config"] = {{"file", fs::path(g.config).filename().string()},
                                           {"sha256", sha256_hex(dataio::read_file(g.config))}};
  (void)ctx;
  return meta;
}

std::vector<Indicator> indicators_arg(const std::string& text) {
  if (text == "all") return {kIndicators.begin(), kIndicators.end()};
  const auto ind = parse_indicator(text);
  if (!ind) {
    fail(ErrorCode::argument, "unknown indicator '" + text + "'; valid: all, MVPA, PHYF, VVAS, PSYF, RESI, CONN");
  }
  return {*ind};
}

dataio::Dataset load_processed(const std::string& path) {
  if (path.empty()) fail(ErrorCode::argument, "--data <processed snapshot> is required");
  try {
    return dataio::read_processed_snapshot(dataio::read_file(path));
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

std::string models_dir(const Options& o, const Context& ctx) { return o.models.empty() ? ctx.globals().out : o.models; }

model::HPModel load_indicator_model(const std::string& dir, Indicator ind) {
  const auto path = (fs::path(dir) / model::artifact_name(ind)).string();
  if (!fs::exists(path)) fail(ErrorCode::io, "model artifact not found: " + path);
  return model::load_model(path);
}

std::vector<std::size_t> subjects(const dataio::Dataset& ds, const Options& o, interpret::Level level) {
  std::vector<std::size_t> members;
  switch (level) {
    case interpret::Level::overall:
      members.resize(ds.participants.size());
      std::iota(members.begin(), members.end(), 0);
      break;
    case interpret::Level::group: {
      analytics::GroupFilter f;
      for (const auto& g : o.genders) {
        const auto v = dataio::parse_gender(g);
        if (!v) fail(ErrorCode::argument, "unknown gender '" + g + "'");
        f.genders.push_back(*v);
      }
      for (const auto& a : o.ages) {
        const auto v = dataio::parse_age_group(a);
        if (!v) fail(ErrorCode::argument, "unknown age group '" + a + "'");
        f.age_groups.push_back(*v);
      }
      members = analytics::select(ds, f);
      if (members.empty()) fail(ErrorCode::argument, "no participants match the group filter");
      break;
    }
    case interpret::Level::individual: {
      if (o.id.empty()) fail(ErrorCode::argument, "--id is required for --level individual");
      const auto i = ds.find(o.id);
      if (!i) fail(ErrorCode::not_found, "unknown participant '" + o.id + "'");
      members.push_back(*i);
      break;
    }
  }
  return members;
}

interpret::Level level_arg(const std::string& text) {
  if (text == "overall") return interpret::Level::overall;
  if (text == "group") return interpret::Level::group;
  if (text == "individual") return interpret::Level::individual;
  fail(ErrorCode::argument, "--level must be overall, group or individual");
}

std::string level_suffix(const Options& o, interpret::Level level) {
  std::string s(interpret::to_string(level));
  if (level == interpret::Level::individual) s += "_" + o.id;
  if (level == interpret::Level::group) {
    for (const auto& g : o.genders) s += "_" + g;
    for (const auto& a : o.ages) s += "_" + a;
  }
  return s;
}

// ---- subcommands ----

void cmd_synth(const Context& ctx, const Options& o, const nlohmann::json& meta) {
  auto cfg = ctx.section("synth");
  auto config = dataio::SynthConfig::from_json(cfg);
  config.seed = ctx.globals().seed;
  if (meta.at("flags").contains("--n") || !cfg.contains("n")) config.n = o.n;
  if (config.n == 0) fail(ErrorCode::config, "invalid synth config: n must be >= 1");
  config.validate();
  const auto path = ctx.out_path("dataset.tar");
  std::vector<fs::path> outputs{path};
  if (o.csv) {
    for (const char* f : {"schema.json", "context.csv", "labels.csv"}) outputs.push_back(ctx.out_path(f));
  }
  ctx.check_writable(outputs);
  const auto raw = dataio::generate_synthetic(config);
  nlohmann::json metadata = meta;
  metadata["synth_config"] = config.to_json();
  ctx.write(path, dataio::write_raw_snapshot(raw, metadata));
  if (o.csv) {
    ctx.write(ctx.out_path("schema.json"), raw.schema.to_json().dump(2) + "\n");
    ctx.write(ctx.out_path("context.csv"), dataio::format_context(raw.schema, raw.context));
    std::vector<std::string> ids;
    for (const auto& r : raw.context) ids.push_back(r.participant_id);
    ctx.write(ctx.out_path("labels.csv"), dataio::format_labels(ids, raw.labels));
    for (const auto& m : raw.motion) {
      ctx.write(ctx.out_path("motion") / (m.participant_id + ".csv"), dataio::format_motion(m));
    }
  }
}

void cmd_preprocess(const Context& ctx, const Options& o, const nlohmann::json& meta) {
  dataio::RawDataset raw;
  if (!o.input.empty()) {
    try {
      raw = dataio::read_raw_snapshot(dataio::read_file(o.input));
    } catch (const Error& e) {
      fail(e.code(), o.input + ": " + e.what());
    }
  } else if (!o.context.empty() && !o.motion_dir.empty() && !o.labels.empty() && !o.schema.empty()) {
    raw = dataio::load_dataset(o.context, o.motion_dir, o.labels, o.schema);
  } else {
    fail(ErrorCode::argument, "give --input <raw snapshot> or all of --context, --motion-dir, --labels, --schema");
  }
  dataio::PreprocessOptions options;
  options.knn_k = ctx.section("preprocess").value("knn_k", o.knn_k);
  if (meta.at("flags").contains("--knn-k")) options.knn_k = o.knn_k;
  const auto snapshot = ctx.out_path("processed.tar");
  const auto report_path = ctx.out_path("preprocess_report.json");
  ctx.check_writable({snapshot, report_path});
  const auto result = dataio::preprocess(raw, options);
  auto report = result.report.to_json();
  report["metadata"] = meta;
  ctx.write(snapshot, dataio::write_processed_snapshot(result.dataset, result.report, meta));
  ctx.write(report_path, report.dump(2) + "\n");
}

void cmd_train(const Context& ctx, const Options& o, const nlohmann::json& meta) {
  const auto indicators = indicators_arg(o.indicator);
  const auto dataset = load_processed(o.data);
  auto model_config = model::ModelConfig::from_json(ctx.section("model"));
  if (!o.streams.empty()) model_config.streams = model::parse_streams(o.streams);
  if (o.no_gates) model_config.use_gates = false;
  model_config.context_length = static_cast<int>(dataset.schema.encoded_width());
  model_config.validate();
  auto train_config = model::TrainConfig::from_json(ctx.section("train"));
  train_config.seed = ctx.globals().seed;
  if (o.epochs > 0) train_config.epochs = o.epochs;
  train_config.validate();

  std::vector<fs::path> outputs;
  for (auto ind : indicators) {
    outputs.push_back(ctx.out_path(model::artifact_name(ind)));
    outputs.push_back(ctx.out_path("train_report_" + std::string(to_string(ind)) + ".json"));
  }
  ctx.check_writable(outputs);

  std::vector<std::optional<model::TrainResult>> results(indicators.size());
  std::vector<std::exception_ptr> errors(indicators.size());
  auto job = [&](std::size_t k) {
    try {
      const std::string tag(to_string(indicators[k]));
      results[k] = model::train(dataset, indicators[k], train_config, model_config,
                                [&](std::string_view line) { ctx.log(tag + ": " + std::string(line)); });
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (o.parallel) {
    std::vector<std::thread> threads;
    for (std::size_t k = 0; k < indicators.size(); ++k) threads.emplace_back(job, k);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t k = 0; k < indicators.size(); ++k) job(k);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t k = 0; k < indicators.size(); ++k) {
    auto& [m, report] = *results[k];
    std::vector<double> probs;
    for (const auto& p : dataset.participants) probs.push_back(m.predict(p));
    const auto [lo, hi] = std::minmax_element(probs.begin(), probs.end());
    m.population_range = std::array<double, 2>{*lo, *hi};
    m.metadata = meta;
    m.metadata["train_config"] = train_config.to_json();
    m.metadata["test_auc"] = report.test_auc;
    auto report_json = report.to_json();
    report_json["metadata"] = meta;
    report_json["model_config"] = m.config().to_json();
    report_json["train_config"] = train_config.to_json();
    const std::string tag(to_string(indicators[k]));
    ctx.write(ctx.out_path(model::artifact_name(indicators[k])), model::serialize_model(m));
    ctx.write(ctx.out_path("train_report_" + tag + ".json"), report_json.dump(2) + "\n");
    ctx.say(tag + " test AUC " + std::to_string(report.test_auc));
  }
}

void cmd_evaluate(const Context& ctx, const Options& o, const nlohmann::json& meta) {
  const auto dataset = load_processed(o.data);
  const auto dir = models_dir(o, ctx);
  const auto out_path = ctx.out_path("evaluation.json");
  ctx.check_writable({out_path});
  nlohmann::json rows = nlohmann::json::array();
  std::vector<double> aucs;
  std::ostringstream table;
  table << std::left << std::setw(10) << "indicator" << std::right << std::setw(8) << "AUC" << std::setw(8)
        << "n_test" << '\n';
  for (auto ind : kIndicators) {
    const auto path = fs::path(dir) / model::artifact_name(ind);
    if (!fs::exists(path)) continue;
    const auto m = model::load_model(path.string());
    const auto tc = model::TrainConfig::from_json(m.metadata.value("train_config", nlohmann::json::object()));
    const auto labels = model::labels_of(dataset, ind);
    const auto split = model::stratified_split(labels, tc.test_fraction, derive_seed(m.training_seed, index_of(ind)));
    std::vector<double> scores;
    std::vector<std::uint8_t> ys;
    for (auto i : split.test) {
      scores.push_back(m.predict(dataset.participants[i]));
      ys.push_back(labels[i]);
    }
    const double auc = model::evaluate_auc(scores, ys);
    aucs.push_back(auc);
    rows.push_back({{"indicator", std::string(to_string(ind))}, {"auc", auc}, {"n_test", split.test.size()}});
    table << std::left << std::setw(10) << to_string(ind) << std::right << std::setw(8) << std::fixed
          << std::setprecision(4) << auc << std::setw(8) << split.test.size() << '\n';
  }
  if (aucs.empty()) fail(ErrorCode::io, "no model artifacts found in " + dir);
  const double mauc = model::mean_auc(aucs);
  table << std::left << std::setw(10) << "mAUC" << std::right << std::setw(8) << std::fixed << std::setprecision(4)
        << mauc << std::setw(8) << aucs.size() << '\n';
  nlohmann::json doc = {{"v", 1}, {"indicators", rows}, {"mauc", mauc}, {"models", aucs.size()}, {"metadata", meta}};
  ctx.out() << table.str();
  ctx.out() << doc.dump() << '\n';
  ctx.write(out_path, doc.dump(2) + "\n");
}

void cmd_importance(const Context& ctx, const Options& o, const nlohmann::json& meta) {
  if (!interpret::valid_window(o.window)) fail(ErrorCode::argument, "--window must be one of 5, 10, ..., 120");
  const auto level = level_arg(o.level);
  const auto indicators = indicators_arg(o.indicator);
  const auto dataset = load_processed(o.data);
  const auto members = subjects(dataset, o, level);
  const auto dir = models_dir(o, ctx);
  std::vector<fs::path> outputs;
  for (auto ind : indicators) {
    outputs.push_back(ctx.out_path("importance_" + level_suffix(o, level) + "_" + std::string(to_string(ind)) + ".json"));
  }
  ctx.check_writable(outputs);
  for (std::size_t k = 0; k < indicators.size(); ++k) {
    const auto m = load_indicator_model(dir, indicators[k]);
    const auto agg = interpret::aggregate_importance(m, dataset, members);
    const auto ranked = interpret::rank_importance(dataset.schema, agg, indicators[k], o.window);
    nlohmann::json features = nlohmann::json::object();
    if (!agg.context.context.empty()) {
      const auto fi = interpret::feature_importance(dataset.schema, agg.context.context);
      for (std::size_t f = 0; f < fi.size(); ++f) features[dataset.schema[f].id] = fi[f];
    }
    nlohmann::json windows = nlohmann::json::array();
    if (!agg.motion.combined.empty()) {
      for (const auto& w : interpret::rank_windows(agg.motion.combined, o.window, interpret::kMotionCandidates)) {
        windows.push_back({{"start", w.start}, {"mean", w.mean}});
      }
    }
    nlohmann::json doc = {{"v", 1},
                          {"level", std::string(interpret::to_string(level))},
                          {"indicator", std::string(to_string(indicators[k]))},
                          {"window", o.window},
                          {"members", members.size()},
                          {"ranked", ranked.to_json()},
                          {"features", features},
                          {"windows", windows},
                          {"context", agg.context.context},
                          {"motion_combined", agg.motion.combined},
                          {"metadata", meta}};
    ctx.write(outputs[k], doc.dump() + "\n");
  }
}

void cmd_influence(const Context& ctx, const Options& o, const nlohmann::json& meta) {
  const auto level = level_arg(o.level);
  const auto indicators = indicators_arg(o.indicator);
  if (indicators.size() != 1) fail(ErrorCode::argument, "influence takes a single --indicator");
  const bool motion = o.motion_start >= 0;
  if (motion == !o.feature.empty()) fail(ErrorCode::argument, "give exactly one of --feature or --motion-start");
  if (motion && !interpret::valid_window(o.motion_w)) fail(ErrorCode::argument, "--motion-w must be one of 5, 10, ..., 120");
  const auto dataset = load_processed(o.data);
  const auto members = subjects(dataset, o, level);
  const auto m = load_indicator_model(models_dir(o, ctx), indicators.front());
  const std::string what = motion ? "motion_" + std::to_string(o.motion_start) + "_" + std::to_string(o.motion_w) : o.feature;
  const auto path = ctx.out_path("influence_" + level_suffix(o, level) + "_" + std::string(to_string(indicators.front())) +
                                 "_" + what + ".json");
  ctx.check_writable({path});
  const interpret::InfluenceEngine engine(m, dataset);
  interpret::InfluenceCurve curve;
  if (motion) {
    curve = engine.motion_window(static_cast<std::size_t>(o.motion_start), o.motion_w, members, level);
  } else {
    const auto f = dataset.schema.find(o.feature);
    if (!f) fail(ErrorCode::not_found, "unknown feature '" + o.feature + "'");
    curve = dataset.schema[*f].kind == dataio::FeatureKind::numeric ? engine.numeric(o.feature, members, level)
                                                                    : engine.categorical(o.feature, members, level);
  }
  auto doc = curve.to_json();
  doc["v"] = 1;
  doc["members"] = members.size();
  doc["metadata"] = meta;
  ctx.write(path, doc.dump(2) + "\n");
}

void cmd_serve(const Context& ctx, const Options& o) {
  service::ServiceConfig config;
  const auto sec = ctx.section("serve");
  config.host = sec.value("host", o.host);
  config.port = sec.value("port", o.port);
  config.cache_size = sec.value("cache_size", o.cache_size);
  config.timeout_seconds = sec.value("timeout", o.timeout);
  if (o.host != "127.0.0.1") config.host = o.host;
  if (o.port != 8080) config.port = o.port;
  if (o.cache_size != 64) config.cache_size = o.cache_size;
  if (o.timeout != 30) config.timeout_seconds = o.timeout;
  config.snapshot = o.data;
  config.model_dir = models_dir(o, ctx);
  config.validate();

  // Signals are taken synchronously on a dedicated thread; the server
  // threads inherit the blocked mask.
  sigset_t set;
  sigemptyset(&set);
  for (int s : {SIGINT, SIGTERM, SIGHUP, SIGUSR1}) sigaddset(&set, s);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  service::Service svc(config);
  std::thread watcher([&] {
    for (;;) {
      int sig = 0;
      if (sigwait(&set, &sig) != 0) continue;
      if (sig == SIGHUP) {
        try {
          svc.reload();
          ctx.log("reloaded snapshot and models");
        } catch (const Error& e) {
          ctx.log("reload failed: " + std::string(to_string(e.code())) + ": " + e.what());
        }
        continue;
      }
      if (sig != SIGUSR1) svc.stop();
      return;
    }
  });
  ctx.say("serving on http://" + config.host + ":" + std::to_string(config.port));
  std::exception_ptr error;
  try {
    svc.run();
  } catch (...) {
    error = std::current_exception();
  }
  pthread_kill(watcher.native_handle(), SIGUSR1);
  watcher.join();
  pthread_sigmask(SIG_UNBLOCK, &set, nullptr);
  if (error) std::rethrow_exception(error);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"HealthPrism health profiling engine", "healthprism"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  Options o;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--config", g.config, "JSON config with synth/preprocess/model/train/serve sections");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");
  app.add_flag("--force", g.force, "Overwrite existing outputs");

  auto* synth = app.add_subcommand("synth", "Generate a planted-effect synthetic cohort");
  synth->add_option("--n", o.n, "Participants");
  synth->add_flag("--csv", o.csv, "Also write the plain file set");

  auto* pre = app.add_subcommand("preprocess", "Impute, scale, encode and extract weekly patterns");
  pre->add_option("--input", o.input, "Raw dataset snapshot");
  pre->add_option("--context", o.context, "context.csv");
  pre->add_option("--motion-dir", o.motion_dir, "Directory of <id>.csv motion files");
  pre->add_option("--labels", o.labels, "labels.csv");
  pre->add_option("--schema", o.schema, "schema.json");
  pre->add_option("--knn-k", o.knn_k, "Neighbours used for imputation");

  auto* train = app.add_subcommand("train", "Train indicator models");
  train->add_option("--data", o.data, "Processed snapshot")->required();
  train->add_option("--indicator", o.indicator, "all or one of MVPA, PHYF, VVAS, PSYF, RESI, CONN");
  train->add_option("--epochs", o.epochs, "Override the configured epoch count");
  train->add_flag("--parallel", o.parallel, "Train indicators concurrently");
  train->add_option("--streams", o.streams, "both, context_only or motion_only");
  train->add_flag("--no-gates", o.no_gates, "Train the gate-less ablation");

  auto* eval = app.add_subcommand("evaluate", "Held-out AUC per indicator and mAUC");
  eval->add_option("--data", o.data, "Processed snapshot")->required();
  eval->add_option("--models", o.models, "Model directory (default: --out)");

  auto* imp = app.add_subcommand("importance", "Export ranked feature importance");
  imp->add_option("--data", o.data, "Processed snapshot")->required();
  imp->add_option("--models", o.models, "Model directory (default: --out)");
  imp->add_option("--level", o.level, "overall, group or individual");
  imp->add_option("--window", o.window, "Motion window W in minutes");
  imp->add_option("--indicator", o.indicator, "all or one indicator");
  imp->add_option("--id", o.id, "Participant (individual level)");
  imp->add_option("--genders", o.genders, "Group filter")->delimiter(',');
  imp->add_option("--ages", o.ages, "Group filter")->delimiter(',');

  auto* inf = app.add_subcommand("influence", "Export a perturbation influence curve");
  inf->add_option("--data", o.data, "Processed snapshot")->required();
  inf->add_option("--models", o.models, "Model directory (default: --out)");
  inf->add_option("--indicator", o.indicator, "Indicator")->required();
  inf->add_option("--feature", o.feature, "Context feature id");
  inf->add_option("--motion-start", o.motion_start, "Motion window start slot");
  inf->add_option("--motion-w", o.motion_w, "Motion window width");
  inf->add_option("--level", o.level, "overall, group or individual");
  inf->add_option("--id", o.id, "Participant (individual level)");
  inf->add_option("--genders", o.genders, "Group filter")->delimiter(',');
  inf->add_option("--ages", o.ages, "Group filter")->delimiter(',');

  auto* serve = app.add_subcommand("serve", "Run the HTTP JSON service");
  serve->add_option("--data", o.data, "Processed snapshot")->required();
  serve->add_option("--models", o.models, "Model directory (default: --out)");
  serve->add_option("--host", o.host, "Listen address");
  serve->add_option("--port", o.port, "Listen port");
  serve->add_option("--cache-size", o.cache_size, "Memoized responses");
  serve->add_option("--timeout", o.timeout, "Request timeout in seconds");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: argument_error: " << e.what() << '\n';
    return 2;
  }

  try {
    const Context ctx(g, out, err);
    const CLI::App* sub = app.get_subcommands().front();
    // Globals may follow the subcommand; fold them into the echo.
    auto meta = echo_flags(*sub, g, ctx);
    if (sub == synth) cmd_synth(ctx, o, meta);
    if (sub == pre) cmd_preprocess(ctx, o, meta);
    if (sub == train) cmd_train(ctx, o, meta);
    if (sub == eval) cmd_evaluate(ctx, o, meta);
    if (sub == imp) cmd_importance(ctx, o, meta);
    if (sub == inf) cmd_influence(ctx, o, meta);
    if (sub == serve) cmd_serve(ctx, o);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal_error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace healthprism::cli
