#include "healthprism/service/service.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <numeric>
#include <sstream>

#include <httplib.h>

#include "healthprism/dataio/io.hpp"
#include "healthprism/dataio/schema.hpp"
#include "healthprism/hash.hpp"
#include "healthprism/interpret/importance.hpp"

namespace healthprism::service {

namespace {

constexpr int kApiVersion = 1;

struct ApiError {
  int status;
  std::string code;
  std::string field;
  std::string message;
};

[[noreturn]] void bad(const std::string& field, const std::string& message) {
  throw ApiError{400, "invalid_parameter", field, message};
}

nlohmann::json envelope(nlohmann::json body) {
  body["v"] = kApiVersion;
  return body;
}

Response error_response(const ApiError& e) {
  nlohmann::json err = {{"code", e.code}, {"message", e.message}};
  if (!e.field.empty()) err["field"] = e.field;
  return {e.status, envelope({{"error", err}}).dump()};
}

std::optional<std::string> param(const Query& q, const std::string& key) {
  const auto it = q.find(key);
  if (it == q.end()) return std::nullopt;
  return it->second;
}

// Comma-separated and/or repeated values; nullopt when the key is absent.
std::optional<std::vector<std::string>> list_param(const Query& q, const std::string& key) {
  const auto [lo, hi] = q.equal_range(key);
  if (lo == hi) return std::nullopt;
  std::vector<std::string> out;
  for (auto it = lo; it != hi; ++it) {
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
  }
  return out;
}

long parse_long(const std::string& field, const std::string& text) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) bad(field, field + " must be an integer");
  return v;
}

std::size_t window_param(const Query& q, const std::string& key = "window", std::size_t fallback = 60) {
  const auto text = param(q, key);
  if (!text) return fallback;
  const long w = parse_long(key, *text);
  if (w < 0 || !interpret::valid_window(static_cast<std::size_t>(w))) {
    bad(key, key + " must be one of 5, 10, ..., 120");
  }
  return static_cast<std::size_t>(w);
}

std::pair<std::size_t, std::size_t> range_param(const Query& q) {
  long from = 0, to = static_cast<long>(kWeekMinutes);
  if (const auto t = param(q, "from")) from = parse_long("from", *t);
  if (const auto t = param(q, "to")) to = parse_long("to", *t);
  if (from < 0 || from >= static_cast<long>(kWeekMinutes)) bad("from", "from must lie in [0, 10080)");
  if (to <= from || to > static_cast<long>(kWeekMinutes)) bad("to", "to must lie in (from, 10080]");
  return {static_cast<std::size_t>(from), static_cast<std::size_t>(to)};
}

Indicator indicator_param(const Query& q) {
  const auto text = param(q, "indicator");
  if (!text) bad("indicator", "indicator is required");
  const auto ind = parse_indicator(*text);
  if (!ind) bad("indicator", "indicator must be one of MVPA, PHYF, VVAS, PSYF, RESI, CONN");
  return *ind;
}

std::vector<Indicator> indicators_param(const Query& q) {
  const auto items = list_param(q, "indicators");
  if (!items) return {kIndicators.begin(), kIndicators.end()};
  if (items->empty()) bad("indicators", "indicators must be nonempty");
  std::array<bool, kIndicatorCount> on{};
  for (const auto& s : *items) {
    const auto ind = parse_indicator(s);
    if (!ind) bad("indicators", "unknown indicator '" + s + "'");
    on[index_of(*ind)] = true;
  }
  std::vector<Indicator> out;
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    if (on[k]) out.push_back(kIndicators[k]);
  }
  return out;
}

analytics::GroupFilter filter_param(const Query& q, bool with_indicators) {
  analytics::GroupFilter f;
  if (const auto g = list_param(q, "genders")) {
    for (const auto& s : *g) {
      const auto v = dataio::parse_gender(s);
      if (!v) bad("genders", "unknown gender '" + s + "'");
      f.genders.push_back(*v);
    }
  }
  if (const auto a = list_param(q, "ages")) {
    for (const auto& s : *a) {
      const auto v = dataio::parse_age_group(s);
      if (!v) bad("ages", "unknown age group '" + s + "'");
      f.age_groups.push_back(*v);
    }
  }
  f.indicators = with_indicators ? indicators_param(q) : std::vector<Indicator>{kIndicators.begin(), kIndicators.end()};
  return f;
}

std::vector<std::size_t> members_of(const Snapshot& s, const analytics::GroupFilter& f) {
  auto members = analytics::select(s.dataset, f);
  if (members.empty()) throw ApiError{404, "not_found", "", "no participants match the group filter"};
  return members;
}

std::size_t participant_index(const Snapshot& s, const std::string& id) {
  const auto i = s.dataset.find(id);
  if (!i) throw ApiError{404, "not_found", "id", "unknown participant '" + id + "'"};
  return *i;
}

std::vector<const dataio::Participant*> pointers(const Snapshot& s, std::span<const std::size_t> members) {
  std::vector<const dataio::Participant*> out;
  for (auto i : members) out.push_back(&s.dataset.participants[i]);
  return out;
}

nlohmann::json ranked_importance(const Snapshot& s, Indicator ind, std::size_t window,
                                 std::span<const std::size_t> members) {
  const auto agg = interpret::aggregate_importance(s.models[index_of(ind)], s.dataset, members);
  return interpret::rank_importance(s.dataset.schema, agg, ind, window).to_json();
}

nlohmann::json influence(const Snapshot& s, const Query& q, std::span<const std::size_t> members,
                         interpret::Level level) {
  const Indicator ind = indicator_param(q);
  const auto& engine = *s.engines[index_of(ind)];
  const auto feature = param(q, "feature");
  const auto start = param(q, "motion_start");
  if (feature && start) bad("feature", "give either feature or motion_start/motion_w, not both");
  if (feature) {
    const auto f = s.dataset.schema.find(*feature);
    if (!f) bad("feature", "unknown feature '" + *feature + "'");
    if (s.dataset.schema[*f].kind == dataio::FeatureKind::numeric) {
      return engine.numeric(*feature, members, level).to_json();
    }
    return engine.categorical(*feature, members, level).to_json();
  }
  if (!start) bad("feature", "feature or motion_start is required");
  const long st = parse_long("motion_start", *start);
  if (st < 0 || st >= static_cast<long>(kWeekMinutes)) bad("motion_start", "motion_start must lie in [0, 10080)");
  const std::size_t w = window_param(q, "motion_w", 0);
  if (w == 0) bad("motion_w", "motion_w is required with motion_start");
  if (static_cast<std::size_t>(st) + w > kWeekMinutes) bad("motion_w", "motion window runs past the end of the week");
  return engine.motion_window(static_cast<std::size_t>(st), w, members, level).to_json();
}

// Raw areas and in-group normalization for the selected indicators.
struct GroupScores {
  std::vector<std::vector<double>> profiles;
  std::vector<double> raw;
  std::vector<double> normalized;
  analytics::Divisions divisions;
};

GroupScores group_scores(const Snapshot& s, std::span<const std::size_t> members,
                         const std::vector<Indicator>& indicators) {
  GroupScores g;
  for (auto i : members) {
    std::vector<double> prof;
    for (auto ind : indicators) prof.push_back(s.predictions.normalized[index_of(ind)][i]);
    g.raw.push_back(analytics::profile_score(prof));
    g.profiles.push_back(std::move(prof));
  }
  g.normalized = analytics::normalize_scores(g.raw);
  g.divisions = analytics::divide_3sigma(g.normalized);
  return g;
}

nlohmann::json indicator_names(const std::vector<Indicator>& inds) {
  nlohmann::json out = nlohmann::json::array();
  for (auto i : inds) out.push_back(std::string(to_string(i)));
  return out;
}

nlohmann::json profile_json(const Snapshot& s, std::size_t i, const std::vector<Indicator>& indicators,
                            const analytics::GroupFilter& filter) {
  const auto& p = s.dataset.participants[i];
  auto members = analytics::select(s.dataset, filter);
  if (!filter.admits(p)) members.push_back(i);
  std::sort(members.begin(), members.end());
  const auto g = group_scores(s, members, indicators);
  const auto pos = static_cast<std::size_t>(std::lower_bound(members.begin(), members.end(), i) - members.begin());
  nlohmann::json probs = nlohmann::json::object();
  nlohmann::json norm = nlohmann::json::object();
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const std::string name(to_string(kIndicators[k]));
    probs[name] = s.predictions.probability[k][i];
    norm[name] = s.predictions.normalized[k][i];
  }
  return {{"id", p.id},
          {"gender", std::string(dataio::to_string(p.gender))},
          {"age", p.age},
          {"age_group", std::string(dataio::to_string(p.age_group))},
          {"learning_mode", std::string(dataio::to_string(p.learning_mode))},
          {"indicators", indicator_names(indicators)},
          {"values", g.profiles[pos]},
          {"probability", probs},
          {"normalized", norm},
          {"raw_area", g.raw[pos]},
          {"score", g.normalized[pos]},
          {"division", g.divisions.division[pos]},
          {"group_size", members.size()}};
}

nlohmann::json context_json(const Snapshot& s, std::size_t i) {
  const auto& p = s.dataset.participants[i];
  nlohmann::json feats = nlohmann::json::array();
  for (std::size_t f = 0; f < s.dataset.schema.size(); ++f) {
    const auto& d = s.dataset.schema[f];
    nlohmann::json e = {{"id", d.id},
                        {"name", d.name},
                        {"category", d.category},
                        {"imputed", p.imputed_mask.at(f) != 0},
                        {"scaled", analytics::scaled_feature(s.dataset, p, f)}};
    std::visit([&](const auto& v) { e["value"] = v; }, p.completed.at(f));
    feats.push_back(std::move(e));
  }
  return {{"id", p.id}, {"features", feats}, {"pattern", p.context.values}};
}

}  // namespace

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) fail(ErrorCode::config, "port must lie in [0, 65535]");
  if (!std::filesystem::exists(snapshot)) fail(ErrorCode::io, "dataset snapshot not found: " + snapshot);
  if (!std::filesystem::is_directory(model_dir)) fail(ErrorCode::io, "model directory not found: " + model_dir);
  if (cache_size == 0) fail(ErrorCode::config, "cache_size must be >= 1");
  if (timeout_seconds < 1) fail(ErrorCode::config, "timeout_seconds must be >= 1");
}

std::optional<std::string> ResponseCache::get(const std::string& key) {
  std::lock_guard lock(mutex_);
  const auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  order_.splice(order_.begin(), order_, it->second);
  return it->second->second;
}

void ResponseCache::put(const std::string& key, std::string body) {
  std::lock_guard lock(mutex_);
  if (const auto it = index_.find(key); it != index_.end()) {
    it->second->second = std::move(body);
    order_.splice(order_.begin(), order_, it->second);
    return;
  }
  order_.emplace_front(key, std::move(body));
  index_[key] = order_.begin();
  while (order_.size() > capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
}

void ResponseCache::clear() {
  std::lock_guard lock(mutex_);
  order_.clear();
  index_.clear();
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  return order_.size();
}

std::string canonical_key(const std::string& path, const Query& query) {
  std::vector<std::pair<std::string, std::string>> items(query.begin(), query.end());
  std::sort(items.begin(), items.end());
  std::string key = path + "?";
  for (const auto& [k, v] : items) key += httplib::detail::encode_query_param(k) + "=" + httplib::detail::encode_query_param(v) + "&";
  return key;
}

std::shared_ptr<const Snapshot> Snapshot::load(const ServiceConfig& config) {
  auto s = std::make_shared<Snapshot>();
  {
    std::string bytes;
    try {
      bytes = dataio::read_file(config.snapshot);
      s->dataset = dataio::read_processed_snapshot(bytes);
    } catch (const Error& e) {
      fail(e.code(), "dataset snapshot " + config.snapshot + ": " + e.what());
    }
    s->dataset_hash = sha256_hex(bytes);
  }
  s->models.reserve(kIndicatorCount);
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const auto name = model::artifact_name(kIndicators[k]);
    const auto path = (std::filesystem::path(config.model_dir) / name).string();
    std::string bytes;
    try {
      bytes = dataio::read_file(path);
      s->models.push_back(model::deserialize_model(bytes));
    } catch (const Error& e) {
      fail(e.code(), "model artifact " + name + ": " + e.what());
    }
    const auto& m = s->models.back();
    if (m.indicator != kIndicators[k]) fail(ErrorCode::integrity, "model artifact " + name + " holds another indicator");
    if (!m.trained) fail(ErrorCode::state, "model artifact " + name + " is not trained");
    if (m.config().uses_context() &&
        static_cast<std::size_t>(m.config().context_length) != s->dataset.schema.encoded_width()) {
      fail(ErrorCode::integrity, "model artifact " + name + " does not match the dataset schema");
    }
    s->model_hashes[k] = model::artifact_hash(bytes);
  }
  s->predictions.ids.reserve(s->dataset.participants.size());
  for (const auto& p : s->dataset.participants) s->predictions.ids.push_back(p.id);
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    s->engines.push_back(std::make_unique<interpret::InfluenceEngine>(s->models[k], s->dataset));
    auto& probs = s->predictions.probability[k];
    for (std::size_t i = 0; i < s->dataset.participants.size(); ++i) probs.push_back(s->engines[k]->probability(i));
    s->predictions.normalized[k] = model::minmax_normalize(probs);
  }
  std::vector<std::string> numeric;
  for (auto f : s->dataset.schema.numeric()) numeric.push_back(s->dataset.schema[f].id);
  if (s->dataset.participants.size() >= 3) s->correlation = analytics::spearman_matrix(s->dataset, numeric);
  return s;
}

Service::Service(ServiceConfig config) : config_(std::move(config)), cache_(config_.cache_size) {
  config_.validate();
  snapshot_ = Snapshot::load(config_);
}

Service::Service(ServiceConfig config, std::shared_ptr<const Snapshot> snapshot)
    : config_(std::move(config)), snapshot_(std::move(snapshot)), cache_(std::max<std::size_t>(1, config_.cache_size)) {}

void Service::reload() {
  std::unique_lock lock(reload_mutex_);
  snapshot_ = Snapshot::load(config_);
  cache_.clear();
}

Response Service::handle(const std::string& path, const Query& query) {
  std::shared_lock lock(reload_mutex_, std::try_to_lock);
  if (!lock.owns_lock()) return error_response({503, "reloading", "", "artifacts are being reloaded; retry shortly"});
  const auto key = canonical_key(path, query);
  if (auto hit = cache_.get(key)) return {200, std::move(*hit)};
  Response r;
  try {
    r = dispatch(*snapshot_, path, query);
  } catch (const ApiError& e) {
    return error_response(e);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::not_found:
        return error_response({404, "not_found", "", e.what()});
      case ErrorCode::argument:
      case ErrorCode::type:
      case ErrorCode::encoding:
      case ErrorCode::parse:
        return error_response({400, std::string(to_string(e.code())), "", e.what()});
      default:
        return error_response({500, std::string(to_string(e.code())), "", e.what()});
    }
  }
  if (r.status == 200) cache_.put(key, r.body);
  return r;
}

Response Service::dispatch(const Snapshot& s, const std::string& path, const Query& q) const {
  auto ok = [](nlohmann::json body) { return Response{200, envelope(std::move(body)).dump()}; };
  const auto& ds = s.dataset;
  std::vector<std::size_t> everyone(ds.participants.size());
  std::iota(everyone.begin(), everyone.end(), 0);

  if (path == "/api/health") {
    nlohmann::json models = nlohmann::json::object();
    for (std::size_t k = 0; k < kIndicatorCount; ++k) models[std::string(to_string(kIndicators[k]))] = s.model_hashes[k];
    return ok({{"status", "ok"},
               {"dataset_hash", s.dataset_hash},
               {"models", models},
               {"participants", ds.participants.size()}});
  }
  if (path == "/api/schema") {
    return ok({{"features", ds.schema.to_json()},
               {"indicators", indicator_names({kIndicators.begin(), kIndicators.end()})},
               {"context_width", ds.schema.encoded_width()}});
  }
  if (path == "/api/summary/categorical") {
    const auto ptrs = pointers(s, everyone);
    nlohmann::json flows = nlohmann::json::array();
    for (const auto& f : analytics::sankey_aggregate(ptrs)) {
      flows.push_back({{"source", f.source}, {"target", f.target}, {"count", f.count}});
    }
    return ok({{"flows", flows}});
  }
  if (path == "/api/summary/correlation") {
    std::size_t top = 10;
    if (const auto t = param(q, "top")) {
      const long v = parse_long("top", *t);
      if (v < 1) bad("top", "top must be >= 1");
      top = static_cast<std::size_t>(v);
    }
    const auto& feats = s.correlation.features;
    auto feature_pos = [&](const std::string& name) -> std::size_t {
      const auto it = std::find(feats.begin(), feats.end(), name);
      if (it == feats.end()) bad("pin", "unknown numeric feature '" + name + "'");
      return static_cast<std::size_t>(it - feats.begin());
    };
    std::vector<std::pair<std::size_t, std::size_t>> pins;
    if (const auto items = list_param(q, "pin")) {
      for (const auto& item : *items) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) bad("pin", "pins take the form a:b");
        const auto a = feature_pos(item.substr(0, colon));
        const auto b = feature_pos(item.substr(colon + 1));
        if (a == b) bad("pin", "a pinned pair needs two different features");
        pins.emplace_back(a, b);
      }
    }
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : analytics::top_pairs(s.correlation, top, pins)) {
      pairs.push_back({{"a", feats[p.i]}, {"b", feats[p.j]}, {"rho", p.rho}, {"p_value", p.p_value}, {"pinned", p.pinned}});
    }
    auto body = s.correlation.to_json();
    body["pairs"] = pairs;
    return ok(std::move(body));
  }
  if (path == "/api/summary/importance") {
    const auto ind = indicator_param(q);
    return ok(ranked_importance(s, ind, window_param(q), everyone));
  }
  if (path == "/api/summary/influence") return ok(influence(s, q, everyone, interpret::Level::overall));
  if (path == "/api/summary/motion") {
    const auto w = window_param(q);
    const auto [from, to] = range_param(q);
    const auto ptrs = pointers(s, everyone);
    return ok(analytics::motion_summary(ptrs, w, from, to).to_json());
  }

  if (path == "/api/group/graph") {
    const auto filter = filter_param(q, true);
    const auto view = param(q, "view").value_or("graph");
    if (view != "graph" && view != "table") bad("view", "view must be graph or table");
    const auto members = analytics::select(ds, filter);
    std::vector<std::string> ids;
    std::vector<std::vector<double>> profiles;
    const auto g = group_scores(s, members, filter.indicators);
    for (auto i : members) ids.push_back(ds.participants[i].id);
    auto graph = analytics::build_similarity_graph(ids, g.profiles);
    auto body = graph.to_json();
    body["indicators"] = indicator_names(filter.indicators);
    if (view == "table") {
      auto rows = body["nodes"];
      std::vector<nlohmann::json> sorted(rows.begin(), rows.end());
      std::stable_sort(sorted.begin(), sorted.end(), [](const nlohmann::json& a, const nlohmann::json& b) {
        return a["score"].get<double>() > b["score"].get<double>();
      });
      body.erase("edges");
      body["nodes"] = sorted;
    }
    body["view"] = view;
    return ok(std::move(body));
  }
  if (path == "/api/group/importance") {
    const auto ind = indicator_param(q);
    const auto members = members_of(s, filter_param(q, false));
    return ok(ranked_importance(s, ind, window_param(q), members));
  }
  if (path == "/api/group/influence") {
    const auto members = members_of(s, filter_param(q, false));
    return ok(influence(s, q, members, interpret::Level::group));
  }
  if (path == "/api/group/context") {
    const auto members = members_of(s, filter_param(q, false));
    std::vector<std::string> features;
    if (const auto f = list_param(q, "features")) {
      features = *f;
    } else {
      for (std::size_t i = 0; i < ds.schema.size(); ++i) features.push_back(ds.schema[i].id);
    }
    if (features.empty()) bad("features", "features must be nonempty");
    for (const auto& f : features) {
      if (!ds.schema.find(f)) bad("features", "unknown feature '" + f + "'");
    }
    return ok(analytics::group_context_summary(ds, features, members, {{"group", members}}).to_json());
  }
  if (path == "/api/group/motion") {
    const auto w = window_param(q);
    const auto [from, to] = range_param(q);
    const auto members = members_of(s, filter_param(q, false));
    const auto ptrs = pointers(s, members);
    auto body = analytics::motion_summary(ptrs, w, from, to).to_json();
    body["group_size"] = members.size();
    return ok(std::move(body));
  }

  constexpr std::string_view kIndividual = "/api/individual/";
  if (path.starts_with(kIndividual)) {
    const auto rest = path.substr(kIndividual.size());
    const auto slash = rest.find('/');
    if (slash == std::string::npos || slash == 0) throw ApiError{404, "not_found", "", "unknown route " + path};
    const auto id = httplib::detail::decode_url(rest.substr(0, slash), false);
    const auto view = rest.substr(slash + 1);
    const std::size_t i = participant_index(s, id);
    const std::vector<std::size_t> one{i};
    if (view == "profile") return ok(profile_json(s, i, indicators_param(q), filter_param(q, false)));
    if (view == "importance") {
      const auto ind = indicator_param(q);
      return ok(ranked_importance(s, ind, window_param(q), one));
    }
    if (view == "influence") return ok(influence(s, q, one, interpret::Level::individual));
    if (view == "context") return ok(context_json(s, i));
    if (view == "motion") {
      const auto w = window_param(q);
      const auto [from, to] = range_param(q);
      const auto ptrs = pointers(s, one);
      auto body = analytics::motion_summary(ptrs, w, from, to).to_json();
      const auto& cov = ds.participants[i].motion.coverage;
      body["coverage"] = static_cast<double>(std::count(cov.begin(), cov.end(), 1)) / static_cast<double>(cov.size());
      body["id"] = id;
      return ok(std::move(body));
    }
    throw ApiError{404, "not_found", "", "unknown route " + path};
  }
  if (path == "/api/compare") {
    const auto ids = list_param(q, "ids");
    if (!ids || ids->empty()) bad("ids", "ids is required");
    if (ids->size() > 2) bad("ids", "at most 2 individuals can be compared");
    const auto indicators = indicators_param(q);
    const auto filter = filter_param(q, false);
    const auto w = window_param(q);
    const auto [from, to] = range_param(q);
    nlohmann::json people = nlohmann::json::array();
    for (const auto& id : *ids) {
      const auto i = participant_index(s, id);
      auto prof = profile_json(s, i, indicators, filter);
      const std::vector<std::size_t> one{i};
      const auto ptrs = pointers(s, one);
      prof["motion"] = analytics::motion_summary(ptrs, w, from, to).to_json();
      people.push_back(std::move(prof));
    }
    return ok({{"individuals", people}});
  }
  throw ApiError{404, "not_found", "", "unknown route " + path};
}

struct Service::Server {
  httplib::Server http;
};

void Service::run() {
  server_ = std::make_shared<Server>();
  auto& http = server_->http;
  http.set_read_timeout(config_.timeout_seconds, 0);
  http.set_write_timeout(config_.timeout_seconds, 0);
  http.Get(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
    Query q(req.params.begin(), req.params.end());
    const auto r = handle(req.path, q);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  if (!http.listen(config_.host, config_.port)) {
    fail(ErrorCode::io, "cannot listen on " + config_.host + ":" + std::to_string(config_.port));
  }
}

void Service::stop() {
  if (server_) server_->http.stop();
}

}  // namespace healthprism::service
