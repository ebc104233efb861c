#pragma once

#include <array>
#include <cstddef>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "healthprism/analytics/analytics.hpp"
#include "healthprism/dataio/records.hpp"
#include "healthprism/interpret/influence.hpp"
#include "healthprism/model/hpmodel.hpp"

namespace healthprism::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string snapshot;   // processed dataset snapshot
  std::string model_dir;  // holds model_<IND>.hpm for all six indicators
  std::size_t cache_size = 64;
  int timeout_seconds = 30;

  void validate() const;
};

using Query = std::multimap<std::string, std::string>;

struct Response {
  int status = 200;
  std::string body;
};

// Bounded least-recently-used map from canonical request key to body.
class ResponseCache {
 public:
  explicit ResponseCache(std::size_t capacity) : capacity_(capacity) {}

  std::optional<std::string> get(const std::string& key);
  void put(const std::string& key, std::string body);
  void clear();
  std::size_t size() const;

 private:
  using Entry = std::pair<std::string, std::string>;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::list<Entry> order_;
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
};

// path + "?" + query pairs sorted by (key, value).
std::string canonical_key(const std::string& path, const Query& query);

// Loaded artifacts. Immutable once built.
struct Snapshot {
  dataio::Dataset dataset;
  std::string dataset_hash;
  std::vector<model::HPModel> models;  // kIndicators order
  std::array<std::string, kIndicatorCount> model_hashes;
  std::vector<std::unique_ptr<interpret::InfluenceEngine>> engines;
  model::PredictionSet predictions;
  analytics::CorrelationMatrix correlation;

  static std::shared_ptr<const Snapshot> load(const ServiceConfig& config);
};

// Request handling without sockets; run() binds it to HTTP.
class Service {
 public:
  explicit Service(ServiceConfig config);
  Service(ServiceConfig config, std::shared_ptr<const Snapshot> snapshot);

  Response handle(const std::string& path, const Query& query);

  // Reloads artifacts; requests arriving meanwhile get 503.
  void reload();

  // Blocks serving HTTP until stop().
  void run();
  void stop();

  const ServiceConfig& config() const { return config_; }
  std::size_t cached_responses() const { return cache_.size(); }

 private:
  Response dispatch(const Snapshot& s, const std::string& path, const Query& query) const;

  ServiceConfig config_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::shared_mutex reload_mutex_;
  ResponseCache cache_;
  struct Server;
  std::shared_ptr<Server> server_;
};

}  // namespace healthprism::service
