#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "edpbrl/experiment.hpp"
#include "edpbrl/io.hpp"

namespace httplib {
class Server;
}

namespace edpbrl {

/// Failure carrying the HTTP status it maps to (400, 404 or 409).
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& message)
      : std::runtime_error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ServiceConfig {
  MdpSpec spec;
  FeatureMap features;
  std::vector<Policy> policies;  // K policies every session samples from
  int episodes = 1;              // T per session
  double lambda = 100.0;
  FeedbackKind feedback = FeedbackKind::state_based;
  std::vector<std::string> vocabulary;  // action index -> token
  std::filesystem::path record_dir;     // empty disables persistence
  std::uint64_t seed = 0;
  int top_options = 5;
};

enum class SessionStatus { active, complete, estimated };
std::string to_string(SessionStatus status);

/// In-memory sessions. Each session serializes its own transitions; distinct
/// sessions never wait on each other beyond the brief map lookup.
class SessionManager {
 public:
  explicit SessionManager(ServiceConfig cfg);

  /// Returns the new session id.
  std::string create_session();
  Json query(const std::string& id);
  /// `body` is {"chosen": int, "episode"?: int, "step"?: int}.
  Json submit_choice(const std::string& id, const Json& body);
  Json estimate(const std::string& id);
  Json report(const std::string& id);

  /// Records collected so far, in submission order.
  std::vector<PreferenceRecord> records(const std::string& id);
  std::filesystem::path record_path(const std::string& id) const;

  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Session {
    std::mutex mutex;
    std::string id;
    TrajectorySet trajectories;
    int episode = 0;
    int step = 0;
    SessionStatus status = SessionStatus::active;
    std::vector<PreferenceRecord> records;
    std::optional<ThetaEstimate> estimate;
  };

  std::shared_ptr<Session> find(const std::string& id);
  std::string display_text(const Trajectory& tr, int h) const;
  Json progress(const Session& s) const;
  int total_decisions() const;

  ServiceConfig cfg_;
  std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t created_ = 0;
};

/// HTTP front end for a SessionManager.
class HttpService {
 public:
  explicit HttpService(SessionManager& manager);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds to an ephemeral port and returns it (or -1).
  int bind_any_port(const std::string& host);
  bool bind(const std::string& host, int port);
  /// Blocks serving requests until stop() is called.
  bool run();
  void stop();
  void wait_until_ready() const;

 private:
  SessionManager& manager_;
  std::unique_ptr<httplib::Server> server_;
};

/// Splits "host:port"; a bare port binds to 127.0.0.1.
std::pair<std::string, int> parse_bind_address(const std::string& text);

/// Builds the service configuration from a run configuration. Policies come
/// from `policies.json` in the output directory when present; otherwise they
/// are computed (design) or taken uniform (random).
ServiceConfig service_config_from_run(const RunConfig& run);

}  // namespace edpbrl
