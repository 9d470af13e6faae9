#include "edpbrl/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

namespace edpbrl {

namespace fs = std::filesystem;

std::string to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::active:
      return "active";
    case SessionStatus::complete:
      return "complete";
    case SessionStatus::estimated:
      return "estimated";
  }
  return "active";
}

SessionManager::SessionManager(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  require_valid(cfg_.spec);
  validate_features(cfg_.features);
  if (cfg_.policies.size() < 2)
    throw std::invalid_argument("the service needs at least two policies");
  if (cfg_.episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  if (cfg_.feedback == FeedbackKind::truncated_table &&
      !cfg_.features.has_prefix_table())
    throw std::invalid_argument("truncated_table feedback needs a prefix table");
  if (!cfg_.record_dir.empty()) fs::create_directories(cfg_.record_dir);
}

int SessionManager::total_decisions() const {
  return cfg_.episodes * cfg_.spec.horizon;
}

std::string SessionManager::create_session() {
  std::uint64_t index = 0;
  {
    std::unique_lock lock(map_mutex_);
    index = created_++;
  }
  auto session = std::make_shared<Session>();
  auto rng = make_stream(cfg_.seed + index, phase::kTrajectories);
  session->trajectories =
      sample_episodes(cfg_.spec, cfg_.policies, cfg_.episodes, rng);

  std::random_device rd;
  std::ostringstream id;
  id << std::hex << std::setfill('0') << std::setw(8) << rd() << std::setw(8)
     << rd() << "-" << index;
  session->id = id.str();

  std::unique_lock lock(map_mutex_);
  sessions_.emplace(session->id, session);
  return session->id;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(
    const std::string& id) {
  std::shared_lock lock(map_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end())
    throw ServiceError(404, "unknown session '" + id + "'");
  return it->second;
}

std::string SessionManager::display_text(const Trajectory& tr, int h) const {
  if (cfg_.vocabulary.empty()) {
    auto states = tr.states();
    states.resize(h + 1);
    return path_key(states);
  }
  std::string text;
  for (int j = 0; j <= h; ++j) {
    const int a = tr.steps[j].second;
    if (j) text += " ";
    text += a < static_cast<int>(cfg_.vocabulary.size())
                ? cfg_.vocabulary[a]
                : "<" + std::to_string(a) + ">";
  }
  return text;
}

Json SessionManager::progress(const Session& s) const {
  Json p;
  p["submitted"] = s.records.size();
  p["total"] = total_decisions();
  p["fraction"] = static_cast<double>(s.records.size()) / total_decisions();
  return p;
}

Json SessionManager::query(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  Json out;
  out["id"] = s->id;
  out["status"] = to_string(s->status);
  out["progress"] = progress(*s);
  if (s->status != SessionStatus::active) {
    out["episode"] = nullptr;
    out["step"] = nullptr;
    out["options"] = Json::array();
    return out;
  }
  const auto& episode = s->trajectories[s->episode];
  const auto keys = option_keys(episode, s->step);
  Json options = Json::array();
  for (std::size_t q = 0; q < episode.size(); ++q) {
    Json o;
    o["index"] = q;
    o["display_text"] = display_text(episode[q], s->step);
    o["feature_key"] = keys[q];
    options.push_back(std::move(o));
  }
  out["episode"] = s->episode;
  out["step"] = s->step;
  out["options"] = std::move(options);
  return out;
}

Json SessionManager::submit_choice(const std::string& id, const Json& body) {
  if (!body.is_object() || !body.contains("chosen") ||
      !body.at("chosen").is_number_integer())
    throw ServiceError(400, "body must be an object with an integer 'chosen'");
  for (const char* key : {"episode", "step"})
    if (body.contains(key) && !body.at(key).is_number_integer())
      throw ServiceError(400, std::string("'") + key + "' must be an integer");

  auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (s->status != SessionStatus::active)
    throw ServiceError(409, "session is " + to_string(s->status) +
                                "; no further choices are accepted");
  const long long episode =
      body.contains("episode") ? body.at("episode").get<long long>() : s->episode;
  const long long step =
      body.contains("step") ? body.at("step").get<long long>() : s->step;
  if (episode != s->episode || step != s->step)
    throw ServiceError(409, "expected a choice for episode " +
                                std::to_string(s->episode) + " step " +
                                std::to_string(s->step));
  const auto& trajs = s->trajectories[s->episode];
  const long long chosen = body.at("chosen").get<long long>();
  if (chosen < 0 || chosen >= static_cast<long long>(trajs.size()))
    throw ServiceError(400, "chosen must be in [0, " +
                                std::to_string(trajs.size()) + ")");

  PreferenceRecord rec;
  rec.episode = s->episode;
  rec.step = s->step;
  rec.options = feedback_features(cfg_.feedback, trajs, s->step, cfg_.features);
  rec.option_keys = option_keys(trajs, s->step);
  rec.chosen = static_cast<int>(chosen);
  if (!cfg_.record_dir.empty()) append_record(record_path(s->id), rec);
  s->records.push_back(std::move(rec));

  if (++s->step == cfg_.spec.horizon) {
    s->step = 0;
    if (++s->episode == cfg_.episodes) s->status = SessionStatus::complete;
  }

  Json out;
  out["accepted"] = true;
  out["status"] = to_string(s->status);
  out["progress"] = progress(*s);
  return out;
}

Json SessionManager::estimate(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (s->status == SessionStatus::active)
    throw ServiceError(409, "session still has unanswered queries");
  const auto est =
      estimate_theta(s->records, cfg_.lambda, {}, cfg_.features.dim());
  s->estimate = est;
  s->status = SessionStatus::estimated;

  // Rank every distinct option the rater saw by its learned score.
  struct Seen {
    std::string key;
    std::string text;
    double score;
  };
  std::vector<Seen> seen;
  std::set<std::string> keys;
  for (const auto& rec : s->records) {
    const auto& trajs = s->trajectories[rec.episode];
    for (int q = 0; q < rec.options.count(); ++q) {
      if (!keys.insert(rec.option_keys[q]).second) continue;
      seen.push_back({rec.option_keys[q], display_text(trajs[q], rec.step),
                      rec.options.features.row(q).dot(est.theta)});
    }
  }
  std::stable_sort(seen.begin(), seen.end(),
                   [](const Seen& a, const Seen& b) { return a.score > b.score; });
  if (static_cast<int>(seen.size()) > cfg_.top_options)
    seen.resize(cfg_.top_options);

  Json out = theta_to_json(est, cfg_.lambda, s->records.size());
  Json top = Json::array();
  for (std::size_t r = 0; r < seen.size(); ++r) {
    Json o;
    o["rank"] = r + 1;
    o["feature_key"] = seen[r].key;
    o["display_text"] = seen[r].text;
    o["score"] = seen[r].score;
    top.push_back(std::move(o));
  }
  out["top_options"] = std::move(top);
  out["status"] = to_string(s->status);
  return out;
}

Json SessionManager::report(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  Json out;
  out["id"] = s->id;
  out["status"] = to_string(s->status);
  out["episodes"] = cfg_.episodes;
  out["horizon"] = cfg_.spec.horizon;
  out["num_options"] = cfg_.policies.size();
  out["feedback"] = to_string(cfg_.feedback);
  out["progress"] = progress(*s);
  Json records = Json::array();
  for (const auto& rec : s->records) records.push_back(record_to_json(rec));
  out["records"] = std::move(records);
  if (s->estimate)
    out["estimate"] = theta_to_json(*s->estimate, cfg_.lambda, s->records.size());
  else
    out["estimate"] = nullptr;
  return out;
}

std::vector<PreferenceRecord> SessionManager::records(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->records;
}

fs::path SessionManager::record_path(const std::string& id) const {
  return cfg_.record_dir / (id + ".jsonl");
}

// ---- HTTP -------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
  Json body;
  body["error"] = msg;
  send_json(res, status, body);
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    send_json(res, 200, fn());
  } catch (const ServiceError& e) {
    send_error(res, e.status(), e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

}  // namespace

HttpService::HttpService(SessionManager& manager)
    : manager_(manager), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });

  srv.Post("/sessions", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      Json out;
      out["id"] = manager_.create_session();
      return out;
    });
  });
  srv.Get(R"(/sessions/([^/]+)/query)",
          [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return manager_.query(req.matches[1]); });
          });
  srv.Post(R"(/sessions/([^/]+)/choice)",
           [this](const httplib::Request& req, httplib::Response& res) {
             guarded(res, [&] {
               Json body;
               try {
                 body = Json::parse(req.body);
               } catch (const Json::parse_error& e) {
                 throw ServiceError(400, std::string("malformed body: ") + e.what());
               }
               return manager_.submit_choice(req.matches[1], body);
             });
           });
  srv.Post(R"(/sessions/([^/]+)/estimate)",
           [this](const httplib::Request& req, httplib::Response& res) {
             guarded(res, [&] { return manager_.estimate(req.matches[1]); });
           });
  srv.Get(R"(/sessions/([^/]+)/report)",
          [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return manager_.report(req.matches[1]); });
          });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind_any_port(const std::string& host) {
  return server_->bind_to_any_port(host);
}

bool HttpService::bind(const std::string& host, int port) {
  return server_->bind_to_port(host, port);
}

bool HttpService::run() { return server_->listen_after_bind(); }

void HttpService::stop() {
  if (server_) server_->stop();
}

void HttpService::wait_until_ready() const { server_->wait_until_ready(); }

std::pair<std::string, int> parse_bind_address(const std::string& text) {
  const auto colon = text.rfind(':');
  const std::string host = colon == std::string::npos ? "127.0.0.1" : text.substr(0, colon);
  const std::string port_text = colon == std::string::npos ? text : text.substr(colon + 1);
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(port_text, &used);
    if (used != port_text.size()) port = -1;
  } catch (const std::exception&) {
    port = -1;
  }
  if (port < 0 || port > 65535 || host.empty())
    throw std::invalid_argument("bad bind address '" + text +
                                "'; expected host:port");
  return {host, port};
}

ServiceConfig service_config_from_run(const RunConfig& run) {
  if (run.oracle)
    throw std::invalid_argument(
        "the configuration defines a simulated oracle; live sessions need a "
        "configuration without one");
  ServiceConfig cfg;
  cfg.spec = read_mdp(run.mdp_path);
  cfg.features = load_features(run, cfg.spec.num_states);
  cfg.episodes = run.design.episodes;
  cfg.lambda = run.design.lambda;
  cfg.feedback = run.feedback;
  cfg.seed = run.seed;
  cfg.record_dir = run.output_dir / "sessions";
  if (run.vocabulary_path) cfg.vocabulary = read_vocabulary(*run.vocabulary_path);

  const fs::path policies = run.output_dir / "policies.json";
  if (run.policy_source == PolicySource::random) {
    cfg.policies = random_baseline_policies(cfg.spec, run.design.num_policies, run.seed);
  } else if (fs::exists(policies)) {
    cfg.policies = read_policies(policies);
    for (const auto& p : cfg.policies) {
      const auto problems = validate_policy(cfg.spec, p);
      if (!problems.empty())
        throw FormatError(policies.string() + ": " + problems.front());
    }
  } else {
    cfg.policies = solve_design(cfg.spec, cfg.features, run.design).policies;
  }
  return cfg;
}

}  // namespace edpbrl
