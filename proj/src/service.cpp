#include "jointsel/service.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

#include "jointsel/error.hpp"
#include "jointsel/session_io.hpp"

namespace jointsel {

using nlohmann::json;

SessionService::SessionService(Prepared prepared, SessionConfig config, std::map<std::string, std::string> texts,
                               std::optional<std::filesystem::path> persist_path)
    : prepared_(std::make_unique<const Prepared>(std::move(prepared))),
      texts_(std::move(texts)),
      persist_path_(std::move(persist_path)) {
  if (config.strategy != StrategyName::ColdSelect) {
    throw Error(ErrorCode::InvalidConfig, "the service runs the coldselect strategy only");
  }
  session_ = std::make_unique<Session>(prepared_->space, prepared_->clustering, std::move(config));
  clusters_ = clustering_to_json(prepared_->space, prepared_->clustering);
  if (persist_path_ && std::filesystem::exists(*persist_path_)) {
    SessionExport saved = load_session_export(*persist_path_);
    if (config_to_json(saved.config) != config_to_json(session_->config())) {
      throw Error(ErrorCode::InvalidConfig, persist_path_->string() + " was written with a different configuration");
    }
    for (const auto& ev : saved.events) session_->replay(ev);
    version_ = 2 * saved.events.size();
  }
  publish();
}

json SessionService::wire_state() const {
  const SessionState& st = session_->state();
  json out = {{"state_version", version_},
              {"timestamp", st.timestamp},
              {"remaining_budget", st.remaining_budget},
              {"labeled_count", st.labels.size()},
              {"label_space", session_->config().label_space},
              {"done", session_->exhausted() || session_->eligible_clusters().empty()}};
  if (pending_) {
    const std::string& id = prepared_->space.items[pending_->instance_index].id;
    auto text = texts_.find(id);
    out["pending"] = {{"instance_id", id},
               {"text", text == texts_.end() ? "" : text->second},
               {"cluster_id", pending_->cluster_id},
               {"cluster_scores", metrics_to_json(pending_->scores)}};
  }
  json verbalizers = json::array();
  for (const auto& v : st.verbalizers.entries()) verbalizers.push_back({{"token_id", v.token_id}, {"class", v.label}});
  json summary = json::array();
  for (const auto& c : prepared_->clustering.clusters) {
    summary.push_back({{"cluster_id", c.id},
                       {"size", c.members.size()},
                       {"token_count", c.token_count},
                       {"labeled_count", session_->labeled_count(c.id)},
                       {"last_score", st.cluster_metrics[static_cast<std::size_t>(c.id)].score}});
  }
  out["verbalizers"] = std::move(verbalizers);
  out["cluster_summary"] = std::move(summary);
  return out;
}

void SessionService::publish() {
  auto snap = std::make_shared<Snapshot>();
  snap->version = version_;
  snap->state = wire_state();
  snap->export_text = session_export_text(session_->config(), session_->state());
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = std::move(snap);
}

void SessionService::persist() const {
  if (!persist_path_) return;
  auto tmp = *persist_path_;
  tmp += ".tmp";
  write_text_file(session_export_text(session_->config(), session_->state()), tmp);
  std::error_code ec;
  std::filesystem::rename(tmp, *persist_path_, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot replace " + persist_path_->string() + ": " + ec.message());
}

json SessionService::state() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_->state;
}

std::uint64_t SessionService::state_version() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_->version;
}

json SessionService::next() {
  std::lock_guard write(write_mutex_);
  if (pending_) {
    throw Error(ErrorCode::PendingExists,
                "'" + prepared_->space.items[pending_->instance_index].id + "' is awaiting a label");
  }
  pending_ = session_->propose();
  ++version_;
  publish();
  json out = state()["pending"];
  out["state_version"] = version_;
  return out;
}

json SessionService::label(const std::string& instance_id, const std::string& cls) {
  std::lock_guard write(write_mutex_);
  if (!pending_ || prepared_->space.items[pending_->instance_index].id != instance_id) {
    throw Error(ErrorCode::NotPending, "'" + instance_id + "' is not the pending instance");
  }
  const SelectionEvent& ev = session_->commit(*pending_, cls);
  json acquired = ev.token_id ? json{{"token_id", *ev.token_id}, {"class", ev.label}} : json(nullptr);
  pending_.reset();
  persist();
  ++version_;
  publish();
  json out = state();
  out["acquired"] = std::move(acquired);
  return out;
}

json SessionService::clusters() const {
  json out = clusters_;
  out["state_version"] = state_version();
  return out;
}

std::string SessionService::export_text() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_->export_text;
}

json SessionService::export_json() const {
  std::shared_ptr<const Snapshot> snap;
  {
    std::lock_guard lock(snapshot_mutex_);
    snap = snapshot_;
  }
  json out = json::parse(snap->export_text);
  out["state_version"] = snap->version;
  return out;
}

int http_status_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::PendingExists: return 409;
    case ErrorCode::BudgetExhausted:
    case ErrorCode::NoEligibleCluster: return 410;
    case ErrorCode::NotPending: return 404;
    case ErrorCode::UnknownClass: return 422;
    case ErrorCode::SessionNotReady: return 503;
    case ErrorCode::Usage:
    case ErrorCode::HeaderMalformed: return 400;
    default: return 500;
  }
}

namespace {

HttpResponse error_response(ErrorCode code, const std::string& message, std::uint64_t version) {
  return {http_status_for(code),
          {{"error", error_code_name(code)}, {"message", message}, {"state_version", version}}};
}

}  // namespace

HttpResponse handle_request(SessionService* service, const std::string& method, const std::string& path,
                            const std::string& body) {
  if (!service) return error_response(ErrorCode::SessionNotReady, "session is loading", 0);
  try {
    if (method == "GET" && path == "/api/state") return {200, service->state()};
    if (method == "GET" && path == "/api/clusters") return {200, service->clusters()};
    if (method == "GET" && path == "/api/export") return {200, service->export_json()};
    if (method == "POST" && path == "/api/next") return {200, service->next()};
    if (method == "POST" && path == "/api/label") {
      json j = json::parse(body, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("instance_id") || !j["instance_id"].is_string() ||
          !j.contains("class") || !j["class"].is_string()) {
        return error_response(ErrorCode::Usage, "body must be {\"instance_id\": string, \"class\": string}",
                              service->state_version());
      }
      return {200, service->label(j["instance_id"].get<std::string>(), j["class"].get<std::string>())};
    }
    return {404, {{"error", "NotFound"}, {"message", method + " " + path}, {"state_version", service->state_version()}}};
  } catch (const Error& e) {
    return error_response(e.code(), e.detail(), service->state_version());
  } catch (const std::exception& e) {
    return error_response(ErrorCode::InvariantViolation, e.what(), service->state_version());
  }
}

void serve_http(const std::string& host, int port, const std::function<std::unique_ptr<SessionService>()>& load,
                const std::function<void(int)>& on_listening, const std::atomic<bool>* stop) {
  httplib::Server server;
  std::atomic<SessionService*> ready{nullptr};
  auto route = [&](const httplib::Request& req, httplib::Response& res) {
    HttpResponse r = handle_request(ready.load(), req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json; charset=utf-8");
  };
  server.Get(".*", route);
  server.Post(".*", route);

  int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoFailure, "cannot bind " + host + ":" + std::to_string(port));
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  if (on_listening) on_listening(bound);

  std::unique_ptr<SessionService> service;
  try {
    service = load();
  } catch (...) {
    server.stop();
    listener.join();
    throw;
  }
  ready.store(service.get());
  if (stop) {
    while (!stop->load()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    server.stop();
  }
  listener.join();
}

}  // namespace jointsel
