#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "jointsel/error.hpp"
#include "jointsel/pipeline.hpp"

namespace jointsel {

/// One interactive session behind the two-phase next/label protocol.
/// Mutations are serialised; reads return the last published snapshot.
class SessionService {
 public:
  /// If `persist_path` names an existing export, its events are replayed
  /// (the stored config must equal `config`). Throws InvalidConfig or
  /// InvariantViolation when they disagree.
  SessionService(Prepared prepared, SessionConfig config, std::map<std::string, std::string> texts,
                 std::optional<std::filesystem::path> persist_path = std::nullopt);

  nlohmann::json state() const;
  /// Throws PendingExists, BudgetExhausted or NoEligibleCluster.
  nlohmann::json next();
  /// Throws NotPending or UnknownClass.
  nlohmann::json label(const std::string& instance_id, const std::string& cls);
  nlohmann::json clusters() const;
  nlohmann::json export_json() const;
  std::string export_text() const;
  std::uint64_t state_version() const;

 private:
  struct Snapshot {
    std::uint64_t version = 0;
    nlohmann::json state;
    std::string export_text;
  };

  nlohmann::json wire_state() const;
  void publish();
  void persist() const;

  std::unique_ptr<const Prepared> prepared_;
  std::unique_ptr<Session> session_;
  std::map<std::string, std::string> texts_;
  std::optional<std::filesystem::path> persist_path_;
  nlohmann::json clusters_;
  std::optional<Proposal> pending_;
  std::uint64_t version_ = 0;

  std::mutex write_mutex_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

/// Routes one request. A null service answers 503 SessionNotReady.
HttpResponse handle_request(SessionService* service, const std::string& method, const std::string& path,
                            const std::string& body);

/// HTTP status for a library error raised by the service.
int http_status_for(ErrorCode code) noexcept;

/// Serves until `stop` is set (polled) or the process ends. `load` runs after
/// the socket is bound; requests before it returns get 503. `on_listening`
/// receives the bound port.
void serve_http(const std::string& host, int port, const std::function<std::unique_ptr<SessionService>()>& load,
                const std::function<void(int)>& on_listening = nullptr, const std::atomic<bool>* stop = nullptr);

}  // namespace jointsel
