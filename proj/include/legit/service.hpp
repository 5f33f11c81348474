#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "legit/runner.hpp"

namespace httplib {
class Server;
}

namespace legit::service {

using json = nlohmann::json;

/// Error with the HTTP status and a stable machine-readable code.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code)) {}
    int status() const { return status_; }
    const std::string& code() const { return code_; }

private:
    int status_;
    std::string code_;
};

struct ServiceConfig {
    std::size_t capacity = 8;
    std::filesystem::path state_dir;  // empty: sessions are not persisted
    bool reveal_truth_default = false;
    std::string cors_origin = "*";
    runner::RunConfig defaults;  // strategy is forced to external
};

enum class Status { kAwaitingChoice, kFitting, kDone, kFailed };
std::string to_string(Status status);

struct Session;

/// Session bookkeeping behind the HTTP layer; usable directly from tests.
class SessionManager {
public:
    explicit SessionManager(ServiceConfig cfg);
    ~SessionManager();
    SessionManager(const SessionManager&) = delete;
    SessionManager& operator=(const SessionManager&) = delete;

    /// Request fields: network (bundled name), seed, reveal_truth, overrides {dotted key: value}.
    /// Fits the initial model before returning the first state.
    json create(const json& request);
    json state(const std::string& id) const;
    /// Starts the round for `target`. With `wait`, returns once the refit finished.
    /// A repeated `token` returns the current state without consuming budget.
    json intervene(const std::string& id, const std::string& target, const std::optional<std::string>& token,
                   bool wait);
    /// Runs `rounds` rounds under a registered numerical strategy in the background.
    json run_auto(const std::string& id, const std::string& strategy, std::size_t rounds, bool wait);
    /// RunResult files keyed by name; metric files only when the session reveals the truth.
    json export_files(const std::string& id) const;
    void remove(const std::string& id);
    std::vector<std::string> ids() const;
    /// Blocks until the session is not fitting.
    void wait_idle(const std::string& id) const;

    const ServiceConfig& config() const { return cfg_; }

private:
    std::shared_ptr<Session> find(const std::string& id) const;
    void load_persisted();

    ServiceConfig cfg_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// Routes `/sessions...` onto a SessionManager, with CORS headers on every response.
void install_routes(httplib::Server& server, SessionManager& manager);

}  // namespace legit::service
