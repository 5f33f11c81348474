#include "legit/service.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

namespace legit::service {

std::string to_string(Status status) {
    switch (status) {
        case Status::kAwaitingChoice: return "awaiting-choice";
        case Status::kFitting: return "fitting";
        case Status::kDone: return "done";
        case Status::kFailed: return "failed";
    }
    return "unknown";
}

struct Session {
    std::string id;
    runner::RunConfig cfg;
    std::uint64_t seed = 0;
    bool reveal_truth = false;
    netio::VariableDescriptions descs;
    std::unique_ptr<runner::OnlineDiscovery> od;

    // Guards everything below; the model is touched only by the worker while status is fitting.
    std::mutex mu;
    std::condition_variable idle;
    Status status = Status::kAwaitingChoice;
    std::string error;
    std::string completed_at;
    std::map<std::string, std::size_t> tokens;  // idempotency token -> round it paid for
    std::thread worker;

    std::mutex snap_mu;
    std::shared_ptr<const json> snapshot;

    std::shared_ptr<const json> view() {
        std::lock_guard lock(snap_mu);
        return snapshot;
    }
};

namespace {

std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string new_id() {
    std::random_device rd;
    auto word = [&] { return (static_cast<std::uint64_t>(rd()) << 32) | rd(); };
    return fmt::format("{:016x}{:016x}", word(), word());
}

bool bundled_network(const std::string& name) {
    static const std::regex ok("[a-z0-9_]+");
    return std::regex_match(name, ok) && std::filesystem::exists(netio::data_dir() / "networks" / (name + ".bif"));
}

std::string value_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_array()) {
        std::vector<std::string> parts;
        for (const auto& x : v) parts.push_back(value_text(x));
        return fmt::format("[{}]", fmt::join(parts, ","));
    }
    return v.dump();
}

json metric_json(const runner::RoundRecord& r) {
    return {{"shd", r.shd}, {"sid", r.sid}, {"bsf", r.bsf ? json(*r.bsf) : json(nullptr)}};
}

json record_json(const runner::RoundRecord& r, const std::vector<std::string>& names, bool with_metrics) {
    json j{{"round", r.round}, {"target", names.at(r.target)}, {"phase", r.phase},
           {"checksum", fmt::format("{:016x}", r.checksum)}};
    if (with_metrics) {
        j.update(metric_json(r));
        j["cyclic"] = r.cyclic;
        j["seconds"] = r.seconds;
    }
    return j;
}

runner::RoundRecord record_from(const json& j, const std::vector<std::string>& names) {
    runner::RoundRecord r;
    r.round = j.at("round");
    const std::string t = j.at("target");
    auto it = std::find(names.begin(), names.end(), t);
    if (it == names.end()) throw std::invalid_argument(fmt::format("unknown node '{}' in saved session", t));
    r.target = static_cast<std::size_t>(it - names.begin());
    r.phase = j.at("phase");
    r.seconds = j.value("seconds", 0.0);
    r.shd = j.at("shd");
    r.sid = j.at("sid");
    if (!j.at("bsf").is_null()) r.bsf = j.at("bsf").get<double>();
    r.checksum = std::stoull(j.at("checksum").get<std::string>(), nullptr, 16);
    r.cyclic = j.value("cyclic", false);
    return r;
}

// Caller holds s.mu and no worker is mutating the model.
void publish(Session& s) {
    const auto& od = *s.od;
    const auto& names = od.node_names();
    json nodes = json::array();
    for (std::size_t i = 0; i < names.size(); ++i) {
        const std::string* d = s.descs.find(names[i]);
        nodes.push_back({{"name", names[i]},
                         {"description", d ? *d : std::string()},
                         {"states", od.network().nodes[i].states}});
    }
    const auto beliefs = enco::edge_probabilities(od.model());
    json matrix = json::array();
    for (std::size_t i = 0; i < beliefs.n; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < beliefs.n; ++j) row.push_back(beliefs(i, j));
        matrix.push_back(std::move(row));
    }
    json history = json::array();
    for (std::size_t t : od.history()) history.push_back(names[t]);
    json trace = json::array();
    for (const auto& r : od.records()) trace.push_back(record_json(r, names, s.reveal_truth));

    auto v = std::make_shared<json>(json{{"id", s.id},
                                         {"network", s.cfg.network},
                                         {"seed", s.seed},
                                         {"domain", s.descs.domain_blurb},
                                         {"status", to_string(s.status)},
                                         {"round", od.round()},
                                         {"next_round", od.round() + 1},
                                         {"rounds_total", s.cfg.rounds},
                                         {"batch", s.cfg.batch},
                                         {"interventional_samples", od.interventional_samples()},
                                         {"nodes", std::move(nodes)},
                                         {"beliefs", std::move(matrix)},
                                         {"history", std::move(history)},
                                         {"records", std::move(trace)},
                                         {"reveal_truth", s.reveal_truth},
                                         {"completed_at", s.completed_at.empty() ? json(nullptr) : json(s.completed_at)}});
    if (!s.error.empty()) (*v)["error"] = s.error;
    if (s.reveal_truth) {
        runner::RoundRecord now;
        runner::score_graph(od.truth(), enco::extract_graph(od.model()), now);
        (*v)["metrics"] = metric_json(now);
    }
    std::lock_guard lock(s.snap_mu);
    s.snapshot = std::move(v);
}

// Caller holds s.mu and no worker is mutating the model.
void checkpoint(const std::filesystem::path& dir, Session& s) {
    if (dir.empty()) return;
    const auto& names = s.od->node_names();
    json history = json::array();
    for (std::size_t t : s.od->history()) history.push_back(names[t]);
    json records = json::array();
    for (const auto& r : s.od->records()) records.push_back(record_json(r, names, true));
    std::ostringstream model;
    enco::save_checkpoint(model, s.od->model());
    json j{{"format", "legit-session"},
           {"version", 1},
           {"id", s.id},
           {"seed", s.seed},
           {"reveal_truth", s.reveal_truth},
           {"config", runner::echo_config(s.cfg)},
           {"history", history},
           {"records", records},
           {"tokens", s.tokens},
           {"completed_at", s.completed_at},
           {"model", json::parse(model.str())}};
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto path = dir / (s.id + ".json");
    const auto tmp = dir / (s.id + ".json.tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << j.dump();
        if (!out) {
            spdlog::error("session {}: cannot write {}", s.id, tmp.string());
            return;
        }
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) spdlog::error("session {}: cannot replace {}: {}", s.id, path.string(), ec.message());
}

const std::set<std::string> kAutoStrategies{"random", "round_robin", "degree_prob", "git", "ait", "cbed", "legit"};

}  // namespace

SessionManager::SessionManager(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.defaults.strategy = "external";
    if (!cfg_.state_dir.empty()) load_persisted();
}

SessionManager::~SessionManager() {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mu_);
        for (auto& [id, s] : sessions_) all.push_back(s);
    }
    for (auto& s : all)
        if (s->worker.joinable()) s->worker.join();
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "unknown_session", fmt::format("no session '{}'", id));
    return it->second;
}

std::vector<std::string> SessionManager::ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
}

json SessionManager::create(const json& request) {
    if (!request.is_object()) throw ServiceError(400, "bad_request", "expected a JSON object");
    const std::string network = request.value("network", std::string());
    if (!bundled_network(network)) throw ServiceError(400, "unknown_network", fmt::format("no network '{}'", network));
    {
        std::lock_guard lock(mu_);
        if (sessions_.size() >= cfg_.capacity)
            throw ServiceError(503, "capacity", fmt::format("server holds its maximum of {} sessions", cfg_.capacity));
    }

    auto s = std::make_shared<Session>();
    s->id = new_id();
    s->cfg = cfg_.defaults;
    s->cfg.network = network;
    s->cfg.strategy = "external";
    s->seed = request.value("seed", std::uint64_t{0});
    s->reveal_truth = request.value("reveal_truth", cfg_.reveal_truth_default);
    if (request.contains("overrides")) {
        static const std::set<std::string> fixed{"network", "strategy", "seeds", "output_dir", "jobs"};
        for (const auto& [key, value] : request["overrides"].items()) {
            if (fixed.count(key)) throw ServiceError(400, "invalid_config", fmt::format("'{}' cannot be overridden", key));
            try {
                runner::apply_key(s->cfg, key, value_text(value));
            } catch (const std::invalid_argument& e) {
                throw ServiceError(400, "invalid_config", e.what());
            }
        }
    }
    try {
        s->cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ServiceError(400, "invalid_config", e.what());
    }
    try {
        s->descs = netio::load_descriptions(netio::dataset_name(network));
    } catch (const std::exception& e) {
        spdlog::warn("session for {}: no descriptions ({})", network, e.what());
    }
    auto net = std::make_shared<const netio::BayesNet>(netio::load_network(network));
    s->od = std::make_unique<runner::OnlineDiscovery>(s->cfg, net, s->seed);
    s->od->initialize();

    std::lock_guard slock(s->mu);
    s->completed_at = now_utc();
    publish(*s);
    {
        std::lock_guard lock(mu_);
        if (sessions_.size() >= cfg_.capacity)
            throw ServiceError(503, "capacity", fmt::format("server holds its maximum of {} sessions", cfg_.capacity));
        sessions_.emplace(s->id, s);
    }
    checkpoint(cfg_.state_dir, *s);
    spdlog::info("session {} created on {} (seed {})", s->id, network, s->seed);
    return *s->view();
}

json SessionManager::state(const std::string& id) const { return *find(id)->view(); }

void SessionManager::wait_idle(const std::string& id) const {
    auto s = find(id);
    std::unique_lock lock(s->mu);
    s->idle.wait(lock, [&] { return s->status != Status::kFitting; });
}

json SessionManager::intervene(const std::string& id, const std::string& target,
                               const std::optional<std::string>& token, bool wait) {
    auto s = find(id);
    std::unique_lock lock(s->mu);
    if (token && s->tokens.count(*token)) {
        if (wait) s->idle.wait(lock, [&] { return s->status != Status::kFitting; });
        json v = *s->view();
        v["replayed"] = true;
        return v;
    }
    if (s->status == Status::kFitting) throw ServiceError(409, "busy", "a round is still fitting");
    if (s->status == Status::kFailed) throw ServiceError(409, "failed", s->error);
    if (s->od->done()) throw ServiceError(409, "done", "the round budget is used up");
    auto idx = strategies::resolve_node(s->od->node_names(), target);
    if (!idx) throw ServiceError(400, "invalid_target", fmt::format("'{}' is not a node", target));
    if (token) s->tokens[*token] = s->od->round() + 1;

    s->status = Status::kFitting;
    publish(*s);
    if (s->worker.joinable()) s->worker.join();
    const std::filesystem::path dir = cfg_.state_dir;
    s->worker = std::thread([s, dir, t = *idx] {
        std::string error;
        try {
            s->od->step(t);
        } catch (const std::exception& e) {
            error = e.what();
        }
        std::lock_guard inner(s->mu);
        s->error = error;
        s->status = !error.empty() ? Status::kFailed : s->od->done() ? Status::kDone : Status::kAwaitingChoice;
        s->completed_at = now_utc();
        checkpoint(dir, *s);
        publish(*s);
        s->idle.notify_all();
    });
    if (wait) s->idle.wait(lock, [&] { return s->status != Status::kFitting; });
    return *s->view();
}

json SessionManager::run_auto(const std::string& id, const std::string& strategy, std::size_t rounds, bool wait) {
    auto s = find(id);
    if (!kAutoStrategies.count(strategy))
        throw ServiceError(400, "unknown_strategy", fmt::format("'{}' cannot run automatically", strategy));
    std::unique_lock lock(s->mu);
    if (strategy == "degree_prob" && !s->reveal_truth)
        throw ServiceError(400, "unknown_strategy", "degree_prob reads the true graph and needs reveal_truth");
    if (s->status == Status::kFitting) throw ServiceError(409, "busy", "a round is still fitting");
    if (s->status == Status::kFailed) throw ServiceError(409, "failed", s->error);
    const std::size_t remaining = s->cfg.rounds - s->od->round();
    if (rounds > remaining)
        throw ServiceError(400, "too_many_rounds", fmt::format("{} rounds requested, {} remain", rounds, remaining));
    if (rounds == 0) return *s->view();

    runner::RunConfig cfg = s->cfg;
    cfg.strategy = strategy;
    std::unique_ptr<llm::LlmClient> client;
    std::unique_ptr<strategies::Strategy> strat;
    try {
        if (strategy == "legit") client = llm::make_client(cfg.llm, cfg.transport);
        strat = runner::make_run_strategy(cfg, s->od->network(), s->seed, client.get());
    } catch (const std::exception& e) {
        throw ServiceError(400, "unknown_strategy", e.what());
    }

    s->status = Status::kFitting;
    publish(*s);
    if (s->worker.joinable()) s->worker.join();
    const std::filesystem::path dir = cfg_.state_dir;
    s->worker = std::thread([s, dir, rounds, client = std::move(client), strat = std::move(strat)] {
        std::string error;
        for (std::size_t k = 0; k < rounds && error.empty(); ++k) {
            try {
                s->od->step(*strat);
            } catch (const std::exception& e) {
                error = e.what();
            }
            std::lock_guard inner(s->mu);
            s->completed_at = now_utc();
            s->error = error;
            if (!error.empty()) s->status = Status::kFailed;
            else if (k + 1 == rounds) s->status = s->od->done() ? Status::kDone : Status::kAwaitingChoice;
            checkpoint(dir, *s);
            publish(*s);
            // Last touch of the mutex: a later request may join this thread while holding it.
            if (s->status != Status::kFitting) s->idle.notify_all();
        }
    });
    if (wait) s->idle.wait(lock, [&] { return s->status != Status::kFitting; });
    return *s->view();
}

json SessionManager::export_files(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    if (s->status == Status::kFitting) throw ServiceError(409, "busy", "a round is still fitting");
    runner::RunResult result;
    result.cfg = s->cfg;
    result.cfg.seeds = {s->seed};
    result.node_names = s->od->node_names();
    runner::SeedResult seed;
    seed.seed = s->seed;
    seed.records = s->od->records();
    seed.final_graph = enco::extract_graph(s->od->model()).graph;
    seed.final_beliefs = enco::edge_probabilities(s->od->model());
    result.seeds.push_back(std::move(seed));

    json files = json::object();
    files["config.echo"] = runner::echo_config(result.cfg);
    files["targets_hist.csv"] = runner::targets_hist_csv(result);
    std::ostringstream g, b;
    graph::write_matrix_csv(g, result.seeds[0].final_graph);
    graph::write_matrix_csv(b, result.seeds[0].final_beliefs.n, result.seeds[0].final_beliefs.prob);
    files[fmt::format("final_graphs/seed_{}.csv", s->seed)] = g.str();
    files[fmt::format("final_graphs/seed_{}_beliefs.csv", s->seed)] = b.str();
    if (s->reveal_truth) {
        files["rounds.csv"] = runner::rounds_csv(result);
        files["summary.csv"] = runner::summary_csv(result);
        files["trajectory.csv"] = runner::trajectory_csv(result);
    }
    return {{"id", s->id}, {"files", files}};
}

void SessionManager::remove(const std::string& id) {
    auto s = find(id);
    {
        std::lock_guard lock(s->mu);
        if (s->status == Status::kFitting) throw ServiceError(409, "busy", "a round is still fitting");
    }
    if (s->worker.joinable()) s->worker.join();
    {
        std::lock_guard lock(mu_);
        sessions_.erase(id);
    }
    if (!cfg_.state_dir.empty()) {
        std::error_code ec;
        std::filesystem::remove(cfg_.state_dir / (id + ".json"), ec);
    }
}

void SessionManager::load_persisted() {
    std::error_code ec;
    if (!std::filesystem::is_directory(cfg_.state_dir, ec)) return;
    for (const auto& entry : std::filesystem::directory_iterator(cfg_.state_dir)) {
        if (entry.path().extension() != ".json") continue;
        try {
            std::ifstream in(entry.path());
            json j = json::parse(in);
            if (j.value("format", "") != "legit-session") continue;
            auto s = std::make_shared<Session>();
            s->id = j.at("id");
            s->seed = j.at("seed");
            s->reveal_truth = j.at("reveal_truth");
            s->cfg = runner::parse_config(j.at("config").get<std::string>()).at(0);
            s->cfg.strategy = "external";
            s->completed_at = j.value("completed_at", "");
            s->tokens = j.value("tokens", std::map<std::string, std::size_t>{});
            try {
                s->descs = netio::load_descriptions(netio::dataset_name(s->cfg.network));
            } catch (const std::exception&) {
            }
            auto net = std::make_shared<const netio::BayesNet>(netio::load_network(s->cfg.network));
            s->od = std::make_unique<runner::OnlineDiscovery>(s->cfg, net, s->seed);
            const auto names = net->node_names();
            std::vector<std::size_t> history;
            for (const auto& t : j.at("history")) {
                auto it = std::find(names.begin(), names.end(), t.get<std::string>());
                if (it == names.end()) throw std::invalid_argument("history names an unknown node");
                history.push_back(static_cast<std::size_t>(it - names.begin()));
            }
            std::vector<runner::RoundRecord> records;
            for (const auto& r : j.at("records")) records.push_back(record_from(r, names));
            std::istringstream model(j.at("model").dump());
            s->od->restore(history, std::move(records), enco::load_checkpoint(model));
            // Tokens of a round that never finished are forgotten, so the client can resend it.
            std::erase_if(s->tokens, [&](const auto& kv) { return kv.second > history.size(); });
            s->status = s->od->done() ? Status::kDone : Status::kAwaitingChoice;
            std::lock_guard slock(s->mu);
            publish(*s);
            std::lock_guard lock(mu_);
            sessions_.emplace(s->id, s);
            spdlog::info("resumed session {} at round {}", s->id, history.size());
        } catch (const std::exception& e) {
            spdlog::warn("skipping saved session {}: {}", entry.path().string(), e.what());
        }
    }
}

// ---- HTTP ----

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const ServiceError& e) {
            send_json(res, e.status(), {{"error", {{"code", e.code()}, {"message", e.what()}}}});
        } catch (const json::exception& e) {
            send_json(res, 400, {{"error", {{"code", "bad_request"}, {"message", e.what()}}}});
        } catch (const std::exception& e) {
            spdlog::error("{} {}: {}", req.method, req.path, e.what());
            send_json(res, 500, {{"error", {{"code", "internal"}, {"message", e.what()}}}});
        }
    };
}

json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body);
    if (!j.is_object()) throw ServiceError(400, "bad_request", "expected a JSON object");
    return j;
}

}  // namespace

void install_routes(httplib::Server& server, SessionManager& m) {
    server.set_default_headers({{"Access-Control-Allow-Origin", m.config().cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
                   send_json(res, 200, {{"status", "ok"}});
               }));
    server.Get("/sessions", guarded([&m](const httplib::Request&, httplib::Response& res) {
                   send_json(res, 200, {{"sessions", m.ids()}});
               }));
    server.Post("/sessions", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                    send_json(res, 201, m.create(body_of(req)));
                }));
    server.Get(R"(/sessions/([0-9a-f]+))", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                   send_json(res, 200, m.state(req.matches[1]));
               }));
    server.Delete(R"(/sessions/([0-9a-f]+))", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                      m.remove(req.matches[1]);
                      res.status = 204;
                  }));
    server.Post(R"(/sessions/([0-9a-f]+)/interventions)",
                guarded([&m](const httplib::Request& req, httplib::Response& res) {
                    json body = body_of(req);
                    if (!body.contains("target") || !body["target"].is_string())
                        throw ServiceError(400, "invalid_target", "body needs a string 'target'");
                    std::optional<std::string> token;
                    if (body.contains("token")) token = value_text(body["token"]);
                    json v = m.intervene(req.matches[1], body["target"], token, body.value("wait", false));
                    send_json(res, v["status"] == "fitting" ? 202 : 200, v);
                }));
    server.Post(R"(/sessions/([0-9a-f]+)/auto)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                    json body = body_of(req);
                    const std::string strategy = body.value("strategy", std::string());
                    const auto rounds = body.value("rounds", std::int64_t{-1});
                    if (rounds < 0) throw ServiceError(400, "too_many_rounds", "body needs a non-negative 'rounds'");
                    json v = m.run_auto(req.matches[1], strategy, static_cast<std::size_t>(rounds),
                                        body.value("wait", false));
                    send_json(res, v["status"] == "fitting" ? 202 : 200, v);
                }));
    server.Get(R"(/sessions/([0-9a-f]+)/export)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                   send_json(res, 200, m.export_files(req.matches[1]));
               }));
}

}  // namespace legit::service
