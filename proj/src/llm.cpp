#include "legit/llm.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>
#include <json.hpp>

#include "legit/netio.hpp"
#include "legit/rng.hpp"

namespace legit::llm {

namespace {

constexpr const char* kTips[] = {
    "Assess whether there is a direct causal relationship, and consider potential confounding variables that might "
    "affect the relationship that could potentially not causal relationship.",
    "Distinguish between correlations and causation; verify that correlations are not mistaken for causal "
    "relationships.",
    "Ensure the correct temporal order of variables; confirm that the cause precedes the effect.",
};

constexpr const char* kFocusUnconnected =
    "None of the variables above is connected to any other variable in the causal graph learned from the "
    "experiments so far, so pay particular attention to which of them are likely to drive the others.";

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim_token(std::string s) {
    auto junk = [](char c) { return std::isspace(static_cast<unsigned char>(c)) || c == '<' || c == '>' || c == '.'; };
    while (!s.empty() && junk(s.back())) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && junk(s[b])) ++b;
    return s.substr(b);
}

nlohmann::json messages_json(const std::vector<Message>& messages) {
    auto arr = nlohmann::json::array();
    for (const auto& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
    return arr;
}

}  // namespace

std::string to_string(Stage stage) { return stage == Stage::kWarmup ? "warmup" : "bootstrapped"; }

Stage parse_stage(const std::string& name) {
    if (name == "warmup") return Stage::kWarmup;
    if (name == "bootstrapped") return Stage::kBootstrapped;
    throw std::invalid_argument(fmt::format("unknown prompt stage '{}'", name));
}

std::vector<Message> build_prompt(const PromptSpec& spec, std::optional<std::uint64_t> shuffle_seed) {
    if (spec.k_targets == 0) throw std::invalid_argument("prompt must ask for at least one target");
    std::set<std::string> seen;
    for (const auto& [name, desc] : spec.variables)
        if (!seen.insert(name).second) throw std::invalid_argument(fmt::format("duplicate variable '{}'", name));

    std::vector<std::size_t> order(spec.variables.size());
    std::iota(order.begin(), order.end(), 0);
    if (shuffle_seed) {
        Rng rng(*shuffle_seed);
        std::shuffle(order.begin(), order.end(), rng);
    }

    std::string text = fmt::format(
        "You are a helpful assistant and expert in {}. Here are some tips that you can pay attention to:\n\n",
        spec.domain_blurb);
    for (std::size_t t = 0; t < 3; ++t) text += fmt::format("{}. {}\n\n", t + 1, kTips[t]);
    text +=
        "\nAssuming we can do interventions to all the variables, your job is to assist in designing the best "
        "intervention experiments among the following variables to help discover their causal relations:\n\n";
    for (std::size_t idx : order) {
        const auto& [name, desc] = spec.variables[idx];
        text += fmt::format("<{}>: {}\n\n", name, desc);
    }
    if (spec.stage == Stage::kBootstrapped) text += fmt::format("{}\n\n", kFocusUnconnected);
    text += fmt::format(
        "Assuming we can do interventions to all the variables, given the aforementioned variables and their "
        "descriptions, can you **echo your knowledge those variables**, **temporally analyze** their relations, and "
        "then **choose the best {} intervention targets from all the variables** which hopefully are the root causes "
        "of the other variables to start our analysis of their causal relations?\n\n"
        "Let's think and analyze step by step. Then, provide your final answer (variable names only) within the tags "
        "<Answer>...</Answer>, separated by \", \".",
        spec.k_targets);
    return {Message{"user", std::move(text)}};
}

ParsedAnswer parse_answer(const std::string& raw, const std::vector<std::string>& valid_names) {
    ParsedAnswer out;
    const std::string low = lower(raw);
    const std::string open = "<answer>", close = "</answer>";
    std::size_t start = std::string::npos;
    std::size_t end = std::string::npos;
    for (std::size_t pos = low.rfind(open); pos != std::string::npos;
         pos = pos == 0 ? std::string::npos : low.rfind(open, pos - 1)) {
        std::size_t e = low.find(close, pos + open.size());
        if (e != std::string::npos) {
            start = pos + open.size();
            end = e;
            break;
        }
    }
    if (start == std::string::npos) return out;
    out.found_block = true;

    std::vector<std::string> lowered;
    for (const auto& n : valid_names) lowered.push_back(lower(n));
    std::set<std::size_t> used;
    std::stringstream body(raw.substr(start, end - start));
    std::string token;
    while (std::getline(body, token, ',')) {
        token = trim_token(token);
        if (token.empty()) continue;
        const std::string lt = lower(token);
        std::optional<std::size_t> hit;
        for (std::size_t i = 0; i < lowered.size() && !hit; ++i)
            if (lowered[i] == lt) hit = i;
        if (!hit) {
            std::size_t matches = 0;
            for (std::size_t i = 0; i < lowered.size(); ++i)
                if (lowered[i].compare(0, lt.size(), lt) == 0) ++matches, hit = i;
            if (matches != 1) hit.reset();
        }
        if (!hit) {
            out.dropped.push_back(token);
            continue;
        }
        if (used.insert(*hit).second) out.names.push_back(valid_names[*hit]);
    }
    return out;
}

HttpResponse HttpTransport::post(const std::string& base_url, const std::string& path,
                                 const std::vector<std::pair<std::string, std::string>>& headers,
                                 const std::string& body, double timeout_s) {
    HttpResponse out;
    try {
        httplib::Client cli(base_url);
        auto secs = static_cast<time_t>(timeout_s);
        auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
        cli.set_connection_timeout(secs, usecs);
        cli.set_read_timeout(secs, usecs);
        cli.set_write_timeout(secs, usecs);
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = cli.Post(path, h, body, "application/json");
        if (!res) {
            out.error = httplib::to_string(res.error());
            return out;
        }
        out.status = res->status;
        out.body = res->body;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

HttpResponse CountingTransport::post(const std::string& base_url, const std::string& path,
                                     const std::vector<std::pair<std::string, std::string>>& headers,
                                     const std::string& body, double timeout_s) {
    ++calls_;
    if (!inner_) return HttpResponse{0, "", "no transport configured"};
    return inner_->post(base_url, path, headers, body, timeout_s);
}

std::string request_body(const EndpointConfig& cfg, const std::vector<Message>& messages) {
    nlohmann::json j{{"model", cfg.model}, {"messages", messages_json(messages)}, {"temperature", cfg.temperature}};
    return j.dump();
}

std::string response_content(const std::string& body) {
    try {
        auto j = nlohmann::json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw LlmError(fmt::format("malformed chat-completions response: {}", e.what()));
    }
}

std::string cache_key(const std::string& model, const std::vector<Message>& messages) {
    const std::string payload = model + "\n" + messages_json(messages).dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(payload.data(), payload.size(), digest, &len, EVP_sha256(), nullptr);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

ReplayClient::ReplayClient(std::filesystem::path fixtures_dir) : dir_(std::move(fixtures_dir)) {}

std::string ReplayClient::complete(const CompletionRequest& request) {
    const auto path = dir_ / (request.dataset + ".json");
    std::ifstream in(path);
    if (!in) throw LlmError(fmt::format("replay fixture file not found: {}", path.string()));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw LlmError(fmt::format("{}: {}", path.string(), e.what()));
    }
    const std::string stage = to_string(request.stage);
    for (const auto& rec : j.at("records"))
        if (rec.at("stage") == stage && rec.at("sample").get<std::size_t>() == request.sample)
            return rec.at("text").get<std::string>();
    throw LlmError(fmt::format("no replay fixture for {} / {} / sample {}", request.dataset, stage, request.sample));
}

LiveClient::LiveClient(EndpointConfig cfg, std::shared_ptr<Transport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)) {}

std::string LiveClient::complete(const CompletionRequest& request) {
    std::vector<std::pair<std::string, std::string>> headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
        headers.emplace_back("Authorization", fmt::format("Bearer {}", key));
    const std::string body = request_body(cfg_, request.messages);
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
        HttpResponse res = transport_->post(cfg_.base_url, cfg_.path, headers, body, cfg_.timeout_s);
        if (res.status == 200) return response_content(res.body);
        last_error = res.status ? fmt::format("HTTP {}: {}", res.status, res.body.substr(0, 200)) : res.error;
        spdlog::warn("llm request attempt {} failed: {}", attempt + 1, last_error);
        if (res.status >= 400 && res.status < 500 && res.status != 429) break;
    }
    throw LlmError(fmt::format("chat-completions request failed after {} attempt(s): {}", cfg_.retries + 1, last_error));
}

CachedClient::CachedClient(std::string model, std::filesystem::path dir, std::unique_ptr<LlmClient> inner)
    : model_(std::move(model)), dir_(std::move(dir)), inner_(std::move(inner)) {}

std::string CachedClient::complete(const CompletionRequest& request) {
    const auto path = dir_ / (cache_key(model_, request.messages) + ".json");
    if (std::ifstream in(path); in) {
        try {
            nlohmann::json j;
            in >> j;
            return j.at("response").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            spdlog::warn("ignoring unreadable cache entry {}: {}", path.string(), e.what());
        }
    }
    std::string text = inner_->complete(request);
    std::filesystem::create_directories(dir_);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        out << nlohmann::json{{"model", model_}, {"messages", messages_json(request.messages)}, {"response", text}}.dump(1);
    }
    std::filesystem::rename(tmp, path);
    return text;
}

std::unique_ptr<LlmClient> make_client(const EndpointConfig& cfg, std::shared_ptr<Transport> transport) {
    if (cfg.mode == "replay")
        return std::make_unique<ReplayClient>(cfg.fixtures_dir.empty() ? netio::data_dir() / "llm_fixtures"
                                                                       : cfg.fixtures_dir);
    if (!transport) transport = std::make_shared<HttpTransport>();
    if (cfg.mode == "live") return std::make_unique<LiveClient>(cfg, transport);
    if (cfg.mode == "cached")
        return std::make_unique<CachedClient>(cfg.model, cfg.cache_dir, std::make_unique<LiveClient>(cfg, transport));
    throw std::invalid_argument(fmt::format("unknown llm mode '{}' (expected live, cached or replay)", cfg.mode));
}

std::vector<std::string> aggregate_votes(const std::vector<std::vector<std::string>>& lists,
                                         std::optional<std::size_t> vote_depth) {
    struct Tally {
        std::size_t votes = 0;
        double position_sum = 0.0;
    };
    std::map<std::string, Tally> tally;
    for (const auto& list : lists) {
        std::size_t depth = vote_depth ? std::min(*vote_depth, list.size()) : list.size();
        for (std::size_t p = 0; p < depth; ++p) {
            auto& t = tally[list[p]];
            ++t.votes;
            t.position_sum += static_cast<double>(p);
        }
    }
    std::vector<std::pair<std::string, Tally>> items(tally.begin(), tally.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second.votes != b.second.votes) return a.second.votes > b.second.votes;
        double ma = a.second.position_sum / static_cast<double>(a.second.votes);
        double mb = b.second.position_sum / static_cast<double>(b.second.votes);
        if (ma != mb) return ma < mb;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    for (auto& [name, t] : items) out.push_back(name);
    return out;
}

SelfConsistencyResult self_consistent_targets(const PromptSpec& spec, LlmClient& client, const std::string& dataset,
                                              std::size_t n_samples, std::uint64_t seed,
                                              std::optional<std::size_t> vote_depth) {
    if (n_samples == 0) throw std::invalid_argument("self-consistency needs at least one sample");
    std::vector<std::string> valid;
    for (const auto& [name, desc] : spec.variables) valid.push_back(name);

    SelfConsistencyResult out;
    std::vector<std::vector<std::string>> lists;
    for (std::size_t s = 0; s < n_samples; ++s) {
        std::optional<std::uint64_t> shuffle;
        if (s > 0) shuffle = derive_seed(seed, Stream::kShuffle, s);
        CompletionRequest req{build_prompt(spec, shuffle), dataset, spec.stage, s};
        ParsedAnswer parsed = parse_answer(client.complete(req), valid);
        if (!parsed.found_block) out.diagnostics.push_back(fmt::format("sample {}: no <Answer> block", s));
        for (const auto& d : parsed.dropped) {
            out.diagnostics.push_back(fmt::format("sample {}: dropped unknown name '{}'", s, d));
            spdlog::debug("llm {}: {}", dataset, out.diagnostics.back());
        }
        lists.push_back(parsed.names);
        out.samples.push_back(std::move(parsed));
    }
    out.ranked = aggregate_votes(lists, vote_depth);
    if (out.ranked.empty()) out.diagnostics.push_back("no sample produced a usable answer");
    for (const auto& d : out.diagnostics)
        if (d.find("dropped") == std::string::npos) spdlog::warn("llm {}: {}", dataset, d);
    return out;
}

}  // namespace legit::llm
