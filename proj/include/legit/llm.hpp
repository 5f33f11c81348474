#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace legit::llm {

enum class Stage { kWarmup, kBootstrapped };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& name);

struct PromptSpec {
    std::string domain_blurb;
    std::vector<std::pair<std::string, std::string>> variables;  // (name, description), listing order
    std::size_t k_targets = 4;
    Stage stage = Stage::kWarmup;
};

struct Message {
    std::string role;
    std::string content;
};

/// One user message. nullopt keeps the listing order; a seed permutes the variable lines.
/// Throws std::invalid_argument when k_targets is 0 or names repeat.
std::vector<Message> build_prompt(const PromptSpec& spec, std::optional<std::uint64_t> shuffle_seed);

struct ParsedAnswer {
    std::vector<std::string> names;    // matched, in answer order, duplicates removed
    std::vector<std::string> dropped;  // tokens that matched nothing
    bool found_block = false;
};

/// Takes the last <Answer>...</Answer> block, splits on commas, and matches each
/// token case-insensitively, then by unique prefix, against `valid_names`.
ParsedAnswer parse_answer(const std::string& raw, const std::vector<std::string>& valid_names);

class LlmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EndpointConfig {
    std::string mode = "replay";  // live | cached | replay
    std::string base_url = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string api_key_env = "OPENAI_API_KEY";
    std::string model = "gpt-4o-2024-08-06";
    double temperature = 0.7;
    double timeout_s = 60.0;
    int retries = 3;
    int backoff_ms = 500;
    std::filesystem::path cache_dir = ".legit_cache/llm";
    std::filesystem::path fixtures_dir;  // empty: <data_dir>/llm_fixtures
};

struct HttpResponse {
    int status = 0;  // 0 when the request never completed
    std::string body;
    std::string error;
};

/// Network seam. Tests inject a counting or failing transport.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& base_url, const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& headers,
                              const std::string& body, double timeout_s) = 0;
};

/// HTTPS-capable transport backed by cpp-httplib.
class HttpTransport : public Transport {
public:
    HttpResponse post(const std::string& base_url, const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& headers, const std::string& body,
                      double timeout_s) override;
};

/// Counts calls and forwards them (or fails them when no inner transport is given).
class CountingTransport : public Transport {
public:
    explicit CountingTransport(std::shared_ptr<Transport> inner = nullptr) : inner_(std::move(inner)) {}
    HttpResponse post(const std::string& base_url, const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& headers, const std::string& body,
                      double timeout_s) override;
    std::size_t calls() const { return calls_.load(); }

private:
    std::shared_ptr<Transport> inner_;
    std::atomic<std::size_t> calls_{0};
};

struct CompletionRequest {
    std::vector<Message> messages;
    std::string dataset;
    Stage stage = Stage::kWarmup;
    std::size_t sample = 0;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
};

/// Chat-completions request body for `messages`.
std::string request_body(const EndpointConfig& cfg, const std::vector<Message>& messages);
/// First choice's message content. Throws LlmError on a malformed body.
std::string response_content(const std::string& body);
/// Hex SHA-256 of the model name and the serialized messages.
std::string cache_key(const std::string& model, const std::vector<Message>& messages);

/// Fixture records keyed by (stage, sample); never touches the network.
class ReplayClient : public LlmClient {
public:
    ReplayClient(std::filesystem::path fixtures_dir);
    std::string complete(const CompletionRequest& request) override;

private:
    std::filesystem::path dir_;
};

class LiveClient : public LlmClient {
public:
    LiveClient(EndpointConfig cfg, std::shared_ptr<Transport> transport);
    std::string complete(const CompletionRequest& request) override;

private:
    EndpointConfig cfg_;
    std::shared_ptr<Transport> transport_;
};

/// Serves identical prompts from disk; misses go to the wrapped client and are stored.
class CachedClient : public LlmClient {
public:
    CachedClient(std::string model, std::filesystem::path dir, std::unique_ptr<LlmClient> inner);
    std::string complete(const CompletionRequest& request) override;

private:
    std::string model_;
    std::filesystem::path dir_;
    std::unique_ptr<LlmClient> inner_;
};

/// Builds the client for cfg.mode. A null transport means a real HttpTransport.
std::unique_ptr<LlmClient> make_client(const EndpointConfig& cfg, std::shared_ptr<Transport> transport = nullptr);

struct SelfConsistencyResult {
    std::vector<std::string> ranked;
    std::vector<ParsedAnswer> samples;
    std::vector<std::string> diagnostics;
};

/// Ranks names by vote count, then best mean position, then name. With
/// `vote_depth`, only the first vote_depth names of each sample count.
std::vector<std::string> aggregate_votes(const std::vector<std::vector<std::string>>& lists,
                                         std::optional<std::size_t> vote_depth = std::nullopt);

/// Issues n_samples completions (sample 0 in listing order, the rest shuffled
/// with seeds derived from `seed`) and aggregates the parsed answers.
SelfConsistencyResult self_consistent_targets(const PromptSpec& spec, LlmClient& client, const std::string& dataset,
                                              std::size_t n_samples, std::uint64_t seed,
                                              std::optional<std::size_t> vote_depth = std::nullopt);

}  // namespace legit::llm
