#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "legit/legit.hpp"
#include "legit/llm.hpp"
#include "legit/netio.hpp"
#include "test_util.hpp"

using namespace legit;
using namespace legit::llm;

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string ok_body(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

class ScriptedTransport : public Transport {
public:
    explicit ScriptedTransport(std::vector<HttpResponse> replies) : replies_(std::move(replies)) {}
    HttpResponse post(const std::string&, const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>&, const std::string& body,
                      double) override {
        paths.push_back(path);
        bodies.push_back(body);
        if (pos_ < replies_.size()) return replies_[pos_++];
        return {200, ok_body("<Answer>x</Answer>"), ""};
    }
    std::vector<std::string> paths, bodies;

private:
    std::vector<HttpResponse> replies_;
    std::size_t pos_ = 0;
};

class RecordingClient : public LlmClient {
public:
    explicit RecordingClient(std::vector<std::string> answers) : answers_(std::move(answers)) {}
    std::string complete(const CompletionRequest& req) override {
        requests.push_back(req);
        return answers_.at(std::min(requests.size() - 1, answers_.size() - 1));
    }
    std::vector<CompletionRequest> requests;

private:
    std::vector<std::string> answers_;
};

EndpointConfig fast_endpoint(const std::string& mode) {
    EndpointConfig cfg;
    cfg.mode = mode;
    cfg.backoff_ms = 1;
    cfg.api_key_env = "LEGIT_TEST_UNSET_KEY";
    return cfg;
}

PromptSpec small_spec() {
    PromptSpec spec;
    spec.domain_blurb = "weather";
    spec.variables = {{"rain", "whether it rains"}, {"wet", "whether the grass is wet"}, {"sun", "sunshine"}};
    spec.k_targets = 2;
    return spec;
}

}  // namespace

TEST_SUITE("llm") {
    TEST_CASE("asia warmup prompt matches the reference text") {
        auto net = netio::load_network("asia");
        auto descs = netio::load_descriptions("asia");
        std::vector<std::size_t> all(net.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        auto spec = schedule::prompt_spec(descs, net.node_names(), all, 4, Stage::kWarmup);
        auto msgs = build_prompt(spec, std::nullopt);
        REQUIRE(msgs.size() == 1);
        CHECK(msgs[0].role == "user");
        CHECK(msgs[0].content == read_file(testutil::fixture("asia_warmup_prompt.txt")));
    }

    TEST_CASE("prompt shuffling permutes only the variable lines") {
        auto spec = small_spec();
        auto base = build_prompt(spec, std::nullopt)[0].content;
        auto a = build_prompt(spec, 5)[0].content;
        CHECK(a == build_prompt(spec, 5)[0].content);
        CHECK(a.size() == base.size());
        for (const auto& [name, desc] : spec.variables) CHECK(a.find("<" + name + ">: " + desc) != std::string::npos);
        bool any_diff = false;
        for (std::uint64_t s = 1; s < 10; ++s) any_diff |= build_prompt(spec, s)[0].content != base;
        CHECK(any_diff);
        spec.k_targets = 0;
        CHECK_THROWS_AS(build_prompt(spec, std::nullopt), std::invalid_argument);
        spec = small_spec();
        spec.variables.push_back({"rain", "again"});
        CHECK_THROWS_AS(build_prompt(spec, std::nullopt), std::invalid_argument);
        auto boot = small_spec();
        boot.stage = Stage::kBootstrapped;
        CHECK(build_prompt(boot, std::nullopt)[0].content != base);
    }

    TEST_CASE("answer parsing") {
        std::vector<std::string> names{"smoke", "lung", "bronc", "either"};
        auto p = parse_answer("<Answer>a</Answer> then <Answer>Smoke, lung, SMOKE, eith, cancer , </Answer>", names);
        CHECK(p.found_block);
        CHECK(p.names == std::vector<std::string>{"smoke", "lung", "either"});
        CHECK(p.dropped == std::vector<std::string>{"cancer"});
        auto none = parse_answer("I pick smoke", names);
        CHECK_FALSE(none.found_block);
        CHECK(none.names.empty());
        auto brackets = parse_answer("<Answer><lung>, <bronc></Answer>", names);
        CHECK(brackets.names == std::vector<std::string>{"lung", "bronc"});
        std::vector<std::string> amb{"lung", "lung_cancer"};
        auto a2 = parse_answer("<Answer>lung_c, lu</Answer>", amb);
        CHECK(a2.names == std::vector<std::string>{"lung_cancer"});
        CHECK(a2.dropped == std::vector<std::string>{"lu"});
    }

    TEST_CASE("vote aggregation") {
        CHECK(aggregate_votes({{"a", "b"}, {"b", "c"}, {"b", "a"}}) == std::vector<std::string>{"b", "a", "c"});
        // equal votes: best mean position, then name
        CHECK(aggregate_votes({{"x", "y"}, {"y", "x"}, {"z"}}) == std::vector<std::string>{"x", "y", "z"});
        CHECK(aggregate_votes({{"q", "p"}, {"q", "p"}}, 1) == std::vector<std::string>{"q"});
        CHECK(aggregate_votes({}).empty());
    }

    TEST_CASE("self-consistency: sample 0 in listing order, the rest shuffled") {
        auto spec = small_spec();
        RecordingClient client({"<Answer>wet, rain</Answer>", "<Answer>rain</Answer>", "<Answer>rain, hail</Answer>"});
        auto r = self_consistent_targets(spec, client, "weather", 3, 42);
        REQUIRE(client.requests.size() == 3);
        CHECK(client.requests[0].messages[0].content == build_prompt(spec, std::nullopt)[0].content);
        for (std::size_t s = 0; s < 3; ++s) {
            CHECK(client.requests[s].sample == s);
            CHECK(client.requests[s].dataset == "weather");
        }
        CHECK(r.ranked == std::vector<std::string>{"rain", "wet"});
        CHECK(r.samples.size() == 3);
        CHECK(r.diagnostics.size() == 1);
        CHECK_THROWS(self_consistent_targets(spec, client, "weather", 0, 1));
    }

    TEST_CASE("replay fixtures exist for every bundled dataset and never use the network") {
        auto counting = std::make_shared<CountingTransport>();
        auto client = make_client(fast_endpoint("replay"), counting);
        for (std::string ds : {"asia", "child", "insurance", "alarm"}) {
            auto net = netio::load_network(ds);
            auto descs = netio::load_descriptions(ds);
            auto lc = schedule::dataset_defaults(ds);
            std::size_t k = std::min(net.size(), std::max(lc.t_warmup + lc.t_bootstrapped, lc.prompt_targets));
            std::vector<std::size_t> all(net.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            auto spec = schedule::prompt_spec(descs, net.node_names(), all, k, Stage::kWarmup);
            auto r = self_consistent_targets(spec, *client, ds, lc.sc_samples, 0);
            CHECK_FALSE(r.ranked.empty());
            for (const auto& name : r.ranked) CHECK_NOTHROW(net.index_of(name));
        }
        CHECK(counting->calls() == 0);
        CompletionRequest missing{{}, "nosuch", Stage::kWarmup, 0};
        CHECK_THROWS_AS(client->complete(missing), LlmError);
    }

    TEST_CASE("live client retries transient failures and stops on client errors") {
        auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{
            {500, "oops", ""}, {0, "", "timeout"}, {429, "slow down", ""}, {200, ok_body("<Answer>rain</Answer>"), ""}});
        LiveClient live(fast_endpoint("live"), t);
        CompletionRequest req{build_prompt(small_spec(), std::nullopt), "weather", Stage::kWarmup, 0};
        CHECK(live.complete(req) == "<Answer>rain</Answer>");
        CHECK(t->bodies.size() == 4);
        CHECK(t->paths[0] == "/v1/chat/completions");
        auto body = nlohmann::json::parse(t->bodies[0]);
        CHECK(body["model"] == "gpt-4o-2024-08-06");
        CHECK(body["messages"][0]["role"] == "user");

        auto bad = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{400, "bad", ""}});
        LiveClient live_bad(fast_endpoint("live"), bad);
        CHECK_THROWS_AS(live_bad.complete(req), LlmError);
        CHECK(bad->bodies.size() == 1);

        auto down = std::make_shared<ScriptedTransport>(
            std::vector<HttpResponse>(10, HttpResponse{503, "down", ""}));
        auto cfg = fast_endpoint("live");
        cfg.retries = 2;
        LiveClient live_down(cfg, down);
        CHECK_THROWS_AS(live_down.complete(req), LlmError);
        CHECK(down->bodies.size() == 3);
    }

    TEST_CASE("cached client answers identical prompts from disk") {
        auto dir = std::filesystem::temp_directory_path() / "legit_llm_cache_test";
        std::filesystem::remove_all(dir);
        auto inner_t = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{});
        auto counting = std::make_shared<CountingTransport>(inner_t);
        auto cfg = fast_endpoint("cached");
        cfg.cache_dir = dir;
        auto client = make_client(cfg, counting);
        CompletionRequest req{build_prompt(small_spec(), std::nullopt), "weather", Stage::kWarmup, 0};
        auto first = client->complete(req);
        auto second = client->complete(req);
        CHECK(first == second);
        CHECK(counting->calls() == 1);
        CompletionRequest other{build_prompt(small_spec(), 3), "weather", Stage::kWarmup, 1};
        client->complete(other);
        CHECK(counting->calls() == 2);
        // a fresh client over the same directory still hits
        auto again = make_client(cfg, counting);
        again->complete(req);
        CHECK(counting->calls() == 2);
        std::filesystem::remove_all(dir);
        CHECK_THROWS_AS(make_client(fast_endpoint("psychic")), std::invalid_argument);
    }

    TEST_CASE("wire helpers") {
        std::vector<Message> m{{"user", "hi"}};
        auto k1 = cache_key("gpt-4o-2024-08-06", m);
        CHECK(k1.size() == 64);
        CHECK(k1.find_first_not_of("0123456789abcdef") == std::string::npos);
        CHECK(k1 == cache_key("gpt-4o-2024-08-06", m));
        CHECK(k1 != cache_key("other-model", m));
        CHECK(k1 != cache_key("gpt-4o-2024-08-06", {{"user", "hi!"}}));
        CHECK(response_content(ok_body("text")) == "text");
        CHECK_THROWS_AS(response_content("not json"), LlmError);
        CHECK_THROWS_AS(response_content("{\"choices\": []}"), LlmError);
        auto cfg = fast_endpoint("live");
        cfg.temperature = 0.25;
        auto body = nlohmann::json::parse(request_body(cfg, m));
        CHECK(body["temperature"].get<double>() == doctest::Approx(0.25));
        CHECK(body["messages"].size() == 1);
        CHECK(parse_stage(to_string(Stage::kBootstrapped)) == Stage::kBootstrapped);
        CHECK_THROWS(parse_stage("later"));
    }
}
