#include <doctest.h>

#include "legit/enco.hpp"
#include "legit/legit.hpp"
#include "test_util.hpp"

using namespace legit;
using namespace legit::schedule;

namespace {

class StageClient : public llm::LlmClient {
public:
    StageClient(std::string warm, std::string boot) : warm_(std::move(warm)), boot_(std::move(boot)) {}
    std::string complete(const llm::CompletionRequest& req) override {
        (req.stage == llm::Stage::kWarmup ? warm_calls : boot_calls)++;
        last_boot_prompt = req.stage == llm::Stage::kBootstrapped ? req.messages[0].content : last_boot_prompt;
        return req.stage == llm::Stage::kWarmup ? warm_ : boot_;
    }
    int warm_calls = 0, boot_calls = 0;
    std::string last_boot_prompt;

private:
    std::string warm_, boot_;
};

class CountingBase : public strategies::Strategy {
public:
    explicit CountingBase(std::size_t answer) : answer_(answer) {}
    std::string name() const override { return "counting"; }
    std::size_t next(const strategies::TargetingState& s) override {
        rounds.push_back(s.round);
        return answer_;
    }
    std::vector<std::size_t> rounds;

private:
    std::size_t answer_;
};

struct AsiaRun {
    netio::BayesNet net = netio::load_network("asia");
    std::vector<std::string> names = net.node_names();
    enco::EncoModel model = enco::init_model(net.cardinalities(), enco::EncoConfig{}, 0);
    std::vector<std::size_t> history;
    Rng rng{1};
    CountingBase* base = nullptr;
    std::unique_ptr<LegitStrategy> strategy;

    AsiaRun(llm::LlmClient& client, LegitConfig cfg) {
        auto b = std::make_unique<CountingBase>(7);
        base = b.get();
        strategy = std::make_unique<LegitStrategy>(cfg, client, netio::load_descriptions("asia"), "asia",
                                                   std::move(b), 5);
    }
    std::size_t step() {
        strategies::TargetingState s;
        s.round = history.size() + 1;
        s.model = &model;
        s.history = &history;
        s.node_names = &names;
        s.rng = &rng;
        auto t = strategy->next(s);
        history.push_back(t);
        return t;
    }
    std::size_t idx(const std::string& n) const { return net.index_of(n); }
};

}  // namespace

TEST_SUITE("legit") {
    TEST_CASE("phase boundaries") {
        CHECK(phase_of(1, 3, 2) == Phase::kWarmup);
        CHECK(phase_of(3, 3, 2) == Phase::kWarmup);
        CHECK(phase_of(4, 3, 2) == Phase::kBootstrapped);
        CHECK(phase_of(5, 3, 2) == Phase::kBootstrapped);
        CHECK(phase_of(6, 3, 2) == Phase::kReplay);
        CHECK(phase_of(10, 3, 2) == Phase::kReplay);
        CHECK(phase_of(11, 3, 2) == Phase::kBase);
        std::size_t base = 0;
        for (std::size_t r = 1; r <= 33; ++r) base += phase_of(r, 3, 2) == Phase::kBase;
        CHECK(base == 23);
        CHECK(phase_of(3, 3, 0) == Phase::kWarmup);
        CHECK(phase_of(4, 3, 0) == Phase::kReplay);
        CHECK_THROWS(phase_of(0, 3, 2));
        CHECK(to_string(Phase::kReplay) == "replay");
    }

    TEST_CASE("dataset defaults and validation") {
        auto asia = dataset_defaults("asia");
        CHECK(asia.t_warmup == 3);
        CHECK(asia.t_bootstrapped == 1);
        CHECK(dataset_defaults("insurance").prompt_targets == 5);
        auto child = dataset_defaults("child");
        CHECK(child.t_bootstrapped == 2);
        CHECK(child.prompt_targets == 4);
        CHECK(child.base_strategy == "git");
        LegitConfig bad;
        bad.base_strategy = "legit";
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = LegitConfig{};
        bad.t_warmup = 0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = LegitConfig{};
        bad.base_strategy = "external";
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }

    TEST_CASE("staged schedule: warmup, bootstrapped, replay, base") {
        StageClient client("<Answer>smoke, asia, tub, lung</Answer>", "<Answer>bronc, xray</Answer>");
        auto cfg = dataset_defaults("asia");
        AsiaRun run(client, cfg);
        std::vector<std::size_t> got;
        for (int r = 0; r < 12; ++r) got.push_back(run.step());
        std::vector<std::size_t> want{run.idx("smoke"), run.idx("asia"), run.idx("tub"), run.idx("bronc")};
        for (std::size_t r = 0; r < 4; ++r) CHECK(got[r] == want[r]);
        for (std::size_t r = 4; r < 8; ++r) CHECK(got[r] == got[r - 4]);
        for (std::size_t r = 8; r < 12; ++r) CHECK(got[r] == 7);
        CHECK(run.base->rounds == std::vector<std::size_t>{9, 10, 11, 12});
        const auto& sch = run.strategy->schedule();
        CHECK(sch.replay_targets() == want);
        CHECK(sch.fallbacks == 0);
        CHECK(sch.reserve_used == 0);
        CHECK(sch.isolated_snapshot.size() == 8);  // a fresh model believes no edge
        CHECK(client.warm_calls == static_cast<int>(cfg.sc_samples));
        CHECK(client.boot_calls == static_cast<int>(cfg.sc_samples));
        // the bootstrapped prompt asks for B targets
        CHECK(client.last_boot_prompt.find("choose the best 1 intervention targets") != std::string::npos);
    }

    TEST_CASE("short warmup answers are padded in node order") {
        StageClient client("<Answer>either, nonsense</Answer>", "<Answer>dysp</Answer>");
        AsiaRun run(client, dataset_defaults("asia"));
        run.step();
        const auto& w = run.strategy->schedule().warmup_targets;
        REQUIRE(w.size() == 4);
        CHECK(w[0] == run.idx("either"));
        std::vector<std::size_t> pad;
        for (std::size_t i = 0; pad.size() < 3; ++i)
            if (i != run.idx("either")) pad.push_back(i);
        CHECK(std::vector<std::size_t>(w.begin() + 1, w.end()) == pad);
    }

    TEST_CASE("unusable bootstrapped answers fall back to the warmup reserve") {
        StageClient client("<Answer>smoke, asia, tub, lung</Answer>", "<Answer>nothing useful</Answer>");
        AsiaRun run(client, dataset_defaults("asia"));
        for (int r = 0; r < 4; ++r) run.step();
        CHECK(run.history[3] == run.idx("lung"));
        CHECK(run.strategy->schedule().reserve_used == 1);
        CHECK(run.base->rounds.empty());
    }

    TEST_CASE("restore resumes the replay") {
        StageClient client("<Answer>smoke, asia, tub, lung</Answer>", "<Answer>bronc</Answer>");
        AsiaRun a(client, dataset_defaults("asia"));
        for (int r = 0; r < 4; ++r) a.step();
        StageClient silent("", "");
        AsiaRun b(silent, dataset_defaults("asia"));
        b.strategy->restore(a.strategy->schedule());
        b.history = a.history;
        for (int r = 0; r < 4; ++r) CHECK(b.step() == a.history[r]);
        CHECK(silent.warm_calls == 0);
        CHECK(silent.boot_calls == 0);
    }
}
