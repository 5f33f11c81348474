#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "legit/scm.hpp"
#include "legit/strategies.hpp"
#include "test_util.hpp"

using namespace legit;
using namespace legit::strategies;

namespace {

// Chain model with conditionals trained briefly and mixed edge beliefs.
enco::EncoModel trained_chain(enco::EncoConfig& cfg) {
    auto net = netio::parse_bif(testutil::kChainBif);
    auto obs = scm::sample_observational(net, 1000, 1);
    cfg.hidden_size = 16;
    cfg.batch_size = 64;
    auto m = enco::init_model(net.cardinalities(), cfg, 1);
    Rng rng(2);
    for (int i = 0; i < 150; ++i) enco::distribution_step(m, obs, cfg, rng);
    m.set_gamma(0, 1, 1.5);
    m.set_gamma(1, 0, 1.5);
    m.set_theta(0, 1, 0.8);
    m.set_gamma(1, 2, 0.5);
    m.set_gamma(2, 1, 0.5);
    m.set_gamma(0, 2, -0.5);
    return m;
}

struct StateHolder {
    std::vector<std::size_t> history;
    std::vector<std::string> names;
    Rng rng;
    TargetingState state;
    StateHolder(const enco::EncoModel* model, std::size_t n, std::uint64_t seed) : rng(seed) {
        for (std::size_t i = 0; i < n; ++i) names.push_back("X" + std::to_string(i));
        state.model = model;
        state.history = &history;
        state.node_names = &names;
        state.rng = &rng;
    }
};

// One-way ANOVA F statistic per one-hot coordinate, computed from explicit deviations.
double anova_f(const std::vector<std::vector<double>>& groups) {
    double total = 0, count = 0;
    for (const auto& g : groups)
        for (double v : g) total += v, count += 1;
    const double grand = total / count;
    double between = 0, within = 0;
    for (const auto& g : groups) {
        double m = 0;
        for (double v : g) m += v;
        m /= static_cast<double>(g.size());
        between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double v : g) within += (v - m) * (v - m);
    }
    const double k = static_cast<double>(groups.size());
    if (within <= 0) return 0;
    return (between / (k - 1)) / (within / (count - k));
}

}  // namespace

TEST_SUITE("strategies") {
    TEST_CASE("argmax ties go to the lowest index") {
        CHECK(argmax_lowest({1.0, 3.0, 3.0}) == 1);
        CHECK(argmax_lowest({2.0, 2.0, 2.0}) == 0);
        CHECK(argmax_lowest({-1.0, -0.5, -2.0}) == 1);
    }

    TEST_CASE("round robin visits every node once per cycle") {
        StateHolder h(nullptr, 5, 3);
        for (int cycle = 0; cycle < 4; ++cycle) {
            std::set<std::size_t> seen;
            for (int r = 0; r < 5; ++r) {
                h.state.round = h.history.size() + 1;
                auto t = next_round_robin(h.state);
                CHECK(t < 5);
                seen.insert(t);
                h.history.push_back(t);
            }
            CHECK(seen.size() == 5);
        }
        // an externally skewed history still completes the current cycle first
        h.history = {0, 0, 1};
        std::set<std::size_t> rest;
        for (int r = 0; r < 3; ++r) {
            auto t = next_round_robin(h.state);
            rest.insert(t);
            h.history.push_back(t);
        }
        CHECK(rest == std::set<std::size_t>{2, 3, 4});
    }

    TEST_CASE("random is uniform and reproducible") {
        StateHolder a(nullptr, 4, 9), b(nullptr, 4, 9);
        std::vector<int> counts(4, 0);
        for (int i = 0; i < 4000; ++i) {
            auto t = next_random(a.state);
            CHECK(t == next_random(b.state));
            ++counts[t];
        }
        for (int c : counts) CHECK(std::abs(c - 1000) < 120);
    }

    TEST_CASE("degree_prob follows out-degrees") {
        auto truth = graph::Digraph::from_edges(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}});
        StateHolder h(nullptr, 4, 5);
        std::vector<int> counts(4, 0);
        for (int i = 0; i < 8000; ++i) ++counts[next_degree_prob(h.state, truth)];
        CHECK(counts[2] == 0);
        CHECK(counts[3] == 0);
        CHECK(std::abs(counts[0] / 8000.0 - 0.75) < 0.02);
        std::vector<int> flat(3, 0);
        for (int i = 0; i < 3000; ++i) ++flat[next_degree_prob(h.state, graph::Digraph(3))];
        for (int c : flat) CHECK(c > 850);
    }

    TEST_CASE("scored strategies return n finite scores and are deterministic") {
        enco::EncoConfig cfg;
        auto m = trained_chain(cfg);
        EnsembleConfig ec;
        ec.graphs = 8;
        ec.samples_per = 32;
        ec.estimator_graphs = 6;
        for (std::string name : {"git", "ait", "cbed"}) {
            StrategyOptions opts;
            opts.enco = cfg;
            opts.ensemble = ec;
            auto a = make_strategy(name, opts), b = make_strategy(name, opts);
            StateHolder ha(&m, 3, 4), hb(&m, 3, 4);
            auto ta = a->next(ha.state), tb = b->next(hb.state);
            CHECK(ta == tb);
            auto sa = a->last_score();
            REQUIRE(sa);
            CHECK(sa->scores.size() == 3);
            for (double s : sa->scores) CHECK(std::isfinite(s));
            CHECK(sa->chosen == argmax_lowest(sa->scores));
            CHECK(sa->scores == b->last_score()->scores);
            CHECK(a->name() == name);
        }
    }

    TEST_CASE("GIT pooled gradient equals the mean of per-member gradients") {
        enco::EncoConfig cfg;
        auto m = trained_chain(cfg);
        Rng rng(6);
        auto ens = sample_ensemble(m, 6, 20, rng);
        std::vector<graph::Digraph> est;
        for (int k = 0; k < 8; ++k) est.push_back(enco::sample_graph_mask(m, rng));
        const std::uint64_t seed = 77;
        const std::size_t k = 0;
        scm::Dataset pooled(3, k);
        enco::GraphGradient mean(3);
        std::vector<int> set_count(9, 0);
        for (std::size_t g = 0; g < ens.masks.size(); ++g) {
            Rng hr(derive_seed(seed, Stream::kStrategy, g));
            auto d = enco::hallucinate(m, ens.masks[g], k, 24, hr);
            pooled.append(d);
            auto gg = enco::graph_gradients(m, d, est, cfg);
            for (std::size_t e = 0; e < 9; ++e) {
                mean.gamma[e] += gg.gamma[e] / 6.0;
                mean.theta[e] += gg.theta[e] / 6.0;
                set_count[e] += gg.gamma_set[e];
            }
        }
        auto pg = enco::graph_gradients(m, pooled, est, cfg);
        for (std::size_t e = 0; e < 9; ++e) {
            if (!pg.gamma_set[e]) continue;
            REQUIRE(set_count[e] == 6);
            CHECK(pg.gamma[e] == doctest::Approx(mean.gamma[e]).epsilon(1e-9));
            CHECK(pg.theta[e] == doctest::Approx(mean.theta[e]).epsilon(1e-9));
        }
        EnsembleConfig ec;
        ec.samples_per = 24;
        auto scores = git_scores(m, ens, est, cfg, ec, seed);
        CHECK(scores[k] == doctest::Approx(pg.l2_norm(true)));
    }

    TEST_CASE("AIT score is the summed ANOVA F over non-target coordinates") {
        enco::EncoConfig cfg;
        auto m = trained_chain(cfg);
        Rng rng(8);
        auto ens = sample_ensemble(m, 5, 20, rng);
        EnsembleConfig ec;
        ec.samples_per = 40;
        const std::uint64_t seed = 12;
        auto scores = ait_scores(m, ens, ec, seed);
        for (std::size_t k = 0; k < 3; ++k) {
            std::vector<scm::Dataset> data;
            for (std::size_t g = 0; g < ens.masks.size(); ++g) {
                Rng hr(derive_seed(seed, Stream::kStrategy, g));
                data.push_back(enco::hallucinate(m, ens.masks[g], k, 40, hr));
            }
            double want = 0;
            for (std::size_t i = 0; i < 3; ++i) {
                if (i == k) continue;
                for (std::uint8_t state = 0; state < 2; ++state) {
                    std::vector<std::vector<double>> groups;
                    for (const auto& d : data) {
                        std::vector<double> col;
                        for (std::size_t s = 0; s < d.size(); ++s) col.push_back(d.row(s)[i] == state ? 1.0 : 0.0);
                        groups.push_back(col);
                    }
                    want += anova_f(groups);
                }
            }
            CHECK(scores[k] == doctest::Approx(want).epsilon(1e-9));
        }
    }

    TEST_CASE("CBED is the mutual information of the member predictive marginals") {
        enco::EncoConfig cfg;
        auto m = trained_chain(cfg);
        Rng rng(4);
        auto ens = sample_ensemble(m, 6, 20, rng);
        EnsembleConfig ec;
        ec.samples_per = 16;
        const std::uint64_t seed = 3;
        auto scores = cbed_scores(m, ens, ec, seed);
        auto h = [](double p) { return (p > 0 ? -p * std::log(p) : 0.0) + (p < 1 ? -(1 - p) * std::log(1 - p) : 0.0); };
        enco::Workspace ws;
        std::vector<double> probs;
        for (std::size_t k = 0; k < 3; ++k) {
            double want = 0;
            for (std::size_t j = 0; j < 3; ++j) {
                if (j == k) continue;
                double mix = 0, mean_h = 0;
                for (std::size_t g = 0; g < ens.masks.size(); ++g) {
                    Rng hr(derive_seed(seed, Stream::kStrategy, g));
                    auto d = enco::hallucinate(m, ens.masks[g], k, 16, hr);
                    std::vector<std::uint32_t> pa;
                    for (auto p : ens.masks[g].parents(j)) pa.push_back(static_cast<std::uint32_t>(p));
                    double p1 = 0;
                    for (std::size_t s = 0; s < d.size(); ++s) {
                        m.predictive(j, d.row(s).data(), pa, ws, probs);
                        p1 += probs[1];
                    }
                    p1 /= static_cast<double>(d.size());
                    mix += p1 / 6.0;
                    mean_h += h(p1) / 6.0;
                }
                want += h(mix) - mean_h;
            }
            CHECK(scores[k] == doctest::Approx(std::max(0.0, want)).epsilon(1e-9));
        }
        Ensemble one;
        one.masks.push_back(ens.masks[0]);
        for (double s : cbed_scores(m, one, ec, seed)) CHECK(s == 0.0);
    }

    TEST_CASE("external channel resolves names and rejects junk") {
        std::vector<std::string> names{"Smoker", "Cancer", "Xray"};
        CHECK(resolve_node(names, "Cancer") == 1);
        CHECK(resolve_node(names, " xray ") == 2);
        CHECK(resolve_node(names, "0") == 0);
        CHECK_FALSE(resolve_node(names, "3"));
        CHECK_FALSE(resolve_node(names, ""));
        CHECK_FALSE(resolve_node(names, "lung"));

        StateHolder h(nullptr, 3, 1);
        h.names = names;
        ScriptedChannel ch({"nope", "7", "cancer"});
        StrategyOptions opts;
        opts.channel = &ch;
        auto s = make_strategy("external", opts);
        CHECK(s->next(h.state) == 1);
        CHECK(ch.rejections() == std::vector<std::string>{"nope", "7"});
        CHECK(ch.contexts().size() == 3);
        CHECK_THROWS_AS(s->next(h.state), ChannelClosed);
    }

    TEST_CASE("factory errors") {
        StrategyOptions opts;
        CHECK_THROWS_AS(make_strategy("oracle", opts), std::invalid_argument);
        CHECK_THROWS_AS(make_strategy("degree_prob", opts), std::invalid_argument);
        CHECK_THROWS_AS(make_strategy("external", opts), std::invalid_argument);
        CHECK(make_strategy("round_robin", opts)->name() == "round_robin");
    }
}
