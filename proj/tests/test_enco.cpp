#include <doctest.h>

#include <cmath>
#include <sstream>

#include "legit/enco.hpp"
#include "legit/scm.hpp"
#include "test_util.hpp"

using namespace legit;

namespace {

const char* kIndependentBif = R"(network indep {
}
variable A {
  type discrete [ 2 ] { a, b };
}
variable B {
  type discrete [ 2 ] { a, b };
}
probability ( A ) {
  table 0.3, 0.7;
}
probability ( B ) {
  table 0.6, 0.4;
}
)";

const char* kCopyBif = R"(network copy {
}
variable X {
  type discrete [ 2 ] { a, b };
}
variable Y {
  type discrete [ 2 ] { a, b };
}
probability ( X ) {
  table 0.5, 0.5;
}
probability ( Y | X ) {
  (a) 1.0, 0.0;
  (b) 0.0, 1.0;
}
)";

enco::EncoConfig small_config() {
    enco::EncoConfig cfg;
    cfg.hidden_size = 16;
    cfg.dist_iters = 200;
    cfg.graph_iters = 20;
    cfg.graph_samples = 40;
    cfg.epochs = 2;
    return cfg;
}

std::string checkpoint_text(const enco::EncoModel& m) {
    std::ostringstream out;
    enco::save_checkpoint(out, m);
    return out.str();
}

double mean_nll(const enco::EncoModel& m, const scm::Dataset& d, std::size_t j, std::vector<std::uint32_t> parents) {
    enco::Workspace ws;
    double total = 0.0;
    for (std::size_t r = 0; r < d.size(); ++r) total += m.node_nll(j, d.row(r).data(), parents, ws);
    return total / static_cast<double>(d.size());
}

}  // namespace

TEST_SUITE("enco") {
    TEST_CASE("fresh model carries the prior") {
        auto cfg = small_config();
        auto m = enco::init_model({2, 3, 2}, cfg, 1);
        auto b = enco::edge_probabilities(m);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) CHECK(b(i, j) == doctest::Approx(i == j ? 0.0 : cfg.edge_prior / 2));
        CHECK(enco::extract_graph(m).graph.edge_count() == 0);
        CHECK_THROWS(enco::init_model({2, 0}, cfg, 1));
        auto bad = cfg;
        bad.leaky_slope = 1.5;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }

    TEST_CASE("theta stays antisymmetric and symmetric gamma splits its mass") {
        auto m = enco::init_model({2, 2, 2}, small_config(), 2);
        m.set_theta(0, 1, 1.3);
        CHECK(m.theta(1, 0) == doctest::Approx(-1.3));
        m.set_gamma(0, 1, 0.7);
        m.set_gamma(1, 0, 0.7);
        double s = enco::sigmoid(0.7);
        CHECK(m.edge_prob(0, 1) + m.edge_prob(1, 0) == doctest::Approx(s));
        CHECK(enco::sigmoid(50.0) == doctest::Approx(enco::sigmoid(enco::kLogitClamp)));
    }

    TEST_CASE("adversarial beliefs extract as cyclic") {
        graph::EdgeBeliefs b(2);
        b(0, 1) = b(1, 0) = 0.6;
        CHECK(graph::threshold_graph(b).cyclic);
        // The model itself cannot exceed 0.5 in both directions: sigma(theta) + sigma(-theta) = 1.
        auto m = enco::init_model({2, 2}, small_config(), 3);
        m.set_gamma(0, 1, 5.0);
        m.set_gamma(1, 0, 5.0);
        CHECK_FALSE(enco::extract_graph(m).cyclic);
    }

    TEST_CASE("fit is deterministic per seed and zero epochs is a no-op") {
        auto net = netio::parse_bif(testutil::kChainBif);
        auto obs = scm::sample_observational(net, 400, 1);
        std::vector<scm::Dataset> ints{scm::sample_interventional(net, 0, 64, 2), scm::sample_interventional(net, 2, 64, 3)};
        auto cfg = small_config();
        auto a = enco::init_model(net.cardinalities(), cfg, 5);
        auto b = a;
        auto untouched = checkpoint_text(a);
        enco::fit(a, obs, ints, cfg, 9, 0);
        CHECK(checkpoint_text(a) == untouched);
        enco::fit(a, obs, ints, cfg, 9, 1);
        enco::fit(b, obs, ints, cfg, 9, 1);
        CHECK(checkpoint_text(a) == checkpoint_text(b));
        CHECK(enco::belief_checksum(enco::edge_probabilities(a)) == enco::belief_checksum(enco::edge_probabilities(b)));
        auto c = enco::init_model(net.cardinalities(), cfg, 5);
        enco::fit(c, obs, ints, cfg, 10, 1);
        CHECK(checkpoint_text(a) != checkpoint_text(c));
        CHECK_THROWS(enco::fit(c, scm::Dataset(3, std::nullopt), ints, cfg, 1, 1));
    }

    TEST_CASE("checkpoint round-trip") {
        auto net = netio::parse_bif(testutil::kChainBif);
        auto obs = scm::sample_observational(net, 300, 1);
        auto cfg = small_config();
        auto m = enco::init_model(net.cardinalities(), cfg, 4);
        enco::fit(m, obs, {}, cfg, 3, 1);
        m.set_gamma(0, 2, 1.25);
        m.set_theta(1, 2, -0.5);
        std::stringstream ss;
        enco::save_checkpoint(ss, m);
        auto back = enco::load_checkpoint(ss);
        CHECK(checkpoint_text(back) == checkpoint_text(m));
        CHECK(mean_nll(back, obs, 1, {0}) == mean_nll(m, obs, 1, {0}));
        std::stringstream bad("{\"format\":\"other\"}");
        CHECK_THROWS(enco::load_checkpoint(bad));
    }

    TEST_CASE("distribution steps lower the conditional NLL") {
        auto net = netio::parse_bif(testutil::kChainBif);
        auto obs = scm::sample_observational(net, 2000, 1);
        auto held = scm::sample_observational(net, 1000, 2);
        auto cfg = small_config();
        auto m = enco::init_model(net.cardinalities(), cfg, 1);
        std::vector<std::uint32_t> par{0};
        double before = mean_nll(m, held, 1, par);
        Rng rng(3);
        for (int i = 0; i < 300; ++i) enco::distribution_step(m, obs, cfg, rng);
        double after = mean_nll(m, held, 1, par);
        CHECK(after < before);
        // Conditional entropy of X1 given X0 is H(0.1) = 0.325 nats.
        CHECK(after < 0.40);
    }

    TEST_CASE("no interventional data leaves theta unchanged") {
        auto net = netio::parse_bif(testutil::kChainBif);
        auto obs = scm::sample_observational(net, 500, 1);
        auto cfg = small_config();
        cfg.obs_in_graph_pool = true;
        auto m = enco::init_model(net.cardinalities(), cfg, 1);
        auto theta0 = m.theta_data();
        Rng rng(1);
        for (int i = 0; i < 20; ++i) enco::graph_step(m, obs, {}, cfg, rng);
        CHECK(m.theta_data() == theta0);
        // Without the flag the graph phase waits for interventional data.
        cfg.obs_in_graph_pool = false;
        auto gamma0 = m.gamma_data();
        for (int i = 0; i < 5; ++i) enco::graph_step(m, obs, {}, cfg, rng);
        CHECK(m.gamma_data() == gamma0);
    }

    TEST_CASE("independent variables: gamma drifts down under sparsity") {
        auto net = netio::parse_bif(kIndependentBif);
        auto obs = scm::sample_observational(net, 4000, 1);
        auto cfg = small_config();
        cfg.obs_in_graph_pool = true;
        cfg.graph_optimizer = enco::Optimizer::kSgd;
        auto m = enco::init_model(net.cardinalities(), cfg, 1);
        Rng rng(2);
        for (int i = 0; i < 400; ++i) enco::distribution_step(m, obs, cfg, rng);
        const double start = enco::sigmoid(m.gamma(0, 1)) + enco::sigmoid(m.gamma(1, 0));
        double prev = start;
        int rises = 0;
        for (int i = 0; i < 50; ++i) {
            enco::graph_step(m, obs, {}, cfg, rng);
            double now = enco::sigmoid(m.gamma(0, 1)) + enco::sigmoid(m.gamma(1, 0));
            if (now > prev + 1e-12) ++rises;
            prev = now;
        }
        CHECK(prev < start);
        CHECK(rises < 15);
    }

    TEST_CASE("deterministic copy mechanism orients the edge under do(X)") {
        auto net = netio::parse_bif(kCopyBif);
        auto obs = scm::sample_observational(net, 3000, 1);
        std::vector<scm::Dataset> ints{scm::sample_interventional(net, 0, 512, 2)};
        auto cfg = small_config();
        auto m = enco::init_model(net.cardinalities(), cfg, 1);
        Rng rng(3);
        for (int i = 0; i < 400; ++i) enco::distribution_step(m, obs, cfg, rng);
        double prev = enco::sigmoid(m.theta(0, 1));
        const double start = prev;
        for (int i = 0; i < 30; ++i) {
            enco::graph_step(m, obs, ints, cfg, rng);
            double now = enco::sigmoid(m.theta(0, 1));
            CHECK(now >= prev);
            prev = now;
        }
        CHECK(prev > start);
    }

    TEST_CASE("gamma gradient follows the contrast formula") {
        auto net = netio::parse_bif(testutil::kChainBif);
        auto obs = scm::sample_observational(net, 2000, 1);
        auto batch = scm::sample_interventional(net, 0, 256, 2);
        auto cfg = small_config();
        auto m = enco::init_model(net.cardinalities(), cfg, 1);
        Rng rng(3);
        for (int i = 0; i < 200; ++i) enco::distribution_step(m, obs, cfg, rng);
        std::vector<graph::Digraph> masks;
        for (int k = 0; k < 64; ++k) masks.push_back(enco::sample_graph_mask(m, rng));
        auto g = enco::graph_gradients(m, batch, masks, cfg);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                const std::size_t e = i * 3 + j;
                if (j == 0 || i == j) {
                    CHECK_FALSE(g.gamma_set[e]);  // intervened node and diagonal get nothing
                    continue;
                }
                if (!g.gamma_set[e]) continue;
                double s = enco::sigmoid(m.gamma(i, j));
                double want = s * (1 - s) * enco::sigmoid(m.theta(i, j)) * (g.contrast[e] + cfg.lambda_sparse);
                CHECK(g.gamma[e] == doctest::Approx(want));
            }
        }
        // theta only on edges touching the target, antisymmetric
        CHECK(g.theta_set[0 * 3 + 1]);
        CHECK(g.theta[0 * 3 + 1] == doctest::Approx(-g.theta[1 * 3 + 0]));
        CHECK_FALSE(g.theta_set[1 * 3 + 2]);
    }

    TEST_CASE("acyclic masks and hallucinated data") {
        auto cfg = small_config();
        auto m = enco::init_model({2, 2, 2, 2}, cfg, 1);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                if (i != j) m.set_gamma(i, j, 6.0);
        Rng rng(4);
        std::size_t resamples = 0;
        for (int k = 0; k < 50; ++k) {
            enco::MaskDiagnostics diag;
            CHECK(graph::is_acyclic(enco::sample_acyclic_mask(m, rng, 3, &diag)));
            resamples += diag.resamples;
        }
        CHECK(resamples > 0);

        auto mask = graph::Digraph::from_edges(4, {{0, 1}, {1, 2}});
        auto d = enco::hallucinate(m, mask, 1, 4000, rng);
        CHECK(d.size() == 4000);
        CHECK(d.target() == std::optional<std::size_t>(1));
        double ones = 0;
        for (std::size_t r = 0; r < d.size(); ++r) ones += d.row(r)[1];
        CHECK(std::abs(ones / 4000.0 - 0.5) < 0.04);
        auto cyc = mask;
        cyc.set(2, 0);
        CHECK_THROWS(enco::hallucinate(m, cyc, std::nullopt, 10, rng));
    }
}
