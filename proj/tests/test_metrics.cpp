#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "legit/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace legit;
using graph::Digraph;

using oracle::BinaryModel;
using oracle::sum_where;

TEST_SUITE("metrics") {
    TEST_CASE("shd equals the minimal add/delete/reverse edit count") {
        const std::size_t n = 3;
        auto off_diagonal = [&](std::size_t c) {
            for (std::size_t i = 0; i < n; ++i)
                if ((c >> (i * n + i)) & 1u) return false;
            return true;
        };
        for (std::size_t t = 0; t < 512; ++t) {
            if (!off_diagonal(t)) continue;
            auto truth = oracle::decode(n, t);
            auto dist = oracle::edit_distances(truth);
            for (std::size_t l = 0; l < 512; ++l) {
                if (!off_diagonal(l)) continue;
                auto learned = oracle::decode(n, l);
                CHECK(static_cast<int>(metrics::shd(truth, learned)) == dist[l]);
                CHECK(oracle::edit_distance_by_pairs(truth, learned) == dist[l]);
            }
        }
        CHECK_THROWS_AS(metrics::shd(Digraph(3), Digraph(4)), std::invalid_argument);
    }

    TEST_CASE("shd small cases") {
        auto truth = Digraph::from_edges(3, {{0, 1}, {1, 2}});
        CHECK(metrics::shd(truth, truth) == 0);
        CHECK(metrics::shd(truth, Digraph(3)) == 2);
        CHECK(metrics::shd(truth, Digraph::from_edges(3, {{1, 0}, {1, 2}})) == 1);
        CHECK(metrics::shd(truth, Digraph::from_edges(3, {{0, 1}, {1, 0}, {1, 2}})) == 1);
        CHECK(metrics::shd(Digraph(3), Digraph::from_edges(3, {{0, 2}, {2, 0}})) == 2);
    }

    TEST_CASE("sid matches adjustment on every pair of 3-node DAGs") {
        std::mt19937_64 rng(7);
        auto dags = testutil::all_dags(3);
        REQUIRE(dags.size() == 25);
        for (const auto& truth : dags) {
            BinaryModel m(truth, rng);
            oracle::SidTable table(m);
            for (const auto& learned : dags) {
                CHECK(metrics::sid(truth, learned) == oracle::sid(m, learned));
                CHECK(table.sid(learned) == oracle::sid(m, learned));
            }
        }
    }

    TEST_CASE("sid matches adjustment on random 5-node DAGs") {
        std::mt19937_64 rng(11);
        for (int rep = 0; rep < 60; ++rep) {
            auto truth = testutil::random_dag(5, 0.5, rng);
            auto learned = testutil::random_dag(5, 0.4, rng);
            BinaryModel m(truth, rng);
            CHECK(metrics::sid(truth, learned) == oracle::sid(m, learned));
            CHECK(metrics::sid(truth, truth) == 0);
        }
    }

    TEST_CASE("sid known values and cyclic handling") {
        auto chain = Digraph::from_edges(3, {{0, 1}, {1, 2}});
        CHECK(metrics::sid(chain, Digraph(3)) == 3);  // effects 0->1, 0->2, 1->2 all missed
        CHECK(metrics::sid(Digraph(3), chain) == 0);   // empty truth: every estimate is p(y)
        auto cyc = Digraph::from_edges(4, {{0, 1}, {1, 2}, {2, 0}});
        // node 3 is off the cycle, but each of its pairs has the other end on it
        CHECK(metrics::sid(Digraph(4), cyc) == 12);
        CHECK_THROWS_AS(metrics::sid(cyc, Digraph(4)), std::invalid_argument);
        CHECK_THROWS_AS(metrics::sid(chain, Digraph(4)), std::invalid_argument);
    }

    TEST_CASE("bsf identities") {
        std::mt19937_64 rng(3);
        for (int rep = 0; rep < 30; ++rep) {
            auto truth = testutil::random_dag(6, 0.4, rng);
            auto c = metrics::confusion_counts(truth, truth);
            if (c.a == 0 || c.i == 0) continue;
            CHECK(*metrics::bsf(truth, truth) == doctest::Approx(1.0));
            CHECK(*metrics::bsf(truth, Digraph(6)) == doctest::Approx(0.0));
            Digraph inverted(6), reversed(6);
            for (std::size_t i = 0; i < 6; ++i)
                for (std::size_t j = i + 1; j < 6; ++j)
                    if (!truth.has(i, j) && !truth.has(j, i)) inverted.set(i, j);
            for (auto [i, j] : truth.edges()) reversed.set(j, i);
            CHECK(*metrics::bsf(truth, inverted) == doctest::Approx(-1.0));
            CHECK(*metrics::bsf(truth, reversed) == doctest::Approx(0.0));
            auto rc = metrics::confusion_counts(truth, reversed);
            CHECK(rc.tp + rc.fn == rc.a);
            CHECK(rc.tn + rc.fp == rc.i);
        }
        CHECK_FALSE(metrics::bsf(Digraph(3), Digraph(3)).has_value());
        auto full = Digraph::from_edges(2, {{0, 1}});
        CHECK_FALSE(metrics::bsf(full, full).has_value());
    }

    TEST_CASE("d-separation textbook cases") {
        auto chain = Digraph::from_edges(3, {{0, 1}, {1, 2}});
        auto fork = Digraph::from_edges(3, {{1, 0}, {1, 2}});
        auto collider = Digraph::from_edges(4, {{0, 1}, {2, 1}, {1, 3}});
        CHECK_FALSE(metrics::d_separated(chain, 0, 2, {}));
        CHECK(metrics::d_separated(chain, 0, 2, {1}));
        CHECK_FALSE(metrics::d_separated(fork, 0, 2, {}));
        CHECK(metrics::d_separated(fork, 0, 2, {1}));
        CHECK(metrics::d_separated(collider, 0, 2, {}));
        CHECK_FALSE(metrics::d_separated(collider, 0, 2, {1}));
        CHECK_FALSE(metrics::d_separated(collider, 0, 2, {3}));
    }

    TEST_CASE("d-separation agrees with exact conditional independence") {
        std::mt19937_64 rng(5);
        for (int rep = 0; rep < 25; ++rep) {
            auto g = testutil::random_dag(4, 0.5, rng);
            BinaryModel m(g, rng);
            auto j = m.joint();
            for (std::size_t x = 0; x < 4; ++x)
                for (std::size_t y = x + 1; y < 4; ++y)
                    for (std::size_t zm = 0; zm < 16; ++zm) {
                        if (zm & ((1u << x) | (1u << y))) continue;
                        std::vector<std::size_t> z;
                        for (std::size_t k = 0; k < 4; ++k)
                            if (zm >> k & 1u) z.push_back(k);
                        double gap = 0;
                        const std::size_t xm = 1u << x, ym = 1u << y;
                        for (std::size_t c = 0; c < 16; ++c) {
                            double pxyz = sum_where(j, xm | ym | zm, c);
                            double pz = sum_where(j, zm, c);
                            double pxz = sum_where(j, xm | zm, c);
                            double pyz = sum_where(j, ym | zm, c);
                            gap = std::max(gap, std::abs(pxyz * pz - pxz * pyz));
                        }
                        CHECK(metrics::d_separated(g, x, y, z) == (gap < 1e-12));
                    }
        }
    }
}
