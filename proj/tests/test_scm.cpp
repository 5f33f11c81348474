#include <doctest.h>

#include <cmath>
#include <sstream>

#include "legit/scm.hpp"
#include "test_util.hpp"

using namespace legit;

namespace {

std::vector<double> empirical(const scm::Dataset& d, std::size_t node, std::size_t card) {
    std::vector<double> f(card, 0.0);
    for (std::size_t r = 0; r < d.size(); ++r) f[d.row(r)[node]] += 1.0;
    for (auto& x : f) x /= static_cast<double>(d.size());
    return f;
}

}  // namespace

TEST_SUITE("scm") {
    TEST_CASE("sampling is deterministic per seed") {
        auto net = netio::load_network("asia");
        auto a = scm::sample_observational(net, 300, 11);
        auto b = scm::sample_observational(net, 300, 11);
        auto c = scm::sample_observational(net, 300, 12);
        CHECK(a == b);
        CHECK_FALSE(a == c);
        CHECK(a.size() == 300);
        CHECK_FALSE(a.target());
    }

    TEST_CASE("observational marginals match exact enumeration") {
        auto net = netio::load_network("asia");
        auto d = scm::sample_observational(net, 40000, 3);
        for (std::size_t v = 0; v < net.size(); ++v) {
            auto exact = scm::exact_marginal(net, v);
            auto emp = empirical(d, v, exact.size());
            for (std::size_t s = 0; s < exact.size(); ++s) {
                // 5 binomial standard errors
                double se = std::sqrt(exact[s] * (1 - exact[s]) / 40000.0);
                CHECK(std::abs(emp[s] - exact[s]) <= 5 * se + 1e-9);
            }
        }
    }

    TEST_CASE("hard interventions draw the target uniformly and cut its parents") {
        auto net = netio::parse_bif(testutil::kChainBif);
        auto d = scm::sample_interventional(net, 1, 20000, 5);
        REQUIRE(d.target() == std::optional<std::size_t>(1));
        auto f1 = empirical(d, 1, 2);
        CHECK(std::abs(f1[0] - 0.5) < 0.02);
        // X0 keeps its marginal; X2 follows X1.
        CHECK(std::abs(empirical(d, 0, 2)[0] - 0.5) < 0.02);
        auto exact2 = scm::exact_interventional_dist(net, 1, 2);
        CHECK(std::abs(empirical(d, 2, 2)[0] - exact2[0]) < 0.02);
        CHECK(exact2[0] == doctest::Approx(0.5));
        // do(X1) leaves X0 at its marginal.
        auto exact0 = scm::exact_interventional_dist(net, 1, 0);
        CHECK(exact0[0] == doctest::Approx(0.5));
    }

    TEST_CASE("dataset append checks targets") {
        scm::Dataset a(3, 1), b(3, 1), c(3, 2);
        std::vector<std::uint8_t> row{0, 1, 0};
        b.append(row);
        a.append(b);
        CHECK(a.size() == 1);
        CHECK_THROWS_AS(a.append(c), std::invalid_argument);
    }

    TEST_CASE("CSV export names columns") {
        auto net = netio::parse_bif(testutil::kChainBif);
        auto d = scm::sample_interventional(net, 0, 2, 1);
        std::ostringstream out;
        scm::write_dataset_csv(out, net, d);
        CHECK(out.str().rfind("X0,X1,X2,intervened_on\n", 0) == 0);
    }
}
