#include <doctest.h>

#include <sstream>

#include "legit/graph.hpp"

using namespace legit::graph;

TEST_SUITE("graph") {
    TEST_CASE("construction rejects bad matrices") {
        CHECK_THROWS_AS(Digraph::from_rows({{0, 1}, {0}}), std::invalid_argument);
        CHECK_THROWS_AS(Digraph::from_rows({{1, 0}, {0, 0}}), std::invalid_argument);
        auto g = Digraph::from_rows({{0, 1, 0}, {0, 0, 1}, {0, 0, 0}});
        CHECK(g.edge_count() == 2);
        CHECK(g.parents(2) == std::vector<std::size_t>{1});
        CHECK(g.children(0) == std::vector<std::size_t>{1});
    }

    TEST_CASE("acyclicity, order and reachability") {
        auto chain = Digraph::from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
        CHECK(is_acyclic(chain));
        auto order = topological_order(chain);
        REQUIRE(order);
        CHECK(*order == std::vector<std::size_t>{0, 1, 2, 3});
        CHECK(descendants(chain, 1) == std::vector<std::size_t>{2, 3});
        CHECK(ancestors(chain, 2) == std::vector<std::size_t>{0, 1});
        auto reach = transitive_closure(chain);
        CHECK(reach[0 * 4 + 3] == 1);
        CHECK(reach[3 * 4 + 0] == 0);
        CHECK(reach[1 * 4 + 1] == 0);

        auto cyc = chain;
        cyc.set(3, 1);
        CHECK_FALSE(is_acyclic(cyc));
        CHECK_FALSE(topological_order(cyc));
        CHECK(nodes_on_cycles(cyc) == std::vector<std::size_t>{1, 2, 3});
        CHECK(transitive_closure(cyc)[2 * 4 + 2] == 1);
    }

    TEST_CASE("thresholding flags cycles and finds isolated nodes") {
        EdgeBeliefs b(3);
        b(0, 1) = 0.6;
        b(1, 0) = 0.6;
        auto t = threshold_graph(b);
        CHECK(t.cyclic);
        CHECK(t.graph.edge_count() == 2);
        CHECK(isolated_nodes(b) == std::vector<std::size_t>{2});
        b(1, 0) = 0.5;  // strictly above tau counts
        CHECK_FALSE(threshold_graph(b).cyclic);
    }

    TEST_CASE("matrix CSV round-trip") {
        auto g = Digraph::from_edges(3, {{0, 2}, {1, 2}});
        std::stringstream ss;
        write_matrix_csv(ss, g);
        CHECK(read_graph_csv(ss) == g);

        std::vector<double> v{0, 0.25, 0.75, 0.1, 0, 0.9, 0.3, 0.4, 0};
        std::stringstream s2;
        write_matrix_csv(s2, 3, v);
        auto [n, back] = read_matrix_csv(s2);
        CHECK(n == 3);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == doctest::Approx(v[i]));

        std::stringstream bad("n,2\n0,1\n");
        CHECK_THROWS(read_matrix_csv(bad));
    }
}
