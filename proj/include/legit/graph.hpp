#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

namespace legit::graph {

/// Square boolean adjacency, `has(i, j)` meaning i -> j. Self-loops are never stored.
/// May hold cycles; use is_acyclic() where a DAG is required.
class Digraph {
public:
    Digraph() = default;
    explicit Digraph(std::size_t n) : n_(n), adj_(n * n, 0) {}

    /// Throws std::invalid_argument on a non-square matrix or a non-zero diagonal.
    static Digraph from_rows(const std::vector<std::vector<int>>& rows);
    static Digraph from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

    std::size_t size() const noexcept { return n_; }
    bool has(std::size_t i, std::size_t j) const noexcept { return adj_[i * n_ + j] != 0; }
    void set(std::size_t i, std::size_t j, bool on = true);

    std::size_t edge_count() const noexcept;
    std::vector<std::pair<std::size_t, std::size_t>> edges() const;
    std::vector<std::size_t> parents(std::size_t j) const;
    std::vector<std::size_t> children(std::size_t i) const;

    friend bool operator==(const Digraph&, const Digraph&) = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> adj_;
};

/// Per-entry edge probabilities; diagonal is always 0.
struct EdgeBeliefs {
    std::size_t n = 0;
    std::vector<double> prob;  // row-major n x n

    explicit EdgeBeliefs(std::size_t size = 0) : n(size), prob(size * size, 0.0) {}
    double operator()(std::size_t i, std::size_t j) const { return prob[i * n + j]; }
    double& operator()(std::size_t i, std::size_t j) { return prob[i * n + j]; }
};

struct Thresholded {
    Digraph graph;
    bool cyclic = false;
};

inline constexpr double kDefaultThreshold = 0.5;

bool is_acyclic(const Digraph& g);
/// Kahn order, or nullopt when the graph has a cycle.
std::optional<std::vector<std::size_t>> topological_order(const Digraph& g);

/// Nodes reachable from i by at least one edge; i itself excluded. Sorted.
std::vector<std::size_t> descendants(const Digraph& g, std::size_t i);
std::vector<std::size_t> ancestors(const Digraph& g, std::size_t i);

/// reach[i*n+j] = 1 iff j is reachable from i by a path of length >= 1.
std::vector<std::uint8_t> transitive_closure(const Digraph& g);

/// Nodes lying on some directed cycle.
std::vector<std::size_t> nodes_on_cycles(const Digraph& g);

Thresholded threshold_graph(const EdgeBeliefs& b, double tau = kDefaultThreshold);
std::vector<std::size_t> isolated_nodes(const EdgeBeliefs& b, double tau = kDefaultThreshold);

// Matrix CSV: a header line `n,<n>` followed by n comma-separated rows.
void write_matrix_csv(std::ostream& out, std::size_t n, const std::vector<double>& values);
void write_matrix_csv(std::ostream& out, const Digraph& g);
std::pair<std::size_t, std::vector<double>> read_matrix_csv(std::istream& in);
/// Reads a matrix CSV and keeps entries > tau as edges (0/1 matrices survive unchanged).
Digraph read_graph_csv(std::istream& in, double tau = kDefaultThreshold);

}  // namespace legit::graph
