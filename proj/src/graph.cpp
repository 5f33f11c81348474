#include "legit/graph.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace legit::graph {

Digraph Digraph::from_rows(const std::vector<std::vector<int>>& rows) {
    Digraph g(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size())
            throw std::invalid_argument(fmt::format("adjacency row {} has {} entries, expected {}", i, rows[i].size(),
                                                    rows.size()));
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (i == j && rows[i][j] != 0) throw std::invalid_argument("adjacency has a self-loop");
            if (rows[i][j] != 0) g.set(i, j);
        }
    }
    return g;
}

Digraph Digraph::from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    Digraph g(n);
    for (auto [i, j] : edges) g.set(i, j);
    return g;
}

void Digraph::set(std::size_t i, std::size_t j, bool on) {
    if (i >= n_ || j >= n_) throw std::out_of_range("node index out of range");
    if (i == j) {
        if (on) throw std::invalid_argument("self-loops are not allowed");
        return;
    }
    adj_[i * n_ + j] = on ? 1 : 0;
}

std::size_t Digraph::edge_count() const noexcept {
    std::size_t c = 0;
    for (auto v : adj_) c += v;
    return c;
}

std::vector<std::pair<std::size_t, std::size_t>> Digraph::edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j < n_; ++j)
            if (has(i, j)) out.emplace_back(i, j);
    return out;
}

std::vector<std::size_t> Digraph::parents(std::size_t j) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_; ++i)
        if (has(i, j)) out.push_back(i);
    return out;
}

std::vector<std::size_t> Digraph::children(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n_; ++j)
        if (has(i, j)) out.push_back(j);
    return out;
}

std::optional<std::vector<std::size_t>> topological_order(const Digraph& g) {
    const std::size_t n = g.size();
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) indeg[j] += g.has(i, j);
    std::vector<std::size_t> order;
    order.reserve(n);
    // Lowest ready index first keeps the order deterministic.
    std::vector<std::uint8_t> done(n, 0);
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t pick = n;
        for (std::size_t v = 0; v < n; ++v)
            if (!done[v] && indeg[v] == 0) {
                pick = v;
                break;
            }
        if (pick == n) return std::nullopt;
        done[pick] = 1;
        order.push_back(pick);
        for (std::size_t j = 0; j < n; ++j)
            if (g.has(pick, j)) --indeg[j];
    }
    return order;
}

bool is_acyclic(const Digraph& g) { return topological_order(g).has_value(); }

std::vector<std::uint8_t> transitive_closure(const Digraph& g) {
    const std::size_t n = g.size();
    std::vector<std::uint8_t> reach(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) reach[i * n + j] = g.has(i, j);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            if (reach[i * n + k])
                for (std::size_t j = 0; j < n; ++j)
                    if (reach[k * n + j]) reach[i * n + j] = 1;
    return reach;
}

namespace {

std::vector<std::size_t> reachable(const Digraph& g, std::size_t start, bool forward) {
    const std::size_t n = g.size();
    if (start >= n) throw std::out_of_range(fmt::format("node index {} out of range for {} nodes", start, n));
    std::vector<std::uint8_t> seen(n, 0);
    std::vector<std::size_t> stack{start};
    while (!stack.empty()) {
        std::size_t v = stack.back();
        stack.pop_back();
        for (std::size_t w = 0; w < n; ++w) {
            bool edge = forward ? g.has(v, w) : g.has(w, v);
            if (edge && !seen[w]) {
                seen[w] = 1;
                stack.push_back(w);
            }
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t w = 0; w < n; ++w)
        if (seen[w] && w != start) out.push_back(w);
    return out;
}

}  // namespace

std::vector<std::size_t> descendants(const Digraph& g, std::size_t i) { return reachable(g, i, true); }
std::vector<std::size_t> ancestors(const Digraph& g, std::size_t i) { return reachable(g, i, false); }

std::vector<std::size_t> nodes_on_cycles(const Digraph& g) {
    auto reach = transitive_closure(g);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (reach[i * g.size() + i]) out.push_back(i);
    return out;
}

Thresholded threshold_graph(const EdgeBeliefs& b, double tau) {
    Thresholded t{Digraph(b.n), false};
    for (std::size_t i = 0; i < b.n; ++i)
        for (std::size_t j = 0; j < b.n; ++j)
            if (i != j && b(i, j) > tau) t.graph.set(i, j);
    t.cyclic = !is_acyclic(t.graph);
    return t;
}

std::vector<std::size_t> isolated_nodes(const EdgeBeliefs& b, double tau) {
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < b.n; ++v) {
        bool touched = false;
        for (std::size_t w = 0; w < b.n && !touched; ++w)
            touched = w != v && (b(v, w) > tau || b(w, v) > tau);
        if (!touched) out.push_back(v);
    }
    return out;
}

void write_matrix_csv(std::ostream& out, std::size_t n, const std::vector<double>& values) {
    if (values.size() != n * n) throw std::invalid_argument("matrix size does not match n");
    out << "n," << n << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j) out << ',';
            out << fmt::format("{:.17g}", values[i * n + j]);
        }
        out << '\n';
    }
}

void write_matrix_csv(std::ostream& out, const Digraph& g) {
    out << "n," << g.size() << '\n';
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (j) out << ',';
            out << (g.has(i, j) ? '1' : '0');
        }
        out << '\n';
    }
}

std::pair<std::size_t, std::vector<double>> read_matrix_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("n,", 0) != 0)
        throw std::invalid_argument("matrix CSV must start with an 'n,<size>' header");
    std::size_t n = std::stoul(line.substr(2));
    std::vector<double> values;
    values.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw std::invalid_argument(fmt::format("matrix CSV ends after {} rows", i));
        std::stringstream row(line);
        std::string cell;
        std::size_t cols = 0;
        while (std::getline(row, cell, ',')) {
            values.push_back(std::stod(cell));
            ++cols;
        }
        if (cols != n) throw std::invalid_argument(fmt::format("matrix CSV row {} has {} columns, expected {}", i, cols, n));
    }
    return {n, std::move(values)};
}

Digraph read_graph_csv(std::istream& in, double tau) {
    auto [n, values] = read_matrix_csv(in);
    Digraph g(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && values[i * n + j] > tau) g.set(i, j);
    return g;
}

}  // namespace legit::graph
