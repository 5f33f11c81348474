#include "legit/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace legit::metrics {

namespace {

void check_sizes(const graph::Digraph& a, const graph::Digraph& b) {
    if (a.size() != b.size()) throw std::invalid_argument("graphs have different node counts");
}

}  // namespace

std::size_t shd(const graph::Digraph& truth, const graph::Digraph& learned) {
    check_sizes(truth, learned);
    const std::size_t n = truth.size();
    std::size_t d = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            bool t1 = truth.has(i, j), t2 = truth.has(j, i);
            bool l1 = learned.has(i, j), l2 = learned.has(j, i);
            if (t1 == l1 && t2 == l2) continue;
            bool t_none = !t1 && !t2, l_none = !l1 && !l2;
            bool t_both = t1 && t2, l_both = l1 && l2;
            d += (t_none && l_both) || (t_both && l_none) ? 2 : 1;
        }
    }
    return d;
}

bool d_separated(const graph::Digraph& g, std::size_t x, std::size_t y, const std::vector<std::size_t>& z) {
    const std::size_t n = g.size();
    std::vector<std::uint8_t> keep(n, 0), blocked(n, 0);
    for (std::size_t v : z) blocked[v] = 1;
    // Ancestral closure of {x, y} and z.
    std::vector<std::size_t> stack{x, y};
    stack.insert(stack.end(), z.begin(), z.end());
    while (!stack.empty()) {
        std::size_t v = stack.back();
        stack.pop_back();
        if (keep[v]) continue;
        keep[v] = 1;
        for (std::size_t p : g.parents(v))
            if (!keep[p]) stack.push_back(p);
    }
    // Moralize: undirected parent-child links plus links between co-parents.
    std::vector<std::uint8_t> adj(n * n, 0);
    for (std::size_t v = 0; v < n; ++v) {
        if (!keep[v]) continue;
        auto ps = g.parents(v);
        for (std::size_t a = 0; a < ps.size(); ++a) {
            adj[ps[a] * n + v] = adj[v * n + ps[a]] = 1;
            for (std::size_t b = a + 1; b < ps.size(); ++b) adj[ps[a] * n + ps[b]] = adj[ps[b] * n + ps[a]] = 1;
        }
    }
    if (blocked[x] || blocked[y]) return true;
    std::vector<std::uint8_t> seen(n, 0);
    stack = {x};
    seen[x] = 1;
    while (!stack.empty()) {
        std::size_t v = stack.back();
        stack.pop_back();
        if (v == y) return false;
        for (std::size_t w = 0; w < n; ++w) {
            if (adj[v * n + w] && keep[w] && !blocked[w] && !seen[w]) {
                seen[w] = 1;
                stack.push_back(w);
            }
        }
    }
    return true;
}

std::size_t sid(const graph::Digraph& truth, const graph::Digraph& learned) {
    check_sizes(truth, learned);
    if (!graph::is_acyclic(truth)) throw std::invalid_argument("sid: truth graph must be acyclic");
    const std::size_t n = truth.size();
    const auto reach = graph::transitive_closure(truth);
    std::vector<std::uint8_t> on_cycle(n, 0);
    for (std::size_t v : graph::nodes_on_cycles(learned)) on_cycle[v] = 1;

    std::size_t wrong = 0;
    for (std::size_t x = 0; x < n; ++x) {
        const auto z = learned.parents(x);
        std::vector<std::uint8_t> in_z(n, 0);
        for (std::size_t v : z) in_z[v] = 1;
        for (std::size_t y = 0; y < n; ++y) {
            if (y == x) continue;
            if (on_cycle[x] || on_cycle[y]) {
                ++wrong;
                continue;
            }
            if (in_z[y]) {
                // The learned graph implies do(x) leaves y unchanged.
                if (reach[x * n + y]) ++wrong;
                continue;
            }
            // Nodes other than x on directed paths x -> ... -> y.
            std::vector<std::uint8_t> causal(n, 0);
            for (std::size_t w = 0; w < n; ++w)
                if (w != x && reach[x * n + w] && (w == y || reach[w * n + y])) causal[w] = 1;
            bool forbidden = false;
            for (std::size_t v : z) {
                for (std::size_t w = 0; w < n && !forbidden; ++w)
                    if (causal[w] && (w == v || reach[w * n + v])) forbidden = true;
                if (forbidden) break;
            }
            if (forbidden) {
                ++wrong;
                continue;
            }
            graph::Digraph backdoor = truth;
            for (std::size_t w = 0; w < n; ++w)
                if (causal[w] && truth.has(x, w)) backdoor.set(x, w, false);
            if (!d_separated(backdoor, x, y, z)) ++wrong;
        }
    }
    return wrong;
}

ConfusionCounts confusion_counts(const graph::Digraph& truth, const graph::Digraph& learned) {
    check_sizes(truth, learned);
    const std::size_t n = truth.size();
    ConfusionCounts c;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            bool t1 = truth.has(i, j), t2 = truth.has(j, i);
            if (t1 || t2) {
                std::size_t edges = (t1 ? 1 : 0) + (t2 ? 1 : 0);
                std::size_t hits = (t1 && learned.has(i, j) ? 1 : 0) + (t2 && learned.has(j, i) ? 1 : 0);
                c.a += edges;
                c.tp += hits;
                c.fn += edges - hits;
            } else {
                ++c.i;
                if (learned.has(i, j) || learned.has(j, i))
                    ++c.fp;
                else
                    ++c.tn;
            }
        }
    }
    return c;
}

std::optional<double> bsf(const ConfusionCounts& c) {
    if (c.a == 0 || c.i == 0) return std::nullopt;
    double a = static_cast<double>(c.a), i = static_cast<double>(c.i);
    return 0.5 * (c.tp / a + c.tn / i - c.fp / i - c.fn / a);
}

std::optional<double> bsf(const graph::Digraph& truth, const graph::Digraph& learned) {
    return bsf(confusion_counts(truth, learned));
}

}  // namespace legit::metrics
