#include "legit/scm.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "legit/graph.hpp"
#include "legit/rng.hpp"

namespace legit::scm {

Sample Dataset::sample(std::size_t i) const {
    auto r = row(i);
    return {{r.begin(), r.end()}, target_};
}

void Dataset::append(std::span<const std::uint8_t> r) {
    if (r.size() != n_vars_) throw std::invalid_argument("sample width does not match dataset");
    values_.insert(values_.end(), r.begin(), r.end());
}

void Dataset::append(const Dataset& other) {
    if (other.n_vars_ != n_vars_ || other.target_ != target_)
        throw std::invalid_argument("cannot merge datasets with different shapes or targets");
    values_.insert(values_.end(), other.values_.begin(), other.values_.end());
}

Sampler::Sampler(const netio::BayesNet& net) : net_(&net) {
    auto order = graph::topological_order(graph::Digraph::from_edges(net.size(), net.edges));
    if (!order) throw std::invalid_argument("network is cyclic");
    order_ = std::move(*order);
}

namespace {

std::uint8_t draw_categorical(const std::vector<double>& probs, double u) {
    double acc = 0.0;
    for (std::size_t s = 0; s + 1 < probs.size(); ++s) {
        acc += probs[s];
        if (u < acc) return static_cast<std::uint8_t>(s);
    }
    return static_cast<std::uint8_t>(probs.size() - 1);
}

}  // namespace

Dataset Sampler::draw(std::optional<std::size_t> target, std::size_t count, std::uint64_t seed) const {
    const auto& net = *net_;
    if (target && *target >= net.size()) throw std::out_of_range("intervention target out of range");
    Dataset data(net.size(), target);
    data.reserve(count);
    Rng rng(seed);
    std::vector<std::uint8_t> x(net.size(), 0);
    for (std::size_t s = 0; s < count; ++s) {
        for (std::size_t v : order_) {
            double u = uniform01(rng);
            const auto& node = net.nodes[v];
            if (target && v == *target) {
                auto k = static_cast<std::size_t>(u * static_cast<double>(node.cardinality()));
                x[v] = static_cast<std::uint8_t>(std::min(k, node.cardinality() - 1));
            } else {
                x[v] = draw_categorical(node.cpt[net.cpt_row(v, x.data())], u);
            }
        }
        data.append(x);
    }
    return data;
}

Dataset Sampler::observational(std::size_t count, std::uint64_t seed) const { return draw(std::nullopt, count, seed); }

Dataset Sampler::interventional(std::size_t target, std::size_t count, std::uint64_t seed) const {
    return draw(target, count, seed);
}

Dataset sample_observational(const netio::BayesNet& net, std::size_t count, std::uint64_t seed) {
    return Sampler(net).observational(count, seed);
}

Dataset sample_interventional(const netio::BayesNet& net, std::size_t target, std::size_t count, std::uint64_t seed) {
    return Sampler(net).interventional(target, count, seed);
}

namespace {

// Sums the (optionally truncated) factorization over all configurations and
// accumulates the mass into the outcome's states.
std::vector<double> enumerate(const netio::BayesNet& net, std::optional<std::size_t> target, std::size_t outcome) {
    double configs = 1.0;
    for (const auto& n : net.nodes) configs *= static_cast<double>(n.cardinality());
    if (configs > kEnumerationLimit)
        throw std::invalid_argument(fmt::format("network too large for enumeration ({:.0f} configurations)", configs));
    const std::size_t n = net.size();
    std::vector<std::uint8_t> x(n, 0);
    std::vector<double> out(net.nodes[outcome].cardinality(), 0.0);
    while (true) {
        double p = 1.0;
        for (std::size_t v = 0; v < n && p > 0.0; ++v) {
            if (target && v == *target)
                p /= static_cast<double>(net.nodes[v].cardinality());
            else
                p *= net.nodes[v].cpt[net.cpt_row(v, x.data())][x[v]];
        }
        out[x[outcome]] += p;
        std::size_t v = 0;
        while (v < n && ++x[v] == net.nodes[v].cardinality()) x[v++] = 0;
        if (v == n) break;
    }
    return out;
}

}  // namespace

std::vector<double> exact_interventional_dist(const netio::BayesNet& net, std::size_t target, std::size_t outcome) {
    if (target >= net.size() || outcome >= net.size()) throw std::out_of_range("node index out of range");
    if (target == outcome) throw std::invalid_argument("target and outcome must differ");
    return enumerate(net, target, outcome);
}

std::vector<double> exact_marginal(const netio::BayesNet& net, std::size_t node) {
    if (node >= net.size()) throw std::out_of_range("node index out of range");
    return enumerate(net, std::nullopt, node);
}

void write_dataset_csv(std::ostream& out, const netio::BayesNet& net, const Dataset& data) {
    for (const auto& node : net.nodes) out << node.name << ',';
    out << "intervened_on\n";
    const std::string tag = data.target() ? net.nodes[*data.target()].name : std::string();
    for (std::size_t s = 0; s < data.size(); ++s) {
        auto r = data.row(s);
        for (std::size_t v = 0; v < r.size(); ++v) out << net.nodes[v].states[r[v]] << ',';
        out << tag << '\n';
    }
}

}  // namespace legit::scm
