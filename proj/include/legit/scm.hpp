#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "legit/netio.hpp"

namespace legit::scm {

struct Sample {
    std::vector<std::uint8_t> values;
    std::optional<std::size_t> intervened_on;
};

/// Complete categorical samples, row-major. `target()` is the shared
/// intervention target, or nullopt for observational data.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t n_vars, std::optional<std::size_t> target) : n_vars_(n_vars), target_(target) {}

    std::size_t size() const noexcept { return n_vars_ ? values_.size() / n_vars_ : 0; }
    bool empty() const noexcept { return values_.empty(); }
    std::size_t n_vars() const noexcept { return n_vars_; }
    std::optional<std::size_t> target() const noexcept { return target_; }

    std::span<const std::uint8_t> row(std::size_t i) const { return {values_.data() + i * n_vars_, n_vars_}; }
    Sample sample(std::size_t i) const;
    const std::vector<std::uint8_t>& values() const noexcept { return values_; }

    void append(std::span<const std::uint8_t> row);
    /// Throws std::invalid_argument when the targets differ.
    void append(const Dataset& other);
    void reserve(std::size_t rows) { values_.reserve(rows * n_vars_); }

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    std::size_t n_vars_ = 0;
    std::optional<std::size_t> target_;
    std::vector<std::uint8_t> values_;
};

/// Ancestral sampler with a cached topological order.
class Sampler {
public:
    explicit Sampler(const netio::BayesNet& net);

    Dataset observational(std::size_t count, std::uint64_t seed) const;
    /// Hard intervention: the target's mechanism is replaced by a uniform draw over its states.
    Dataset interventional(std::size_t target, std::size_t count, std::uint64_t seed) const;

    const std::vector<std::size_t>& order() const noexcept { return order_; }

private:
    Dataset draw(std::optional<std::size_t> target, std::size_t count, std::uint64_t seed) const;

    const netio::BayesNet* net_;
    std::vector<std::size_t> order_;
};

Dataset sample_observational(const netio::BayesNet& net, std::size_t count, std::uint64_t seed);
Dataset sample_interventional(const netio::BayesNet& net, std::size_t target, std::size_t count, std::uint64_t seed);

inline constexpr double kEnumerationLimit = 1e6;

/// Exact p(X_outcome | do(X_target ~ uniform)) by summing the truncated
/// factorization over every joint configuration.
std::vector<double> exact_interventional_dist(const netio::BayesNet& net, std::size_t target, std::size_t outcome);

/// Exact observational marginal of one node by full enumeration.
std::vector<double> exact_marginal(const netio::BayesNet& net, std::size_t node);

/// Columns are node names plus a trailing `intervened_on` (empty when observational).
void write_dataset_csv(std::ostream& out, const netio::BayesNet& net, const Dataset& data);

}  // namespace legit::scm
