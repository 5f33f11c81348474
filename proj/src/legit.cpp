#include "legit/legit.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "legit/enco.hpp"
#include "legit/graph.hpp"

namespace legit::schedule {

void LegitConfig::validate() const {
    if (t_warmup < 1) throw std::invalid_argument("legit: t_warmup must be at least 1");
    static const std::vector<std::string> numerical{"random", "round_robin", "degree_prob", "git", "ait", "cbed"};
    if (std::find(numerical.begin(), numerical.end(), base_strategy) == numerical.end())
        throw std::invalid_argument(fmt::format("legit: '{}' cannot serve as the base strategy", base_strategy));
    if (sc_samples < 1) throw std::invalid_argument("legit: sc_samples must be at least 1");
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("legit: threshold must be in (0, 1)");
}

LegitConfig dataset_defaults(const std::string& dataset) {
    LegitConfig cfg;
    if (dataset == "asia") cfg.t_bootstrapped = 1;
    if (dataset == "insurance") cfg.prompt_targets = 5;
    return cfg;
}

std::string to_string(Phase phase) {
    switch (phase) {
        case Phase::kWarmup: return "warmup";
        case Phase::kBootstrapped: return "bootstrapped";
        case Phase::kReplay: return "replay";
        case Phase::kBase: return "base";
    }
    return "unknown";
}

Phase phase_of(std::size_t round, std::size_t w, std::size_t b) {
    if (round == 0) throw std::invalid_argument("rounds are 1-based");
    if (round <= w) return Phase::kWarmup;
    if (round <= w + b) return Phase::kBootstrapped;
    if (round <= 2 * (w + b)) return Phase::kReplay;
    return Phase::kBase;
}

llm::PromptSpec prompt_spec(const netio::VariableDescriptions& descs, const std::vector<std::string>& node_names,
                            const std::vector<std::size_t>& nodes, std::size_t k, llm::Stage stage) {
    llm::PromptSpec spec;
    spec.domain_blurb = descs.domain_blurb;
    spec.k_targets = k;
    spec.stage = stage;
    std::vector<std::uint8_t> want(node_names.size(), 0);
    for (std::size_t v : nodes) want[v] = 1;
    for (const auto& [name, desc] : descs.entries) {
        auto it = std::find(node_names.begin(), node_names.end(), name);
        if (it != node_names.end() && want[static_cast<std::size_t>(it - node_names.begin())])
            spec.variables.emplace_back(name, desc);
    }
    for (std::size_t v : nodes)
        if (!descs.find(node_names[v]))
            throw std::invalid_argument(fmt::format("no description for node '{}'", node_names[v]));
    return spec;
}

namespace {

std::vector<std::size_t> to_indices(const std::vector<std::string>& ranked, const std::vector<std::string>& names) {
    std::vector<std::size_t> out;
    for (const auto& r : ranked) {
        auto it = std::find(names.begin(), names.end(), r);
        if (it != names.end()) out.push_back(static_cast<std::size_t>(it - names.begin()));
    }
    return out;
}

}  // namespace

std::vector<std::size_t> plan_warmup(llm::LlmClient& client, const netio::VariableDescriptions& descs,
                                     const std::vector<std::string>& node_names, const std::string& dataset,
                                     std::size_t k, const LegitConfig& cfg, std::uint64_t seed) {
    const std::size_t n = node_names.size();
    if (k > n) throw std::invalid_argument(fmt::format("warmup asks for {} targets but the network has {} nodes", k, n));
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    auto spec = prompt_spec(descs, node_names, all, k, llm::Stage::kWarmup);
    auto result = llm::self_consistent_targets(spec, client, dataset, cfg.sc_samples, seed, cfg.vote_depth);
    auto ranked = to_indices(result.ranked, node_names);
    if (ranked.size() < k) {
        spdlog::warn("legit warmup: only {} usable target(s) for k={}, padding in node order", ranked.size(), k);
        for (std::size_t i = 0; i < n && ranked.size() < k; ++i)
            if (std::find(ranked.begin(), ranked.end(), i) == ranked.end()) ranked.push_back(i);
    }
    return ranked;
}

std::vector<std::size_t> plan_bootstrapped(llm::LlmClient& client, const netio::VariableDescriptions& descs,
                                           const std::vector<std::string>& node_names, const std::string& dataset,
                                           std::size_t k, const std::vector<std::size_t>& isolated,
                                           const LegitConfig& cfg, std::uint64_t seed) {
    if (isolated.empty()) return {};
    if (isolated.size() == 1) return isolated;
    auto spec = prompt_spec(descs, node_names, isolated, std::min(k, isolated.size()), llm::Stage::kBootstrapped);
    auto result = llm::self_consistent_targets(spec, client, dataset, cfg.sc_samples, seed, cfg.vote_depth);
    auto ranked = to_indices(result.ranked, node_names);
    std::erase_if(ranked, [&](std::size_t v) { return std::find(isolated.begin(), isolated.end(), v) == isolated.end(); });
    return ranked;
}

LegitStrategy::LegitStrategy(LegitConfig cfg, llm::LlmClient& client, netio::VariableDescriptions descs,
                             std::string dataset, std::unique_ptr<strategies::Strategy> base, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      client_(client),
      descs_(std::move(descs)),
      dataset_(std::move(dataset)),
      base_(std::move(base)),
      seed_(seed) {
    cfg_.validate();
    if (!base_) throw std::invalid_argument("legit needs a base strategy");
}

void LegitStrategy::restore(LegitSchedule schedule) {
    schedule_ = std::move(schedule);
    warmup_planned_ = !schedule_.warmup_targets.empty();
}

std::size_t LegitStrategy::from_base(const strategies::TargetingState& state) {
    last_from_base_ = true;
    return base_->next(state);
}

std::optional<strategies::StrategyScore> LegitStrategy::last_score() const {
    return last_from_base_ ? base_->last_score() : std::nullopt;
}

std::size_t LegitStrategy::next(const strategies::TargetingState& state) {
    const std::size_t w = cfg_.t_warmup, b = cfg_.t_bootstrapped, r = state.round;
    const auto& names = *state.node_names;
    const std::size_t k = std::min(names.size(), std::max(w + b, cfg_.prompt_targets));
    last_phase_ = phase_of(r, w, b);
    last_from_base_ = false;

    if (!warmup_planned_) {
        schedule_.warmup_targets = plan_warmup(client_, descs_, names, dataset_, k, cfg_, seed_);
        warmup_planned_ = true;
    }

    std::size_t target = 0;
    switch (last_phase_) {
        case Phase::kWarmup:
            if (r - 1 < schedule_.warmup_targets.size()) {
                target = schedule_.warmup_targets[r - 1];
            } else {
                ++schedule_.fallbacks;
                target = from_base(state);
            }
            break;
        case Phase::kBootstrapped: {
            if (!schedule_.bootstrapped_planned) {
                schedule_.isolated_snapshot = graph::isolated_nodes(enco::edge_probabilities(*state.model), cfg_.threshold);
                schedule_.bootstrapped_targets = plan_bootstrapped(client_, descs_, names, dataset_, b,
                                                                   schedule_.isolated_snapshot, cfg_,
                                                                   derive_seed(seed_, Stream::kShuffle, 1000));
                schedule_.bootstrapped_planned = true;
            }
            const std::size_t idx = r - w - 1;
            if (idx < schedule_.bootstrapped_targets.size()) {
                target = schedule_.bootstrapped_targets[idx];
            } else if (w + schedule_.reserve_used < schedule_.warmup_targets.size()) {
                target = schedule_.warmup_targets[w + schedule_.reserve_used++];
            } else {
                spdlog::warn("legit round {}: bootstrapped list exhausted, using {}", r, cfg_.base_strategy);
                ++schedule_.fallbacks;
                target = from_base(state);
            }
            break;
        }
        case Phase::kReplay:
            target = schedule_.served.at(r - w - b - 1);
            break;
        case Phase::kBase:
            return from_base(state);
    }
    if (r <= w + b) schedule_.served.push_back(target);
    return target;
}

}  // namespace legit::schedule
