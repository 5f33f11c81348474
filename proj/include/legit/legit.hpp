#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "legit/llm.hpp"
#include "legit/netio.hpp"
#include "legit/strategies.hpp"

namespace legit::schedule {

struct LegitConfig {
    std::size_t t_warmup = 3;
    std::size_t t_bootstrapped = 2;
    std::string base_strategy = "git";
    double threshold = 0.5;
    std::size_t prompt_targets = 4;  // dataset default; the prompt asks for max(W + B, this)
    std::size_t sc_samples = 5;
    std::optional<std::size_t> vote_depth;  // full-ranking votes when unset

    /// Throws std::invalid_argument when t_warmup is 0 or the base strategy is not numerical.
    void validate() const;
};

/// Asia uses W=3, B=1 and Insurance prompts for 5 targets; everything else takes the defaults.
LegitConfig dataset_defaults(const std::string& dataset);

enum class Phase { kWarmup, kBootstrapped, kReplay, kBase };
std::string to_string(Phase phase);

/// Stage of a 1-based round: 1..W warmup, W+1..W+B bootstrapped,
/// W+B+1..2(W+B) replay, then base.
Phase phase_of(std::size_t round, std::size_t t_warmup, std::size_t t_bootstrapped);

struct LegitSchedule {
    std::vector<std::size_t> warmup_targets;        // full ranked list, reserve included
    std::vector<std::size_t> bootstrapped_targets;  // filled at round W+1
    std::vector<std::size_t> isolated_snapshot;
    bool bootstrapped_planned = false;
    std::vector<std::size_t> served;  // targets of rounds 1..W+B as actually served
    std::size_t reserve_used = 0;     // warmup entries beyond W consumed as padding
    std::size_t fallbacks = 0;        // staged rounds served by the base strategy

    /// Targets replayed in rounds W+B+1..2(W+B).
    const std::vector<std::size_t>& replay_targets() const { return served; }
};

/// Variable entries for the given nodes, in description-file order.
llm::PromptSpec prompt_spec(const netio::VariableDescriptions& descs, const std::vector<std::string>& node_names,
                            const std::vector<std::size_t>& nodes, std::size_t k, llm::Stage stage);

/// Ranked node indices from the warmup prompt; padded with unchosen nodes in
/// index order when fewer than k names survive parsing.
std::vector<std::size_t> plan_warmup(llm::LlmClient& client, const netio::VariableDescriptions& descs,
                                     const std::vector<std::string>& node_names, const std::string& dataset,
                                     std::size_t k, const LegitConfig& cfg, std::uint64_t seed);

/// Ranked isolated nodes from the bootstrapped prompt. Empty when nothing is
/// isolated; the lone isolated node without an LLM call when there is one.
std::vector<std::size_t> plan_bootstrapped(llm::LlmClient& client, const netio::VariableDescriptions& descs,
                                           const std::vector<std::string>& node_names, const std::string& dataset,
                                           std::size_t k, const std::vector<std::size_t>& isolated,
                                           const LegitConfig& cfg, std::uint64_t seed);

/// The staged strategy. Rounds must be requested in order 1, 2, ...
class LegitStrategy : public strategies::Strategy {
public:
    LegitStrategy(LegitConfig cfg, llm::LlmClient& client, netio::VariableDescriptions descs, std::string dataset,
                  std::unique_ptr<strategies::Strategy> base, std::uint64_t seed);

    std::string name() const override { return "legit"; }
    std::size_t next(const strategies::TargetingState& state) override;
    std::optional<strategies::StrategyScore> last_score() const override;

    const LegitSchedule& schedule() const { return schedule_; }
    /// Resumes from a saved schedule (warmup list, bootstrapped list, served targets).
    void restore(LegitSchedule schedule);
    Phase last_phase() const { return last_phase_; }

private:
    std::size_t from_base(const strategies::TargetingState& state);

    LegitConfig cfg_;
    llm::LlmClient& client_;
    netio::VariableDescriptions descs_;
    std::string dataset_;
    std::unique_ptr<strategies::Strategy> base_;
    std::uint64_t seed_;
    LegitSchedule schedule_;
    bool warmup_planned_ = false;
    Phase last_phase_ = Phase::kWarmup;
    bool last_from_base_ = false;
};

}  // namespace legit::schedule
