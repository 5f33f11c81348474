#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "legit/enco.hpp"
#include "legit/graph.hpp"
#include "legit/rng.hpp"

namespace legit::strategies {

/// What a strategy may look at when choosing round `round`'s target.
/// Ground truth is deliberately absent; the oracle strategy receives it at construction.
struct TargetingState {
    std::size_t round = 1;
    const enco::EncoModel* model = nullptr;
    const std::vector<std::size_t>* history = nullptr;  // targets of rounds 1..round-1
    const std::vector<std::string>* node_names = nullptr;
    Rng* rng = nullptr;

    std::size_t n() const { return model ? model->size() : node_names->size(); }
};

struct StrategyScore {
    std::vector<double> scores;
    std::size_t chosen = 0;
};

/// Index of the largest score; ties go to the lowest index.
std::size_t argmax_lowest(const std::vector<double>& scores);

class Strategy {
public:
    virtual ~Strategy() = default;
    virtual std::string name() const = 0;
    virtual std::size_t next(const TargetingState& state) = 0;
    /// Scores behind the most recent choice, for strategies that compute them.
    virtual std::optional<StrategyScore> last_score() const { return std::nullopt; }
};

struct EnsembleConfig {
    std::size_t graphs = 50;
    std::size_t samples_per = 128;
    std::size_t estimator_graphs = 25;  // GIT: masks used by the gradient estimator
    bool include_theta = true;          // GIT: score the concatenated (gamma, theta) gradient
    std::size_t acyclic_retries = 20;
};

/// Acyclic masks drawn from the model's beliefs, plus how often the cyclic patch fired.
struct Ensemble {
    std::vector<graph::Digraph> masks;
    std::size_t resamples = 0;
    std::size_t pruned_edges = 0;
};

Ensemble sample_ensemble(const enco::EncoModel& model, std::size_t graphs, std::size_t retries, Rng& rng);

std::size_t next_random(const TargetingState& state);
/// Uniform over nodes not yet visited in the current cycle, where cycles are
/// reconstructed from the history and reset once every node was visited.
std::size_t next_round_robin(const TargetingState& state);
/// Node i with probability out_degree(i) / sum of out-degrees in `truth`; uniform if no edges.
std::size_t next_degree_prob(const TargetingState& state, const graph::Digraph& truth);

StrategyScore git_score(const TargetingState& state, const enco::EncoConfig& enco_cfg, const EnsembleConfig& cfg);
StrategyScore ait_score(const TargetingState& state, const EnsembleConfig& cfg);
StrategyScore cbed_score(const TargetingState& state, const EnsembleConfig& cfg);

/// Per-candidate scores computed against a fixed ensemble; `seed` fixes the hallucinated samples.
std::vector<double> git_scores(const enco::EncoModel& model, const Ensemble& ens,
                               const std::vector<graph::Digraph>& estimator_masks, const enco::EncoConfig& enco_cfg,
                               const EnsembleConfig& cfg, std::uint64_t seed);
std::vector<double> ait_scores(const enco::EncoModel& model, const Ensemble& ens, const EnsembleConfig& cfg,
                               std::uint64_t seed);
std::vector<double> cbed_scores(const enco::EncoModel& model, const Ensemble& ens, const EnsembleConfig& cfg,
                                std::uint64_t seed);

class ChannelClosed : public std::runtime_error {
public:
    ChannelClosed() : std::runtime_error("external channel closed") {}
};

/// Source of externally chosen targets (a person at a terminal, a script, a service session).
class ExternalChannel {
public:
    virtual ~ExternalChannel() = default;
    /// Shows the round context and waits for an answer; nullopt means the channel closed.
    virtual std::optional<std::string> ask(std::size_t round, const std::string& context) = 0;
    /// Reports why the previous answer was rejected.
    virtual void reject(const std::string& answer, const std::string& reason) = 0;
};

/// Line-oriented: writes the context and a prompt to `out`, reads one line from `in`.
class StreamChannel : public ExternalChannel {
public:
    StreamChannel(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
    std::optional<std::string> ask(std::size_t round, const std::string& context) override;
    void reject(const std::string& answer, const std::string& reason) override;

private:
    std::istream& in_;
    std::ostream& out_;
};

/// Replays a fixed list of answers; closes when the list runs out.
class ScriptedChannel : public ExternalChannel {
public:
    explicit ScriptedChannel(std::vector<std::string> answers) : answers_(std::move(answers)) {}
    std::optional<std::string> ask(std::size_t round, const std::string& context) override;
    void reject(const std::string& answer, const std::string& reason) override;

    const std::vector<std::string>& rejections() const { return rejections_; }
    const std::vector<std::string>& contexts() const { return contexts_; }

private:
    std::vector<std::string> answers_;
    std::size_t pos_ = 0;
    std::vector<std::string> rejections_;
    std::vector<std::string> contexts_;
};

/// Resolves a node by exact name, then case-insensitive name, then decimal index.
std::optional<std::size_t> resolve_node(const std::vector<std::string>& names, const std::string& answer);

/// Round number plus the edges currently believed above 0.5, one per line.
std::string belief_summary(const TargetingState& state);

/// Asks until a valid node arrives. Throws ChannelClosed.
std::size_t next_external(const TargetingState& state, ExternalChannel& channel);

struct StrategyOptions {
    EnsembleConfig ensemble;
    enco::EncoConfig enco;
    std::optional<graph::Digraph> truth;  // degree_prob only
    ExternalChannel* channel = nullptr;   // external only
};

/// random | round_robin | degree_prob | git | ait | cbed | external.
/// `legit` is assembled by the legit module on top of one of these.
std::unique_ptr<Strategy> make_strategy(const std::string& name, const StrategyOptions& opts);

}  // namespace legit::strategies
