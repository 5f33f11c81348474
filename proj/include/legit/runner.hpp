#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "legit/enco.hpp"
#include "legit/graph.hpp"
#include "legit/legit.hpp"
#include "legit/llm.hpp"
#include "legit/netio.hpp"
#include "legit/scm.hpp"
#include "legit/strategies.hpp"

namespace legit::runner {

enum class Refit { kWarm, kCold };
std::string to_string(Refit refit);
Refit parse_refit(const std::string& name);

struct RunConfig {
    std::string network = "asia";
    std::string strategy = "git";
    std::size_t rounds = 33;
    std::size_t batch = 32;
    std::size_t obs_samples = 5000;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    enco::EncoConfig enco;
    strategies::EnsembleConfig ensemble;
    std::optional<schedule::LegitConfig> legit;  // dataset defaults when unset
    llm::EndpointConfig llm;
    Refit refit = Refit::kWarm;
    std::filesystem::path output_dir = "results";
    std::size_t jobs = 1;
    bool record_seconds = false;  // wall-clock in rounds.csv; always in timings.csv
    /// Injected into live/cached clients; tests use a counting transport.
    std::shared_ptr<llm::Transport> transport;

    /// Throws std::invalid_argument on a zero rounds/batch/obs or a bad nested config.
    void validate() const;
    schedule::LegitConfig legit_or_default() const;
};

/// Flat `key: value` YAML. Nested configs use dotted keys (`enco.epochs`,
/// `legit.t_warmup`, `llm.mode`, `ensemble.graphs`). `seeds` is a count or a list.
/// `strategy` may be a list, giving one config per strategy.
std::vector<RunConfig> parse_config(const std::string& text);
std::vector<RunConfig> load_config(const std::filesystem::path& path);
/// Applies one dotted key; throws std::invalid_argument on an unknown key or bad value.
void apply_key(RunConfig& cfg, const std::string& key, const std::string& value);
/// Every key with its resolved value, one `key: value` per line, fixed order.
std::string echo_config(const RunConfig& cfg);

struct RoundRecord {
    std::size_t round = 0;
    std::size_t target = 0;
    std::string phase;  // legit stage, or the strategy name
    double seconds = 0.0;
    std::size_t shd = 0;
    std::size_t sid = 0;
    std::optional<double> bsf;
    std::uint64_t checksum = 0;
    bool cyclic = false;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<RoundRecord> records;
    graph::Digraph final_graph;
    graph::EdgeBeliefs final_beliefs;
    bool failed = false;
    std::string error;
    std::size_t llm_network_calls = 0;
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // population std over seeds
    std::size_t n = 0;
};

struct RunResult {
    RunConfig cfg;
    std::vector<std::string> node_names;
    std::vector<SeedResult> seeds;

    /// Final-round metric over completed seeds ("shd", "sid", "bsf").
    MetricSummary final_metric(const std::string& metric) const;
    /// Metric at a 1-based round over seeds that reached it.
    MetricSummary round_metric(const std::string& metric, std::size_t round) const;
    std::size_t failed_count() const;
};

/// Mean and population std; zeros for an empty input.
MetricSummary summarize(const std::vector<double>& values);

/// The online loop for one seed, driven one round at a time. Shared by the
/// batch runner and the interactive service.
class OnlineDiscovery {
public:
    OnlineDiscovery(RunConfig cfg, std::shared_ptr<const netio::BayesNet> net, std::uint64_t seed);

    /// Samples the observational data and fits the initial model (cached per network and seed).
    void initialize();
    /// Samples the round's batch under do(target), refits, and records metrics.
    RoundRecord step(std::size_t target);
    /// Asks `strategy` for the next target, then steps.
    RoundRecord step(strategies::Strategy& strategy);

    /// Targeting view of the current round; `rng` must outlive the returned state.
    strategies::TargetingState targeting_state(Rng& rng) const;

    std::size_t round() const { return history_.size(); }
    bool done() const { return history_.size() >= cfg_.rounds; }
    bool initialized() const { return initialized_; }
    const std::vector<std::size_t>& history() const { return history_; }
    const std::vector<RoundRecord>& records() const { return records_; }
    const enco::EncoModel& model() const { return *model_; }
    const netio::BayesNet& network() const { return *net_; }
    const graph::Digraph& truth() const { return truth_; }
    const std::vector<std::string>& node_names() const { return names_; }
    const RunConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    /// Interventional samples acquired so far.
    std::size_t interventional_samples() const;

    /// Rebuilds the data for `history` from the seed streams and adopts `model`.
    void restore(const std::vector<std::size_t>& history, std::vector<RoundRecord> records, enco::EncoModel model);

private:
    RoundRecord finish_round(std::size_t target, double seconds, const std::string& phase);

    RunConfig cfg_;
    std::shared_ptr<const netio::BayesNet> net_;
    std::uint64_t seed_;
    std::vector<std::string> names_;
    graph::Digraph truth_;
    scm::Sampler sampler_;
    scm::Dataset obs_;
    std::vector<scm::Dataset> ints_;
    std::optional<enco::EncoModel> model_;
    std::vector<std::size_t> history_;
    std::vector<RoundRecord> records_;
    bool initialized_ = false;
};

/// Metrics of `learned` against the truth as stored in a RoundRecord.
void score_graph(const graph::Digraph& truth, const graph::Thresholded& learned, RoundRecord& record);

/// Builds the strategy named in cfg (including `legit`). `client` must outlive it when legit is used.
std::unique_ptr<strategies::Strategy> make_run_strategy(const RunConfig& cfg, const netio::BayesNet& net,
                                                        std::uint64_t seed, llm::LlmClient* client,
                                                        strategies::ExternalChannel* channel = nullptr);

/// One seed end to end. Errors are caught and reported in the result with the partial records.
SeedResult run_online_discovery(const RunConfig& cfg, std::uint64_t seed,
                                strategies::ExternalChannel* channel = nullptr);

/// All seeds of cfg, `cfg.jobs` at a time. Throws std::runtime_error when every seed failed.
RunResult run_suite(const RunConfig& cfg, strategies::ExternalChannel* channel = nullptr);

/// config.echo, rounds.csv, timings.csv, trajectory.csv, summary.csv, targets_hist.csv, final_graphs/.
/// Throws std::runtime_error naming the path on I/O failure.
void write_results(const RunResult& result, const std::filesystem::path& dir);

/// CSV bodies, exposed for tests.
std::string rounds_csv(const RunResult& result);
std::string summary_csv(const RunResult& result);
std::string trajectory_csv(const RunResult& result);
/// Node frequencies per window of `window` rounds, summed over seeds.
std::string targets_hist_csv(const RunResult& result, std::size_t window = 5);

/// Drops cached initial models (tests).
void clear_initial_fit_cache();

}  // namespace legit::runner
