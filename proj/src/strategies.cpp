#include "legit/strategies.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include <fmt/format.h>

namespace legit::strategies {

std::size_t argmax_lowest(const std::vector<double>& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

Ensemble sample_ensemble(const enco::EncoModel& model, std::size_t graphs, std::size_t retries, Rng& rng) {
    Ensemble ens;
    ens.masks.reserve(graphs);
    for (std::size_t g = 0; g < graphs; ++g) {
        enco::MaskDiagnostics diag;
        ens.masks.push_back(enco::sample_acyclic_mask(model, rng, retries, &diag));
        ens.resamples += diag.resamples;
        ens.pruned_edges += diag.pruned_edges;
    }
    return ens;
}

std::size_t next_random(const TargetingState& state) {
    return std::uniform_int_distribution<std::size_t>(0, state.n() - 1)(*state.rng);
}

std::size_t next_round_robin(const TargetingState& state) {
    const std::size_t n = state.n();
    std::vector<std::uint8_t> visited(n, 0);
    std::size_t count = 0;
    for (std::size_t t : *state.history) {
        if (!visited[t]) visited[t] = 1, ++count;
        if (count == n) std::fill(visited.begin(), visited.end(), 0), count = 0;
    }
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < n; ++i)
        if (!visited[i]) open.push_back(i);
    return open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(*state.rng)];
}

std::size_t next_degree_prob(const TargetingState& state, const graph::Digraph& truth) {
    const std::size_t n = truth.size();
    std::vector<double> weight(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += weight[i] = static_cast<double>(truth.children(i).size());
    if (total == 0.0) return std::uniform_int_distribution<std::size_t>(0, n - 1)(*state.rng);
    return std::discrete_distribution<std::size_t>(weight.begin(), weight.end())(*state.rng);
}

namespace {

// Hallucinated do(k) samples for every ensemble member, seeded per member so
// that all candidates see the same random stream.
std::vector<scm::Dataset> hallucinate_all(const enco::EncoModel& model, const Ensemble& ens, std::size_t k,
                                          std::size_t samples, std::uint64_t seed) {
    std::vector<scm::Dataset> out;
    out.reserve(ens.masks.size());
    for (std::size_t g = 0; g < ens.masks.size(); ++g) {
        Rng rng(derive_seed(seed, Stream::kStrategy, g));
        out.push_back(enco::hallucinate(model, ens.masks[g], k, samples, rng));
    }
    return out;
}

std::vector<std::size_t> one_hot_offsets(const enco::EncoModel& model, std::size_t& dims) {
    std::vector<std::size_t> off(model.size());
    dims = 0;
    for (std::size_t i = 0; i < model.size(); ++i) off[i] = std::exchange(dims, dims + model.cardinalities()[i]);
    return off;
}

double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double q : p)
        if (q > 0.0) h -= q * std::log(q);
    return h;
}

}  // namespace

std::vector<double> git_scores(const enco::EncoModel& model, const Ensemble& ens,
                               const std::vector<graph::Digraph>& estimator_masks, const enco::EncoConfig& enco_cfg,
                               const EnsembleConfig& cfg, std::uint64_t seed) {
    const std::size_t n = model.size();
    std::vector<double> scores(n, 0.0);
    if (ens.masks.empty()) return scores;
    for (std::size_t k = 0; k < n; ++k) {
        // With a shared estimator-mask set the gradient is linear in the batch
        // mean, so the average over ensemble members is the pooled-data gradient.
        scm::Dataset pooled(n, k);
        pooled.reserve(ens.masks.size() * cfg.samples_per);
        for (const auto& d : hallucinate_all(model, ens, k, cfg.samples_per, seed)) pooled.append(d);
        scores[k] = enco::graph_gradients(model, pooled, estimator_masks, enco_cfg).l2_norm(cfg.include_theta);
    }
    return scores;
}

std::vector<double> ait_scores(const enco::EncoModel& model, const Ensemble& ens, const EnsembleConfig& cfg,
                               std::uint64_t seed) {
    const std::size_t n = model.size();
    const std::size_t g_count = ens.masks.size();
    std::vector<double> scores(n, 0.0);
    if (g_count < 2 || cfg.samples_per < 2) return scores;
    std::size_t dims = 0;
    const auto off = one_hot_offsets(model, dims);
    const double total = static_cast<double>(g_count * cfg.samples_per);

    for (std::size_t k = 0; k < n; ++k) {
        auto data = hallucinate_all(model, ens, k, cfg.samples_per, seed);
        // For one-hot coordinates the within-graph sum of squares is m * p(1 - p).
        std::vector<double> grand(dims, 0.0), within(dims, 0.0);
        std::vector<std::vector<double>> means(g_count, std::vector<double>(dims, 0.0));
        for (std::size_t g = 0; g < g_count; ++g) {
            const auto& d = data[g];
            for (std::size_t s = 0; s < d.size(); ++s) {
                auto row = d.row(s);
                for (std::size_t i = 0; i < n; ++i) means[g][off[i] + row[i]] += 1.0;
            }
            const double m = static_cast<double>(d.size());
            for (std::size_t c = 0; c < dims; ++c) {
                double p = means[g][c] / m;
                within[c] += m * p * (1.0 - p);
                grand[c] += means[g][c];
                means[g][c] = p;
            }
        }
        double score = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i == k) continue;  // the intervened node is uniform under every graph
            for (std::size_t c = off[i]; c < off[i] + model.cardinalities()[i]; ++c) {
                double w = within[c] / (total - static_cast<double>(g_count));
                if (!(w > 0.0)) continue;
                double mean = grand[c] / total, between = 0.0;
                for (std::size_t g = 0; g < g_count; ++g) between += (means[g][c] - mean) * (means[g][c] - mean);
                between *= static_cast<double>(cfg.samples_per) / static_cast<double>(g_count - 1);
                score += between / w;
            }
        }
        scores[k] = score;
    }
    return scores;
}

std::vector<double> cbed_scores(const enco::EncoModel& model, const Ensemble& ens, const EnsembleConfig& cfg,
                                std::uint64_t seed) {
    const std::size_t n = model.size();
    const std::size_t g_count = ens.masks.size();
    std::vector<double> scores(n, 0.0);
    if (g_count < 2) return scores;
    std::vector<std::vector<std::uint32_t>> parents(n);
    enco::Workspace ws;
    std::vector<double> probs;

    for (std::size_t k = 0; k < n; ++k) {
        auto data = hallucinate_all(model, ens, k, cfg.samples_per, seed);
        double mi = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == k) continue;
            const std::size_t card = model.cardinalities()[j];
            std::vector<double> mixture(card, 0.0);
            double mean_h = 0.0;
            for (std::size_t g = 0; g < g_count; ++g) {
                // Predictive marginal of X_j under member g: the conditional
                // averaged over that member's hallucinated parent values.
                auto& pa = parents[j];
                pa.clear();
                for (std::size_t i = 0; i < n; ++i)
                    if (i != j && ens.masks[g].has(i, j)) pa.push_back(static_cast<std::uint32_t>(i));
                std::vector<double> marg(card, 0.0);
                const auto& d = data[g];
                for (std::size_t s = 0; s < d.size(); ++s) {
                    model.predictive(j, d.row(s).data(), pa, ws, probs);
                    for (std::size_t t = 0; t < card; ++t) marg[t] += probs[t];
                }
                for (double& v : marg) v /= static_cast<double>(std::max<std::size_t>(1, d.size()));
                mean_h += entropy(marg);
                for (std::size_t t = 0; t < card; ++t) mixture[t] += marg[t];
            }
            for (double& v : mixture) v /= static_cast<double>(g_count);
            mi += entropy(mixture) - mean_h / static_cast<double>(g_count);
        }
        scores[k] = std::max(0.0, mi);
    }
    return scores;
}

StrategyScore git_score(const TargetingState& state, const enco::EncoConfig& enco_cfg, const EnsembleConfig& cfg) {
    Rng& rng = *state.rng;
    Ensemble ens = sample_ensemble(*state.model, cfg.graphs, cfg.acyclic_retries, rng);
    std::vector<graph::Digraph> est;
    est.reserve(cfg.estimator_graphs);
    for (std::size_t k = 0; k < cfg.estimator_graphs; ++k) est.push_back(enco::sample_graph_mask(*state.model, rng));
    StrategyScore s;
    s.scores = git_scores(*state.model, ens, est, enco_cfg, cfg, rng());
    s.chosen = argmax_lowest(s.scores);
    return s;
}

StrategyScore ait_score(const TargetingState& state, const EnsembleConfig& cfg) {
    Ensemble ens = sample_ensemble(*state.model, cfg.graphs, cfg.acyclic_retries, *state.rng);
    StrategyScore s;
    s.scores = ait_scores(*state.model, ens, cfg, (*state.rng)());
    s.chosen = argmax_lowest(s.scores);
    return s;
}

StrategyScore cbed_score(const TargetingState& state, const EnsembleConfig& cfg) {
    Ensemble ens = sample_ensemble(*state.model, cfg.graphs, cfg.acyclic_retries, *state.rng);
    StrategyScore s;
    s.scores = cbed_scores(*state.model, ens, cfg, (*state.rng)());
    s.chosen = argmax_lowest(s.scores);
    return s;
}

std::optional<std::string> StreamChannel::ask(std::size_t round, const std::string& context) {
    out_ << context << fmt::format("round {} target> ", round) << std::flush;
    std::string line;
    if (!std::getline(in_, line)) return std::nullopt;
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    return line;
}

void StreamChannel::reject(const std::string& answer, const std::string& reason) {
    out_ << fmt::format("'{}' rejected: {}\n", answer, reason);
}

std::optional<std::string> ScriptedChannel::ask(std::size_t, const std::string& context) {
    contexts_.push_back(context);
    if (pos_ >= answers_.size()) return std::nullopt;
    return answers_[pos_++];
}

void ScriptedChannel::reject(const std::string& answer, const std::string&) { rejections_.push_back(answer); }

std::optional<std::size_t> resolve_node(const std::vector<std::string>& names, const std::string& answer) {
    std::string a = answer;
    auto trim = [](std::string& s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        std::size_t b = 0;
        while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        s.erase(0, b);
    };
    trim(a);
    if (a.empty()) return std::nullopt;
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == a) return i;
    auto lower = [](std::string s) {
        for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    };
    const std::string la = lower(a);
    for (std::size_t i = 0; i < names.size(); ++i)
        if (lower(names[i]) == la) return i;
    std::size_t idx = 0;
    auto [ptr, ec] = std::from_chars(a.data(), a.data() + a.size(), idx);
    if (ec == std::errc() && ptr == a.data() + a.size() && idx < names.size()) return idx;
    return std::nullopt;
}

std::string belief_summary(const TargetingState& state) {
    std::string out = fmt::format("round {}\n", state.round);
    if (!state.model) return out;
    const auto beliefs = enco::edge_probabilities(*state.model);
    const auto& names = *state.node_names;
    for (std::size_t i = 0; i < beliefs.n; ++i)
        for (std::size_t j = 0; j < beliefs.n; ++j)
            if (beliefs(i, j) > graph::kDefaultThreshold)
                out += fmt::format("  {} -> {} ({:.2f})\n", names[i], names[j], beliefs(i, j));
    return out;
}

std::size_t next_external(const TargetingState& state, ExternalChannel& channel) {
    const std::string context = belief_summary(state);
    for (;;) {
        auto answer = channel.ask(state.round, context);
        if (!answer) throw ChannelClosed();
        if (auto idx = resolve_node(*state.node_names, *answer)) return *idx;
        channel.reject(*answer, "not a node name or index");
    }
}

namespace {

class RandomStrategy : public Strategy {
public:
    std::string name() const override { return "random"; }
    std::size_t next(const TargetingState& s) override { return next_random(s); }
};

class RoundRobinStrategy : public Strategy {
public:
    std::string name() const override { return "round_robin"; }
    std::size_t next(const TargetingState& s) override { return next_round_robin(s); }
};

class DegreeProbStrategy : public Strategy {
public:
    explicit DegreeProbStrategy(graph::Digraph truth) : truth_(std::move(truth)) {}
    std::string name() const override { return "degree_prob"; }
    std::size_t next(const TargetingState& s) override { return next_degree_prob(s, truth_); }

private:
    graph::Digraph truth_;
};

class ScoredStrategy : public Strategy {
public:
    ScoredStrategy(std::string name, StrategyOptions opts) : name_(std::move(name)), opts_(std::move(opts)) {}
    std::string name() const override { return name_; }
    std::size_t next(const TargetingState& s) override {
        if (name_ == "git")
            last_ = git_score(s, opts_.enco, opts_.ensemble);
        else if (name_ == "ait")
            last_ = ait_score(s, opts_.ensemble);
        else
            last_ = cbed_score(s, opts_.ensemble);
        return last_->chosen;
    }
    std::optional<StrategyScore> last_score() const override { return last_; }

private:
    std::string name_;
    StrategyOptions opts_;
    std::optional<StrategyScore> last_;
};

class ExternalStrategy : public Strategy {
public:
    explicit ExternalStrategy(ExternalChannel* channel) : channel_(channel) {}
    std::string name() const override { return "external"; }
    std::size_t next(const TargetingState& s) override { return next_external(s, *channel_); }

private:
    ExternalChannel* channel_;
};

}  // namespace

std::unique_ptr<Strategy> make_strategy(const std::string& name, const StrategyOptions& opts) {
    if (name == "random") return std::make_unique<RandomStrategy>();
    if (name == "round_robin") return std::make_unique<RoundRobinStrategy>();
    if (name == "degree_prob") {
        if (!opts.truth) throw std::invalid_argument("degree_prob needs the ground-truth graph");
        return std::make_unique<DegreeProbStrategy>(*opts.truth);
    }
    if (name == "git" || name == "ait" || name == "cbed") return std::make_unique<ScoredStrategy>(name, opts);
    if (name == "external") {
        if (!opts.channel) throw std::invalid_argument("external strategy needs a channel");
        return std::make_unique<ExternalStrategy>(opts.channel);
    }
    throw std::invalid_argument(fmt::format("unknown strategy '{}'", name));
}

}  // namespace legit::strategies
