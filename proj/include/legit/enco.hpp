#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "legit/graph.hpp"
#include "legit/rng.hpp"
#include "legit/scm.hpp"

namespace legit::enco {

enum class Optimizer { kSgd, kAdam };

Optimizer parse_optimizer(const std::string& name);
std::string to_string(Optimizer opt);

struct EncoConfig {
    std::size_t hidden_size = 64;
    double leaky_slope = 0.1;
    std::size_t batch_size = 128;
    double lr_model = 5e-3;
    double weight_decay = 1e-4;
    std::size_t dist_iters = 1000;   // F
    std::size_t graph_iters = 100;   // G
    std::size_t graph_samples = 100; // K
    std::size_t epochs = 30;
    double lr_gamma = 2e-2;
    double lr_theta = 1e-1;
    double lambda_sparse = 4e-3;

    double edge_prior = 0.3;          // sigma(gamma) at init
    std::size_t warm_epochs = 1;      // epochs per round when warm-starting
    Optimizer model_optimizer = Optimizer::kAdam;
    Optimizer graph_optimizer = Optimizer::kAdam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double graph_beta2 = 0.9;  // gamma only; theta uses adam_beta2
    /// Whether graph steps may draw observational batches. When false, graph
    /// steps are skipped until interventional data exists.
    bool obs_in_graph_pool = false;

    /// Throws std::invalid_argument on a non-positive field or slope outside (0, 1).
    void validate() const;
};

/// Raised when a loss or gradient becomes non-finite.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kLogitClamp = 10.0;
inline constexpr double kNllCap = 27.631021115928547;  // -log(1e-12)
inline constexpr double kExcludedLogit = -1e9;

double sigmoid(double logit);  // clamps the logit to [-10, 10] first

/// Two-layer perceptron for one node: masked one-hot inputs -> hidden -> logits.
/// Parameters live in one buffer: [W1^T (in x hidden) | b1 | W2 (states x hidden) | b2].
struct NodeNet {
    std::size_t in_dim = 0;
    std::size_t hidden = 0;
    std::size_t states = 0;
    std::vector<float> params;
    std::vector<float> adam_m;
    std::vector<float> adam_v;
    std::uint64_t steps = 0;

    const float* w1_row(std::size_t input) const { return params.data() + input * hidden; }
    const float* b1() const { return params.data() + in_dim * hidden; }
    const float* w2_row(std::size_t state) const { return b1() + hidden + state * hidden; }
    const float* b2() const { return b1() + hidden + states * hidden; }
    std::size_t b1_offset() const { return in_dim * hidden; }
    std::size_t w2_offset() const { return b1_offset() + hidden; }
    std::size_t b2_offset() const { return w2_offset() + states * hidden; }
};

/// Scratch buffers for forward/backward passes; one per thread.
struct Workspace {
    std::vector<float> pre;
    std::vector<float> act;
    std::vector<float> logits;
    std::vector<float> grad_hidden;
    std::vector<std::uint32_t> rows;
    void reserve(std::size_t hidden, std::size_t states, std::size_t n);
};

class EncoModel {
public:
    EncoModel() = default;

    std::size_t size() const noexcept { return n_; }
    const std::vector<std::size_t>& cardinalities() const noexcept { return cards_; }
    std::size_t input_offset(std::size_t node) const { return offsets_[node]; }
    std::size_t hidden_size() const noexcept { return hidden_; }
    float leaky_slope() const noexcept { return slope_; }

    double gamma(std::size_t i, std::size_t j) const { return gamma_[i * n_ + j]; }
    double theta(std::size_t i, std::size_t j) const { return theta_[i * n_ + j]; }
    void set_gamma(std::size_t i, std::size_t j, double value);
    /// Writes theta[i][j] and -value into theta[j][i].
    void set_theta(std::size_t i, std::size_t j, double value);
    /// sigma(gamma) * sigma(theta); 0 on the diagonal.
    double edge_prob(std::size_t i, std::size_t j) const;

    const NodeNet& net(std::size_t j) const { return nets_[j]; }
    NodeNet& net(std::size_t j) { return nets_[j]; }

    /// Negative log-likelihood of x[j] given the inputs listed in `parents`, capped at -log(1e-12).
    double node_nll(std::size_t j, const std::uint8_t* x, std::span<const std::uint32_t> parents, Workspace& ws) const;
    /// Softmax over node j's states.
    void predictive(std::size_t j, const std::uint8_t* x, std::span<const std::uint32_t> parents, Workspace& ws,
                    std::vector<double>& probs) const;

    // Raw optimizer state for the graph parameters.
    std::vector<double>& gamma_data() { return gamma_; }
    std::vector<double>& theta_data() { return theta_; }
    const std::vector<double>& gamma_data() const { return gamma_; }
    const std::vector<double>& theta_data() const { return theta_; }

    friend EncoModel init_model(const std::vector<std::size_t>& cardinalities, const EncoConfig& cfg, std::uint64_t seed);
    friend void apply_graph_update(EncoModel&, const struct GraphGradient&, const EncoConfig&);
    friend void save_checkpoint(std::ostream& out, const EncoModel& model);
    friend EncoModel load_checkpoint(std::istream& in);

private:
    // Forward pass to logits; returns nothing, fills ws.pre/act/logits.
    void forward(std::size_t j, const std::uint8_t* x, std::span<const std::uint32_t> parents, Workspace& ws) const;

    std::size_t n_ = 0;
    std::size_t hidden_ = 0;
    float slope_ = 0.1f;
    std::vector<std::size_t> cards_;
    std::vector<std::size_t> offsets_;
    std::vector<double> gamma_;
    std::vector<double> theta_;
    // Adam moments and step counts for gamma and theta (theta moments live on the i < j entry).
    std::vector<double> gamma_m_, gamma_v_, theta_m_, theta_v_;
    std::vector<std::uint32_t> gamma_t_, theta_t_;
    std::vector<NodeNet> nets_;

    friend void distribution_step(EncoModel&, const scm::Dataset&, const EncoConfig&, Rng&);
};

EncoModel init_model(const std::vector<std::size_t>& cardinalities, const EncoConfig& cfg, std::uint64_t seed);

/// mask(i, j) ~ Bernoulli(edge_prob(i, j)), independently per entry.
graph::Digraph sample_graph_mask(const EncoModel& model, Rng& rng);

struct MaskDiagnostics {
    std::size_t resamples = 0;
    std::size_t pruned_edges = 0;
};

/// Resamples up to `retries` times; if every draw is cyclic, removes the
/// lowest-belief edge of some cycle until the last draw is acyclic.
graph::Digraph sample_acyclic_mask(const EncoModel& model, Rng& rng, std::size_t retries = 20,
                                   MaskDiagnostics* diag = nullptr);

/// One update of every conditional model on `batch`, each sample's inputs
/// masked by a freshly drawn mask column. An empty batch is a no-op.
void distribution_step(EncoModel& model, const scm::Dataset& batch, const EncoConfig& cfg, Rng& rng);

struct GraphGradient {
    std::size_t n = 0;
    std::vector<double> gamma;           // d loss / d gamma
    std::vector<double> theta;           // d loss / d theta, antisymmetric
    std::vector<std::uint8_t> gamma_set; // entry carries a gradient
    std::vector<std::uint8_t> theta_set;
    std::vector<double> contrast;        // mean NLL_j with edge minus without; NaN when undefined

    explicit GraphGradient(std::size_t size = 0);
    /// Concatenated (gamma, theta) gradient norm over entries that carry a gradient.
    double l2_norm(bool include_theta = true) const;
};

/// Edge-contrast estimate on one batch. For each i -> j the masks are split by
/// whether they contain the edge; the contrast is the difference of the mean
/// NLL of X_j between the two groups. Gamma gradients skip the batch's
/// intervention target as child; theta gradients exist only for edges touching it.
GraphGradient graph_gradients(const EncoModel& model, const scm::Dataset& batch, std::span<const graph::Digraph> masks,
                              const EncoConfig& cfg);

void apply_graph_update(EncoModel& model, const GraphGradient& grad, const EncoConfig& cfg);

/// Picks one dataset uniformly from {obs} + non-empty `ints`, draws a batch
/// and K masks, and applies one gamma/theta update.
void graph_step(EncoModel& model, const scm::Dataset& obs, std::span<const scm::Dataset> ints, const EncoConfig& cfg,
                Rng& rng);

/// `epochs` alternations of (F distribution steps, G graph steps), warm-started from `model`.
void fit(EncoModel& model, const scm::Dataset& obs, std::span<const scm::Dataset> ints, const EncoConfig& cfg,
         std::uint64_t seed, std::size_t epochs);

graph::EdgeBeliefs edge_probabilities(const EncoModel& model);
graph::Thresholded extract_graph(const EncoModel& model);

/// FNV-1a over the bit patterns of the belief matrix.
std::uint64_t belief_checksum(const graph::EdgeBeliefs& beliefs);

/// Samples from the model's own conditionals under `mask` (must be acyclic),
/// with `target` (if any) replaced by a uniform draw.
scm::Dataset hallucinate(const EncoModel& model, const graph::Digraph& mask, std::optional<std::size_t> target,
                         std::size_t count, Rng& rng);

void save_checkpoint(std::ostream& out, const EncoModel& model);
EncoModel load_checkpoint(std::istream& in);

}  // namespace legit::enco
