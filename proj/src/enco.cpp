#include "legit/enco.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <utility>

#include <fmt/format.h>
#include <json.hpp>

#include "legit/simd/kernels.hpp"

namespace legit::enco {

namespace {

constexpr double kLogFloor = -kNllCap;
constexpr double kAdamEps = 1e-8;
constexpr int kCheckpointVersion = 1;

double sigmoid_grad(double logit) {
    double s = sigmoid(logit);
    return s * (1.0 - s);
}

double clamp_logit(double v) { return std::clamp(v, -kLogitClamp, kLogitClamp); }

// Parent inputs of node j under mask column j.
void mask_parents(const graph::Digraph& mask, std::size_t j, std::vector<std::uint32_t>& out) {
    out.clear();
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (i != j && mask.has(i, j)) out.push_back(static_cast<std::uint32_t>(i));
}

// Bernoulli(p) as a comparison of one raw 64-bit draw against p * 2^64.
std::uint64_t bernoulli_threshold(double p) {
    if (!(p > 0.0)) return 0;
    if (p >= 1.0) return std::numeric_limits<std::uint64_t>::max();
    return static_cast<std::uint64_t>(std::ldexp(p, 64));
}

double log_sum_exp(const float* logits, std::size_t n) {
    float mx = *std::max_element(logits, logits + n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(static_cast<double>(logits[i] - mx));
    return mx + std::log(s);
}

scm::Dataset draw_batch(const scm::Dataset& data, std::size_t batch_size, Rng& rng) {
    scm::Dataset batch(data.n_vars(), data.target());
    if (data.empty()) return batch;
    std::size_t count = std::min(batch_size, data.size());
    batch.reserve(count);
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    for (std::size_t b = 0; b < count; ++b) batch.append(data.row(pick(rng)));
    return batch;
}

}  // namespace

Optimizer parse_optimizer(const std::string& name) {
    if (name == "sgd") return Optimizer::kSgd;
    if (name == "adam") return Optimizer::kAdam;
    throw std::invalid_argument(fmt::format("unknown optimizer '{}' (expected sgd or adam)", name));
}

std::string to_string(Optimizer opt) { return opt == Optimizer::kAdam ? "adam" : "sgd"; }

void EncoConfig::validate() const {
    auto need = [](bool ok, const char* field) {
        if (!ok) throw std::invalid_argument(fmt::format("enco config: {} must be positive", field));
    };
    need(hidden_size > 0, "hidden_size");
    need(batch_size > 0, "batch_size");
    need(lr_model > 0, "lr_model");
    need(weight_decay > 0, "weight_decay");
    need(dist_iters > 0, "dist_iters");
    need(graph_iters > 0, "graph_iters");
    need(graph_samples > 0, "graph_samples");
    need(epochs > 0, "epochs");
    need(lr_gamma > 0, "lr_gamma");
    need(lr_theta > 0, "lr_theta");
    need(lambda_sparse > 0, "lambda_sparse");
    if (!(leaky_slope > 0 && leaky_slope < 1)) throw std::invalid_argument("enco config: leaky_slope must be in (0, 1)");
    if (!(edge_prior > 0 && edge_prior < 1)) throw std::invalid_argument("enco config: edge_prior must be in (0, 1)");
    for (double b : {adam_beta1, adam_beta2, graph_beta2})
        if (!(b >= 0 && b < 1)) throw std::invalid_argument("enco config: Adam betas must be in [0, 1)");
}

double sigmoid(double logit) { return 1.0 / (1.0 + std::exp(-clamp_logit(logit))); }

void Workspace::reserve(std::size_t hidden, std::size_t states, std::size_t n) {
    pre.resize(hidden);
    act.resize(hidden);
    grad_hidden.resize(hidden);
    if (logits.size() < states) logits.resize(states);
    rows.reserve(n);
}

void EncoModel::set_gamma(std::size_t i, std::size_t j, double value) {
    if (i == j) throw std::invalid_argument("gamma diagonal is fixed");
    gamma_[i * n_ + j] = value;
}

void EncoModel::set_theta(std::size_t i, std::size_t j, double value) {
    if (i == j) throw std::invalid_argument("theta diagonal is fixed");
    theta_[i * n_ + j] = value;
    theta_[j * n_ + i] = -value;
}

double EncoModel::edge_prob(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    return sigmoid(gamma_[i * n_ + j]) * sigmoid(theta_[i * n_ + j]);
}

void EncoModel::forward(std::size_t j, const std::uint8_t* x, std::span<const std::uint32_t> parents,
                        Workspace& ws) const {
    const auto& k = simd::kernels();
    const NodeNet& net = nets_[j];
    const std::size_t h = net.hidden;
    ws.reserve(h, net.states, n_);
    std::copy_n(net.b1(), h, ws.pre.data());
    for (std::uint32_t i : parents) k.add(ws.pre.data(), net.w1_row(offsets_[i] + x[i]), h);
    k.leaky_relu(ws.act.data(), ws.pre.data(), h, slope_);
    const float* b2 = net.b2();
    for (std::size_t s = 0; s < net.states; ++s) ws.logits[s] = k.dot(net.w2_row(s), ws.act.data(), h) + b2[s];
}

double EncoModel::node_nll(std::size_t j, const std::uint8_t* x, std::span<const std::uint32_t> parents,
                           Workspace& ws) const {
    forward(j, x, parents, ws);
    double logp = ws.logits[x[j]] - log_sum_exp(ws.logits.data(), nets_[j].states);
    return -std::max(logp, kLogFloor);
}

void EncoModel::predictive(std::size_t j, const std::uint8_t* x, std::span<const std::uint32_t> parents,
                           Workspace& ws, std::vector<double>& probs) const {
    forward(j, x, parents, ws);
    const std::size_t s = nets_[j].states;
    double lse = log_sum_exp(ws.logits.data(), s);
    probs.resize(s);
    for (std::size_t t = 0; t < s; ++t) probs[t] = std::exp(ws.logits[t] - lse);
}

EncoModel init_model(const std::vector<std::size_t>& cardinalities, const EncoConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    EncoModel m;
    const std::size_t n = cardinalities.size();
    m.n_ = n;
    m.hidden_ = cfg.hidden_size;
    m.slope_ = static_cast<float>(cfg.leaky_slope);
    m.cards_ = cardinalities;
    m.offsets_.resize(n);
    std::size_t in_dim = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (cardinalities[i] < 1 || cardinalities[i] > 255)
            throw std::invalid_argument(fmt::format("node {} has unsupported cardinality {}", i, cardinalities[i]));
        m.offsets_[i] = in_dim;
        in_dim += cardinalities[i];
    }

    const double gamma0 = std::log(cfg.edge_prior / (1.0 - cfg.edge_prior));
    m.gamma_.assign(n * n, gamma0);
    m.theta_.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m.gamma_[i * n + i] = kExcludedLogit;
    m.gamma_m_.assign(n * n, 0.0);
    m.gamma_v_.assign(n * n, 0.0);
    m.theta_m_.assign(n * n, 0.0);
    m.theta_v_.assign(n * n, 0.0);
    m.gamma_t_.assign(n * n, 0);
    m.theta_t_.assign(n * n, 0);

    Rng rng(seed);
    m.nets_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        NodeNet& net = m.nets_[j];
        net.in_dim = in_dim;
        net.hidden = cfg.hidden_size;
        net.states = cardinalities[j];
        net.params.assign(net.b2_offset() + net.states, 0.0f);
        net.adam_m.assign(net.params.size(), 0.0f);
        net.adam_v.assign(net.params.size(), 0.0f);
        std::size_t fan_in = std::max<std::size_t>(1, in_dim - cardinalities[j]);
        float b1 = static_cast<float>(1.0 / std::sqrt(static_cast<double>(fan_in)));
        float b2 = static_cast<float>(1.0 / std::sqrt(static_cast<double>(net.hidden)));
        std::uniform_real_distribution<float> u1(-b1, b1), u2(-b2, b2);
        for (std::size_t p = 0; p < net.w2_offset(); ++p) net.params[p] = u1(rng);
        for (std::size_t p = net.w2_offset(); p < net.params.size(); ++p) net.params[p] = u2(rng);
    }
    return m;
}

graph::Digraph sample_graph_mask(const EncoModel& model, Rng& rng) {
    const std::size_t n = model.size();
    graph::Digraph mask(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && rng() < bernoulli_threshold(model.edge_prob(i, j))) mask.set(i, j);
    return mask;
}

graph::Digraph sample_acyclic_mask(const EncoModel& model, Rng& rng, std::size_t retries, MaskDiagnostics* diag) {
    graph::Digraph mask = sample_graph_mask(model, rng);
    std::size_t tries = 0;
    while (!graph::is_acyclic(mask) && tries < retries) {
        mask = sample_graph_mask(model, rng);
        ++tries;
    }
    std::size_t pruned = 0;
    const std::size_t n = model.size();
    while (!graph::is_acyclic(mask)) {
        auto reach = graph::transitive_closure(mask);
        std::size_t bi = 0, bj = 0;
        double best = std::numeric_limits<double>::infinity();
        for (auto [i, j] : mask.edges()) {
            if (!reach[j * n + i]) continue;  // edge not on a cycle
            double p = model.edge_prob(i, j);
            if (p < best) best = p, bi = i, bj = j;
        }
        mask.set(bi, bj, false);
        ++pruned;
    }
    if (diag) *diag = {tries, pruned};
    return mask;
}

void distribution_step(EncoModel& model, const scm::Dataset& batch, const EncoConfig& cfg, Rng& rng) {
    if (batch.empty()) return;
    const auto& k = simd::kernels();
    const std::size_t n = model.size();
    const std::size_t count = batch.size();

    std::vector<std::uint64_t> thresh(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) thresh[i * n + j] = bernoulli_threshold(model.edge_prob(i, j));

    Workspace ws;
    std::vector<float> grad;
    std::vector<float> dlogit;
    std::vector<std::uint32_t> parents;
    parents.reserve(n);
    const float inv_count = 1.0f / static_cast<float>(count);

    for (std::size_t j = 0; j < n; ++j) {
        NodeNet& net = model.nets_[j];
        const std::size_t h = net.hidden;
        grad.assign(net.params.size(), 0.0f);
        dlogit.resize(net.states);
        float* g_b1 = grad.data() + net.b1_offset();
        float* g_w2 = grad.data() + net.w2_offset();
        float* g_b2 = grad.data() + net.b2_offset();
        double loss = 0.0;

        for (std::size_t b = 0; b < count; ++b) {
            const std::uint8_t* x = batch.row(b).data();
            parents.clear();
            for (std::size_t i = 0; i < n; ++i)
                if (i != j && rng() < thresh[i * n + j]) parents.push_back(static_cast<std::uint32_t>(i));

            model.forward(j, x, parents, ws);
            double lse = log_sum_exp(ws.logits.data(), net.states);
            loss -= std::max(ws.logits[x[j]] - lse, kLogFloor);
            for (std::size_t s = 0; s < net.states; ++s)
                dlogit[s] = static_cast<float>(std::exp(ws.logits[s] - lse)) - (s == x[j] ? 1.0f : 0.0f);

            std::fill(ws.grad_hidden.begin(), ws.grad_hidden.end(), 0.0f);
            for (std::size_t s = 0; s < net.states; ++s) {
                g_b2[s] += dlogit[s];
                k.axpy(g_w2 + s * h, dlogit[s], ws.act.data(), h);
                k.axpy(ws.grad_hidden.data(), dlogit[s], net.w2_row(s), h);
            }
            k.leaky_relu_backward(ws.grad_hidden.data(), ws.pre.data(), h, model.slope_);
            k.add(g_b1, ws.grad_hidden.data(), h);
            for (std::uint32_t i : parents)
                k.add(grad.data() + (model.offsets_[i] + x[i]) * h, ws.grad_hidden.data(), h);
        }
        if (!std::isfinite(loss))
            throw DivergenceError(fmt::format("non-finite NLL for node {} in distribution step {}", j, net.steps + 1));

        k.scale(grad.data(), inv_count, grad.size());
        ++net.steps;
        if (cfg.model_optimizer == Optimizer::kAdam) {
            simd::AdamStep step{static_cast<float>(cfg.lr_model),
                                static_cast<float>(cfg.adam_beta1),
                                static_cast<float>(cfg.adam_beta2),
                                static_cast<float>(kAdamEps),
                                static_cast<float>(cfg.weight_decay),
                                static_cast<float>(1.0 - std::pow(cfg.adam_beta1, static_cast<double>(net.steps))),
                                static_cast<float>(1.0 - std::pow(cfg.adam_beta2, static_cast<double>(net.steps)))};
            k.adam_update(net.params.data(), grad.data(), net.adam_m.data(), net.adam_v.data(), grad.size(), step);
        } else {
            k.sgd_update(net.params.data(), grad.data(), grad.size(), static_cast<float>(cfg.lr_model),
                         static_cast<float>(cfg.weight_decay));
        }
    }
}

GraphGradient::GraphGradient(std::size_t size)
    : n(size),
      gamma(size * size, 0.0),
      theta(size * size, 0.0),
      gamma_set(size * size, 0),
      theta_set(size * size, 0),
      contrast(size * size, std::numeric_limits<double>::quiet_NaN()) {}

double GraphGradient::l2_norm(bool include_theta) const {
    double s = 0.0;
    for (std::size_t e = 0; e < gamma.size(); ++e) {
        if (gamma_set[e]) s += gamma[e] * gamma[e];
        if (include_theta && theta_set[e]) s += theta[e] * theta[e];
    }
    return std::sqrt(s);
}

GraphGradient graph_gradients(const EncoModel& model, const scm::Dataset& batch, std::span<const graph::Digraph> masks,
                              const EncoConfig& cfg) {
    const std::size_t n = model.size();
    const std::size_t kcount = masks.size();
    GraphGradient out(n);
    if (batch.empty() || kcount == 0) return out;
    const auto target = batch.target();
    const std::size_t count = batch.size();

    // Mean batch NLL of node j for each mask. Masks that agree on column j
    // share one evaluation, which is common once beliefs saturate.
    std::vector<double> nll(kcount * n, 0.0);
    Workspace ws;
    std::vector<std::uint32_t> parents;
    for (std::size_t j = 0; j < n; ++j) {
        if (target && *target == j) continue;
        std::map<std::vector<std::uint32_t>, double> seen;
        for (std::size_t k = 0; k < kcount; ++k) {
            mask_parents(masks[k], j, parents);
            auto it = seen.find(parents);
            if (it == seen.end()) {
                double total = 0.0;
                for (std::size_t b = 0; b < count; ++b) total += model.node_nll(j, batch.row(b).data(), parents, ws);
                it = seen.emplace(parents, total / static_cast<double>(count)).first;
            }
            nll[k * n + j] = it->second;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || (target && *target == j)) continue;
            double with = 0.0, without = 0.0;
            std::size_t n_with = 0, n_without = 0;
            for (std::size_t k = 0; k < kcount; ++k) {
                if (masks[k].has(i, j)) {
                    with += nll[k * n + j];
                    ++n_with;
                } else {
                    without += nll[k * n + j];
                    ++n_without;
                }
            }
            if (n_with == 0 || n_without == 0) continue;
            double c = with / static_cast<double>(n_with) - without / static_cast<double>(n_without);
            std::size_t e = i * n + j;
            out.contrast[e] = c;
            double g_gamma = model.gamma(i, j), g_theta = model.theta(i, j);
            out.gamma[e] = sigmoid_grad(g_gamma) * sigmoid(g_theta) * (c + cfg.lambda_sparse);
            out.gamma_set[e] = 1;
            if (!std::isfinite(out.gamma[e]))
                throw DivergenceError(fmt::format("non-finite gamma gradient on edge {} -> {}", i, j));
        }
    }

    if (target) {
        const std::size_t t = *target;
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t e = t * n + j;
            if (j == t || std::isnan(out.contrast[e])) continue;
            double g = sigmoid_grad(model.theta(t, j)) * sigmoid(model.gamma(t, j)) * out.contrast[e];
            if (!std::isfinite(g)) throw DivergenceError(fmt::format("non-finite theta gradient on edge {} -> {}", t, j));
            out.theta[e] = g;
            out.theta[j * n + t] = -g;
            out.theta_set[e] = out.theta_set[j * n + t] = 1;
        }
    }
    return out;
}

void apply_graph_update(EncoModel& model, const GraphGradient& grad, const EncoConfig& cfg) {
    const std::size_t n = model.size();
    const bool adam = cfg.graph_optimizer == Optimizer::kAdam;
    auto step = [&](double& param, double& m, double& v, std::uint32_t& t, double g, double lr, double beta2) {
        if (!adam) {
            param = clamp_logit(param - lr * g);
            return;
        }
        ++t;
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        double mhat = m / (1.0 - std::pow(cfg.adam_beta1, t));
        double vhat = v / (1.0 - std::pow(beta2, t));
        param = clamp_logit(param - lr * mhat / (std::sqrt(vhat) + kAdamEps));
    };

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t e = i * n + j;
            if (i == j || !grad.gamma_set[e]) continue;
            step(model.gamma_[e], model.gamma_m_[e], model.gamma_v_[e], model.gamma_t_[e], grad.gamma[e], cfg.lr_gamma,
                 cfg.graph_beta2);
        }
    }
    // theta is stored redundantly; the i < j entry is the free parameter.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            std::size_t e = i * n + j;
            if (!grad.theta_set[e]) continue;
            step(model.theta_[e], model.theta_m_[e], model.theta_v_[e], model.theta_t_[e], grad.theta[e], cfg.lr_theta,
                 cfg.adam_beta2);
            model.theta_[j * n + i] = -model.theta_[e];
        }
    }
}

void graph_step(EncoModel& model, const scm::Dataset& obs, std::span<const scm::Dataset> ints, const EncoConfig& cfg,
                Rng& rng) {
    std::vector<const scm::Dataset*> pool;
    for (const auto& d : ints)
        if (!d.empty()) pool.push_back(&d);
    if (cfg.obs_in_graph_pool && !obs.empty()) pool.insert(pool.begin(), &obs);
    if (pool.empty()) {
        if (obs.empty()) throw std::invalid_argument("graph_step needs at least one non-empty dataset");
        return;  // observational data only and excluded from graph fitting
    }

    std::uniform_int_distribution<std::size_t> choose(0, pool.size() - 1);
    const scm::Dataset& source = *pool[choose(rng)];
    scm::Dataset batch = draw_batch(source, cfg.batch_size, rng);
    std::vector<graph::Digraph> masks;
    masks.reserve(cfg.graph_samples);
    for (std::size_t k = 0; k < cfg.graph_samples; ++k) masks.push_back(sample_graph_mask(model, rng));
    apply_graph_update(model, graph_gradients(model, batch, masks, cfg), cfg);
}

void fit(EncoModel& model, const scm::Dataset& obs, std::span<const scm::Dataset> ints, const EncoConfig& cfg,
         std::uint64_t seed, std::size_t epochs) {
    if (epochs == 0) return;
    if (obs.empty()) throw std::invalid_argument("fit needs observational data");
    Rng rng(seed);
    for (std::size_t e = 0; e < epochs; ++e) {
        for (std::size_t f = 0; f < cfg.dist_iters; ++f)
            distribution_step(model, draw_batch(obs, cfg.batch_size, rng), cfg, rng);
        for (std::size_t g = 0; g < cfg.graph_iters; ++g) graph_step(model, obs, ints, cfg, rng);
    }
}

graph::EdgeBeliefs edge_probabilities(const EncoModel& model) {
    const std::size_t n = model.size();
    graph::EdgeBeliefs b(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) b(i, j) = model.edge_prob(i, j);
    return b;
}

graph::Thresholded extract_graph(const EncoModel& model) {
    return graph::threshold_graph(edge_probabilities(model), graph::kDefaultThreshold);
}

std::uint64_t belief_checksum(const graph::EdgeBeliefs& beliefs) {
    std::uint64_t h = 1469598103934665603ull;
    for (double p : beliefs.prob) {
        auto bits = std::bit_cast<std::uint64_t>(p);
        for (int s = 0; s < 64; s += 8) {
            h ^= (bits >> s) & 0xffu;
            h *= 1099511628211ull;
        }
    }
    return h;
}

scm::Dataset hallucinate(const EncoModel& model, const graph::Digraph& mask, std::optional<std::size_t> target,
                         std::size_t count, Rng& rng) {
    const std::size_t n = model.size();
    auto order = graph::topological_order(mask);
    if (!order) throw std::invalid_argument("hallucinate needs an acyclic mask");
    std::vector<std::vector<std::uint32_t>> parents(n);
    for (std::size_t j = 0; j < n; ++j) mask_parents(mask, j, parents[j]);

    scm::Dataset out(n, target);
    out.reserve(count);
    std::vector<std::uint8_t> row(n, 0);
    std::vector<double> probs;
    Workspace ws;
    for (std::size_t s = 0; s < count; ++s) {
        for (std::size_t j : *order) {
            const std::size_t card = model.cardinalities()[j];
            if (target && *target == j) {
                row[j] = static_cast<std::uint8_t>(std::uniform_int_distribution<std::size_t>(0, card - 1)(rng));
                continue;
            }
            model.predictive(j, row.data(), parents[j], ws, probs);
            double u = uniform01(rng), acc = 0.0;
            std::size_t v = card - 1;
            for (std::size_t t = 0; t < card; ++t) {
                acc += probs[t];
                if (u < acc) {
                    v = t;
                    break;
                }
            }
            row[j] = static_cast<std::uint8_t>(v);
        }
        out.append(row);
    }
    return out;
}

void save_checkpoint(std::ostream& out, const EncoModel& model) {
    nlohmann::json j;
    j["format"] = "legit-enco";
    j["version"] = kCheckpointVersion;
    j["n"] = model.n_;
    j["hidden"] = model.hidden_;
    j["leaky_slope"] = model.slope_;
    j["cardinalities"] = model.cards_;
    j["gamma"] = model.gamma_;
    j["theta"] = model.theta_;
    j["gamma_adam"] = {{"m", model.gamma_m_}, {"v", model.gamma_v_}, {"t", model.gamma_t_}};
    j["theta_adam"] = {{"m", model.theta_m_}, {"v", model.theta_v_}, {"t", model.theta_t_}};
    auto& nets = j["nets"] = nlohmann::json::array();
    for (const auto& net : model.nets_)
        nets.push_back({{"in_dim", net.in_dim},
                        {"hidden", net.hidden},
                        {"states", net.states},
                        {"steps", net.steps},
                        {"params", net.params},
                        {"adam_m", net.adam_m},
                        {"adam_v", net.adam_v}});
    out << j.dump();
}

EncoModel load_checkpoint(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(fmt::format("checkpoint: {}", e.what()));
    }
    if (j.value("format", "") != "legit-enco") throw std::runtime_error("checkpoint: not an ENCO model");
    if (j.value("version", 0) != kCheckpointVersion)
        throw std::runtime_error(fmt::format("checkpoint: unsupported version {}", j.value("version", 0)));

    EncoModel m;
    m.n_ = j.at("n").get<std::size_t>();
    m.hidden_ = j.at("hidden").get<std::size_t>();
    m.slope_ = j.at("leaky_slope").get<float>();
    m.cards_ = j.at("cardinalities").get<std::vector<std::size_t>>();
    m.gamma_ = j.at("gamma").get<std::vector<double>>();
    m.theta_ = j.at("theta").get<std::vector<double>>();
    m.gamma_m_ = j.at("gamma_adam").at("m").get<std::vector<double>>();
    m.gamma_v_ = j.at("gamma_adam").at("v").get<std::vector<double>>();
    m.gamma_t_ = j.at("gamma_adam").at("t").get<std::vector<std::uint32_t>>();
    m.theta_m_ = j.at("theta_adam").at("m").get<std::vector<double>>();
    m.theta_v_ = j.at("theta_adam").at("v").get<std::vector<double>>();
    m.theta_t_ = j.at("theta_adam").at("t").get<std::vector<std::uint32_t>>();
    const std::size_t nn = m.n_ * m.n_;
    for (auto* v : {&m.gamma_, &m.theta_, &m.gamma_m_, &m.gamma_v_, &m.theta_m_, &m.theta_v_})
        if (v->size() != nn) throw std::runtime_error("checkpoint: graph parameter shape mismatch");
    if (m.gamma_t_.size() != nn || m.theta_t_.size() != nn || m.cards_.size() != m.n_)
        throw std::runtime_error("checkpoint: shape mismatch");

    m.offsets_.resize(m.n_);
    std::size_t in_dim = 0;
    for (std::size_t i = 0; i < m.n_; ++i) m.offsets_[i] = std::exchange(in_dim, in_dim + m.cards_[i]);

    for (const auto& jn : j.at("nets")) {
        NodeNet net;
        net.in_dim = jn.at("in_dim").get<std::size_t>();
        net.hidden = jn.at("hidden").get<std::size_t>();
        net.states = jn.at("states").get<std::size_t>();
        net.steps = jn.at("steps").get<std::uint64_t>();
        net.params = jn.at("params").get<std::vector<float>>();
        net.adam_m = jn.at("adam_m").get<std::vector<float>>();
        net.adam_v = jn.at("adam_v").get<std::vector<float>>();
        std::size_t expect = net.b2_offset() + net.states;
        if (net.in_dim != in_dim || net.hidden != m.hidden_ || net.params.size() != expect ||
            net.adam_m.size() != expect || net.adam_v.size() != expect)
            throw std::runtime_error("checkpoint: perceptron shape mismatch");
        m.nets_.push_back(std::move(net));
    }
    if (m.nets_.size() != m.n_) throw std::runtime_error("checkpoint: wrong number of perceptrons");
    for (std::size_t i = 0; i < m.n_; ++i)
        if (m.nets_[i].states != m.cards_[i]) throw std::runtime_error("checkpoint: state count mismatch");
    return m;
}

}  // namespace legit::enco
