#include "legit/runner.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

#include "legit/metrics.hpp"

namespace legit::runner {

std::string to_string(Refit refit) { return refit == Refit::kWarm ? "warm" : "cold"; }

Refit parse_refit(const std::string& name) {
    if (name == "warm") return Refit::kWarm;
    if (name == "cold") return Refit::kCold;
    throw std::invalid_argument(fmt::format("refit must be warm or cold, got '{}'", name));
}

void RunConfig::validate() const {
    if (rounds < 1) throw std::invalid_argument("rounds must be at least 1");
    if (batch < 1) throw std::invalid_argument("batch must be at least 1");
    if (obs_samples < 1) throw std::invalid_argument("obs must be at least 1");
    if (jobs < 1) throw std::invalid_argument("jobs must be at least 1");
    if (network.empty()) throw std::invalid_argument("network is required");
    enco.validate();
    if (ensemble.graphs < 1 || ensemble.samples_per < 1 || ensemble.estimator_graphs < 1)
        throw std::invalid_argument("ensemble sizes must be positive");
    if (strategy == "legit") legit_or_default().validate();
    if (llm.mode != "replay" && llm.mode != "live" && llm.mode != "cached")
        throw std::invalid_argument(fmt::format("llm.mode must be replay, live or cached, got '{}'", llm.mode));
}

schedule::LegitConfig RunConfig::legit_or_default() const {
    return legit ? *legit : schedule::dataset_defaults(netio::dataset_name(network));
}

namespace {

// ---- config keys ----

std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw std::invalid_argument(fmt::format("{}: expected a non-negative integer, got '{}'", key, v));
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used == v.size() && std::isfinite(out)) return out;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(fmt::format("{}: expected a number, got '{}'", key, v));
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument(fmt::format("{}: expected true or false, got '{}'", key, v));
}

std::vector<std::uint64_t> parse_seeds(const std::string& v) {
    std::string s = v;
    std::erase_if(s, [](char c) { return c == '[' || c == ']' || c == ' '; });
    std::vector<std::uint64_t> out;
    if (s.find(',') == std::string::npos && v.find('[') == std::string::npos) {
        std::size_t count = parse_size("seeds", s);
        for (std::size_t i = 0; i < count; ++i) out.push_back(i);
        return out;
    }
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(parse_size("seeds", tok));
    return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct KeyDef {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

schedule::LegitConfig& legit_of(RunConfig& c) {
    if (!c.legit) c.legit = c.legit_or_default();
    return *c.legit;
}

template <class Acc>
KeyDef size_key(std::string key, Acc acc) {
    return {key, [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_size(key, v); },
            [acc](const RunConfig& c) {
                RunConfig tmp = c;
                return fmt::format("{}", acc(tmp));
            }};
}

template <class Acc>
KeyDef double_key(std::string key, Acc acc) {
    return {key, [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_double(key, v); },
            [acc](const RunConfig& c) {
                RunConfig tmp = c;
                return fmt::format("{}", acc(tmp));
            }};
}

template <class Acc>
KeyDef bool_key(std::string key, Acc acc) {
    return {key, [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_bool(key, v); },
            [acc](const RunConfig& c) {
                RunConfig tmp = c;
                return fmt_bool(acc(tmp));
            }};
}

template <class Acc>
KeyDef string_key(std::string key, Acc acc) {
    return {key, [acc](RunConfig& c, const std::string& v) { acc(c) = v; },
            [acc](const RunConfig& c) {
                RunConfig tmp = c;
                return std::string(acc(tmp));
            }};
}

template <class Acc>
KeyDef path_key(std::string key, Acc acc) {
    return {key, [acc](RunConfig& c, const std::string& v) { acc(c) = v; },
            [acc](const RunConfig& c) {
                RunConfig tmp = c;
                return acc(tmp).string();
            }};
}

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = [] {
        std::vector<KeyDef> t;
        t.push_back(string_key("network", [](RunConfig& c) -> auto& { return c.network; }));
        t.push_back(string_key("strategy", [](RunConfig& c) -> auto& { return c.strategy; }));
        t.push_back(size_key("rounds", [](RunConfig& c) -> auto& { return c.rounds; }));
        t.push_back(size_key("batch", [](RunConfig& c) -> auto& { return c.batch; }));
        t.push_back(size_key("obs", [](RunConfig& c) -> auto& { return c.obs_samples; }));
        t.push_back({"seeds", [](RunConfig& c, const std::string& v) { c.seeds = parse_seeds(v); },
                     [](const RunConfig& c) { return fmt::format("[{}]", fmt::join(c.seeds, ", ")); }});
        t.push_back({"refit", [](RunConfig& c, const std::string& v) { c.refit = parse_refit(v); },
                     [](const RunConfig& c) { return to_string(c.refit); }});
        t.push_back(path_key("output_dir", [](RunConfig& c) -> auto& { return c.output_dir; }));
        t.push_back(size_key("jobs", [](RunConfig& c) -> auto& { return c.jobs; }));
        t.push_back(bool_key("record_seconds", [](RunConfig& c) -> auto& { return c.record_seconds; }));

        t.push_back(size_key("enco.hidden_size", [](RunConfig& c) -> auto& { return c.enco.hidden_size; }));
        t.push_back(double_key("enco.leaky_slope", [](RunConfig& c) -> auto& { return c.enco.leaky_slope; }));
        t.push_back(size_key("enco.batch_size", [](RunConfig& c) -> auto& { return c.enco.batch_size; }));
        t.push_back(double_key("enco.lr_model", [](RunConfig& c) -> auto& { return c.enco.lr_model; }));
        t.push_back(double_key("enco.weight_decay", [](RunConfig& c) -> auto& { return c.enco.weight_decay; }));
        t.push_back(size_key("enco.dist_iters", [](RunConfig& c) -> auto& { return c.enco.dist_iters; }));
        t.push_back(size_key("enco.graph_iters", [](RunConfig& c) -> auto& { return c.enco.graph_iters; }));
        t.push_back(size_key("enco.graph_samples", [](RunConfig& c) -> auto& { return c.enco.graph_samples; }));
        t.push_back(size_key("enco.epochs", [](RunConfig& c) -> auto& { return c.enco.epochs; }));
        t.push_back(size_key("enco.warm_epochs", [](RunConfig& c) -> auto& { return c.enco.warm_epochs; }));
        t.push_back(double_key("enco.lr_gamma", [](RunConfig& c) -> auto& { return c.enco.lr_gamma; }));
        t.push_back(double_key("enco.lr_theta", [](RunConfig& c) -> auto& { return c.enco.lr_theta; }));
        t.push_back(double_key("enco.lambda_sparse", [](RunConfig& c) -> auto& { return c.enco.lambda_sparse; }));
        t.push_back(double_key("enco.edge_prior", [](RunConfig& c) -> auto& { return c.enco.edge_prior; }));
        t.push_back({"enco.model_optimizer",
                     [](RunConfig& c, const std::string& v) { c.enco.model_optimizer = enco::parse_optimizer(v); },
                     [](const RunConfig& c) { return enco::to_string(c.enco.model_optimizer); }});
        t.push_back({"enco.graph_optimizer",
                     [](RunConfig& c, const std::string& v) { c.enco.graph_optimizer = enco::parse_optimizer(v); },
                     [](const RunConfig& c) { return enco::to_string(c.enco.graph_optimizer); }});
        t.push_back(double_key("enco.adam_beta1", [](RunConfig& c) -> auto& { return c.enco.adam_beta1; }));
        t.push_back(double_key("enco.adam_beta2", [](RunConfig& c) -> auto& { return c.enco.adam_beta2; }));
        t.push_back(double_key("enco.graph_beta2", [](RunConfig& c) -> auto& { return c.enco.graph_beta2; }));
        t.push_back(bool_key("enco.obs_in_graph_pool", [](RunConfig& c) -> auto& { return c.enco.obs_in_graph_pool; }));

        t.push_back(size_key("ensemble.graphs", [](RunConfig& c) -> auto& { return c.ensemble.graphs; }));
        t.push_back(size_key("ensemble.samples_per", [](RunConfig& c) -> auto& { return c.ensemble.samples_per; }));
        t.push_back(size_key("ensemble.estimator_graphs",
                             [](RunConfig& c) -> auto& { return c.ensemble.estimator_graphs; }));
        t.push_back(bool_key("ensemble.include_theta", [](RunConfig& c) -> auto& { return c.ensemble.include_theta; }));
        t.push_back(size_key("ensemble.acyclic_retries",
                             [](RunConfig& c) -> auto& { return c.ensemble.acyclic_retries; }));

        t.push_back(size_key("legit.t_warmup", [](RunConfig& c) -> auto& { return legit_of(c).t_warmup; }));
        t.push_back(size_key("legit.t_bootstrapped", [](RunConfig& c) -> auto& { return legit_of(c).t_bootstrapped; }));
        t.push_back(string_key("legit.base_strategy", [](RunConfig& c) -> auto& { return legit_of(c).base_strategy; }));
        t.push_back(double_key("legit.threshold", [](RunConfig& c) -> auto& { return legit_of(c).threshold; }));
        t.push_back(size_key("legit.prompt_targets", [](RunConfig& c) -> auto& { return legit_of(c).prompt_targets; }));
        t.push_back(size_key("legit.sc_samples", [](RunConfig& c) -> auto& { return legit_of(c).sc_samples; }));
        t.push_back({"legit.vote_depth",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "none" || v == "all" || v.empty())
                             legit_of(c).vote_depth.reset();
                         else
                             legit_of(c).vote_depth = parse_size("legit.vote_depth", v);
                     },
                     [](const RunConfig& c) {
                         auto l = c.legit_or_default();
                         return l.vote_depth ? fmt::format("{}", *l.vote_depth) : std::string("none");
                     }});

        t.push_back(string_key("llm.mode", [](RunConfig& c) -> auto& { return c.llm.mode; }));
        t.push_back(string_key("llm.base_url", [](RunConfig& c) -> auto& { return c.llm.base_url; }));
        t.push_back(string_key("llm.path", [](RunConfig& c) -> auto& { return c.llm.path; }));
        t.push_back(string_key("llm.api_key_env", [](RunConfig& c) -> auto& { return c.llm.api_key_env; }));
        t.push_back(string_key("llm.model", [](RunConfig& c) -> auto& { return c.llm.model; }));
        t.push_back(double_key("llm.temperature", [](RunConfig& c) -> auto& { return c.llm.temperature; }));
        t.push_back(double_key("llm.timeout_s", [](RunConfig& c) -> auto& { return c.llm.timeout_s; }));
        t.push_back({"llm.retries",
                     [](RunConfig& c, const std::string& v) { c.llm.retries = static_cast<int>(parse_size("llm.retries", v)); },
                     [](const RunConfig& c) { return fmt::format("{}", c.llm.retries); }});
        t.push_back({"llm.backoff_ms",
                     [](RunConfig& c, const std::string& v) {
                         c.llm.backoff_ms = static_cast<int>(parse_size("llm.backoff_ms", v));
                     },
                     [](const RunConfig& c) { return fmt::format("{}", c.llm.backoff_ms); }});
        t.push_back(path_key("llm.cache_dir", [](RunConfig& c) -> auto& { return c.llm.cache_dir; }));
        t.push_back(path_key("llm.fixtures_dir", [](RunConfig& c) -> auto& { return c.llm.fixtures_dir; }));
        return t;
    }();
    return table;
}

std::string canonical_key(const std::string& key) {
    static const std::map<std::string, std::string> aliases{
        {"rounds_T", "rounds"},       {"batch_per_round", "batch"}, {"obs_samples", "obs"},
        {"legit.belief_threshold", "legit.threshold"}, {"out", "output_dir"}};
    auto it = aliases.find(key);
    return it == aliases.end() ? key : it->second;
}

struct Entry {
    std::string key;
    std::string value;
    std::vector<std::string> items;  // sequence values, element-wise
    bool sequence = false;
};

std::string scalar_of(const YAML::Node& node) { return node.IsNull() ? std::string() : node.as<std::string>(); }

// Values are converted while iterating; yaml-cpp iterator nodes must not be kept.
void flatten(const YAML::Node& node, const std::string& prefix, std::vector<Entry>& out) {
    for (auto it = node.begin(); it != node.end(); ++it) {
        const std::string name = it->first.as<std::string>();
        const std::string key = prefix.empty() ? name : prefix + "." + name;
        const YAML::Node value = it->second;
        if (value.IsMap()) {
            flatten(value, key, out);
        } else if (value.IsSequence()) {
            Entry e{key, {}, {}, true};
            for (std::size_t i = 0; i < value.size(); ++i) e.items.push_back(scalar_of(value[i]));
            e.value = fmt::format("[{}]", fmt::join(e.items, ","));
            out.push_back(std::move(e));
        } else if (value.IsScalar() || value.IsNull()) {
            out.push_back(Entry{key, scalar_of(value), {}, false});
        } else {
            throw std::invalid_argument(fmt::format("{}: unsupported value", key));
        }
    }
}

}  // namespace

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    const std::string k = canonical_key(key);
    for (const auto& def : key_table()) {
        if (def.key == k) {
            def.set(cfg, value);
            return;
        }
    }
    throw std::invalid_argument(fmt::format("unknown config key '{}'", key));
}

std::vector<RunConfig> parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw std::invalid_argument(fmt::format("config: {}", e.what()));
    }
    RunConfig base;
    std::vector<std::string> strategies;
    if (root.IsNull()) return {base};
    if (!root.IsMap()) throw std::invalid_argument("config: expected key/value pairs");
    std::vector<Entry> entries;
    flatten(root, "", entries);

    // `network` first, so dataset-specific legit defaults come from the right network.
    std::stable_partition(entries.begin(), entries.end(), [](const Entry& e) { return e.key == "network"; });
    std::stable_partition(entries.begin(), entries.end(), [](const Entry& e) { return e.key.rfind("legit.", 0) != 0; });
    for (const auto& e : entries) {
        if (e.key == "strategy" || e.key == "strategies") {
            if (e.sequence)
                strategies.insert(strategies.end(), e.items.begin(), e.items.end());
            else
                strategies.push_back(e.value);
            continue;
        }
        apply_key(base, e.key, e.value);
    }
    if (strategies.empty()) strategies.push_back(base.strategy);
    std::vector<RunConfig> out;
    for (const auto& s : strategies) {
        RunConfig c = base;
        c.strategy = s;
        if (strategies.size() > 1) c.output_dir = base.output_dir / s;
        c.validate();
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<RunConfig> load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot read config {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string echo_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& def : key_table()) {
        if (def.key.rfind("legit.", 0) == 0 && cfg.strategy != "legit" && !cfg.legit) continue;
        out += fmt::format("{}: {}\n", def.key, def.get(cfg));
    }
    return out;
}

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    s.n = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size()));
    return s;
}

namespace {

std::optional<double> metric_of(const RoundRecord& r, const std::string& metric) {
    if (metric == "shd") return static_cast<double>(r.shd);
    if (metric == "sid") return static_cast<double>(r.sid);
    if (metric == "bsf") return r.bsf;
    throw std::invalid_argument(fmt::format("unknown metric '{}'", metric));
}

}  // namespace

MetricSummary RunResult::final_metric(const std::string& metric) const {
    std::vector<double> values;
    for (const auto& s : seeds) {
        if (s.failed || s.records.size() != cfg.rounds) continue;
        if (auto v = metric_of(s.records.back(), metric)) values.push_back(*v);
    }
    return summarize(values);
}

MetricSummary RunResult::round_metric(const std::string& metric, std::size_t round) const {
    std::vector<double> values;
    for (const auto& s : seeds) {
        if (round == 0 || s.records.size() < round) continue;
        if (auto v = metric_of(s.records[round - 1], metric)) values.push_back(*v);
    }
    return summarize(values);
}

std::size_t RunResult::failed_count() const {
    return static_cast<std::size_t>(std::count_if(seeds.begin(), seeds.end(), [](const auto& s) { return s.failed; }));
}

// ---- the online loop ----

namespace {

std::mutex g_cache_mutex;
std::map<std::string, enco::EncoModel> g_initial_fits;

std::string enco_fingerprint(const RunConfig& cfg) {
    std::string out;
    for (const auto& def : key_table())
        if (def.key.rfind("enco.", 0) == 0 && def.key != "enco.warm_epochs") out += def.get(cfg) + ";";
    return out;
}

graph::Digraph truth_of(const netio::BayesNet& net) {
    return graph::Digraph::from_edges(net.size(), net.edges);
}

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void clear_initial_fit_cache() {
    std::lock_guard lock(g_cache_mutex);
    g_initial_fits.clear();
}

void score_graph(const graph::Digraph& truth, const graph::Thresholded& learned, RoundRecord& record) {
    record.shd = metrics::shd(truth, learned.graph);
    record.sid = metrics::sid(truth, learned.graph);
    record.bsf = metrics::bsf(truth, learned.graph);
    record.cyclic = learned.cyclic;
}

OnlineDiscovery::OnlineDiscovery(RunConfig cfg, std::shared_ptr<const netio::BayesNet> net, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      net_(std::move(net)),
      seed_(seed),
      names_(net_->node_names()),
      truth_(truth_of(*net_)),
      sampler_(*net_) {
    cfg_.validate();
    for (std::size_t i = 0; i < net_->size(); ++i) ints_.emplace_back(net_->size(), i);
}

void OnlineDiscovery::initialize() {
    obs_ = sampler_.observational(cfg_.obs_samples, derive_seed(seed_, Stream::kObservational));
    const std::string key =
        fmt::format("{}|{}|{}|{}|{}", cfg_.network, net_->name, seed_, cfg_.obs_samples, enco_fingerprint(cfg_));
    {
        std::lock_guard lock(g_cache_mutex);
        auto it = g_initial_fits.find(key);
        if (it != g_initial_fits.end()) model_ = it->second;
    }
    if (!model_) {
        auto model = enco::init_model(net_->cardinalities(), cfg_.enco, derive_seed(seed_, Stream::kModelInit));
        enco::fit(model, obs_, {}, cfg_.enco, derive_seed(seed_, Stream::kFit, 0), cfg_.enco.epochs);
        std::lock_guard lock(g_cache_mutex);
        g_initial_fits.emplace(key, model);
        model_ = std::move(model);
    }
    history_.clear();
    records_.clear();
    initialized_ = true;
}

strategies::TargetingState OnlineDiscovery::targeting_state(Rng& rng) const {
    strategies::TargetingState st;
    st.round = history_.size() + 1;
    st.model = &*model_;
    st.history = &history_;
    st.node_names = &names_;
    st.rng = &rng;
    return st;
}

std::size_t OnlineDiscovery::interventional_samples() const {
    std::size_t total = 0;
    for (const auto& d : ints_) total += d.size();
    return total;
}

RoundRecord OnlineDiscovery::step(std::size_t target) {
    return finish_round(target, 0.0, "external");
}

RoundRecord OnlineDiscovery::step(strategies::Strategy& strategy) {
    if (!initialized_) throw std::logic_error("initialize() must run before step()");
    if (done()) throw std::logic_error(fmt::format("all {} rounds already used", cfg_.rounds));
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(seed_, Stream::kStrategy, history_.size() + 1));
    const std::size_t target = strategy.next(targeting_state(rng));
    std::string phase = strategy.name();
    if (auto* l = dynamic_cast<schedule::LegitStrategy*>(&strategy)) phase = schedule::to_string(l->last_phase());
    return finish_round(target, elapsed(t0), phase);
}

RoundRecord OnlineDiscovery::finish_round(std::size_t target, double seconds, const std::string& phase) {
    if (!initialized_) throw std::logic_error("initialize() must run before step()");
    if (done()) throw std::logic_error(fmt::format("all {} rounds already used", cfg_.rounds));
    if (target >= names_.size()) throw std::out_of_range(fmt::format("target {} is not a node", target));
    auto t0 = std::chrono::steady_clock::now();
    const std::size_t r = history_.size() + 1;
    ints_[target].append(sampler_.interventional(target, cfg_.batch, derive_seed(seed_, Stream::kInterventional, r)));
    history_.push_back(target);
    if (cfg_.refit == Refit::kWarm) {
        enco::fit(*model_, obs_, ints_, cfg_.enco, derive_seed(seed_, Stream::kFit, r), cfg_.enco.warm_epochs);
    } else {
        auto fresh = enco::init_model(net_->cardinalities(), cfg_.enco, derive_seed(seed_, Stream::kModelInit));
        enco::fit(fresh, obs_, ints_, cfg_.enco, derive_seed(seed_, Stream::kFit, r), cfg_.enco.epochs);
        model_ = std::move(fresh);
    }
    RoundRecord rec;
    rec.round = r;
    rec.target = target;
    rec.phase = phase;
    score_graph(truth_, enco::extract_graph(*model_), rec);
    rec.checksum = enco::belief_checksum(enco::edge_probabilities(*model_));
    rec.seconds = seconds + elapsed(t0);
    records_.push_back(rec);
    return rec;
}

void OnlineDiscovery::restore(const std::vector<std::size_t>& history, std::vector<RoundRecord> records,
                              enco::EncoModel model) {
    if (history.size() > cfg_.rounds) throw std::invalid_argument("restored history exceeds the round budget");
    if (model.size() != names_.size()) throw std::invalid_argument("restored model does not match the network");
    obs_ = sampler_.observational(cfg_.obs_samples, derive_seed(seed_, Stream::kObservational));
    for (std::size_t i = 0; i < ints_.size(); ++i) ints_[i] = scm::Dataset(names_.size(), i);
    for (std::size_t r = 1; r <= history.size(); ++r) {
        const std::size_t t = history[r - 1];
        if (t >= names_.size()) throw std::invalid_argument("restored history names an unknown node");
        ints_[t].append(sampler_.interventional(t, cfg_.batch, derive_seed(seed_, Stream::kInterventional, r)));
    }
    history_ = history;
    records_ = std::move(records);
    model_ = std::move(model);
    initialized_ = true;
}

std::unique_ptr<strategies::Strategy> make_run_strategy(const RunConfig& cfg, const netio::BayesNet& net,
                                                        std::uint64_t seed, llm::LlmClient* client,
                                                        strategies::ExternalChannel* channel) {
    strategies::StrategyOptions opts;
    opts.ensemble = cfg.ensemble;
    opts.enco = cfg.enco;
    opts.channel = channel;
    opts.truth = truth_of(net);
    if (cfg.strategy != "legit") return strategies::make_strategy(cfg.strategy, opts);
    if (!client) throw std::invalid_argument("legit needs an LLM client");
    auto lc = cfg.legit_or_default();
    const std::string dataset = netio::dataset_name(cfg.network);
    auto descs = netio::load_descriptions(dataset);
    return std::make_unique<schedule::LegitStrategy>(lc, *client, std::move(descs), dataset,
                                                     strategies::make_strategy(lc.base_strategy, opts), seed);
}

namespace {

void check_fixtures(const RunConfig& cfg) {
    if (cfg.strategy != "legit" || cfg.llm.mode != "replay") return;
    auto dir = cfg.llm.fixtures_dir.empty() ? netio::data_dir() / "llm_fixtures" : cfg.llm.fixtures_dir;
    auto file = dir / (netio::dataset_name(cfg.network) + ".json");
    if (!std::filesystem::exists(file))
        throw std::invalid_argument(fmt::format("replay mode needs fixtures at {}", file.string()));
}

}  // namespace

SeedResult run_online_discovery(const RunConfig& cfg, std::uint64_t seed, strategies::ExternalChannel* channel) {
    SeedResult out;
    out.seed = seed;
    std::unique_ptr<OnlineDiscovery> od;
    try {
        check_fixtures(cfg);
        auto net = std::make_shared<const netio::BayesNet>(netio::load_network(cfg.network));
        std::unique_ptr<llm::LlmClient> client;
        if (cfg.strategy == "legit") client = llm::make_client(cfg.llm, cfg.transport);
        od = std::make_unique<OnlineDiscovery>(cfg, net, seed);
        auto strategy = make_run_strategy(cfg, *net, seed, client.get(), channel);
        od->initialize();
        while (!od->done()) {
            auto rec = od->step(*strategy);
            spdlog::debug("seed {} round {} target {} shd {}", seed, rec.round, od->node_names()[rec.target], rec.shd);
        }
        out.records = od->records();
        auto th = enco::extract_graph(od->model());
        out.final_graph = th.graph;
        out.final_beliefs = enco::edge_probabilities(od->model());
        spdlog::info("{} seed {}: final shd {} sid {}", cfg.strategy, seed, out.records.back().shd,
                     out.records.back().sid);
    } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
        if (od) {
            out.records = od->records();
            if (od->initialized()) {
                out.final_graph = enco::extract_graph(od->model()).graph;
                out.final_beliefs = enco::edge_probabilities(od->model());
            }
        }
        spdlog::error("{} seed {} failed: {}", cfg.strategy, seed, e.what());
    }
    if (auto counting = std::dynamic_pointer_cast<llm::CountingTransport>(cfg.transport))
        out.llm_network_calls = counting->calls();
    return out;
}

RunResult run_suite(const RunConfig& cfg, strategies::ExternalChannel* channel) {
    cfg.validate();
    if (cfg.seeds.empty()) throw std::invalid_argument("suite needs at least one seed");
    check_fixtures(cfg);
    RunResult result;
    result.cfg = cfg;
    result.node_names = netio::load_network(cfg.network).node_names();
    result.seeds.resize(cfg.seeds.size());

    // An external channel is a single conversation, so its seeds run one at a time.
    const std::size_t workers = channel ? 1 : std::min(cfg.jobs, cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < cfg.seeds.size(); i = next++)
            result.seeds[i] = run_online_discovery(cfg, cfg.seeds[i], channel);
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (result.failed_count() == result.seeds.size())
        throw std::runtime_error(fmt::format("every seed failed; first error: {}", result.seeds.front().error));
    return result;
}

// ---- persistence ----

std::string rounds_csv(const RunResult& result) {
    std::string out = "seed,round,target,shd,sid,bsf,seconds,phase,refit,checksum,cyclic\n";
    const std::string refit = to_string(result.cfg.refit);
    for (const auto& s : result.seeds) {
        for (const auto& r : s.records) {
            const std::string& target = r.target < result.node_names.size() ? result.node_names[r.target] : "?";
            out += fmt::format("{},{},{},{},{},{},{},{},{},{:016x},{}\n", s.seed, r.round, target, r.shd, r.sid,
                               r.bsf ? fmt::format("{:.6f}", *r.bsf) : std::string(),
                               result.cfg.record_seconds ? fmt::format("{:.3f}", r.seconds) : std::string("NA"),
                               r.phase, refit, r.checksum, r.cyclic ? 1 : 0);
        }
    }
    return out;
}

std::string summary_csv(const RunResult& result) {
    std::string out = "strategy,metric,mean,std,n\n";
    for (const char* m : {"shd", "sid", "bsf"}) {
        auto s = result.final_metric(m);
        if (s.n == 0) continue;
        out += fmt::format("{},{},{:.6f},{:.6f},{}\n", result.cfg.strategy, m, s.mean, s.std, s.n);
    }
    if (auto failed = result.failed_count())
        out += fmt::format("{},failed_seeds,{},0,{}\n", result.cfg.strategy, failed, result.seeds.size());
    return out;
}

std::string trajectory_csv(const RunResult& result) {
    std::string out = "strategy,round,metric,mean,std,n\n";
    for (std::size_t r = 1; r <= result.cfg.rounds; ++r) {
        for (const char* m : {"shd", "sid", "bsf"}) {
            auto s = result.round_metric(m, r);
            if (s.n == 0) continue;
            out += fmt::format("{},{},{},{:.6f},{:.6f},{}\n", result.cfg.strategy, r, m, s.mean, s.std, s.n);
        }
    }
    return out;
}

std::string targets_hist_csv(const RunResult& result, std::size_t window) {
    if (window == 0) throw std::invalid_argument("window must be positive");
    std::string out = "strategy,window_start,window_end,node,count\n";
    const std::size_t n = result.node_names.size();
    for (std::size_t start = 1; start <= result.cfg.rounds; start += window) {
        const std::size_t end = std::min(start + window - 1, result.cfg.rounds);
        std::vector<std::size_t> counts(n, 0);
        for (const auto& s : result.seeds)
            for (const auto& r : s.records)
                if (r.round >= start && r.round <= end && r.target < n) ++counts[r.target];
        for (std::size_t v = 0; v < n; ++v)
            out += fmt::format("{},{},{},{},{}\n", result.cfg.strategy, start - 1, end - 1, result.node_names[v],
                               counts[v]);
    }
    return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    out << content;
    out.close();
    if (!out) throw std::runtime_error(fmt::format("write failed for {}", path.string()));
}

}  // namespace

void write_results(const RunResult& result, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "final_graphs", ec);
    if (ec) throw std::runtime_error(fmt::format("cannot create {}: {}", (dir / "final_graphs").string(), ec.message()));

    write_file(dir / "config.echo", echo_config(result.cfg));
    write_file(dir / "rounds.csv", rounds_csv(result));
    write_file(dir / "summary.csv", summary_csv(result));
    write_file(dir / "trajectory.csv", trajectory_csv(result));
    write_file(dir / "targets_hist.csv", targets_hist_csv(result));

    std::string timings = "seed,round,seconds\n";
    std::string failures = "seed,rounds_completed,error\n";
    for (const auto& s : result.seeds) {
        for (const auto& r : s.records) timings += fmt::format("{},{},{:.3f}\n", s.seed, r.round, r.seconds);
        if (s.failed) {
            std::string msg = s.error;
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            std::replace(msg.begin(), msg.end(), ',', ';');
            failures += fmt::format("{},{},{}\n", s.seed, s.records.size(), msg);
        }
        if (s.final_graph.size() == 0) continue;
        std::ostringstream g, b;
        graph::write_matrix_csv(g, s.final_graph);
        graph::write_matrix_csv(b, s.final_beliefs.n, s.final_beliefs.prob);
        write_file(dir / "final_graphs" / fmt::format("seed_{}.csv", s.seed), g.str());
        write_file(dir / "final_graphs" / fmt::format("seed_{}_beliefs.csv", s.seed), b.str());
    }
    write_file(dir / "timings.csv", timings);
    if (result.failed_count() > 0) write_file(dir / "failures.csv", failures);
}

}  // namespace legit::runner
