// Command-line front end: run, suite, metrics, prompt, serve.
#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "legit/graph.hpp"
#include "legit/legit.hpp"
#include "legit/metrics.hpp"
#include "legit/netio.hpp"
#include "legit/runner.hpp"
#include "legit/service.hpp"
#include "legit/simd/kernels.hpp"

using namespace legit;

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int run_configs(const std::vector<runner::RunConfig>& cfgs, strategies::ExternalChannel* channel) {
    int failures = 0;
    for (const auto& cfg : cfgs) {
        auto result = runner::run_suite(cfg, channel);
        runner::write_results(result, cfg.output_dir);
        for (const char* m : {"shd", "sid", "bsf"}) {
            auto s = result.final_metric(m);
            fmt::print("{} {} {:.4f} +/- {:.4f} (n={})\n", cfg.strategy, m, s.mean, s.std, s.n);
        }
        fmt::print("results in {}\n", cfg.output_dir.string());
        failures += static_cast<int>(result.failed_count());
    }
    return failures > 0 ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online causal discovery with interchangeable intervention-targeting strategies"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

    // run
    auto* run = app.add_subcommand("run", "Run one strategy over a set of seeds");
    std::string config_file, network, strategy, llm_mode, out, refit;
    std::size_t rounds = 0, batch = 0, obs = 0, seeds = 0, jobs = 0;
    std::vector<std::string> sets;
    bool record_seconds = false;
    run->add_option("--config", config_file, "Base config file (flat YAML)");
    run->add_option("--network", network, "Bundled network name or .bif path");
    run->add_option("--strategy", strategy, "random|round_robin|degree_prob|git|ait|cbed|legit|external");
    run->add_option("--rounds", rounds, "Rounds T");
    run->add_option("--batch", batch, "Interventional samples per round");
    run->add_option("--obs", obs, "Observational samples");
    run->add_option("--seeds", seeds, "Seeds 0..n-1");
    run->add_option("--llm-mode", llm_mode, "replay|cached|live");
    run->add_option("--refit", refit, "warm|cold");
    run->add_option("--jobs", jobs, "Seeds run concurrently");
    run->add_option("--out", out, "Output directory");
    run->add_option("--set", sets, "Extra dotted key=value, repeatable (e.g. enco.warm_epochs=3)");
    run->add_flag("--record-seconds", record_seconds, "Write wall-clock seconds into rounds.csv");

    // suite
    auto* suite = app.add_subcommand("suite", "Run every strategy listed in a config file");
    std::string suite_config, suite_out;
    suite->add_option("--config", suite_config, "Config file")->required();
    suite->add_option("--out", suite_out, "Output directory (overrides output_dir)");

    // metrics
    auto* met = app.add_subcommand("metrics", "Score a learned adjacency matrix against a network");
    std::string truth_arg, learned_arg;
    double tau = graph::kDefaultThreshold;
    met->add_option("--truth", truth_arg, "Bundled network name or .bif path")->required();
    met->add_option("--learned", learned_arg, "Matrix CSV (0/1 or probabilities)")->required();
    met->add_option("--threshold", tau, "Edge threshold for probability matrices");

    // prompt
    auto* prompt = app.add_subcommand("prompt", "Print the warmup prompt for a dataset");
    std::string prompt_net = "asia";
    std::size_t prompt_k = 0;
    prompt->add_option("--network", prompt_net, "Bundled dataset name");
    prompt->add_option("--k", prompt_k, "Targets requested (dataset default when 0)");

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP session API for externally chosen interventions");
    std::string host = "127.0.0.1", state_dir = ".legit_sessions", cors = "*", serve_config;
    int port = 8080;
    std::size_t capacity = 8;
    bool reveal = false;
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port");
    serve->add_option("--capacity", capacity, "Maximum live sessions");
    serve->add_option("--state-dir", state_dir, "Session checkpoints (empty disables persistence)");
    serve->add_option("--cors-origin", cors, "Allowed origin");
    serve->add_option("--config", serve_config, "Session defaults (flat YAML)");
    serve->add_flag("--reveal-truth", reveal, "Demo mode: include metrics in session state by default");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));
    spdlog::debug("kernels: {}", simd::isa_name(simd::kernels().isa));

    try {
        if (*run) {
            runner::RunConfig cfg;
            if (!config_file.empty()) cfg = runner::load_config(config_file).at(0);
            if (!network.empty()) runner::apply_key(cfg, "network", network);
            if (!strategy.empty()) cfg.strategy = strategy;
            if (rounds) cfg.rounds = rounds;
            if (batch) cfg.batch = batch;
            if (obs) cfg.obs_samples = obs;
            if (seeds) runner::apply_key(cfg, "seeds", std::to_string(seeds));
            if (!llm_mode.empty()) cfg.llm.mode = llm_mode;
            if (!refit.empty()) runner::apply_key(cfg, "refit", refit);
            if (jobs) cfg.jobs = jobs;
            if (!out.empty()) cfg.output_dir = out;
            if (record_seconds) cfg.record_seconds = true;
            for (const auto& kv : sets) {
                auto eq = kv.find('=');
                if (eq == std::string::npos) throw std::invalid_argument(fmt::format("--set expects key=value, got '{}'", kv));
                runner::apply_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
            }
            cfg.validate();
            std::unique_ptr<strategies::StreamChannel> channel;
            if (cfg.strategy == "external") channel = std::make_unique<strategies::StreamChannel>(std::cin, std::cout);
            return run_configs({cfg}, channel.get());
        }
        if (*suite) {
            auto cfgs = runner::load_config(suite_config);
            if (!suite_out.empty()) {
                for (auto& c : cfgs)
                    c.output_dir = cfgs.size() > 1 ? std::filesystem::path(suite_out) / c.strategy
                                                   : std::filesystem::path(suite_out);
            }
            return run_configs(cfgs, nullptr);
        }
        if (*met) {
            auto net = netio::load_network(truth_arg);
            std::ifstream in(learned_arg);
            if (!in) throw std::runtime_error(fmt::format("cannot read {}", learned_arg));
            auto learned = graph::read_graph_csv(in, tau);
            if (learned.size() != net.size())
                throw std::invalid_argument(fmt::format("matrix is {}x{} but {} has {} nodes", learned.size(),
                                                        learned.size(), truth_arg, net.size()));
            auto truth = graph::Digraph::from_edges(net.size(), net.edges);
            auto b = metrics::bsf(truth, learned);
            fmt::print("{},{},{}\n", metrics::shd(truth, learned), metrics::sid(truth, learned),
                       b ? fmt::format("{:.6f}", *b) : std::string());
            return 0;
        }
        if (*prompt) {
            auto net = netio::load_network(prompt_net);
            auto descs = netio::load_descriptions(netio::dataset_name(prompt_net));
            auto lc = schedule::dataset_defaults(netio::dataset_name(prompt_net));
            std::size_t k = prompt_k ? prompt_k : std::min(net.size(), std::max(lc.t_warmup + lc.t_bootstrapped, lc.prompt_targets));
            std::vector<std::size_t> all(net.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            auto spec = schedule::prompt_spec(descs, net.node_names(), all, k, llm::Stage::kWarmup);
            fmt::print("{}", llm::build_prompt(spec, std::nullopt).at(0).content);
            return 0;
        }
        if (*serve) {
            service::ServiceConfig sc;
            sc.capacity = capacity;
            sc.state_dir = state_dir;
            sc.cors_origin = cors;
            sc.reveal_truth_default = reveal;
            if (!serve_config.empty()) sc.defaults = runner::load_config(serve_config).at(0);
            service::SessionManager manager(sc);
            httplib::Server server;
            service::install_routes(server, manager);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            spdlog::info("listening on {}:{}", host, port);
            if (!server.listen(host, port)) throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
            g_server = nullptr;
            return 0;
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
