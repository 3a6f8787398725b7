#include "fleetsim/envserver.hpp"
#include "fleetsim/experiment.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace {

fleetsim::TcpEnvServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

void print_summary(const std::vector<fleetsim::PolicySummary>& rows) {
    fleetsim::write_summary(std::cout, rows);
}

}  // namespace

int main(int argc, char** argv) {
    using namespace fleetsim;

    CLI::App app{"fleetsim: fleet rebalancing simulator"};
    app.require_subcommand(1);

    std::string config = "canonical";
    std::string seeds_text = "0..9";
    std::string out_dir = "run";
    std::string policies_text = "nr";
    std::string recording;
    std::optional<double> scale;
    std::string actions;
    std::optional<std::int64_t> fleet;
    unsigned threads = 1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "config file, or 'canonical'")->capture_default_str();
        sub->add_option("--seeds", seeds_text, "seeds, e.g. 0..9 or 1,4,7")->capture_default_str();
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--threads", threads, "worker threads (0 = all cores)")->capture_default_str();
    };

    auto* run = app.add_subcommand("run", "run seeded episodes per policy");
    add_common(run);
    run->add_option("--policy", policies_text, "comma list of nr, rr, sar_star, t_sar, external, replay")
        ->capture_default_str();
    run->add_option("--recording", recording, "SAR* recording file or directory (t_sar, replay)");
    run->add_option("--scale", scale, "t_sar count scale (default: trip-count ratio)");
    run->add_option("--actions", actions, "action file for external");
    run->add_option("--fleet", fleet, "override the fleet size");

    std::vector<std::int64_t> sizes;
    std::vector<double> ratios;
    auto* sweep = app.add_subcommand("sweep-fleet", "mean wait against fleet size");
    add_common(sweep);
    sweep->add_option("--policy", policies_text, "comma list of policies")->capture_default_str();
    auto* sizes_opt = sweep->add_option("--sizes", sizes, "ascending fleet sizes")->delimiter(',');
    auto* ratios_opt = sweep->add_option("--ratios", ratios, "requests per vehicle, e.g. 10,15,20,30")->delimiter(',');
    sizes_opt->excludes(ratios_opt);
    sweep->add_option("--recording", recording, "SAR* recording file or directory");
    sweep->add_option("--scale", scale, "t_sar count scale");
    sweep->add_option("--actions", actions, "action file for external");

    std::string listen;
    bool use_stdio = false;
    std::vector<std::string> scenario_entries;
    auto* serve = app.add_subcommand("serve", "environment server (line-delimited JSON)");
    auto* listen_opt = serve->add_option("--listen", listen, "HOST:PORT");
    auto* stdio_opt = serve->add_flag("--stdio", use_stdio, "serve one session on stdin/stdout");
    listen_opt->excludes(stdio_opt);
    serve->add_option("--scenario", scenario_entries, "extra scenario as name=config (repeatable)");

    auto* record = app.add_subcommand("record-sar", "record SAR* rebalance matrices, one file per seed");
    add_common(record);

    std::string cdf_run;
    std::string cdf_out;
    auto* cdf = app.add_subcommand("export-cdf", "per-request wait CDF from a run directory");
    cdf->add_option("--run", cdf_run, "run directory holding waits_<policy>.csv")->required();
    cdf->add_option("--out", cdf_out, "output file (default <run>/cdf.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        PolicySpec shared;
        shared.recording = recording;
        shared.scale = scale;
        shared.actions = actions;

        if (*run) {
            auto cfg = resolve_config(config);
            if (fleet) cfg.fleet_size = *fleet;
            const auto policies = parse_policies(policies_text, shared);
            const auto seeds = parse_seeds(seeds_text);
            const auto batch = run_batch(cfg, policies, seeds, threads);
            write_batch(out_dir, cfg, policies, batch);
            print_summary(batch.summary);
        } else if (*sweep) {
            const auto cfg = resolve_config(config);
            const auto policies = parse_policies(policies_text, shared);
            const auto seeds = parse_seeds(seeds_text);
            if (sizes.empty() && ratios.empty()) throw SchemaError("give --sizes or --ratios");
            if (!ratios.empty()) sizes = sizes_for_ratios(mean_trip_count(cfg, seeds), ratios);
            const auto rows = sweep_fleet(cfg, sizes, policies, seeds, threads);
            std::filesystem::create_directories(out_dir);
            auto out = open_out(std::filesystem::path(out_dir) / "sweep.csv");
            write_sweep(out, rows);
            write_sweep(std::cout, rows);
        } else if (*serve) {
            auto catalog = ScenarioCatalog::with_builtin();
            for (const auto& e : scenario_entries) catalog.add_spec(e);
            auto shared_catalog = std::make_shared<const ScenarioCatalog>(std::move(catalog));
            if (use_stdio) {
                serve_stream(std::cin, std::cout, shared_catalog);
            } else {
                if (listen.empty()) throw SchemaError("give --listen HOST:PORT or --stdio");
                const auto [host, port] = parse_endpoint(listen);
                TcpEnvServer server(shared_catalog, host, port);
                g_server = &server;
                std::signal(SIGINT, on_signal);
                std::signal(SIGTERM, on_signal);
                std::cerr << "listening on " << host << ':' << server.port() << std::endl;
                server.run();
                g_server = nullptr;
            }
        } else if (*record) {
            const auto cfg = resolve_config(config);
            for (const auto& p : record_sar(cfg, parse_seeds(seeds_text), out_dir, threads)) std::cout << p.string() << '\n';
        } else if (*cdf) {
            std::cout << export_cdf(cdf_run, cdf_out).string() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
