// Echo-probes one connection of the simulated stack and prints the one-way
// latency estimate.

#include <avatar/sim/stack.hpp>

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

using namespace avatar;

int main(int argc, char** argv)
{
    CLI::App app{"bus-probe: one-way latency of a bus connection (RTT / 2)"};
    std::string config_path;
    std::uint64_t seed = 0;
    bus::ConnectionId conn = 0;
    int probes = 100;
    double window = 5.0;
    bool list = false, as_json = false;
    app.add_option("--config", config_path, "JSON config for link profiles")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "seed for link impairment");
    auto* conn_opt = app.add_option("--conn", conn, "connection id, see --list");
    app.add_option("--probes", probes, "number of echo probes")->check(CLI::PositiveNumber);
    app.add_option("--window", window, "seconds the probes are spread over")->check(CLI::PositiveNumber);
    app.add_flag("--list", list, "list connections and exit");
    app.add_flag("--json", as_json, "print the statistics as JSON");
    CLI11_PARSE(app, argc, argv);

    try
    {
        const sim::SimConfig config = config_path.empty() ? sim::SimConfig{} : sim::SimConfig::load(config_path);
        const auto model = model::build_icub3_model();
        sim::AvatarStack stack(model, config, seed);
        auto& b = stack.bus();

        if (list)
        {
            for (auto id : b.connections())
            {
                const auto info = b.connection(id);
                const auto p = b.link_profile(id);
                std::cout << std::setw(4) << id << "  " << info.src << " -> " << info.dst << "  ["
                          << bus::carrier_name(info.carrier) << (info.relay.empty() ? "" : " via " + info.relay)
                          << "]  " << p.one_way_delay_ms << " ms +/- " << p.jitter_ms << ", loss " << p.loss
                          << '\n';
            }
            return 0;
        }
        if (conn_opt->count() == 0)
        {
            std::cerr << "bus-probe: --conn is required (see --list)\n";
            return 2;
        }

        const auto info = b.connection(conn);
        const auto stats = b.measure_latency(conn, probes, window);
        if (as_json)
        {
            nlohmann::ordered_json j{{"conn", conn},        {"src", info.src},           {"dst", info.dst},
                                     {"samples", stats.samples}, {"mean_ms", stats.mean_ms}, {"p95_ms", stats.p95_ms},
                                     {"max_ms", stats.max_ms},   {"window_s", stats.window_s}};
            std::cout << j.dump(2) << '\n';
        }
        else
        {
            std::cout << std::fixed << std::setprecision(2) << "conn " << conn << " " << info.src << " -> "
                      << info.dst << ": " << stats.samples << "/" << probes << " echoes, mean " << stats.mean_ms
                      << " ms, p95 " << stats.p95_ms << " ms, max " << stats.max_ms << " ms\n";
        }
        return 0;
    }
    catch (const std::exception& e)
    {
        std::cerr << "bus-probe: " << e.what() << '\n';
        return 2;
    }
}
