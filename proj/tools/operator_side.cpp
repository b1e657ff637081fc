// Operator side of the loop: replays a recorded session through retargeting,
// or serves the console gateway in front of a live simulated avatar.

#include <avatar/gateway/server.hpp>
#include <avatar/sim/stack.hpp>

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

using namespace avatar;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

nlohmann::ordered_json summary(const sim::AvatarStack& stack)
{
    const auto lat = stack.latency_all();
    nlohmann::ordered_json faults = nlohmann::ordered_json::array();
    for (const auto& f : stack.faults())
        faults.push_back({{"t", f.t}, {"source", f.source}, {"what", f.what}});
    return {{"time", stack.time()},
            {"ticks", stack.ticks()},
            {"faults", std::move(faults)},
            {"latency", {{"samples", lat.samples}, {"mean_ms", lat.mean_ms}, {"p95_ms", lat.p95_ms}}},
            {"haptic_commands", stack.haptics().size()},
            {"frames_delivered", stack.frames_delivered()},
            {"min_zmp_margin_ref", stack.min_zmp_margin_ref()},
            {"min_zmp_margin_executed", stack.min_zmp_margin_executed()}};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"operator-side: session replay or console gateway"};
    std::string session_path, config_path, record_dir, host = "127.0.0.1";
    int port = -1;
    std::uint64_t seed = 0;
    double duration = 0.0;
    auto* replay = app.add_option("--replay", session_path, "recorded operator session")->check(CLI::ExistingFile);
    auto* gw = app.add_option("--gateway", port, "serve the console on this port (0 picks one)")
                   ->check(CLI::Range(0, 65535));
    replay->excludes(gw);
    app.add_option("--host", host, "gateway bind address");
    app.add_option("--config", config_path, "JSON config")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "seed for link impairment and sensor noise");
    app.add_option("--duration", duration, "seconds to run; replay defaults to the session length plus 2 s, "
                                           "the gateway runs until interrupted")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--record", record_dir, "directory for the trace, diagnostics and summary");
    CLI11_PARSE(app, argc, argv);

    if (replay->count() == 0 && gw->count() == 0)
    {
        std::cerr << "operator-side: one of --replay, --gateway is required\n";
        return 2;
    }

    try
    {
        const sim::SimConfig config = config_path.empty() ? sim::SimConfig{} : sim::SimConfig::load(config_path);
        const auto model = model::build_icub3_model();
        sim::AvatarStack stack(model, config, seed);
        if (!record_dir.empty())
            stack.record_to(record_dir);

        if (replay->count())
        {
            auto frames = retargeting::read_session_file(session_path);
            const double length = frames.empty() ? 0.0 : frames.back().timestamp - frames.front().timestamp;
            stack.start_replay(std::move(frames));
            stack.run_for(duration > 0.0 ? duration : length + 2.0);
        }
        else
        {
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            gateway::GatewayService service(
                stack, {static_cast<std::uint16_t>(port), host, config.gateway.telemetry_hz});
            service.start();
            std::cerr << "gateway listening on " << host << ":" << service.port() << std::endl;
            service.run_realtime();
            const auto start = std::chrono::steady_clock::now();
            while (!g_interrupted && !service.error())
            {
                if (duration > 0.0 &&
                    std::chrono::steady_clock::now() - start >= std::chrono::duration<double>(duration))
                    break;
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
            }
            service.stop();
            if (auto err = service.error())
                std::rethrow_exception(err);
        }

        const auto j = summary(stack);
        if (!record_dir.empty())
            std::ofstream(std::filesystem::path(record_dir) / "summary.json") << j.dump(2) << '\n';
        std::cout << j.dump(2) << '\n';
        return stack.faults().empty() ? 0 : 1;
    }
    catch (const gateway::GatewayError& e)
    {
        std::cerr << "operator-side: " << e.what() << '\n';
        return 2;
    }
    catch (const sim::SimError& e)
    {
        std::cerr << "operator-side: " << e.what() << '\n';
        return 3;
    }
    catch (const std::exception& e)
    {
        std::cerr << "operator-side: " << e.what() << '\n';
        return 2;
    }
}
