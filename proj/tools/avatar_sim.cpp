// Runs a scenario against the full stack on virtual time and prints the report.

#include <avatar/sim/stack.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace avatar;

int main(int argc, char** argv)
{
    CLI::App app{"avatar-sim: scripted telexistence scenarios on the simulated avatar"};
    std::string config_path, scenario_path, record_dir;
    std::uint64_t seed = 0;
    bool dump_config = false, dump_model = false;
    app.add_option("--config", config_path, "JSON config; defaults apply to missing keys")->check(CLI::ExistingFile);
    app.add_option("--scenario", scenario_path, "scenario file, one event per line")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "seed for link impairment and sensor noise");
    app.add_option("--record", record_dir, "directory for the trace, diagnostics and report");
    app.add_flag("--dump-config", dump_config, "print the default config and exit");
    app.add_flag("--dump-model", dump_model, "print the robot model file and exit");
    CLI11_PARSE(app, argc, argv);

    if (dump_config)
    {
        std::cout << sim::SimConfig{}.to_json().dump(2) << '\n';
        return 0;
    }
    if (dump_model)
    {
        std::cout << model::build_icub3_model().to_text() << '\n';
        return 0;
    }
    if (scenario_path.empty())
    {
        std::cerr << "--scenario is required\n";
        return 2;
    }

    try
    {
        const sim::SimConfig config = config_path.empty() ? sim::SimConfig{} : sim::SimConfig::load(config_path);
        const sim::Scenario scenario = sim::load_scenario(scenario_path);
        const auto model = model::build_icub3_model();
        sim::AvatarStack stack(model, config, seed);
        if (!record_dir.empty())
            stack.record_to(record_dir);

        const sim::ScenarioReport report = stack.run_scenario(scenario);
        const auto json = report.to_json();
        if (!record_dir.empty())
        {
            std::ofstream(std::filesystem::path(record_dir) / "report.json") << json.dump(2) << '\n';
            std::ofstream(std::filesystem::path(record_dir) / "config.json") << config.to_json().dump(2) << '\n';
        }
        std::cout << json.dump(2) << '\n';
        for (const auto& c : report.checkpoints)
            std::cerr << (c.passed() ? "ok    " : "FAILED") << "  checkpoint " << c.name << " @ " << c.t << " s\n";
        std::cerr << (report.passed() ? "scenario passed" : "scenario FAILED") << '\n';
        return report.passed() ? 0 : 1;
    }
    catch (const sim::SimError& e)
    {
        std::cerr << "avatar-sim: " << e.what() << "\n";
        return e.code() == sim::SimErrc::ScenarioAbort ? 3 : 2;
    }
    catch (const std::exception& e)
    {
        std::cerr << "avatar-sim: " << e.what() << '\n';
        return 2;
    }
}
