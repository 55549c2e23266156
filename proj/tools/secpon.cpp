// secpon <experiment> --config <file> --out <dir> [--seed N] [--jobs N] [--check]
//
// Exit status: 0 success, 2 configuration or usage error, 3 acceptance
// threshold violated (only with --check), 1 any other failure.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "secpon/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitCheck = 3;

nlohmann::json load_config(const std::string& path)
{
    if (path.empty())
        return nlohmann::json::object();
    std::ifstream is(path);
    if (!is)
        throw secpon::exp::ConfigError("cannot open config file " + path);
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw secpon::exp::ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Secure coherent PON physical-layer experiments"};
    app.set_version_flag("--version", secpon::exp::version_string());
    std::string experiment, config, out = "results";
    std::optional<std::uint64_t> seed;
    unsigned jobs = 1;
    bool check = false;
    std::string names;
    for (const auto& n : secpon::exp::experiment_names())
        names += (names.empty() ? "" : ", ") + n;
    app.add_option("experiment", experiment, "One of: " + names)->required();
    app.add_option("--config", config, "JSON parameter file");
    app.add_option("--out", out, "Output directory")->capture_default_str();
    app.add_option("--seed", seed, "Master seed (overrides the config)");
    app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_flag("--check", check, "Exit with status 3 if any acceptance check fails");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        const auto spec = secpon::exp::ExperimentSpec::make(experiment, load_config(config), seed, jobs);
        const auto t0 = std::chrono::steady_clock::now();
        const auto result = secpon::exp::run_experiment(spec);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        secpon::exp::write_results(result, spec, out, wall);
        std::cout << experiment << ": " << result.table.rows.size() << " rows written to " << out << " in " << wall
                  << " s\n";
        for (const auto& c : result.checks)
            std::cout << "  " << (c.pass ? "ok   " : "FAIL ") << c.name << ": " << c.detail << '\n';
        if (check && !result.all_pass())
            return kExitCheck;
        return 0;
    } catch (const secpon::exp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
