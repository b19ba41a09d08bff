// ksctl <task> --config <file> [--out dir] [--seed n]

#include "CLI11.hpp"
#include "ksc/runner.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Null-control toolkit for the Kuramoto-Sivashinsky equation on cylinders"};
    std::string task, config, out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> names;
    for (const auto& [n, t] : ksc::task_names()) names.push_back(n);
    app.add_option("task", task, "Task to run")->required()->check(CLI::IsMember(names));
    app.add_option("--config,-c", config, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--out,-o", out_dir, "Output root (overrides the config)");
    app.add_option("--seed,-s", seed, "Random seed (overrides the config)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : ksc::kExitConfig;
    }

    ksc::Scenario sc;
    try {
        sc = ksc::parse_config(config, *ksc::parse_task(task));
    } catch (const ksc::Error& e) {
        std::cerr << "ksctl: " << e.what() << '\n';
        return ksc::exit_code_for(e.code());
    }
    if (seed) sc.seed = *seed;
    const std::string root = out_dir.empty() ? sc.output : out_dir;
    auto res = ksc::run_scenario(sc, root);
    std::cout << res.dir.string() << '\n';
    if (res.exit_code != 0) std::cerr << "ksctl: " << res.message << '\n';
    return res.exit_code;
}
