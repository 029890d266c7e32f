#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gwperc/errors.hpp"
#include "gwperc/harness.hpp"

namespace {

using gwperc::ExperimentConfig;

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<unsigned> threads;
    std::optional<int> n;
    std::optional<int> n_max;
    std::optional<std::uint64_t> runs;
    std::optional<std::uint64_t> trees;
    std::optional<int> m_w;
    std::vector<double> theta;
    std::string distribution;
    std::optional<std::uint64_t> node_cap;
    bool write_samples = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "master seed (overrides config and GWPERC_SEED)");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

void add_overrides(CLI::App* cmd, Overrides& o) {
    add_common(cmd, o);
    cmd->add_option("--n", o.n, "level n");
    cmd->add_option("--n-max", o.n_max, "deepest level explored");
    cmd->add_option("--runs", o.runs, "runs, samples or paths per tree");
    cmd->add_option("--trees", o.trees, "number of trees");
    cmd->add_option("--m-w", o.m_w, "depth of the W estimate");
    cmd->add_option("--theta", o.theta, "theta grid")->expected(0, -1);
    cmd->add_option("--distribution", o.distribution, R"(offspring law as JSON, e.g. {"kind":"zeta_tail","alpha":1.5})");
    cmd->add_option("--node-cap", o.node_cap, "vertices per run before it is aborted");
    cmd->add_flag("--write-samples", o.write_samples, "one record per IIC sample");
}

ExperimentConfig resolve(ExperimentConfig config, const Overrides& o) {
    if (!o.config.empty()) {
        const auto kind = config.kind;
        config = ExperimentConfig::load(o.config);
        if (config.kind != kind)
            throw gwperc::ConfigError("config kind '" + gwperc::to_string(config.kind) + "' does not match subcommand");
    }
    config.apply_environment();
    if (o.seed) config.seed = *o.seed;
    if (!o.out.empty()) config.output = o.out;
    if (o.threads) config.threads = *o.threads;
    if (o.n) config.n = *o.n;
    if (o.n_max) config.n_max = *o.n_max;
    if (o.runs) config.runs = *o.runs;
    if (o.trees) config.trees = *o.trees;
    if (o.m_w) config.m_W = *o.m_w;
    if (!o.theta.empty()) config.theta = o.theta;
    if (!o.distribution.empty()) {
        try {
            config.distribution = nlohmann::json::parse(o.distribution);
        } catch (const nlohmann::json::exception& e) {
            throw gwperc::ConfigError(std::string("--distribution is not valid JSON: ") + e.what());
        }
    }
    if (o.node_cap) config.node_cap = *o.node_cap;
    if (o.write_samples) config.write_samples = true;
    if (config.output.empty()) config.output = "gwperc-out/" + (config.name.empty() ? gwperc::to_string(config.kind) : config.name);
    return config;
}

void print_criteria(const gwperc::ExperimentReport& report) {
    for (const auto& c : report.criteria)
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.id << "  " << c.description << '\n';
}

int run_one(const ExperimentConfig& config) {
    const auto report = gwperc::run_experiment(config);
    std::cout << gwperc::to_string(config.kind) << ": report written to " << config.output << " ("
              << report.wall_seconds << " s)\n";
    print_criteria(report);
    return gwperc::exit_code(report);
}

const std::vector<std::string> kRunAll = {"property-suite",  "annealed-yaglom", "quenched-yaglom",
                                          "csbp-marginal",   "csbp-transition", "annealed-stable",
                                          "iic-marginal",    "connector-diagnostic"};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Critical percolation on supercritical Galton-Watson trees"};
    app.require_subcommand(1);

    std::vector<std::pair<CLI::App*, gwperc::ExperimentKind>> commands;
    Overrides overrides;
    for (auto kind : gwperc::all_kinds()) {
        CLI::App* cmd = app.add_subcommand(gwperc::to_string(kind), "run the " + gwperc::to_string(kind) + " experiment");
        add_overrides(cmd, overrides);
        commands.emplace_back(cmd, kind);
    }
    Overrides all;
    CLI::App* run_all = app.add_subcommand("run-all", "run every acceptance preset");
    add_common(run_all, all);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : gwperc::kExitConfig;
    }

    try {
        if (run_all->parsed()) {
            if (!all.config.empty()) throw gwperc::ConfigError("run-all uses the built-in presets; --config is not accepted");
            const std::string root = all.out.empty() ? "gwperc-out" : all.out;
            int code = 0;
            for (const auto& name : kRunAll) {
                ExperimentConfig config = gwperc::preset(name);
                Overrides o;
                o.seed = all.seed;
                o.threads = all.threads;
                o.out = root + "/" + name;
                config = resolve(config, o);
                if (run_one(config) != 0) code = gwperc::kExitFailure;
            }
            return code;
        }
        for (const auto& [cmd, kind] : commands)
            if (cmd->parsed()) return run_one(resolve(gwperc::default_config(kind), overrides));
    } catch (const gwperc::ConfigError& e) {
        std::cerr << e.what() << '\n';
        return gwperc::kExitConfig;
    } catch (const gwperc::IoError& e) {
        std::cerr << e.what() << '\n';
        return gwperc::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return gwperc::kExitFailure;
    }
    return gwperc::kExitConfig;
}
