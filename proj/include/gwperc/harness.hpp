#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace gwperc {

enum class ExperimentKind {
    Constants,
    AnnealedSurvival,
    AnnealedYaglom,
    QuenchedSurvival,
    QuenchedYaglom,
    CsbpMarginal,
    CsbpTransition,
    IicMarginal,
    ConnectorDiagnostic,
    PropertySuite,
};

std::string to_string(ExperimentKind kind);
/// Throws ConfigError for unknown names.
ExperimentKind parse_kind(const std::string& name);
std::vector<ExperimentKind> all_kinds();

inline constexpr int kReportFormatVersion = 1;

/// One experiment. `runs` is the number of percolation runs per tree, IIC
/// samples per tree, CSBP paths, or target surviving runs for the connector
/// diagnostic, depending on the kind.
struct ExperimentConfig {
    std::string name;
    ExperimentKind kind = ExperimentKind::Constants;
    nlohmann::json distribution = {{"kind", "explicit"}, {"pmf", {{"1", 0.8}, {"2", 0.2}}}};
    int n = 256;
    /// Deepest level explored; -1 picks 2n for quenched-yaglom and n otherwise.
    int n_max = -1;
    std::uint64_t runs = 1'000'000;
    std::uint64_t trees = 1;
    int m_W = 40;
    std::vector<double> theta = {0.5, 1.0, 2.0};
    /// Extra survival levels for the survival curve (n is always included).
    std::vector<int> levels;
    /// Transition bin centers in units of n^{-beta} Y_n; empty = median bin.
    std::vector<double> bins;
    double bin_half_width = 0.25;
    std::optional<std::uint64_t> seed;
    std::string output;
    unsigned threads = 0;  // 0 = hardware concurrency
    std::uint64_t node_cap = 10'000'000;
    double csbp_a = 1.0;
    double csbp_dt = 1.0;
    /// Also write one LDJSON line per IIC sample or CSBP path.
    bool write_samples = false;

    int effective_n_max() const noexcept;
    unsigned effective_threads() const noexcept;

    /// Throws ConfigError on any out-of-range field or a missing seed.
    void validate() const;

    nlohmann::json to_json() const;
    /// Unknown keys and malformed values raise ConfigError.
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
    /// Applies GWPERC_SEED when it is set.
    void apply_environment();
};

/// Named presets encoding the acceptance experiments.
std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);
/// Default preset of a kind (the one its CLI subcommand uses).
ExperimentConfig default_config(ExperimentKind kind);

struct CriterionResult {
    std::string id;
    std::string description;
    bool passed = false;
    nlohmann::json details;

    nlohmann::json to_json() const;
};

struct PlotTable {
    std::string file;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct ExperimentReport {
    ExperimentConfig config;
    nlohmann::json constants;
    nlohmann::json results;
    nlohmann::json targets;
    std::vector<CriterionResult> criteria;
    std::vector<PlotTable> plots;
    /// One JSON record per tree (or per sample when requested).
    std::vector<nlohmann::json> records;
    double wall_seconds = 0.0;

    bool passed() const noexcept;
    /// Everything except the wall clock, so identical (config, seed) pairs
    /// give identical reports.
    nlohmann::json to_json() const;
};

/// Runs the experiment. When config.output is set, writes report.json,
/// records.ldjson, timing.json and the plot CSVs there.
ExperimentReport run_experiment(const ExperimentConfig& config);

/// Writes every plot table of the report as CSV into `dir`. Throws IoError.
void emit_plot_data(const ExperimentReport& report, const std::filesystem::path& dir);
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

/// 0 when every criterion passed, 1 otherwise.
int exit_code(const ExperimentReport& report) noexcept;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

}  // namespace gwperc
