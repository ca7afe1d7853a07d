#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfmatch/datasets.hpp"
#include "rfmatch/matchers.hpp"
#include "rfmatch/mlp.hpp"

namespace rfmatch {

enum class Profile { desk, paper };

std::string to_string(Profile profile);
Profile parse_profile(const std::string& name);

struct RunPaths {
    std::filesystem::path circuit;  // empty = committed reference circuit
    std::filesystem::path output_dir = "out";
    std::filesystem::path sweep;
    std::filesystem::path inverse;
    std::filesystem::path recbm;
    std::filesystem::path ims;
    std::filesystem::path scenarios;
};

struct SweepSettings {
    double f_step_ghz = 0.05;
    double c_step_pf = 0.2;
};

struct EvalSettings {
    std::size_t test_samples = 10000;
    std::uint64_t seed = 4242;
};

struct ScenarioSettings {
    std::size_t count = 500;
    std::uint64_t seed = 7;
    double noise_sigma = 0.0;
};

enum class SurrogateKind { model, oracle };

struct MatchSettings {
    std::vector<Strategy> strategies{Strategy::sapso, Strategy::adadam, Strategy::ims,
                                     Strategy::grid, Strategy::ideal};
    int repeats = 5;
    double compliance_threshold = 0.2;
    SurrogateKind surrogate = SurrogateKind::model;
    double grid_step_pf = 0.05;
    SapsoConfig sapso;
    AdamMatchConfig adadam;
};

/// Everything a command needs. Profile presets fill the defaults; a JSON
/// run-config file overrides them and command-line flags override the file.
struct RunConfig {
    Profile profile = Profile::desk;
    std::uint64_t seed = 42;
    int workers = 1;
    RunPaths paths;
    SweepSettings sweep;
    double width_scale = 0.125;
    TrainingConfig train_recbm;
    TrainingConfig train_ims;
    double ims_label_scale = 1e13;  // labels in farads; network sees pF x 10
    EvalSettings eval;
    ScenarioSettings scenarios;
    MatchSettings match;

    static RunConfig preset(Profile profile);
    /// Preset of the file's "profile" (default desk) with the file's fields applied.
    static RunConfig from_json(const nlohmann::json& doc);
    static RunConfig load(const std::filesystem::path& path);
    /// Applies the fields present in `doc` on top of this config.
    void merge(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    /// FNV-1a of the canonical JSON dump.
    std::uint64_t hash() const;
    void validate() const;

    SweepSpec sweep_spec(const CircuitTopology& topology) const;
};

/// Circuit named by the config, or the committed reference circuit.
CircuitTopology load_topology(const RunConfig& config);

// ---------------------------------------------------------------- reports

inline constexpr int kReportVersion = 1;

struct ScenarioRow {
    std::uint64_t scenario_id = 0;
    double f_hz = 0.0;
    double cp = 0.0;  // solution of the first repeat
    double cs = 0.0;
    double predicted_psi = 0.0;
    double true_psi = 0.0;
    int repeats = 1;
    /// Headline per-scenario magnitude: mean over repeats.
    double tuned_psi = 0.0;
    double psi_median = 0.0;
    double psi_sd = 0.0;
    double evaluations = 0.0;  // mean over repeats
    double iterations = 0.0;
    bool infeasible = false;
    std::string error;  // non-empty when the scenario failed
};

struct Summary {
    std::size_t scenarios = 0;
    std::size_t failed = 0;
    std::size_t compliant = 0;
    double compliance = 0.0;
    double mean = 0.0;
    double median = 0.0;
    double sd = 0.0;
    double mean_evaluations = 0.0;
    double median_evaluations = 0.0;
    double max_evaluations = 0.0;
};

struct StrategyReport {
    Strategy strategy = Strategy::sapso;
    std::vector<ScenarioRow> rows;  // sorted by scenario id
    std::vector<double> wall_seconds;  // per scenario, all repeats summed
};

struct RunReport {
    double noise_sigma = 0.0;
    double compliance_threshold = 0.2;
    std::vector<StrategyReport> strategies;
    nlohmann::json manifest;
};

double mean_of(const std::vector<double>& v);
double median_of(std::vector<double> v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sd_of(const std::vector<double>& v);

/// Statistics over the rows. Failed rows count as non-compliant and are left
/// out of the magnitude statistics.
Summary summarize(const std::vector<ScenarioRow>& rows, double threshold);

struct MatchInputs {
    const CircuitTopology* truth = nullptr;
    const MlpModel* recbm = nullptr;  // required unless the surrogate is the oracle
    const MlpModel* ims = nullptr;
};

/// Runs every selected strategy on every scenario. Scenarios are fanned out
/// over `config.workers` threads; rows come back in scenario order, so the
/// report does not depend on the worker count. Per-scenario failures are
/// recorded in the row and the run continues.
RunReport run_matching(const RunConfig& config, const ScenarioSuite& suite, const MatchInputs& inputs);

/// Writes summary.csv, rows_<s>.csv, ecdf_tuned_<s>.csv,
/// ecdf_evaluations_<s>.csv (plus SAPSO median/SD ECDFs) and manifest.json.
/// Wall-clock times go to timing.csv, the only file that varies between
/// identical runs.
void write_run_report(const RunReport& report, const std::filesystem::path& dir);
RunReport read_run_report(const std::filesystem::path& dir);

/// Consolidates run directories into table_stats.csv and noise_sweep.csv.
/// Throws ValidationError when a headline number cannot be recomputed from
/// its rows or the report versions disagree. With `inference_cost` set,
/// table_stats.csv gains a mean_cost column (mean evaluations x cost).
void consolidate_reports(const std::vector<std::filesystem::path>& runs,
                         const std::filesystem::path& out_dir,
                         std::optional<double> inference_cost = std::nullopt);

void write_ecdf_csv(const std::vector<EcdfPoint>& points, const std::filesystem::path& path);
void write_loss_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);
/// One row per output dimension, then an overall row.
void write_eval_report(const SurrogateErrorReport& report, const std::vector<std::string>& names,
                       const std::filesystem::path& dir);

/// Manifest skeleton: command, profile, seeds, config and its hash.
nlohmann::json make_manifest(const RunConfig& config, const std::string& command);
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

struct TrainedModel {
    MlpModel model;
    TrainingResult result;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// RECBM-Net of the config's width scale, normalisation fitted to the sweep
/// inputs, trained with `config.train_recbm`.
TrainedModel train_recbm_model(const RunConfig& config, const Dataset& sweep,
                               std::uint64_t circuit_fingerprint, const EpochCallback& on_epoch = {});
/// IMS-Net on an inverse dataset, paired with `recbm`.
TrainedModel train_ims_model(const RunConfig& config, const Dataset& inverse, const MlpModel& recbm,
                             const EpochCallback& on_epoch = {});

/// Random off-lattice test set for surrogate evaluation: inputs (f, cp, cs)
/// uniform over the band and box, labels from the exact circuit.
std::pair<Matrix, Matrix> random_sweep_samples(const CircuitTopology& topology, std::size_t n,
                                               std::uint64_t seed);

}  // namespace rfmatch
