#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rfmatch/circuit.hpp"
#include "rfmatch/mlp.hpp"
#include "rfmatch/random.hpp"

namespace rfmatch {

/// Inclusive lattice lo, lo+step, ..., hi.
struct AxisSpec {
    double lo = 0.0;
    double hi = 0.0;
    double step = 1.0;

    void validate(const char* name) const;
    std::size_t count() const;
    double at(std::size_t i) const;
};

struct SweepSpec {
    AxisSpec f_hz;
    AxisSpec cp_farads;
    AxisSpec cs_farads;

    void validate() const;
    std::size_t size() const { return f_hz.count() * cp_farads.count() * cs_farads.count(); }

    /// 0.05 GHz and 0.2 pF steps over the topology's band and tunable box.
    static SweepSpec desk(const CircuitTopology& topology);
    /// 0.02 GHz and 0.02 pF steps.
    static SweepSpec paper(const CircuitTopology& topology);
};

enum class DatasetKind { sweep, inverse };

std::string to_string(DatasetKind kind);

/// Row-per-sample table. Sweep rows are (f_hz, cp_f, cs_f, 8 S components);
/// inverse rows are (f_hz, gl_re, gl_im, cp_f, cs_f).
struct Dataset {
    DatasetKind kind = DatasetKind::sweep;
    std::vector<std::string> columns;
    Matrix rows;  // samples x columns
    std::size_t skipped = 0;
    std::map<std::string, std::string> metadata;

    std::size_t size() const { return static_cast<std::size_t>(rows.rows()); }
    int input_columns() const { return 3; }
    Matrix inputs() const { return rows.leftCols(3); }
    Matrix targets() const { return rows.rightCols(rows.cols() - 3); }
    Dataset subset(const std::vector<std::size_t>& indices) const;
};

std::vector<std::string> sweep_columns();
std::vector<std::string> inverse_columns();

/// Exact oracle at every lattice point, f-major then cp then cs. Singular
/// points are skipped and counted. `workers` > 1 fans out over frequencies;
/// the result does not depend on the worker count.
Dataset generate_sweep(const CircuitTopology& topology, const SweepSpec& spec, int workers = 1);

/// For every lattice point the model's S prediction is turned into the load
/// that would be perfectly matched there:
/// gl = -s11 / (s12 s21 - s11 s22). Rows with |denominator| < 1e-9 are skipped.
Dataset generate_inverse_dataset(const MlpModel& recbm, const SweepSpec& spec);

struct Scenario {
    std::uint64_t id = 0;
    double f_hz = 0.0;
    double cp_opt = 0.0;  // farads
    double cs_opt = 0.0;
    double cp_now = 0.0;
    double cs_now = 0.0;
    Complex gin{};  // measured, after noise
    Complex gl{};   // hidden true load reflection
    double noise_sigma = 0.0;
};

struct ScenarioSuite {
    std::uint64_t seed = 0;
    double noise_sigma = 0.0;
    std::uint64_t circuit_fingerprint = 0;
    std::vector<Scenario> scenarios;
};

/// Scenario `id` depends only on (seed, id); its noise draw comes from a
/// separate stream and scales linearly with sigma, so suites built with the
/// same seed at different sigma share loads and states.
ScenarioSuite generate_scenarios(const CircuitTopology& topology, std::size_t n, std::uint64_t seed,
                                 double noise_sigma = 0.0);

/// One scenario; `cp_now`/`cs_now` are overridden when `force_now` is set.
Scenario make_scenario(const CircuitTopology& topology, std::uint64_t seed, std::uint64_t id,
                       double noise_sigma, const std::pair<double, double>* force_now = nullptr);

/// gin + w, w = x + jy with x, y independent N(0, sigma^2 / 2).
Complex add_measurement_noise(Complex gin, double sigma, Rng& rng);

inline constexpr double kNoisePresets[] = {0.0, 0.0002, 0.0004};

/// Column-wise min/max of a samples x features matrix. Throws ValidationError
/// on an empty set or a constant feature.
NormalizationSpec fit_normalization(const Matrix& inputs);
Matrix apply_normalization(const NormalizationSpec& spec, const Matrix& inputs);

/// Rows are partitioned with split_indices().
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double fraction, std::uint64_t seed);

enum class DatasetFormat { binary, csv };

/// Both formats start with one text line
///   # rfmatch-dataset v1 kind=<k> rows=<n> columns=<c1,c2,...> skipped=<k> [key=value ...]
/// Binary files follow it with rows x columns little-endian f64 values
/// (row-major); CSV files follow it with a column-name line and one
/// `%.17g` row per sample.
void save_dataset(const Dataset& data, const std::filesystem::path& path, DatasetFormat format);
Dataset load_dataset(const std::filesystem::path& path);

void save_scenarios(const ScenarioSuite& suite, const std::filesystem::path& path);
ScenarioSuite load_scenarios(const std::filesystem::path& path);

}  // namespace rfmatch
