#include "rfmatch/datasets.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "rfmatch/error.hpp"
#include "rfmatch/hash.hpp"

namespace rfmatch {

// ---------------------------------------------------------------------------
// Lattices

void AxisSpec::validate(const char* name) const {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo <= hi))
        throw ValidationError(std::string(name) + " range must satisfy lo <= hi");
    if (!(step > 0.0) || !std::isfinite(step))
        throw ValidationError(std::string(name) + " step must be positive");
}

std::size_t AxisSpec::count() const {
    // The tolerance absorbs decimal steps that do not divide exactly in binary.
    return static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
}

double AxisSpec::at(std::size_t i) const { return std::min(hi, lo + static_cast<double>(i) * step); }

void SweepSpec::validate() const {
    f_hz.validate("frequency");
    cp_farads.validate("cp");
    cs_farads.validate("cs");
    if (!(f_hz.lo > 0.0)) throw ValidationError("frequencies must be positive");
    if (cp_farads.lo < 0.0 || cs_farads.lo < 0.0) throw ValidationError("capacitances must be >= 0");
}

SweepSpec SweepSpec::desk(const CircuitTopology& t) {
    return {{t.band_hz().lo, t.band_hz().hi, 0.05e9},
            {t.p_range().lo, t.p_range().hi, 0.2e-12},
            {t.s_range().lo, t.s_range().hi, 0.2e-12}};
}

SweepSpec SweepSpec::paper(const CircuitTopology& t) {
    return {{t.band_hz().lo, t.band_hz().hi, 0.02e9},
            {t.p_range().lo, t.p_range().hi, 0.02e-12},
            {t.s_range().lo, t.s_range().hi, 0.02e-12}};
}

std::string to_string(DatasetKind kind) { return kind == DatasetKind::sweep ? "sweep" : "inverse"; }

std::vector<std::string> sweep_columns() {
    return {"f_hz",   "cp_f",   "cs_f",   "s11_re", "s11_im", "s12_re",
            "s12_im", "s21_re", "s21_im", "s22_re", "s22_im"};
}

std::vector<std::string> inverse_columns() { return {"f_hz", "gl_re", "gl_im", "cp_f", "cs_f"}; }

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.kind = kind;
    out.columns = columns;
    out.metadata = metadata;
    out.rows.resize(static_cast<Eigen::Index>(indices.size()), rows.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) out.rows.row(i) = rows.row(indices[i]);
    return out;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct FrequencyBlock {
    std::vector<double> values;  // row-major, 11 per row
    std::size_t skipped = 0;
};

FrequencyBlock sweep_frequency(const CircuitTopology& topology, const SweepSpec& spec, double f) {
    const FrequencySlice slice(topology, f);
    const std::size_t ncp = spec.cp_farads.count();
    const std::size_t ncs = spec.cs_farads.count();

    // The head depends on the first tunable arm only and the tail on the
    // second, so each is built once per lattice value.
    auto build = [&](bool head, std::size_t n, const AxisSpec& axis, bool is_p) {
        std::vector<std::optional<AbcdMatrix>> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double c = axis.at(i);
            const TunableState st{f, is_p ? c : 0.0, is_p ? 0.0 : c};
            try {
                out[i] = head ? slice.head(st) : slice.tail(st);
            } catch (const SingularNetwork&) {
            }
        }
        return out;
    };
    const bool p_first = slice.p_first();
    const auto heads = p_first ? build(true, ncp, spec.cp_farads, true)
                               : build(true, ncs, spec.cs_farads, false);
    const auto tails = p_first ? build(false, ncs, spec.cs_farads, false)
                               : build(false, ncp, spec.cp_farads, true);

    FrequencyBlock block;
    block.values.reserve(ncp * ncs * 11);
    for (std::size_t i = 0; i < ncp; ++i) {
        for (std::size_t j = 0; j < ncs; ++j) {
            const auto& h = p_first ? heads[i] : heads[j];
            const auto& t = p_first ? tails[j] : tails[i];
            if (!h || !t) {
                ++block.skipped;
                continue;
            }
            SParameters s;
            try {
                s = slice.combine(*h, *t);
            } catch (const SingularNetwork&) {
                ++block.skipped;
                continue;
            }
            const auto v = s.to_vector();
            block.values.push_back(f);
            block.values.push_back(spec.cp_farads.at(i));
            block.values.push_back(spec.cs_farads.at(j));
            block.values.insert(block.values.end(), v.begin(), v.end());
        }
    }
    return block;
}

Matrix to_matrix(const std::vector<double>& row_major, std::size_t cols) {
    const auto rows = static_cast<Eigen::Index>(row_major.size() / cols);
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        row_major.data(), rows, static_cast<Eigen::Index>(cols));
}

}  // namespace

Dataset generate_sweep(const CircuitTopology& topology, const SweepSpec& spec, int workers) {
    spec.validate();
    const std::size_t nf = spec.f_hz.count();
    std::vector<FrequencyBlock> blocks(nf);
    const std::size_t nw = std::max<std::size_t>(1, std::min<std::size_t>(workers, nf));
    if (nw == 1) {
        for (std::size_t k = 0; k < nf; ++k) blocks[k] = sweep_frequency(topology, spec, spec.f_hz.at(k));
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(nw);
        for (std::size_t w = 0; w < nw; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t k = w; k < nf; k += nw)
                        blocks[k] = sweep_frequency(topology, spec, spec.f_hz.at(k));
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    std::vector<double> all;
    all.reserve(spec.size() * 11);
    Dataset data;
    for (auto& b : blocks) {
        all.insert(all.end(), b.values.begin(), b.values.end());
        data.skipped += b.skipped;
    }
    data.kind = DatasetKind::sweep;
    data.columns = sweep_columns();
    data.rows = to_matrix(all, data.columns.size());
    data.metadata["circuit"] = hex_fingerprint(topology.fingerprint());
    data.metadata["lattice"] = std::to_string(spec.f_hz.count()) + "x" +
                               std::to_string(spec.cp_farads.count()) + "x" +
                               std::to_string(spec.cs_farads.count());
    data.metadata["f_hz"] = num(spec.f_hz.lo) + ":" + num(spec.f_hz.step) + ":" + num(spec.f_hz.hi);
    data.metadata["cp_f"] =
        num(spec.cp_farads.lo) + ":" + num(spec.cp_farads.step) + ":" + num(spec.cp_farads.hi);
    data.metadata["cs_f"] =
        num(spec.cs_farads.lo) + ":" + num(spec.cs_farads.step) + ":" + num(spec.cs_farads.hi);
    return data;
}

Dataset generate_inverse_dataset(const MlpModel& recbm, const SweepSpec& spec) {
    spec.validate();
    if (recbm.role() != ModelRole::recbm || recbm.outputs() != 8 || recbm.inputs() != 3)
        throw InvalidArgument("inverse dataset needs an S-parameter model (3 inputs, 8 outputs)");
    const std::size_t ncp = spec.cp_farads.count();
    const std::size_t ncs = spec.cs_farads.count();
    const std::size_t per_f = ncp * ncs;

    std::vector<double> all;
    all.reserve(spec.size() * 5);
    Dataset data;
    Matrix x(3, static_cast<Eigen::Index>(per_f));
    for (std::size_t k = 0; k < spec.f_hz.count(); ++k) {
        const double f = spec.f_hz.at(k);
        for (std::size_t i = 0; i < ncp; ++i)
            for (std::size_t j = 0; j < ncs; ++j) {
                const auto c = static_cast<Eigen::Index>(i * ncs + j);
                x(0, c) = f;
                x(1, c) = spec.cp_farads.at(i);
                x(2, c) = spec.cs_farads.at(j);
            }
        const Matrix y = recbm.predict(x);
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
            const Complex s11(y(0, c), y(1, c)), s12(y(2, c), y(3, c)), s21(y(4, c), y(5, c)),
                s22(y(6, c), y(7, c));
            const Complex den = s12 * s21 - s11 * s22;
            if (std::abs(den) < 1e-9) {
                ++data.skipped;
                continue;
            }
            const Complex gl = -s11 / den;
            all.insert(all.end(), {f, gl.real(), gl.imag(), x(1, c), x(2, c)});
        }
    }
    data.kind = DatasetKind::inverse;
    data.columns = inverse_columns();
    data.rows = to_matrix(all, data.columns.size());
    data.metadata["recbm"] = hex_fingerprint(recbm.fingerprint());
    data.metadata["lattice"] = std::to_string(spec.f_hz.count()) + "x" + std::to_string(ncp) + "x" +
                               std::to_string(ncs);
    return data;
}

// ---------------------------------------------------------------------------
// Scenarios

Complex add_measurement_noise(Complex gin, double sigma, Rng& rng) {
    if (!(sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
    const double x = rng.normal();
    const double y = rng.normal();
    if (sigma == 0.0) return gin;
    const double s = sigma / std::sqrt(2.0);
    return gin + Complex(s * x, s * y);
}

namespace {

constexpr int kScenarioRetries = 100;
constexpr std::uint64_t kNoiseStream = 0x6e6f697365000000ULL;

}  // namespace

Scenario make_scenario(const CircuitTopology& topology, std::uint64_t seed, std::uint64_t id,
                       double noise_sigma, const std::pair<double, double>* force_now) {
    if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
    Rng rng(Rng::mix(seed ^ Rng::mix(id)));
    Rng noise(Rng::mix(seed ^ Rng::mix(id) ^ kNoiseStream));
    const auto& band = topology.band_hz();
    const auto& pr = topology.p_range();
    const auto& sr = topology.s_range();

    for (int attempt = 0; attempt < kScenarioRetries; ++attempt) {
        Scenario sc;
        sc.id = id;
        sc.noise_sigma = noise_sigma;
        sc.f_hz = rng.uniform(band.lo, band.hi);
        sc.cp_opt = rng.uniform(pr.lo, pr.hi);
        sc.cs_opt = rng.uniform(sr.lo, sr.hi);
        sc.cp_now = rng.uniform(pr.lo, pr.hi);
        sc.cs_now = rng.uniform(sr.lo, sr.hi);
        if (force_now) {
            sc.cp_now = force_now->first;
            sc.cs_now = force_now->second;
        }
        try {
            const auto s_opt = simulate(topology, {sc.f_hz, sc.cp_opt, sc.cs_opt});
            sc.gl = load_reflection_from_input(s_opt, ReflectionCoefficient{0.0}).value;
            // An antenna is passive, so loads outside the unit disc are redrawn.
            if (!is_finite(sc.gl) || std::abs(sc.gl) >= 1.0) continue;
            const auto s_now = simulate(topology, {sc.f_hz, sc.cp_now, sc.cs_now});
            const Complex gin = input_reflection(s_now, sc.gl).value;
            if (!is_finite(gin)) continue;
            sc.gin = add_measurement_noise(gin, noise_sigma, noise);
            return sc;
        } catch (const SingularNetwork&) {
        }
    }
    throw NumericalError("scenario " + std::to_string(id) + ": no valid draw after " +
                         std::to_string(kScenarioRetries) + " attempts");
}

ScenarioSuite generate_scenarios(const CircuitTopology& topology, std::size_t n, std::uint64_t seed,
                                 double noise_sigma) {
    if (n < 1) throw InvalidArgument("scenario count must be at least 1");
    ScenarioSuite suite;
    suite.seed = seed;
    suite.noise_sigma = noise_sigma;
    suite.circuit_fingerprint = topology.fingerprint();
    suite.scenarios.reserve(n);
    for (std::size_t i = 0; i < n; ++i) suite.scenarios.push_back(make_scenario(topology, seed, i, noise_sigma));
    return suite;
}

// ---------------------------------------------------------------------------
// Normalisation and splits

NormalizationSpec fit_normalization(const Matrix& inputs) {
    if (inputs.rows() == 0) throw ValidationError("cannot fit normalization on an empty set");
    NormalizationSpec spec;
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
        spec.min.push_back(inputs.col(c).minCoeff());
        spec.max.push_back(inputs.col(c).maxCoeff());
    }
    spec.validate();
    return spec;
}

Matrix apply_normalization(const NormalizationSpec& spec, const Matrix& inputs) {
    if (static_cast<std::size_t>(inputs.cols()) != spec.size())
        throw InvalidArgument("normalization spec does not match the feature count");
    Matrix out(inputs.rows(), inputs.cols());
    for (Eigen::Index c = 0; c < inputs.cols(); ++c)
        for (Eigen::Index r = 0; r < inputs.rows(); ++r) out(r, c) = spec.apply(c, inputs(r, c));
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("split fraction must lie in (0, 1)");
    auto [a, b] = split_indices(data.size(), fraction, seed);
    if (a.empty() || b.empty()) throw InvalidArgument("split leaves an empty partition");
    return {data.subset(a), data.subset(b)};
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kDatasetTag = "# rfmatch-dataset v1";

std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    return out;
}

void check_token(const std::string& s) {
    if (s.empty() || s.find_first_of(" \t\n=") != std::string::npos)
        throw InvalidArgument("dataset metadata must be non-empty and free of spaces and '='");
}

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& path, DatasetFormat format) {
    if (data.columns.size() != static_cast<std::size_t>(data.rows.cols()))
        throw InvalidArgument("dataset column names do not match the table");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write dataset '" + path.string() + "'");
    out << kDatasetTag << " kind=" << to_string(data.kind)
        << " format=" << (format == DatasetFormat::binary ? "binary" : "csv") << " rows=" << data.size()
        << " columns=" << join(data.columns, ',') << " skipped=" << data.skipped;
    for (const auto& [k, v] : data.metadata) {
        check_token(k);
        check_token(v);
        out << ' ' << k << '=' << v;
    }
    out << '\n';
    if (format == DatasetFormat::binary) {
        static_assert(std::endian::native == std::endian::little);
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = data.rows;
        out.write(reinterpret_cast<const char*>(rm.data()),
                  static_cast<std::streamsize>(rm.size() * sizeof(double)));
    } else {
        out << join(data.columns, ',') << '\n';
        for (Eigen::Index r = 0; r < data.rows.rows(); ++r) {
            for (Eigen::Index c = 0; c < data.rows.cols(); ++c) {
                if (c) out << ',';
                out << num(data.rows(r, c));
            }
            out << '\n';
        }
    }
    if (!out) throw Error("failed writing dataset '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open dataset '" + path.string() + "'");
    std::string header;
    std::getline(in, header);
    if (header.rfind(kDatasetTag, 0) != 0) throw FormatError("'" + path.string() + "' is not an rfmatch dataset");

    Dataset data;
    std::string format;
    std::size_t rows = 0;
    bool have_rows = false;
    for (const auto& field : split(header.substr(std::string(kDatasetTag).size()), ' ')) {
        if (field.empty()) continue;
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw FormatError("malformed dataset header field '" + field + "'");
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "kind") {
            if (value == "sweep") data.kind = DatasetKind::sweep;
            else if (value == "inverse") data.kind = DatasetKind::inverse;
            else throw FormatError("unknown dataset kind '" + value + "'");
        } else if (key == "format") {
            format = value;
        } else if (key == "rows") {
            rows = std::stoull(value);
            have_rows = true;
        } else if (key == "columns") {
            data.columns = split(value, ',');
        } else if (key == "skipped") {
            data.skipped = std::stoull(value);
        } else {
            data.metadata[key] = value;
        }
    }
    if (!have_rows || data.columns.empty()) throw FormatError("dataset header lacks rows or columns");
    const std::size_t cols = data.columns.size();
    std::vector<double> values(rows * cols);
    if (format == "binary") {
        in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != values.size() * sizeof(double))
            throw FormatError("dataset payload is truncated");
        if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after dataset payload");
    } else if (format == "csv") {
        std::string line;
        std::getline(in, line);
        if (split(line, ',') != data.columns) throw FormatError("CSV column line disagrees with the header");
        for (std::size_t r = 0; r < rows; ++r) {
            if (!std::getline(in, line)) throw FormatError("dataset has fewer rows than declared");
            const auto cells = split(line, ',');
            if (cells.size() != cols) throw FormatError("row " + std::to_string(r) + " has the wrong width");
            for (std::size_t c = 0; c < cols; ++c) {
                char* end = nullptr;
                values[r * cols + c] = std::strtod(cells[c].c_str(), &end);
                if (end == cells[c].c_str()) throw FormatError("non-numeric cell in row " + std::to_string(r));
            }
        }
    } else {
        throw FormatError("unknown dataset format '" + format + "'");
    }
    data.rows = to_matrix(values, cols);
    return data;
}

void save_scenarios(const ScenarioSuite& suite, const std::filesystem::path& path) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : suite.scenarios)
        rows.push_back({{"id", s.id},
                        {"f_hz", s.f_hz},
                        {"cp_opt_f", s.cp_opt},
                        {"cs_opt_f", s.cs_opt},
                        {"cp_now_f", s.cp_now},
                        {"cs_now_f", s.cs_now},
                        {"gin", {s.gin.real(), s.gin.imag()}},
                        {"gl", {s.gl.real(), s.gl.imag()}}});
    const nlohmann::json doc = {{"format", "rfmatch-scenarios"},
                                {"version", 1},
                                {"seed", suite.seed},
                                {"noise_sigma", suite.noise_sigma},
                                {"circuit_fingerprint", hex_fingerprint(suite.circuit_fingerprint)},
                                {"scenarios", rows}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write scenario file '" + path.string() + "'");
    out << doc.dump(1) << '\n';
}

ScenarioSuite load_scenarios(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open scenario file '" + path.string() + "'");
    try {
        const auto doc = nlohmann::json::parse(in);
        if (doc.at("format") != "rfmatch-scenarios" || doc.at("version") != 1)
            throw FormatError("unsupported scenario file");
        ScenarioSuite suite;
        suite.seed = doc.at("seed").get<std::uint64_t>();
        suite.noise_sigma = doc.at("noise_sigma").get<double>();
        suite.circuit_fingerprint = std::stoull(doc.at("circuit_fingerprint").get<std::string>(), nullptr, 16);
        for (const auto& r : doc.at("scenarios")) {
            Scenario s;
            s.id = r.at("id").get<std::uint64_t>();
            s.f_hz = r.at("f_hz").get<double>();
            s.cp_opt = r.at("cp_opt_f").get<double>();
            s.cs_opt = r.at("cs_opt_f").get<double>();
            s.cp_now = r.at("cp_now_f").get<double>();
            s.cs_now = r.at("cs_now_f").get<double>();
            s.gin = {r.at("gin").at(0).get<double>(), r.at("gin").at(1).get<double>()};
            s.gl = {r.at("gl").at(0).get<double>(), r.at("gl").at(1).get<double>()};
            s.noise_sigma = suite.noise_sigma;
            suite.scenarios.push_back(s);
        }
        return suite;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed scenario file '" + path.string() + "': " + e.what());
    }
}

}  // namespace rfmatch
