#include "rfmatch/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "rfmatch/error.hpp"
#include "rfmatch/hash.hpp"

namespace rfmatch {

using nlohmann::json;

std::string to_string(Profile profile) { return profile == Profile::desk ? "desk" : "paper"; }

Profile parse_profile(const std::string& name) {
    if (name == "desk") return Profile::desk;
    if (name == "paper") return Profile::paper;
    throw InvalidArgument("unknown profile '" + name + "' (expected desk or paper)");
}

namespace {

std::string to_string(SurrogateKind kind) { return kind == SurrogateKind::model ? "model" : "oracle"; }

SurrogateKind parse_surrogate(const std::string& name) {
    if (name == "model") return SurrogateKind::model;
    if (name == "oracle") return SurrogateKind::oracle;
    throw InvalidArgument("unknown surrogate '" + name + "' (expected model or oracle)");
}

std::string to_string(RouletteTarget t) {
    return t == RouletteTarget::position ? "position" : "personal_best";
}

RouletteTarget parse_roulette(const std::string& name) {
    if (name == "position") return RouletteTarget::position;
    if (name == "personal_best") return RouletteTarget::personal_best;
    throw InvalidArgument("unknown roulette target '" + name + "'");
}

template <typename T>
void take(const json& doc, const char* key, T& field) {
    if (auto it = doc.find(key); it != doc.end() && !it->is_null()) field = it->get<T>();
}

void take_path(const json& doc, const char* key, std::filesystem::path& field) {
    if (auto it = doc.find(key); it != doc.end() && !it->is_null()) field = it->get<std::string>();
}

json training_to_json(const TrainingConfig& t) {
    return {{"learning_rate", t.learning_rate}, {"final_lr_fraction", t.final_lr_fraction},
            {"batch_size", t.batch_size},       {"epochs", t.epochs},
            {"beta1", t.beta1},                 {"beta2", t.beta2},
            {"epsilon", t.epsilon},             {"seed", t.seed},
            {"train_fraction", t.train_fraction}};
}

void training_from_json(const json& doc, TrainingConfig& t) {
    take(doc, "learning_rate", t.learning_rate);
    take(doc, "final_lr_fraction", t.final_lr_fraction);
    take(doc, "batch_size", t.batch_size);
    take(doc, "epochs", t.epochs);
    take(doc, "beta1", t.beta1);
    take(doc, "beta2", t.beta2);
    take(doc, "epsilon", t.epsilon);
    take(doc, "seed", t.seed);
    take(doc, "train_fraction", t.train_fraction);
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw FormatError("not a number: '" + s + "'");
    }
    if (pos != s.size()) throw FormatError("not a number: '" + s + "'");
    return v;
}

std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

/// Rows of a CSV file whose header must equal `columns`.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::vector<std::string>& columns) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || split_csv(line) != columns)
        throw ValidationError("unexpected columns in " + path.string());
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != columns.size())
            throw FormatError("wrong cell count in " + path.string() + ": " + line);
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    return out;
}

const std::vector<std::string> kRowColumns = {
    "scenario_id", "f_hz",     "cp_f",       "cs_f",        "predicted_psi", "true_psi",
    "repeats",     "tuned_psi", "psi_median", "psi_sd",     "evaluations",   "iterations",
    "infeasible",  "error"};

const std::vector<std::string> kSummaryColumns = {
    "strategy",   "scenarios",        "failed",             "compliant",      "compliance",
    "mean",       "median",           "sd",                 "mean_evaluations", "median_evaluations",
    "max_evaluations"};

}  // namespace

// ---------------------------------------------------------------- RunConfig

RunConfig RunConfig::preset(Profile profile) {
    RunConfig c;
    c.profile = profile;
    if (profile == Profile::desk) {
        c.train_recbm.learning_rate = 3e-3;
        c.train_recbm.final_lr_fraction = 0.003;
        c.train_recbm.batch_size = 32;
        c.train_recbm.epochs = 150;
        c.train_recbm.seed = 42;
        c.train_ims = c.train_recbm;
        c.train_ims.seed = 43;
        return c;
    }
    c.sweep = {0.02, 0.02};
    c.width_scale = 1.0;
    c.train_recbm.learning_rate = 5e-8;
    c.train_recbm.final_lr_fraction = 1.0;
    c.train_recbm.batch_size = 512;
    c.train_recbm.epochs = 8000;
    c.train_recbm.seed = 42;
    c.train_ims.learning_rate = 2e-5;
    c.train_ims.final_lr_fraction = 1.0;
    c.train_ims.batch_size = 512;
    c.train_ims.epochs = 3000;
    c.train_ims.seed = 43;
    c.eval.test_samples = 100000;
    c.scenarios.count = 9000;
    c.match.repeats = 30;
    c.match.grid_step_pf = 0.01;
    return c;
}

RunConfig RunConfig::from_json(const json& doc) {
    Profile profile = Profile::desk;
    if (auto it = doc.find("profile"); it != doc.end()) profile = parse_profile(it->get<std::string>());
    RunConfig c = preset(profile);
    c.merge(doc);
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open run config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("run config " + path.string() + ": " + e.what());
    }
    return from_json(doc);
}

void RunConfig::merge(const json& doc) {
    try {
        if (auto it = doc.find("profile"); it != doc.end()) profile = parse_profile(it->get<std::string>());
        take(doc, "seed", seed);
        take(doc, "workers", workers);
        take(doc, "width_scale", width_scale);
        take(doc, "ims_label_scale", ims_label_scale);
        if (auto p = doc.find("paths"); p != doc.end()) {
            take_path(*p, "circuit", paths.circuit);
            take_path(*p, "output_dir", paths.output_dir);
            take_path(*p, "sweep", paths.sweep);
            take_path(*p, "inverse", paths.inverse);
            take_path(*p, "recbm", paths.recbm);
            take_path(*p, "ims", paths.ims);
            take_path(*p, "scenarios", paths.scenarios);
        }
        if (auto s = doc.find("sweep"); s != doc.end()) {
            take(*s, "f_step_ghz", sweep.f_step_ghz);
            take(*s, "c_step_pf", sweep.c_step_pf);
        }
        if (auto t = doc.find("train_recbm"); t != doc.end()) training_from_json(*t, train_recbm);
        if (auto t = doc.find("train_ims"); t != doc.end()) training_from_json(*t, train_ims);
        if (auto e = doc.find("eval"); e != doc.end()) {
            take(*e, "test_samples", eval.test_samples);
            take(*e, "seed", eval.seed);
        }
        if (auto s = doc.find("scenarios"); s != doc.end()) {
            take(*s, "count", scenarios.count);
            take(*s, "seed", scenarios.seed);
            take(*s, "noise_sigma", scenarios.noise_sigma);
        }
        if (auto m = doc.find("match"); m != doc.end()) {
            if (auto st = m->find("strategies"); st != m->end()) {
                match.strategies.clear();
                for (const auto& name : *st) match.strategies.push_back(parse_strategy(name.get<std::string>()));
            }
            take(*m, "repeats", match.repeats);
            take(*m, "compliance_threshold", match.compliance_threshold);
            if (auto s = m->find("surrogate"); s != m->end()) match.surrogate = parse_surrogate(s->get<std::string>());
            take(*m, "grid_step_pf", match.grid_step_pf);
            if (auto s = m->find("sapso"); s != m->end()) {
                auto& c = match.sapso;
                take(*s, "particles", c.particles);
                take(*s, "kappa1", c.kappa1);
                take(*s, "kappa2", c.kappa2);
                take(*s, "cooling", c.cooling);
                take(*s, "max_iterations", c.max_iterations);
                take(*s, "threshold", c.threshold);
                take(*s, "penalty", c.penalty);
                take(*s, "seed", c.seed);
                if (auto r = s->find("roulette_target"); r != s->end())
                    c.roulette_target = parse_roulette(r->get<std::string>());
            }
            if (auto a = m->find("adadam"); a != m->end()) {
                auto& c = match.adadam;
                if (auto i = a->find("initial_pf"); i != a->end()) {
                    const auto v = i->get<std::vector<double>>();
                    if (v.size() != 2) throw ValidationError("adadam.initial_pf needs two values");
                    c.initial = {v[0] * 1e-12, v[1] * 1e-12};
                }
                take(*a, "learning_rate", c.learning_rate_pf);
                take(*a, "beta1", c.beta1);
                take(*a, "beta2", c.beta2);
                take(*a, "epsilon", c.epsilon);
                take(*a, "max_iterations", c.max_iterations);
                take(*a, "threshold", c.threshold);
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("run config: ") + e.what());
    }
}

json RunConfig::to_json() const {
    json strategies = json::array();
    for (Strategy s : match.strategies) strategies.push_back(rfmatch::to_string(s));
    return {
        {"profile", rfmatch::to_string(profile)},
        {"seed", seed},
        {"workers", workers},
        {"width_scale", width_scale},
        {"ims_label_scale", ims_label_scale},
        {"paths",
         {{"circuit", paths.circuit.string()},
          {"output_dir", paths.output_dir.string()},
          {"sweep", paths.sweep.string()},
          {"inverse", paths.inverse.string()},
          {"recbm", paths.recbm.string()},
          {"ims", paths.ims.string()},
          {"scenarios", paths.scenarios.string()}}},
        {"sweep", {{"f_step_ghz", sweep.f_step_ghz}, {"c_step_pf", sweep.c_step_pf}}},
        {"train_recbm", training_to_json(train_recbm)},
        {"train_ims", training_to_json(train_ims)},
        {"eval", {{"test_samples", eval.test_samples}, {"seed", eval.seed}}},
        {"scenarios",
         {{"count", scenarios.count}, {"seed", scenarios.seed}, {"noise_sigma", scenarios.noise_sigma}}},
        {"match",
         {{"strategies", strategies},
          {"repeats", match.repeats},
          {"compliance_threshold", match.compliance_threshold},
          {"surrogate", to_string(match.surrogate)},
          {"grid_step_pf", match.grid_step_pf},
          {"sapso",
           {{"particles", match.sapso.particles},
            {"kappa1", match.sapso.kappa1},
            {"kappa2", match.sapso.kappa2},
            {"cooling", match.sapso.cooling},
            {"max_iterations", match.sapso.max_iterations},
            {"threshold", match.sapso.threshold},
            {"penalty", match.sapso.penalty},
            {"roulette_target", to_string(match.sapso.roulette_target)},
            {"seed", match.sapso.seed}}},
          {"adadam",
           {{"initial_pf", {match.adadam.initial.cp / 1e-12, match.adadam.initial.cs / 1e-12}},
            {"learning_rate", match.adadam.learning_rate_pf},
            {"beta1", match.adadam.beta1},
            {"beta2", match.adadam.beta2},
            {"epsilon", match.adadam.epsilon},
            {"max_iterations", match.adadam.max_iterations},
            {"threshold", match.adadam.threshold}}}}},
    };
}

std::uint64_t RunConfig::hash() const { return fnv1a64(to_json().dump()); }

void RunConfig::validate() const {
    if (workers < 1) throw ValidationError("workers must be at least 1");
    if (!(width_scale > 0.0)) throw ValidationError("width_scale must be positive");
    if (!(sweep.f_step_ghz > 0.0) || !(sweep.c_step_pf > 0.0))
        throw ValidationError("sweep steps must be positive");
    if (!(ims_label_scale > 0.0)) throw ValidationError("ims_label_scale must be positive");
    if (scenarios.count < 1) throw ValidationError("scenario count must be at least 1");
    if (!(scenarios.noise_sigma >= 0.0)) throw ValidationError("noise sigma must be non-negative");
    if (match.repeats < 1) throw ValidationError("repeats must be at least 1");
    if (!(match.grid_step_pf > 0.0)) throw ValidationError("grid step must be positive");
    if (!(match.compliance_threshold > 0.0)) throw ValidationError("compliance threshold must be positive");
    if (match.strategies.empty()) throw ValidationError("no strategy selected");
    try {
        train_recbm.validate();
        train_ims.validate();
        match.sapso.validate();
    } catch (const InvalidArgument& e) {
        throw ValidationError(e.what());
    }
}

SweepSpec RunConfig::sweep_spec(const CircuitTopology& topology) const {
    const auto& b = topology.band_hz();
    return {{b.lo, b.hi, sweep.f_step_ghz * 1e9},
            {topology.p_range().lo, topology.p_range().hi, sweep.c_step_pf * 1e-12},
            {topology.s_range().lo, topology.s_range().hi, sweep.c_step_pf * 1e-12}};
}

CircuitTopology load_topology(const RunConfig& config) {
    return config.paths.circuit.empty() ? reference_practical_circuit()
                                        : load_circuit_spec(config.paths.circuit);
}

// ---------------------------------------------------------------- statistics

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

Summary summarize(const std::vector<ScenarioRow>& rows, double threshold) {
    Summary s;
    s.scenarios = rows.size();
    std::vector<double> tuned, evals;
    for (const auto& r : rows) {
        if (!r.error.empty()) {
            ++s.failed;
            continue;
        }
        tuned.push_back(r.tuned_psi);
        evals.push_back(r.evaluations);
        if (r.tuned_psi < threshold) ++s.compliant;
    }
    s.compliance = rows.empty() ? 0.0 : static_cast<double>(s.compliant) / static_cast<double>(rows.size());
    s.mean = mean_of(tuned);
    s.median = median_of(tuned);
    s.sd = sd_of(tuned);
    s.mean_evaluations = mean_of(evals);
    s.median_evaluations = median_of(evals);
    s.max_evaluations = evals.empty() ? 0.0 : *std::max_element(evals.begin(), evals.end());
    return s;
}

// ---------------------------------------------------------------- matching

namespace {

ScenarioRow run_one(const ScenarioRunner& runner, Strategy strategy, const Scenario& sc, int repeats) {
    ScenarioRow row;
    row.scenario_id = sc.id;
    row.f_hz = sc.f_hz;
    row.repeats = repeats;
    try {
        std::vector<double> psi, evals, iters;
        for (int k = 0; k < repeats; ++k) {
            const MatchResult m = run_scenario(runner, strategy, sc, k);
            if (k == 0) {
                row.cp = m.cp;
                row.cs = m.cs;
                row.predicted_psi = m.predicted_psi;
                row.true_psi = m.true_psi;
                row.infeasible = m.infeasible;
            }
            psi.push_back(m.true_psi);
            evals.push_back(static_cast<double>(m.evaluations));
            iters.push_back(static_cast<double>(m.iterations));
        }
        row.tuned_psi = mean_of(psi);
        row.psi_median = median_of(psi);
        row.psi_sd = sd_of(psi);
        row.evaluations = mean_of(evals);
        row.iterations = mean_of(iters);
    } catch (const Error& e) {
        row.error = e.what();
        row.tuned_psi = row.true_psi = std::numeric_limits<double>::quiet_NaN();
    }
    return row;
}

}  // namespace

RunReport run_matching(const RunConfig& config, const ScenarioSuite& suite, const MatchInputs& inputs) {
    config.validate();
    if (inputs.truth == nullptr) throw InvalidArgument("matching needs the true circuit");
    if (suite.circuit_fingerprint != 0 && suite.circuit_fingerprint != inputs.truth->fingerprint())
        throw ValidationError("scenario suite was generated for circuit " +
                              hex_fingerprint(suite.circuit_fingerprint) + ", not " +
                              hex_fingerprint(inputs.truth->fingerprint()));
    const bool oracle = config.match.surrogate == SurrogateKind::oracle;
    if (!oracle && inputs.recbm == nullptr) throw ValidationError("model surrogate needs a RECBM-Net");
    const bool wants_ims = std::find(config.match.strategies.begin(), config.match.strategies.end(),
                                     Strategy::ims) != config.match.strategies.end();
    if (wants_ims && inputs.ims == nullptr) throw ValidationError("IMS strategy needs an IMS-Net");
    if (wants_ims && oracle) throw ValidationError("IMS strategy needs the model surrogate it was paired with");
    if (wants_ims && inputs.ims->paired_fingerprint() != inputs.recbm->fingerprint())
        throw ValidationError("IMS-Net is not paired with the given RECBM-Net");

    RunReport report;
    report.noise_sigma = suite.noise_sigma;
    report.compliance_threshold = config.match.compliance_threshold;
    const std::size_t n = suite.scenarios.size();
    const int workers = std::max(1, std::min<int>(config.workers, static_cast<int>(n)));

    for (Strategy strategy : config.match.strategies) {
        StrategyReport sr;
        sr.strategy = strategy;
        sr.rows.resize(n);
        sr.wall_seconds.resize(n);
        const int repeats = strategy == Strategy::sapso ? config.match.repeats : 1;

        auto work = [&](int w) {
            std::unique_ptr<Surrogate> surrogate;
            if (oracle)
                surrogate = std::make_unique<OracleSurrogate>(*inputs.truth);
            else
                surrogate = std::make_unique<ModelSurrogate>(*inputs.recbm, inputs.truth->reference());
            ScenarioRunner runner;
            runner.truth = inputs.truth;
            runner.surrogate = surrogate.get();
            runner.ims = inputs.ims;
            runner.sapso = config.match.sapso;
            runner.adam = config.match.adadam;
            runner.grid_step = config.match.grid_step_pf * 1e-12;
            for (std::size_t i = static_cast<std::size_t>(w); i < n; i += static_cast<std::size_t>(workers)) {
                const auto start = std::chrono::steady_clock::now();
                sr.rows[i] = run_one(runner, strategy, suite.scenarios[i], repeats);
                sr.wall_seconds[i] =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            }
        };
        if (workers == 1) {
            work(0);
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
            for (auto& t : pool) t.join();
        }
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return sr.rows[a].scenario_id < sr.rows[b].scenario_id;
        });
        StrategyReport sorted;
        sorted.strategy = strategy;
        for (std::size_t i : order) {
            sorted.rows.push_back(sr.rows[i]);
            sorted.wall_seconds.push_back(sr.wall_seconds[i]);
        }
        report.strategies.push_back(std::move(sorted));
    }
    return report;
}

// ---------------------------------------------------------------- files

void write_json(const json& doc, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
}

void write_ecdf_csv(const std::vector<EcdfPoint>& points, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "value,fraction\n";
    for (const auto& p : points) out << fmt(p.value) << ',' << fmt(p.fraction) << '\n';
}

void write_loss_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "epoch,train_mse,val_mse\n";
    for (const auto& e : history) out << e.epoch << ',' << fmt(e.train_mse) << ',' << fmt(e.val_mse) << '\n';
}

void write_eval_report(const SurrogateErrorReport& report, const std::vector<std::string>& names,
                       const std::filesystem::path& dir) {
    if (names.size() != report.mae.size()) throw InvalidArgument("one name per output dimension expected");
    {
        auto out = open_out(dir / "eval_report.csv");
        out << "dimension,mae,mre,mre_excluded\n";
        std::size_t excluded = 0;
        for (std::size_t k = 0; k < names.size(); ++k) {
            out << names[k] << ',' << fmt(report.mae[k]) << ',' << fmt(report.mre[k]) << ','
                << report.mre_excluded[k] << '\n';
            excluded += report.mre_excluded[k];
        }
        out << "overall," << fmt(report.overall_mae) << ',' << fmt(report.overall_mre) << ',' << excluded
            << '\n';
    }
    write_ecdf_csv(report.abs_error_ecdf, dir / "ecdf_abs_error.csv");
    write_ecdf_csv(report.rel_error_ecdf, dir / "ecdf_rel_error.csv");
}

json make_manifest(const RunConfig& config, const std::string& command) {
    return {{"format", "rfmatch-manifest"},
            {"version", kReportVersion},
            {"command", command},
            {"profile", to_string(config.profile)},
            {"config_hash", hex_fingerprint(config.hash())},
            {"seeds",
             {{"global", config.seed},
              {"train_recbm", config.train_recbm.seed},
              {"train_ims", config.train_ims.seed},
              {"scenarios", config.scenarios.seed},
              {"sapso", config.match.sapso.seed},
              {"eval", config.eval.seed}}},
            {"config", config.to_json()}};
}

void write_run_report(const RunReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto summary = open_out(dir / "summary.csv");
    for (std::size_t k = 0; k < kSummaryColumns.size(); ++k)
        summary << (k ? "," : "") << kSummaryColumns[k];
    summary << '\n';
    auto timing = open_out(dir / "timing.csv");
    timing << "strategy,scenario_id,wall_seconds\n";

    for (const auto& sr : report.strategies) {
        const std::string name = to_string(sr.strategy);
        const Summary s = summarize(sr.rows, report.compliance_threshold);
        summary << name << ',' << s.scenarios << ',' << s.failed << ',' << s.compliant << ','
                << fmt(s.compliance) << ',' << fmt(s.mean) << ',' << fmt(s.median) << ',' << fmt(s.sd) << ','
                << fmt(s.mean_evaluations) << ',' << fmt(s.median_evaluations) << ','
                << fmt(s.max_evaluations) << '\n';

        auto rows = open_out(dir / ("rows_" + name + ".csv"));
        for (std::size_t k = 0; k < kRowColumns.size(); ++k) rows << (k ? "," : "") << kRowColumns[k];
        rows << '\n';
        std::vector<double> tuned, evals, medians, sds;
        for (const auto& r : sr.rows) {
            rows << r.scenario_id << ',' << fmt(r.f_hz) << ',' << fmt(r.cp) << ',' << fmt(r.cs) << ','
                 << fmt(r.predicted_psi) << ',' << fmt(r.true_psi) << ',' << r.repeats << ','
                 << fmt(r.tuned_psi) << ',' << fmt(r.psi_median) << ',' << fmt(r.psi_sd) << ','
                 << fmt(r.evaluations) << ',' << fmt(r.iterations) << ',' << (r.infeasible ? 1 : 0) << ','
                 << sanitize(r.error) << '\n';
            if (!r.error.empty()) continue;
            tuned.push_back(r.tuned_psi);
            evals.push_back(r.evaluations);
            medians.push_back(r.psi_median);
            sds.push_back(r.psi_sd);
        }
        write_ecdf_csv(ecdf(tuned), dir / ("ecdf_tuned_" + name + ".csv"));
        write_ecdf_csv(ecdf(evals), dir / ("ecdf_evaluations_" + name + ".csv"));
        if (sr.strategy == Strategy::sapso) {
            write_ecdf_csv(ecdf(medians), dir / "ecdf_sapso_median.csv");
            write_ecdf_csv(ecdf(sds), dir / "ecdf_sapso_sd.csv");
        }
        for (std::size_t i = 0; i < sr.rows.size(); ++i)
            timing << name << ',' << sr.rows[i].scenario_id << ',' << fmt(sr.wall_seconds[i]) << '\n';
    }

    json manifest = report.manifest;
    manifest["report_version"] = kReportVersion;
    manifest["noise_sigma"] = report.noise_sigma;
    manifest["compliance_threshold"] = report.compliance_threshold;
    json names = json::array();
    for (const auto& sr : report.strategies) names.push_back(to_string(sr.strategy));
    manifest["strategies"] = names;
    write_json(manifest, dir / "manifest.json");
}

RunReport read_run_report(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("no manifest.json in " + dir.string());
    RunReport report;
    try {
        report.manifest = json::parse(in);
        if (report.manifest.value("report_version", -1) != kReportVersion)
            throw ValidationError("report version mismatch in " + dir.string());
        report.noise_sigma = report.manifest.at("noise_sigma").get<double>();
        report.compliance_threshold = report.manifest.at("compliance_threshold").get<double>();
        for (const auto& name : report.manifest.at("strategies")) {
            StrategyReport sr;
            sr.strategy = parse_strategy(name.get<std::string>());
            for (const auto& c : read_csv(dir / ("rows_" + name.get<std::string>() + ".csv"), kRowColumns)) {
                ScenarioRow r;
                r.scenario_id = std::stoull(c[0]);
                r.f_hz = parse_double(c[1]);
                r.cp = parse_double(c[2]);
                r.cs = parse_double(c[3]);
                r.predicted_psi = parse_double(c[4]);
                r.true_psi = parse_double(c[5]);
                r.repeats = std::stoi(c[6]);
                r.tuned_psi = parse_double(c[7]);
                r.psi_median = parse_double(c[8]);
                r.psi_sd = parse_double(c[9]);
                r.evaluations = parse_double(c[10]);
                r.iterations = parse_double(c[11]);
                r.infeasible = c[12] == "1";
                r.error = c[13];
                sr.rows.push_back(std::move(r));
            }
            report.strategies.push_back(std::move(sr));
        }
    } catch (const json::exception& e) {
        throw FormatError("manifest in " + dir.string() + ": " + e.what());
    }
    return report;
}

void consolidate_reports(const std::vector<std::filesystem::path>& runs,
                         const std::filesystem::path& out_dir, std::optional<double> inference_cost) {
    if (runs.empty()) throw InvalidArgument("no reports to consolidate");
    struct Entry {
        std::string strategy;
        double sigma;
        std::string run;
        Summary s;
    };
    std::vector<Entry> entries;
    for (const auto& dir : runs) {
        const RunReport report = read_run_report(dir);
        const auto headline = read_csv(dir / "summary.csv", kSummaryColumns);
        for (const auto& sr : report.strategies) {
            const std::string name = to_string(sr.strategy);
            const Summary s = summarize(sr.rows, report.compliance_threshold);
            const auto it = std::find_if(headline.begin(), headline.end(),
                                         [&](const auto& row) { return row[0] == name; });
            if (it == headline.end())
                throw ValidationError("summary.csv in " + dir.string() + " has no row for " + name);
            if (parse_double((*it)[4]) != s.compliance || std::stoull((*it)[3]) != s.compliant)
                throw ValidationError("headline compliance for " + name + " in " + dir.string() +
                                      " does not match its rows");
            entries.push_back({name, report.noise_sigma, dir.filename().string(), s});
        }
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.strategy != b.strategy ? a.strategy < b.strategy : a.sigma < b.sigma;
    });

    auto table = open_out(out_dir / "table_stats.csv");
    table << "strategy,noise_sigma,run,scenarios,failed,compliance,mean,median,sd,mean_evaluations,"
             "median_evaluations";
    table << (inference_cost ? ",mean_cost\n" : "\n");
    auto sweep = open_out(out_dir / "noise_sweep.csv");
    sweep << "strategy,noise_sigma,compliance\n";
    for (const auto& e : entries) {
        table << e.strategy << ',' << fmt(e.sigma) << ',' << sanitize(e.run) << ',' << e.s.scenarios << ','
              << e.s.failed << ',' << fmt(e.s.compliance) << ',' << fmt(e.s.mean) << ',' << fmt(e.s.median)
              << ',' << fmt(e.s.sd) << ',' << fmt(e.s.mean_evaluations) << ','
              << fmt(e.s.median_evaluations);
        if (inference_cost) table << ',' << fmt(e.s.mean_evaluations * *inference_cost);
        table << '\n';
        sweep << e.strategy << ',' << fmt(e.sigma) << ',' << fmt(e.s.compliance) << '\n';
    }
}

TrainedModel train_recbm_model(const RunConfig& config, const Dataset& sweep,
                               std::uint64_t circuit_fingerprint, const EpochCallback& on_epoch) {
    if (sweep.kind != DatasetKind::sweep) throw ValidationError("RECBM-Net needs a sweep dataset");
    const Matrix x = sweep.inputs();
    MlpModel model(ModelRole::recbm, 3, 8, config.width_scale, fit_normalization(x));
    model.initialize(config.train_recbm.seed);
    model.set_circuit_fingerprint(circuit_fingerprint);
    TrainingResult result = train(model, x, sweep.targets(), config.train_recbm, on_epoch);
    return {std::move(model), std::move(result)};
}

TrainedModel train_ims_model(const RunConfig& config, const Dataset& inverse, const MlpModel& recbm,
                             const EpochCallback& on_epoch) {
    if (inverse.kind != DatasetKind::inverse) throw ValidationError("IMS-Net needs an inverse dataset");
    if (recbm.role() != ModelRole::recbm) throw ValidationError("IMS-Net must be paired with a RECBM-Net");
    const Matrix x = inverse.inputs();
    MlpModel model(ModelRole::ims, 3, 2, config.width_scale, fit_normalization(x), config.ims_label_scale);
    model.initialize(config.train_ims.seed);
    model.set_paired_fingerprint(recbm.fingerprint());
    model.set_circuit_fingerprint(recbm.circuit_fingerprint());
    TrainingResult result = train(model, x, inverse.targets(), config.train_ims, on_epoch);
    return {std::move(model), std::move(result)};
}

std::pair<Matrix, Matrix> random_sweep_samples(const CircuitTopology& topology, std::size_t n,
                                               std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(static_cast<Eigen::Index>(n), 3), y(static_cast<Eigen::Index>(n), 8);
    const auto& band = topology.band_hz();
    std::size_t filled = 0, attempts = 0;
    while (filled < n) {
        if (++attempts > 100 * n + 100) throw NumericalError("too many singular samples");
        const TunableState st{rng.uniform(band.lo, band.hi),
                              rng.uniform(topology.p_range().lo, topology.p_range().hi),
                              rng.uniform(topology.s_range().lo, topology.s_range().hi)};
        SParameters s;
        try {
            s = simulate(topology, st);
        } catch (const SingularNetwork&) {
            continue;
        }
        const auto r = static_cast<Eigen::Index>(filled++);
        x(r, 0) = st.f_hz;
        x(r, 1) = st.cp_farads;
        x(r, 2) = st.cs_farads;
        const auto v = s.to_vector();
        for (int k = 0; k < 8; ++k) y(r, k) = v[k];
    }
    return {x, y};
}

}  // namespace rfmatch
