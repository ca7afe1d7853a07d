// Acceptance harness: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include <CLI11.hpp>

#include "rfmatch/bench.hpp"
#include "rfmatch/error.hpp"
#include "rfmatch/hash.hpp"
#include "support/nodal_oracle.hpp"

using namespace rfmatch;
using rfmatch::testing::nodal_s_parameters;
using rfmatch::testing::s_distance;
using rfmatch::testing::s_norm;
namespace fs = std::filesystem;

namespace {

constexpr double kPf = 1e-12;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string format(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- A1

ElementExpr random_element(std::mt19937_64& rng, int depth) {
    std::uniform_int_distribution<int> pick(0, depth > 0 ? 4 : 2);
    std::uniform_real_distribution<double> logu(0.0, 1.0);
    auto span = [&](double lo, double hi) { return lo * std::pow(hi / lo, logu(rng)); };
    switch (pick(rng)) {
        case 0: return ElementExpr::resistor(span(0.1, 500.0));
        case 1: return ElementExpr::inductor(span(0.05e-9, 30e-9));
        case 2: return ElementExpr::capacitor(span(0.05 * kPf, 30 * kPf));
        default: {
            std::vector<ElementExpr> kids;
            const int n = 2 + static_cast<int>(rng() % 2);
            for (int i = 0; i < n; ++i) kids.push_back(random_element(rng, depth - 1));
            return pick(rng) % 2 ? ElementExpr::series(std::move(kids)) : ElementExpr::parallel(std::move(kids));
        }
    }
}

Outcome a1_network_oracle() {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> f(0.3e9, 3e9);
    double worst_rel = 0.0, worst_recip = 0.0;
    int checked = 0;
    while (checked < 1000) {
        std::vector<Arm> arms;
        const int n = 1 + static_cast<int>(rng() % 4);
        for (int i = 0; i < n; ++i)
            arms.push_back({rng() % 2 ? ArmOrientation::series : ArmOrientation::shunt, random_element(rng, 2)});
        const TunableState st{f(rng), 0.0, 0.0};
        std::vector<AbcdMatrix> factors;
        SParameters got;
        try {
            for (const auto& a : arms) factors.push_back(arm_abcd(a, st));
            got = abcd_to_s(cascade(factors));
        } catch (const SingularNetwork&) {
            continue;
        }
        const SParameters want = nodal_s_parameters(arms, st);
        worst_rel = std::max(worst_rel, s_distance(got, want) / s_norm(want));
        worst_recip = std::max(worst_recip, std::abs(got.s12 - got.s21));
        ++checked;
    }
    return {worst_rel <= 1e-9 && worst_recip <= 1e-9,
            format("1000 circuits, worst relative %.2e, worst |s12-s21| %.2e", worst_rel, worst_recip)};
}

// ---------------------------------------------------------------- A2

Outcome a2_analytic_match() {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> f(1.5e9, 2e9), c(0.1 * kPf, 10 * kPf);
    const double r = 50.0;
    const std::vector<Arm> ideal{{ArmOrientation::shunt, ElementExpr::tunable(TunableSlot::P)},
                                 {ArmOrientation::series, ElementExpr::tunable(TunableSlot::S)}};
    double worst = 0.0;
    int recovered = 0, bad = 0;
    for (int i = 0; i < 1000; ++i) {
        // Load that (cp, cs) matches by construction.
        const double fr = f(rng), cp = c(rng), cs = c(rng);
        const double w = 2 * std::numbers::pi * fr;
        const Complex zl = 1.0 / (1.0 / r - Complex(0, w * cp)) - 1.0 / Complex(0, w * cs);
        std::vector<MatchSolutionPair> sols;
        try {
            sols = analytical_match(Impedance{zl}, fr);
        } catch (const Error&) {
            ++bad;
            continue;
        }
        bool found = false;
        for (const auto& s : sols) {
            const auto sp = nodal_s_parameters(ideal, {fr, s.cp_farads, s.cs_farads});
            const Complex gl = (zl - r) / (zl + r);
            const Complex gin = sp.s11 + sp.s12 * sp.s21 * gl / (1.0 - sp.s22 * gl);
            worst = std::max(worst, std::abs(gin));
            found |= std::abs(s.cp_farads - cp) < 1e-6 * cp && std::abs(s.cs_farads - cs) < 1e-6 * cs;
        }
        recovered += found;
    }
    std::uniform_real_distribution<double> rhi(50.5, 1000.0), x(-500.0, 500.0);
    int raised = 0;
    for (int i = 0; i < 1000; ++i) {
        try {
            analytical_match(Impedance{rhi(rng), x(rng)}, f(rng));
        } catch (const NoFeasibleSolution&) {
            ++raised;
        }
    }
    return {bad == 0 && worst < 1e-9 && recovered == 1000 && raised == 1000,
            format("worst |Gin| %.2e, constructed pair recovered %d/1000, R_L>R_S rejected %d/1000", worst,
                   recovered, raised)};
}

// ---------------------------------------------------------------- A3

Outcome a3_round_trips() {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst_load = 0.0, worst_z = 0.0, worst_g = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Impedance z{std::abs(u(rng)) * 80.0 + 1.0, u(rng) * 120.0};
        const Admittance y{std::abs(u(rng)) * 0.02, u(rng) * 0.05};
        const SParameters s = abcd_to_s(series_arm_abcd(z) * shunt_arm_abcd(y));
        Complex gl{u(rng), u(rng)};
        if (std::abs(gl) > 0.95) gl *= 0.95 / std::abs(gl);
        const auto back = load_reflection_from_input(s, input_reflection(s, ReflectionCoefficient{gl}));
        worst_load = std::max(worst_load, std::abs(back.value - gl));

        // Loads from 0.5 to 500 ohm resistance; outside that band the inverse
        // loses digits in proportion to |Z| / r or r / |Z|.
        const Impedance zl{0.5 * std::pow(1000.0, 0.5 * (u(rng) + 1.0)), 500.0 * u(rng)};
        const auto zb = reflection_to_impedance(impedance_to_reflection(zl));
        worst_z = std::max(worst_z, std::abs(zb.value - zl.value) / std::abs(zl.value));
        const auto gb = impedance_to_reflection(reflection_to_impedance(ReflectionCoefficient{gl}));
        worst_g = std::max(worst_g, std::abs(gb.value - gl));
    }
    return {worst_load <= 1e-12 && worst_z <= 1e-12 && worst_g <= 1e-12,
            format("10000 cases, load %.2e, Z->G->Z %.2e, G->Z->G %.2e", worst_load, worst_z, worst_g)};
}

// ---------------------------------------------------------------- A4

Outcome a4_gradients() {
    const NormalizationSpec box{{1.5e9, 0.0, 0.0}, {2.0e9, 10 * kPf, 10 * kPf}};
    const std::array<double, 3> span{0.5e9, 10 * kPf, 10 * kPf};
    double worst = 0.0;
    std::size_t params_checked = 0, inputs_checked = 0;
    std::size_t param_count = 0;
    std::set<std::size_t> covered;
    for (int c = 0; c < 100; ++c) {
        MlpModel m(ModelRole::recbm, 3, 8, 0.125, box);
        m.initialize(1000 + c);
        Rng rng(2000 + c);
        for (int l = 0; l < m.layer_count(); ++l)
            for (Eigen::Index k = 0; k < m.bias(l).size(); ++k) m.bias(l)(k) = 0.05 * rng.normal();
        param_count = m.parameter_count();
        Matrix x(3, 2), w(8, 2);
        for (Eigen::Index j = 0; j < 2; ++j)
            for (int i = 0; i < 3; ++i) x(i, j) = box.min[i] + span[i] * rng.uniform();
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
        auto objective = [&](const MlpModel& mm, const Matrix& xx) {
            return (mm.forward(xx).array() * w.array()).sum();
        };
        const auto g = backward(m, forward_cached(m, x), w);
        auto check = [&](double analytic, double fd, double floor) {
            const double err = std::abs(analytic - fd) / std::max(std::abs(fd), floor);
            worst = std::max(worst, err);
        };
        // Every parameter index is checked in exactly one case.
        const double h = 1e-6;
        for (std::size_t p = static_cast<std::size_t>(c); p < param_count; p += 100) {
            MlpModel plus = m, minus = m;
            plus.parameters()[p] += h;
            minus.parameters()[p] -= h;
            check(g.parameters[p], (objective(plus, x) - objective(minus, x)) / (2 * h), 1.0);
            covered.insert(p);
            ++params_checked;
        }
        double gmax = 0.0;
        for (Eigen::Index i = 0; i < g.inputs.size(); ++i) gmax = std::max(gmax, std::abs(g.inputs(i)));
        for (Eigen::Index j = 0; j < 2; ++j)
            for (int i = 0; i < 3; ++i) {
                const double hi = 1e-6 * span[i];
                Matrix xp = x, xm = x;
                xp(i, j) += hi;
                xm(i, j) -= hi;
                check(g.inputs(i, j), (objective(m, xp) - objective(m, xm)) / (2 * hi), 1e-3 * gmax);
                ++inputs_checked;
            }
    }
    return {worst <= 1e-4 && covered.size() == param_count,
            format("100 cases, %zu parameter and %zu input checks covering %zu/%zu parameters, worst rel %.2e",
                   params_checked, inputs_checked, covered.size(), param_count, worst)};
}

// ---------------------------------------------------------------- shared pipeline

struct Pipeline {
    RunConfig config = RunConfig::preset(Profile::desk);
    CircuitTopology topo = reference_practical_circuit();
    fs::path work;
    std::optional<MlpModel> recbm;
    double recbm_seconds = 0.0;
    double recbm_val_mae = 0.0;
    std::optional<MlpModel> ims;
    double ims_seconds = 0.0;
    std::map<double, RunReport> model_runs;  // by noise sigma

    void ensure_recbm() {
        if (recbm) return;
        const auto t0 = std::chrono::steady_clock::now();
        const Dataset sweep = generate_sweep(topo, config.sweep_spec(topo), config.workers);
        if (sweep.size() != 28611) throw ValidationError(format("desk sweep has %zu rows", sweep.size()));
        auto trained = train_recbm_model(config, sweep, topo.fingerprint());
        const Dataset val = sweep.subset(trained.result.val_rows);
        recbm_val_mae = evaluate_surrogate(trained.model, val.inputs(), val.targets()).overall_mae;
        recbm = std::move(trained.model);
        save_model(*recbm, work / "recbm.bin");
        write_loss_csv(trained.result.history, work / "loss_recbm.csv");
        recbm_seconds = seconds_since(t0);
    }

    void ensure_ims() {
        ensure_recbm();
        if (ims) return;
        const auto t0 = std::chrono::steady_clock::now();
        const Dataset inverse = generate_inverse_dataset(*recbm, config.sweep_spec(topo));
        auto trained = train_ims_model(config, inverse, *recbm);
        ims = std::move(trained.model);
        save_model(*ims, work / "ims.bin");
        write_loss_csv(trained.result.history, work / "loss_ims.csv");
        ims_seconds = seconds_since(t0);
    }

    const RunReport& model_run(double sigma) {
        if (auto it = model_runs.find(sigma); it != model_runs.end()) return it->second;
        ensure_ims();
        const ScenarioSuite suite = generate_scenarios(topo, 500, config.scenarios.seed, sigma);
        RunConfig c = config;
        c.match.surrogate = SurrogateKind::model;
        RunReport report = run_matching(c, suite, {&topo, &*recbm, &*ims});
        report.manifest = make_manifest(c, "acceptance model run");
        write_run_report(report, work / format("model_sigma_%g", sigma));
        return model_runs.emplace(sigma, std::move(report)).first->second;
    }
};

const StrategyReport& find(const RunReport& r, Strategy s) {
    for (const auto& sr : r.strategies)
        if (sr.strategy == s) return sr;
    throw ValidationError("strategy missing from report: " + to_string(s));
}

// ---------------------------------------------------------------- A5

Outcome a5_desk_training(Pipeline& p) {
    p.ensure_recbm();
    const auto [x, y] = random_sweep_samples(p.topo, 10000, p.config.eval.seed);
    const double offgrid = evaluate_surrogate(*p.recbm, x, y).overall_mae;
    return {p.recbm_val_mae <= 5e-3 && p.recbm_seconds <= 15 * 60,
            format("held-out MAE %.3e (off-lattice %.3e), %.0f s", p.recbm_val_mae, offgrid, p.recbm_seconds)};
}

// ---------------------------------------------------------------- A6

Outcome a6_oracle_ceiling(Pipeline& p) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = p.config;
    c.match.surrogate = SurrogateKind::oracle;
    c.match.strategies = {Strategy::grid, Strategy::sapso};
    c.match.grid_step_pf = 0.01;
    c.match.repeats = 5;
    const ScenarioSuite suite = generate_scenarios(p.topo, 500, c.scenarios.seed, 0.0);
    RunReport report = run_matching(c, suite, {&p.topo, nullptr, nullptr});
    report.manifest = make_manifest(c, "acceptance oracle run");
    write_run_report(report, p.work / "oracle");
    const double secs = seconds_since(t0);

    auto below = [](const StrategyReport& sr, auto field, double t) {
        std::size_t n = 0;
        for (const auto& r : sr.rows) n += r.error.empty() && field(r) < t;
        return static_cast<double>(n) / static_cast<double>(sr.rows.size());
    };
    const auto& grid = find(report, Strategy::grid);
    const auto& sapso = find(report, Strategy::sapso);
    const double g = below(grid, [](const ScenarioRow& r) { return r.tuned_psi; }, 0.005);
    const double s = below(sapso, [](const ScenarioRow& r) { return r.tuned_psi; }, 0.005);
    const double sd = below(sapso, [](const ScenarioRow& r) { return r.psi_sd; }, 0.01);
    return {g >= 0.99 && s >= 0.99 && sd >= 0.95 && secs <= 10 * 60,
            format("grid %.1f%%, SAPSO %.1f%% below 0.005; SAPSO SD<0.01 on %.1f%%; %.0f s", 100 * g, 100 * s,
                   100 * sd, secs)};
}

// ---------------------------------------------------------------- A7

Outcome a7_trend(Pipeline& p) {
    p.ensure_recbm();
    const auto t0 = std::chrono::steady_clock::now();
    const RunReport& report = p.model_run(0.0);
    const double secs = seconds_since(t0);
    const double thr = report.compliance_threshold;
    auto sum = [&](Strategy s) { return summarize(find(report, s).rows, thr); };
    const Summary sapso = sum(Strategy::sapso), adam = sum(Strategy::adadam), ims = sum(Strategy::ims),
                  grid = sum(Strategy::grid), ideal = sum(Strategy::ideal);
    bool ims_two = true;
    for (const auto& r : find(report, Strategy::ims).rows) ims_two &= r.evaluations == 2.0;

    const bool order = sapso.compliance >= adam.compliance && grid.compliance >= adam.compliance &&
                       ims.compliance >= adam.compliance && adam.compliance > ideal.compliance;
    const bool levels = ideal.compliance < 0.10 && sapso.compliance > 0.8 && adam.compliance > 0.8 &&
                        ims.compliance > 0.8 && grid.compliance > 0.8;
    const bool evals = sapso.mean_evaluations > adam.mean_evaluations && adam.mean_evaluations > 2.0 && ims_two;
    return {order && levels && evals && secs <= 20 * 60,
            format("compliance SAPSO %.1f%% grid %.1f%% IMS %.1f%% AD-Adam %.1f%% ideal %.1f%%; "
                   "mean evaluations %.0f / %.0f / %s; %.0f s (IMS training %.0f s)",
                   100 * sapso.compliance, 100 * grid.compliance, 100 * ims.compliance, 100 * adam.compliance,
                   100 * ideal.compliance, sapso.mean_evaluations, adam.mean_evaluations,
                   ims_two ? "2" : "not 2", secs, p.ims_seconds)};
}

// ---------------------------------------------------------------- A8

Outcome a8_noise(Pipeline& p) {
    p.ensure_ims();
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<const RunReport*> runs;
    for (double sigma : kNoisePresets) runs.push_back(&p.model_run(sigma));
    const double secs = seconds_since(t0);
    bool monotone = true;
    std::string detail;
    for (const auto& sr : runs.front()->strategies) {
        std::vector<double> c;
        for (const RunReport* r : runs) c.push_back(summarize(find(*r, sr.strategy).rows, r->compliance_threshold).compliance);
        const bool ok = c[1] <= c[0] && c[2] <= c[1];
        monotone &= ok;
        detail += format("%s %.1f/%.1f/%.1f%s; ", to_string(sr.strategy).c_str(), 100 * c[0], 100 * c[1],
                         100 * c[2], ok ? "" : " (rises)");
    }
    std::vector<fs::path> dirs;
    for (double sigma : kNoisePresets) dirs.push_back(p.work / format("model_sigma_%g", sigma));
    consolidate_reports(dirs, p.work / "noise_report");
    return {monotone && secs <= 30 * 60, detail + format("%.0f s", secs)};
}

// ---------------------------------------------------------------- A9

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Every seeded step on a small configuration, written under `dir`.
void seeded_pipeline(const fs::path& dir, int workers) {
    RunConfig c = RunConfig::preset(Profile::desk);
    c.workers = workers;
    c.sweep = {0.1, 1.0};
    c.train_recbm.epochs = 3;
    c.train_ims.epochs = 3;
    c.match.repeats = 2;
    c.match.grid_step_pf = 0.5;
    const CircuitTopology topo = reference_practical_circuit();
    fs::create_directories(dir);
    const Dataset sweep = generate_sweep(topo, c.sweep_spec(topo), workers);
    save_dataset(sweep, dir / "sweep.bin", DatasetFormat::binary);
    save_dataset(sweep, dir / "sweep.csv", DatasetFormat::csv);
    auto recbm = train_recbm_model(c, sweep, topo.fingerprint());
    save_model(recbm.model, dir / "recbm.bin");
    write_loss_csv(recbm.result.history, dir / "loss_recbm.csv");
    const Dataset inverse = generate_inverse_dataset(recbm.model, c.sweep_spec(topo));
    save_dataset(inverse, dir / "inverse.bin", DatasetFormat::binary);
    auto ims = train_ims_model(c, inverse, recbm.model);
    save_model(ims.model, dir / "ims.bin");
    const auto [x, y] = random_sweep_samples(topo, 200, c.eval.seed);
    const auto cols = sweep_columns();
    write_eval_report(evaluate_surrogate(recbm.model, x, y), {cols.begin() + 3, cols.end()}, dir / "eval");
    const ScenarioSuite suite = generate_scenarios(topo, 12, c.scenarios.seed, 0.0002);
    save_scenarios(suite, dir / "scenarios.json");
    RunReport report = run_matching(c, suite, {&topo, &recbm.model, &ims.model});
    report.manifest = make_manifest(c, "determinism");
    write_run_report(report, dir / "run");
}

Outcome a9_determinism(Pipeline& p) {
    const fs::path root = p.work / "determinism";
    fs::remove_all(root);
    seeded_pipeline(root / "first", 1);
    seeded_pipeline(root / "second", 1);
    seeded_pipeline(root / "threaded", 2);
    std::size_t files = 0, differ = 0;
    std::string first_diff;
    for (const auto& e : fs::recursive_directory_iterator(root / "first")) {
        if (!e.is_regular_file() || e.path().filename() == "timing.csv") continue;
        const fs::path rel = fs::relative(e.path(), root / "first");
        const std::string a = slurp(e.path());
        for (const char* other : {"second", "threaded"}) {
            if (std::string_view(other) == "threaded" && rel.filename() == "manifest.json") continue;
            ++files;
            if (a != slurp(root / other / rel)) {
                ++differ;
                if (first_diff.empty()) first_diff = (fs::path(other) / rel).string();
            }
        }
    }
    return {differ == 0 && files > 0,
            format("%zu file comparisons, %zu differ%s%s", files, differ, first_diff.empty() ? "" : ", first: ",
                   first_diff.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rfmatch acceptance criteria"};
    std::vector<std::string> only;
    std::string work = "acceptance_work";
    int workers = 1;
    app.add_option("--only", only, "criteria to run, e.g. --only A1 --only A4");
    app.add_option("--work", work, "directory for models and reports");
    app.add_option("-j,--workers", workers, "worker threads for matching runs");
    CLI11_PARSE(app, argc, argv);

    Pipeline pipeline;
    pipeline.work = work;
    pipeline.config.workers = workers;
    fs::create_directories(pipeline.work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"A1", a1_network_oracle},
        {"A2", a2_analytic_match},
        {"A3", a3_round_trips},
        {"A4", a4_gradients},
        {"A5", [&] { return a5_desk_training(pipeline); }},
        {"A6", [&] { return a6_oracle_ceiling(pipeline); }},
        {"A7", [&] { return a7_trend(pipeline); }},
        {"A8", [&] { return a8_noise(pipeline); }},
        {"A9", [&] { return a9_determinism(pipeline); }},
    };
    const std::map<std::string, double> limits = {{"A1", 10}, {"A2", 5}, {"A3", 5}, {"A4", 30}};

    int failed = 0;
    for (const auto& [id, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = seconds_since(t0);
        if (auto it = limits.find(id); it != limits.end() && secs > it->second) {
            o.pass = false;
            o.detail += format(" (over the %.0f s limit)", it->second);
        }
        failed += !o.pass;
        std::printf("%s %s  %s  [%.1f s]\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
