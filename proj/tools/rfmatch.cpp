#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "rfmatch/bench.hpp"
#include "rfmatch/error.hpp"
#include "rfmatch/hash.hpp"

using namespace rfmatch;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInvalid = 2, kRuntime = 3 };

/// Flags shared by every subcommand. Unset optionals leave the config alone.
struct CommonFlags {
    std::string config_file;
    std::string profile;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string out;
    std::string circuit;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("-c,--config", f.config_file, "run-config JSON file")->check(CLI::ExistingFile);
    cmd->add_option("--profile", f.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--seed", f.seed, "global seed");
    cmd->add_option("-j,--workers", f.workers, "worker threads");
    cmd->add_option("-o,--out", f.out, "output directory");
    cmd->add_option("--circuit", f.circuit, "circuit spec (default: built-in reference circuit)")
        ->check(CLI::ExistingFile);
}

RunConfig resolve(const CommonFlags& f) {
    nlohmann::json file;
    if (!f.config_file.empty()) {
        std::ifstream in(f.config_file);
        try {
            file = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("run config " + f.config_file + ": " + e.what());
        }
    }
    Profile profile = Profile::desk;
    if (!f.profile.empty())
        profile = parse_profile(f.profile);
    else if (file.contains("profile"))
        profile = parse_profile(file["profile"].get<std::string>());
    RunConfig c = RunConfig::preset(profile);
    if (!file.is_null()) c.merge(file);
    c.profile = profile;
    if (f.seed) {
        c.seed = *f.seed;
        c.train_recbm.seed = *f.seed;
        c.train_ims.seed = *f.seed + 1;
        c.match.sapso.seed = *f.seed;
    }
    if (f.workers) c.workers = *f.workers;
    if (!f.out.empty()) c.paths.output_dir = f.out;
    if (!f.circuit.empty()) c.paths.circuit = f.circuit;
    return c;
}

fs::path require(const fs::path& p, const char* what) {
    if (p.empty()) throw ValidationError(std::string("no ") + what + " given");
    if (!fs::exists(p)) throw ValidationError(std::string(what) + " not found: " + p.string());
    return p;
}

std::string command_line(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
    return s;
}

void print_progress(const char* tag, const EpochRecord& e, int epochs) {
    if (e.epoch % 10 == 0 || e.epoch == epochs)
        std::fprintf(stderr, "%s epoch %d/%d train %.4e val %.4e\n", tag, e.epoch, epochs, e.train_mse,
                     e.val_mse);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rfmatch: surrogate-assisted impedance matching workbench"};
    app.require_subcommand(1);
    const std::string invocation = command_line(argc, argv);

    CommonFlags common;

    // circuit validate
    auto* circuit = app.add_subcommand("circuit", "circuit specifications");
    circuit->require_subcommand(1);
    auto* circuit_validate = circuit->add_subcommand("validate", "load and check a circuit spec");
    std::string spec_path;
    circuit_validate->add_option("spec", spec_path, "circuit spec JSON")->required();

    // data
    auto* data = app.add_subcommand("data", "dataset generation");
    data->require_subcommand(1);
    auto* data_sweep = data->add_subcommand("sweep", "exact-oracle sweep of the tunable lattice");
    auto* data_inverse = data->add_subcommand("inverse", "inverse (load -> capacitance) dataset");
    auto* data_scen = data->add_subcommand("scenarios", "seeded mismatch scenarios");
    std::string format = "binary";
    std::optional<double> f_step, c_step;
    for (auto* cmd : {data_sweep, data_inverse}) {
        add_common(cmd, common);
        cmd->add_option("--format", format, "binary or csv")->check(CLI::IsMember({"binary", "csv"}));
        cmd->add_option("--f-step-ghz", f_step, "frequency step");
        cmd->add_option("--c-step-pf", c_step, "capacitance step");
    }
    std::string recbm_path, ims_path, sweep_path, inverse_path, scenarios_path;
    data_inverse->add_option("--recbm", recbm_path, "trained RECBM-Net");
    add_common(data_scen, common);
    std::optional<std::size_t> scen_count;
    std::optional<std::uint64_t> scen_seed;
    std::optional<double> noise;
    data_scen->add_option("-n,--count", scen_count, "number of scenarios");
    data_scen->add_option("--scenario-seed", scen_seed, "scenario seed");
    data_scen->add_option("--noise", noise, "measurement noise sigma");

    // train
    auto* train_cmd = app.add_subcommand("train", "surrogate training");
    train_cmd->require_subcommand(1);
    auto* train_recbm = train_cmd->add_subcommand("recbm", "train RECBM-Net on a sweep dataset");
    auto* train_ims = train_cmd->add_subcommand("ims", "train IMS-Net on an inverse dataset");
    std::optional<int> epochs, batch;
    std::optional<double> lr;
    std::optional<double> width;
    for (auto* cmd : {train_recbm, train_ims}) {
        add_common(cmd, common);
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch", batch, "batch size");
        cmd->add_option("--lr", lr, "initial learning rate");
        cmd->add_option("--width-scale", width, "hidden width multiplier");
    }
    train_recbm->add_option("--sweep", sweep_path, "sweep dataset");
    train_ims->add_option("--inverse", inverse_path, "inverse dataset");
    train_ims->add_option("--recbm", recbm_path, "RECBM-Net the IMS-Net is paired with");

    // eval surrogate
    auto* eval = app.add_subcommand("eval", "surrogate evaluation");
    eval->require_subcommand(1);
    auto* eval_surrogate = eval->add_subcommand("surrogate", "per-dimension MAE/MRE of a RECBM-Net");
    add_common(eval_surrogate, common);
    eval_surrogate->add_option("--recbm", recbm_path, "trained RECBM-Net");
    std::optional<std::size_t> samples;
    eval_surrogate->add_option("--samples", samples, "random off-lattice test samples");
    eval_surrogate->add_option("--sweep", sweep_path, "evaluate on this dataset instead");

    // match run
    auto* match = app.add_subcommand("match", "matching experiments");
    match->require_subcommand(1);
    auto* match_run = match->add_subcommand("run", "run strategies over a scenario suite");
    add_common(match_run, common);
    std::vector<std::string> strategies;
    std::optional<int> repeats;
    std::optional<double> threshold, grid_step;
    std::string surrogate_kind;
    match_run->add_option("--scenarios", scenarios_path, "scenario suite (generated when omitted)");
    match_run->add_option("--recbm", recbm_path, "trained RECBM-Net");
    match_run->add_option("--ims", ims_path, "trained IMS-Net");
    match_run->add_option("-s,--strategy", strategies, "strategies to run (repeatable)")
        ->check(CLI::IsMember({"sapso", "adadam", "ims", "grid", "ideal"}));
    match_run->add_option("--repeats", repeats, "SAPSO repeats per scenario");
    match_run->add_option("--threshold", threshold, "compliance threshold on |Gamma_in|");
    match_run->add_option("--grid-step-pf", grid_step, "grid search step");
    match_run->add_option("--surrogate", surrogate_kind, "model or oracle")
        ->check(CLI::IsMember({"model", "oracle"}));
    match_run->add_option("-n,--count", scen_count, "scenarios to generate");
    match_run->add_option("--noise", noise, "measurement noise sigma for generated scenarios");

    // report
    auto* report = app.add_subcommand("report", "consolidate match-run directories");
    std::vector<std::string> runs;
    std::string report_out = "report";
    std::optional<double> inference_cost;
    report->add_option("runs", runs, "match-run output directories")->required()->check(CLI::ExistingDirectory);
    report->add_option("-o,--out", report_out, "output directory");
    report->add_option("--inference-cost", inference_cost, "cost of one surrogate inference (e.g. FLOPs)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (circuit_validate->parsed()) {
            const CircuitTopology topo = load_circuit_spec(spec_path);
            int tunable = 0;
            std::vector<std::size_t> where;
            for (std::size_t i = 0; i < topo.arms().size(); ++i) {
                const auto& e = topo.arms()[i].expr;
                if (e.count_tunable(TunableSlot::P) + e.count_tunable(TunableSlot::S) > 0) {
                    ++tunable;
                    where.push_back(i);
                }
            }
            std::printf("circuit %s\n", topo.name().c_str());
            std::printf("arms %zu\n", topo.arms().size());
            std::printf("tunable arms %d (indices", tunable);
            for (std::size_t i : where) std::printf(" %zu", i);
            std::printf(")\n");
            std::printf("band %.6g-%.6g Hz\n", topo.band_hz().lo, topo.band_hz().hi);
            std::printf("fingerprint %s\n", hex_fingerprint(topo.fingerprint()).c_str());
            return kOk;
        }

        RunConfig config = resolve(common);
        if (f_step) config.sweep.f_step_ghz = *f_step;
        if (c_step) config.sweep.c_step_pf = *c_step;
        if (scen_count) config.scenarios.count = *scen_count;
        if (scen_seed) config.scenarios.seed = *scen_seed;
        if (noise) config.scenarios.noise_sigma = *noise;
        if (width) config.width_scale = *width;
        if (!recbm_path.empty()) config.paths.recbm = recbm_path;
        if (!ims_path.empty()) config.paths.ims = ims_path;
        if (!sweep_path.empty()) config.paths.sweep = sweep_path;
        if (!inverse_path.empty()) config.paths.inverse = inverse_path;
        if (!scenarios_path.empty()) config.paths.scenarios = scenarios_path;
        if (samples) config.eval.test_samples = *samples;
        TrainingConfig& tc = train_ims->parsed() ? config.train_ims : config.train_recbm;
        if (epochs) tc.epochs = *epochs;
        if (batch) tc.batch_size = *batch;
        if (lr) tc.learning_rate = *lr;
        if (!strategies.empty()) {
            config.match.strategies.clear();
            for (const auto& s : strategies) config.match.strategies.push_back(parse_strategy(s));
        }
        if (repeats) config.match.repeats = *repeats;
        if (threshold) config.match.compliance_threshold = *threshold;
        if (grid_step) config.match.grid_step_pf = *grid_step;
        if (!surrogate_kind.empty())
            config.match.surrogate = surrogate_kind == "oracle" ? SurrogateKind::oracle : SurrogateKind::model;

        if (report->parsed()) {
            std::vector<fs::path> dirs(runs.begin(), runs.end());
            consolidate_reports(dirs, report_out, inference_cost);
            std::printf("wrote %s/table_stats.csv and %s/noise_sweep.csv\n", report_out.c_str(),
                        report_out.c_str());
            return kOk;
        }

        config.validate();
        const fs::path out = config.paths.output_dir;
        fs::create_directories(out);
        const CircuitTopology topo = load_topology(config);
        const auto fmt = format == "csv" ? DatasetFormat::csv : DatasetFormat::binary;
        const std::string ext = format == "csv" ? ".csv" : ".bin";
        nlohmann::json manifest = make_manifest(config, invocation);
        manifest["circuit_fingerprint"] = hex_fingerprint(topo.fingerprint());

        if (data_sweep->parsed()) {
            const Dataset d = generate_sweep(topo, config.sweep_spec(topo), config.workers);
            save_dataset(d, out / ("sweep" + ext), fmt);
            write_json(manifest, out / "manifest_sweep.json");
            std::printf("sweep rows %zu skipped %zu -> %s\n", d.size(), d.skipped,
                        (out / ("sweep" + ext)).c_str());
        } else if (data_inverse->parsed()) {
            const MlpModel recbm = load_model(require(config.paths.recbm, "RECBM-Net"));
            const Dataset d = generate_inverse_dataset(recbm, config.sweep_spec(topo));
            save_dataset(d, out / ("inverse" + ext), fmt);
            manifest["recbm_fingerprint"] = hex_fingerprint(recbm.fingerprint());
            write_json(manifest, out / "manifest_inverse.json");
            std::printf("inverse rows %zu skipped %zu -> %s\n", d.size(), d.skipped,
                        (out / ("inverse" + ext)).c_str());
        } else if (data_scen->parsed()) {
            const ScenarioSuite suite = generate_scenarios(topo, config.scenarios.count, config.scenarios.seed,
                                                           config.scenarios.noise_sigma);
            save_scenarios(suite, out / "scenarios.json");
            write_json(manifest, out / "manifest_scenarios.json");
            std::printf("scenarios %zu -> %s\n", suite.scenarios.size(), (out / "scenarios.json").c_str());
        } else if (train_recbm->parsed()) {
            const Dataset sweep = load_dataset(require(config.paths.sweep, "sweep dataset"));
            const int n = config.train_recbm.epochs;
            auto trained = train_recbm_model(config, sweep, topo.fingerprint(),
                                             [n](const EpochRecord& e) { print_progress("recbm", e, n); });
            save_model(trained.model, out / "recbm.bin");
            write_loss_csv(trained.result.history, out / "loss_recbm.csv");
            manifest["recbm_fingerprint"] = hex_fingerprint(trained.model.fingerprint());
            write_json(manifest, out / "manifest_recbm.json");
            std::printf("recbm %s final val_mse %.6e\n", hex_fingerprint(trained.model.fingerprint()).c_str(),
                        trained.result.history.back().val_mse);
        } else if (train_ims->parsed()) {
            const Dataset inverse = load_dataset(require(config.paths.inverse, "inverse dataset"));
            const MlpModel recbm = load_model(require(config.paths.recbm, "RECBM-Net"));
            const int n = config.train_ims.epochs;
            auto trained = train_ims_model(config, inverse, recbm,
                                           [n](const EpochRecord& e) { print_progress("ims", e, n); });
            save_model(trained.model, out / "ims.bin");
            write_loss_csv(trained.result.history, out / "loss_ims.csv");
            manifest["recbm_fingerprint"] = hex_fingerprint(recbm.fingerprint());
            manifest["ims_fingerprint"] = hex_fingerprint(trained.model.fingerprint());
            write_json(manifest, out / "manifest_ims.json");
            std::printf("ims %s final val_mse %.6e\n", hex_fingerprint(trained.model.fingerprint()).c_str(),
                        trained.result.history.back().val_mse);
        } else if (eval_surrogate->parsed()) {
            const MlpModel recbm = load_model(require(config.paths.recbm, "RECBM-Net"));
            Matrix x, y;
            if (!config.paths.sweep.empty()) {
                const Dataset d = load_dataset(require(config.paths.sweep, "sweep dataset"));
                x = d.inputs();
                y = d.targets();
            } else {
                std::tie(x, y) = random_sweep_samples(topo, config.eval.test_samples, config.eval.seed);
            }
            const SurrogateErrorReport r = evaluate_surrogate(recbm, x, y);
            const auto cols = sweep_columns();
            write_eval_report(r, std::vector<std::string>(cols.begin() + 3, cols.end()), out);
            manifest["recbm_fingerprint"] = hex_fingerprint(recbm.fingerprint());
            write_json(manifest, out / "manifest_eval.json");
            std::printf("samples %zu overall MAE %.6e MRE %.6e\n", r.samples, r.overall_mae, r.overall_mre);
        } else if (match_run->parsed()) {
            ScenarioSuite suite =
                config.paths.scenarios.empty()
                    ? generate_scenarios(topo, config.scenarios.count, config.scenarios.seed,
                                         config.scenarios.noise_sigma)
                    : load_scenarios(require(config.paths.scenarios, "scenario suite"));
            std::optional<MlpModel> recbm, ims;
            if (config.match.surrogate == SurrogateKind::model || !config.paths.recbm.empty())
                recbm = load_model(require(config.paths.recbm, "RECBM-Net"));
            if (!config.paths.ims.empty()) ims = load_model(require(config.paths.ims, "IMS-Net"));
            MatchInputs inputs{&topo, recbm ? &*recbm : nullptr, ims ? &*ims : nullptr};
            RunReport rep = run_matching(config, suite, inputs);
            manifest["scenario_seed"] = suite.seed;
            manifest["scenario_count"] = suite.scenarios.size();
            if (recbm) manifest["recbm_fingerprint"] = hex_fingerprint(recbm->fingerprint());
            if (ims) manifest["ims_fingerprint"] = hex_fingerprint(ims->fingerprint());
            rep.manifest = manifest;
            write_run_report(rep, out);
            for (const auto& sr : rep.strategies) {
                const Summary s = summarize(sr.rows, rep.compliance_threshold);
                std::printf("%-7s compliance %.4f mean %.4g median %.4g evals %.1f failed %zu\n",
                            to_string(sr.strategy).c_str(), s.compliance, s.mean, s.median, s.mean_evaluations,
                            s.failed);
            }
        }
        return kOk;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kInvalid;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kInvalid;
    } catch (const InvalidArgument& e) {
        std::fprintf(stderr, "invalid argument: %s\n", e.what());
        return kInvalid;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntime;
    }
}
