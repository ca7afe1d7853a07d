#include "rfmatch/matchers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "rfmatch/error.hpp"
#include "rfmatch/hash.hpp"

namespace rfmatch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kPico = 1e-12;

SParameters nan_s(ReferenceImpedance z0) {
    SParameters s;
    s.s11 = s.s12 = s.s21 = s.s22 = Complex(kNaN, kNaN);
    s.reference = z0;
    return s;
}

double safe_psi(const SParameters& s, ReflectionCoefficient gl) {
    const double v = objective_psi(s, gl);
    return std::isfinite(v) ? v : kInf;
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace

// ---------------------------------------------------------------- Surrogate

SParameters Surrogate::evaluate(double f_hz, CapacitorPair x) {
    SParameters s;
    compute(f_hz, std::span<const CapacitorPair>(&x, 1), std::span<SParameters>(&s, 1));
    ++evaluations_;
    return s;
}

std::vector<SParameters> Surrogate::evaluate(double f_hz, std::span<const CapacitorPair> xs) {
    std::vector<SParameters> out(xs.size());
    compute(f_hz, xs, out);
    evaluations_ += xs.size();
    return out;
}

std::vector<double> Surrogate::psi(double f_hz, std::span<const CapacitorPair> xs,
                                   ReflectionCoefficient gl) {
    const auto s = evaluate(f_hz, xs);
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = safe_psi(s[i], gl);
    return out;
}

PsiGradient Surrogate::psi_gradient(double f_hz, CapacitorPair x, ReflectionCoefficient gl) {
    const PsiGradient g = compute_gradient(f_hz, x, gl);
    evaluations_ += static_cast<std::uint64_t>(gradient_cost());
    return g;
}

std::vector<double> Surrogate::psi_lattice(double f_hz, std::span<const double> cp_values,
                                           std::span<const double> cs_values,
                                           ReflectionCoefficient gl) {
    auto out = compute_lattice(f_hz, cp_values, cs_values, gl);
    evaluations_ += cp_values.size() * cs_values.size();
    return out;
}

SParameters Surrogate::peek(double f_hz, CapacitorPair x) const {
    SParameters s;
    compute(f_hz, std::span<const CapacitorPair>(&x, 1), std::span<SParameters>(&s, 1));
    return s;
}

std::vector<double> Surrogate::compute_lattice(double f_hz, std::span<const double> cp_values,
                                               std::span<const double> cs_values,
                                               ReflectionCoefficient gl) const {
    std::vector<double> out;
    out.reserve(cp_values.size() * cs_values.size());
    std::vector<CapacitorPair> row(cs_values.size());
    std::vector<SParameters> s(cs_values.size());
    for (double cp : cp_values) {
        for (std::size_t j = 0; j < cs_values.size(); ++j) row[j] = {cp, cs_values[j]};
        compute(f_hz, row, s);
        for (const auto& sj : s) out.push_back(safe_psi(sj, gl));
    }
    return out;
}

// ---------------------------------------------------------------- oracle

OracleSurrogate::OracleSurrogate(const CircuitTopology& topology, double fd_step)
    : topology_(&topology), fd_step_(fd_step) {
    if (!(fd_step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
}

void OracleSurrogate::compute(double f_hz, std::span<const CapacitorPair> xs,
                              std::span<SParameters> out) const {
    const FrequencySlice slice(*topology_, f_hz);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        try {
            out[i] = slice.at(xs[i].cp, xs[i].cs);
        } catch (const SingularNetwork&) {
            out[i] = nan_s(topology_->reference());
        }
    }
}

PsiGradient OracleSurrogate::compute_gradient(double f_hz, CapacitorPair x,
                                              ReflectionCoefficient gl) const {
    const FrequencySlice slice(*topology_, f_hz);
    auto at = [&](double cp, double cs) {
        try {
            return safe_psi(slice.at(cp, cs), gl);
        } catch (const SingularNetwork&) {
            return kInf;
        }
    };
    const double h = fd_step_;
    PsiGradient g;
    g.psi = at(x.cp, x.cs);
    g.d_cp = (at(x.cp + h, x.cs) - at(x.cp - h, x.cs)) / (2.0 * h);
    g.d_cs = (at(x.cp, x.cs + h) - at(x.cp, x.cs - h)) / (2.0 * h);
    return g;
}

std::vector<double> OracleSurrogate::compute_lattice(double f_hz, std::span<const double> cp_values,
                                                     std::span<const double> cs_values,
                                                     ReflectionCoefficient gl) const {
    const FrequencySlice slice(*topology_, f_hz);
    const bool p_first = slice.p_first();
    std::vector<AbcdMatrix> cp_part(cp_values.size());
    std::vector<AbcdMatrix> cs_part(cs_values.size());
    for (std::size_t i = 0; i < cp_values.size(); ++i) {
        const TunableState st{f_hz, cp_values[i], 0.0};
        cp_part[i] = p_first ? slice.head(st) : slice.tail(st);
    }
    for (std::size_t j = 0; j < cs_values.size(); ++j) {
        const TunableState st{f_hz, 0.0, cs_values[j]};
        cs_part[j] = p_first ? slice.tail(st) : slice.head(st);
    }
    std::vector<double> out(cp_values.size() * cs_values.size());
    for (std::size_t i = 0; i < cp_values.size(); ++i) {
        for (std::size_t j = 0; j < cs_values.size(); ++j) {
            double v;
            try {
                v = p_first ? safe_psi(slice.combine(cp_part[i], cs_part[j]), gl)
                            : safe_psi(slice.combine(cs_part[j], cp_part[i]), gl);
            } catch (const SingularNetwork&) {
                v = kInf;
            }
            out[i * cs_values.size() + j] = v;
        }
    }
    return out;
}

// ---------------------------------------------------------------- model

ModelSurrogate::ModelSurrogate(const MlpModel& model, ReferenceImpedance reference)
    : model_(&model), reference_(reference), fingerprint_(model.fingerprint()) {
    if (model.role() != ModelRole::recbm || model.inputs() != 3 || model.outputs() != 8)
        throw ValidationError("surrogate model must be a RECBM-Net with 3 inputs and 8 outputs");
}

void ModelSurrogate::compute(double f_hz, std::span<const CapacitorPair> xs,
                             std::span<SParameters> out) const {
    Matrix x(3, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        x(0, c) = f_hz;
        x(1, c) = xs[i].cp;
        x(2, c) = xs[i].cs;
    }
    const Matrix y = model_->predict(x);
    std::array<double, 8> v;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (int k = 0; k < 8; ++k) v[k] = y(k, static_cast<Eigen::Index>(i));
        out[i] = SParameters::from_vector(v, reference_);
    }
}

PsiGradient ModelSurrogate::compute_gradient(double f_hz, CapacitorPair x,
                                             ReflectionCoefficient gl) const {
    Matrix in(3, 1);
    in << f_hz, x.cp, x.cs;
    const ForwardCache cache = forward_cached(*model_, in);
    const double scale = model_->label_scale();
    std::array<double, 8> v;
    for (int k = 0; k < 8; ++k) v[k] = cache.output(k, 0) / scale;
    const SParameters s = SParameters::from_vector(v, reference_);
    const auto ds = objective_psi_gradient(s, gl);
    Matrix upstream(8, 1);
    for (int k = 0; k < 8; ++k) upstream(k, 0) = ds[k] / scale;
    const GradientBundle grads = backward(*model_, cache, upstream, kInputGradients);
    return {objective_psi(s, gl), grads.inputs(1, 0), grads.inputs(2, 0)};
}

// ---------------------------------------------------------------- configs

void SapsoConfig::validate() const {
    if (particles < 2) throw InvalidArgument("SAPSO needs at least 2 particles");
    if (!(kappa1 + kappa2 > 4.0)) throw InvalidArgument("kappa1 + kappa2 must exceed 4");
    if (!(cooling > 0.0 && cooling < 1.0)) throw InvalidArgument("cooling factor must lie in (0, 1)");
    if (max_iterations < 0) throw InvalidArgument("max_iterations must be non-negative");
    if (!(penalty > 0.0)) throw InvalidArgument("penalty constant must be positive");
    if (!(threshold >= 0.0)) throw InvalidArgument("threshold must be non-negative");
}

double SapsoConfig::constriction() const {
    const double k = kappa1 + kappa2;
    return 2.0 / std::abs(2.0 - k - std::sqrt(k * k - 4.0 * k));
}

void AdamMatchConfig::validate(const Box& box) const {
    if (!box.contains(initial)) throw InvalidArgument("initial solution lies outside the box");
    if (!(learning_rate_pf > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw InvalidArgument("Adam decay rates must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw InvalidArgument("Adam epsilon must be positive");
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be at least 1");
}

// ---------------------------------------------------------------- strategies

ReflectionCoefficient recover_load_reflection(Surrogate& surrogate, double f_hz, CapacitorPair now,
                                              ReflectionCoefficient gin) {
    const SParameters s = surrogate.evaluate(f_hz, now);
    return load_reflection_from_input(s, gin);
}

double penalized_fitness(double psi, CapacitorPair x, const Box& box, double penalty) {
    return box.contains(x) ? psi : psi + penalty;
}

MatchResult sapso_match(Surrogate& surrogate, double f_hz, ReflectionCoefficient gl,
                        const Box& box, const SapsoConfig& config, Rng& rng) {
    config.validate();
    if (!is_finite(gl.value)) throw InvalidArgument("load reflection must be finite");
    const Stopwatch clock;
    const std::uint64_t start = surrogate.evaluations();
    const auto n = static_cast<std::size_t>(config.particles);
    const double chi = config.constriction();

    std::vector<CapacitorPair> x(n), v(n), pbest(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i].cp = rng.uniform(box.cp.lo, box.cp.hi);
        x[i].cs = rng.uniform(box.cs.lo, box.cs.hi);
        v[i].cp = rng.uniform(-0.5, 0.5) * box.cp.width();
        v[i].cs = rng.uniform(-0.5, 0.5) * box.cs.width();
    }
    auto fitness = [&] {
        auto f = surrogate.psi(f_hz, x, gl);
        for (std::size_t i = 0; i < n; ++i) f[i] = penalized_fitness(f[i], x[i], box, config.penalty);
        return f;
    };

    std::vector<double> pbest_fit = fitness();
    pbest = x;
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (pbest_fit[i] < pbest_fit[best]) best = i;
    CapacitorPair gbest = pbest[best];
    double gbest_fit = pbest_fit[best];
    double temperature = -gbest_fit / std::log(0.2);

    MatchResult result;
    result.best_history.push_back(gbest_fit);
    std::vector<double> weight(n);
    for (int t = 1; t <= config.max_iterations; ++t) {
        if (gbest_fit < config.threshold || !(temperature > 0.0)) break;

        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            weight[i] = std::exp(-(pbest_fit[i] - gbest_fit) / temperature);
            sum += weight[i];
        }
        const double bet = rng.uniform();
        std::size_t pick = n - 1;
        if (sum > 0.0 && std::isfinite(sum)) {
            double cumulative = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                cumulative += weight[k] / sum;
                if (bet <= cumulative) {
                    pick = k;
                    break;
                }
            }
        } else {
            pick = std::min(n - 1, static_cast<std::size_t>(bet * static_cast<double>(n)));
        }
        const CapacitorPair guide =
            config.roulette_target == RouletteTarget::position ? x[pick] : pbest[pick];

        for (std::size_t i = 0; i < n; ++i) {
            const double r1 = rng.uniform();
            const double r2 = rng.uniform();
            v[i].cp = chi * (v[i].cp + config.kappa1 * r1 * (pbest[i].cp - x[i].cp) +
                             config.kappa2 * r2 * (guide.cp - x[i].cp));
            v[i].cs = chi * (v[i].cs + config.kappa1 * r1 * (pbest[i].cs - x[i].cs) +
                             config.kappa2 * r2 * (guide.cs - x[i].cs));
            x[i].cp += v[i].cp;
            x[i].cs += v[i].cs;
        }
        const auto fit = fitness();
        for (std::size_t i = 0; i < n; ++i) {
            if (fit[i] < pbest_fit[i]) {
                pbest_fit[i] = fit[i];
                pbest[i] = x[i];
            }
            if (pbest_fit[i] < gbest_fit) {
                gbest_fit = pbest_fit[i];
                gbest = pbest[i];
            }
        }
        temperature *= config.cooling;
        result.iterations = t;
        result.best_history.push_back(gbest_fit);
    }

    // The global best can only be out of the box if every particle always was.
    const CapacitorPair solution = box.clamp(gbest);
    result.cp = solution.cp;
    result.cs = solution.cs;
    result.predicted_psi = solution == gbest ? gbest_fit : safe_psi(surrogate.peek(f_hz, solution), gl);
    result.evaluations = surrogate.evaluations() - start;
    result.wall_seconds = clock.seconds();
    return result;
}

MatchResult adadam_match(Surrogate& surrogate, double f_hz, ReflectionCoefficient gl,
                         const Box& box, const AdamMatchConfig& config) {
    config.validate(box);
    const Stopwatch clock;
    const std::uint64_t start = surrogate.evaluations();

    // theta is kept in pF so that the learning rate has its usual meaning.
    double theta[2] = {config.initial.cp / kPico, config.initial.cs / kPico};
    double m[2] = {0.0, 0.0};
    double v[2] = {0.0, 0.0};
    double b1t = 1.0;
    double b2t = 1.0;
    const Range lim[2] = {{box.cp.lo / kPico, box.cp.hi / kPico}, {box.cs.lo / kPico, box.cs.hi / kPico}};

    MatchResult result;
    double psi = kInf;
    for (int t = 1; t <= config.max_iterations; ++t) {
        const PsiGradient g = surrogate.psi_gradient(f_hz, {theta[0] * kPico, theta[1] * kPico}, gl);
        const double grad[2] = {g.d_cp * kPico, g.d_cs * kPico};
        if (!std::isfinite(grad[0]) || !std::isfinite(grad[1]))
            throw NumericalError("non-finite matching gradient at iteration " + std::to_string(t) +
                                 " (cp = " + std::to_string(theta[0]) + " pF, cs = " +
                                 std::to_string(theta[1]) + " pF)");
        b1t *= config.beta1;
        b2t *= config.beta2;
        for (int k = 0; k < 2; ++k) {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * grad[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * grad[k] * grad[k];
            const double mhat = m[k] / (1.0 - b1t);
            const double vhat = v[k] / (1.0 - b2t);
            theta[k] -= config.learning_rate_pf * mhat / (std::sqrt(vhat) + config.epsilon);
            theta[k] = lim[k].clamp(theta[k]);
        }
        psi = safe_psi(surrogate.evaluate(f_hz, {theta[0] * kPico, theta[1] * kPico}), gl);
        result.iterations = t;
        if (psi < config.threshold) break;
    }
    result.cp = box.cp.clamp(theta[0] * kPico);
    result.cs = box.cs.clamp(theta[1] * kPico);
    result.predicted_psi = psi;
    result.evaluations = surrogate.evaluations() - start;
    result.wall_seconds = clock.seconds();
    return result;
}

MatchResult ims_match(Surrogate& recbm, const MlpModel& ims, double f_hz, ReflectionCoefficient gl,
                      const Box& box) {
    if (ims.role() != ModelRole::ims || ims.inputs() != 3 || ims.outputs() != 2)
        throw ValidationError("IMS-Net must have role ims, 3 inputs and 2 outputs");
    if (ims.paired_fingerprint() != recbm.fingerprint())
        throw ValidationError("IMS-Net was trained against RECBM-Net " +
                              hex_fingerprint(ims.paired_fingerprint()) + ", not " +
                              hex_fingerprint(recbm.fingerprint()));
    const Stopwatch clock;
    Matrix in(3, 1);
    in << f_hz, gl.value.real(), gl.value.imag();
    const Matrix y = ims.predict(in);
    const CapacitorPair solution = box.clamp({y(0, 0), y(1, 0)});

    MatchResult result;
    result.cp = solution.cp;
    result.cs = solution.cs;
    result.predicted_psi = safe_psi(recbm.peek(f_hz, solution), gl);
    result.iterations = 1;
    result.evaluations = 1;
    result.wall_seconds = clock.seconds();
    return result;
}

MatchResult grid_search_match(Surrogate& surrogate, double f_hz, ReflectionCoefficient gl,
                              const Box& box, double step) {
    if (!(step > 0.0)) throw InvalidArgument("grid step must be positive");
    const Stopwatch clock;
    const std::uint64_t start = surrogate.evaluations();
    const AxisSpec cp_axis{box.cp.lo, box.cp.hi, step};
    const AxisSpec cs_axis{box.cs.lo, box.cs.hi, step};
    std::vector<double> cp_values(cp_axis.count()), cs_values(cs_axis.count());
    for (std::size_t i = 0; i < cp_values.size(); ++i) cp_values[i] = cp_axis.at(i);
    for (std::size_t j = 0; j < cs_values.size(); ++j) cs_values[j] = cs_axis.at(j);

    const auto psi = surrogate.psi_lattice(f_hz, cp_values, cs_values, gl);
    std::size_t best = 0;
    for (std::size_t k = 1; k < psi.size(); ++k)
        if (psi[k] < psi[best]) best = k;

    MatchResult result;
    result.cp = cp_values[best / cs_values.size()];
    result.cs = cs_values[best % cs_values.size()];
    result.predicted_psi = psi[best];
    result.iterations = 1;
    result.evaluations = surrogate.evaluations() - start;
    result.wall_seconds = clock.seconds();
    return result;
}

MatchResult ideal_analytic_match(ReflectionCoefficient gl, double f_hz, ReferenceImpedance r,
                                 const Box& box, CapacitorPair fallback) {
    const Stopwatch clock;
    MatchResult result;
    result.cp = fallback.cp;
    result.cs = fallback.cs;
    result.infeasible = true;
    result.predicted_psi = kInf;

    std::vector<MatchSolutionPair> candidates;
    try {
        candidates = analytical_match(reflection_to_impedance(gl, r), f_hz, r);
    } catch (const NoFeasibleSolution&) {
    } catch (const InvalidArgument&) {
    } catch (const SingularNetwork&) {
    }
    const Impedance zl = candidates.empty() ? Impedance{} : reflection_to_impedance(gl, r);
    for (const auto& c : candidates) {
        const CapacitorPair x = box.clamp({c.cp_farads, c.cs_farads});
        double psi = kInf;
        try {
            const Impedance zin = ideal_l_input_impedance(zl, {f_hz, x.cp, x.cs});
            psi = impedance_to_reflection(zin, r).magnitude();
        } catch (const SingularNetwork&) {
        }
        if (result.infeasible || psi < result.predicted_psi) {
            result.cp = x.cp;
            result.cs = x.cs;
            result.predicted_psi = psi;
            result.infeasible = false;
        }
    }
    result.wall_seconds = clock.seconds();
    return result;
}

void score_result(MatchResult& result, const CircuitTopology& truth, double f_hz,
                  ReflectionCoefficient true_gl) {
    try {
        result.true_psi = safe_psi(simulate(truth, {f_hz, result.cp, result.cs}), true_gl);
    } catch (const SingularNetwork&) {
        result.true_psi = kInf;
    }
}

std::string to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::sapso: return "sapso";
        case Strategy::adadam: return "adadam";
        case Strategy::ims: return "ims";
        case Strategy::grid: return "grid";
        case Strategy::ideal: return "ideal";
    }
    return "unknown";
}

Strategy parse_strategy(const std::string& name) {
    for (Strategy s : {Strategy::sapso, Strategy::adadam, Strategy::ims, Strategy::grid, Strategy::ideal})
        if (to_string(s) == name) return s;
    throw InvalidArgument("unknown strategy '" + name + "'");
}

MatchResult run_scenario(const ScenarioRunner& runner, Strategy strategy, const Scenario& scenario,
                         int repeat) {
    if (runner.truth == nullptr) throw InvalidArgument("scenario runner needs the true circuit");
    const Box box = Box::of(*runner.truth);
    const CapacitorPair now{scenario.cp_now, scenario.cs_now};
    const ReflectionCoefficient gin{scenario.gin};
    MatchResult result;

    if (strategy == Strategy::ideal) {
        const Stopwatch clock;
        const CircuitTopology ideal = ideal_l_topology(runner.truth->band_hz(), box.cp, box.cs);
        const ReferenceImpedance r = runner.truth->reference();
        try {
            const SParameters s = simulate(ideal, {scenario.f_hz, now.cp, now.cs});
            const ReflectionCoefficient gl = load_reflection_from_input(s, gin);
            result = ideal_analytic_match(gl, scenario.f_hz, r, box, now);
        } catch (const SingularNetwork&) {
            result.cp = now.cp;
            result.cs = now.cs;
            result.infeasible = true;
            result.predicted_psi = kInf;
        }
        result.wall_seconds = clock.seconds();
    } else {
        if (runner.surrogate == nullptr) throw InvalidArgument("strategy needs a surrogate");
        Surrogate& surrogate = *runner.surrogate;
        const Stopwatch clock;
        const std::uint64_t start = surrogate.evaluations();
        const ReflectionCoefficient gl = recover_load_reflection(surrogate, scenario.f_hz, now, gin);
        const std::uint64_t recovery = surrogate.evaluations() - start;
        switch (strategy) {
            case Strategy::sapso: {
                Rng rng(Rng::mix(Rng::mix(runner.sapso.seed ^ Rng::mix(scenario.id)) +
                                 static_cast<std::uint64_t>(repeat)));
                result = sapso_match(surrogate, scenario.f_hz, gl, box, runner.sapso, rng);
                break;
            }
            case Strategy::adadam:
                result = adadam_match(surrogate, scenario.f_hz, gl, box, runner.adam);
                break;
            case Strategy::ims:
                if (runner.ims == nullptr) throw InvalidArgument("IMS strategy needs an IMS-Net");
                result = ims_match(surrogate, *runner.ims, scenario.f_hz, gl, box);
                break;
            case Strategy::grid:
                result = grid_search_match(surrogate, scenario.f_hz, gl, box, runner.grid_step);
                break;
            case Strategy::ideal:
                break;
        }
        result.evaluations += recovery;
        result.wall_seconds = clock.seconds();
    }
    score_result(result, *runner.truth, scenario.f_hz, ReflectionCoefficient{scenario.gl});
    return result;
}

}  // namespace rfmatch
