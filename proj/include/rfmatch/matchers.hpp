#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rfmatch/circuit.hpp"
#include "rfmatch/datasets.hpp"
#include "rfmatch/mlp.hpp"
#include "rfmatch/network.hpp"
#include "rfmatch/random.hpp"

namespace rfmatch {

/// A (cp, cs) pair in farads.
struct CapacitorPair {
    double cp = 0.0;
    double cs = 0.0;
    friend bool operator==(const CapacitorPair&, const CapacitorPair&) = default;
};

/// The tunable box.
struct Box {
    Range cp;
    Range cs;

    static Box of(const CircuitTopology& topology) { return {topology.p_range(), topology.s_range()}; }
    bool contains(CapacitorPair x) const { return cp.contains(x.cp) && cs.contains(x.cs); }
    CapacitorPair clamp(CapacitorPair x) const { return {cp.clamp(x.cp), cs.clamp(x.cs)}; }
};

struct PsiGradient {
    double psi = 0.0;
    double d_cp = 0.0;  // per farad
    double d_cs = 0.0;
};

/// Black-box evaluator of S(f, cp, cs) with an evaluation counter.
///
/// Every S query adds one per state. A gradient query adds gradient_cost():
/// one extra pass for a differentiable model, four for finite differences.
/// peek() is for reporting only and never counts.
class Surrogate {
public:
    virtual ~Surrogate() = default;

    virtual std::string name() const = 0;
    virtual std::uint64_t fingerprint() const = 0;
    virtual int gradient_cost() const = 0;

    std::uint64_t evaluations() const { return evaluations_; }
    void reset_counter() { evaluations_ = 0; }

    SParameters evaluate(double f_hz, CapacitorPair x);
    std::vector<SParameters> evaluate(double f_hz, std::span<const CapacitorPair> xs);
    /// psi at each state; a singular state yields +inf.
    std::vector<double> psi(double f_hz, std::span<const CapacitorPair> xs, ReflectionCoefficient gl);
    PsiGradient psi_gradient(double f_hz, CapacitorPair x, ReflectionCoefficient gl);
    /// psi over the lattice cp_values x cs_values, cp-major. Counts every point.
    std::vector<double> psi_lattice(double f_hz, std::span<const double> cp_values,
                                    std::span<const double> cs_values, ReflectionCoefficient gl);

    SParameters peek(double f_hz, CapacitorPair x) const;

protected:
    /// Writes S for each state; singular states get NaN components.
    virtual void compute(double f_hz, std::span<const CapacitorPair> xs,
                         std::span<SParameters> out) const = 0;
    virtual PsiGradient compute_gradient(double f_hz, CapacitorPair x,
                                         ReflectionCoefficient gl) const = 0;
    virtual std::vector<double> compute_lattice(double f_hz, std::span<const double> cp_values,
                                                std::span<const double> cs_values,
                                                ReflectionCoefficient gl) const;

private:
    std::uint64_t evaluations_ = 0;
};

/// The exact circuit as its own surrogate. Gradients use central differences
/// with step `fd_step` farads on each axis.
class OracleSurrogate final : public Surrogate {
public:
    explicit OracleSurrogate(const CircuitTopology& topology, double fd_step = 1e-15);

    std::string name() const override { return "oracle"; }
    std::uint64_t fingerprint() const override { return topology_->fingerprint(); }
    int gradient_cost() const override { return 4; }
    const CircuitTopology& topology() const { return *topology_; }

protected:
    void compute(double f_hz, std::span<const CapacitorPair> xs,
                 std::span<SParameters> out) const override;
    PsiGradient compute_gradient(double f_hz, CapacitorPair x,
                                 ReflectionCoefficient gl) const override;
    std::vector<double> compute_lattice(double f_hz, std::span<const double> cp_values,
                                        std::span<const double> cs_values,
                                        ReflectionCoefficient gl) const override;

private:
    const CircuitTopology* topology_;
    double fd_step_;
};

/// A trained RECBM-Net. Input gradients come from one reverse sweep.
class ModelSurrogate final : public Surrogate {
public:
    explicit ModelSurrogate(const MlpModel& model, ReferenceImpedance reference = ReferenceImpedance{});

    std::string name() const override { return "recbm"; }
    std::uint64_t fingerprint() const override { return fingerprint_; }
    int gradient_cost() const override { return 1; }
    const MlpModel& model() const { return *model_; }

protected:
    void compute(double f_hz, std::span<const CapacitorPair> xs,
                 std::span<SParameters> out) const override;
    PsiGradient compute_gradient(double f_hz, CapacitorPair x,
                                 ReflectionCoefficient gl) const override;

private:
    const MlpModel* model_;
    ReferenceImpedance reference_;
    std::uint64_t fingerprint_;
};

struct MatchResult {
    double cp = 0.0;  // farads
    double cs = 0.0;
    double predicted_psi = 0.0;
    double true_psi = std::numeric_limits<double>::quiet_NaN();  // set by score_result()
    int iterations = 0;
    std::uint64_t evaluations = 0;
    double wall_seconds = 0.0;
    bool infeasible = false;
    /// Global best fitness after initialisation and after every iteration (SAPSO only).
    std::vector<double> best_history;
};

enum class RouletteTarget {
    position,       // G_rand is the selected particle's current position
    personal_best,  // G_rand is the selected particle's personal best
};

struct SapsoConfig {
    int particles = 50;
    double kappa1 = 2.05;
    double kappa2 = 2.05;
    double cooling = 0.5;
    int max_iterations = 100;
    double threshold = 0.005;
    double penalty = 2000.0;
    RouletteTarget roulette_target = RouletteTarget::position;
    std::uint64_t seed = 42;

    void validate() const;
    double constriction() const;
};

struct AdamMatchConfig {
    CapacitorPair initial{5e-12, 5e-12};
    double learning_rate_pf = 0.013;  // step size with theta measured in pF
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int max_iterations = 500;
    double threshold = 0.005;

    void validate(const Box& box) const;
};

/// One S query at the current state, then the load that explains `gin`.
ReflectionCoefficient recover_load_reflection(Surrogate& surrogate, double f_hz, CapacitorPair now,
                                              ReflectionCoefficient gin);

/// SAPSO fitness: psi, plus the flat penalty when x lies outside the box.
double penalized_fitness(double psi, CapacitorPair x, const Box& box, double penalty);

MatchResult sapso_match(Surrogate& surrogate, double f_hz, ReflectionCoefficient gl,
                        const Box& box, const SapsoConfig& config, Rng& rng);

/// Throws NumericalError when a gradient is not finite.
MatchResult adadam_match(Surrogate& surrogate, double f_hz, ReflectionCoefficient gl,
                         const Box& box, const AdamMatchConfig& config);

/// Throws ValidationError unless `ims` is an IMS-Net paired with `recbm`.
/// The IMS forward pass is the single counted evaluation.
MatchResult ims_match(Surrogate& recbm, const MlpModel& ims, double f_hz, ReflectionCoefficient gl,
                      const Box& box);

/// Exhaustive search on the inclusive lattice of spacing `step` farads.
/// Ties go to the smallest cp, then the smallest cs.
MatchResult grid_search_match(Surrogate& surrogate, double f_hz, ReflectionCoefficient gl,
                              const Box& box, double step);

/// Closed-form ideal L-network solution clamped into the box. When no
/// solution exists the result holds `fallback` and is flagged infeasible.
/// Of two solutions, the one with the lower ideal-model |Gamma| after
/// clamping wins (the plus branch on ties).
MatchResult ideal_analytic_match(ReflectionCoefficient gl, double f_hz, ReferenceImpedance r,
                                 const Box& box, CapacitorPair fallback);

/// |Gamma_in| of the exact circuit at the result's solution against the true load.
void score_result(MatchResult& result, const CircuitTopology& truth, double f_hz,
                  ReflectionCoefficient true_gl);

enum class Strategy { sapso, adadam, ims, grid, ideal };

std::string to_string(Strategy strategy);
Strategy parse_strategy(const std::string& name);

struct ScenarioRunner {
    const CircuitTopology* truth = nullptr;
    Surrogate* surrogate = nullptr;
    const MlpModel* ims = nullptr;
    SapsoConfig sapso;
    AdamMatchConfig adam;
    double grid_step = 0.01e-12;
};

/// The full per-scenario protocol: recover the load from the measured gin,
/// run the strategy, score against the truth. `evaluations` includes the
/// recovery query. The ideal baseline recovers its load with the ideal
/// L-network instead of the surrogate and so reports zero evaluations.
/// `repeat` selects the SAPSO random stream.
MatchResult run_scenario(const ScenarioRunner& runner, Strategy strategy, const Scenario& scenario,
                         int repeat = 0);

}  // namespace rfmatch
