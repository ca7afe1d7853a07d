#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rfmatch/network.hpp"

namespace rfmatch {

enum class TunableSlot { P, S };

/// Recursive lumped-element expression. Leaves are fixed R/L/C elements or a
/// reference to one of the two tunable capacitors; interior nodes combine
/// two or more children in series or in parallel.
struct ElementExpr {
    enum class Kind { resistor, inductor, capacitor, tunable, series, parallel };

    Kind kind = Kind::resistor;
    double value = 0.0;  // ohms, henries or farads for fixed leaves
    TunableSlot slot = TunableSlot::P;
    std::vector<ElementExpr> children;

    static ElementExpr resistor(double ohms);
    static ElementExpr inductor(double henries);
    static ElementExpr capacitor(double farads);
    static ElementExpr tunable(TunableSlot slot);
    static ElementExpr series(std::vector<ElementExpr> children);
    static ElementExpr parallel(std::vector<ElementExpr> children);

    bool is_leaf() const { return kind != Kind::series && kind != Kind::parallel; }
    int count_tunable(TunableSlot s) const;
    int count_fixed() const;

    friend bool operator==(const ElementExpr&, const ElementExpr&) = default;
};

struct TunableState {
    double f_hz = 0.0;
    double cp_farads = 0.0;
    double cs_farads = 0.0;
};

/// Value of an element network at one state. `open` marks an infinite
/// impedance (e.g. a zero-valued capacitor); `impedance` is then unused.
struct ElementValue {
    Complex impedance{};
    bool open = false;
};

ElementValue evaluate_element(const ElementExpr& expr, const TunableState& state);

/// Impedance of an element network. Throws SingularNetwork for an open
/// network and InvalidArgument for f <= 0.
Impedance element_impedance(const ElementExpr& expr, const TunableState& state);

enum class ArmOrientation { series, shunt };

struct Arm {
    ArmOrientation orientation = ArmOrientation::series;
    ElementExpr expr;
    friend bool operator==(const Arm&, const Arm&) = default;
};

/// ABCD factor of one arm. An open shunt arm contributes the identity; an
/// open series arm or a shorted shunt arm raises SingularNetwork.
AbcdMatrix arm_abcd(const Arm& arm, const TunableState& state);

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
    double clamp(double x) const { return x < lo ? lo : (x > hi ? hi : x); }
    friend bool operator==(const Range&, const Range&) = default;
};

/// Ordered cascade of series/shunt arms, port 1 (source side) first.
/// Exactly one arm references slot P and a different arm references slot S.
/// Immutable once constructed; construction validates all invariants.
class CircuitTopology {
public:
    CircuitTopology(std::string name, Range band_hz, Range p_farads, Range s_farads,
                    std::vector<Arm> arms, ReferenceImpedance reference = ReferenceImpedance{});

    const std::string& name() const { return name_; }
    const Range& band_hz() const { return band_; }
    const Range& p_range() const { return p_range_; }
    const Range& s_range() const { return s_range_; }
    const std::vector<Arm>& arms() const { return arms_; }
    ReferenceImpedance reference() const { return reference_; }

    std::size_t p_arm() const { return p_arm_; }
    std::size_t s_arm() const { return s_arm_; }
    int fixed_element_count() const;

    /// 64-bit FNV-1a hash of the canonical circuit-spec document.
    std::uint64_t fingerprint() const;

    nlohmann::json to_json() const;
    static CircuitTopology from_json(const nlohmann::json& doc);

    friend bool operator==(const CircuitTopology&, const CircuitTopology&) = default;

private:
    std::string name_;
    Range band_;
    Range p_range_;
    Range s_range_;
    std::vector<Arm> arms_;
    ReferenceImpedance reference_;
    std::size_t p_arm_ = 0;
    std::size_t s_arm_ = 0;
};

CircuitTopology load_circuit_spec(const std::filesystem::path& path);
void save_circuit_spec(const CircuitTopology& topology, const std::filesystem::path& path);

/// Exact S-parameters: arm factors cascaded in declared order, then converted
/// with the topology's reference impedance.
SParameters simulate(const CircuitTopology& topology, const TunableState& state);

/// Per-frequency factorisation of a topology for dense (cp, cs) sweeps. The
/// fixed arms are multiplied once; each query only rebuilds the two tunable
/// arms. Agrees with simulate() to rounding (the product is re-associated).
class FrequencySlice {
public:
    FrequencySlice(const CircuitTopology& topology, double f_hz);

    /// prefix * (first tunable arm) * middle. Depends only on the slot of
    /// the first tunable arm.
    AbcdMatrix head(const TunableState& state) const;
    /// (second tunable arm) * suffix.
    AbcdMatrix tail(const TunableState& state) const;
    SParameters combine(const AbcdMatrix& head, const AbcdMatrix& tail) const;
    SParameters at(double cp_farads, double cs_farads) const;

    /// True when slot P precedes slot S in the cascade.
    bool p_first() const { return p_first_; }

private:
    double f_hz_;
    ReferenceImpedance reference_;
    bool p_first_;
    Arm first_arm_;
    Arm second_arm_;
    AbcdMatrix prefix_;  // arms before the first tunable arm
    AbcdMatrix middle_;  // arms strictly between the tunable arms
    AbcdMatrix suffix_;  // arms after the second tunable arm
};

/// Ideal L-network input impedance: shunt Cp at the source, series Cs
/// toward the load. Throws SingularNetwork when cs == 0 or a denominator
/// vanishes.
Impedance ideal_l_input_impedance(Impedance zl, const TunableState& state);

/// The bare L-network (shunt P, then series S) with no parasitics.
CircuitTopology ideal_l_topology(Range band_hz = {1.5e9, 2.0e9},
                                 Range p_farads = {0.0, 10e-12},
                                 Range s_farads = {0.0, 10e-12});

struct MatchSolutionPair {
    enum class Branch { plus, minus };
    double cp_farads = 0.0;
    double cs_farads = 0.0;
    Branch branch = Branch::plus;
};

/// Closed-form capacitor pair(s) that match `zl` to `r` through the ideal
/// L-network. Sign pairings are checked by substitution; only pairs with
/// both capacitors positive that reproduce Zin = r are returned.
/// Throws NoFeasibleSolution when none exist (including R_L > R_S).
std::vector<MatchSolutionPair> analytical_match(Impedance zl, double f_hz,
                                                ReferenceImpedance r = ReferenceImpedance{});

/// Directory holding the committed circuit-spec files. Honours the
/// RFMATCH_DATA_DIR environment variable, else the build-time default.
std::filesystem::path data_directory();

/// The pinned reference circuit: an L-network core with 17 fixed parasitic
/// elements, loaded from `reference_circuit.json` in data_directory().
CircuitTopology reference_practical_circuit();

std::string to_string(TunableSlot slot);
std::string to_string(ArmOrientation orientation);

}  // namespace rfmatch
