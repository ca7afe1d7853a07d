#include "rfmatch/circuit.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "rfmatch/error.hpp"
#include "rfmatch/hash.hpp"

#ifndef RFMATCH_DEFAULT_DATA_DIR
#define RFMATCH_DEFAULT_DATA_DIR "data"
#endif

namespace rfmatch {

using nlohmann::json;

namespace {

constexpr double kNano = 1e-9;
constexpr double kPico = 1e-12;
constexpr double kGiga = 1e9;

double omega(double f_hz) { return 2.0 * std::numbers::pi * f_hz; }

void check_nonnegative(double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v))
        throw ValidationError(std::string(what) + " value must be finite and non-negative");
}

}  // namespace

ElementExpr ElementExpr::resistor(double ohms) {
    check_nonnegative(ohms, "resistor");
    return {Kind::resistor, ohms, TunableSlot::P, {}};
}

ElementExpr ElementExpr::inductor(double henries) {
    check_nonnegative(henries, "inductor");
    return {Kind::inductor, henries, TunableSlot::P, {}};
}

ElementExpr ElementExpr::capacitor(double farads) {
    check_nonnegative(farads, "capacitor");
    return {Kind::capacitor, farads, TunableSlot::P, {}};
}

ElementExpr ElementExpr::tunable(TunableSlot slot) { return {Kind::tunable, 0.0, slot, {}}; }

ElementExpr ElementExpr::series(std::vector<ElementExpr> children) {
    if (children.size() < 2) throw ValidationError("series node needs at least two children");
    return {Kind::series, 0.0, TunableSlot::P, std::move(children)};
}

ElementExpr ElementExpr::parallel(std::vector<ElementExpr> children) {
    if (children.size() < 2) throw ValidationError("parallel node needs at least two children");
    return {Kind::parallel, 0.0, TunableSlot::P, std::move(children)};
}

int ElementExpr::count_tunable(TunableSlot s) const {
    if (kind == Kind::tunable) return slot == s ? 1 : 0;
    int n = 0;
    for (const auto& c : children) n += c.count_tunable(s);
    return n;
}

int ElementExpr::count_fixed() const {
    if (kind == Kind::tunable) return 0;
    if (is_leaf()) return 1;
    int n = 0;
    for (const auto& c : children) n += c.count_fixed();
    return n;
}

namespace {

ElementValue capacitor_value(double farads, double w) {
    if (farads == 0.0) return {{}, true};
    return {Complex{0.0, -1.0 / (w * farads)}, false};
}

ElementValue evaluate_at(const ElementExpr& e, const TunableState& st, double w) {
    using K = ElementExpr::Kind;
    switch (e.kind) {
        case K::resistor:
            return {Complex{e.value, 0.0}, false};
        case K::inductor:
            return {Complex{0.0, w * e.value}, false};
        case K::capacitor:
            return capacitor_value(e.value, w);
        case K::tunable:
            return capacitor_value(e.slot == TunableSlot::P ? st.cp_farads : st.cs_farads, w);
        case K::series: {
            Complex z{};
            for (const auto& c : e.children) {
                const ElementValue v = evaluate_at(c, st, w);
                if (v.open) return {{}, true};
                z += v.impedance;
            }
            return {z, false};
        }
        case K::parallel: {
            Complex y{};
            bool all_open = true;
            for (const auto& c : e.children) {
                const ElementValue v = evaluate_at(c, st, w);
                if (v.open) continue;
                all_open = false;
                if (v.impedance == Complex{}) return {Complex{}, false};  // shorted
                y += 1.0 / v.impedance;
            }
            if (all_open || y == Complex{}) return {{}, true};
            return {1.0 / y, false};
        }
    }
    throw InvalidArgument("unknown element kind");
}

void check_frequency(double f_hz) {
    if (!(f_hz > 0.0) || !std::isfinite(f_hz))
        throw InvalidArgument("frequency must be finite and positive");
}

}  // namespace

ElementValue evaluate_element(const ElementExpr& expr, const TunableState& state) {
    check_frequency(state.f_hz);
    return evaluate_at(expr, state, omega(state.f_hz));
}

Impedance element_impedance(const ElementExpr& expr, const TunableState& state) {
    const ElementValue v = evaluate_element(expr, state);
    if (v.open) throw SingularNetwork("element network is open (infinite impedance)");
    return {v.impedance};
}

AbcdMatrix arm_abcd(const Arm& arm, const TunableState& state) {
    const ElementValue v = evaluate_element(arm.expr, state);
    if (arm.orientation == ArmOrientation::series) {
        if (v.open) throw SingularNetwork("series arm is open");
        return series_arm_abcd(Impedance{v.impedance});
    }
    if (v.open) return shunt_arm_abcd(Admittance{0.0});
    if (v.impedance == Complex{}) throw SingularNetwork("shunt arm shorts the line");
    return shunt_arm_abcd(Admittance{1.0 / v.impedance});
}

// ---------------------------------------------------------------------------
// Topology

CircuitTopology::CircuitTopology(std::string name, Range band_hz, Range p_farads, Range s_farads,
                                 std::vector<Arm> arms, ReferenceImpedance reference)
    : name_(std::move(name)),
      band_(band_hz),
      p_range_(p_farads),
      s_range_(s_farads),
      arms_(std::move(arms)),
      reference_(reference) {
    if (arms_.empty()) throw ValidationError("circuit has no arms");
    if (!(band_.lo > 0.0) || !(band_.lo < band_.hi))
        throw ValidationError("frequency band must satisfy 0 < lo < hi");
    for (const Range* r : {&p_range_, &s_range_})
        if (!(r->lo >= 0.0) || !(r->lo < r->hi))
            throw ValidationError("tunable range must satisfy 0 <= min < max");

    int p_total = 0;
    int s_total = 0;
    for (std::size_t i = 0; i < arms_.size(); ++i) {
        const int np = arms_[i].expr.count_tunable(TunableSlot::P);
        const int ns = arms_[i].expr.count_tunable(TunableSlot::S);
        if (np > 0) p_arm_ = i;
        if (ns > 0) s_arm_ = i;
        p_total += np;
        s_total += ns;
    }
    if (p_total != 1) throw ValidationError("circuit must reference tunable slot P exactly once");
    if (s_total != 1) throw ValidationError("circuit must reference tunable slot S exactly once");
    if (p_arm_ == s_arm_) throw ValidationError("tunable slots P and S must sit in different arms");
}

int CircuitTopology::fixed_element_count() const {
    int n = 0;
    for (const auto& a : arms_) n += a.expr.count_fixed();
    return n;
}

std::string to_string(TunableSlot slot) { return slot == TunableSlot::P ? "P" : "S"; }

std::string to_string(ArmOrientation o) { return o == ArmOrientation::series ? "series" : "shunt"; }

namespace {

json expr_to_json(const ElementExpr& e) {
    using K = ElementExpr::Kind;
    switch (e.kind) {
        case K::resistor: return {{"R", e.value}};
        case K::inductor: return {{"L", e.value / kNano}};
        case K::capacitor: return {{"C", e.value / kPico}};
        case K::tunable: return {{"TUNE", to_string(e.slot)}};
        case K::series:
        case K::parallel: {
            json kids = json::array();
            for (const auto& c : e.children) kids.push_back(expr_to_json(c));
            return {{e.kind == K::series ? "SER" : "PAR", kids}};
        }
    }
    return {};
}

double leaf_number(const json& v, const std::string& tag) {
    if (!v.is_number()) throw ValidationError("element '" + tag + "' needs a numeric value");
    return v.get<double>();
}

ElementExpr expr_from_json(const json& node) {
    if (!node.is_object() || node.size() != 1)
        throw ValidationError("element node must be an object with exactly one tag");
    const auto& [tag, v] = *node.items().begin();
    if (tag == "R") return ElementExpr::resistor(leaf_number(v, tag));
    if (tag == "L") return ElementExpr::inductor(leaf_number(v, tag) * kNano);
    if (tag == "C") return ElementExpr::capacitor(leaf_number(v, tag) * kPico);
    if (tag == "TUNE") {
        if (v == "P") return ElementExpr::tunable(TunableSlot::P);
        if (v == "S") return ElementExpr::tunable(TunableSlot::S);
        throw ValidationError("TUNE slot must be \"P\" or \"S\"");
    }
    if (tag == "SER" || tag == "PAR") {
        if (!v.is_array()) throw ValidationError(tag + " expects an array of children");
        std::vector<ElementExpr> kids;
        for (const auto& c : v) kids.push_back(expr_from_json(c));
        return tag == "SER" ? ElementExpr::series(std::move(kids))
                            : ElementExpr::parallel(std::move(kids));
    }
    throw ValidationError("unknown element tag '" + tag + "'");
}

Range pair_range(const json& v, double scale, const char* what) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ValidationError(std::string(what) + " must be a [lo, hi] pair");
    return {v[0].get<double>() * scale, v[1].get<double>() * scale};
}

const json& require(const json& doc, const char* key) {
    if (!doc.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    return doc.at(key);
}

}  // namespace

json CircuitTopology::to_json() const {
    json arms = json::array();
    for (const auto& a : arms_)
        arms.push_back({{"orient", to_string(a.orientation)}, {"expr", expr_to_json(a.expr)}});
    return {
        {"name", name_},
        {"band_ghz", {band_.lo / kGiga, band_.hi / kGiga}},
        {"tunable_pf", {{"p", {p_range_.lo / kPico, p_range_.hi / kPico}},
                        {"s", {s_range_.lo / kPico, s_range_.hi / kPico}}}},
        {"reference_ohms", reference_.ohms()},
        {"arms", arms},
    };
}

CircuitTopology CircuitTopology::from_json(const json& doc) {
    if (!doc.is_object()) throw ValidationError("circuit spec must be a JSON object");
    const auto& name = require(doc, "name");
    if (!name.is_string()) throw ValidationError("name must be a string");
    const Range band = pair_range(require(doc, "band_ghz"), kGiga, "band_ghz");
    const auto& tun = require(doc, "tunable_pf");
    if (!tun.is_object()) throw ValidationError("tunable_pf must be an object");
    const Range p = pair_range(require(tun, "p"), kPico, "tunable_pf.p");
    const Range s = pair_range(require(tun, "s"), kPico, "tunable_pf.s");
    ReferenceImpedance ref;
    if (doc.contains("reference_ohms")) {
        if (!doc["reference_ohms"].is_number()) throw ValidationError("reference_ohms must be numeric");
        try {
            ref = ReferenceImpedance(doc["reference_ohms"].get<double>());
        } catch (const InvalidArgument& e) {
            throw ValidationError(e.what());
        }
    }
    const auto& arms_doc = require(doc, "arms");
    if (!arms_doc.is_array()) throw ValidationError("arms must be an array");
    std::vector<Arm> arms;
    for (const auto& a : arms_doc) {
        if (!a.is_object()) throw ValidationError("arm must be an object");
        const auto& o = require(a, "orient");
        Arm arm;
        if (o == "series") {
            arm.orientation = ArmOrientation::series;
        } else if (o == "shunt") {
            arm.orientation = ArmOrientation::shunt;
        } else {
            throw ValidationError("orient must be \"series\" or \"shunt\"");
        }
        arm.expr = expr_from_json(require(a, "expr"));
        arms.push_back(std::move(arm));
    }
    return CircuitTopology(name.get<std::string>(), band, p, s, std::move(arms), ref);
}

std::uint64_t CircuitTopology::fingerprint() const { return fnv1a64(to_json().dump()); }

CircuitTopology load_circuit_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open circuit spec '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("circuit spec '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return CircuitTopology::from_json(doc);
}

void save_circuit_spec(const CircuitTopology& topology, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write circuit spec '" + path.string() + "'");
    out << topology.to_json().dump(2) << '\n';
}

SParameters simulate(const CircuitTopology& topology, const TunableState& state) {
    check_frequency(state.f_hz);
    AbcdMatrix total = AbcdMatrix::identity();
    for (const auto& arm : topology.arms()) total = total * arm_abcd(arm, state);
    return abcd_to_s(total, topology.reference());
}

// ---------------------------------------------------------------------------
// FrequencySlice

FrequencySlice::FrequencySlice(const CircuitTopology& topology, double f_hz)
    : f_hz_(f_hz), reference_(topology.reference()), p_first_(topology.p_arm() < topology.s_arm()) {
    check_frequency(f_hz);
    const std::size_t first = std::min(topology.p_arm(), topology.s_arm());
    const std::size_t second = std::max(topology.p_arm(), topology.s_arm());
    const TunableState st{f_hz, 0.0, 0.0};
    const auto& arms = topology.arms();
    for (std::size_t i = 0; i < arms.size(); ++i) {
        if (i == first || i == second) continue;
        const AbcdMatrix m = arm_abcd(arms[i], st);
        if (i < first) {
            prefix_ = prefix_ * m;
        } else if (i < second) {
            middle_ = middle_ * m;
        } else {
            suffix_ = suffix_ * m;
        }
    }
    first_arm_ = arms[first];
    second_arm_ = arms[second];
}

AbcdMatrix FrequencySlice::head(const TunableState& state) const {
    return prefix_ * arm_abcd(first_arm_, {f_hz_, state.cp_farads, state.cs_farads}) * middle_;
}

AbcdMatrix FrequencySlice::tail(const TunableState& state) const {
    return arm_abcd(second_arm_, {f_hz_, state.cp_farads, state.cs_farads}) * suffix_;
}

SParameters FrequencySlice::combine(const AbcdMatrix& head, const AbcdMatrix& tail) const {
    return abcd_to_s(head * tail, reference_);
}

SParameters FrequencySlice::at(double cp_farads, double cs_farads) const {
    const TunableState st{f_hz_, cp_farads, cs_farads};
    return combine(head(st), tail(st));
}

// ---------------------------------------------------------------------------
// Ideal L-network

Impedance ideal_l_input_impedance(Impedance zl, const TunableState& state) {
    check_frequency(state.f_hz);
    if (state.cs_farads == 0.0) throw SingularNetwork("series capacitor of zero value is open");
    const double w = omega(state.f_hz);
    const Complex jbp{0.0, w * state.cp_farads};
    const Complex jbs{0.0, w * state.cs_farads};
    const Complex branch = zl.value + 1.0 / jbs;
    if (branch == Complex{}) throw SingularNetwork("series branch impedance vanished");
    const Complex y = jbp + 1.0 / branch;
    if (y == Complex{}) throw SingularNetwork("input admittance vanished");
    return {1.0 / y};
}

CircuitTopology ideal_l_topology(Range band_hz, Range p_farads, Range s_farads) {
    return CircuitTopology("ideal-l-network", band_hz, p_farads, s_farads,
                           {Arm{ArmOrientation::shunt, ElementExpr::tunable(TunableSlot::P)},
                            Arm{ArmOrientation::series, ElementExpr::tunable(TunableSlot::S)}});
}

std::vector<MatchSolutionPair> analytical_match(Impedance zl, double f_hz, ReferenceImpedance r) {
    check_frequency(f_hz);
    const double rl = zl.value.real();
    const double xl = zl.value.imag();
    const double rs = r.ohms();
    if (!(rl > 0.0) || !std::isfinite(rl) || !std::isfinite(xl))
        throw InvalidArgument("analytical match needs a finite load with positive resistance");

    const double radicand = rl * rs - rl * rl;
    if (radicand < 0.0)
        throw NoFeasibleSolution("load resistance exceeds the source resistance (forbidden region)");
    const double q = std::sqrt(radicand);
    const double w = omega(f_hz);

    std::vector<MatchSolutionPair> out;
    // Every sign pairing is tried; a pairing is kept only if it reproduces
    // Zin = r when substituted back into the ideal input impedance.
    for (const double sign_s : {1.0, -1.0}) {
        const double cs = (xl + sign_s * q) / (w * (rl * rl + xl * xl - rl * rs));
        for (const double sign_p : {1.0, -1.0}) {
            const double cp = (radicand + sign_p * xl * q) / (w * (rl * xl * rs + sign_p * rl * rs * q));
            if (!std::isfinite(cp) || !std::isfinite(cs) || !(cp > 0.0) || !(cs > 0.0)) continue;
            Impedance zin;
            try {
                zin = ideal_l_input_impedance(zl, {f_hz, cp, cs});
            } catch (const SingularNetwork&) {
                continue;
            }
            if (std::abs(zin.value - rs) < 1e-6 * rs)
                out.push_back({cp, cs, sign_s > 0 ? MatchSolutionPair::Branch::plus
                                                  : MatchSolutionPair::Branch::minus});
        }
    }
    if (out.empty()) throw NoFeasibleSolution("no sign pairing yields two positive capacitors");
    return out;
}

std::filesystem::path data_directory() {
    if (const char* env = std::getenv("RFMATCH_DATA_DIR"); env && *env) return env;
    return RFMATCH_DEFAULT_DATA_DIR;
}

CircuitTopology reference_practical_circuit() {
    return load_circuit_spec(data_directory() / "reference_circuit.json");
}

}  // namespace rfmatch
