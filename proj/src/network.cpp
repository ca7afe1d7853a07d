#include "rfmatch/network.hpp"

#include <cstdio>
#include <ostream>

#include "rfmatch/error.hpp"

namespace rfmatch {

namespace {

void require_finite(Complex z, const char* what) {
    if (!is_finite(z)) throw InvalidArgument(std::string(what) + " must be finite");
}

bool vanishes(Complex z) { return z == Complex{0.0, 0.0} || !is_finite(z); }

}  // namespace

Admittance Admittance::of(Impedance z) {
    if (z.value == Complex{0.0, 0.0}) throw SingularNetwork("zero impedance has no admittance");
    return Admittance{1.0 / z.value};
}

Impedance Admittance::inverse() const {
    if (value == Complex{0.0, 0.0}) throw SingularNetwork("zero admittance has no impedance");
    return Impedance{1.0 / value};
}

ReferenceImpedance::ReferenceImpedance(double ohms) : ohms_(ohms) {
    if (!(ohms > 0.0) || !std::isfinite(ohms))
        throw InvalidArgument("reference impedance must be finite and strictly positive");
}

std::array<double, 8> SParameters::to_vector() const {
    return {s11.real(), s11.imag(), s12.real(), s12.imag(),
            s21.real(), s21.imag(), s22.real(), s22.imag()};
}

SParameters SParameters::from_vector(std::span<const double, 8> v, ReferenceImpedance z0) {
    return {{v[0], v[1]}, {v[2], v[3]}, {v[4], v[5]}, {v[6], v[7]}, z0};
}

AbcdMatrix series_arm_abcd(Impedance z) {
    require_finite(z.value, "series arm impedance");
    return {1.0, z.value, 0.0, 1.0};
}

AbcdMatrix shunt_arm_abcd(Admittance y) {
    require_finite(y.value, "shunt arm admittance");
    return {1.0, 0.0, y.value, 1.0};
}

AbcdMatrix cascade(std::span<const AbcdMatrix> factors) {
    AbcdMatrix total = AbcdMatrix::identity();
    for (const auto& f : factors) total = total * f;
    return total;
}

SParameters abcd_to_s(const AbcdMatrix& m, ReferenceImpedance z0) {
    const double r = z0.ohms();
    const Complex b_n = m.b / r;
    const Complex c_n = m.c * r;
    const Complex den = m.a + b_n + c_n + m.d;
    if (vanishes(den)) throw SingularNetwork("ABCD to S conversion: zero denominator");
    SParameters s;
    s.s11 = (m.a + b_n - c_n - m.d) / den;
    s.s12 = 2.0 * m.determinant() / den;
    s.s21 = 2.0 / den;
    s.s22 = (-m.a + b_n - c_n + m.d) / den;
    s.reference = z0;
    return s;
}

ReflectionCoefficient impedance_to_reflection(Impedance z, ReferenceImpedance r) {
    const Complex den = z.value + r.ohms();
    if (vanishes(den)) throw SingularNetwork("impedance equals minus the reference");
    return {(z.value - r.ohms()) / den};
}

Impedance reflection_to_impedance(ReflectionCoefficient g, ReferenceImpedance r) {
    const Complex den = 1.0 - g.value;
    if (vanishes(den)) throw SingularNetwork("reflection coefficient 1 is an open circuit");
    return {r.ohms() * (1.0 + g.value) / den};
}

ReflectionCoefficient input_reflection(const SParameters& s, ReflectionCoefficient gl) {
    const Complex den = 1.0 - gl.value * s.s22;
    if (vanishes(den)) throw SingularNetwork("input reflection: 1 - gl*s22 vanished");
    return {s.s12 * s.s21 * gl.value / den + s.s11};
}

ReflectionCoefficient load_reflection_from_input(const SParameters& s, ReflectionCoefficient gin) {
    const Complex num = gin.value - s.s11;
    const Complex den = s.s12 * s.s21 + num * s.s22;
    if (vanishes(den)) throw UnrecoverableLoad("load reflection: s12*s21 + (gin - s11)*s22 vanished");
    return {num / den};
}

double objective_psi(const SParameters& s, ReflectionCoefficient gl) {
    return std::abs(input_reflection(s, gl).value);
}

std::array<double, 8> objective_psi_gradient(const SParameters& s, ReflectionCoefficient gl) {
    const Complex gamma = input_reflection(s, gl).value;
    const double mag = std::abs(gamma);
    std::array<double, 8> grad{};
    if (mag == 0.0) return grad;

    const Complex den = 1.0 - gl.value * s.s22;
    // Complex derivatives of the (holomorphic) input reflection.
    const std::array<Complex, 4> dgamma = {
        Complex{1.0},
        s.s21 * gl.value / den,
        s.s12 * gl.value / den,
        s.s12 * s.s21 * gl.value * gl.value / (den * den),
    };
    const Complex a = std::conj(gamma) / mag;
    for (std::size_t k = 0; k < 4; ++k) {
        const Complex ag = a * dgamma[k];
        grad[2 * k] = ag.real();
        grad[2 * k + 1] = -ag.imag();
    }
    return grad;
}

void write_touchstone(std::ostream& out,
                      std::span<const std::pair<double, SParameters>> sweep_hz) {
    const double z0 = sweep_hz.empty() ? ReferenceImpedance::kDefaultOhms
                                       : sweep_hz.front().second.reference.ohms();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", z0);
    out << "! two-port S-parameters, real/imag\n";
    out << "# GHZ S RI R " << buf << '\n';
    for (const auto& [f, s] : sweep_hz) {
        if (s.reference.ohms() != z0)
            throw InvalidArgument("touchstone export requires one reference impedance");
        const double row[9] = {f * 1e-9,       s.s11.real(), s.s11.imag(), s.s21.real(), s.s21.imag(),
                               s.s12.real(), s.s12.imag(), s.s22.real(), s.s22.imag()};
        for (int i = 0; i < 9; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", row[i]);
            out << (i ? " " : "") << buf;
        }
        out << '\n';
    }
}

}  // namespace rfmatch
