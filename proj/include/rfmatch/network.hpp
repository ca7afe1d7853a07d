#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace rfmatch {

using Complex = std::complex<double>;

inline bool is_finite(Complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

/// Impedance in ohms.
struct Impedance {
    Complex value{};
    constexpr Impedance() = default;
    constexpr Impedance(Complex z) : value(z) {}
    constexpr Impedance(double r, double x = 0.0) : value(r, x) {}
    friend bool operator==(const Impedance&, const Impedance&) = default;
};

/// Admittance in siemens.
struct Admittance {
    Complex value{};
    constexpr Admittance() = default;
    constexpr Admittance(Complex y) : value(y) {}
    constexpr Admittance(double g, double b = 0.0) : value(g, b) {}
    friend bool operator==(const Admittance&, const Admittance&) = default;

    /// Throws SingularNetwork on zero impedance.
    static Admittance of(Impedance z);
    Impedance inverse() const;
};

/// Real, strictly positive reference (source / characteristic) impedance.
class ReferenceImpedance {
public:
    static constexpr double kDefaultOhms = 50.0;

    constexpr ReferenceImpedance() = default;
    explicit ReferenceImpedance(double ohms);

    constexpr double ohms() const { return ohms_; }
    friend bool operator==(const ReferenceImpedance&, const ReferenceImpedance&) = default;

private:
    double ohms_ = kDefaultOhms;
};

struct ReflectionCoefficient {
    Complex value{};
    constexpr ReflectionCoefficient() = default;
    constexpr ReflectionCoefficient(Complex g) : value(g) {}
    constexpr ReflectionCoefficient(double re, double im = 0.0) : value(re, im) {}
    double magnitude() const { return std::abs(value); }
    friend bool operator==(const ReflectionCoefficient&, const ReflectionCoefficient&) = default;
};

/// Transmission (ABCD) matrix: b in ohms, c in siemens.
struct AbcdMatrix {
    Complex a{1.0}, b{0.0}, c{0.0}, d{1.0};

    static constexpr AbcdMatrix identity() { return {}; }
    Complex determinant() const { return a * d - b * c; }

    friend AbcdMatrix operator*(const AbcdMatrix& l, const AbcdMatrix& r) {
        return {l.a * r.a + l.b * r.c, l.a * r.b + l.b * r.d,
                l.c * r.a + l.d * r.c, l.c * r.b + l.d * r.d};
    }
    friend bool operator==(const AbcdMatrix&, const AbcdMatrix&) = default;
};

struct SParameters {
    Complex s11{}, s12{}, s21{}, s22{};
    ReferenceImpedance reference{};

    /// (Re s11, Im s11, Re s12, Im s12, Re s21, Im s21, Re s22, Im s22).
    std::array<double, 8> to_vector() const;
    static SParameters from_vector(std::span<const double, 8> v,
                                   ReferenceImpedance z0 = ReferenceImpedance{});
    friend bool operator==(const SParameters&, const SParameters&) = default;
};

// Two-port building blocks. All functions are pure.

AbcdMatrix series_arm_abcd(Impedance z);
AbcdMatrix shunt_arm_abcd(Admittance y);

/// Left-to-right product; the empty cascade is the identity.
AbcdMatrix cascade(std::span<const AbcdMatrix> factors);

/// Same reference impedance on both ports. Throws SingularNetwork when
/// a + b/z0 + c*z0 + d vanishes.
SParameters abcd_to_s(const AbcdMatrix& m, ReferenceImpedance z0 = ReferenceImpedance{});

ReflectionCoefficient impedance_to_reflection(Impedance z,
                                              ReferenceImpedance r = ReferenceImpedance{});
Impedance reflection_to_impedance(ReflectionCoefficient g,
                                  ReferenceImpedance r = ReferenceImpedance{});

/// Input reflection seen at port 1 with load reflection `gl` on port 2.
ReflectionCoefficient input_reflection(const SParameters& s, ReflectionCoefficient gl);

/// Inverse of input_reflection: the load reflection that produces `gin`.
/// Throws UnrecoverableLoad when the denominator vanishes.
ReflectionCoefficient load_reflection_from_input(const SParameters& s, ReflectionCoefficient gin);

/// |input_reflection(s, gl)|.
double objective_psi(const SParameters& s, ReflectionCoefficient gl);

/// Partial derivatives of objective_psi with respect to the eight real
/// components of `s` (same ordering as SParameters::to_vector). The
/// magnitude is not differentiable at zero; there the gradient is zero.
std::array<double, 8> objective_psi_gradient(const SParameters& s, ReflectionCoefficient gl);

/// Writes a two-port sweep in Touchstone v1 form (`# GHZ S RI R <z0>`).
/// Rows: f_GHz s11 s21 s12 s22, each as re im pairs.
void write_touchstone(std::ostream& out,
                      std::span<const std::pair<double, SParameters>> sweep_hz);

}  // namespace rfmatch
