#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "rfmatch/error.hpp"
#include "rfmatch/network.hpp"

using namespace rfmatch;

namespace {

void expect_complex_near(Complex got, Complex want, double tol) {
    EXPECT_NEAR(got.real(), want.real(), tol);
    EXPECT_NEAR(got.imag(), want.imag(), tol);
}

SParameters random_passive_s(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    // A lossy series/shunt pair always yields a passive reciprocal network.
    const Impedance z{std::abs(u(rng)) * 80.0 + 1.0, u(rng) * 120.0};
    const Admittance y{std::abs(u(rng)) * 0.02, u(rng) * 0.05};
    return abcd_to_s(series_arm_abcd(z) * shunt_arm_abcd(y));
}

}  // namespace

TEST(SeriesArm, ZeroIsIdentity) {
    EXPECT_EQ(series_arm_abcd(Impedance{0.0}), AbcdMatrix::identity());
}

TEST(SeriesArm, Fifty) {
    const auto m = series_arm_abcd(Impedance{50.0});
    EXPECT_EQ(m.a, Complex(1.0));
    EXPECT_EQ(m.b, Complex(50.0));
    EXPECT_EQ(m.c, Complex(0.0));
    EXPECT_EQ(m.d, Complex(1.0));
    expect_complex_near(series_arm_abcd(Impedance{3.0, -7.0}).determinant(), 1.0, 0.0);
}

TEST(SeriesArm, RejectsNonFinite) {
    EXPECT_THROW(series_arm_abcd(Impedance{std::numeric_limits<double>::infinity()}),
                 InvalidArgument);
    EXPECT_THROW(shunt_arm_abcd(Admittance{0.0, std::nan("")}), InvalidArgument);
}

TEST(ShuntArm, Basics) {
    EXPECT_EQ(shunt_arm_abcd(Admittance{0.0}), AbcdMatrix::identity());
    const auto m = shunt_arm_abcd(Admittance{0.02});
    EXPECT_EQ(m.c, Complex(0.02));
    EXPECT_EQ(m.b, Complex(0.0));
    expect_complex_near(shunt_arm_abcd(Admittance{0.3, 4.0}).determinant(), 1.0, 0.0);
}

TEST(Cascade, EmptyAndPair) {
    EXPECT_EQ(cascade({}), AbcdMatrix::identity());
    const AbcdMatrix f[] = {series_arm_abcd(Impedance{50.0}), shunt_arm_abcd(Admittance{0.02})};
    const auto m = cascade(f);
    expect_complex_near(m.a, 2.0, 1e-15);
    expect_complex_near(m.b, 50.0, 1e-15);
    expect_complex_near(m.c, 0.02, 1e-15);
    expect_complex_near(m.d, 1.0, 1e-15);
}

TEST(Cascade, Associative) {
    const auto a = series_arm_abcd(Impedance{3.0, 40.0});
    const auto b = shunt_arm_abcd(Admittance{0.001, -0.03});
    const auto c = series_arm_abcd(Impedance{0.5, -12.0});
    const auto l = a * (b * c);
    const auto r = (a * b) * c;
    expect_complex_near(l.a, r.a, 1e-12);
    expect_complex_near(l.b, r.b, 1e-12);
    expect_complex_near(l.c, r.c, 1e-12);
    expect_complex_near(l.d, r.d, 1e-12);
}

TEST(AbcdToS, KnownValues) {
    const auto thru = abcd_to_s(AbcdMatrix::identity());
    EXPECT_EQ(thru.s11, Complex(0.0));
    EXPECT_EQ(thru.s22, Complex(0.0));
    EXPECT_EQ(thru.s12, Complex(1.0));
    EXPECT_EQ(thru.s21, Complex(1.0));

    const auto ser = abcd_to_s(series_arm_abcd(Impedance{50.0}));
    expect_complex_near(ser.s11, 1.0 / 3.0, 1e-15);
    expect_complex_near(ser.s21, 2.0 / 3.0, 1e-15);

    const auto sh = abcd_to_s(shunt_arm_abcd(Admittance{0.02}));
    expect_complex_near(sh.s11, -1.0 / 3.0, 1e-15);
    expect_complex_near(sh.s21, 2.0 / 3.0, 1e-15);
}

TEST(AbcdToS, SingularDenominator) {
    // a + b/z0 + c z0 + d = 0 for b = -100 with z0 = 50.
    AbcdMatrix m;
    m.b = -100.0;
    EXPECT_THROW(abcd_to_s(m), SingularNetwork);
}

TEST(AbcdToS, LosslessIsUnitary) {
    const AbcdMatrix f[] = {series_arm_abcd(Impedance{0.0, 37.0}),
                            shunt_arm_abcd(Admittance{0.0, -0.011}),
                            series_arm_abcd(Impedance{0.0, -80.0})};
    const auto s = abcd_to_s(cascade(f));
    EXPECT_NEAR(std::norm(s.s11) + std::norm(s.s21), 1.0, 1e-6);
    EXPECT_NEAR(std::norm(s.s12) + std::norm(s.s22), 1.0, 1e-6);
    EXPECT_NEAR(std::abs(s.s12 - s.s21), 0.0, 1e-9);
}

TEST(Reflection, Examples) {
    expect_complex_near(impedance_to_reflection(Impedance{50.0}).value, 0.0, 0.0);
    expect_complex_near(impedance_to_reflection(Impedance{100.0}).value, 1.0 / 3.0, 1e-15);
    expect_complex_near(impedance_to_reflection(Impedance{0.0}).value, -1.0, 0.0);
    EXPECT_THROW(impedance_to_reflection(Impedance{-50.0}), SingularNetwork);

    expect_complex_near(reflection_to_impedance(ReflectionCoefficient{0.0}).value, 50.0, 0.0);
    expect_complex_near(reflection_to_impedance(ReflectionCoefficient{1.0 / 3.0}).value, 100.0,
                        1e-12);
    EXPECT_THROW(reflection_to_impedance(ReflectionCoefficient{1.0}), SingularNetwork);

    const ReflectionCoefficient g{0.2, -0.4};
    expect_complex_near(impedance_to_reflection(reflection_to_impedance(g)).value, g.value,
                        1e-15);
}

TEST(Reflection, ReferenceMustBePositive) {
    EXPECT_THROW(ReferenceImpedance(0.0), InvalidArgument);
    EXPECT_THROW(ReferenceImpedance(-3.0), InvalidArgument);
    EXPECT_EQ(ReferenceImpedance(75.0).ohms(), 75.0);
}

TEST(InputReflection, IdentityAndZeroLoad) {
    const auto thru = abcd_to_s(AbcdMatrix::identity());
    expect_complex_near(input_reflection(thru, {0.3, 0.1}).value, Complex(0.3, 0.1), 0.0);
    const SParameters s{{0.1, 0.2}, {0.5, 0.1}, {0.5, 0.1}, {-0.3, 0.2}};
    expect_complex_near(input_reflection(s, {0.0}).value, s.s11, 0.0);
    EXPECT_DOUBLE_EQ(objective_psi(thru, {0.3}), 0.3);
}

TEST(LoadRecovery, Examples) {
    const SParameters s{{0.1, 0.2}, {0.5, 0.1}, {0.5, 0.1}, {-0.3, 0.2}};
    expect_complex_near(load_reflection_from_input(s, {s.s11}).value, 0.0, 0.0);
    const auto thru = abcd_to_s(AbcdMatrix::identity());
    expect_complex_near(load_reflection_from_input(thru, {0.3}).value, 0.3, 0.0);

    SParameters degenerate{};
    degenerate.s11 = 0.2;
    EXPECT_THROW(load_reflection_from_input(degenerate, {0.5}), UnrecoverableLoad);
    EXPECT_THROW(load_reflection_from_input(degenerate, {0.5}), SingularNetwork);
}

TEST(LoadRecovery, PsiZeroAtRecoveredLoad) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        const auto s = random_passive_s(rng);
        const auto gl = load_reflection_from_input(s, {0.0});
        EXPECT_LT(objective_psi(s, gl), 1e-12);
    }
}

TEST(LoadRecovery, RoundTripRandom) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const auto s = random_passive_s(rng);
        Complex gl{u(rng), u(rng)};
        if (std::abs(gl) > 0.95) gl *= 0.95 / std::abs(gl);
        const auto gin = input_reflection(s, gl);
        const auto back = load_reflection_from_input(s, gin);
        EXPECT_LT(std::abs(back.value - gl), 1e-12);
        EXPECT_LE(gin.magnitude(), 1.0 + 1e-9);
    }
}

TEST(PsiGradient, MatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = random_passive_s(rng);
        const ReflectionCoefficient gl{u(rng), u(rng)};
        const auto grad = objective_psi_gradient(s, gl);
        auto v = s.to_vector();
        for (int k = 0; k < 8; ++k) {
            const double h = 1e-6;
            auto vp = v;
            auto vm = v;
            vp[k] += h;
            vm[k] -= h;
            const double fd = (objective_psi(SParameters::from_vector(vp), gl) -
                               objective_psi(SParameters::from_vector(vm), gl)) /
                              (2 * h);
            EXPECT_NEAR(grad[k], fd, 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(PsiGradient, ZeroAtPerfectMatch) {
    const auto thru = abcd_to_s(AbcdMatrix::identity());
    for (double g : objective_psi_gradient(thru, {0.0})) EXPECT_EQ(g, 0.0);
}

TEST(SParameters, VectorRoundTrip) {
    const SParameters s{{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}, {0.7, 0.8}};
    const auto v = s.to_vector();
    EXPECT_EQ(v[2], 0.3);
    EXPECT_EQ(v[5], 0.6);
    EXPECT_EQ(SParameters::from_vector(v), s);
}

TEST(Touchstone, HeaderAndRow) {
    const std::pair<double, SParameters> rows[] = {
        {1.75e9, abcd_to_s(series_arm_abcd(Impedance{50.0}))}};
    std::ostringstream out;
    write_touchstone(out, rows);
    const std::string text = out.str();
    EXPECT_NE(text.find("# GHZ S RI R 50"), std::string::npos);
    std::istringstream in(text.substr(text.find('\n', text.find("# GHZ")) + 1));
    double f, vals[8];
    in >> f;
    for (double& x : vals) in >> x;
    EXPECT_DOUBLE_EQ(f, 1.75);
    EXPECT_NEAR(vals[0], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(vals[2], 2.0 / 3.0, 1e-15);
}
