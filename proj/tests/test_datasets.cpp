#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "rfmatch/datasets.hpp"
#include "rfmatch/error.hpp"

using namespace rfmatch;

namespace {

const CircuitTopology& reference() {
    static const CircuitTopology t = reference_practical_circuit();
    return t;
}

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "rfmatch_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Sweep, LatticeCounts) {
    EXPECT_EQ((AxisSpec{1.5e9, 2e9, 0.05e9}).count(), 11u);
    EXPECT_EQ((AxisSpec{0, 10e-12, 0.2e-12}).count(), 51u);
    EXPECT_EQ((AxisSpec{0, 10e-12, 0.02e-12}).count(), 501u);
    EXPECT_EQ((AxisSpec{1.5e9, 2e9, 0.02e9}).count(), 26u);
    EXPECT_EQ((AxisSpec{0, 10e-12, 0.2e-12}).at(50), 10e-12);
    EXPECT_EQ(SweepSpec::desk(reference()).size(), 28611u);
    EXPECT_EQ(SweepSpec::paper(reference()).size(), 6526026u);
    EXPECT_THROW((AxisSpec{1, 0, 1}).validate("x"), ValidationError);
    EXPECT_THROW((AxisSpec{0, 1, 0}).validate("x"), ValidationError);
}

TEST(Sweep, SinglePoint) {
    const SweepSpec spec{{1.75e9, 1.75e9, 1e9}, {5e-12, 5e-12, 1e-12}, {5e-12, 5e-12, 1e-12}};
    const auto d = generate_sweep(reference(), spec);
    ASSERT_EQ(d.size(), 1u);
    const auto s = simulate(reference(), {1.75e9, 5e-12, 5e-12}).to_vector();
    for (int k = 0; k < 8; ++k) EXPECT_NEAR(d.rows(0, 3 + k), s[k], 1e-12);
}

TEST(Sweep, OrderAndReciprocity) {
    const SweepSpec spec{{1.5e9, 2e9, 0.25e9}, {0, 10e-12, 2.5e-12}, {0, 10e-12, 5e-12}};
    const auto d = generate_sweep(reference(), spec);
    ASSERT_EQ(d.size(), 3u * 5u * 3u);
    EXPECT_EQ(d.skipped, 0u);
    EXPECT_EQ(d.rows(0, 0), 1.5e9);
    EXPECT_EQ(d.rows(1, 2), 5e-12);  // cs varies fastest
    EXPECT_EQ(d.rows(3, 1), 2.5e-12);
    EXPECT_EQ(d.rows(15, 0), 1.75e9);
    for (Eigen::Index r = 0; r < d.rows.rows(); ++r) {
        EXPECT_NEAR(d.rows(r, 5), d.rows(r, 7), 1e-9);
        EXPECT_NEAR(d.rows(r, 6), d.rows(r, 8), 1e-9);
        const auto s = simulate(reference(), {d.rows(r, 0), d.rows(r, 1), d.rows(r, 2)}).to_vector();
        for (int k = 0; k < 8; ++k) EXPECT_NEAR(d.rows(r, 3 + k), s[k], 1e-12);
    }
}

TEST(Sweep, WorkerCountDoesNotChangeOutput) {
    const SweepSpec spec{{1.5e9, 2e9, 0.1e9}, {0, 10e-12, 1e-12}, {0, 10e-12, 1e-12}};
    const auto a = generate_sweep(reference(), spec, 1);
    const auto b = generate_sweep(reference(), spec, 3);
    EXPECT_EQ(a.rows, b.rows);
}

TEST(Inverse, IdentityModelGivesZeroLoad) {
    MlpModel m(ModelRole::recbm, 3, 8, 0.125, {{1.5e9, 0, 0}, {2e9, 1e-11, 1e-11}});
    // s12 = s21 = 1, s11 = s22 = 0 through the output bias.
    m.bias(m.layer_count() - 1) << 0, 0, 1, 0, 1, 0, 0, 0;
    const SweepSpec spec{{1.5e9, 2e9, 0.25e9}, {0, 10e-12, 5e-12}, {0, 10e-12, 5e-12}};
    const auto d = generate_inverse_dataset(m, spec);
    EXPECT_EQ(d.size(), spec.size());
    EXPECT_EQ(d.skipped, 0u);
    for (Eigen::Index r = 0; r < d.rows.rows(); ++r) {
        EXPECT_EQ(d.rows(r, 1), 0.0);
        EXPECT_EQ(d.rows(r, 2), 0.0);
    }
}

TEST(Inverse, DegenerateModelRowsSkipped) {
    MlpModel m(ModelRole::recbm, 3, 8, 0.125, {{1.5e9, 0, 0}, {2e9, 1e-11, 1e-11}});
    const SweepSpec spec{{1.5e9, 2e9, 0.25e9}, {0, 10e-12, 5e-12}, {0, 10e-12, 5e-12}};
    const auto d = generate_inverse_dataset(m, spec);
    EXPECT_EQ(d.size(), 0u);
    EXPECT_EQ(d.skipped, spec.size());
}

TEST(Scenarios, PerfectStateGivesZeroReflection) {
    const std::pair<double, double> dummy{0, 0};
    const auto probe = make_scenario(reference(), 42, 3, 0.0, &dummy);
    const std::pair<double, double> now{probe.cp_opt, probe.cs_opt};
    const auto sc = make_scenario(reference(), 42, 3, 0.0, &now);
    EXPECT_LT(std::abs(sc.gin), 1e-12);
}

TEST(Scenarios, ConstructionInvariants) {
    const auto suite = generate_scenarios(reference(), 300, 7);
    ASSERT_EQ(suite.scenarios.size(), 300u);
    EXPECT_EQ(suite.circuit_fingerprint, reference().fingerprint());
    for (const auto& s : suite.scenarios) {
        EXPECT_LT(std::abs(s.gl), 1.0);
        EXPECT_TRUE(reference().band_hz().contains(s.f_hz));
        EXPECT_TRUE(reference().p_range().contains(s.cp_opt));
        EXPECT_TRUE(reference().s_range().contains(s.cs_now));
        const auto s_opt = simulate(reference(), {s.f_hz, s.cp_opt, s.cs_opt});
        EXPECT_LT(objective_psi(s_opt, s.gl), 1e-9);
        const auto s_now = simulate(reference(), {s.f_hz, s.cp_now, s.cs_now});
        EXPECT_LT(std::abs(input_reflection(s_now, s.gl).value - s.gin), 1e-15);
    }
}

TEST(Scenarios, ReproducibleAndNoiseCoherent) {
    const auto a = generate_scenarios(reference(), 50, 11, 0.0);
    const auto b = generate_scenarios(reference(), 50, 11, 0.0);
    const auto c = generate_scenarios(reference(), 50, 11, 0.0004);
    const auto d = generate_scenarios(reference(), 50, 11, 0.0002);
    for (std::size_t i = 0; i < 50; ++i) {
        EXPECT_EQ(a.scenarios[i].gin, b.scenarios[i].gin);
        EXPECT_EQ(a.scenarios[i].gl, c.scenarios[i].gl);
        EXPECT_EQ(a.scenarios[i].cp_now, c.scenarios[i].cp_now);
        const Complex wc = c.scenarios[i].gin - a.scenarios[i].gin;
        const Complex wd = d.scenarios[i].gin - a.scenarios[i].gin;
        EXPECT_NEAR(std::abs(wc - 2.0 * wd), 0.0, 1e-15);
    }
}

TEST(Noise, ZeroSigmaIsIdentity) {
    Rng rng(1);
    EXPECT_EQ(add_measurement_noise({0.3, -0.1}, 0.0, rng), Complex(0.3, -0.1));
    EXPECT_THROW(add_measurement_noise({0.3, -0.1}, -1.0, rng), InvalidArgument);
}

TEST(Noise, PowerMatchesSigmaSquared) {
    Rng rng(5);
    const double sigma = 0.0004;
    double acc = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) acc += std::norm(add_measurement_noise(0.0, sigma, rng));
    EXPECT_NEAR(acc / n / (sigma * sigma), 1.0, 0.01);
}

TEST(Normalization, FitAndApply) {
    Matrix x(3, 2);
    x << 1.5e9, 0, 2e9, 10, 1.75e9, 5;
    const auto spec = fit_normalization(x);
    const Matrix n = apply_normalization(spec, x);
    EXPECT_EQ(n(0, 0), 0.0);
    EXPECT_EQ(n(1, 0), 1.0);
    EXPECT_EQ(n(2, 0), 0.5);
    Matrix flat = Matrix::Ones(4, 2);
    EXPECT_THROW(fit_normalization(flat), ValidationError);
    EXPECT_THROW(fit_normalization(Matrix(0, 3)), ValidationError);
}

TEST(Split, Examples) {
    Dataset d;
    d.columns = {"a", "b", "c", "d"};
    d.rows.resize(10, 4);
    for (int i = 0; i < 10; ++i) d.rows.row(i).setConstant(i);
    const auto [tr, va] = split_dataset(d, 0.8, 3);
    EXPECT_EQ(tr.size(), 8u);
    EXPECT_EQ(va.size(), 2u);
    const auto [tr2, va2] = split_dataset(d, 0.8, 3);
    EXPECT_EQ(tr.rows, tr2.rows);
    std::vector<double> all;
    for (Eigen::Index i = 0; i < 8; ++i) all.push_back(tr.rows(i, 0));
    for (Eigen::Index i = 0; i < 2; ++i) all.push_back(va.rows(i, 0));
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
    EXPECT_THROW(split_dataset(d, 1.0, 3), InvalidArgument);
    EXPECT_THROW(split_dataset(d, 0.01, 3), InvalidArgument);
}

TEST(Persistence, BinaryAndCsvRoundTrip) {
    const SweepSpec spec{{1.5e9, 2e9, 0.25e9}, {0, 10e-12, 2.5e-12}, {0, 10e-12, 5e-12}};
    const auto d = generate_sweep(reference(), spec);
    for (auto fmt : {DatasetFormat::binary, DatasetFormat::csv}) {
        const auto path = temp_path(fmt == DatasetFormat::binary ? "sweep.bin" : "sweep.csv");
        save_dataset(d, path, fmt);
        const auto back = load_dataset(path);
        EXPECT_EQ(back.rows, d.rows);
        EXPECT_EQ(back.columns, d.columns);
        EXPECT_EQ(back.metadata, d.metadata);
        EXPECT_EQ(back.kind, DatasetKind::sweep);
    }
}

TEST(Persistence, TruncatedBinaryRejected) {
    const SweepSpec spec{{1.5e9, 2e9, 0.25e9}, {0, 10e-12, 5e-12}, {0, 10e-12, 5e-12}};
    const auto path = temp_path("trunc.bin");
    save_dataset(generate_sweep(reference(), spec), path, DatasetFormat::binary);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    EXPECT_THROW(load_dataset(path), FormatError);
}

TEST(Persistence, ScenarioRoundTrip) {
    const auto suite = generate_scenarios(reference(), 20, 9, 0.0002);
    const auto path = temp_path("scen.json");
    save_scenarios(suite, path);
    const auto back = load_scenarios(path);
    ASSERT_EQ(back.scenarios.size(), 20u);
    EXPECT_EQ(back.circuit_fingerprint, suite.circuit_fingerprint);
    for (std::size_t i = 0; i < 20; ++i) {
        EXPECT_EQ(back.scenarios[i].gin, suite.scenarios[i].gin);
        EXPECT_EQ(back.scenarios[i].gl, suite.scenarios[i].gl);
        EXPECT_EQ(back.scenarios[i].cs_opt, suite.scenarios[i].cs_opt);
    }
}
