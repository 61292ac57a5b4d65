#include "mixrom/assembly.hpp"
#include "mixrom/error.hpp"
#include "mixrom/qoi.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace mixrom;

namespace {

fem::SparseMatrix unit_mass(int nodes) {
    const fem::Mesh mesh = fem::build_mesh(nodes, 1.0);
    return fem::assemble(mesh, [](const fem::Point2&, double) { return fem::SymTensor2{1.0, 0.0, 1.0}; }, 0.0).mass;
}

std::vector<double> grid(int n, double t1) {
    std::vector<double> t;
    for (int i = 0; i <= n; ++i) {
        t.push_back(t1 * i / n);
    }
    return t;
}

}  // namespace

TEST(Qoi, RawMomentsOfConstantAndLinearFields) {
    const int nodes = 9;
    const fem::Mesh mesh = fem::build_mesh(nodes, 1.0);
    const fem::SparseMatrix m = unit_mass(nodes);
    const fem::Vector half = fem::Vector::Constant(m.rows(), 0.5);
    const qoi::RawMoments c = qoi::raw_moments(m, half);
    EXPECT_NEAR(c.mean, 0.5, 1e-14);
    EXPECT_NEAR(c.mean_sq, 0.25, 1e-14);
    EXPECT_NEAR(c.variance, 0.0, 1e-14);

    // P1 represents x exactly and the consistent mass integrates its square exactly.
    fem::Vector x(m.rows());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x[i] = mesh.nodes()[static_cast<std::size_t>(i)].x;
    }
    const qoi::RawMoments l = qoi::raw_moments(m, x);
    EXPECT_NEAR(l.mean, 0.5, 1e-14);
    EXPECT_NEAR(l.mean_sq, 1.0 / 3.0, 1e-14);
    EXPECT_NEAR(l.variance, 1.0 / 12.0, 1e-14);
}

TEST(Qoi, SeriesAreSelfNormalizedAndZeroSpeciesFlagged) {
    const fem::SparseMatrix m = unit_mass(5);
    const auto n = m.rows();
    const std::vector<double> times{0.0, 0.5, 1.0};
    std::vector<physics::SpeciesFields> fields;
    for (double amp : {1.0, 0.5, 0.25}) {
        physics::SpeciesFields f;
        f.a = fem::Vector::Zero(n);
        f.a.head(n / 2).setConstant(amp);
        f.b = fem::Vector::Zero(n);
        f.c = fem::Vector::Constant(n, 0.3);
        fields.push_back(f);
    }
    const auto q = qoi::compute_qois("s", times, fields, m);
    EXPECT_DOUBLE_EQ(*std::max_element(q[0].avg_conc.begin(), q[0].avg_conc.end()), 1.0);
    EXPECT_NEAR(q[0].avg_conc[1], 0.5, 1e-14);
    EXPECT_NEAR(q[0].avg_sq_conc[2], 0.0625, 1e-14);
    EXPECT_NEAR(q[0].degree_of_mixing[2], 0.0625, 1e-14);
    EXPECT_TRUE(q[1].zero_avg_conc);
    EXPECT_TRUE(q[1].zero_variance);
    for (double v : q[1].degree_of_mixing) {
        EXPECT_EQ(v, 0.0);
    }
    // A uniform field has no variance even though its mean is positive.
    EXPECT_FALSE(q[2].zero_avg_conc);
    EXPECT_TRUE(q[2].zero_variance);
}

TEST(Qoi, FitExponentRecoversSyntheticRate) {
    const auto t = grid(100, 1.0);
    std::vector<double> s;
    for (double v : t) {
        s.push_back(2.0 * std::exp(-3.5 * v));
    }
    const qoi::ScalingFit fit = qoi::fit_exponent(s, t);
    EXPECT_NEAR(fit.exponent, -3.5, 1e-12);
    EXPECT_NEAR(fit.prefactor, 2.0, 1e-12);
    EXPECT_NEAR(fit.r2, 1.0, 1e-12);
    EXPECT_EQ(fit.samples, 81);
}

TEST(Qoi, FitExponentNeedsThreeUsableSamples) {
    const auto t = grid(10, 1.0);
    std::vector<double> s(t.size(), 0.0);
    s[0] = 1.0;
    s[9] = 0.5;
    s[10] = 0.4;
    EXPECT_THROW((void)qoi::fit_exponent(s, t), NumericalError);
    EXPECT_THROW((void)qoi::fit_exponent(s, t, {0.8, 0.2}), InvalidArgument);
}

TEST(Qoi, EnvelopeFloor) {
    const auto t = grid(50, 1.0);
    std::vector<double> pure;
    std::vector<double> lifted;
    for (double v : t) {
        pure.push_back(std::exp(-2.0 * v));
        lifted.push_back(0.3 + 0.7 * std::exp(-2.0 * v));
    }
    EXPECT_NEAR(qoi::envelope_floor(pure, t, 2.0), 0.0, 1e-14);
    EXPECT_NEAR(qoi::envelope_floor(lifted, t, 2.0), 0.3, 1e-12);
    EXPECT_THROW((void)qoi::envelope_floor(pure, t, 0.0), InvalidArgument);
}

TEST(Qoi, CsvRoundTrip) {
    physics::SimulationConfig c;
    c.nodes_per_side = 9;
    c.end_time = 0.1;
    const auto r = fem::run_simulation(c);
    const auto q = qoi::compute_qois("round", r);
    const auto path = std::filesystem::temp_directory_path() / "mixrom_qoi_roundtrip.csv";
    qoi::write_qoi_csv(path, q);
    const auto back = qoi::read_qoi_csv(path);
    std::filesystem::remove(path);
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t s = 0; s < 3; ++s) {
        EXPECT_EQ(back[s].species, q[s].species);
        EXPECT_EQ(back[s].sim_id, "round");
        EXPECT_EQ(back[s].times, q[s].times);
        EXPECT_EQ(back[s].avg_conc, q[s].avg_conc);
        EXPECT_EQ(back[s].avg_sq_conc, q[s].avg_sq_conc);
        EXPECT_EQ(back[s].degree_of_mixing, q[s].degree_of_mixing);
    }
}

TEST(Qoi, DiagnosticsOnDeskRunFitDecayingEnvelope) {
    physics::SimulationConfig c;
    c.nodes_per_side = 11;
    const auto r = fem::run_simulation(c);
    const auto d = qoi::check_diagnostics(r);
    EXPECT_TRUE(d.m_norm_monotone);
    EXPECT_TRUE(d.envelope_ok);
    EXPECT_GT(d.envelope_b, 0.0);
    EXPECT_NEAR(d.envelope_a + d.envelope_m, 1.0, 1e-14);
    const auto q = qoi::compute_qois("d", r);
    for (std::size_t i = 0; i < q[0].times.size(); ++i) {
        EXPECT_GE(d.envelope_a + d.envelope_m * std::exp(-d.envelope_b * q[0].times[i]) + 1e-12,
                  q[0].degree_of_mixing[i]);
    }
}
