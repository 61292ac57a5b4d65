#include "mixrom/error.hpp"
#include "mixrom/physics.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mixrom;
using namespace mixrom::physics;

TEST(Physics, VelocityIsDivergenceFree) {
    VelocityConfig cfg;
    cfg.kappa_f_l = 3.0;
    cfg.v0 = 0.5;
    const double h = 1e-6;
    for (double x : {0.1, 0.37, 0.8}) {
        for (double y : {0.05, 0.5, 0.93}) {
            for (double t : {0.0, 0.6e-4}) {
                const double div = (velocity({x + h, y}, t, cfg).x - velocity({x - h, y}, t, cfg).x) / (2 * h) +
                                   (velocity({x, y + h}, t, cfg).y - velocity({x, y - h}, t, cfg).y) / (2 * h);
                EXPECT_NEAR(div, 0.0, 1e-6);
            }
        }
    }
}

TEST(Physics, BranchFlipsEveryHalfPeriod) {
    EXPECT_EQ(velocity_branch(0.0, 1.0), 0);
    EXPECT_EQ(velocity_branch(0.25, 1.0), 0);
    EXPECT_EQ(velocity_branch(0.5, 1.0), 1);
    EXPECT_EQ(velocity_branch(0.99, 1.0), 1);
    EXPECT_EQ(velocity_branch(1.0, 1.0), 0);
    // dt a multiple of T: every step lands on a period boundary.
    for (int n = 1; n <= 100; ++n) {
        EXPECT_EQ(velocity_branch(n * 0.01, 1e-4), 0) << n;
    }
}

TEST(Physics, DispersionEigenvalues) {
    DispersionConfig d;
    d.alpha_l = 1.0;
    d.alpha_t = 0.01;
    d.d_m = 1e-3;
    const Vec2 v{0.3, 0.4};
    const SymTensor2 t = dispersion_for_velocity(v, d);
    const double tr = t.trace();
    const double disc = std::sqrt(tr * tr / 4 - t.det());
    EXPECT_NEAR(tr / 2 + disc, d.d_m + d.alpha_l * 0.5, 1e-14);
    EXPECT_NEAR(tr / 2 - disc, d.d_m + d.alpha_t * 0.5, 1e-14);
    const auto [lo, hi] = d.eigenvalues(0.5);
    EXPECT_NEAR(lo, d.d_m + d.alpha_t * 0.5, 1e-15);
    EXPECT_NEAR(hi, d.d_m + d.alpha_l * 0.5, 1e-15);
    const SymTensor2 still = dispersion_for_velocity({0.0, 0.0}, d);
    EXPECT_DOUBLE_EQ(still.xx, d.d_m);
    EXPECT_DOUBLE_EQ(still.xy, 0.0);
}

TEST(Physics, SpeciesRecoveryKeepsAAndBApart) {
    Stoichiometry s;
    s.n_a = 1.0;
    s.n_b = 2.0;
    s.n_c = 1.0;
    const Vector f = Vector{{0.0, 0.2, 0.7, 1.0, 0.5}};
    const Vector g = Vector{{1.0, 0.6, 0.1, 0.0, 1.0}};
    const SpeciesFields sp = recover_species(f, g, s);
    for (int i = 0; i < f.size(); ++i) {
        EXPECT_EQ(sp.a[i] * sp.b[i], 0.0);
        EXPECT_GE(sp.a[i], 0.0);
        EXPECT_GE(sp.b[i], 0.0);
        EXPECT_GE(sp.c[i], 0.0);
        EXPECT_NEAR(sp.a[i] + s.n_a / s.n_c * sp.c[i], f[i], 1e-15);
        EXPECT_NEAR(sp.b[i] + s.n_b / s.n_c * sp.c[i], g[i], 1e-15);
    }
}

TEST(Physics, InitialStateSplitsTheDomain) {
    const fem::Mesh mesh = fem::build_mesh(5, 1.0);
    const SpeciesFields s = initial_species(mesh);
    for (int i = 0; i < s.a.size(); ++i) {
        EXPECT_NEAR(s.a[i] + s.b[i], 1.0, 1e-15);
        EXPECT_EQ(s.c[i], 0.0);
    }
    EXPECT_EQ(s.a[mesh.node_index(0, 2)], 1.0);
    EXPECT_EQ(s.b[mesh.node_index(4, 2)], 1.0);
}

TEST(Physics, ConfigJsonRoundTrip) {
    SimulationConfig c;
    c.velocity.v0 = 1e-3;
    c.dispersion.alpha_t = 1e-4;
    c.nodes_per_side = 11;
    c.dt = 0.02;
    const SimulationConfig back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(back.num_steps(), 50);
}

TEST(Physics, ConfigValidation) {
    SimulationConfig c;
    c.dt = 0.03;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = SimulationConfig{};
    c.dispersion.alpha_t = 2.0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    EXPECT_THROW((void)parse_species("Q"), InvalidArgument);
    EXPECT_EQ(parse_species("b"), Species::kB);
}
