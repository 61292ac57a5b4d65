#include "mixrom/physics.hpp"

#include "mixrom/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace mixrom::physics {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw InvalidArgument(message);
    }
}

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

const char* species_name(Species s) noexcept {
    switch (s) {
        case Species::kA: return "A";
        case Species::kB: return "B";
        case Species::kC: return "C";
        case Species::kF: return "F";
        case Species::kG: return "G";
    }
    return "?";
}

Species parse_species(const std::string& name) {
    if (name.size() == 1) {
        switch (std::toupper(static_cast<unsigned char>(name[0]))) {
            case 'A': return Species::kA;
            case 'B': return Species::kB;
            case 'C': return Species::kC;
            case 'F': return Species::kF;
            case 'G': return Species::kG;
            default: break;
        }
    }
    throw InvalidArgument("unknown species '" + name + "' (expected A, B, C, F or G)");
}

void Stoichiometry::validate() const {
    require(finite_positive(n_a) && finite_positive(n_b) && finite_positive(n_c),
            "stoichiometric coefficients must be strictly positive");
    require(finite_positive(k_ab), "reaction rate k_AB must be positive");
}

void VelocityConfig::validate() const {
    require(std::isfinite(kappa_f_l) && kappa_f_l >= 1.0, "kappa_fL must be >= 1");
    require(finite_positive(v0), "v0 must be positive");
    require(finite_positive(period_t), "period_T must be positive");
}

void DispersionConfig::validate() const {
    require(finite_positive(alpha_t), "alpha_T must be positive");
    require(std::isfinite(alpha_l) && alpha_l >= alpha_t, "alpha_L must be >= alpha_T");
    require(std::isfinite(d_m) && d_m >= 0.0, "D_m must be non-negative");
    require(std::isfinite(anisotropy_ratio()), "anisotropy ratio must be finite");
}

std::pair<double, double> DispersionConfig::eigenvalues(double speed) const noexcept {
    if (speed < 1e-12) {
        return {d_m, d_m};
    }
    return {d_m + alpha_t * speed, d_m + alpha_l * speed};
}

void SimulationConfig::validate() const {
    stoichiometry.validate();
    velocity.validate();
    dispersion.validate();
    require(nodes_per_side >= 2, "nodes_per_side must be >= 2");
    require(finite_positive(dt), "dt must be positive");
    require(finite_positive(end_time), "end_time must be positive");
    const double steps = end_time / dt;
    require(std::abs(steps - std::round(steps)) <= 1e-9 * std::max(1.0, steps),
            "end_time/dt must be an integer");
    require(snapshot_stride >= 1, "snapshot_stride must be >= 1");
}

int SimulationConfig::num_steps() const { return static_cast<int>(std::llround(end_time / dt)); }

nlohmann::json to_json(const SimulationConfig& cfg) {
    return nlohmann::json{
        {"n_A", cfg.stoichiometry.n_a},
        {"n_B", cfg.stoichiometry.n_b},
        {"n_C", cfg.stoichiometry.n_c},
        {"kappa_fL", cfg.velocity.kappa_f_l},
        {"v0", cfg.velocity.v0},
        {"period_T", cfg.velocity.period_t},
        {"alpha_L", cfg.dispersion.alpha_l},
        {"alpha_T", cfg.dispersion.alpha_t},
        {"D_m", cfg.dispersion.d_m},
        {"nodes_per_side", cfg.nodes_per_side},
        {"dt", cfg.dt},
        {"end_time", cfg.end_time},
        {"snapshot_stride", cfg.snapshot_stride},
    };
}

SimulationConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw InvalidArgument("simulation config must be a JSON object");
    }
    SimulationConfig cfg;
    try {
        cfg.stoichiometry.n_a = j.value("n_A", cfg.stoichiometry.n_a);
        cfg.stoichiometry.n_b = j.value("n_B", cfg.stoichiometry.n_b);
        cfg.stoichiometry.n_c = j.value("n_C", cfg.stoichiometry.n_c);
        cfg.velocity.kappa_f_l = j.value("kappa_fL", cfg.velocity.kappa_f_l);
        cfg.velocity.v0 = j.value("v0", cfg.velocity.v0);
        cfg.velocity.period_t = j.value("period_T", cfg.velocity.period_t);
        cfg.dispersion.alpha_l = j.value("alpha_L", cfg.dispersion.alpha_l);
        cfg.dispersion.alpha_t = j.value("alpha_T", cfg.dispersion.alpha_t);
        cfg.dispersion.d_m = j.value("D_m", cfg.dispersion.d_m);
        cfg.nodes_per_side = j.value("nodes_per_side", cfg.nodes_per_side);
        cfg.dt = j.value("dt", cfg.dt);
        cfg.end_time = j.value("end_time", cfg.end_time);
        cfg.snapshot_stride = j.value("snapshot_stride", cfg.snapshot_stride);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("simulation config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

double Vec2::norm() const noexcept { return std::hypot(x, y); }

int velocity_branch(double t, double period_t) noexcept {
    const double q = t / period_t;
    const double k = std::floor(q + 1e-9 * std::max(1.0, std::abs(q)));
    const double frac = std::max(0.0, q - k);
    return frac < 0.5 ? 0 : 1;
}

Vec2 velocity(const Point2& p, double t, const VelocityConfig& cfg, double domain_length) {
    const double w = 2.0 * std::numbers::pi * cfg.kappa_f_l / domain_length;
    Vec2 v{std::cos(w * p.y), std::cos(w * p.x)};
    if (velocity_branch(t, cfg.period_t) == 0) {
        v.x += cfg.v0 * std::sin(w * p.y);
    } else {
        v.y += cfg.v0 * std::sin(w * p.x);
    }
    return v;
}

SymTensor2 dispersion_for_velocity(const Vec2& v, const DispersionConfig& dcfg) noexcept {
    const double speed = v.norm();
    if (speed < 1e-12) {
        return {dcfg.d_m, 0.0, dcfg.d_m};
    }
    const double iso = dcfg.d_m + dcfg.alpha_t * speed;
    const double k = (dcfg.alpha_l - dcfg.alpha_t) / speed;
    return {iso + k * v.x * v.x, k * v.x * v.y, iso + k * v.y * v.y};
}

SymTensor2 dispersion_tensor(const Point2& p, double t, const DispersionConfig& dcfg, const VelocityConfig& vcfg,
                             double domain_length) {
    return dispersion_for_velocity(velocity(p, t, vcfg, domain_length), dcfg);
}

SpeciesFields initial_species(const fem::Mesh& mesh) {
    const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
    const double half = 0.5 * mesh.domain_length();
    const double snap = 1e-12 * mesh.domain_length();
    SpeciesFields s{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = mesh.nodes()[static_cast<std::size_t>(i)].x;
        if (std::abs(x - half) <= snap) {
            s.a[i] = 0.5;
            s.b[i] = 0.5;
        } else if (x < half) {
            s.a[i] = 1.0;
        } else {
            s.b[i] = 1.0;
        }
    }
    return s;
}

std::pair<Vector, Vector> initial_invariants(const fem::Mesh& mesh, const Stoichiometry& stoich) {
    stoich.validate();
    const SpeciesFields s = initial_species(mesh);
    Vector c_f = s.a + (stoich.n_a / stoich.n_c) * s.c;
    Vector c_g = s.b + (stoich.n_b / stoich.n_c) * s.c;
    return {std::move(c_f), std::move(c_g)};
}

SpeciesFields recover_species(const Vector& c_f, const Vector& c_g, const Stoichiometry& stoich) {
    if (c_f.size() != c_g.size()) {
        throw InvalidArgument("recover_species: invariant fields differ in size");
    }
    const double ab = stoich.n_a / stoich.n_b;
    const double ba = stoich.n_b / stoich.n_a;
    const double ca = stoich.n_c / stoich.n_a;
    const auto n = c_f.size();
    SpeciesFields s{Vector(n), Vector(n), Vector(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double excess = c_f[i] - ab * c_g[i];
        s.a[i] = std::max(excess, 0.0);
        s.b[i] = ba * std::max(-excess, 0.0);
        s.c[i] = ca * (c_f[i] - s.a[i]);
    }
    return s;
}

}  // namespace mixrom::physics
