#pragma once

#include "mixrom/assembly.hpp"
#include "mixrom/mesh.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <utility>

namespace mixrom::physics {

using fem::Point2;
using fem::SymTensor2;
using fem::Vector;

enum class Species { kA, kB, kC, kF, kG };

[[nodiscard]] const char* species_name(Species s) noexcept;
/// Parses "A".."G" (case-insensitive); throws InvalidArgument otherwise.
[[nodiscard]] Species parse_species(const std::string& name);

/// Stoichiometric coefficients of n_A A + n_B B -> n_C C. The rate constant
/// cancels out of the invariant formulation and is kept for bookkeeping.
struct Stoichiometry {
    double n_a = 1.0;
    double n_b = 1.0;
    double n_c = 1.0;
    double k_ab = 1.0;

    void validate() const;
};

struct VelocityConfig {
    double kappa_f_l = 2.0;  // number of vortex wavelengths across the domain
    double v0 = 0.1;         // perturbation amplitude
    double period_t = 1e-4;  // flip period

    void validate() const;
};

struct DispersionConfig {
    double alpha_l = 1.0;
    double alpha_t = 1e-2;
    double d_m = 1e-3;

    void validate() const;
    [[nodiscard]] double anisotropy_ratio() const noexcept { return alpha_l / alpha_t; }
    /// Eigenvalues (min, max) of the tensor for a velocity of magnitude `speed`.
    [[nodiscard]] std::pair<double, double> eigenvalues(double speed) const noexcept;
};

/// Every physical and numerical input of one simulation on the unit square.
struct SimulationConfig {
    Stoichiometry stoichiometry;
    VelocityConfig velocity;
    DispersionConfig dispersion;
    int nodes_per_side = 21;
    double dt = 0.01;
    double end_time = 1.0;
    int snapshot_stride = 1;

    static constexpr double kDomainLength = 1.0;

    /// Throws InvalidArgument on any violated invariant (including
    /// end_time/dt not being an integer within 1e-9).
    void validate() const;
    [[nodiscard]] int num_steps() const;
};

/// Flat JSON keys: n_A,n_B,n_C,kappa_fL,v0,period_T,alpha_L,alpha_T,D_m,
/// nodes_per_side,dt,end_time,snapshot_stride. Missing keys keep defaults.
[[nodiscard]] nlohmann::json to_json(const SimulationConfig& cfg);
[[nodiscard]] SimulationConfig config_from_json(const nlohmann::json& j);

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    [[nodiscard]] double norm() const noexcept;
};

/// 0 for the first half of each flip period, 1 for the second half.
/// Uses frac(t/T) on half-open intervals; a time that lands on a period
/// boundary up to round-off is treated as lying on it.
[[nodiscard]] int velocity_branch(double t, double period_t) noexcept;

/// Cellular vortex velocity. Only vx depends on y and only vy on x, so the
/// field is divergence free.
[[nodiscard]] Vec2 velocity(const Point2& p, double t, const VelocityConfig& cfg,
                            double domain_length = SimulationConfig::kDomainLength);

/// D = D_m I + alpha_T |v| I + (alpha_L - alpha_T)/|v| v (x) v, falling back to
/// D_m I where |v| < 1e-12.
[[nodiscard]] SymTensor2 dispersion_tensor(const Point2& p, double t, const DispersionConfig& dcfg,
                                           const VelocityConfig& vcfg,
                                           double domain_length = SimulationConfig::kDomainLength);

/// Tensor for a given velocity vector (same formula as above).
[[nodiscard]] SymTensor2 dispersion_for_velocity(const Vec2& v, const DispersionConfig& dcfg) noexcept;

struct SpeciesFields {
    Vector a;
    Vector b;
    Vector c;
};

/// A in the left half, B in the right half, nothing on the interface column
/// except a half/half split, no product.
[[nodiscard]] SpeciesFields initial_species(const fem::Mesh& mesh);

/// c_F = c_A + (n_A/n_C) c_C and c_G = c_B + (n_B/n_C) c_C of the initial state.
[[nodiscard]] std::pair<Vector, Vector> initial_invariants(const fem::Mesh& mesh, const Stoichiometry& stoich);

/// Nodewise recovery of A, B and C from the invariants under the
/// fast-reaction assumption (A and B never coexist).
[[nodiscard]] SpeciesFields recover_species(const Vector& c_f, const Vector& c_g, const Stoichiometry& stoich);

}  // namespace mixrom::physics
