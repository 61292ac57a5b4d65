#pragma once

#include "mixrom/physics.hpp"
#include "mixrom/simulation.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace mixrom::qoi {

using fem::SparseMatrix;
using fem::Vector;
using physics::Species;

/// Self-normalized quantities of interest of one species over one run.
/// Every series is divided by its own maximum over time; a series whose raw
/// maximum is zero is reported as all zeros and flagged.
struct QoISeries {
    std::string sim_id;
    Species species = Species::kA;
    std::vector<double> times;
    std::vector<double> avg_conc;
    std::vector<double> avg_sq_conc;
    std::vector<double> degree_of_mixing;
    bool zero_avg_conc = false;
    bool zero_avg_sq_conc = false;
    bool zero_variance = false;
};

/// Raw (unnormalized) integrals of one field against the consistent mass.
struct RawMoments {
    double mean = 0.0;      // 1'M c
    double mean_sq = 0.0;   // c'M c
    double variance = 0.0;  // c'M c - (1'M c)^2 / |Omega|
};

[[nodiscard]] RawMoments raw_moments(const SparseMatrix& mass, const Vector& c);

/// QoIs for A, B and C from per-snapshot species fields.
/// Throws InvalidArgument with fewer than two snapshots or mismatched sizes.
[[nodiscard]] std::array<QoISeries, 3> compute_qois(const std::string& sim_id, const std::vector<double>& times,
                                                    const std::vector<physics::SpeciesFields>& species,
                                                    const SparseMatrix& mass);

/// QoIs of a finished run. Snapshot 0 uses the prescribed initial species;
/// later snapshots are recovered from the invariants.
[[nodiscard]] std::array<QoISeries, 3> compute_qois(const std::string& sim_id, const fem::SimulationResult& result);

struct FitWindow {
    double t_lo = 0.2;
    double t_hi = 1.0;
};

struct ScalingFit {
    double exponent = 0.0;   // slope of ln(series) against t
    double prefactor = 0.0;  // exp(intercept)
    FitWindow window;
    double r2 = 0.0;
    int samples = 0;
};

/// Least-squares line through (t, ln s) for samples inside the window with
/// s > 1e-12. Throws NumericalError with fewer than three such samples.
[[nodiscard]] ScalingFit fit_exponent(const std::vector<double>& series, const std::vector<double>& times,
                                      FitWindow window = {});

struct BoundDiagnostics {
    double mass_drift = 0.0;          // max relative |1'M c(t) - 1'M c(0)| over F and G
    double m_norm_increase = 0.0;     // largest step-to-step increase of ||c||_M over F and G
    bool mass_ok = false;             // mass_drift <= mass_tolerance
    bool m_norm_monotone = false;     // m_norm_increase <= 1e-12
    bool envelope_ok = false;
    double envelope_a = 0.0;          // A + M exp(-B t) >= sigma^2 with M = 1 - A
    double envelope_m = 0.0;
    double envelope_b = 0.0;
};

struct DiagnosticsOptions {
    double mass_tolerance = 1e-6;
    double monotone_tolerance = 1e-12;
    Species envelope_species = Species::kA;
    FitWindow window;
};

/// Checks mass constancy and M-norm decay of the invariants and fits an
/// exponential envelope to the degree of mixing of one species. Failures are
/// reported through the flags, never thrown.
[[nodiscard]] BoundDiagnostics check_diagnostics(const fem::SimulationResult& result,
                                                 const DiagnosticsOptions& options = {});

/// Envelope of a normalized sigma^2 series given a decay rate B > 0: the
/// smallest A in [0,1] with A + (1-A) e^{-Bt} >= sigma^2(t) for all samples.
[[nodiscard]] double envelope_floor(const std::vector<double>& sigma2, const std::vector<double>& times, double rate);

/// `sim_id,t,species,avg_conc,avg_sq_conc,degree_of_mixing`, time-major.
void write_qoi_csv(const std::filesystem::path& path, const std::array<QoISeries, 3>& series);
[[nodiscard]] std::vector<QoISeries> read_qoi_csv(const std::filesystem::path& path);

}  // namespace mixrom::qoi
