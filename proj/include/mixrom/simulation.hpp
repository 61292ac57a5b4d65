#pragma once

#include "mixrom/assembly.hpp"
#include "mixrom/box_qp.hpp"
#include "mixrom/mesh.hpp"
#include "mixrom/physics.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mixrom::fem {

struct ConcentrationField {
    Vector values;
    physics::Species species = physics::Species::kF;
    double time = 0.0;
};

/// Backward-Euler step for one invariant posed as a bound-constrained QP:
/// minimize 1/2 c'(M/dt + K)c - (1/dt) c'M c_prev over lower <= c <= upper.
/// Keeps the factorization cache and the last active set between calls.
class InvariantStepper {
public:
    InvariantStepper(const AssembledSystem& system, double dt, BoxQpOptions options = {});

    [[nodiscard]] Vector step(const Vector& previous, const BoxBounds& bounds, ActiveSet* warm_start = nullptr);
    [[nodiscard]] const BoxQpResult& last_result() const noexcept { return last_; }
    [[nodiscard]] double dt() const noexcept { return dt_; }

private:
    SparseMatrix mass_;
    double dt_;
    BoxQpOptions options_;
    BoxQpSolver solver_;
    BoxQpResult last_;
};

/// Single step convenience form. Throws InvalidArgument when dt <= 0 or the
/// previous field violates the bounds; solver errors propagate.
[[nodiscard]] ConcentrationField step_invariant(const ConcentrationField& previous, const AssembledSystem& system,
                                                double dt, const BoxBounds& bounds);

struct StepDiagnostics {
    int step = 0;
    double time = 0.0;
    double mass_f = 0.0;   // 1'M c_F
    double mass_g = 0.0;
    double mnorm_f = 0.0;  // sqrt(c_F' M c_F)
    double mnorm_g = 0.0;
    int qp_iterations = 0;
    int active_bounds = 0;
    bool reassembled = false;
};

struct SimulationOptions {
    /// When false the steps are plain Galerkin solves (bounds at +-infinity).
    bool enforce_bounds = true;
    BoxQpOptions qp;
    /// Called after every step with that step's diagnostics.
    std::function<void(const StepDiagnostics&)> on_step;
};

/// Invariant histories of one run. Snapshot 0 is the initial state; the
/// remaining snapshots are taken every `snapshot_stride` steps.
struct SimulationResult {
    physics::SimulationConfig config;
    Mesh mesh{2, 1.0};
    SparseMatrix mass;
    physics::SpeciesFields initial_species;
    BoxBounds bounds_f;
    BoxBounds bounds_g;
    std::vector<double> times;
    std::vector<int> steps;
    std::vector<Vector> c_f;
    std::vector<Vector> c_g;
    std::vector<StepDiagnostics> diagnostics;  // entry 0 describes the initial state
    int reassemblies = 0;

    [[nodiscard]] std::size_t num_snapshots() const noexcept { return times.size(); }
    [[nodiscard]] std::size_t num_stored_steps() const noexcept { return times.empty() ? 0 : times.size() - 1; }
};

/// Runs the non-negative invariant solver for the whole time window.
/// Bounds are [0, max(c^0)] per invariant; the system is reassembled only
/// when the velocity branch at t_{n+1} differs from the assembled one.
[[nodiscard]] SimulationResult run_simulation(const physics::SimulationConfig& config,
                                              const SimulationOptions& options = {});

/// Writes `node_id,x,y,value`.
void write_field_csv(const std::filesystem::path& path, const Mesh& mesh, const Vector& values);

/// Writes `sim_id,t,node_id,species,value` for the requested species
/// (F and G are the invariants; A, B, C are recovered) every `stride`-th snapshot.
void write_long_format_csv(const std::filesystem::path& path, const std::string& sim_id,
                           const SimulationResult& result, const std::vector<physics::Species>& species,
                           int stride = 1);

}  // namespace mixrom::fem
