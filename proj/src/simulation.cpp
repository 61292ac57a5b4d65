#include "mixrom/simulation.hpp"

#include "mixrom/error.hpp"
#include "mixrom/io.hpp"

#include <cmath>
#include <string>

namespace mixrom::fem {

namespace {

SparseMatrix step_hessian(const AssembledSystem& system, double dt) {
    SparseMatrix h = system.mass / dt + system.diffusion;
    h.makeCompressed();
    return h;
}

int count_active(const ActiveSet& active) {
    int n = 0;
    for (auto s : active) {
        n += s != BoundState::kFree ? 1 : 0;
    }
    return n;
}

}  // namespace

InvariantStepper::InvariantStepper(const AssembledSystem& system, double dt, BoxQpOptions options)
    : mass_(system.mass), dt_(dt), options_(options), solver_(step_hessian(system, dt)) {
    if (!(dt > 0.0)) {
        throw InvalidArgument("time step must be positive");
    }
}

Vector InvariantStepper::step(const Vector& previous, const BoxBounds& bounds, ActiveSet* warm_start) {
    const Vector g = (mass_ * previous) / dt_;
    last_ = solver_.solve(g, bounds, options_, warm_start);
    if (warm_start != nullptr) {
        *warm_start = last_.active;
    }
    return last_.x;
}

ConcentrationField step_invariant(const ConcentrationField& previous, const AssembledSystem& system, double dt,
                                  const BoxBounds& bounds) {
    if (!(dt > 0.0)) {
        throw InvalidArgument("step_invariant: dt must be positive");
    }
    bounds.validate(previous.values.size());
    if (!bounds.contains(previous.values)) {
        throw InvalidArgument("step_invariant: previous field violates the bounds");
    }
    InvariantStepper stepper(system, dt);
    ConcentrationField next;
    next.values = stepper.step(previous.values, bounds);
    next.species = previous.species;
    next.time = previous.time + dt;
    return next;
}

SimulationResult run_simulation(const physics::SimulationConfig& config, const SimulationOptions& options) {
    config.validate();
    SimulationResult result;
    result.config = config;
    result.mesh = build_mesh(config.nodes_per_side, physics::SimulationConfig::kDomainLength);
    const Mesh& mesh = result.mesh;
    const auto n = static_cast<Eigen::Index>(mesh.num_nodes());

    result.initial_species = physics::initial_species(mesh);
    auto [c_f, c_g] = physics::initial_invariants(mesh, config.stoichiometry);

    if (options.enforce_bounds) {
        result.bounds_f = BoxBounds::uniform(n, 0.0, c_f.maxCoeff());
        result.bounds_g = BoxBounds::uniform(n, 0.0, c_g.maxCoeff());
    } else {
        result.bounds_f = BoxBounds::unbounded(n);
        result.bounds_g = BoxBounds::unbounded(n);
    }

    const auto dispersion = [&config](const Point2& p, double t) {
        return physics::dispersion_tensor(p, t, config.dispersion, config.velocity);
    };

    const int num_steps = config.num_steps();
    const double dt = config.dt;
    const double t_first = dt;
    int branch = physics::velocity_branch(t_first, config.velocity.period_t);
    AssembledSystem system = assemble(mesh, dispersion, t_first);
    result.mass = system.mass;
    result.reassemblies = 1;
    auto stepper_f = std::make_unique<InvariantStepper>(system, dt, options.qp);
    auto stepper_g = std::make_unique<InvariantStepper>(system, dt, options.qp);
    ActiveSet warm_f;
    ActiveSet warm_g;

    const Vector ones = Vector::Ones(n);
    const auto diagnose = [&](int step, double t) {
        StepDiagnostics d;
        d.step = step;
        d.time = t;
        const Vector mf = result.mass * c_f;
        const Vector mg = result.mass * c_g;
        d.mass_f = ones.dot(mf);
        d.mass_g = ones.dot(mg);
        d.mnorm_f = std::sqrt(std::max(0.0, c_f.dot(mf)));
        d.mnorm_g = std::sqrt(std::max(0.0, c_g.dot(mg)));
        return d;
    };

    result.times.push_back(0.0);
    result.steps.push_back(0);
    result.c_f.push_back(c_f);
    result.c_g.push_back(c_g);
    result.diagnostics.push_back(diagnose(0, 0.0));

    for (int step = 1; step <= num_steps; ++step) {
        const double t = step * dt;
        const int b = physics::velocity_branch(t, config.velocity.period_t);
        bool reassembled = false;
        if (b != branch) {
            branch = b;
            system = assemble(mesh, dispersion, t);
            stepper_f = std::make_unique<InvariantStepper>(system, dt, options.qp);
            stepper_g = std::make_unique<InvariantStepper>(system, dt, options.qp);
            ++result.reassemblies;
            reassembled = true;
        }
        c_f = stepper_f->step(c_f, result.bounds_f, &warm_f);
        const int iters_f = stepper_f->last_result().iterations;
        c_g = stepper_g->step(c_g, result.bounds_g, &warm_g);
        const int iters_g = stepper_g->last_result().iterations;

        StepDiagnostics d = diagnose(step, t);
        d.qp_iterations = iters_f + iters_g;
        d.active_bounds = count_active(warm_f) + count_active(warm_g);
        d.reassembled = reassembled;
        result.diagnostics.push_back(d);
        if (options.on_step) {
            options.on_step(d);
        }
        if (step % config.snapshot_stride == 0) {
            result.times.push_back(t);
            result.steps.push_back(step);
            result.c_f.push_back(c_f);
            result.c_g.push_back(c_g);
        }
    }
    return result;
}

void write_field_csv(const std::filesystem::path& path, const Mesh& mesh, const Vector& values) {
    if (static_cast<std::size_t>(values.size()) != mesh.num_nodes()) {
        throw InvalidArgument("write_field_csv: field size does not match mesh");
    }
    std::string out = "node_id,x,y,value\n";
    for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
        const auto& p = mesh.nodes()[i];
        out += io::csv_line({std::to_string(i), io::format_double(p.x), io::format_double(p.y),
                             io::format_double(values[static_cast<Eigen::Index>(i)])});
    }
    io::write_text_atomic(path, out);
}

void write_long_format_csv(const std::filesystem::path& path, const std::string& sim_id,
                           const SimulationResult& result, const std::vector<physics::Species>& species,
                           int stride) {
    if (stride < 1) {
        throw InvalidArgument("snapshot stride must be >= 1");
    }
    std::string out = "sim_id,t,node_id,species,value\n";
    for (std::size_t k = 0; k < result.num_snapshots(); k += static_cast<std::size_t>(stride)) {
        const auto recovered = physics::recover_species(result.c_f[k], result.c_g[k], result.config.stoichiometry);
        const std::string t = io::format_double(result.times[k]);
        for (auto s : species) {
            const Vector* field = nullptr;
            switch (s) {
                case physics::Species::kA: field = &recovered.a; break;
                case physics::Species::kB: field = &recovered.b; break;
                case physics::Species::kC: field = &recovered.c; break;
                case physics::Species::kF: field = &result.c_f[k]; break;
                case physics::Species::kG: field = &result.c_g[k]; break;
            }
            const std::string tag = physics::species_name(s);
            for (Eigen::Index i = 0; i < field->size(); ++i) {
                out += io::csv_line({sim_id, t, std::to_string(i), tag, io::format_double((*field)[i])});
            }
        }
    }
    io::write_text_atomic(path, out);
}

}  // namespace mixrom::fem
