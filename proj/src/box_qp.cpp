#include "mixrom/box_qp.hpp"

#include "mixrom/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mixrom::fem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double gradient_scale(const Vector& g) {
    const double s = inf_norm(g);
    return s > 0.0 ? s : 1.0;
}

Vector clip(const Vector& x, const BoxBounds& b) { return x.cwiseMax(b.lower).cwiseMin(b.upper); }

ActiveSet state_from_point(const Vector& x, const BoxBounds& b) {
    ActiveSet state(static_cast<std::size_t>(x.size()), BoundState::kFree);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x[i] <= b.lower[i]) {
            state[i] = BoundState::kLower;
        } else if (x[i] >= b.upper[i]) {
            state[i] = BoundState::kUpper;
        }
    }
    return state;
}

}  // namespace

BoxBounds BoxBounds::uniform(Eigen::Index n, double lower, double upper) {
    return {Vector::Constant(n, lower), Vector::Constant(n, upper)};
}

BoxBounds BoxBounds::unbounded(Eigen::Index n) { return uniform(n, -kInf, kInf); }

void BoxBounds::validate(Eigen::Index n) const {
    if (lower.size() != n || upper.size() != n) {
        throw InvalidArgument("box bounds: expected " + std::to_string(n) + " entries, got " +
                              std::to_string(lower.size()) + "/" + std::to_string(upper.size()));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i]) {
            throw InvalidArgument("box bounds: lower > upper (or NaN) at index " + std::to_string(i));
        }
    }
}

bool BoxBounds::contains(const Vector& x) const {
    return x.size() == lower.size() && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

struct BoxQpSolver::Factor {
    std::vector<int> free;
    Eigen::SimplicialLLT<SparseMatrix> llt;
};

BoxQpSolver::BoxQpSolver(SparseMatrix hessian) : hessian_(std::move(hessian)) {
    if (hessian_.rows() != hessian_.cols()) {
        throw InvalidArgument("box QP: Hessian must be square");
    }
    hessian_.makeCompressed();
    diagonal_ = hessian_.diagonal();
    for (Eigen::Index i = 0; i < diagonal_.size(); ++i) {
        if (!(diagonal_[i] > 0.0)) {
            throw NumericalError("box QP: Hessian is not SPD (non-positive diagonal at index " +
                                 std::to_string(i) + ")");
        }
    }
}

BoxQpSolver::~BoxQpSolver() = default;
BoxQpSolver::BoxQpSolver(BoxQpSolver&&) noexcept = default;
BoxQpSolver& BoxQpSolver::operator=(BoxQpSolver&&) noexcept = default;

double BoxQpSolver::kkt_violation(const Vector& x, const Vector& g, const BoxBounds& bounds) const {
    const Vector mu = hessian_ * x - g;
    const double scale = gradient_scale(g);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double v = 0.0;
        if (x[i] < bounds.lower[i] || x[i] > bounds.upper[i]) {
            v = kInf;
        } else if (bounds.lower[i] == bounds.upper[i]) {
            v = 0.0;
        } else if (x[i] == bounds.lower[i]) {
            v = std::max(0.0, -mu[i]);
        } else if (x[i] == bounds.upper[i]) {
            v = std::max(0.0, mu[i]);
        } else {
            v = std::abs(mu[i]);
        }
        worst = std::max(worst, v / scale);
    }
    return worst;
}

Vector BoxQpSolver::solve_on_face(const ActiveSet& state, const Vector& x_fixed, const Vector& g,
                                  int& factorizations) {
    const auto n = hessian_.rows();
    std::vector<int> free;
    free.reserve(static_cast<std::size_t>(n));
    Vector x_active = x_fixed;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (state[i] == BoundState::kFree) {
            free.push_back(static_cast<int>(i));
            x_active[i] = 0.0;
        }
    }
    if (free.empty()) {
        return x_fixed;
    }

    if (!cache_ || cache_->free != free) {
        auto factor = std::make_unique<Factor>();
        factor->free = free;
        if (static_cast<Eigen::Index>(free.size()) == n) {
            factor->llt.compute(hessian_);
        } else {
            std::vector<int> local(static_cast<std::size_t>(n), -1);
            for (std::size_t k = 0; k < free.size(); ++k) {
                local[free[k]] = static_cast<int>(k);
            }
            std::vector<Eigen::Triplet<double>> triplets;
            for (int col : free) {
                for (SparseMatrix::InnerIterator it(hessian_, col); it; ++it) {
                    const int row = local[it.row()];
                    if (row >= 0) {
                        triplets.emplace_back(row, local[col], it.value());
                    }
                }
            }
            const auto m = static_cast<Eigen::Index>(free.size());
            SparseMatrix block(m, m);
            block.setFromTriplets(triplets.begin(), triplets.end());
            factor->llt.compute(block);
        }
        ++factorizations;
        if (factor->llt.info() != Eigen::Success) {
            cache_.reset();
            throw NumericalError("box QP: Cholesky factorization failed; Hessian is not SPD");
        }
        cache_ = std::move(factor);
    }

    const Vector residual = g - hessian_ * x_active;
    Vector rhs(static_cast<Eigen::Index>(free.size()));
    for (std::size_t k = 0; k < free.size(); ++k) {
        rhs[static_cast<Eigen::Index>(k)] = residual[free[k]];
    }
    const Vector sol = cache_->llt.solve(rhs);
    Vector x = x_fixed;
    for (std::size_t k = 0; k < free.size(); ++k) {
        x[free[k]] = sol[static_cast<Eigen::Index>(k)];
    }
    return x;
}

BoxQpResult BoxQpSolver::solve(const Vector& g, const BoxBounds& bounds, const BoxQpOptions& options,
                               const ActiveSet* warm_start) {
    const auto n = hessian_.rows();
    if (g.size() != n) {
        throw InvalidArgument("box QP: gradient has " + std::to_string(g.size()) + " entries, expected " +
                              std::to_string(n));
    }
    if (!g.allFinite()) {
        throw InvalidArgument("box QP: gradient is not finite");
    }
    bounds.validate(n);

    ActiveSet state(static_cast<std::size_t>(n), BoundState::kFree);
    if (warm_start != nullptr && static_cast<Eigen::Index>(warm_start->size()) == n) {
        state = *warm_start;
        for (Eigen::Index i = 0; i < n; ++i) {
            // A warm start may name a bound that is infinite for this problem.
            if ((state[i] == BoundState::kLower && !std::isfinite(bounds.lower[i])) ||
                (state[i] == BoundState::kUpper && !std::isfinite(bounds.upper[i]))) {
                state[i] = BoundState::kFree;
            }
        }
    }

    int factorizations = 0;
    Vector x_fixed(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x_fixed[i] = state[i] == BoundState::kLower ? bounds.lower[i]
                     : state[i] == BoundState::kUpper ? bounds.upper[i]
                                                       : 0.0;
    }

    // Primal-dual active set: predict the active set from x - mu/diag(H).
    Vector x;
    for (int it = 1; it <= options.max_active_set_iterations; ++it) {
        x = solve_on_face(state, x_fixed, g, factorizations);
        const Vector mu = hessian_ * x - g;
        ActiveSet next(static_cast<std::size_t>(n), BoundState::kFree);
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double trial = (state[i] == BoundState::kFree ? x[i] : x[i] - mu[i] / diagonal_[i]);
            if (trial < bounds.lower[i] || (state[i] == BoundState::kLower && trial == bounds.lower[i])) {
                next[i] = BoundState::kLower;
            } else if (trial > bounds.upper[i] || (state[i] == BoundState::kUpper && trial == bounds.upper[i])) {
                next[i] = BoundState::kUpper;
            }
            changed = changed || next[i] != state[i];
        }
        if (!changed) {
            BoxQpResult result;
            result.x = clip(x, bounds);
            result.active = std::move(state);
            result.iterations = it;
            result.factorizations = factorizations;
            result.kkt_residual = kkt_violation(result.x, g, bounds);
            if (result.kkt_residual <= options.tol) {
                return result;
            }
            break;  // converged set but loose KKT: let the primal method polish it
        }
        state = std::move(next);
        for (Eigen::Index i = 0; i < n; ++i) {
            x_fixed[i] = state[i] == BoundState::kLower ? bounds.lower[i]
                         : state[i] == BoundState::kUpper ? bounds.upper[i]
                                                           : 0.0;
        }
    }

    Vector start = (x.size() == n) ? x : Vector(Vector::Zero(n));
    auto result = fallback(clip(start, bounds), g, bounds, options, factorizations);
    result.factorizations = factorizations;
    return result;
}

BoxQpResult BoxQpSolver::fallback(Vector x, const Vector& g, const BoxBounds& bounds, const BoxQpOptions& options,
                                  int& factorizations) {
    const auto n = hessian_.rows();
    const double scale = gradient_scale(g);

    // Projected gradient with a Gershgorin step to settle the active set.
    double row_bound = 0.0;
    {
        Vector abs_row = Vector::Zero(n);
        for (Eigen::Index col = 0; col < hessian_.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator it(hessian_, col); it; ++it) {
                abs_row[it.row()] += std::abs(it.value());
            }
        }
        row_bound = abs_row.maxCoeff();
    }
    for (int k = 0; k < options.projected_gradient_steps; ++k) {
        x = clip(x - (hessian_ * x - g) / row_bound, bounds);
    }

    // Feasible primal active-set method on the faces of the box.
    ActiveSet state = state_from_point(x, bounds);
    const int cap = options.max_fallback_iterations > 0 ? options.max_fallback_iterations
                                                        : static_cast<int>(10 * n + 100);
    int it = 0;
    for (; it < cap; ++it) {
        const Vector target = solve_on_face(state, x, g, factorizations);
        const Vector step = target - x;
        double alpha = 1.0;
        Eigen::Index blocking = -1;
        BoundState blocking_side = BoundState::kFree;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (state[i] != BoundState::kFree) {
                continue;
            }
            if (step[i] < 0.0 && std::isfinite(bounds.lower[i])) {
                const double a = (bounds.lower[i] - x[i]) / step[i];
                if (a < alpha) {
                    alpha = a;
                    blocking = i;
                    blocking_side = BoundState::kLower;
                }
            } else if (step[i] > 0.0 && std::isfinite(bounds.upper[i])) {
                const double a = (bounds.upper[i] - x[i]) / step[i];
                if (a < alpha) {
                    alpha = a;
                    blocking = i;
                    blocking_side = BoundState::kUpper;
                }
            }
        }
        if (blocking >= 0) {
            x = clip(x + std::max(alpha, 0.0) * step, bounds);
            x[blocking] = blocking_side == BoundState::kLower ? bounds.lower[blocking] : bounds.upper[blocking];
            state[blocking] = blocking_side;
            continue;
        }

        x = clip(target, bounds);
        const Vector mu = hessian_ * x - g;
        Eigen::Index release = -1;
        double worst = options.tol * scale;
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = 0.0;
            if (state[i] == BoundState::kLower && bounds.lower[i] < bounds.upper[i]) {
                v = -mu[i];
            } else if (state[i] == BoundState::kUpper && bounds.lower[i] < bounds.upper[i]) {
                v = mu[i];
            }
            if (v > worst) {
                worst = v;
                release = i;
            }
        }
        if (release < 0) {
            break;
        }
        state[release] = BoundState::kFree;
    }

    BoxQpResult result;
    result.x = x;
    result.active = state;
    result.iterations = it;
    result.used_fallback = true;
    result.kkt_residual = kkt_violation(x, g, bounds);
    if (it >= cap || result.kkt_residual > options.tol) {
        throw NonConvergence("box QP: active-set method did not converge in " + std::to_string(it) + " iterations",
                             result.kkt_residual);
    }
    return result;
}

Vector solve_box_qp(const SparseMatrix& hessian, const Vector& g, const BoxBounds& bounds, double tol) {
    BoxQpSolver solver(hessian);
    BoxQpOptions options;
    options.tol = tol;
    return solver.solve(g, bounds, options).x;
}

}  // namespace mixrom::fem
