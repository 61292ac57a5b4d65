#pragma once

#include "mixrom/assembly.hpp"

#include <Eigen/SparseCholesky>

#include <cstdint>
#include <memory>
#include <vector>

namespace mixrom::fem {

/// Componentwise bounds lower <= x <= upper. Infinite entries are allowed.
struct BoxBounds {
    Vector lower;
    Vector upper;

    static BoxBounds uniform(Eigen::Index n, double lower, double upper);
    static BoxBounds unbounded(Eigen::Index n);

    /// Throws InvalidArgument on size mismatch, NaN, or lower > upper.
    void validate(Eigen::Index n) const;
    [[nodiscard]] bool contains(const Vector& x) const;
};

enum class BoundState : std::int8_t { kFree = 0, kLower = 1, kUpper = 2 };
using ActiveSet = std::vector<BoundState>;

struct BoxQpOptions {
    /// KKT tolerance: free components need |Hx-g|_i <= tol*||g||_inf, bound
    /// components need the multiplier sign to hold up to tol.
    double tol = 1e-9;
    int max_active_set_iterations = 60;
    int max_fallback_iterations = 0;  // 0 selects 10*n + 100
    int projected_gradient_steps = 25;
};

struct BoxQpResult {
    Vector x;
    ActiveSet active;
    int iterations = 0;
    int factorizations = 0;
    bool used_fallback = false;
    double kkt_residual = 0.0;
};

/// Minimizes 1/2 x'Hx - g'x over a box for a fixed SPD matrix H.
///
/// The primary path is a primal-dual active-set iteration that re-solves the
/// free block with a sparse Cholesky factorization; it is warm-started from a
/// caller-supplied active set. If the active-set sequence cycles or exceeds
/// its cap, a short projected-gradient phase seeds a feasible primal
/// active-set method, which terminates finitely. The last factorization is
/// cached and reused whenever the free set repeats.
///
/// Errors: NumericalError when a Cholesky factorization breaks down (H not
/// SPD); NonConvergence when the iteration cap is exceeded or the final
/// KKT check fails.
class BoxQpSolver {
public:
    explicit BoxQpSolver(SparseMatrix hessian);
    ~BoxQpSolver();
    BoxQpSolver(BoxQpSolver&&) noexcept;
    BoxQpSolver& operator=(BoxQpSolver&&) noexcept;
    BoxQpSolver(const BoxQpSolver&) = delete;
    BoxQpSolver& operator=(const BoxQpSolver&) = delete;

    [[nodiscard]] BoxQpResult solve(const Vector& g, const BoxBounds& bounds, const BoxQpOptions& options = {},
                                    const ActiveSet* warm_start = nullptr);

    [[nodiscard]] const SparseMatrix& hessian() const noexcept { return hessian_; }

    /// Scaled KKT violation of x (max over components, see BoxQpOptions::tol).
    [[nodiscard]] double kkt_violation(const Vector& x, const Vector& g, const BoxBounds& bounds) const;

private:
    struct Factor;

    Vector solve_on_face(const ActiveSet& state, const Vector& x_fixed, const Vector& g, int& factorizations);
    BoxQpResult fallback(Vector x, const Vector& g, const BoxBounds& bounds, const BoxQpOptions& options,
                         int& factorizations);

    SparseMatrix hessian_;
    Vector diagonal_;
    std::unique_ptr<Factor> cache_;
};

/// One-shot convenience wrapper. Returns the minimizer.
Vector solve_box_qp(const SparseMatrix& hessian, const Vector& g, const BoxBounds& bounds, double tol = 1e-9);

}  // namespace mixrom::fem
