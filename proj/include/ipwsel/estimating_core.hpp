#pragma once

// Newton-Raphson root finding for vector estimating equations, plus the
// small dense linear-algebra helpers shared by the fitters and the variance
// estimators.

#include <Eigen/Dense>

#include <functional>

namespace ipwsel {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct SolveConfig {
    double tol_score = 1e-8;   // max-abs residual threshold
    double tol_step = 1e-10;   // max-abs parameter change threshold
    int max_iter = 100;
    int max_halvings = 30;

    void validate() const;
};

struct SolveReport {
    Vector solution;
    int iterations = 0;
    double final_residual_norm = 0.0;
    double last_step_norm = 0.0;
    bool converged = false;
    // Set when a Newton direction could not reduce the residual after all
    // halvings were spent.
    bool halvings_exhausted = false;
};

using ResidualFn = std::function<Vector(const Vector&)>;
using JacobianFn = std::function<Matrix(const Vector&)>;
// Called with every accepted iterate; may throw to abort the solve (the
// fitters use this for separation guards).
using IterateObserver = std::function<void(const Vector&)>;

// Solves residual(x) = 0 by Newton steps with step-halving on the max-abs
// residual. Throws Error(SingularJacobian) when a pivot collapses; iteration
// exhaustion is reported through `converged == false` with the best iterate.
SolveReport solve_estimating_equation(const ResidualFn& residual,
                                      const JacobianFn& jacobian,
                                      const Vector& init,
                                      const SolveConfig& cfg = {},
                                      const IterateObserver& observer = {});

// Pivoted LU with a relative pivot threshold. Singular when the smallest
// pivot magnitude falls below `rel_pivot_tol` times the largest.
class PivotedSolver {
public:
    explicit PivotedSolver(const Matrix& a, double rel_pivot_tol = 1e-12);

    bool singular() const noexcept { return singular_; }
    double pivot_ratio() const noexcept { return pivot_ratio_; }

    Vector solve(const Vector& b) const;
    Matrix solve(const Matrix& b) const;
    Matrix inverse() const;

private:
    Eigen::FullPivLU<Matrix> lu_;
    bool singular_ = false;
    double pivot_ratio_ = 0.0;
};

double max_abs(const Vector& v) noexcept;

// Central-difference Jacobian. Intended for test oracles only; fitters
// supply analytic derivatives.
Matrix finite_difference_jacobian(const ResidualFn& residual, const Vector& x,
                                  double rel_step = 1e-6);

}  // namespace ipwsel
