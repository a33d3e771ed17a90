#include "ipwsel/estimating_core.hpp"

#include "ipwsel/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ipwsel {

void SolveConfig::validate() const {
    require(tol_score > 0.0, "SolveConfig: tol_score must be positive");
    require(tol_step > 0.0, "SolveConfig: tol_step must be positive");
    require(max_iter >= 1, "SolveConfig: max_iter must be >= 1");
    require(max_halvings >= 0, "SolveConfig: max_halvings must be >= 0");
}

double max_abs(const Vector& v) noexcept {
    if (v.size() == 0) return 0.0;
    double m = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double a = std::abs(v[i]);
        if (std::isnan(a)) return std::numeric_limits<double>::infinity();
        m = std::max(m, a);
    }
    return m;
}

PivotedSolver::PivotedSolver(const Matrix& a, double rel_pivot_tol) : lu_(a) {
    require(a.rows() == a.cols(), "PivotedSolver: matrix must be square");
    const Matrix& lu = lu_.matrixLU();
    double max_pivot = 0.0;
    double min_pivot = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < lu.rows(); ++i) {
        const double p = std::abs(lu(i, i));
        max_pivot = std::max(max_pivot, p);
        min_pivot = std::min(min_pivot, p);
    }
    if (!std::isfinite(max_pivot) || !std::isfinite(min_pivot) || max_pivot == 0.0) {
        singular_ = true;
        pivot_ratio_ = 0.0;
        return;
    }
    pivot_ratio_ = min_pivot / max_pivot;
    singular_ = pivot_ratio_ < rel_pivot_tol;
}

Vector PivotedSolver::solve(const Vector& b) const { return lu_.solve(b); }

Matrix PivotedSolver::solve(const Matrix& b) const { return lu_.solve(b); }

Matrix PivotedSolver::inverse() const {
    return lu_.solve(Matrix::Identity(lu_.rows(), lu_.cols()));
}

SolveReport solve_estimating_equation(const ResidualFn& residual,
                                      const JacobianFn& jacobian,
                                      const Vector& init,
                                      const SolveConfig& cfg,
                                      const IterateObserver& observer) {
    cfg.validate();
    require(init.size() > 0, "solve_estimating_equation: empty initial vector");

    SolveReport report;
    Vector x = init;
    Vector r = residual(x);
    require(r.size() == x.size(), "solve_estimating_equation: residual dimension mismatch");
    double norm = max_abs(r);

    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        if (norm <= cfg.tol_score) {
            report.converged = true;
            break;
        }
        const Matrix jac = jacobian(x);
        require(jac.rows() == x.size() && jac.cols() == x.size(),
                "solve_estimating_equation: jacobian must be square with dim = len(init)");
        PivotedSolver lu(jac);
        if (lu.singular()) {
            std::ostringstream msg;
            msg << "jacobian singular at iteration " << iter
                << " (pivot ratio " << lu.pivot_ratio() << ")";
            fail(ErrorKind::SingularJacobian, msg.str());
        }
        const Vector step = -lu.solve(r);

        double scale = 1.0;
        bool accepted = false;
        Vector x_new;
        Vector r_new;
        double norm_new = 0.0;
        for (int h = 0; h <= cfg.max_halvings; ++h) {
            x_new = x + scale * step;
            r_new = residual(x_new);
            norm_new = max_abs(r_new);
            if (norm_new < norm || (norm_new == norm && norm_new <= cfg.tol_score)) {
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        report.iterations = iter;
        if (!accepted) {
            report.halvings_exhausted = true;
            break;
        }
        report.last_step_norm = scale * max_abs(step);
        x = std::move(x_new);
        r = std::move(r_new);
        norm = norm_new;
        if (observer) observer(x);

        if (norm <= cfg.tol_score) {
            report.converged = true;
            break;
        }
        // A vanishing step with a residual still above tolerance means the
        // iteration has stalled; report it rather than claim convergence.
        if (report.last_step_norm <= cfg.tol_step) break;
    }

    report.solution = x;
    report.final_residual_norm = norm;
    return report;
}

Matrix finite_difference_jacobian(const ResidualFn& residual, const Vector& x, double rel_step) {
    const Vector f0 = residual(x);
    Matrix jac(f0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = rel_step * std::max(1.0, std::abs(x[j]));
        Vector xp = x;
        Vector xm = x;
        xp[j] += h;
        xm[j] -= h;
        jac.col(j) = (residual(xp) - residual(xm)) / (2.0 * h);
    }
    return jac;
}

}  // namespace ipwsel
