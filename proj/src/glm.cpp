#include "ipwsel/glm.hpp"

#include "ipwsel/errors.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace ipwsel {

namespace {

void check_finite_vector(const Vector& v, const char* what) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            std::ostringstream msg;
            msg << what << ": non-finite value at index " << i;
            fail(ErrorKind::InvalidArgument, msg.str());
        }
    }
}

IterateObserver separation_guard(const char* who) {
    return [who](const Vector& beta) {
        const double m = beta.cwiseAbs().maxCoeff();
        if (m > kSeparationBound) {
            std::ostringstream msg;
            msg << who << ": |coefficient| reached " << m << " (> " << kSeparationBound
                << "); data appear separated";
            fail(ErrorKind::Separation, msg.str());
        }
    };
}

// Separated data drive the score below tolerance while the coefficients are
// still running off to infinity. Keep taking full Newton steps until they
// become negligible; under separation they stay O(1) and trip the guard.
Vector polish(const ResidualFn& residual, const JacobianFn& jacobian, Vector beta,
              const IterateObserver& guard) {
    for (int k = 0; k < 60; ++k) {
        PivotedSolver lu(jacobian(beta));
        if (lu.singular()) break;
        const Vector step = -lu.solve(residual(beta));
        if (max_abs(step) <= 1e-7 * (1.0 + max_abs(beta))) {
            const Vector cand = beta + step;
            if (max_abs(residual(cand)) <= max_abs(residual(beta))) beta = cand;
            return beta;
        }
        beta += step;
        guard(beta);
    }
    return beta;
}

void require_converged(const SolveReport& rep, const char* who) {
    if (rep.converged) return;
    std::ostringstream msg;
    msg << who << ": no convergence after " << rep.iterations
        << " iterations (residual " << rep.final_residual_norm << ")";
    fail(ErrorKind::NonConvergence, msg.str());
}

}  // namespace

void DesignMatrix::validate() const {
    require(static_cast<Eigen::Index>(column_names.size()) == rows.cols(),
            "DesignMatrix: column_names size does not match column count");
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            if (!std::isfinite(rows(i, j))) {
                std::ostringstream msg;
                msg << "DesignMatrix: non-finite entry at row " << i << ", column "
                    << column_names[static_cast<std::size_t>(j)];
                fail(ErrorKind::InvalidArgument, msg.str());
            }
        }
    }
    if (has_intercept) {
        require(rows.cols() >= 1, "DesignMatrix: intercept flagged but no columns");
        require((rows.col(0).array() == 1.0).all(),
                "DesignMatrix: intercept column must be all ones");
    }
}

DesignMatrix DesignMatrix::with_intercept(const Matrix& covariates,
                                          const std::vector<std::string>& names) {
    require(static_cast<Eigen::Index>(names.size()) == covariates.cols(),
            "with_intercept: names size does not match covariate columns");
    DesignMatrix d;
    d.rows.resize(covariates.rows(), covariates.cols() + 1);
    d.rows.col(0).setOnes();
    d.rows.rightCols(covariates.cols()) = covariates;
    d.column_names.reserve(names.size() + 1);
    d.column_names.emplace_back("(Intercept)");
    d.column_names.insert(d.column_names.end(), names.begin(), names.end());
    d.has_intercept = true;
    return d;
}

DesignMatrix DesignMatrix::select_rows(const std::vector<Eigen::Index>& idx) const {
    DesignMatrix d;
    d.rows.resize(static_cast<Eigen::Index>(idx.size()), rows.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        d.rows.row(static_cast<Eigen::Index>(k)) = rows.row(idx[k]);
    }
    d.column_names = column_names;
    d.has_intercept = has_intercept;
    return d;
}

double expit(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) noexcept { return std::log(p / (1.0 - p)); }

Vector expit(const Vector& eta) {
    Vector out(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) out[i] = expit(eta[i]);
    return out;
}

Eigen::Index numerical_rank(const Matrix& m) {
    if (m.size() == 0) return 0;
    Eigen::ColPivHouseholderQR<Matrix> qr(m);
    qr.setThreshold(1e-10);
    return qr.rank();
}

Vector logistic_score(const DesignMatrix& design, const Vector& y, const Vector& w,
                      const Vector& beta) {
    const Vector mu = expit(design.rows * beta);
    return design.rows.transpose() * (w.array() * (y - mu).array()).matrix() / w.sum();
}

FittedModel fit_logistic_weighted_by(const DesignMatrix& design, const Vector& y,
                                     const Vector& w, const SolveConfig& cfg) {
    design.validate();
    const Eigen::Index n = design.n();
    const Eigen::Index p = design.p();
    require(p >= 1, "logistic fit: design has no columns");
    require(y.size() == n && w.size() == n, "logistic fit: vector lengths differ from design rows");
    require(n >= p, "logistic fit: fewer rows than columns");
    check_finite_vector(y, "logistic fit: response");
    check_finite_vector(w, "logistic fit: weights");
    require((y.array() >= 0.0).all() && (y.array() <= 1.0).all(),
            "logistic fit: response must lie in [0,1]");
    require((w.array() >= 0.0).all() && w.sum() > 0.0,
            "logistic fit: weights must be nonnegative with positive total");

    const Matrix& x = design.rows;
    const double wsum = w.sum();
    auto residual = [&](const Vector& beta) -> Vector {
        const Vector mu = expit(x * beta);
        return x.transpose() * (w.array() * (y - mu).array()).matrix() / wsum;
    };
    auto jacobian = [&](const Vector& beta) -> Matrix {
        const Vector mu = expit(x * beta);
        const Vector v = (w.array() * mu.array() * (1.0 - mu.array())).matrix();
        return -(x.transpose() * v.asDiagonal() * x) / wsum;
    };

    FittedModel fm;
    fm.model_kind = ModelKind::logistic;
    const IterateObserver guard = separation_guard("logistic fit");
    fm.report = solve_estimating_equation(residual, jacobian, Vector::Zero(p), cfg, guard);
    require_converged(fm.report, "logistic fit");
    fm.report.solution = polish(residual, jacobian, fm.report.solution, guard);
    fm.report.final_residual_norm = max_abs(residual(fm.report.solution));
    fm.coefficients = fm.report.solution;
    return fm;
}

FittedModel fit_weighted_logistic(const DesignMatrix& design, const Vector& outcome,
                                  const Vector& pi, const SolveConfig& cfg) {
    const Eigen::Index n = design.n();
    require(outcome.size() == n && pi.size() == n,
            "fit_weighted_logistic: outcome/pi length differs from design rows");
    for (Eigen::Index i = 0; i < n; ++i) {
        require(outcome[i] == 0.0 || outcome[i] == 1.0,
                "fit_weighted_logistic: outcome must be binary");
        if (!(pi[i] > 0.0 && pi[i] <= 1.0)) {
            std::ostringstream msg;
            msg << "fit_weighted_logistic: pi[" << i << "] = " << pi[i] << " outside (0,1]";
            fail(ErrorKind::InvalidArgument, msg.str());
        }
    }
    const double ones = outcome.sum();
    if (ones == 0.0 || ones == static_cast<double>(n)) {
        fail(ErrorKind::DegenerateOutcome,
             "fit_weighted_logistic: outcome is constant across all units");
    }
    const Vector w = pi.cwiseInverse();
    return fit_logistic_weighted_by(design, outcome, w, cfg);
}

Matrix predict_multinomial(const Matrix& x, const Vector& coefficients) {
    const Eigen::Index p = x.cols();
    require(coefficients.size() == 2 * p, "predict_multinomial: expected 2p coefficients");
    Matrix probs(x.rows(), 3);
    const Vector eta1 = x * coefficients.head(p);
    const Vector eta2 = x * coefficients.tail(p);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = std::max({0.0, eta1[i], eta2[i]});
        const double e0 = std::exp(-m);
        const double e1 = std::exp(eta1[i] - m);
        const double e2 = std::exp(eta2[i] - m);
        const double s = e0 + e1 + e2;
        probs(i, 0) = e0 / s;
        probs(i, 1) = e1 / s;
        probs(i, 2) = e2 / s;
    }
    return probs;
}

double multinomial_loglik(const Matrix& x, const std::vector<int>& category,
                          const Vector& coefficients) {
    const Matrix probs = predict_multinomial(x, coefficients);
    double ll = 0.0;
    for (std::size_t i = 0; i < category.size(); ++i) {
        ll += std::log(probs(static_cast<Eigen::Index>(i), category[i]));
    }
    return ll;
}

FittedModel fit_multinomial(const DesignMatrix& design, const std::vector<int>& category,
                            const SolveConfig& cfg) {
    design.validate();
    const Eigen::Index n = design.n();
    const Eigen::Index p = design.p();
    require(static_cast<Eigen::Index>(category.size()) == n,
            "fit_multinomial: category length differs from design rows");
    require(n >= p, "fit_multinomial: fewer rows than columns");
    std::array<Eigen::Index, 3> counts{0, 0, 0};
    Matrix y = Matrix::Zero(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int c = category[static_cast<std::size_t>(i)];
        if (c < 0 || c > 2) {
            std::ostringstream msg;
            msg << "fit_multinomial: category at row " << i << " is " << c
                << ", expected 0, 1 or 2";
            fail(ErrorKind::InvalidArgument, msg.str());
        }
        ++counts[static_cast<std::size_t>(c)];
        y(i, c) = 1.0;
    }
    for (int k = 0; k < 3; ++k) {
        if (counts[static_cast<std::size_t>(k)] == 0) {
            std::ostringstream msg;
            msg << "fit_multinomial: category " << k << " has no observations";
            fail(ErrorKind::EmptyCategory, msg.str());
        }
    }

    const Matrix& x = design.rows;
    const double dn = static_cast<double>(n);
    auto residual = [&](const Vector& beta) -> Vector {
        const Matrix pr = predict_multinomial(x, beta);
        Vector r(2 * p);
        r.head(p) = x.transpose() * (y.col(1) - pr.col(1)) / dn;
        r.tail(p) = x.transpose() * (y.col(2) - pr.col(2)) / dn;
        return r;
    };
    auto jacobian = [&](const Vector& beta) -> Matrix {
        const Matrix pr = predict_multinomial(x, beta);
        Matrix j(2 * p, 2 * p);
        for (int k = 1; k <= 2; ++k) {
            for (int l = 1; l <= 2; ++l) {
                Vector v(n);
                for (Eigen::Index i = 0; i < n; ++i) {
                    v[i] = pr(i, k) * ((k == l ? 1.0 : 0.0) - pr(i, l));
                }
                j.block((k - 1) * p, (l - 1) * p, p, p) =
                    -(x.transpose() * v.asDiagonal() * x) / dn;
            }
        }
        return j;
    };

    FittedModel fm;
    fm.model_kind = ModelKind::multinomial;
    const IterateObserver guard = separation_guard("fit_multinomial");
    fm.report = solve_estimating_equation(residual, jacobian, Vector::Zero(2 * p), cfg, guard);
    require_converged(fm.report, "fit_multinomial");
    fm.report.solution = polish(residual, jacobian, fm.report.solution, guard);
    fm.report.final_residual_norm = max_abs(residual(fm.report.solution));
    fm.coefficients = fm.report.solution;
    return fm;
}

double simplex_unit_deviance(double y, double mu) noexcept {
    const double a = y - mu;
    const double b = mu * (1.0 - mu);
    return a * a / (y * (1.0 - y) * b * b);
}

double simplex_log_density(double y, double mu, double sigma2) noexcept {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    const double c = y * (1.0 - y);
    return -0.5 * std::log(kTwoPi * sigma2 * c * c * c) -
           simplex_unit_deviance(y, mu) / (2.0 * sigma2);
}

FittedModel fit_simplex_regression(const DesignMatrix& design, const Vector& response,
                                   const SolveConfig& cfg) {
    design.validate();
    const Eigen::Index n = design.n();
    const Eigen::Index p = design.p();
    require(response.size() == n, "fit_simplex_regression: response length differs from design rows");
    require(n >= p, "fit_simplex_regression: fewer rows than columns");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(response[i] > 0.0 && response[i] < 1.0)) {
            std::ostringstream msg;
            msg << "fit_simplex_regression: response at row " << i << " is " << response[i]
                << ", must be strictly inside (0,1)";
            fail(ErrorKind::ResponseOnBoundary, msg.str());
        }
    }

    const Matrix& x = design.rows;
    const Vector& y = response;
    const Vector c = (y.array() * (1.0 - y.array())).matrix();
    const double dn = static_cast<double>(n);

    // Setting d/d(delta) of the summed unit deviance to zero; the dispersion
    // drops out of this equation.
    auto residual = [&](const Vector& delta) -> Vector {
        const Vector mu = expit(x * delta);
        Vector g(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double a = y[i] - mu[i];
            const double v = mu[i] * (1.0 - mu[i]);
            g[i] = a * (1.0 + a * a / c[i]) / (v * v);
        }
        return x.transpose() * g / dn;
    };
    auto jacobian = [&](const Vector& delta) -> Matrix {
        const Vector mu = expit(x * delta);
        Vector h(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double m = mu[i];
            const double a = y[i] - m;
            const double v = m * (1.0 - m);
            const double b = v * v;
            const double db = 2.0 * v * (1.0 - 2.0 * m);
            const double num = a + a * a * a / c[i];
            const double dnum = -1.0 - 3.0 * a * a / c[i];
            const double dg = (dnum * b - num * db) / (b * b);
            h[i] = dg * v;
        }
        return x.transpose() * h.asDiagonal() * x / dn;
    };

    const FittedModel init = fit_logistic_weighted_by(design, y, Vector::Ones(n), cfg);

    FittedModel fm;
    fm.model_kind = ModelKind::simplex;
    fm.report = solve_estimating_equation(residual, jacobian, init.coefficients, cfg,
                                          separation_guard("fit_simplex_regression"));
    require_converged(fm.report, "fit_simplex_regression");
    fm.coefficients = fm.report.solution;
    const Vector mu = expit(x * fm.coefficients);
    double dsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) dsum += simplex_unit_deviance(y[i], mu[i]);
    fm.sigma2 = dsum / dn;
    return fm;
}

}  // namespace ipwsel
