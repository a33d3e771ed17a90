#pragma once

#include "ipwsel/estimating_core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ipwsel {

struct DesignMatrix {
    Matrix rows;
    std::vector<std::string> column_names;
    bool has_intercept = false;

    Eigen::Index n() const noexcept { return rows.rows(); }
    Eigen::Index p() const noexcept { return rows.cols(); }

    // Throws InvalidArgument on non-finite entries, a name/column count
    // mismatch, or an intercept column that is not all ones.
    void validate() const;

    // Prepends a column of ones named "(Intercept)".
    static DesignMatrix with_intercept(const Matrix& covariates,
                                       const std::vector<std::string>& names);
    DesignMatrix select_rows(const std::vector<Eigen::Index>& idx) const;
};

enum class ModelKind { logistic, multinomial, simplex };

struct FittedModel {
    // Multinomial coefficients are stacked per non-reference category.
    Vector coefficients;
    std::optional<Matrix> vcov;
    SolveReport report;
    ModelKind model_kind = ModelKind::logistic;
    // Simplex dispersion; unset for the other families.
    std::optional<double> sigma2;
};

double expit(double x) noexcept;
double logit(double p) noexcept;
Vector expit(const Vector& eta);

inline constexpr double kSeparationBound = 30.0;

// Solves (1/sum w) sum_i w_i (y_i - expit(b'x_i)) x_i = 0 with y_i in [0,1].
// Binary y gives weighted logistic MLE; fractional y gives the quasi-likelihood
// fit. No outcome-degeneracy check is done here.
FittedModel fit_logistic_weighted_by(const DesignMatrix& design, const Vector& y,
                                     const Vector& w, const SolveConfig& cfg = {});

// IPW logistic regression with weights 1/pi. pi == 1 gives the naive fit.
FittedModel fit_weighted_logistic(const DesignMatrix& design, const Vector& outcome,
                                  const Vector& pi, const SolveConfig& cfg = {});

Vector logistic_score(const DesignMatrix& design, const Vector& y, const Vector& w,
                      const Vector& beta);

// Baseline-category logit over categories {0,1,2}; category 0 is the reference.
FittedModel fit_multinomial(const DesignMatrix& design, const std::vector<int>& category,
                            const SolveConfig& cfg = {});

// n x 3 matrix of fitted category probabilities.
Matrix predict_multinomial(const Matrix& x, const Vector& coefficients);

double multinomial_loglik(const Matrix& x, const std::vector<int>& category,
                          const Vector& coefficients);

// Unit deviance of the simplex distribution.
double simplex_unit_deviance(double y, double mu) noexcept;

// Log density of the simplex distribution S(mu, sigma2) at y.
double simplex_log_density(double y, double mu, double sigma2) noexcept;

// Simplex regression with logit mean; sigma2 profiled as the mean unit deviance.
FittedModel fit_simplex_regression(const DesignMatrix& design, const Vector& response,
                                   const SolveConfig& cfg = {});

// Rank of a matrix by column-pivoted QR with a relative threshold.
Eigen::Index numerical_rank(const Matrix& m);

}  // namespace ipwsel
