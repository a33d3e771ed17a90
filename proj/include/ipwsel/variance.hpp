#pragma once

#include "ipwsel/estimating_core.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace ipwsel {

struct OverlapPair;

// Pieces of a sandwich estimate. G_theta is the derivative of the scaled
// outcome score (negative definite at an interior solution); E_hat is the
// meat after any selection-model correction. The E1..E4 and A blocks are
// only filled by the two-step estimators.
struct SandwichComponents {
    Matrix G_theta;
    Matrix E_hat;
    std::optional<Matrix> G_alpha;
    std::optional<Matrix> H_hat;
    std::optional<Matrix> A;  // G_alpha * H^-1
    std::optional<Matrix> E1, E2, E3, E4;
};

// Known (or plug-in) selection probabilities.
Matrix vcov_known_weights(const Vector& theta_hat, const Matrix& z, const Vector& d,
                          const Vector& pi, double big_n, SandwichComponents* parts = nullptr);

struct PlVarianceData {
    const Matrix& z_int;     // disease design, internal rows
    const Vector& d_int;     // outcome, internal rows
    const Matrix& x_int;     // selection design, internal rows
    const Matrix& x_ext;     // selection design, external rows
    const Vector& pi_ext;    // design probabilities, external rows
    const std::vector<OverlapPair>& overlap;
};

// Two-step sandwich for PL weights. With zero_selection_terms the G_alpha
// block is forced to zero and the result equals vcov_known_weights.
Matrix vcov_pl(const Vector& theta_hat, const Vector& alpha_hat, const PlVarianceData& data,
               double big_n, bool zero_selection_terms = false,
               SandwichComponents* parts = nullptr);

// Two-step sandwich for CL weights.
Matrix vcov_cl(const Vector& theta_hat, const Vector& alpha_hat, const Matrix& z_int,
               const Vector& d_int, const Matrix& x_int, double big_n,
               bool zero_selection_terms = false, SandwichComponents* parts = nullptr);

// Inverse standard normal CDF (Wichura's AS241 rational approximation).
double normal_quantile(double p);

std::vector<std::pair<double, double>> wald_ci(const Vector& theta_hat, const Matrix& vcov,
                                               double level = 0.95);

}  // namespace ipwsel
