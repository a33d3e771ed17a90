#include "ipwsel/variance.hpp"

#include "ipwsel/errors.hpp"
#include "ipwsel/glm.hpp"
#include "ipwsel/weights.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ipwsel {

namespace {

// (1/N) G^-1 E G^-T, symmetrized.
Matrix assemble(const Matrix& g, const Matrix& e, double big_n) {
    PivotedSolver lu(g);
    if (lu.singular()) {
        std::ostringstream msg;
        msg << "sandwich bread is singular (pivot ratio " << lu.pivot_ratio() << ")";
        fail(ErrorKind::SingularBread, msg.str());
    }
    const Matrix g_inv = lu.inverse();
    Matrix v = g_inv * e * g_inv.transpose() / big_n;
    return 0.5 * (v + v.transpose());
}

Matrix weighted_cross(const Matrix& a, const Vector& w, const Matrix& b) {
    return a.transpose() * w.asDiagonal() * b;
}

void check_theta_inputs(const Vector& theta, const Matrix& z, const Vector& d, double big_n) {
    require(theta.size() == z.cols(), "vcov: theta length differs from design columns");
    require(d.size() == z.rows(), "vcov: outcome length differs from design rows");
    require(big_n > 0.0 && std::isfinite(big_n), "vcov: N must be positive");
}

Matrix inverse_h(const Matrix& h) {
    PivotedSolver lu(h);
    if (lu.singular()) {
        std::ostringstream msg;
        msg << "selection-model information H is singular (pivot ratio " << lu.pivot_ratio() << ")";
        fail(ErrorKind::SingularH, msg.str());
    }
    return lu.inverse();
}

}  // namespace

Matrix vcov_known_weights(const Vector& theta_hat, const Matrix& z, const Vector& d,
                          const Vector& pi, double big_n, SandwichComponents* parts) {
    check_theta_inputs(theta_hat, z, d, big_n);
    require(pi.size() == z.rows(), "vcov_known_weights: pi length differs from design rows");
    const Vector mu = expit(z * theta_hat);
    const Vector inv = pi.cwiseInverse();
    const Vector resid = d - mu;
    const Vector g_w = (inv.array() * mu.array() * (1.0 - mu.array())).matrix();
    const Vector e_w = (inv.array().square() * resid.array().square()).matrix();
    const Matrix g = -weighted_cross(z, g_w, z) / big_n;
    const Matrix e = weighted_cross(z, e_w, z) / big_n;
    Matrix v = assemble(g, e, big_n);
    if (parts) {
        *parts = SandwichComponents{};
        parts->G_theta = g;
        parts->E_hat = e;
    }
    return v;
}

Matrix vcov_pl(const Vector& theta_hat, const Vector& alpha_hat, const PlVarianceData& data,
               double big_n, bool zero_selection_terms, SandwichComponents* parts) {
    const Matrix& z = data.z_int;
    const Matrix& x = data.x_int;
    const Matrix& xe = data.x_ext;
    check_theta_inputs(theta_hat, z, data.d_int, big_n);
    require(x.rows() == z.rows(), "vcov_pl: internal selection and disease designs differ in rows");
    require(alpha_hat.size() == x.cols() && xe.cols() == x.cols(),
            "vcov_pl: alpha length differs from selection design columns");
    require(data.pi_ext.size() == xe.rows(), "vcov_pl: pi_ext length differs from external rows");

    const Vector mu = expit(z * theta_hat);
    const Vector resid = data.d_int - mu;
    const Vector pi = expit(x * alpha_hat);
    const Vector pi_e = expit(xe * alpha_hat);  // pi evaluated at external units
    const Vector inv = pi.cwiseInverse();

    const Matrix g_theta =
        -weighted_cross(z, (inv.array() * mu.array() * (1.0 - mu.array())).matrix(), z) / big_n;
    const Matrix e1 = weighted_cross(z, (inv.array().square() * resid.array().square()).matrix(), z) / big_n;

    const Vector ratio = (pi_e.array() / data.pi_ext.array()).matrix();
    const Matrix h =
        -weighted_cross(xe, (ratio.array() * (1.0 - pi_e.array())).matrix(), xe) / big_n;
    Matrix g_alpha =
        -weighted_cross(z, ((1.0 - pi.array()) * inv.array() * resid.array()).matrix(), x) / big_n;
    if (zero_selection_terms) g_alpha.setZero();

    const Matrix a = g_alpha * inverse_h(h);  // p x q

    // sum over internal units of x_i (1/pi_i)(D_i - mu_i) z_i', minus the
    // overlap units' x_i (1/pi_ext)(D_i - mu_i) z_i'.
    Matrix xz = weighted_cross(x, (inv.array() * resid.array()).matrix(), z);
    Matrix xx_overlap = Matrix::Zero(x.cols(), x.cols());
    for (const OverlapPair& op : data.overlap) {
        require(op.internal >= 0 && op.internal < x.rows() && op.external >= 0 && op.external < xe.rows(),
                "vcov_pl: overlap index out of range");
        const double pe = data.pi_ext[op.external];
        const double pi_i = pi[op.internal];
        xz -= x.row(op.internal).transpose() * (resid[op.internal] / pe) * z.row(op.internal);
        xx_overlap += (pi_i / pe) * x.row(op.internal).transpose() * x.row(op.internal);
    }
    const Matrix e2 = a * xz / big_n;
    const Matrix e3 = e2.transpose();
    const Matrix xx_int = x.transpose() * x;
    const Matrix xx_ext = weighted_cross(xe, ratio.array().square().matrix(), xe);
    const Matrix e4 = a * (xx_int - 2.0 * xx_overlap + xx_ext) * a.transpose() / big_n;

    const Matrix e = e1 - e2 - e3 + e4;
    Matrix v = assemble(g_theta, e, big_n);
    if (parts) {
        parts->G_theta = g_theta;
        parts->E_hat = e;
        parts->G_alpha = g_alpha;
        parts->H_hat = h;
        parts->A = a;
        parts->E1 = e1;
        parts->E2 = e2;
        parts->E3 = e3;
        parts->E4 = e4;
    }
    return v;
}

Matrix vcov_cl(const Vector& theta_hat, const Vector& alpha_hat, const Matrix& z_int,
               const Vector& d_int, const Matrix& x_int, double big_n, bool zero_selection_terms,
               SandwichComponents* parts) {
    const Matrix& z = z_int;
    const Matrix& x = x_int;
    check_theta_inputs(theta_hat, z, d_int, big_n);
    require(x.rows() == z.rows(), "vcov_cl: selection and disease designs differ in rows");
    require(alpha_hat.size() == x.cols(), "vcov_cl: alpha length differs from selection design columns");

    const Vector mu = expit(z * theta_hat);
    const Vector resid = d_int - mu;
    const Vector pi = expit(x * alpha_hat);
    const Vector inv = pi.cwiseInverse();
    const Vector one_minus = (1.0 - pi.array()).matrix();

    const Matrix g_theta =
        -weighted_cross(z, (inv.array() * mu.array() * (1.0 - mu.array())).matrix(), z) / big_n;
    const Matrix e1 = weighted_cross(z, (inv.array().square() * resid.array().square()).matrix(), z) / big_n;
    const Matrix h = -weighted_cross(x, (one_minus.array() * inv.array()).matrix(), x) / big_n;
    Matrix g_alpha =
        -weighted_cross(z, (one_minus.array() * inv.array() * resid.array()).matrix(), x) / big_n;
    if (zero_selection_terms) g_alpha.setZero();

    const Matrix a = g_alpha * inverse_h(h);
    const Matrix e2 =
        a * weighted_cross(x, (inv.array() * (inv.array() - 1.0) * resid.array()).matrix(), z) / big_n;
    const Matrix e3 = e2.transpose();
    const Matrix e4 =
        a * weighted_cross(x, (one_minus.array() * inv.array().square()).matrix(), x) * a.transpose() / big_n;

    const Matrix e = e1 - e2 - e3 + e4;
    Matrix v = assemble(g_theta, e, big_n);
    if (parts) {
        parts->G_theta = g_theta;
        parts->E_hat = e;
        parts->G_alpha = g_alpha;
        parts->H_hat = h;
        parts->A = a;
        parts->E1 = e1;
        parts->E2 = e2;
        parts->E3 = e3;
        parts->E4 = e4;
    }
    return v;
}

double normal_quantile(double p) {
    require(p > 0.0 && p < 1.0, "normal_quantile: p must lie in (0,1)");
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                  6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
              1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
        const double den =
            (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                  3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
              4.2313330701600911252e+1) * r + 1.0);
        return q * num / den;
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
        x = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
        x = num / den;
    }
    return q < 0.0 ? -x : x;
}

std::vector<std::pair<double, double>> wald_ci(const Vector& theta_hat, const Matrix& vcov,
                                               double level) {
    require(level > 0.0 && level < 1.0, "wald_ci: level must lie in (0,1)");
    require(vcov.rows() == theta_hat.size() && vcov.cols() == theta_hat.size(),
            "wald_ci: vcov dimension differs from theta");
    const double z = normal_quantile(0.5 * (1.0 + level));
    std::vector<std::pair<double, double>> out;
    out.reserve(static_cast<std::size_t>(theta_hat.size()));
    for (Eigen::Index j = 0; j < theta_hat.size(); ++j) {
        require(vcov(j, j) >= 0.0, "wald_ci: negative variance on the diagonal");
        const double half = z * std::sqrt(vcov(j, j));
        out.emplace_back(theta_hat[j] - half, theta_hat[j] + half);
    }
    return out;
}

}  // namespace ipwsel
