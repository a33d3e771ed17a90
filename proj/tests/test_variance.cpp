#include <doctest.h>

#include "ipwsel/errors.hpp"
#include "ipwsel/glm.hpp"
#include "ipwsel/variance.hpp"
#include "ipwsel/weights.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <random>

using namespace ipwsel;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double max_abs_m(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

Matrix outer(const Vector& a, const Vector& b) { return a * b.transpose(); }

}  // namespace

TEST_CASE("normal quantile agrees with Boost.Math") {
    const boost::math::normal_distribution<double> nd;
    for (double p : {1e-300, 1e-100, 1e-20, 1e-10, 1e-5, 0.001, 0.01, 0.025, 0.1, 0.2, 0.3, 0.4, 0.425,
                     0.5, 0.6, 0.75, 0.9, 0.925, 0.975, 0.99, 0.999, 1 - 1e-10}) {
        const double ref = boost::math::quantile(nd, p);
        CHECK(std::abs(normal_quantile(p) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
    }
    for (int i = 1; i < 1000; ++i) {
        const double p = i / 1000.0;
        const double ref = boost::math::quantile(nd, p);
        CHECK(std::abs(normal_quantile(p) - ref) <= 1e-13 * std::max(1.0, std::abs(ref)));
    }
}

TEST_CASE("Wald intervals") {
    Vector t(1);
    Matrix v(1, 1);
    t << 0.3;
    v << 0.0;
    auto ci = wald_ci(t, v);
    CHECK(ci[0].first == 0.3);
    CHECK(ci[0].second == 0.3);
    t << 0.0;
    v << 1.0;
    ci = wald_ci(t, v);
    CHECK(ci[0].first == doctest::Approx(-1.959964).epsilon(1e-6));
    CHECK(ci[0].second == doctest::Approx(1.959964).epsilon(1e-6));
    t << 1.0;
    v << 4.0;
    ci = wald_ci(t, v, 0.5);
    CHECK(ci[0].first == doctest::Approx(1 - 2 * 0.674490).epsilon(1e-6));
    CHECK(ci[0].second == doctest::Approx(1 + 2 * 0.674490).epsilon(1e-6));
}

TEST_CASE("known-weights sandwich matches hand-assembled sums") {
    const double x[6] = {-1.2, -0.4, 0.1, 0.5, 1.1, 2.0};
    const double d[6] = {0, 1, 0, 1, 0, 1};
    const double pi[6] = {0.3, 0.5, 0.9, 0.4, 0.7, 0.2};
    Matrix z(6, 2);
    Vector dv(6), piv(6);
    for (int i = 0; i < 6; ++i) {
        z(i, 0) = 1;
        z(i, 1) = x[i];
        dv[i] = d[i];
        piv[i] = pi[i];
    }
    Vector theta(2);
    theta << -0.2, 0.7;
    const double big_n = 37.0;
    Matrix g = Matrix::Zero(2, 2), e = Matrix::Zero(2, 2);
    for (int i = 0; i < 6; ++i) {
        const Vector zi = z.row(i).transpose();
        const double mu = sig(theta.dot(zi));
        g -= (1 / pi[i]) * mu * (1 - mu) * outer(zi, zi) / big_n;
        e += (d[i] - mu) * (d[i] - mu) / (pi[i] * pi[i]) * outer(zi, zi) / big_n;
    }
    const Matrix gi = g.inverse();
    const Matrix expected = gi * e * gi.transpose() / big_n;
    SandwichComponents parts;
    const Matrix v = vcov_known_weights(theta, z, dv, piv, big_n, &parts);
    CHECK(max_abs_m(parts.G_theta - g) <= 1e-12);
    CHECK(max_abs_m(parts.E_hat - e) <= 1e-12);
    CHECK(max_abs_m(v - expected) <= 1e-12);
    CHECK(max_abs_m(v - v.transpose()) <= 1e-12);
    // N cancels from the variance.
    CHECK(max_abs_m(vcov_known_weights(theta, z, dv, piv, 1000.0) - v) <= 1e-12);
}

TEST_CASE("known-weights sandwich agrees with inverse Fisher information for a correct model") {
    std::mt19937_64 gen(17);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    const Eigen::Index n = 20000;
    Matrix cov(n, 2);
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        cov(i, 0) = nd(gen);
        cov(i, 1) = nd(gen);
        d[i] = ud(gen) < sig(-1 + 0.5 * cov(i, 0) + 0.5 * cov(i, 1)) ? 1 : 0;
    }
    const DesignMatrix z = DesignMatrix::with_intercept(cov, {"a", "b"});
    const Vector ones = Vector::Ones(n);
    const Vector theta = fit_weighted_logistic(z, d, ones).coefficients;
    const Matrix v = vcov_known_weights(theta, z.rows, d, ones, double(n));
    Matrix info = Matrix::Zero(3, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector zi = z.rows.row(i).transpose();
        const double mu = sig(theta.dot(zi));
        info += mu * (1 - mu) * outer(zi, zi);
    }
    const Matrix inv_info = info.inverse();
    for (int j = 0; j < 3; ++j) CHECK(std::abs(v(j, j) / inv_info(j, j) - 1.0) < 0.10);
}

namespace {

struct Toy {
    Matrix z, x, xe;
    Vector d, pi_ext;
    std::vector<OverlapPair> overlap;
    Vector theta, alpha;
};

// 10 internal units, 8 external units, 3 of them shared.
Toy make_toy() {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.2, 0.9);
    Toy t;
    t.z.resize(10, 3);
    t.x.resize(10, 3);
    t.d.resize(10);
    for (int i = 0; i < 10; ++i) {
        const double z1 = nd(gen), z2 = nd(gen), w = nd(gen);
        t.d[i] = i % 3 == 0 ? 1 : 0;
        t.z.row(i) << 1, z1, z2;
        t.x.row(i) << 1, z2, w;
    }
    t.xe.resize(8, 3);
    t.pi_ext.resize(8);
    for (int j = 0; j < 8; ++j) {
        t.pi_ext[j] = ud(gen);
        if (j < 3) {
            t.xe.row(j) = t.x.row(2 * j + 1);
            t.overlap.push_back({2 * j + 1, j});
        } else {
            t.xe.row(j) << 1, nd(gen), nd(gen);
        }
    }
    t.theta.resize(3);
    t.theta << -0.9, 0.4, 0.3;
    t.alpha.resize(3);
    t.alpha << -0.5, 0.3, 0.2;
    return t;
}

}  // namespace

TEST_CASE("PL sandwich components match per-unit assembly") {
    const Toy t = make_toy();
    const double big_n = 25.0;
    SandwichComponents parts;
    const PlVarianceData data{t.z, t.d, t.x, t.xe, t.pi_ext, t.overlap};
    const Matrix v = vcov_pl(t.theta, t.alpha, data, big_n, false, &parts);

    Matrix g = Matrix::Zero(3, 3), h = Matrix::Zero(3, 3), ga = Matrix::Zero(3, 3), e1 = Matrix::Zero(3, 3);
    for (int i = 0; i < 10; ++i) {
        const Vector zi = t.z.row(i).transpose(), xi = t.x.row(i).transpose();
        const double mu = sig(t.theta.dot(zi)), p = sig(t.alpha.dot(xi));
        g -= mu * (1 - mu) / p * outer(zi, zi) / big_n;
        ga -= (1 - p) / p * (t.d[i] - mu) * outer(zi, xi) / big_n;
        e1 += std::pow((t.d[i] - mu) / p, 2) * outer(zi, zi) / big_n;
    }
    for (int j = 0; j < 8; ++j) {
        const Vector xj = t.xe.row(j).transpose();
        const double p = sig(t.alpha.dot(xj));
        h -= p / t.pi_ext[j] * (1 - p) * outer(xj, xj) / big_n;
    }
    const Matrix a = ga * h.inverse();

    // Unit-level influence pieces over the union of the two samples:
    // psi = S/pi (D - mu) Z, phi = S X - S_ext/pi_ext pi(X) X.
    Matrix phi_psi = Matrix::Zero(3, 3), phi_phi = Matrix::Zero(3, 3);
    std::vector<int> ext_of(10, -1);
    for (const auto& op : t.overlap) ext_of[op.internal] = int(op.external);
    for (int i = 0; i < 10; ++i) {
        const Vector zi = t.z.row(i).transpose(), xi = t.x.row(i).transpose();
        const double mu = sig(t.theta.dot(zi)), p = sig(t.alpha.dot(xi));
        const Vector psi = (t.d[i] - mu) / p * zi;
        Vector phi = xi;
        if (ext_of[i] >= 0) phi -= p / t.pi_ext[ext_of[i]] * xi;
        phi_psi += outer(phi, psi);
        phi_phi += outer(phi, phi);
    }
    for (int j = 3; j < 8; ++j) {
        const Vector xj = t.xe.row(j).transpose();
        const Vector phi = -sig(t.alpha.dot(xj)) / t.pi_ext[j] * xj;
        phi_phi += outer(phi, phi);
    }
    const Matrix e2 = a * phi_psi / big_n;
    const Matrix e4 = a * phi_phi * a.transpose() / big_n;
    const Matrix e = e1 - e2 - e2.transpose() + e4;
    const Matrix expected = g.inverse() * e * g.inverse().transpose() / big_n;

    CHECK(max_abs_m(parts.G_theta - g) <= 1e-12);
    CHECK(max_abs_m(*parts.H_hat - h) <= 1e-12);
    CHECK(max_abs_m(*parts.G_alpha - ga) <= 1e-12);
    CHECK(max_abs_m(*parts.E1 - e1) <= 1e-12);
    CHECK(max_abs_m(*parts.E2 - e2) <= 1e-12);
    CHECK(max_abs_m(*parts.E3 - e2.transpose()) <= 1e-12);
    CHECK(max_abs_m(*parts.E4 - e4) <= 1e-12);
    CHECK(max_abs_m(v - expected) <= 1e-12 * std::max(1.0, max_abs_m(expected)));
    CHECK(max_abs_m(v - v.transpose()) <= 1e-10);
    for (int j = 0; j < 3; ++j) CHECK(v(j, j) >= 0);
}

TEST_CASE("PL and CL reduce to the known-weights sandwich when selection terms vanish") {
    const Toy t = make_toy();
    const Vector pi = expit(t.x * t.alpha);
    const Matrix known = vcov_known_weights(t.theta, t.z, t.d, pi, 25.0);
    const PlVarianceData data{t.z, t.d, t.x, t.xe, t.pi_ext, t.overlap};
    CHECK(max_abs_m(vcov_pl(t.theta, t.alpha, data, 25.0, true) - known) <= 1e-12 * max_abs_m(known));
    CHECK(max_abs_m(vcov_cl(t.theta, t.alpha, t.z, t.d, t.x, 25.0, true) - known) <= 1e-12 * max_abs_m(known));
}

TEST_CASE("CL sandwich components match per-unit assembly") {
    const Toy t = make_toy();
    const double big_n = 25.0;
    SandwichComponents parts;
    const Matrix v = vcov_cl(t.theta, t.alpha, t.z, t.d, t.x, big_n, false, &parts);
    Matrix g = Matrix::Zero(3, 3), h = Matrix::Zero(3, 3), ga = Matrix::Zero(3, 3), e1 = Matrix::Zero(3, 3);
    Matrix s2 = Matrix::Zero(3, 3), s4 = Matrix::Zero(3, 3);
    for (int i = 0; i < 10; ++i) {
        const Vector zi = t.z.row(i).transpose(), xi = t.x.row(i).transpose();
        const double mu = sig(t.theta.dot(zi)), p = sig(t.alpha.dot(xi));
        g -= mu * (1 - mu) / p * outer(zi, zi) / big_n;
        h -= (1 - p) / p * outer(xi, xi) / big_n;
        ga -= (1 - p) / p * (t.d[i] - mu) * outer(zi, xi) / big_n;
        e1 += std::pow((t.d[i] - mu) / p, 2) * outer(zi, zi) / big_n;
        s2 += (1 / p) * (1 / p - 1) * (t.d[i] - mu) * outer(xi, zi);
        s4 += (1 - p) / (p * p) * outer(xi, xi);
    }
    const Matrix a = ga * h.inverse();
    const Matrix e2 = a * s2 / big_n, e4 = a * s4 * a.transpose() / big_n;
    const Matrix e = e1 - e2 - e2.transpose() + e4;
    const Matrix expected = g.inverse() * e * g.inverse().transpose() / big_n;
    CHECK(max_abs_m(parts.G_theta - g) <= 1e-12);
    CHECK(max_abs_m(*parts.H_hat - h) <= 1e-12);
    CHECK(max_abs_m(*parts.G_alpha - ga) <= 1e-12);
    CHECK(max_abs_m(*parts.E1 - e1) <= 1e-12);
    CHECK(max_abs_m(*parts.E2 - e2) <= 1e-12);
    CHECK(max_abs_m(*parts.E4 - e4) <= 1e-12);
    CHECK(max_abs_m(v - expected) <= 1e-12 * std::max(1.0, max_abs_m(expected)));
}

TEST_CASE("singular bread and H are reported") {
    Matrix z(3, 2);
    z << 1, 2, 1, 2, 1, 2;
    const Vector d = (Vector(3) << 0, 1, 0).finished();
    try {
        vcov_known_weights(Vector::Zero(2), z, d, Vector::Ones(3), 3.0);
        FAIL("expected SingularBread");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SingularBread);
    }
    Matrix zz(3, 2);
    zz << 1, 0, 1, 1, 1, 2;
    try {
        vcov_cl(Vector::Zero(2), Vector::Zero(2), zz, d, z, 3.0);
        FAIL("expected SingularH");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SingularH);
    }
}
