#include <doctest.h>

#include "ipwsel/errors.hpp"
#include "ipwsel/glm.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace ipwsel;

namespace {

DesignMatrix one_covariate(const std::vector<double>& x) {
    Matrix m(static_cast<Eigen::Index>(x.size()), 1);
    for (std::size_t i = 0; i < x.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = x[i];
    return DesignMatrix::with_intercept(m, {"x"});
}

DesignMatrix intercept_only(Eigen::Index n) {
    return DesignMatrix::with_intercept(Matrix(n, 0), {});
}

Vector from(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("intercept-only balanced outcome gives zero") {
    const FittedModel fm =
        fit_weighted_logistic(intercept_only(4), from({1, 0, 1, 0}), Vector::Ones(4));
    CHECK(std::abs(fm.coefficients[0]) < 1e-12);
    CHECK(fm.model_kind == ModelKind::logistic);
    CHECK_FALSE(fm.vcov.has_value());
}

TEST_CASE("weighted logistic matches grid-search maximizer of the weighted likelihood") {
    const std::vector<double> x{-1.5, -1.0, -0.3, 0.0, 0.4, 0.9, 1.3, 2.0};
    const std::vector<double> d{0, 1, 0, 0, 1, 0, 1, 1};
    const std::vector<double> pi{0.9, 0.2, 0.5, 0.7, 0.3, 0.8, 0.4, 0.6};
    double best = -1e300, ba = 0, bb = 0;
    for (int i = 0; i <= 10000; ++i) {
        const double a = -5.0 + 1e-3 * i;
        for (int k = 0; k <= 10000; ++k) {
            const double b = -5.0 + 1e-3 * k;
            double ll = 0;
            for (std::size_t u = 0; u < x.size(); ++u) {
                const double eta = a + b * x[u];
                ll += (d[u] * eta - std::log1p(std::exp(eta))) / pi[u];
            }
            if (ll > best) {
                best = ll;
                ba = a;
                bb = b;
            }
        }
    }
    const FittedModel fm = fit_weighted_logistic(one_covariate(x), from(d), from(pi));
    CHECK(std::abs(fm.coefficients[0] - ba) <= 1e-3);
    CHECK(std::abs(fm.coefficients[1] - bb) <= 1e-3);
    const Vector w = from(pi).cwiseInverse();
    CHECK(max_abs(logistic_score(one_covariate(x), from(d), w, fm.coefficients)) <= 1e-8);
}

TEST_CASE("common scaling of pi leaves the coefficients unchanged") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.05, 1.0);
    const Eigen::Index n = 300;
    Matrix cov(n, 2);
    Vector d(n), pi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        cov(i, 0) = nd(gen);
        cov(i, 1) = nd(gen);
        d[i] = ud(gen) < expit(-0.5 + cov(i, 0) - 0.5 * cov(i, 1)) ? 1.0 : 0.0;
        pi[i] = ud(gen);
    }
    const DesignMatrix z = DesignMatrix::with_intercept(cov, {"a", "b"});
    const Vector base = fit_weighted_logistic(z, d, pi).coefficients;
    for (double c : {1.0, 0.5, 0.05}) {
        const Vector scaled = fit_weighted_logistic(z, d, Vector(c * pi)).coefficients;
        CHECK(max_abs(scaled - base) <= 1e-12);
    }
    const Vector flat = fit_weighted_logistic(z, d, Vector::Constant(n, 0.3)).coefficients;
    const Vector naive = fit_weighted_logistic(z, d, Vector::Ones(n)).coefficients;
    CHECK(max_abs(flat - naive) <= 1e-12);
}

TEST_CASE("logistic error paths") {
    CHECK(kind_of([] { fit_weighted_logistic(intercept_only(3), from({1, 1, 1}), Vector::Ones(3)); }) ==
          ErrorKind::DegenerateOutcome);
    CHECK(kind_of([] {
              fit_weighted_logistic(one_covariate({-2, -1, 1, 2}), from({0, 0, 1, 1}), Vector::Ones(4));
          }) == ErrorKind::Separation);
    CHECK(kind_of([] { fit_weighted_logistic(intercept_only(2), from({1, 0}), from({0.0, 1.0})); }) ==
          ErrorKind::InvalidArgument);
    CHECK(kind_of([] { fit_weighted_logistic(intercept_only(2), from({1, 0.5}), Vector::Ones(2)); }) ==
          ErrorKind::InvalidArgument);
}

TEST_CASE("multinomial intercept-only reproduces empirical frequencies") {
    std::vector<int> cat{0, 0, 0, 0, 0, 1, 1, 1, 2, 2};
    const FittedModel fm = fit_multinomial(intercept_only(10), cat);
    const Matrix pr = predict_multinomial(intercept_only(10).rows, fm.coefficients);
    for (Eigen::Index i = 0; i < 10; ++i) {
        CHECK(pr(i, 0) == doctest::Approx(0.5).epsilon(1e-10));
        CHECK(pr(i, 1) == doctest::Approx(0.3).epsilon(1e-10));
        CHECK(pr(i, 2) == doctest::Approx(0.2).epsilon(1e-10));
    }
}

TEST_CASE("multinomial coefficients match coarse-to-fine grid search") {
    // x = 0: categories (3,2,1); x = 1: (2,1,3)
    const std::vector<double> x{0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
    const std::vector<int> cat{0, 0, 0, 1, 1, 2, 0, 0, 1, 2, 2, 2};
    const DesignMatrix design = one_covariate(x);
    auto ll = [&](const Vector& b) { return multinomial_loglik(design.rows, cat, b); };

    Vector center = Vector::Zero(4);
    double step = 0.25;
    int half = 20;
    for (int level = 0; level < 5; ++level) {
        Vector best = center;
        double best_ll = ll(center);
        Vector b(4);
        for (int i0 = -half; i0 <= half; ++i0)
            for (int i1 = -half; i1 <= half; ++i1)
                for (int i2 = -half; i2 <= half; ++i2)
                    for (int i3 = -half; i3 <= half; ++i3) {
                        b << center[0] + i0 * step, center[1] + i1 * step, center[2] + i2 * step,
                            center[3] + i3 * step;
                        const double v = ll(b);
                        if (v > best_ll) {
                            best_ll = v;
                            best = b;
                        }
                    }
        center = best;
        step /= 10.0;
        half = 10;
    }
    const FittedModel fm = fit_multinomial(design, cat);
    CHECK(max_abs(fm.coefficients - center) <= 1e-3);
    // Saturated model: closed-form cell log-odds.
    CHECK(fm.coefficients[0] == doctest::Approx(std::log(2.0 / 3.0)).epsilon(1e-8));
    CHECK(fm.coefficients[2] == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-8));
    CHECK(fm.coefficients[0] + fm.coefficients[1] == doctest::Approx(std::log(0.5)).epsilon(1e-8));
    CHECK(fm.coefficients[2] + fm.coefficients[3] == doctest::Approx(std::log(1.5)).epsilon(1e-8));
}

TEST_CASE("multinomial probabilities sum to one") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    const Eigen::Index n = 200;
    Matrix cov(n, 2);
    std::vector<int> cat(static_cast<std::size_t>(n));
    std::uniform_real_distribution<double> ud;
    for (Eigen::Index i = 0; i < n; ++i) {
        cov(i, 0) = nd(gen);
        cov(i, 1) = nd(gen);
        const double u = ud(gen);
        cat[static_cast<std::size_t>(i)] = u < 0.4 ? 0 : (u < 0.7 + 0.1 * std::tanh(cov(i, 0)) ? 1 : 2);
    }
    const DesignMatrix design = DesignMatrix::with_intercept(cov, {"a", "b"});
    const FittedModel fm = fit_multinomial(design, cat);
    const Matrix pr = predict_multinomial(design.rows, fm.coefficients);
    for (Eigen::Index i = 0; i < n; ++i) CHECK(std::abs(pr.row(i).sum() - 1.0) <= 1e-12);
    CHECK(kind_of([&] { fit_multinomial(intercept_only(3), {0, 1, 1}); }) == ErrorKind::EmptyCategory);
}

TEST_CASE("simplex regression on a constant response") {
    const FittedModel fm = fit_simplex_regression(intercept_only(5), Vector::Constant(5, 0.75));
    CHECK(fm.coefficients[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    REQUIRE(fm.sigma2.has_value());
    CHECK(*fm.sigma2 == doctest::Approx(0.0).epsilon(1e-20));
    CHECK(simplex_unit_deviance(0.75, expit(fm.coefficients[0])) < 1e-20);
    CHECK(kind_of([] { fit_simplex_regression(intercept_only(2), from({0.5, 1.0})); }) ==
          ErrorKind::ResponseOnBoundary);
}

TEST_CASE("simplex density integrates to one") {
    for (double mu : {0.2, 0.5, 0.8}) {
        for (double s2 : {0.5, 2.0}) {
            const int m = 200000;
            double acc = 0.0;
            for (int i = 0; i < m; ++i) {
                const double y = (i + 0.5) / m;
                acc += std::exp(simplex_log_density(y, mu, s2));
            }
            CHECK(acc / m == doctest::Approx(1.0).epsilon(1e-4));
        }
    }
}

namespace {

// Accept-reject draw from the simplex density with a uniform proposal.
double draw_simplex(double mu, double sigma2, std::mt19937_64& gen) {
    const int grid = 2000;
    double max_log = -1e300;
    for (int i = 0; i < grid; ++i) {
        max_log = std::max(max_log, simplex_log_density((i + 0.5) / grid, mu, sigma2));
    }
    const double bound = max_log + std::log(1.5);
    std::uniform_real_distribution<double> ud;
    for (;;) {
        const double y = ud(gen);
        if (y <= 0.0 || y >= 1.0) continue;
        if (std::log(ud(gen)) <= simplex_log_density(y, mu, sigma2) - bound) return y;
    }
}

}  // namespace

TEST_CASE("simplex regression recovers the mean model of sampled data") {
    const double d0 = -0.5, d1 = 1.0, sigma2 = 0.5;
    const Eigen::Index n = 2000;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 gen(seed);
        std::normal_distribution<double> nd;
        Matrix cov(n, 1);
        Vector y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            cov(i, 0) = nd(gen);
            y[i] = draw_simplex(expit(d0 + d1 * cov(i, 0)), sigma2, gen);
        }
        const DesignMatrix design = DesignMatrix::with_intercept(cov, {"x"});
        const FittedModel fm = fit_simplex_regression(design, y);
        CHECK(std::abs(fm.coefficients[0] - d0) < 0.1);
        CHECK(std::abs(fm.coefficients[1] - d1) < 0.1);
        CHECK(std::abs(*fm.sigma2 - sigma2) < 0.1);

        // The fit minimizes total deviance: any small perturbation increases it.
        auto total = [&](const Vector& delta) {
            const Vector mu = expit(design.rows * delta);
            double s = 0;
            for (Eigen::Index i = 0; i < n; ++i) s += simplex_unit_deviance(y[i], mu[i]);
            return s;
        };
        const double at = total(fm.coefficients);
        for (int k = 0; k < 2; ++k) {
            for (double h : {-1e-4, 1e-4}) {
                Vector p = fm.coefficients;
                p[k] += h;
                CHECK(total(p) > at);
            }
        }
    }
}
