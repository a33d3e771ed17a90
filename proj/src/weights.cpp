#include "ipwsel/weights.hpp"

#include "ipwsel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace ipwsel {

namespace {

void check_same_columns(const DesignMatrix& a, const DesignMatrix& b, const char* who) {
    if (a.column_names != b.column_names) {
        fail(ErrorKind::InvalidArgument,
             std::string(who) + ": internal and external designs must share columns");
    }
}

void check_rank(const DesignMatrix& d, const char* who, const char* which) {
    if (numerical_rank(d.rows) < d.p()) {
        std::ostringstream msg;
        msg << who << ": " << which << " design has rank " << numerical_rank(d.rows)
            << " < " << d.p() << " columns";
        fail(ErrorKind::RankDeficientDesign, msg.str());
    }
}

// Clamp to [kPiFloor, 1], counting clamp events.
void clamp_pi(Vector& pi, WeightSet& ws) {
    double low = 0, high = 0;
    for (Eigen::Index i = 0; i < pi.size(); ++i) {
        if (!(pi[i] >= kPiFloor)) {
            pi[i] = kPiFloor;
            ++low;
        } else if (pi[i] > 1.0) {
            pi[i] = 1.0;
            ++high;
        }
    }
    ws.diagnostics["clamped_low"] = low;
    ws.diagnostics["clamped_high"] = high;
}

void record(WeightSet& ws, const SolveReport& rep) {
    ws.diagnostics["iterations"] = rep.iterations;
    ws.diagnostics["residual_norm"] = rep.final_residual_norm;
}

}  // namespace

std::string_view to_string(WeightMethod m) noexcept {
    switch (m) {
        case WeightMethod::PL: return "PL";
        case WeightMethod::SR: return "SR";
        case WeightMethod::PS: return "PS";
        case WeightMethod::CL: return "CL";
        case WeightMethod::known: return "known";
    }
    return "unknown";
}

void PopulationSummary::validate() const {
    if (kind == Kind::joint_cells) {
        require(!cells.empty(), "PopulationSummary: no cells");
        double total = 0.0;
        for (const auto& [key, p] : cells) {
            require(key.size() == variables.size(),
                    "PopulationSummary: cell key length differs from variable count");
            require(std::isfinite(p) && p >= 0.0, "PopulationSummary: cell probability must be >= 0");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            std::ostringstream msg;
            msg << "PopulationSummary: cell probabilities sum to " << total;
            fail(ErrorKind::ProbabilitySumOutOfRange, msg.str());
        }
    } else {
        require(means.size() == static_cast<Eigen::Index>(variables.size()),
                "PopulationSummary: means and names differ in length");
        for (Eigen::Index i = 0; i < means.size(); ++i) {
            require(std::isfinite(means[i]), "PopulationSummary: non-finite marginal mean");
        }
        if (!N) fail(ErrorKind::MissingN, "PopulationSummary: marginal means need a population size N");
    }
    if (N) require(*N > 0.0 && std::isfinite(*N), "PopulationSummary: N must be positive");
}

WeightSet known_weights(const Vector& pi) {
    for (Eigen::Index i = 0; i < pi.size(); ++i) {
        require(pi[i] > 0.0 && pi[i] <= 1.0, "known_weights: pi must lie in (0,1]");
    }
    WeightSet ws;
    ws.pi_hat = pi;
    ws.method = WeightMethod::known;
    return ws;
}

Vector pl_residual(const DesignMatrix& internal_X, const DesignMatrix& external_X,
                   const Vector& pi_ext, const Vector& alpha) {
    const Vector inv = pi_ext.cwiseInverse();
    const double n_hat = inv.sum();
    const Vector mu = expit(external_X.rows * alpha);
    return (internal_X.rows.colwise().sum().transpose() -
            external_X.rows.transpose() * (inv.array() * mu.array()).matrix()) /
           n_hat;
}

WeightSet estimate_weights_pl(const DesignMatrix& internal_X, const DesignMatrix& external_X,
                              const Vector& pi_ext, const SolveConfig& cfg) {
    internal_X.validate();
    external_X.validate();
    check_same_columns(internal_X, external_X, "estimate_weights_pl");
    require(pi_ext.size() == external_X.n(), "estimate_weights_pl: pi_ext length differs from external rows");
    for (Eigen::Index i = 0; i < pi_ext.size(); ++i) {
        if (!(pi_ext[i] > 0.0 && pi_ext[i] <= 1.0)) {
            std::ostringstream msg;
            msg << "estimate_weights_pl: pi_ext[" << i << "] = " << pi_ext[i] << " outside (0,1]";
            fail(ErrorKind::InvalidArgument, msg.str());
        }
    }
    require(internal_X.n() > 0, "estimate_weights_pl: empty internal sample");
    check_rank(external_X, "estimate_weights_pl", "external");

    const Matrix& xe = external_X.rows;
    const Vector inv = pi_ext.cwiseInverse();
    const double n_hat = inv.sum();
    const Vector internal_sum = internal_X.rows.colwise().sum().transpose();

    auto residual = [&](const Vector& a) -> Vector {
        const Vector mu = expit(xe * a);
        return (internal_sum - xe.transpose() * (inv.array() * mu.array()).matrix()) / n_hat;
    };
    auto jacobian = [&](const Vector& a) -> Matrix {
        const Vector mu = expit(xe * a);
        const Vector v = (inv.array() * mu.array() * (1.0 - mu.array())).matrix();
        return -(xe.transpose() * v.asDiagonal() * xe) / n_hat;
    };

    Vector init = Vector::Zero(internal_X.p());
    if (internal_X.has_intercept) {
        const double frac = std::clamp(static_cast<double>(internal_X.n()) / n_hat, 1e-6, 1.0 - 1e-6);
        init[0] = logit(frac);
    }
    const SolveReport rep = solve_estimating_equation(residual, jacobian, init, cfg);
    if (!rep.converged) {
        std::ostringstream msg;
        msg << "estimate_weights_pl: no convergence after " << rep.iterations
            << " iterations (residual " << rep.final_residual_norm << ")";
        fail(ErrorKind::NonConvergence, msg.str());
    }

    WeightSet ws;
    ws.method = WeightMethod::PL;
    ws.alpha_hat = rep.solution;
    ws.pi_hat = expit(internal_X.rows * rep.solution);
    record(ws, rep);
    clamp_pi(ws.pi_hat, ws);
    return ws;
}

double sr_identity(double p_ext, double p11, double p10, double p01) {
    return p_ext * (p11 + p10) / (p11 + p01);
}

WeightSet estimate_weights_sr(const DesignMatrix& internal_X, const DesignMatrix& external_X,
                              const Vector& pi_ext, const std::vector<OverlapPair>& overlap,
                              const SolveConfig& cfg, SrFits* fits) {
    internal_X.validate();
    external_X.validate();
    check_same_columns(internal_X, external_X, "estimate_weights_sr");
    require(pi_ext.size() == external_X.n(), "estimate_weights_sr: pi_ext length differs from external rows");

    const Eigen::Index n_int = internal_X.n();
    const Eigen::Index n_ext = external_X.n();
    std::vector<char> int_in_both(static_cast<std::size_t>(n_int), 0);
    std::vector<char> ext_in_both(static_cast<std::size_t>(n_ext), 0);
    for (const OverlapPair& op : overlap) {
        require(op.internal >= 0 && op.internal < n_int && op.external >= 0 && op.external < n_ext,
                "estimate_weights_sr: overlap index out of range");
        auto& a = int_in_both[static_cast<std::size_t>(op.internal)];
        auto& b = ext_in_both[static_cast<std::size_t>(op.external)];
        require(!a && !b, "estimate_weights_sr: a unit appears in more than one overlap pair");
        a = b = 1;
    }

    // Union sample: every internal row, then external rows not already
    // present. Category 0 = in both, 1 = internal only, 2 = external only.
    const Eigen::Index n_ext_only = n_ext - static_cast<Eigen::Index>(overlap.size());
    DesignMatrix uni;
    uni.column_names = internal_X.column_names;
    uni.has_intercept = internal_X.has_intercept;
    uni.rows.resize(n_int + n_ext_only, internal_X.p());
    std::vector<int> category;
    category.reserve(static_cast<std::size_t>(uni.rows.rows()));
    uni.rows.topRows(n_int) = internal_X.rows;
    for (Eigen::Index i = 0; i < n_int; ++i) {
        category.push_back(int_in_both[static_cast<std::size_t>(i)] ? 0 : 1);
    }
    Eigen::Index r = n_int;
    for (Eigen::Index j = 0; j < n_ext; ++j) {
        if (ext_in_both[static_cast<std::size_t>(j)]) continue;
        uni.rows.row(r++) = external_X.rows.row(j);
        category.push_back(2);
    }

    FittedModel simplex = fit_simplex_regression(external_X, pi_ext, cfg);
    FittedModel multi = fit_multinomial(uni, category, cfg);

    const Vector p_ext = expit(internal_X.rows * simplex.coefficients);
    const Matrix probs = predict_multinomial(internal_X.rows, multi.coefficients);

    WeightSet ws;
    ws.method = WeightMethod::SR;
    ws.pi_hat.resize(n_int);
    for (Eigen::Index i = 0; i < n_int; ++i) {
        const double denom = probs(i, 0) + probs(i, 2);
        if (denom < 1e-12) {
            std::ostringstream msg;
            msg << "estimate_weights_sr: p11 + p01 = " << denom << " at internal unit " << i;
            fail(ErrorKind::DegenerateDenominator, msg.str());
        }
        ws.pi_hat[i] = sr_identity(p_ext[i], probs(i, 0), probs(i, 1), probs(i, 2));
    }
    ws.diagnostics["simplex_iterations"] = simplex.report.iterations;
    ws.diagnostics["multinomial_iterations"] = multi.report.iterations;
    ws.diagnostics["simplex_sigma2"] = simplex.sigma2.value_or(0.0);
    ws.diagnostics["overlap"] = static_cast<double>(overlap.size());
    clamp_pi(ws.pi_hat, ws);
    if (fits) *fits = SrFits{std::move(simplex), std::move(multi)};
    return ws;
}

WeightSet estimate_weights_ps(const std::vector<std::vector<long>>& internal_cells,
                              const PopulationSummary& summary) {
    require(summary.kind == PopulationSummary::Kind::joint_cells,
            "estimate_weights_ps: summary must hold joint cells");
    summary.validate();
    if (!summary.N) fail(ErrorKind::MissingN, "estimate_weights_ps: population size N is required");
    require(!internal_cells.empty(), "estimate_weights_ps: empty internal sample");
    const double big_n = *summary.N;

    std::map<std::vector<long>, double> counts;
    for (const auto& key : internal_cells) counts[key] += 1.0;

    double observed_mass = 0.0;
    for (const auto& [key, c] : counts) {
        const auto it = summary.cells.find(key);
        if (it == summary.cells.end() || it->second <= 0.0) {
            std::ostringstream msg;
            msg << "estimate_weights_ps: internal cell (";
            for (std::size_t k = 0; k < key.size(); ++k) msg << (k ? "," : "") << key[k];
            msg << ") has no positive population probability";
            fail(ErrorKind::UnmatchedCell, msg.str());
        }
        observed_mass += it->second;
    }

    // w_i proportional to P(cell) / (n_cell / n), scaled so the weights sum to N.
    WeightSet ws;
    ws.method = WeightMethod::PS;
    const Eigen::Index n = static_cast<Eigen::Index>(internal_cells.size());
    ws.pi_hat.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& key = internal_cells[static_cast<std::size_t>(i)];
        const double w = big_n * summary.cells.at(key) / (counts.at(key) * observed_mass);
        ws.pi_hat[i] = 1.0 / w;
    }
    ws.diagnostics["cells_observed"] = static_cast<double>(counts.size());
    ws.diagnostics["observed_population_mass"] = observed_mass;
    clamp_pi(ws.pi_hat, ws);
    return ws;
}

Vector calibration_totals(const DesignMatrix& design, const PopulationSummary& summary) {
    require(summary.kind == PopulationSummary::Kind::marginal_means,
            "calibration_totals: summary must hold marginal means");
    summary.validate();
    const double big_n = *summary.N;
    Vector t(design.p());
    for (Eigen::Index j = 0; j < design.p(); ++j) {
        if (j == 0 && design.has_intercept) {
            t[j] = big_n;
            continue;
        }
        const std::string& name = design.column_names[static_cast<std::size_t>(j)];
        const auto it = std::find(summary.variables.begin(), summary.variables.end(), name);
        if (it == summary.variables.end()) {
            fail(ErrorKind::MissingColumn, "calibration_totals: no population mean for column '" + name + "'");
        }
        t[j] = big_n * summary.means[it - summary.variables.begin()];
    }
    return t;
}

WeightSet estimate_weights_cl(const DesignMatrix& internal_X, const PopulationSummary& summary,
                              const SolveConfig& cfg) {
    internal_X.validate();
    const Vector totals = calibration_totals(internal_X, summary);
    const double big_n = *summary.N;
    require(internal_X.n() > 0, "estimate_weights_cl: empty internal sample");
    check_rank(internal_X, "estimate_weights_cl", "internal");

    const Matrix& x = internal_X.rows;
    // 1/pi = 1 + exp(-a'x) for logistic pi.
    auto residual = [&](const Vector& a) -> Vector {
        const Vector inv_pi = (1.0 + (-(x * a)).array().exp()).matrix();
        return (x.transpose() * inv_pi - totals) / big_n;
    };
    auto jacobian = [&](const Vector& a) -> Matrix {
        const Vector e = (-(x * a)).array().exp().matrix();
        return -(x.transpose() * e.asDiagonal() * x) / big_n;
    };

    Vector init = Vector::Zero(internal_X.p());
    if (internal_X.has_intercept) {
        const double frac = std::clamp(static_cast<double>(internal_X.n()) / big_n, 1e-6, 1.0 - 1e-6);
        init[0] = logit(frac);
    }

    SolveReport rep;
    try {
        rep = solve_estimating_equation(residual, jacobian, init, cfg);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::SingularJacobian) throw;
        fail(ErrorKind::InfeasibleTotals,
             std::string("estimate_weights_cl: totals unreachable (") + e.what() + ")");
    }
    if (!rep.converged) {
        std::ostringstream msg;
        if (rep.final_residual_norm > 1e-4) {
            msg << "estimate_weights_cl: no logistic weighting reproduces the population totals "
                << "(scaled residual " << rep.final_residual_norm << ")";
            fail(ErrorKind::InfeasibleTotals, msg.str());
        }
        msg << "estimate_weights_cl: no convergence after " << rep.iterations
            << " iterations (scaled residual " << rep.final_residual_norm << ")";
        fail(ErrorKind::NonConvergence, msg.str());
    }

    WeightSet ws;
    ws.method = WeightMethod::CL;
    ws.alpha_hat = rep.solution;
    ws.pi_hat = expit(x * rep.solution);
    record(ws, rep);
    clamp_pi(ws.pi_hat, ws);
    return ws;
}

double quantile(std::vector<double> values, double q) {
    require(!values.empty(), "quantile: empty input");
    require(q >= 0.0 && q <= 1.0, "quantile: probability outside [0,1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

Vector winsorize_weights(const Vector& w, double lower_q, double upper_q) {
    require(lower_q >= 0.0 && lower_q < upper_q && upper_q <= 1.0,
            "winsorize_weights: need 0 <= lower_q < upper_q <= 1");
    require(w.size() > 0, "winsorize_weights: empty input");
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        require(w[i] > 0.0 && std::isfinite(w[i]), "winsorize_weights: weights must be positive");
    }
    const std::vector<double> v(w.data(), w.data() + w.size());
    const double lo = quantile(v, lower_q);
    const double hi = quantile(v, upper_q);
    Vector out = w;
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], lo, hi);
    return out;
}

Vector augment_weights_with_outcome(const Vector& w0, const Vector& d, const Vector& p_pop,
                                    const Vector& p_int) {
    const Eigen::Index n = w0.size();
    require(d.size() == n && p_pop.size() == n && p_int.size() == n,
            "augment_weights_with_outcome: vectors must be aligned");
    Vector out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        require(w0[i] > 0.0, "augment_weights_with_outcome: w0 must be positive");
        require(d[i] == 0.0 || d[i] == 1.0, "augment_weights_with_outcome: outcome must be binary");
        require(p_pop[i] > 0.0 && p_pop[i] < 1.0 && p_int[i] > 0.0 && p_int[i] < 1.0,
                "augment_weights_with_outcome: probabilities must lie in (0,1)");
        const double num = d[i] == 1.0 ? p_pop[i] : 1.0 - p_pop[i];
        const double den = d[i] == 1.0 ? p_int[i] : 1.0 - p_int[i];
        out[i] = w0[i] * num / den;
    }
    return out;
}

CoarseningRule quantile_coarsening(const std::string& variable, const std::vector<double>& values,
                                   const std::vector<double>& probs) {
    CoarseningRule rule;
    rule.variable = variable;
    for (double q : probs) rule.cutoffs.push_back(quantile(values, q));
    for (std::size_t k = 1; k < rule.cutoffs.size(); ++k) {
        if (!(rule.cutoffs[k] > rule.cutoffs[k - 1])) {
            fail(ErrorKind::DegenerateCutoffs,
                 "coarsen: quantile cutoffs for '" + variable + "' are not strictly increasing");
        }
    }
    return rule;
}

std::vector<long> coarsen(const std::vector<double>& values, const CoarseningRule& rule) {
    require(!rule.cutoffs.empty(), "coarsen: no cutoffs");
    for (std::size_t k = 1; k < rule.cutoffs.size(); ++k) {
        if (!(rule.cutoffs[k] > rule.cutoffs[k - 1])) {
            fail(ErrorKind::DegenerateCutoffs,
                 "coarsen: cutoffs for '" + rule.variable + "' are not strictly increasing");
        }
    }
    std::vector<long> labels;
    labels.reserve(values.size());
    for (double v : values) {
        labels.push_back(static_cast<long>(
            std::upper_bound(rule.cutoffs.begin(), rule.cutoffs.end(), v) - rule.cutoffs.begin()));
    }
    return labels;
}

}  // namespace ipwsel
