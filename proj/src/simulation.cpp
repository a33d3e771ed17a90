#include "ipwsel/simulation.hpp"

#include "ipwsel/errors.hpp"
#include "ipwsel/rng.hpp"
#include "ipwsel/variance.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace ipwsel {

SimulationConfig SimulationConfig::standard(int dag, int setup) {
    if (dag < 1 || dag > 4) fail(ErrorKind::ConfigError, "dag must be 1, 2, 3 or 4");
    if (setup < 1 || setup > 3) fail(ErrorKind::ConfigError, "setup must be 1, 2 or 3");
    SimulationConfig c;
    c.dag = dag;
    c.setup = setup;
    c.N = setup == 2 ? 125000 : 50000;
    static constexpr std::array<std::array<double, 3>, 4> gammas{
        {{0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 1.0, 0.0}, {1.0, 1.0, 1.0}}};
    c.gamma = gammas[static_cast<std::size_t>(dag - 1)];
    c.alpha = {-0.8, dag >= 3 ? 0.7 : 0.0, 0.3, 1.0, 0.0, 0.0};
    if (setup == 3) {
        c.alpha[4] = dag >= 3 ? 0.5 : 0.0;
        c.alpha[5] = 0.4;
    }
    return c;
}

void SimulationConfig::validate() const {
    if (dag < 1 || dag > 4) fail(ErrorKind::ConfigError, "dag must be 1, 2, 3 or 4");
    if (setup < 1 || setup > 3) fail(ErrorKind::ConfigError, "setup must be 1, 2 or 3");
    if (N <= 0) fail(ErrorKind::ConfigError, "N must be positive");
    if (R < 1) fail(ErrorKind::ConfigError, "R must be at least 1");
    if (!(std::abs(z_correlation) < 1.0)) fail(ErrorKind::ConfigError, "z_correlation must lie in (-1,1)");
    if (!(setup2_scale > 0.0 && setup2_scale <= 1.0)) fail(ErrorKind::ConfigError, "setup2_scale must lie in (0,1]");
    if (!(external_scale > 0.0 && external_scale <= 1.0)) fail(ErrorKind::ConfigError, "external_scale must lie in (0,1]");
}

double internal_selection_probability(const SimulationConfig& cfg, double z2, double w, double d) {
    const auto& a = cfg.alpha;
    double eta = a[0] + a[1] * z2 + a[2] * w + a[3] * d;
    if (cfg.setup == 3) eta += a[4] * d * z2 + a[5] * d * w;
    const double p = expit(eta);
    return cfg.setup == 2 ? cfg.setup2_scale * p : p;
}

double external_selection_probability(const SimulationConfig& cfg, double z2, double w, double d) {
    const auto& v = cfg.nu;
    return cfg.external_scale * expit(v[0] + v[1] * z2 + v[2] * w + v[3] * d);
}

Population generate_population(const SimulationConfig& cfg, std::uint64_t replication_index) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(cfg.N);
    Population pop;
    for (auto* v : {&pop.z1, &pop.z2, &pop.w, &pop.d, &pop.s, &pop.s_ext, &pop.pi_true, &pop.pi_ext}) {
        v->resize(n);
    }
    RandomStream rng(cfg.seed, replication_index);
    const double rho = cfg.z_correlation;
    const double tail = std::sqrt(1.0 - rho * rho);
    const auto& th = cfg.theta;
    const auto& g = cfg.gamma;
    for (std::size_t i = 0; i < n; ++i) {
        // Lower Cholesky factor of [[1, rho], [rho, 1]].
        const double z1 = rng.normal();
        const double z2 = rho * z1 + tail * rng.normal();
        const double d = rng.bernoulli(expit(th[0] + th[1] * z1 + th[2] * z2)) ? 1.0 : 0.0;
        const double w = g[0] * d + g[1] * z1 + g[2] * z2 + rng.normal();
        const double pi = internal_selection_probability(cfg, z2, w, d);
        const double s = rng.bernoulli(pi) ? 1.0 : 0.0;
        const double pe = external_selection_probability(cfg, z2, w, d);
        const double se = rng.bernoulli(pe) ? 1.0 : 0.0;
        pop.z1[i] = z1;
        pop.z2[i] = z2;
        pop.d[i] = d;
        pop.w[i] = w;
        pop.pi_true[i] = pi;
        pop.s[i] = s;
        pop.pi_ext[i] = pe;
        pop.s_ext[i] = se;
    }
    return pop;
}

// ---------------------------------------------------------------------------
// r(Z1,Z2) offset estimation

namespace {

std::vector<double> equiprobable_cutoffs(const std::vector<double>& v, int bins) {
    std::vector<double> probs;
    for (int k = 1; k < bins; ++k) probs.push_back(static_cast<double>(k) / bins);
    return quantile_coarsening("z", v, probs).cutoffs;
}

}  // namespace

ROffsetEstimate estimate_r_offset_mc(const Population& pop, const RBinning& binning) {
    require(pop.size() > 0, "estimate_r_offset_mc: empty population");
    require(binning.min_per_class >= 1, "estimate_r_offset_mc: min_per_class must be positive");
    ROffsetEstimate est;
    est.z1_cutoffs = binning.z1_cutoffs ? *binning.z1_cutoffs : equiprobable_cutoffs(pop.z1, binning.z1_bins);
    est.z2_cutoffs = binning.z2_cutoffs ? *binning.z2_cutoffs : equiprobable_cutoffs(pop.z2, binning.z2_bins);
    const auto l1 = coarsen(pop.z1, CoarseningRule{"Z1", est.z1_cutoffs});
    const auto l2 = coarsen(pop.z2, CoarseningRule{"Z2", est.z2_cutoffs});
    const int k1 = static_cast<int>(est.z1_cutoffs.size()) + 1;
    const int k2 = static_cast<int>(est.z2_cutoffs.size()) + 1;

    std::vector<RBin> bins(static_cast<std::size_t>(k1 * k2));
    std::vector<double> sum_z1(bins.size(), 0.0), sum_z2(bins.size(), 0.0);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const std::size_t b = static_cast<std::size_t>(l1[i] * k2 + l2[i]);
        RBin& bin = bins[b];
        if (pop.d[i] == 1.0) {
            ++bin.n_d1;
            bin.s_d1 += pop.s[i] == 1.0;
        } else {
            ++bin.n_d0;
            bin.s_d0 += pop.s[i] == 1.0;
        }
        sum_z1[b] += pop.z1[i];
        sum_z2[b] += pop.z2[i];
    }
    for (int a = 0; a < k1; ++a) {
        for (int c = 0; c < k2; ++c) {
            const std::size_t b = static_cast<std::size_t>(a * k2 + c);
            RBin& bin = bins[b];
            bin.z1_bin = a;
            bin.z2_bin = c;
            const long n = bin.n_d1 + bin.n_d0;
            if (n > 0) {
                bin.mean_z1 = sum_z1[b] / static_cast<double>(n);
                bin.mean_z2 = sum_z2[b] / static_cast<double>(n);
            }
            if (bin.n_d1 < binning.min_per_class || bin.n_d0 < binning.min_per_class ||
                bin.s_d1 == 0 || bin.s_d0 == 0) {
                bin.sparse = true;
                std::ostringstream msg;
                msg << "SparseBin: bin (" << a << "," << c << ") has " << bin.n_d1 << " D=1 and "
                    << bin.n_d0 << " D=0 units; skipped";
                est.warnings.push_back(msg.str());
                continue;
            }
            const double p1 = static_cast<double>(bin.s_d1) / static_cast<double>(bin.n_d1);
            const double p0 = static_cast<double>(bin.s_d0) / static_cast<double>(bin.n_d0);
            bin.log_r = std::log(p1) - std::log(p0);
            bin.se = std::sqrt((1.0 - p1) / (static_cast<double>(bin.n_d1) * p1) +
                               (1.0 - p0) / (static_cast<double>(bin.n_d0) * p0));
        }
    }
    est.bins = std::move(bins);
    if (std::all_of(est.bins.begin(), est.bins.end(), [](const RBin& b) { return b.sparse; })) {
        fail(ErrorKind::SparseBin, "estimate_r_offset_mc: every bin is sparse");
    }
    return est;
}

double chi_square_upper_tail(double statistic, int df) {
    require(df >= 1, "chi_square_upper_tail: df must be positive");
    if (statistic <= 0.0) return 1.0;
    const double k = df;
    const double v = 2.0 / (9.0 * k);
    const double z = (std::cbrt(statistic / k) - (1.0 - v)) / std::sqrt(v);
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

HomogeneityTest r_constancy_test(const ROffsetEstimate& est) {
    double sw = 0.0, swl = 0.0;
    int used = 0;
    for (const RBin& b : est.bins) {
        if (b.sparse || b.se <= 0.0) continue;
        const double w = 1.0 / (b.se * b.se);
        sw += w;
        swl += w * b.log_r;
        ++used;
    }
    require(used >= 2, "r_constancy_test: need at least two usable bins");
    const double mean = swl / sw;
    HomogeneityTest t;
    for (const RBin& b : est.bins) {
        if (b.sparse || b.se <= 0.0) continue;
        const double z = (b.log_r - mean) / b.se;
        t.statistic += z * z;
    }
    t.df = used - 1;
    t.p_value = chi_square_upper_tail(t.statistic, t.df);
    return t;
}

SlopeTest r_within_stratum_slope(const ROffsetEstimate& est) {
    std::map<int, int> strata;
    std::vector<const RBin*> used;
    for (const RBin& b : est.bins) {
        if (b.sparse || b.se <= 0.0) continue;
        strata.emplace(b.z1_bin, 0);
        used.push_back(&b);
    }
    int col = 0;
    for (auto& [k, c] : strata) c = col++;
    const Eigen::Index p = col + 2;
    require(static_cast<Eigen::Index>(used.size()) > p, "r_within_stratum_slope: too few usable bins");
    Matrix x = Matrix::Zero(static_cast<Eigen::Index>(used.size()), p);
    Vector y(x.rows()), w(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const RBin& b = *used[static_cast<std::size_t>(i)];
        x(i, strata.at(b.z1_bin)) = 1.0;
        x(i, col) = b.mean_z2;
        x(i, col + 1) = b.mean_z1;
        y[i] = b.log_r;
        w[i] = 1.0 / (b.se * b.se);
    }
    const Matrix xtwx = x.transpose() * w.asDiagonal() * x;
    PivotedSolver lu(xtwx);
    require(!lu.singular(), "r_within_stratum_slope: singular normal equations");
    const Matrix cov = lu.inverse();
    const Vector beta = cov * (x.transpose() * (w.array() * y.array()).matrix());
    SlopeTest t;
    t.slope = beta[col];
    t.se = std::sqrt(cov(col, col));
    t.t = t.slope / t.se;
    return t;
}

// ---------------------------------------------------------------------------
// Replications

std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::unweighted: return "unweighted";
        case Method::PL: return "pl";
        case Method::SR: return "sr";
        case Method::PS: return "ps";
        case Method::CL: return "cl";
        case Method::oracle: return "oracle";
    }
    return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
    for (Method m : {Method::unweighted, Method::PL, Method::SR, Method::PS, Method::CL, Method::oracle}) {
        if (name == to_string(m)) return m;
    }
    return std::nullopt;
}

DesignMatrix disease_design(const Population& pop, const std::vector<Eigen::Index>& rows) {
    Matrix cov(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto i = static_cast<std::size_t>(rows[k]);
        cov(static_cast<Eigen::Index>(k), 0) = pop.z1[i];
        cov(static_cast<Eigen::Index>(k), 1) = pop.z2[i];
    }
    return DesignMatrix::with_intercept(cov, {"Z1", "Z2"});
}

DesignMatrix selection_design(const Population& pop, const std::vector<Eigen::Index>& rows) {
    Matrix cov(static_cast<Eigen::Index>(rows.size()), 3);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto i = static_cast<std::size_t>(rows[k]);
        cov(static_cast<Eigen::Index>(k), 0) = pop.d[i];
        cov(static_cast<Eigen::Index>(k), 1) = pop.z2[i];
        cov(static_cast<Eigen::Index>(k), 2) = pop.w[i];
    }
    return DesignMatrix::with_intercept(cov, {"D", "Z2", "W"});
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

ReplicationResult analyze_population(const SimulationConfig& cfg, const Population& pop,
                                     const std::vector<Method>& methods, const SolveConfig& solve) {
    require(!methods.empty(), "analyze_population: no methods requested");
    std::vector<Eigen::Index> int_rows, ext_rows;
    std::vector<OverlapPair> overlap;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const bool s = pop.s[i] == 1.0, se = pop.s_ext[i] == 1.0;
        if (s && se) {
            overlap.push_back({static_cast<Eigen::Index>(int_rows.size()),
                               static_cast<Eigen::Index>(ext_rows.size())});
        }
        if (s) int_rows.push_back(static_cast<Eigen::Index>(i));
        if (se) ext_rows.push_back(static_cast<Eigen::Index>(i));
    }
    const double big_n = static_cast<double>(pop.size());
    const DesignMatrix z = disease_design(pop, int_rows);
    const DesignMatrix x_int = selection_design(pop, int_rows);
    const DesignMatrix x_ext = selection_design(pop, ext_rows);
    Vector d(static_cast<Eigen::Index>(int_rows.size()));
    Vector pi_true(d.size());
    for (std::size_t k = 0; k < int_rows.size(); ++k) {
        d[static_cast<Eigen::Index>(k)] = pop.d[static_cast<std::size_t>(int_rows[k])];
        pi_true[static_cast<Eigen::Index>(k)] = pop.pi_true[static_cast<std::size_t>(int_rows[k])];
    }
    Vector pi_ext(static_cast<Eigen::Index>(ext_rows.size()));
    for (std::size_t k = 0; k < ext_rows.size(); ++k) {
        pi_ext[static_cast<Eigen::Index>(k)] = pop.pi_ext[static_cast<std::size_t>(ext_rows[k])];
    }

    ReplicationResult out;
    for (Method m : methods) {
        MethodFit fit;
        fit.method = m;
        try {
            switch (m) {
                case Method::unweighted:
                    fit.weights = known_weights(Vector::Ones(d.size()));
                    break;
                case Method::oracle:
                    fit.weights = known_weights(pi_true);
                    break;
                case Method::PL:
                    fit.weights = estimate_weights_pl(x_int, x_ext, pi_ext, solve);
                    break;
                case Method::SR:
                    fit.weights = estimate_weights_sr(x_int, x_ext, pi_ext, overlap, solve);
                    break;
                case Method::PS: {
                    const CoarseningRule rz = quantile_coarsening("Z2", pop.z2);
                    const CoarseningRule rw = quantile_coarsening("W", pop.w);
                    const auto cz = coarsen(pop.z2, rz);
                    const auto cw = coarsen(pop.w, rw);
                    PopulationSummary summary;
                    summary.variables = {"D", "Z2", "W"};
                    summary.N = big_n;
                    for (std::size_t i = 0; i < pop.size(); ++i) {
                        summary.cells[{static_cast<long>(pop.d[i]), cz[i], cw[i]}] += 1.0;
                    }
                    for (auto& kv : summary.cells) kv.second /= big_n;
                    std::vector<std::vector<long>> keys;
                    keys.reserve(int_rows.size());
                    for (Eigen::Index r : int_rows) {
                        const auto i = static_cast<std::size_t>(r);
                        keys.push_back({static_cast<long>(pop.d[i]), cz[i], cw[i]});
                    }
                    fit.weights = estimate_weights_ps(keys, summary);
                    break;
                }
                case Method::CL: {
                    PopulationSummary summary;
                    summary.kind = PopulationSummary::Kind::marginal_means;
                    summary.variables = {"D", "Z2", "W"};
                    summary.means = Vector(3);
                    summary.means << mean_of(pop.d), mean_of(pop.z2), mean_of(pop.w);
                    summary.N = big_n;
                    fit.weights = estimate_weights_cl(x_int, summary, solve);
                    break;
                }
            }
            const FittedModel fm = fit_weighted_logistic(z, d, fit.weights.pi_hat, solve);
            fit.theta = fm.coefficients;
            if (m == Method::PL) {
                const PlVarianceData data{z.rows, d, x_int.rows, x_ext.rows, pi_ext, overlap};
                fit.vcov = vcov_pl(fit.theta, *fit.weights.alpha_hat, data, big_n);
            } else if (m == Method::CL) {
                fit.vcov = vcov_cl(fit.theta, *fit.weights.alpha_hat, z.rows, d, x_int.rows, big_n);
            } else {
                fit.vcov = vcov_known_weights(fit.theta, z.rows, d, fit.weights.pi_hat, big_n);
            }
            fit.ok = true;
        } catch (const Error& e) {
            fit.ok = false;
            fit.error_kind = std::string(to_string(e.kind()));
            fit.error_message = e.what();
        }
        out.fits.push_back(std::move(fit));
    }
    (void)cfg;
    return out;
}

ReplicationResult run_replication(const SimulationConfig& cfg, std::uint64_t replication_index,
                                  const std::vector<Method>& methods, const SolveConfig& solve) {
    const Population pop = generate_population(cfg, replication_index);
    ReplicationResult r = analyze_population(cfg, pop, methods, solve);
    r.index = replication_index;
    return r;
}

// ---------------------------------------------------------------------------
// Study aggregation

const MetricRow& StudyResult::row(Method m, int parameter) const {
    for (const MetricRow& r : rows) {
        if (r.method == m && r.parameter == parameter) return r;
    }
    fail(ErrorKind::InvalidArgument, "StudyResult: no row for requested method/parameter");
}

StudyResult summarize_study(const SimulationConfig& cfg, const std::vector<Method>& methods,
                            const std::vector<ReplicationResult>& reps) {
    require(!reps.empty(), "summarize_study: no replications");
    const auto find = [&](Method m) {
        const auto it = std::find(methods.begin(), methods.end(), m);
        require(it != methods.end(), "summarize_study: method missing");
        return static_cast<std::size_t>(it - methods.begin());
    };
    const std::size_t unw = find(Method::unweighted);
    const int total = static_cast<int>(reps.size());

    StudyResult res;
    res.config = cfg;
    res.methods = methods;

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        int ok = 0;
        for (const auto& r : reps) ok += r.fits.at(mi).ok;
        const int failed = total - ok;
        if (ok == 0 || static_cast<double>(failed) > 0.1 * total) {
            std::ostringstream msg;
            msg << "method " << to_string(methods[mi]) << " failed in " << failed << " of " << total
                << " replications";
            for (const auto& r : reps) {
                if (!r.fits.at(mi).ok) {
                    msg << " (first failure: replication " << r.index << ", "
                        << r.fits.at(mi).error_kind << ": " << r.fits.at(mi).error_message << ")";
                    break;
                }
            }
            fail(ErrorKind::AllReplicationsFailed, msg.str());
        }
    }

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        Vector alpha_sum;
        double clamps = 0.0;
        for (int j = 0; j < 3; ++j) {
            MetricRow row;
            row.method = methods[mi];
            row.parameter = j;
            row.truth = cfg.theta[static_cast<std::size_t>(j)];
            double sum = 0.0, sum_sq_err = 0.0, sum_var = 0.0, covered = 0.0;
            std::vector<double> est;
            for (const auto& r : reps) {
                const MethodFit& f = r.fits[mi];
                if (!f.ok) continue;
                const double t = f.theta[j];
                const double v = f.vcov(j, j);
                est.push_back(t);
                sum += t;
                sum_sq_err += (t - row.truth) * (t - row.truth);
                sum_var += v;
                Vector tj(1);
                tj << t;
                const auto ci = wald_ci(tj, Matrix::Constant(1, 1, std::max(v, 0.0)))[0];
                covered += (ci.first <= row.truth && row.truth <= ci.second) ? 1.0 : 0.0;
            }
            const double n = static_cast<double>(est.size());
            row.n_ok = static_cast<int>(est.size());
            row.failures = total - row.n_ok;
            row.mean_estimate = sum / n;
            row.bias = row.mean_estimate - row.truth;
            row.relative_bias_pct = 100.0 * std::abs(row.bias) / std::abs(row.truth);
            row.mse = sum_sq_err / n;
            row.coverage = covered / n;
            row.mean_est_var = sum_var / n;
            double ss = 0.0;
            for (double t : est) ss += (t - row.mean_estimate) * (t - row.mean_estimate);
            row.mc_var = est.size() >= 2 ? ss / (n - 1.0) : 0.0;
            res.rows.push_back(row);
        }
        for (const auto& r : reps) {
            const MethodFit& f = r.fits[mi];
            if (!f.ok) continue;
            for (const char* key : {"clamped_low", "clamped_high"}) {
                const auto it = f.weights.diagnostics.find(key);
                if (it != f.weights.diagnostics.end()) clamps += it->second;
            }
            if (f.weights.alpha_hat) {
                if (alpha_sum.size() == 0) alpha_sum = Vector::Zero(f.weights.alpha_hat->size());
                alpha_sum += *f.weights.alpha_hat;
            }
        }
        if (alpha_sum.size() > 0) {
            int ok = 0;
            for (const auto& r : reps) ok += r.fits[mi].ok;
            res.mean_alpha.emplace_back(methods[mi], alpha_sum / ok);
        }
        res.clamp_events.emplace_back(methods[mi], clamps);
    }

    for (MetricRow& row : res.rows) {
        const double ref = res.rows[unw * 3 + static_cast<std::size_t>(row.parameter)].mse;
        if (ref == 0.0) {
            row.rmse_relative = row.mse == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
        } else {
            row.rmse_relative = row.mse / ref;
        }
    }
    return res;
}

StudyResult run_study(const SimulationConfig& cfg, std::vector<Method> methods, int threads,
                      const SolveConfig& solve) {
    cfg.validate();
    require(threads >= 1, "run_study: threads must be >= 1");
    require(!methods.empty(), "run_study: no methods requested");
    if (std::find(methods.begin(), methods.end(), Method::unweighted) == methods.end()) {
        methods.insert(methods.begin(), Method::unweighted);
    }
    const auto total = static_cast<std::size_t>(cfg.R);
    std::vector<ReplicationResult> reps(total);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t r = next.fetch_add(1);
            if (r >= total) return;
            try {
                reps[r] = run_replication(cfg, r, methods, solve);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(total);
                return;
            }
        }
    };
    const int n_threads = std::min<int>(threads, cfg.R);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);
    return summarize_study(cfg, methods, reps);
}

}  // namespace ipwsel
