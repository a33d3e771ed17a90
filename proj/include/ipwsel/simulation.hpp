#pragma once

#include "ipwsel/glm.hpp"
#include "ipwsel/weights.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ipwsel {

struct SimulationConfig {
    int dag = 1;
    int setup = 1;
    long N = 50000;
    std::array<double, 3> theta{-2.0, 0.5, 0.5};
    std::array<double, 3> gamma{0.0, 0.0, 0.0};
    // alpha_0..alpha_3 main effects, alpha_4 (D*Z2) and alpha_5 (D*W) used in setup 3.
    std::array<double, 6> alpha{-0.8, 0.0, 0.3, 1.0, 0.0, 0.4};
    double setup2_scale = 0.4;
    std::array<double, 4> nu{-0.6, 1.2, 0.4, 0.5};
    double external_scale = 0.75;
    double z_correlation = 0.5;
    std::uint64_t seed = 1;
    int R = 500;

    // Parameter table for a DAG (1-4) and setup (1-3).
    static SimulationConfig standard(int dag, int setup);
    void validate() const;
};

struct Population {
    std::vector<double> z1, z2, w, d, s, s_ext, pi_true, pi_ext;
    std::size_t size() const noexcept { return z1.size(); }
};

double internal_selection_probability(const SimulationConfig& cfg, double z2, double w, double d);
double external_selection_probability(const SimulationConfig& cfg, double z2, double w, double d);

Population generate_population(const SimulationConfig& cfg, std::uint64_t replication_index);

// Binned estimate of log r(Z1,Z2) = log P(S=1|D=1,bin) - log P(S=1|D=0,bin).
struct RBinning {
    int z1_bins = 5;
    int z2_bins = 5;
    // Explicit cutoffs override the equiprobable marginal quantile grid.
    std::optional<std::vector<double>> z1_cutoffs;
    std::optional<std::vector<double>> z2_cutoffs;
    long min_per_class = 50;
};

struct RBin {
    int z1_bin = 0;
    int z2_bin = 0;
    long n_d1 = 0, n_d0 = 0;
    long s_d1 = 0, s_d0 = 0;
    double mean_z1 = 0.0, mean_z2 = 0.0;
    double log_r = 0.0;
    double se = 0.0;  // delta-method standard error
    bool sparse = false;
};

struct ROffsetEstimate {
    std::vector<RBin> bins;
    std::vector<double> z1_cutoffs, z2_cutoffs;
    std::vector<std::string> warnings;  // one per sparse bin
};

ROffsetEstimate estimate_r_offset_mc(const Population& pop, const RBinning& binning = {});

struct HomogeneityTest {
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
};

// Chi-square test that all non-sparse binned log r values share one mean
// (p-value by the Wilson-Hilferty approximation).
HomogeneityTest r_constancy_test(const ROffsetEstimate& est);

struct SlopeTest {
    double slope = 0.0;
    double se = 0.0;
    double t = 0.0;
};

// Weighted least squares of binned log r on the bin mean Z2 with a separate
// intercept per Z1 stratum and a common adjustment for the bin mean Z1.
SlopeTest r_within_stratum_slope(const ROffsetEstimate& est);

double chi_square_upper_tail(double statistic, int df);

enum class Method { unweighted, PL, SR, PS, CL, oracle };

std::string_view to_string(Method m) noexcept;
std::optional<Method> parse_method(std::string_view name);

struct MethodFit {
    Method method = Method::unweighted;
    bool ok = false;
    std::string error_kind;
    std::string error_message;
    Vector theta;
    Matrix vcov;
    WeightSet weights;
};

struct ReplicationResult {
    std::uint64_t index = 0;
    std::vector<MethodFit> fits;  // in the order requested
};

// Analysis designs built from a population, shared by the replication runner
// and the command-line tools.
DesignMatrix disease_design(const Population& pop, const std::vector<Eigen::Index>& rows);
DesignMatrix selection_design(const Population& pop, const std::vector<Eigen::Index>& rows);

ReplicationResult run_replication(const SimulationConfig& cfg, std::uint64_t replication_index,
                                  const std::vector<Method>& methods,
                                  const SolveConfig& solve = {});

// Fits every requested method on an already generated population.
ReplicationResult analyze_population(const SimulationConfig& cfg, const Population& pop,
                                     const std::vector<Method>& methods,
                                     const SolveConfig& solve = {});

struct MetricRow {
    Method method = Method::unweighted;
    int parameter = 0;  // index into theta
    double truth = 0.0;
    double mean_estimate = 0.0;
    double bias = 0.0;
    double relative_bias_pct = 0.0;
    double mse = 0.0;
    double rmse_relative = 0.0;
    double coverage = 0.0;
    double mean_est_var = 0.0;
    double mc_var = 0.0;
    int n_ok = 0;
    int failures = 0;
};

struct StudyResult {
    SimulationConfig config;
    std::vector<Method> methods;
    std::vector<MetricRow> rows;
    // Mean alpha-hat over successful replications, PL and CL only.
    std::vector<std::pair<Method, Vector>> mean_alpha;
    // Total clamp events per method over all replications.
    std::vector<std::pair<Method, double>> clamp_events;

    const MetricRow& row(Method m, int parameter) const;
};

// Aggregates replications (ordered by index). The unweighted method must be
// among the fits; rmse_relative is relative to it.
StudyResult summarize_study(const SimulationConfig& cfg, const std::vector<Method>& methods,
                            const std::vector<ReplicationResult>& reps);

// Runs cfg.R replications on `threads` worker threads. The unweighted method
// is added if missing. Output is independent of `threads`.
StudyResult run_study(const SimulationConfig& cfg, std::vector<Method> methods, int threads = 1,
                      const SolveConfig& solve = {});

}  // namespace ipwsel
