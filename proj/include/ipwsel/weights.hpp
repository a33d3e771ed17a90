#pragma once

#include "ipwsel/glm.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ipwsel {

enum class WeightMethod { PL, SR, PS, CL, known };

std::string_view to_string(WeightMethod m) noexcept;

struct WeightSet {
    Vector pi_hat;  // one entry per internal (S=1) unit
    WeightMethod method = WeightMethod::known;
    std::optional<Vector> alpha_hat;  // PL and CL only
    std::map<std::string, double> diagnostics;
};

inline constexpr double kPiFloor = 1e-10;

// Internal and external samples with known row linkage. `overlap` pairs an
// internal row index with the external row index of the same unit.
struct OverlapPair {
    Eigen::Index internal;
    Eigen::Index external;
};

struct PopulationSummary {
    enum class Kind { joint_cells, marginal_means };
    Kind kind = Kind::joint_cells;
    // joint_cells: the level variables of each cell key;
    // marginal_means: the names aligned with `means`.
    std::vector<std::string> variables;
    std::map<std::vector<long>, double> cells;
    Vector means;
    std::optional<double> N;
    std::vector<std::string> warnings;

    void validate() const;
};

struct CoarseningRule {
    std::string variable;
    std::vector<double> cutoffs;
};

WeightSet known_weights(const Vector& pi);

WeightSet estimate_weights_pl(const DesignMatrix& internal_X, const DesignMatrix& external_X,
                              const Vector& pi_ext, const SolveConfig& cfg = {});

// Left-hand side of the PL equation scaled by 1 / sum(1/pi_ext).
Vector pl_residual(const DesignMatrix& internal_X, const DesignMatrix& external_X,
                   const Vector& pi_ext, const Vector& alpha);

struct SrFits {
    FittedModel simplex;
    FittedModel multinomial;
};

WeightSet estimate_weights_sr(const DesignMatrix& internal_X, const DesignMatrix& external_X,
                              const Vector& pi_ext, const std::vector<OverlapPair>& overlap,
                              const SolveConfig& cfg = {}, SrFits* fits = nullptr);

// The selection identity itself: P(S=1|X) from P(S_ext=1|X) and the three
// union-sample membership probabilities (both, internal only, external only).
double sr_identity(double p_ext, double p11, double p10, double p01);

WeightSet estimate_weights_ps(const std::vector<std::vector<long>>& internal_cells,
                              const PopulationSummary& summary);

// Population totals for the columns of `design`: N for the intercept,
// N * mean for every other column (matched by name).
Vector calibration_totals(const DesignMatrix& design, const PopulationSummary& summary);

WeightSet estimate_weights_cl(const DesignMatrix& internal_X, const PopulationSummary& summary,
                              const SolveConfig& cfg = {});

// Sample quantile by linear interpolation at position 1 + (n-1)q of the order
// statistics.
double quantile(std::vector<double> values, double q);

Vector winsorize_weights(const Vector& w, double lower_q = 0.025, double upper_q = 0.975);

Vector augment_weights_with_outcome(const Vector& w0, const Vector& d, const Vector& p_pop,
                                    const Vector& p_int);

CoarseningRule quantile_coarsening(const std::string& variable, const std::vector<double>& values,
                                   const std::vector<double>& probs = {0.15, 0.85});

// Label k = number of cutoffs <= value, so bins are half-open [c_k, c_{k+1}).
std::vector<long> coarsen(const std::vector<double>& values, const CoarseningRule& rule);

}  // namespace ipwsel
