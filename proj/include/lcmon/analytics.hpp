#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcmon/metrics.hpp"

namespace lcmon {

struct PplGrid {
    std::vector<std::size_t> lengths;  // ascending
    std::vector<double> depths;        // ascending
    std::vector<double> cells;         // row-major [length][depth], mean answer PPL
    std::vector<std::size_t> counts;   // per-cell sample counts

    double& cell(std::size_t li, std::size_t di) { return cells[li * depths.size() + di]; }
    double cell(std::size_t li, std::size_t di) const { return cells[li * depths.size() + di]; }
    std::size_t count(std::size_t li, std::size_t di) const {
        return counts[li * depths.size() + di];
    }
};

struct CheckpointSeries {
    std::string metric_name;
    std::vector<std::pair<std::uint64_t, double>> points;  // (checkpoint_tokens, value), ascending

    std::vector<double> values() const;
};

struct ScalingFit {
    double A = 0.0;  // slope against ln(N)
    double B = 0.0;  // intercept
    double r_squared = 0.0;
    std::vector<double> residuals;
};

struct StabilityReport {
    std::size_t k = 0;
    std::size_t overlap = 0;
    double spearman_rho = 0.0;
    double p_value = 1.0;
};

struct Correlation {
    double r = 0.0;
    double p = 1.0;
};

PplGrid ppl_grid(const std::vector<AnswerPpl>& per_sample);

// Per-depth mean over context lengths, optionally restricted to lengths in
// [min_length, max_length].
std::vector<double> depth_marginal(const PplGrid& grid,
                                   std::optional<std::size_t> min_length = std::nullopt,
                                   std::optional<std::size_t> max_length = std::nullopt);

// Least squares of value against ln(checkpoint_tokens).
ScalingFit fit_scaling_law(const CheckpointSeries& series);

// Earliest index i whose next `window` points all stay within rel_epsilon
// relative change of value_i.
std::optional<std::size_t> detect_plateau(const CheckpointSeries& series, double rel_epsilon,
                                          std::size_t window);

// Product-moment correlation; two-sided p via the t statistic with n-2
// degrees of freedom.
Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);

// Pearson over fractional ranks (ties get the mean rank); p via the same
// t route.
Correlation spearman(const std::vector<double>& x, const std::vector<double>& y);

// Exact permutation p-value (all n! permutations); only for n <= 8.
double pearson_permutation_p(const std::vector<double>& x, const std::vector<double>& y);

std::vector<double> fractional_ranks(const std::vector<double>& v);

StabilityReport top_k_overlap(const RetrievalScoreMatrix& a, const RetrievalScoreMatrix& b,
                              std::size_t k);

double series_mean(const std::vector<double>& values);

// Restrict both series to their common checkpoints; throws if either side is
// missing checkpoints present in the other.
std::pair<std::vector<double>, std::vector<double>> align_series(const CheckpointSeries& a,
                                                                 const CheckpointSeries& b);

// CSV with header checkpoint_tokens,metric_name,value.
void write_series(const std::string& path, const std::vector<CheckpointSeries>& series);
std::vector<CheckpointSeries> read_series(const std::string& path);

// Comma-separated matrix with a depth header row and a length header column.
void write_grid(const std::string& path, const PplGrid& grid);
PplGrid read_grid(const std::string& path);

void write_fit(const std::string& path, const ScalingFit& fit);
void write_stability(const std::string& path, const StabilityReport& report);

}  // namespace lcmon
