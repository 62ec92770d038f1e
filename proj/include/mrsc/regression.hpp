#pragma once

// Metric-weighted least squares on the denoised pre-intervention columns and
// the per-metric counterfactual forecast.

#include "mrsc/denoise.hpp"
#include "mrsc/kernels.hpp"
#include "mrsc/tensor.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace mrsc {

/// Multiplicative per-metric column weights. w_k = 0 drops metric k from the
/// fit; equal weights treat all metrics as equally important.
struct MetricWeights {
    std::vector<double> w;

    static MetricWeights uniform(std::size_t n_metrics) {
        return {std::vector<double>(n_metrics, 1.0)};
    }
    std::size_t size() const { return w.size(); }
    /// Throws InvalidArgument unless there are `n_metrics` finite, nonnegative
    /// weights with at least one positive.
    void validate(std::size_t n_metrics) const;
};

enum class Solver { MinNormPseudoinverse };

struct SyntheticControl {
    Vector beta;  // one coefficient per donor row
    MetricWeights weights;
    std::size_t retained_rank = 0;
    double fit_residual = 0.0;  // weighted pre-intervention residual 2-norm
    Solver solver = Solver::MinNormPseudoinverse;
    std::size_t used_columns = 0;
    std::size_t dropped_columns = 0;  // zero weight or missing treatment entry
    bool degenerate_model = false;    // retained_rank == 0, beta forced to 0
    std::size_t n_metrics = 0;
    std::size_t n_periods = 0;
    std::size_t t0 = 0;
};

/// Singular values below this fraction of the largest are treated as zero.
inline constexpr double kPseudoinverseCutoff = 1e-10;

/// argmin_v ||target - design^T v||_2 with minimum 2-norm, where `design` has
/// one row per unknown and one column per equation.
Vector min_norm_least_squares(const Matrix& design, const Vector& target,
                              double relative_cutoff = kPseudoinverseCutoff);

/// Throws DimensionMismatch and NoUsableColumns.
SyntheticControl fit(const DenoisedModel& model, const FlattenedPanel& panel,
                     const MetricWeights& weights);

struct HorizonMape {
    std::size_t horizon = 0;
    double mape = 0.0;
    std::size_t points = 0;
    std::size_t zero_actual_points = 0;  // excluded from the mean
};

struct ForecastReport {
    Matrix trajectories;  // K x T
    std::size_t t0 = 0;

    bool scored = false;
    std::vector<double> pre_mse;   // per metric
    std::vector<double> post_mse;  // per metric
    double pre_mse_avg = 0.0;
    double post_mse_avg = 0.0;

    std::vector<std::vector<HorizonMape>> mape;  // per metric, filled by evaluation

    std::optional<double> band_level;  // residual band, not part of the estimator
    Matrix band_lower;
    Matrix band_upper;

    std::size_t n_metrics() const { return static_cast<std::size_t>(trajectories.rows()); }
    std::size_t n_periods() const { return static_cast<std::size_t>(trajectories.cols()); }
};

/// trajectory_k = beta^T block_k over all T periods. Throws DimensionMismatch.
ForecastReport predict(const SyntheticControl& control, const DenoisedModel& model,
                       kernels::Backend backend = kernels::Backend::OpenMP);

/// Pre/post-intervention MSE per metric and averaged over metrics. `truth` is
/// K x T; cells with truth_present == 0 are skipped.
ForecastReport score(ForecastReport report, const Matrix& truth, const PanelSplit& split);
ForecastReport score(ForecastReport report, const Matrix& truth, const Mask& truth_present,
                     const PanelSplit& split);

/// Adds forecast + empirical quantiles of the pre-intervention residuals at
/// the central `level` as a rough band. Not a calibrated interval.
ForecastReport add_residual_band(ForecastReport report, const FlattenedPanel& panel,
                                 double level = 0.95);

}  // namespace mrsc
