#pragma once

// Benchmarks and evaluation: the end-to-end pipeline, comparator
// estimators (per-metric RSC and ablations), placebo scoring, MAPE / R^2,
// forward-chaining cross-validation and the seeded synthetic sweep.

#include "mrsc/denoise.hpp"
#include "mrsc/regression.hpp"
#include "mrsc/synthgen.hpp"
#include "mrsc/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mrsc {

enum class ComparatorKind {
    Mrsc,
    RscPerMetric,
    RegressionNoDenoise,
    DonorPoolAverage,
    RestrictedDonorPool,
};

struct Comparator {
    ComparatorKind kind = ComparatorKind::Mrsc;
    /// ECMAScript regex over donor labels; RestrictedDonorPool keeps donors
    /// whose label matches it entirely.
    std::string donor_pattern;

    std::string name() const;
    /// "mrsc", "rsc", "no-denoise", "average", "restricted:<regex>".
    static Comparator parse(const std::string& text);
};

struct PipelineResult {
    FlattenedPanel panel;
    DenoisedModel model;
    SyntheticControl control;
    ForecastReport report;
};

/// flatten -> hsvt -> fit -> predict.
PipelineResult run_mrsc(const ObservationTensor& tensor, const PanelSplit& split,
                        const ThresholdPolicy& policy, const MetricWeights& weights,
                        kernels::Backend backend = kernels::Backend::OpenMP);

/// Unscored K x T forecast for the treatment unit under `comparator`.
/// Throws EmptyDonorPool when a restriction leaves no donors.
ForecastReport forecast_with(const ObservationTensor& tensor, const PanelSplit& split,
                             const ThresholdPolicy& policy, const MetricWeights& weights,
                             const Comparator& comparator);

/// Mean of |forecast - actual| / actual over the h periods after t0, per
/// horizon h. Zero actuals are excluded and counted.
std::vector<HorizonMape> mape(std::span<const double> forecast, std::span<const double> actual,
                              std::size_t t0, std::span<const std::size_t> horizons);

/// 1 - sum (actual - forecast)^2 / sum (actual - baseline)^2 across units.
/// Throws DegenerateBaseline.
double r_squared(std::span<const double> forecasts, std::span<const double> actuals,
                 std::span<const double> baseline);

struct Summary {
    double mean = 0.0;
    double median = 0.0;
    std::size_t count = 0;
};
Summary summarize(std::span<const double> values);

/// Fits on the pre-intervention window only and scores against the unit's
/// own observed post-intervention values. MAPE is filled when horizons are
/// given. Throws InvalidArgument if the unit has no observed post data.
ForecastReport placebo_evaluate(const ObservationTensor& tensor, const std::string& unit_label,
                                std::size_t t0, const ThresholdPolicy& policy,
                                const MetricWeights& weights,
                                const Comparator& comparator = {},
                                std::span<const std::size_t> horizons = {});

inline ForecastReport ablation_comparators(const ObservationTensor& tensor,
                                           const std::string& unit_label, std::size_t t0,
                                           const ThresholdPolicy& policy,
                                           const MetricWeights& weights,
                                           const Comparator& comparator) {
    return placebo_evaluate(tensor, unit_label, t0, policy, weights, comparator);
}

struct CvPoint {
    ThresholdPolicy policy;
    MetricWeights weights;
    bool ok = false;
    std::string error;
    std::size_t retained_rank = 0;
    double validation_mse = 0.0;
};

struct CvChoice {
    ThresholdPolicy policy;
    MetricWeights weights;
    double validation_mse = 0.0;
    std::size_t retained_rank = 0;
    std::vector<CvPoint> grid;
};

/// Forward-chaining split of the pre-intervention window: fit on the first
/// `fit_fraction` of it, validate on the rest. Lowest validation MSE
/// (averaged over metrics) wins; near-ties go to the smaller retained rank,
/// then to the weights closest to uniform. Needs t0 >= 4.
CvChoice cross_validate(const ObservationTensor& tensor, const PanelSplit& split,
                        const std::vector<ThresholdPolicy>& policies,
                        const std::vector<MetricWeights>& weight_grid,
                        double fit_fraction = 0.7);

enum class GeneratorKind { Lvm, LowRank };

struct ExperimentConfig {
    std::string name = "custom";
    GeneratorKind generator = GeneratorKind::Lvm;
    std::vector<std::size_t> unit_grid{100};  // donor counts
    std::size_t n_periods = 50;
    std::size_t pool_size = 10;
    double noise_sd = 1.0;
    bool share_latents = true;
    std::vector<std::vector<double>> alpha_grid{{0.7, 0.3}};  // one entry per metric set
    std::size_t lowrank_rank = 2;
    std::size_t lowrank_metrics = 2;
    std::vector<double> t0_fractions{0.2};
    std::vector<ThresholdPolicy> policies{FixedRank{1}};
    std::vector<std::vector<double>> weight_grid;  // empty: uniform
    std::vector<double> observed_fractions{1.0};
    std::size_t n_trials = 100;
    std::uint64_t seed = 1;
    std::vector<Comparator> comparators{{ComparatorKind::Mrsc, {}},
                                        {ComparatorKind::RscPerMetric, {}}};

    void validate() const;
};

/// Named configurations: "rmse-sweep", "smoke", "k-sweep", "masking",
/// "ablation", "exact-recovery". Throws InvalidArgument for unknown names.
ExperimentConfig preset_config(const std::string& name);

struct CellKey {
    std::size_t n_units = 0;
    std::size_t n_metrics = 0;
    std::string alphas;
    std::size_t t0 = 0;
    std::string policy;
    std::string weights;
    double observed_fraction = 1.0;
    std::string comparator;

    bool operator==(const CellKey&) const = default;
};

struct TrialRecord {
    CellKey cell;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::vector<double> pre_mse;
    std::vector<double> post_mse;
    std::vector<double> post_rmse;
    double rho_hat = 1.0;
    std::size_t retained_rank = 0;
};

struct AggregateRow {
    CellKey cell;
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
    std::vector<double> mean_post_rmse;  // per metric
    std::vector<double> mean_pre_mse;    // per metric
    std::vector<double> mean_post_mse;   // per metric
    double mean_pre_mse_avg = 0.0;       // averaged over metrics
    double mean_post_mse_avg = 0.0;
};

struct BenchmarkResult {
    ExperimentConfig config;
    std::vector<TrialRecord> trials;
    std::vector<AggregateRow> aggregates;

    const AggregateRow* find(const CellKey& key) const;
};

/// Per-cell means over successful trials, cells in first-appearance order.
std::vector<AggregateRow> aggregate(const std::vector<TrialRecord>& trials);

/// Trial t of every cell uses the same generator seed, so comparisons across
/// cells are paired. Failures are recorded per trial, not thrown.
BenchmarkResult run_synthetic_benchmark(const ExperimentConfig& config,
                                        kernels::Backend backend = kernels::Backend::OpenMP);

/// Seed used for trial `trial` of a sweep seeded with `seed`.
std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial);

struct RankTable {
    std::string criterion;
    double pass_ratio = 1.25;
    std::vector<std::string> rows{"metric1", "metric2", "combined (same params)",
                                  "combined (different params)"};
    std::vector<std::vector<std::size_t>> ranks;  // [row][seed]
    std::size_t same_passed = 0;      // seeds where the shared-latent diagnostic passed
    std::size_t different_failed = 0;  // seeds where the per-metric-latent diagnostic failed
    std::size_t n_seeds = 0;

    double mean_rank(std::size_t row) const;
};

/// Rank table on noiseless N=100, T=120 two-metric LVM donor means.
RankTable rank_table(std::uint64_t seed, std::size_t n_seeds, const RankCriterion& criterion,
                     double pass_ratio = 1.25);

}  // namespace mrsc
