#include "mrsc/evaluation.hpp"

#include "mrsc/error.hpp"
#include "mrsc/rng.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <regex>
#include <sstream>

namespace mrsc {

namespace {

std::string join(const std::vector<double>& values) {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ',';
        out << values[i];
    }
    return out.str();
}

std::size_t t0_from_fraction(double fraction, std::size_t n_periods) {
    const auto t0 = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n_periods) + 1e-9));
    return std::clamp<std::size_t>(t0, 1, n_periods - 1);
}

double weight_deviation(const MetricWeights& weights) {
    double mean = 0.0;
    for (double w : weights.w) mean += w;
    mean /= static_cast<double>(weights.size());
    double dev = 0.0;
    for (double w : weights.w) dev += (w / mean - 1.0) * (w / mean - 1.0);
    return dev;
}

}  // namespace

std::string Comparator::name() const {
    switch (kind) {
        case ComparatorKind::Mrsc: return "mrsc";
        case ComparatorKind::RscPerMetric: return "rsc";
        case ComparatorKind::RegressionNoDenoise: return "no-denoise";
        case ComparatorKind::DonorPoolAverage: return "average";
        case ComparatorKind::RestrictedDonorPool: return "restricted:" + donor_pattern;
    }
    return "unknown";
}

Comparator Comparator::parse(const std::string& text) {
    if (text == "mrsc") return {ComparatorKind::Mrsc, {}};
    if (text == "rsc") return {ComparatorKind::RscPerMetric, {}};
    if (text == "no-denoise") return {ComparatorKind::RegressionNoDenoise, {}};
    if (text == "average") return {ComparatorKind::DonorPoolAverage, {}};
    const std::string prefix = "restricted:";
    if (text.rfind(prefix, 0) == 0) {
        const auto pattern = text.substr(prefix.size());
        try {
            std::regex check(pattern);
        } catch (const std::regex_error&) {
            throw Error(ErrorCode::InvalidArgument, "bad donor pattern '" + pattern + "'");
        }
        return {ComparatorKind::RestrictedDonorPool, pattern};
    }
    throw Error(ErrorCode::InvalidArgument, "unknown comparator '" + text + "'");
}

PipelineResult run_mrsc(const ObservationTensor& tensor, const PanelSplit& split,
                        const ThresholdPolicy& policy, const MetricWeights& weights,
                        kernels::Backend backend) {
    PipelineResult result;
    result.panel = flatten(tensor, split);
    result.model = hsvt(result.panel, policy, backend);
    result.control = fit(result.model, result.panel, weights);
    result.report = predict(result.control, result.model, backend);
    return result;
}

ForecastReport forecast_with(const ObservationTensor& tensor, const PanelSplit& split,
                             const ThresholdPolicy& policy, const MetricWeights& weights,
                             const Comparator& comparator) {
    switch (comparator.kind) {
        case ComparatorKind::Mrsc:
            return run_mrsc(tensor, split, policy, weights).report;

        case ComparatorKind::RscPerMetric: {
            split.validate(tensor);
            ForecastReport out;
            out.t0 = split.t0;
            out.trajectories.resize(static_cast<Eigen::Index>(tensor.n_metrics()),
                                    static_cast<Eigen::Index>(tensor.n_periods()));
            for (std::size_t k = 0; k < tensor.n_metrics(); ++k) {
                const auto single = tensor.select_metrics({k});
                const auto result = run_mrsc(single, split, policy, MetricWeights::uniform(1));
                out.trajectories.row(static_cast<Eigen::Index>(k)) = result.report.trajectories.row(0);
            }
            return out;
        }

        case ComparatorKind::RegressionNoDenoise: {
            const auto panel = flatten(tensor, split);
            const auto model = raw_model(panel);
            return predict(fit(model, panel, weights), model);
        }

        case ComparatorKind::DonorPoolAverage: {
            const auto panel = flatten(tensor, split);
            const auto model = hsvt(panel, policy);
            SyntheticControl control;
            control.beta = Vector::Constant(static_cast<Eigen::Index>(panel.n_donors()),
                                            1.0 / static_cast<double>(panel.n_donors()));
            control.weights = weights;
            control.retained_rank = model.retained_rank;
            control.n_metrics = panel.n_metrics;
            control.n_periods = panel.n_periods;
            control.t0 = panel.t0;
            return predict(control, model);
        }

        case ComparatorKind::RestrictedDonorPool: {
            split.validate(tensor);
            const std::regex pattern(comparator.donor_pattern);
            std::vector<std::size_t> keep{split.treatment_index};
            for (std::size_t i = 0; i < tensor.n_units(); ++i) {
                if (i != split.treatment_index && std::regex_match(tensor.unit_labels()[i], pattern)) {
                    keep.push_back(i);
                }
            }
            if (keep.size() < 2) {
                throw Error(ErrorCode::EmptyDonorPool,
                            "no donor matches '" + comparator.donor_pattern + "'");
            }
            const auto restricted = tensor.select_units(keep);
            return run_mrsc(restricted, PanelSplit{0, split.t0}, policy, weights).report;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown comparator");
}

std::vector<HorizonMape> mape(std::span<const double> forecast, std::span<const double> actual,
                              std::size_t t0, std::span<const std::size_t> horizons) {
    if (forecast.size() != actual.size()) {
        throw Error(ErrorCode::DimensionMismatch, "forecast and actual lengths differ");
    }
    std::vector<HorizonMape> out;
    for (auto h : horizons) {
        if (h == 0 || t0 + h > actual.size()) {
            throw Error(ErrorCode::InvalidArgument,
                        "horizon " + std::to_string(h) + " runs past the series");
        }
        HorizonMape entry;
        entry.horizon = h;
        double total = 0.0;
        for (std::size_t t = t0; t < t0 + h; ++t) {
            if (actual[t] == 0.0) {
                ++entry.zero_actual_points;
                continue;
            }
            total += std::abs(forecast[t] - actual[t]) / std::abs(actual[t]);
            ++entry.points;
        }
        entry.mape = entry.points ? total / static_cast<double>(entry.points)
                                  : std::numeric_limits<double>::quiet_NaN();
        out.push_back(entry);
    }
    return out;
}

double r_squared(std::span<const double> forecasts, std::span<const double> actuals,
                 std::span<const double> baseline) {
    if (forecasts.size() != actuals.size() || baseline.size() != actuals.size()) {
        throw Error(ErrorCode::DimensionMismatch, "forecast, actual and baseline lengths differ");
    }
    if (actuals.size() < 2) throw Error(ErrorCode::InvalidArgument, "R^2 needs at least 2 units");
    double residual = 0.0;
    double reference = 0.0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        residual += (actuals[i] - forecasts[i]) * (actuals[i] - forecasts[i]);
        reference += (actuals[i] - baseline[i]) * (actuals[i] - baseline[i]);
    }
    if (reference == 0.0) {
        throw Error(ErrorCode::DegenerateBaseline, "baseline matches every actual exactly");
    }
    return 1.0 - residual / reference;
}

Summary summarize(std::span<const double> values) {
    Summary s;
    std::vector<double> finite;
    for (double v : values) {
        if (std::isfinite(v)) finite.push_back(v);
    }
    s.count = finite.size();
    if (finite.empty()) {
        s.mean = s.median = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double total = 0.0;
    for (double v : finite) total += v;
    s.mean = total / static_cast<double>(finite.size());
    std::sort(finite.begin(), finite.end());
    const auto mid = finite.size() / 2;
    s.median = finite.size() % 2 ? finite[mid] : 0.5 * (finite[mid - 1] + finite[mid]);
    return s;
}

ForecastReport placebo_evaluate(const ObservationTensor& tensor, const std::string& unit_label,
                                std::size_t t0, const ThresholdPolicy& policy,
                                const MetricWeights& weights, const Comparator& comparator,
                                std::span<const std::size_t> horizons) {
    const auto unit = tensor.find_unit(unit_label);
    if (!unit) throw Error(ErrorCode::InvalidArgument, "unknown unit '" + unit_label + "'");
    const PanelSplit split{*unit, t0};
    split.validate(tensor);
    const Mask present = tensor.unit_mask(*unit);
    if (present.rightCols(static_cast<Eigen::Index>(tensor.n_periods() - t0)).cast<int>().sum() == 0) {
        throw Error(ErrorCode::InvalidArgument,
                    "unit '" + unit_label + "' has no observed post-intervention data");
    }
    const Matrix actual = tensor.unit_trajectories(*unit);
    auto report = score(forecast_with(tensor, split, policy, weights, comparator), actual, present,
                        split);
    if (!horizons.empty()) {
        for (Eigen::Index k = 0; k < actual.rows(); ++k) {
            std::vector<double> f(report.trajectories.row(k).begin(), report.trajectories.row(k).end());
            std::vector<double> a(actual.row(k).begin(), actual.row(k).end());
            for (Eigen::Index j = 0; j < actual.cols(); ++j) {
                // missing actuals are excluded the same way zero actuals are
                if (!present(k, j)) a[static_cast<std::size_t>(j)] = 0.0;
            }
            report.mape.push_back(mape(f, a, t0, horizons));
        }
    }
    return report;
}

CvChoice cross_validate(const ObservationTensor& tensor, const PanelSplit& split,
                        const std::vector<ThresholdPolicy>& policies,
                        const std::vector<MetricWeights>& weight_grid, double fit_fraction) {
    split.validate(tensor);
    if (split.t0 < 4) throw Error(ErrorCode::InvalidArgument, "cross-validation needs t0 >= 4");
    if (policies.empty() || weight_grid.empty()) {
        throw Error(ErrorCode::InvalidArgument, "empty hyperparameter grid");
    }
    if (!(fit_fraction > 0.0 && fit_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "fit fraction must be in (0, 1)");
    }
    const auto fit_len = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::floor(fit_fraction * static_cast<double>(split.t0) + 1e-9)), 1,
        split.t0 - 1);

    const Matrix actual = tensor.unit_trajectories(split.treatment_index);
    const Mask present = tensor.unit_mask(split.treatment_index);
    double scale = 0.0;
    std::size_t scale_points = 0;
    for (Eigen::Index k = 0; k < actual.rows(); ++k) {
        for (auto j = static_cast<Eigen::Index>(fit_len); j < static_cast<Eigen::Index>(split.t0); ++j) {
            if (!present(k, j)) continue;
            scale += actual(k, j) * actual(k, j);
            ++scale_points;
        }
    }
    scale = scale_points ? scale / static_cast<double>(scale_points) : 0.0;
    const double tie_tol = 1e-12 * std::max(scale, std::numeric_limits<double>::min());

    CvChoice choice{policies.front(), weight_grid.front(), 0.0, 0, {}};
    const CvPoint* best = nullptr;
    const PanelSplit inner{split.treatment_index, fit_len};
    for (const auto& policy : policies) {
        for (const auto& weights : weight_grid) {
            CvPoint point;
            point.policy = policy;
            point.weights = weights;
            try {
                const auto result = run_mrsc(tensor, inner, policy, weights);
                point.retained_rank = result.model.retained_rank;
                double total = 0.0;
                for (Eigen::Index k = 0; k < actual.rows(); ++k) {
                    double err = 0.0;
                    std::size_t n = 0;
                    for (auto j = static_cast<Eigen::Index>(fit_len);
                         j < static_cast<Eigen::Index>(split.t0); ++j) {
                        if (!present(k, j)) continue;
                        const double d = result.report.trajectories(k, j) - actual(k, j);
                        err += d * d;
                        ++n;
                    }
                    total += n ? err / static_cast<double>(n) : 0.0;
                }
                point.validation_mse = total / static_cast<double>(actual.rows());
                point.ok = true;
            } catch (const Error& e) {
                point.error = e.what();
            }
            choice.grid.push_back(point);
        }
    }
    for (const auto& point : choice.grid) {
        if (!point.ok) continue;
        if (!best) {
            best = &point;
            continue;
        }
        const double diff = point.validation_mse - best->validation_mse;
        if (diff < -tie_tol) {
            best = &point;
        } else if (std::abs(diff) <= tie_tol) {
            if (point.retained_rank < best->retained_rank ||
                (point.retained_rank == best->retained_rank &&
                 weight_deviation(point.weights) < weight_deviation(best->weights))) {
                best = &point;
            }
        }
    }
    if (!best) throw Error(ErrorCode::InvalidArgument, "no grid point could be fitted");
    choice.policy = best->policy;
    choice.weights = best->weights;
    choice.validation_mse = best->validation_mse;
    choice.retained_rank = best->retained_rank;
    return choice;
}

void ExperimentConfig::validate() const {
    if (n_trials < 1) throw Error(ErrorCode::InvalidArgument, "n_trials must be >= 1");
    if (unit_grid.empty() || t0_fractions.empty() || policies.empty() ||
        observed_fractions.empty() || comparators.empty()) {
        throw Error(ErrorCode::InvalidArgument, "experiment grids must be nonempty");
    }
    if (generator == GeneratorKind::Lvm && alpha_grid.empty()) {
        throw Error(ErrorCode::InvalidArgument, "alpha grid must be nonempty");
    }
    if (n_periods < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 periods");
    for (double f : t0_fractions) {
        if (!(f > 0.0 && f < 1.0)) throw Error(ErrorCode::InvalidArgument, "t0 fraction must be in (0, 1)");
    }
    for (double rho : observed_fractions) {
        if (!(rho > 0.0 && rho <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "observed fraction must be in (0, 1]");
        }
    }
    for (const auto& p : policies) mrsc::validate(p);
}

ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig config;
    config.name = name;
    if (name == "rmse-sweep") {
        config.unit_grid = {50, 100, 200, 500};
        config.seed = 51;
    } else if (name == "smoke") {
        config.unit_grid = {50};
        config.n_trials = 1;
        config.comparators = {Comparator::parse("mrsc"), Comparator::parse("rsc"),
                              Comparator::parse("no-denoise"), Comparator::parse("average")};
    } else if (name == "k-sweep") {
        config.alpha_grid = {{0.7}, {0.7, 0.3}, {0.7, 0.3, 0.5, 0.1}};
        config.comparators = {Comparator::parse("mrsc")};
        config.seed = 4;
    } else if (name == "masking") {
        config.unit_grid = {500};
        config.observed_fractions = {1.0, 0.9, 0.7, 0.5};
        config.n_trials = 50;
        config.comparators = {Comparator::parse("mrsc")};
        config.seed = 6;
    } else if (name == "ablation") {
        config.comparators = {Comparator::parse("mrsc"), Comparator::parse("no-denoise"),
                              Comparator::parse("average")};
        config.seed = 7;
    } else if (name == "exact-recovery") {
        config.generator = GeneratorKind::LowRank;
        config.unit_grid = {20, 100};
        config.n_periods = 20;
        config.noise_sd = 0.0;
        config.lowrank_rank = 2;
        config.lowrank_metrics = 2;
        config.t0_fractions = {0.5};
        config.policies = {FixedRank{2}};
        config.n_trials = 5;
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown preset '" + name + "'");
    }
    return config;
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
    return SplitMix64(seed).split(trial)();
}

const AggregateRow* BenchmarkResult::find(const CellKey& key) const {
    for (const auto& row : aggregates) {
        if (row.cell == key) return &row;
    }
    return nullptr;
}

std::vector<AggregateRow> aggregate(const std::vector<TrialRecord>& trials) {
    std::vector<AggregateRow> rows;
    for (const auto& record : trials) {
        auto it = std::find_if(rows.begin(), rows.end(),
                               [&](const AggregateRow& row) { return row.cell == record.cell; });
        if (it == rows.end()) {
            AggregateRow row;
            row.cell = record.cell;
            rows.push_back(std::move(row));
            it = rows.end() - 1;
        }
        if (!record.ok) {
            ++it->n_failed;
            continue;
        }
        const auto k = record.post_mse.size();
        if (it->n_ok == 0) {
            it->mean_post_rmse.assign(k, 0.0);
            it->mean_pre_mse.assign(k, 0.0);
            it->mean_post_mse.assign(k, 0.0);
        }
        ++it->n_ok;
        for (std::size_t m = 0; m < k; ++m) {
            it->mean_post_rmse[m] += record.post_rmse[m];
            it->mean_pre_mse[m] += record.pre_mse[m];
            it->mean_post_mse[m] += record.post_mse[m];
        }
    }
    for (auto& row : rows) {
        if (row.n_ok == 0) continue;
        const auto n = static_cast<double>(row.n_ok);
        double pre = 0.0;
        double post = 0.0;
        for (std::size_t m = 0; m < row.mean_post_mse.size(); ++m) {
            row.mean_post_rmse[m] /= n;
            row.mean_pre_mse[m] /= n;
            row.mean_post_mse[m] /= n;
            pre += row.mean_pre_mse[m];
            post += row.mean_post_mse[m];
        }
        const auto k = static_cast<double>(row.mean_post_mse.size());
        row.mean_pre_mse_avg = pre / k;
        row.mean_post_mse_avg = post / k;
    }
    return rows;
}

namespace {

struct DataCell {
    std::size_t n_units;
    std::vector<double> alphas;  // empty for the low-rank generator
    double observed_fraction;
};

std::vector<TrialRecord> run_job(const ExperimentConfig& config, const DataCell& data,
                                 std::size_t trial) {
    const auto seed = trial_seed(config.seed, trial);
    GroundTruthBundle bundle = [&] {
        if (config.generator == GeneratorKind::LowRank) {
            return generate_lowrank_tensor(data.n_units, config.n_periods, config.lowrank_metrics,
                                           config.lowrank_rank, seed);
        }
        LvmSpec spec;
        spec.n_units = data.n_units;
        spec.n_periods = config.n_periods;
        spec.pool_size = config.pool_size;
        spec.alpha_per_metric = data.alphas;
        spec.noise_sd = config.noise_sd;
        spec.share_latents = config.share_latents;
        spec.seed = seed;
        return generate_lvm(spec);
    }();
    ObservationTensor observed = bundle.tensor;
    if (data.observed_fraction < 1.0) {
        SplitMix64 mask_rng = SplitMix64(seed).split(0x6d61736b);
        observed = observed.mask_bernoulli(data.observed_fraction, mask_rng, 0);
    }
    const Matrix truth = bundle.mean_tensor.unit_trajectories(0);
    const std::size_t k = observed.n_metrics();

    std::vector<std::vector<double>> weight_sets = config.weight_grid;
    if (weight_sets.empty()) weight_sets.push_back(std::vector<double>(k, 1.0));

    std::vector<TrialRecord> records;
    for (double fraction : config.t0_fractions) {
        const auto t0 = t0_from_fraction(fraction, config.n_periods);
        const PanelSplit split{0, t0};
        for (const auto& policy : config.policies) {
            for (const auto& w : weight_sets) {
                for (const auto& comparator : config.comparators) {
                    TrialRecord record;
                    record.cell = CellKey{data.n_units, k,           join(data.alphas), t0,
                                          describe(policy), join(w), data.observed_fraction,
                                          comparator.name()};
                    record.trial = trial;
                    record.seed = seed;
                    try {
                        const MetricWeights weights{w};
                        auto report = forecast_with(observed, split, policy, weights, comparator);
                        report = score(std::move(report), truth, split);
                        record.pre_mse = report.pre_mse;
                        record.post_mse = report.post_mse;
                        for (double mse : report.post_mse) record.post_rmse.push_back(std::sqrt(mse));
                        record.ok = true;
                    } catch (const Error& e) {
                        record.error = e.what();
                    }
                    records.push_back(std::move(record));
                }
            }
        }
    }
    return records;
}

}  // namespace

BenchmarkResult run_synthetic_benchmark(const ExperimentConfig& config, kernels::Backend backend) {
    config.validate();
    std::vector<DataCell> cells;
    for (auto n : config.unit_grid) {
        if (config.generator == GeneratorKind::LowRank) {
            for (double rho : config.observed_fractions) cells.push_back({n, {}, rho});
        } else {
            for (const auto& alphas : config.alpha_grid) {
                for (double rho : config.observed_fractions) cells.push_back({n, alphas, rho});
            }
        }
    }
    const std::size_t n_jobs = cells.size() * config.n_trials;
    std::vector<std::vector<TrialRecord>> results(n_jobs);

    if (backend == kernels::Backend::Serial) {
        for (std::size_t job = 0; job < n_jobs; ++job) {
            results[job] = run_job(config, cells[job / config.n_trials], job % config.n_trials);
        }
    } else {
        const auto jobs = static_cast<long long>(n_jobs);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
        for (long long job = 0; job < jobs; ++job) {
            const auto j = static_cast<std::size_t>(job);
            results[j] = run_job(config, cells[j / config.n_trials], j % config.n_trials);
        }
    }

    BenchmarkResult out;
    out.config = config;
    for (auto& batch : results) {
        for (auto& record : batch) out.trials.push_back(std::move(record));
    }
    out.aggregates = aggregate(out.trials);
    return out;
}

double RankTable::mean_rank(std::size_t row) const {
    if (ranks.at(row).empty()) return 0.0;
    double total = 0.0;
    for (auto r : ranks[row]) total += static_cast<double>(r);
    return total / static_cast<double>(ranks[row].size());
}

RankTable rank_table(std::uint64_t seed, std::size_t n_seeds, const RankCriterion& criterion,
                     double pass_ratio) {
    RankTable table;
    table.criterion = describe(criterion);
    table.pass_ratio = pass_ratio;
    table.n_seeds = n_seeds;
    table.ranks.assign(4, {});
    for (std::size_t s = 0; s < n_seeds; ++s) {
        const auto trial = trial_seed(seed, s);
        std::vector<std::size_t> donors;
        for (std::size_t i = 1; i <= 100; ++i) donors.push_back(i);

        auto same = generate_lvm(LvmSpec::rank_table_preset(true, trial));
        const auto same_report =
            rank_preservation_diagnostic(same.mean_tensor.select_units(donors), criterion, pass_ratio);
        auto different = generate_lvm(LvmSpec::rank_table_preset(false, trial));
        const auto diff_report = rank_preservation_diagnostic(
            different.mean_tensor.select_units(donors), criterion, pass_ratio);

        table.ranks[0].push_back(same_report.per_metric_rank[0]);
        table.ranks[1].push_back(same_report.per_metric_rank[1]);
        table.ranks[2].push_back(same_report.combined_rank);
        table.ranks[3].push_back(diff_report.combined_rank);
        table.same_passed += same_report.passed ? 1 : 0;
        table.different_failed += diff_report.passed ? 0 : 1;
    }
    return table;
}

}  // namespace mrsc
