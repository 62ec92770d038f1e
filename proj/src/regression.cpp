#include "mrsc/regression.hpp"

#include "mrsc/error.hpp"

#include <algorithm>
#include <cmath>

namespace mrsc {

void MetricWeights::validate(std::size_t n_metrics) const {
    if (w.size() != n_metrics) {
        throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(n_metrics) +
                                                      " metric weights, got " +
                                                      std::to_string(w.size()));
    }
    bool any_positive = false;
    for (double x : w) {
        if (!std::isfinite(x) || x < 0.0) {
            throw Error(ErrorCode::InvalidArgument, "metric weights must be finite and >= 0");
        }
        any_positive = any_positive || x > 0.0;
    }
    if (!any_positive) throw Error(ErrorCode::InvalidArgument, "all metric weights are zero");
}

Vector min_norm_least_squares(const Matrix& design, const Vector& target, double relative_cutoff) {
    if (design.cols() != target.size()) {
        throw Error(ErrorCode::DimensionMismatch, "design columns do not match target length");
    }
    Vector beta = Vector::Zero(design.rows());
    if (design.size() == 0 || design.isZero(0.0)) return beta;
    const auto decomposition = svd(design);
    const double cutoff = relative_cutoff * decomposition.s(0);
    for (Eigen::Index z = 0; z < decomposition.s.size(); ++z) {
        const double s = decomposition.s(z);
        if (!(s > cutoff)) break;
        beta += decomposition.u.col(z) * (decomposition.v.col(z).dot(target) / s);
    }
    return beta;
}

SyntheticControl fit(const DenoisedModel& model, const FlattenedPanel& panel,
                     const MetricWeights& weights) {
    const std::size_t k = panel.n_metrics;
    const std::size_t t = panel.n_periods;
    const std::size_t t0 = panel.t0;
    if (model.n_donors() != panel.n_donors() || model.n_metrics != k || model.n_periods != t ||
        static_cast<std::size_t>(model.m_hat.cols()) != k * t) {
        throw Error(ErrorCode::DimensionMismatch, "model and panel dimensions disagree");
    }
    weights.validate(k);

    std::vector<Eigen::Index> model_cols;
    std::vector<Eigen::Index> target_cols;
    std::vector<double> col_weight;
    for (std::size_t m = 0; m < k; ++m) {
        for (std::size_t j = 0; j < t0; ++j) {
            const auto target_at = m * t0 + j;
            if (weights.w[m] == 0.0 || !panel.treatment_present[target_at]) continue;
            model_cols.push_back(static_cast<Eigen::Index>(m * t + j));
            target_cols.push_back(static_cast<Eigen::Index>(target_at));
            col_weight.push_back(weights.w[m]);
        }
    }

    SyntheticControl control;
    control.weights = weights;
    control.retained_rank = model.retained_rank;
    control.n_metrics = k;
    control.n_periods = t;
    control.t0 = t0;
    control.used_columns = model_cols.size();
    control.dropped_columns = k * t0 - model_cols.size();
    if (model_cols.empty()) {
        throw Error(ErrorCode::NoUsableColumns,
                    "every pre-intervention column was dropped (zero weight or missing)");
    }

    const auto n_donors = static_cast<Eigen::Index>(model.n_donors());
    const auto n_cols = static_cast<Eigen::Index>(model_cols.size());
    Matrix design(n_donors, n_cols);
    Vector target(n_cols);
    for (Eigen::Index c = 0; c < n_cols; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        design.col(c) = col_weight[ci] * model.m_hat.col(model_cols[ci]);
        target(c) = col_weight[ci] * panel.treatment_pre(target_cols[ci]);
    }

    if (model.retained_rank == 0) {
        control.degenerate_model = true;
        control.beta = Vector::Zero(n_donors);
    } else {
        control.beta = min_norm_least_squares(design, target);
    }
    control.fit_residual = (target - design.transpose() * control.beta).norm();
    return control;
}

ForecastReport predict(const SyntheticControl& control, const DenoisedModel& model,
                       kernels::Backend backend) {
    if (control.beta.size() != model.m_hat.rows() || control.n_metrics != model.n_metrics ||
        control.n_periods != model.n_periods) {
        throw Error(ErrorCode::DimensionMismatch, "control was fitted against different dimensions");
    }
    const RowVector flat = kernels::combine_rows(control.beta, model.m_hat, backend);
    ForecastReport report;
    report.t0 = control.t0;
    const auto k = static_cast<Eigen::Index>(model.n_metrics);
    const auto t = static_cast<Eigen::Index>(model.n_periods);
    report.trajectories.resize(k, t);
    for (Eigen::Index m = 0; m < k; ++m) report.trajectories.row(m) = flat.segment(m * t, t);
    return report;
}

ForecastReport score(ForecastReport report, const Matrix& truth, const PanelSplit& split) {
    Mask all = Mask::Ones(truth.rows(), truth.cols());
    return score(std::move(report), truth, all, split);
}

ForecastReport score(ForecastReport report, const Matrix& truth, const Mask& truth_present,
                     const PanelSplit& split) {
    if (truth.rows() != report.trajectories.rows() || truth.cols() != report.trajectories.cols() ||
        truth_present.rows() != truth.rows() || truth_present.cols() != truth.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "truth must be K x T like the forecast");
    }
    const auto t = truth.cols();
    const auto t0 = static_cast<Eigen::Index>(split.t0);
    if (t0 < 1 || t0 >= t) throw Error(ErrorCode::InvalidArgument, "t0 must satisfy 1 <= t0 < T");

    report.t0 = split.t0;
    report.pre_mse.assign(static_cast<std::size_t>(truth.rows()), 0.0);
    report.post_mse.assign(static_cast<std::size_t>(truth.rows()), 0.0);
    for (Eigen::Index m = 0; m < truth.rows(); ++m) {
        double pre = 0.0;
        double post = 0.0;
        std::size_t n_pre = 0;
        std::size_t n_post = 0;
        for (Eigen::Index j = 0; j < t; ++j) {
            if (!truth_present(m, j)) continue;
            const double err = report.trajectories(m, j) - truth(m, j);
            if (j < t0) {
                pre += err * err;
                ++n_pre;
            } else {
                post += err * err;
                ++n_post;
            }
        }
        report.pre_mse[static_cast<std::size_t>(m)] = n_pre ? pre / static_cast<double>(n_pre) : 0.0;
        report.post_mse[static_cast<std::size_t>(m)] =
            n_post ? post / static_cast<double>(n_post) : 0.0;
    }
    double pre_sum = 0.0;
    double post_sum = 0.0;
    for (std::size_t m = 0; m < report.pre_mse.size(); ++m) {
        pre_sum += report.pre_mse[m];
        post_sum += report.post_mse[m];
    }
    const auto k = static_cast<double>(report.pre_mse.size());
    report.pre_mse_avg = pre_sum / k;
    report.post_mse_avg = post_sum / k;
    report.scored = true;
    return report;
}

namespace {

double quantile(std::vector<double> sorted_values, double q) {
    std::sort(sorted_values.begin(), sorted_values.end());
    const double pos = q * static_cast<double>(sorted_values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted_values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

}  // namespace

ForecastReport add_residual_band(ForecastReport report, const FlattenedPanel& panel, double level) {
    if (!(level > 0.0 && level < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "band level must be in (0, 1)");
    }
    const auto k = report.trajectories.rows();
    const auto t = report.trajectories.cols();
    if (static_cast<std::size_t>(k) != panel.n_metrics ||
        static_cast<std::size_t>(t) != panel.n_periods) {
        throw Error(ErrorCode::DimensionMismatch, "panel and forecast dimensions disagree");
    }
    report.band_level = level;
    report.band_lower = report.trajectories;
    report.band_upper = report.trajectories;
    for (Eigen::Index m = 0; m < k; ++m) {
        std::vector<double> residuals;
        for (std::size_t j = 0; j < panel.t0; ++j) {
            const auto at = static_cast<std::size_t>(m) * panel.t0 + j;
            if (!panel.treatment_present[at]) continue;
            residuals.push_back(panel.treatment_pre(static_cast<Eigen::Index>(at)) -
                                report.trajectories(m, static_cast<Eigen::Index>(j)));
        }
        if (residuals.empty()) continue;
        const double lo = quantile(residuals, (1.0 - level) / 2.0);
        const double hi = quantile(residuals, (1.0 + level) / 2.0);
        report.band_lower.row(m).array() += lo;
        report.band_upper.row(m).array() += hi;
    }
    return report;
}

}  // namespace mrsc
