#include "mrsc/tensor.hpp"

#include "mrsc/error.hpp"
#include "mrsc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mrsc {

namespace {

std::vector<std::string> default_labels(const std::string& prefix, std::size_t n) {
    std::vector<std::string> labels;
    labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) labels.push_back(prefix + std::to_string(i));
    return labels;
}

}  // namespace

ObservationTensor::ObservationTensor(std::size_t n_units, std::size_t n_periods,
                                     std::size_t n_metrics, std::vector<double> values,
                                     std::vector<std::uint8_t> present,
                                     std::vector<std::string> unit_labels,
                                     std::vector<std::string> metric_labels)
    : n_units_(n_units),
      n_periods_(n_periods),
      n_metrics_(n_metrics),
      values_(std::move(values)),
      present_(std::move(present)),
      unit_labels_(std::move(unit_labels)),
      metric_labels_(std::move(metric_labels)) {
    if (n_units_ < 2 || n_periods_ < 1 || n_metrics_ < 1) {
        std::ostringstream msg;
        msg << "tensor needs N >= 2, T >= 1, K >= 1 (got " << n_units_ << "x" << n_periods_
            << "x" << n_metrics_ << ")";
        throw Error(ErrorCode::DimensionMismatch, msg.str());
    }
    const std::size_t cells = n_units_ * n_periods_ * n_metrics_;
    if (values_.size() != cells || present_.size() != cells) {
        throw Error(ErrorCode::DimensionMismatch, "value array does not match N*T*K");
    }
    for (std::size_t c = 0; c < cells; ++c) {
        if (present_[c] && !std::isfinite(values_[c])) {
            throw Error(ErrorCode::NonFinite, "present value is NaN or infinite");
        }
        if (!present_[c]) values_[c] = 0.0;
    }
    if (unit_labels_.empty()) unit_labels_ = default_labels("unit_", n_units_);
    if (metric_labels_.empty()) metric_labels_ = default_labels("metric_", n_metrics_);
    if (unit_labels_.size() != n_units_ || metric_labels_.size() != n_metrics_) {
        throw Error(ErrorCode::DimensionMismatch, "label count does not match dimensions");
    }
}

ObservationTensor ObservationTensor::from_dense(const std::vector<Matrix>& slices,
                                                std::vector<std::string> unit_labels,
                                                std::vector<std::string> metric_labels) {
    if (slices.empty()) throw Error(ErrorCode::EmptyInput, "no metric slices");
    const auto n = static_cast<std::size_t>(slices.front().rows());
    const auto t = static_cast<std::size_t>(slices.front().cols());
    const std::size_t k = slices.size();
    std::vector<double> values(n * t * k);
    for (std::size_t m = 0; m < k; ++m) {
        if (static_cast<std::size_t>(slices[m].rows()) != n ||
            static_cast<std::size_t>(slices[m].cols()) != t) {
            throw Error(ErrorCode::DimensionMismatch, "metric slices differ in shape");
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < t; ++j) {
                values[(i * k + m) * t + j] = slices[m](static_cast<Eigen::Index>(i),
                                                        static_cast<Eigen::Index>(j));
            }
        }
    }
    return ObservationTensor(n, t, k, std::move(values), std::vector<std::uint8_t>(n * t * k, 1),
                             std::move(unit_labels), std::move(metric_labels));
}

std::optional<double> ObservationTensor::at(std::size_t unit, std::size_t period,
                                            std::size_t metric) const {
    const auto i = index(unit, period, metric);
    if (!present_[i]) return std::nullopt;
    return values_[i];
}

std::size_t ObservationTensor::missing_count() const {
    return static_cast<std::size_t>(std::count(present_.begin(), present_.end(), 0));
}

std::size_t ObservationTensor::missing_count(std::size_t metric) const {
    std::size_t missing = 0;
    for (std::size_t i = 0; i < n_units_; ++i) {
        for (std::size_t j = 0; j < n_periods_; ++j) missing += present(i, j, metric) ? 0 : 1;
    }
    return missing;
}

std::optional<std::size_t> ObservationTensor::find_unit(const std::string& label) const {
    const auto it = std::find(unit_labels_.begin(), unit_labels_.end(), label);
    if (it == unit_labels_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - unit_labels_.begin());
}

Matrix ObservationTensor::slice(std::size_t metric) const {
    Matrix out(n_units_, n_periods_);
    for (std::size_t i = 0; i < n_units_; ++i) {
        for (std::size_t j = 0; j < n_periods_; ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value(i, j, metric);
        }
    }
    return out;
}

Mask ObservationTensor::slice_mask(std::size_t metric) const {
    Mask out(n_units_, n_periods_);
    for (std::size_t i = 0; i < n_units_; ++i) {
        for (std::size_t j = 0; j < n_periods_; ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                present(i, j, metric) ? 1 : 0;
        }
    }
    return out;
}

Matrix ObservationTensor::unit_trajectories(std::size_t unit) const {
    Matrix out(n_metrics_, n_periods_);
    for (std::size_t k = 0; k < n_metrics_; ++k) {
        for (std::size_t j = 0; j < n_periods_; ++j) {
            out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = value(unit, j, k);
        }
    }
    return out;
}

Mask ObservationTensor::unit_mask(std::size_t unit) const {
    Mask out(n_metrics_, n_periods_);
    for (std::size_t k = 0; k < n_metrics_; ++k) {
        for (std::size_t j = 0; j < n_periods_; ++j) {
            out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
                present(unit, j, k) ? 1 : 0;
        }
    }
    return out;
}

ObservationTensor ObservationTensor::select_units(const std::vector<std::size_t>& units) const {
    std::vector<double> values;
    std::vector<std::uint8_t> present;
    std::vector<std::string> labels;
    const std::size_t stride = n_metrics_ * n_periods_;
    for (auto u : units) {
        if (u >= n_units_) throw Error(ErrorCode::InvalidArgument, "unit index out of range");
        values.insert(values.end(), values_.begin() + u * stride, values_.begin() + (u + 1) * stride);
        present.insert(present.end(), present_.begin() + u * stride,
                       present_.begin() + (u + 1) * stride);
        labels.push_back(unit_labels_[u]);
    }
    return ObservationTensor(units.size(), n_periods_, n_metrics_, std::move(values),
                             std::move(present), std::move(labels), metric_labels_);
}

ObservationTensor ObservationTensor::select_metrics(const std::vector<std::size_t>& metrics) const {
    const std::size_t k_out = metrics.size();
    std::vector<double> values(n_units_ * n_periods_ * k_out);
    std::vector<std::uint8_t> present(values.size());
    std::vector<std::string> labels;
    for (std::size_t m = 0; m < k_out; ++m) {
        if (metrics[m] >= n_metrics_) {
            throw Error(ErrorCode::InvalidArgument, "metric index out of range");
        }
        labels.push_back(metric_labels_[metrics[m]]);
    }
    for (std::size_t i = 0; i < n_units_; ++i) {
        for (std::size_t m = 0; m < k_out; ++m) {
            for (std::size_t j = 0; j < n_periods_; ++j) {
                const auto src = index(i, j, metrics[m]);
                const auto dst = (i * k_out + m) * n_periods_ + j;
                values[dst] = values_[src];
                present[dst] = present_[src];
            }
        }
    }
    return ObservationTensor(n_units_, n_periods_, k_out, std::move(values), std::move(present),
                             unit_labels_, std::move(labels));
}

ObservationTensor ObservationTensor::mask_bernoulli(double observed_prob, SplitMix64& rng,
                                                    std::size_t keep_unit) const {
    if (!(observed_prob > 0.0 && observed_prob <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "observation probability must be in (0, 1]");
    }
    auto present = present_;
    for (std::size_t c = 0; c < present.size(); ++c) {
        const double u = rng.uniform();
        const std::size_t unit = c / (n_metrics_ * n_periods_);
        if (unit != keep_unit && u >= observed_prob) present[c] = 0;
    }
    return ObservationTensor(n_units_, n_periods_, n_metrics_, values_, std::move(present),
                             unit_labels_, metric_labels_);
}

ObservationTensor build_tensor(const std::vector<MetricTable>& tables) {
    if (tables.empty()) throw Error(ErrorCode::EmptyInput, "no metric tables");
    const auto& first = tables.front();
    const std::size_t n = first.rows.size();
    if (n == 0) throw Error(ErrorCode::EmptyInput, "metric '" + first.name + "' has no rows");
    const std::size_t t = first.rows.front().size();
    if (t == 0) throw Error(ErrorCode::EmptyInput, "metric '" + first.name + "' has no periods");
    const std::size_t k = tables.size();

    std::vector<double> values(n * t * k, 0.0);
    std::vector<std::uint8_t> present(n * t * k, 0);
    std::vector<std::string> metric_labels;
    for (std::size_t m = 0; m < k; ++m) {
        const auto& table = tables[m];
        metric_labels.push_back(table.name);
        if (table.rows.size() != n) {
            throw Error(ErrorCode::DimensionMismatch,
                        "metric '" + table.name + "' has " + std::to_string(table.rows.size()) +
                            " units, expected " + std::to_string(n));
        }
        if (!table.unit_labels.empty() && !first.unit_labels.empty() &&
            table.unit_labels != first.unit_labels) {
            throw Error(ErrorCode::DimensionMismatch,
                        "metric '" + table.name + "' lists a different unit set");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (table.rows[i].size() != t) {
                throw Error(ErrorCode::DimensionMismatch,
                            "metric '" + table.name + "' has " +
                                std::to_string(table.rows[i].size()) + " periods, expected " +
                                std::to_string(t));
            }
            for (std::size_t j = 0; j < t; ++j) {
                const auto& cell = table.rows[i][j];
                if (!cell) continue;
                if (!std::isfinite(*cell)) {
                    throw Error(ErrorCode::NonFinite, "metric '" + table.name + "' unit " +
                                                          std::to_string(i) + " period " +
                                                          std::to_string(j));
                }
                values[(i * k + m) * t + j] = *cell;
                present[(i * k + m) * t + j] = 1;
            }
        }
    }
    return ObservationTensor(n, t, k, std::move(values), std::move(present), first.unit_labels,
                             std::move(metric_labels));
}

void PanelSplit::validate(const ObservationTensor& tensor) const {
    if (treatment_index >= tensor.n_units()) {
        throw Error(ErrorCode::InvalidArgument, "treatment index out of range");
    }
    if (t0 < 1 || t0 >= tensor.n_periods()) {
        throw Error(ErrorCode::InvalidArgument,
                    "t0 must satisfy 1 <= t0 < T (t0=" + std::to_string(t0) +
                        ", T=" + std::to_string(tensor.n_periods()) + ")");
    }
}

FlattenedPanel flatten(const ObservationTensor& tensor, const PanelSplit& split) {
    split.validate(tensor);
    const std::size_t n = tensor.n_units();
    const std::size_t t = tensor.n_periods();
    const std::size_t k = tensor.n_metrics();

    FlattenedPanel panel;
    panel.n_metrics = k;
    panel.n_periods = t;
    panel.t0 = split.t0;
    panel.donor.resize(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(k * t));
    panel.donor_present.resize(panel.donor.rows(), panel.donor.cols());

    for (std::size_t i = 0; i < n; ++i) {
        if (i != split.treatment_index) panel.donor_units.push_back(i);
    }
    for (std::size_t m = 0; m < k; ++m) {
        for (std::size_t j = 0; j < t; ++j) panel.donor_columns.push_back({m, j});
        for (std::size_t j = 0; j < split.t0; ++j) panel.treatment_columns.push_back({m, j});
    }
    for (std::size_t r = 0; r < panel.donor_units.size(); ++r) {
        const auto unit = panel.donor_units[r];
        for (std::size_t c = 0; c < panel.donor_columns.size(); ++c) {
            const auto [m, j] = panel.donor_columns[c];
            const auto ri = static_cast<Eigen::Index>(r);
            const auto ci = static_cast<Eigen::Index>(c);
            panel.donor(ri, ci) = tensor.value(unit, j, m);
            panel.donor_present(ri, ci) = tensor.present(unit, j, m) ? 1 : 0;
        }
    }
    panel.treatment_pre.resize(static_cast<Eigen::Index>(panel.treatment_columns.size()));
    panel.treatment_present.resize(panel.treatment_columns.size());
    for (std::size_t c = 0; c < panel.treatment_columns.size(); ++c) {
        const auto [m, j] = panel.treatment_columns[c];
        panel.treatment_pre(static_cast<Eigen::Index>(c)) = tensor.value(split.treatment_index, j, m);
        panel.treatment_present[c] = tensor.present(split.treatment_index, j, m) ? 1 : 0;
    }
    return panel;
}

ObservedFraction observed_fraction(const FlattenedPanel& panel) {
    const auto cells = static_cast<double>(panel.donor_present.size());
    if (cells == 0) throw Error(ErrorCode::EmptyInput, "donor matrix is empty");
    const auto observed = static_cast<double>(kernels::count_present(panel.donor_present));
    const double floor = 1.0 / cells;
    if (observed == 0) return {floor, true};
    return {std::max(observed / cells, floor), false};
}

}  // namespace mrsc
