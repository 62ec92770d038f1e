#pragma once

// Multi-metric panel data: an N x T x K tensor of optionally-missing
// observations, the treatment/intervention split, and the flattened donor
// matrix that the estimator works on.

#include "mrsc/kernels.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace mrsc {

class SplitMix64;

/// One metric's unit-by-period table as read from a CSV file.
struct MetricTable {
    std::string name;
    std::vector<std::string> unit_labels;
    std::vector<std::vector<std::optional<double>>> rows;  // rows[unit][period]
};

class ObservationTensor {
public:
    /// `values` and `present` are indexed unit-major, then metric, then period:
    /// index(i, j, k) = (i * K + k) * T + j. Absent cells may hold any value.
    ObservationTensor(std::size_t n_units, std::size_t n_periods, std::size_t n_metrics,
                      std::vector<double> values, std::vector<std::uint8_t> present,
                      std::vector<std::string> unit_labels = {},
                      std::vector<std::string> metric_labels = {});

    /// Fully observed tensor from slices[k](i, j).
    static ObservationTensor from_dense(const std::vector<Matrix>& slices,
                                        std::vector<std::string> unit_labels = {},
                                        std::vector<std::string> metric_labels = {});

    std::size_t n_units() const { return n_units_; }
    std::size_t n_periods() const { return n_periods_; }
    std::size_t n_metrics() const { return n_metrics_; }

    bool present(std::size_t unit, std::size_t period, std::size_t metric) const {
        return present_[index(unit, period, metric)] != 0;
    }
    /// Stored value; 0 when absent.
    double value(std::size_t unit, std::size_t period, std::size_t metric) const {
        const auto at = index(unit, period, metric);
        return present_[at] ? values_[at] : 0.0;
    }
    std::optional<double> at(std::size_t unit, std::size_t period, std::size_t metric) const;

    std::size_t missing_count() const;
    std::size_t missing_count(std::size_t metric) const;

    const std::vector<std::string>& unit_labels() const { return unit_labels_; }
    const std::vector<std::string>& metric_labels() const { return metric_labels_; }
    std::optional<std::size_t> find_unit(const std::string& label) const;

    /// Unit x period slice of one metric, absent cells zero-filled.
    Matrix slice(std::size_t metric) const;
    Mask slice_mask(std::size_t metric) const;
    /// One unit's K x T trajectories, absent cells zero-filled.
    Matrix unit_trajectories(std::size_t unit) const;
    Mask unit_mask(std::size_t unit) const;

    ObservationTensor select_units(const std::vector<std::size_t>& units) const;
    ObservationTensor select_metrics(const std::vector<std::size_t>& metrics) const;

    /// Bernoulli(observed_prob) masking of every unit except `keep_unit`.
    /// One uniform draw per cell in index order, so masks at different
    /// probabilities from the same stream are nested.
    ObservationTensor mask_bernoulli(double observed_prob, SplitMix64& rng,
                                     std::size_t keep_unit) const;

private:
    std::size_t index(std::size_t unit, std::size_t period, std::size_t metric) const {
        return (unit * n_metrics_ + metric) * n_periods_ + period;
    }

    std::size_t n_units_;
    std::size_t n_periods_;
    std::size_t n_metrics_;
    std::vector<double> values_;
    std::vector<std::uint8_t> present_;
    std::vector<std::string> unit_labels_;
    std::vector<std::string> metric_labels_;
};

/// Builds a tensor from per-metric tables that share units and period count.
/// Throws DimensionMismatch, NonFinite or EmptyInput.
ObservationTensor build_tensor(const std::vector<MetricTable>& tables);

struct PanelSplit {
    std::size_t treatment_index = 0;
    std::size_t t0 = 1;  // number of pre-intervention periods

    /// Throws InvalidArgument unless treatment_index < N and 1 <= t0 < T.
    void validate(const ObservationTensor& tensor) const;
};

struct ColumnOrigin {
    std::size_t metric;
    std::size_t period;
    bool operator==(const ColumnOrigin&) const = default;
};

/// Donor matrix (N-1) x (K*T) and treatment pre-intervention vector (K*T0),
/// both concatenated metric-major: column k*T + j holds (metric k, period j).
struct FlattenedPanel {
    Matrix donor;        // zero where absent
    Mask donor_present;
    Vector treatment_pre;  // zero where absent
    std::vector<std::uint8_t> treatment_present;
    std::vector<ColumnOrigin> donor_columns;
    std::vector<ColumnOrigin> treatment_columns;
    std::vector<std::size_t> donor_units;  // tensor index of each donor row
    std::size_t n_metrics = 0;
    std::size_t n_periods = 0;
    std::size_t t0 = 0;

    std::size_t n_donors() const { return static_cast<std::size_t>(donor.rows()); }
};

FlattenedPanel flatten(const ObservationTensor& tensor, const PanelSplit& split);

struct ObservedFraction {
    double value;            // in (0, 1]
    bool missing_data_warning;  // true when nothing was observed and the floor applied
};

/// Share of present donor entries, floored at 1/((N-1)KT).
ObservedFraction observed_fraction(const FlattenedPanel& panel);

}  // namespace mrsc
