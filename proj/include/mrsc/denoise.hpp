#pragma once

// Hard singular value thresholding (HSVT) of the flattened donor matrix and
// the rank-preservation diagnostic.

#include "mrsc/kernels.hpp"
#include "mrsc/tensor.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace mrsc {

struct FixedRank {
    std::size_t rank;
};
struct SingularValueCutoff {
    double lambda;
};
struct EnergyFraction {
    double fraction;
};

/// Which singular components HSVT keeps.
using ThresholdPolicy = std::variant<FixedRank, SingularValueCutoff, EnergyFraction>;

void validate(const ThresholdPolicy& policy);
std::string describe(const ThresholdPolicy& policy);

struct DenoisedModel {
    Matrix m_hat;            // (N-1) x (K*T)
    Vector singular_values;  // full spectrum of the zero-filled donor, descending, before 1/rho
    std::size_t retained_rank = 0;
    double rho_hat = 1.0;
    std::size_t n_metrics = 0;
    std::size_t n_periods = 0;
    bool missing_data_warning = false;
    bool all_zero_spectrum = false;

    /// Metric k's (N-1) x T block of m_hat.
    auto block(std::size_t metric) const {
        return m_hat.middleCols(static_cast<Eigen::Index>(metric * n_periods),
                                static_cast<Eigen::Index>(n_periods));
    }
    std::size_t n_donors() const { return static_cast<std::size_t>(m_hat.rows()); }
};

/// Zero-fills missing donor entries, takes the SVD and keeps the components
/// selected by `policy`, rescaled by 1/rho_hat.
/// Throws RankTooLarge and SvdFailure.
DenoisedModel hsvt(const FlattenedPanel& panel, const ThresholdPolicy& policy,
                   kernels::Backend backend = kernels::Backend::OpenMP);

/// The zero-filled donor matrix itself, no thresholding or rescaling. Used by
/// the regression-without-denoising comparator.
DenoisedModel raw_model(const FlattenedPanel& panel);

struct SingularValueDecomposition {
    Matrix u;
    Vector s;
    Matrix v;
};

/// Thin SVD with the sign of each left singular vector fixed so its
/// largest-magnitude entry is positive (first such entry on ties).
SingularValueDecomposition svd(const Matrix& m);
Vector singular_values(const Matrix& m);

struct EffectiveRank {
    std::size_t rank = 0;
    bool all_zero = false;
};

/// Smallest m with sum_{i<=m} s_i^2 / sum_i s_i^2 >= energy_threshold.
/// Throws InvalidArgument if the spectrum is empty, unsorted or negative.
EffectiveRank effective_rank(std::span<const double> spectrum, double energy_threshold);

/// Number of s_i > relative_tol * s_1.
std::size_t numerical_rank(std::span<const double> spectrum, double relative_tol);

/// max(rows, cols) * machine epsilon.
double default_rank_tolerance(std::size_t rows, std::size_t cols);

struct EnergyCriterion {
    double fraction = 0.995;
};
/// relative_tol <= 0 selects default_rank_tolerance for the matrix shape.
struct ToleranceCriterion {
    double relative_tol = 0.0;
};
using RankCriterion = std::variant<EnergyCriterion, ToleranceCriterion>;

std::string describe(const RankCriterion& criterion);
std::size_t rank_under(const RankCriterion& criterion, const Vector& spectrum, std::size_t rows,
                       std::size_t cols);

struct DiagnosticReport {
    std::vector<std::size_t> per_metric_rank;
    std::size_t combined_rank = 0;
    double ratio = 1.0;  // combined / max(per_metric)
    bool passed = true;
    double energy_threshold = 0.995;  // NaN when a tolerance criterion was used
    double pass_ratio = 1.25;
    std::string criterion;
    std::vector<Vector> per_metric_spectrum;
    Vector combined_spectrum;
    std::string note;
};

DiagnosticReport rank_preservation_diagnostic(const ObservationTensor& tensor,
                                              double energy_threshold = 0.995,
                                              double pass_ratio = 1.25);
DiagnosticReport rank_preservation_diagnostic(const ObservationTensor& tensor,
                                              const RankCriterion& criterion,
                                              double pass_ratio = 1.25);

}  // namespace mrsc
