#include "mrsc/denoise.hpp"

#include "mrsc/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mrsc {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_spectrum(std::span<const double> spectrum) {
    if (spectrum.empty()) throw Error(ErrorCode::InvalidArgument, "empty spectrum");
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        if (!(spectrum[i] >= 0.0) || !std::isfinite(spectrum[i])) {
            throw Error(ErrorCode::InvalidArgument, "spectrum entries must be finite and >= 0");
        }
        if (i > 0 && spectrum[i] > spectrum[i - 1]) {
            throw Error(ErrorCode::InvalidArgument, "spectrum must be sorted descending");
        }
    }
}

std::span<const double> as_span(const Vector& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

void validate(const ThresholdPolicy& policy) {
    std::visit(Overloaded{
                   [](const FixedRank& p) {
                       if (p.rank < 1) {
                           throw Error(ErrorCode::InvalidArgument, "FixedRank needs rank >= 1");
                       }
                   },
                   [](const SingularValueCutoff& p) {
                       if (!(p.lambda >= 0.0) || !std::isfinite(p.lambda)) {
                           throw Error(ErrorCode::InvalidArgument, "cutoff must be finite and >= 0");
                       }
                   },
                   [](const EnergyFraction& p) {
                       if (!(p.fraction > 0.0 && p.fraction <= 1.0)) {
                           throw Error(ErrorCode::InvalidArgument,
                                       "energy fraction must be in (0, 1]");
                       }
                   },
               },
               policy);
}

std::string describe(const ThresholdPolicy& policy) {
    std::ostringstream out;
    out.precision(17);
    std::visit(Overloaded{
                   [&](const FixedRank& p) { out << "rank=" << p.rank; },
                   [&](const SingularValueCutoff& p) { out << "lambda=" << p.lambda; },
                   [&](const EnergyFraction& p) { out << "energy=" << p.fraction; },
               },
               policy);
    return out.str();
}

SingularValueDecomposition svd(const Matrix& m) {
    if (m.size() == 0) throw Error(ErrorCode::EmptyInput, "SVD of an empty matrix");
    if (!m.allFinite()) throw Error(ErrorCode::SvdFailure, "matrix has non-finite entries");
    Eigen::BDCSVD<Matrix> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success || !solver.singularValues().allFinite()) {
        throw Error(ErrorCode::SvdFailure, "singular value decomposition did not converge");
    }
    SingularValueDecomposition out{solver.matrixU(), solver.singularValues(), solver.matrixV()};
    for (Eigen::Index z = 0; z < out.u.cols(); ++z) {
        Eigen::Index pivot = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < out.u.rows(); ++i) {
            const double mag = std::abs(out.u(i, z));
            if (mag > best) {
                best = mag;
                pivot = i;
            }
        }
        if (out.u(pivot, z) < 0.0) {
            out.u.col(z) *= -1.0;
            out.v.col(z) *= -1.0;
        }
    }
    return out;
}

Vector singular_values(const Matrix& m) {
    if (m.size() == 0) throw Error(ErrorCode::EmptyInput, "SVD of an empty matrix");
    if (!m.allFinite()) throw Error(ErrorCode::SvdFailure, "matrix has non-finite entries");
    Eigen::BDCSVD<Matrix> solver(m);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorCode::SvdFailure, "singular value decomposition did not converge");
    }
    return solver.singularValues();
}

EffectiveRank effective_rank(std::span<const double> spectrum, double energy_threshold) {
    if (!(energy_threshold > 0.0 && energy_threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "energy threshold must be in (0, 1]");
    }
    check_spectrum(spectrum);
    double total = 0.0;
    for (double s : spectrum) total += s * s;
    if (total == 0.0) return {0, true};
    double running = 0.0;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        running += spectrum[i] * spectrum[i];
        if (running / total >= energy_threshold) return {i + 1, false};
    }
    // Rounding can leave running/total a hair below 1.
    return {spectrum.size(), false};
}

std::size_t numerical_rank(std::span<const double> spectrum, double relative_tol) {
    check_spectrum(spectrum);
    const double cutoff = relative_tol * spectrum.front();
    return static_cast<std::size_t>(
        std::count_if(spectrum.begin(), spectrum.end(), [&](double s) { return s > cutoff; }));
}

double default_rank_tolerance(std::size_t rows, std::size_t cols) {
    return static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon();
}

std::string describe(const RankCriterion& criterion) {
    std::ostringstream out;
    out.precision(17);
    std::visit(Overloaded{
                   [&](const EnergyCriterion& c) { out << "energy>=" << c.fraction; },
                   [&](const ToleranceCriterion& c) {
                       if (c.relative_tol > 0.0) {
                           out << "s_i>" << c.relative_tol << "*s_1";
                       } else {
                           out << "s_i>max(m,n)*eps*s_1";
                       }
                   },
               },
               criterion);
    return out.str();
}

std::size_t rank_under(const RankCriterion& criterion, const Vector& spectrum, std::size_t rows,
                       std::size_t cols) {
    return std::visit(
        Overloaded{
            [&](const EnergyCriterion& c) { return effective_rank(as_span(spectrum), c.fraction).rank; },
            [&](const ToleranceCriterion& c) {
                const double tol = c.relative_tol > 0.0 ? c.relative_tol
                                                        : default_rank_tolerance(rows, cols);
                return numerical_rank(as_span(spectrum), tol);
            },
        },
        criterion);
}

DenoisedModel hsvt(const FlattenedPanel& panel, const ThresholdPolicy& policy,
                   kernels::Backend backend) {
    validate(policy);
    if (panel.donor.size() == 0) throw Error(ErrorCode::EmptyInput, "donor matrix is empty");
    const auto max_rank = static_cast<std::size_t>(std::min(panel.donor.rows(), panel.donor.cols()));
    if (const auto* fixed = std::get_if<FixedRank>(&policy); fixed && fixed->rank > max_rank) {
        throw Error(ErrorCode::RankTooLarge, "rank " + std::to_string(fixed->rank) +
                                                 " exceeds min(N-1, K*T) = " +
                                                 std::to_string(max_rank));
    }

    const auto rho = observed_fraction(panel);
    const Matrix filled = kernels::zero_filled(panel.donor, panel.donor_present, backend);
    const auto decomposition = svd(filled);
    const Vector& s = decomposition.s;

    DenoisedModel model;
    model.singular_values = s;
    model.rho_hat = rho.value;
    model.missing_data_warning = rho.missing_data_warning;
    model.n_metrics = panel.n_metrics;
    model.n_periods = panel.n_periods;
    model.all_zero_spectrum = s.size() == 0 || s(0) == 0.0;

    model.retained_rank = std::visit(
        Overloaded{
            [&](const FixedRank& p) { return p.rank; },
            [&](const SingularValueCutoff& p) {
                return static_cast<std::size_t>((s.array() >= p.lambda).count());
            },
            [&](const EnergyFraction& p) {
                return effective_rank(as_span(s), p.fraction).rank;
            },
        },
        policy);

    model.m_hat = kernels::low_rank_reconstruct(decomposition.u, s, decomposition.v,
                                                static_cast<Eigen::Index>(model.retained_rank),
                                                1.0 / rho.value, backend);
    return model;
}

DenoisedModel raw_model(const FlattenedPanel& panel) {
    if (panel.donor.size() == 0) throw Error(ErrorCode::EmptyInput, "donor matrix is empty");
    const auto rho = observed_fraction(panel);
    DenoisedModel model;
    model.m_hat = kernels::zero_filled(panel.donor, panel.donor_present);
    model.singular_values = singular_values(model.m_hat);
    model.rho_hat = rho.value;
    model.missing_data_warning = rho.missing_data_warning;
    model.n_metrics = panel.n_metrics;
    model.n_periods = panel.n_periods;
    model.all_zero_spectrum = model.singular_values(0) == 0.0;
    model.retained_rank = model.all_zero_spectrum
                              ? 0
                              : numerical_rank(as_span(model.singular_values),
                                               default_rank_tolerance(panel.n_donors(),
                                                                      static_cast<std::size_t>(
                                                                          panel.donor.cols())));
    return model;
}

DiagnosticReport rank_preservation_diagnostic(const ObservationTensor& tensor,
                                              double energy_threshold, double pass_ratio) {
    return rank_preservation_diagnostic(tensor, EnergyCriterion{energy_threshold}, pass_ratio);
}

DiagnosticReport rank_preservation_diagnostic(const ObservationTensor& tensor,
                                              const RankCriterion& criterion, double pass_ratio) {
    if (!(pass_ratio >= 1.0)) throw Error(ErrorCode::InvalidArgument, "pass_ratio must be >= 1");
    const std::size_t n = tensor.n_units();
    const std::size_t t = tensor.n_periods();
    const std::size_t k = tensor.n_metrics();

    DiagnosticReport report;
    report.pass_ratio = pass_ratio;
    report.criterion = describe(criterion);
    if (const auto* energy = std::get_if<EnergyCriterion>(&criterion)) {
        report.energy_threshold = energy->fraction;
    } else {
        report.energy_threshold = std::numeric_limits<double>::quiet_NaN();
    }

    Matrix combined(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k * t));
    std::size_t max_rank = 0;
    for (std::size_t m = 0; m < k; ++m) {
        const Matrix slice = tensor.slice(m);
        combined.middleCols(static_cast<Eigen::Index>(m * t), static_cast<Eigen::Index>(t)) = slice;
        report.per_metric_spectrum.push_back(singular_values(slice));
        const auto rank = rank_under(criterion, report.per_metric_spectrum.back(), n, t);
        report.per_metric_rank.push_back(rank);
        max_rank = std::max(max_rank, rank);
    }
    report.combined_spectrum = singular_values(combined);
    report.combined_rank = rank_under(criterion, report.combined_spectrum, n, k * t);

    if (k == 1) {
        report.ratio = 1.0;
        report.passed = true;
        report.note = "single metric: diagnostic passes trivially";
        return report;
    }
    if (max_rank == 0) {
        report.ratio = report.combined_rank == 0 ? 1.0 : std::numeric_limits<double>::infinity();
        report.note = "every metric slice has an all-zero spectrum";
    } else {
        report.ratio = static_cast<double>(report.combined_rank) / static_cast<double>(max_rank);
    }
    report.passed = report.ratio <= pass_ratio;
    return report;
}

}  // namespace mrsc
