#include "mrsc/synthgen.hpp"

#include "mrsc/error.hpp"
#include "mrsc/regression.hpp"
#include "mrsc/rng.hpp"

#include <cmath>
#include <numeric>

namespace mrsc {

namespace {

constexpr std::uint64_t kLatentStream = 1;
constexpr std::uint64_t kTargetStream = 2;
constexpr std::uint64_t kMetricLatentStream = 100;
constexpr std::uint64_t kNoiseStream = 1000;
constexpr std::size_t kDefaultTargetDonors = 5;

struct Latents {
    std::vector<double> theta;
    std::vector<double> rho;
};

Latents draw_latents(SplitMix64 rng, std::size_t pool_size, std::size_t n_rows,
                     std::size_t n_cols) {
    std::vector<double> row_pool(pool_size);
    std::vector<double> col_pool(pool_size);
    for (auto& x : row_pool) x = rng.uniform();
    for (auto& x : col_pool) x = rng.uniform();
    Latents out{std::vector<double>(n_rows), std::vector<double>(n_cols)};
    for (auto& x : out.theta) x = row_pool[rng.below(pool_size)];
    for (auto& x : out.rho) x = col_pool[rng.below(pool_size)];
    return out;
}

/// Picks `count` distinct indices from [0, n) by partial Fisher-Yates.
std::vector<std::size_t> pick_distinct(SplitMix64& rng, std::size_t n, std::size_t count) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

/// Assembles the bundle from donor mean slices (n_donors x T each).
GroundTruthBundle assemble(const std::vector<Matrix>& donor_means, const Vector& beta,
                           double noise_sd, SplitMix64 rng) {
    const auto n = donor_means.front().rows();
    const auto t = donor_means.front().cols();
    std::vector<Matrix> means;
    std::vector<Matrix> observed;
    for (std::size_t k = 0; k < donor_means.size(); ++k) {
        Matrix mean(n + 1, t);
        mean.bottomRows(n) = donor_means[k];
        mean.row(0) = kernels::serial::combine_rows(beta, donor_means[k]);
        Matrix obs = mean;
        if (noise_sd > 0.0) {
            SplitMix64 noise = rng.split(kNoiseStream + k);
            for (Eigen::Index i = 0; i < n + 1; ++i) {
                for (Eigen::Index j = 0; j < t; ++j) obs(i, j) += noise_sd * noise.normal();
            }
        }
        means.push_back(std::move(mean));
        observed.push_back(std::move(obs));
    }
    std::vector<std::string> units{"target"};
    for (Eigen::Index i = 0; i < n; ++i) units.push_back("donor_" + std::to_string(i));
    std::vector<std::string> metrics;
    for (std::size_t k = 0; k < donor_means.size(); ++k) metrics.push_back("metric_" + std::to_string(k));
    return GroundTruthBundle{ObservationTensor::from_dense(observed, units, metrics),
                             ObservationTensor::from_dense(means, units, metrics), beta, "", "",
                             0};
}

}  // namespace

void LvmSpec::validate() const {
    if (n_units < 1 || n_periods < 1) {
        throw Error(ErrorCode::InvalidArgument, "generator needs at least one donor and period");
    }
    if (pool_size < 1) throw Error(ErrorCode::InvalidArgument, "pool_size must be >= 1");
    if (alpha_per_metric.empty()) throw Error(ErrorCode::InvalidArgument, "no metrics requested");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
        throw Error(ErrorCode::InvalidArgument, "noise_sd must be finite and >= 0");
    }
    if (!target_combination.empty() && target_combination.size() != n_units) {
        throw Error(ErrorCode::DimensionMismatch, "target combination must have n_units entries");
    }
}

LvmSpec LvmSpec::rmse_preset(std::size_t n_units, std::uint64_t seed) {
    LvmSpec spec;
    spec.n_units = n_units;
    spec.n_periods = 50;
    spec.seed = seed;
    return spec;
}

LvmSpec LvmSpec::rank_table_preset(bool share_latents, std::uint64_t seed) {
    LvmSpec spec;
    spec.n_units = 100;
    spec.n_periods = 120;
    spec.share_latents = share_latents;
    spec.seed = seed;
    return spec;
}

double lvm_mean(double theta, double rho, double alpha) {
    return 10.0 / (1.0 + std::exp(-theta - rho - alpha * theta * rho));
}

GroundTruthBundle generate_lvm(const LvmSpec& spec) {
    spec.validate();
    const SplitMix64 root(spec.seed);
    const std::size_t n = spec.n_units;
    const std::size_t t = spec.n_periods;

    const Latents shared = draw_latents(root.split(kLatentStream), spec.pool_size, n, t);
    std::vector<Matrix> donor_means;
    for (std::size_t k = 0; k < spec.alpha_per_metric.size(); ++k) {
        const Latents latents =
            (spec.share_latents || k == 0)
                ? shared
                : draw_latents(root.split(kMetricLatentStream + k), spec.pool_size, n, t);
        Matrix mean(n, t);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < t; ++j) {
                mean(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    lvm_mean(latents.theta[i], latents.rho[j], spec.alpha_per_metric[k]);
            }
        }
        donor_means.push_back(std::move(mean));
    }

    Vector beta = Vector::Zero(static_cast<Eigen::Index>(n));
    if (!spec.target_combination.empty()) {
        for (std::size_t i = 0; i < n; ++i) beta(static_cast<Eigen::Index>(i)) = spec.target_combination[i];
    } else {
        SplitMix64 rng = root.split(kTargetStream);
        const auto chosen = pick_distinct(rng, n, std::min(kDefaultTargetDonors, n));
        double total = 0.0;
        std::vector<double> w(chosen.size());
        for (auto& x : w) {
            x = rng.uniform();
            total += x;
        }
        for (std::size_t c = 0; c < chosen.size(); ++c) {
            beta(static_cast<Eigen::Index>(chosen[c])) = total > 0.0 ? w[c] / total : 1.0 / w.size();
        }
    }

    auto bundle = assemble(donor_means, beta, spec.noise_sd, root);
    bundle.generator = spec.share_latents ? "lvm-logistic(shared latents)"
                                          : "lvm-logistic(per-metric latents)";
    bundle.rng = std::string(SplitMix64::name);
    bundle.seed = spec.seed;
    return bundle;
}

GroundTruthBundle generate_lowrank_tensor(std::size_t n_donors, std::size_t n_periods,
                                          std::size_t n_metrics, std::size_t rank,
                                          std::uint64_t seed) {
    if (n_donors < 1 || n_periods < 1 || n_metrics < 1 || rank < 1) {
        throw Error(ErrorCode::InvalidArgument, "low-rank generator needs positive dimensions");
    }
    const SplitMix64 root(seed);
    SplitMix64 rng = root.split(kLatentStream);
    const auto r = static_cast<Eigen::Index>(rank);
    Matrix u(static_cast<Eigen::Index>(n_donors), r);
    Matrix v(static_cast<Eigen::Index>(n_periods), r);
    Matrix w(static_cast<Eigen::Index>(n_metrics), r);
    for (Matrix* factor : {&u, &v, &w}) {
        for (Eigen::Index i = 0; i < factor->rows(); ++i) {
            for (Eigen::Index z = 0; z < r; ++z) (*factor)(i, z) = rng.uniform(-1.0, 1.0);
        }
    }
    std::vector<Matrix> donor_means;
    for (std::size_t k = 0; k < n_metrics; ++k) {
        Matrix mean(u.rows(), v.rows());
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
            for (Eigen::Index j = 0; j < v.rows(); ++j) {
                double acc = 0.0;
                for (Eigen::Index z = 0; z < r; ++z) {
                    acc += u(i, z) * v(j, z) * w(static_cast<Eigen::Index>(k), z);
                }
                mean(i, j) = acc;
            }
        }
        donor_means.push_back(std::move(mean));
    }

    SplitMix64 target_rng = root.split(kTargetStream);
    const auto chosen = pick_distinct(target_rng, n_donors, std::min(rank, n_donors));
    Vector beta = Vector::Zero(static_cast<Eigen::Index>(n_donors));
    for (auto c : chosen) beta(static_cast<Eigen::Index>(c)) = target_rng.uniform();

    auto bundle = assemble(donor_means, beta, 0.0, root);
    bundle.generator = "lowrank(rank=" + std::to_string(rank) + ")";
    bundle.rng = std::string(SplitMix64::name);
    bundle.seed = seed;
    return bundle;
}

double prop2_residual(const GroundTruthBundle& bundle) {
    return prop2_residual(bundle.mean_tensor, 0);
}

double prop2_residual(const ObservationTensor& mean_tensor, std::size_t target_unit) {
    if (target_unit >= mean_tensor.n_units()) {
        throw Error(ErrorCode::InvalidArgument, "target unit out of range");
    }
    const auto k = static_cast<Eigen::Index>(mean_tensor.n_metrics());
    const auto t = static_cast<Eigen::Index>(mean_tensor.n_periods());
    auto flat_row = [&](std::size_t unit) {
        const Matrix traj = mean_tensor.unit_trajectories(unit);
        RowVector row(k * t);
        for (Eigen::Index m = 0; m < k; ++m) row.segment(m * t, t) = traj.row(m);
        return row;
    };
    Matrix donors(static_cast<Eigen::Index>(mean_tensor.n_units() - 1), k * t);
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < mean_tensor.n_units(); ++i) {
        if (i != target_unit) donors.row(r++) = flat_row(i);
    }
    const Vector target = flat_row(target_unit).transpose();
    const double norm = target.norm();
    if (norm == 0.0) return 0.0;
    const Vector beta = min_norm_least_squares(donors, target);
    return (target - donors.transpose() * beta).norm() / norm;
}

}  // namespace mrsc
