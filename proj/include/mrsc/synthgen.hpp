#pragma once

// Synthetic panels with known ground truth: the logistic latent-variable
// generator (two metrics, pooled row/column latents, Gaussian noise) and an
// exact rank-r tensor generator. Row 0 of every bundle is the target unit,
// whose mean row is a fixed linear combination of the donor mean rows.

#include "mrsc/kernels.hpp"
#include "mrsc/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mrsc {

struct LvmSpec {
    std::size_t n_units = 100;  // donor rows; the tensor has n_units + 1 rows
    std::size_t n_periods = 50;
    std::size_t pool_size = 10;
    std::vector<double> alpha_per_metric{0.7, 0.3};
    double noise_sd = 1.0;
    bool share_latents = true;
    /// Length n_units. Empty selects the default: 5 donors with Uniform(0,1)
    /// weights normalised to sum to 1.
    std::vector<double> target_combination;
    std::uint64_t seed = 0;

    void validate() const;

    /// T = 50 RMSE experiment setup.
    static LvmSpec rmse_preset(std::size_t n_units, std::uint64_t seed);
    /// N = 100, T = 120 rank-table setup.
    static LvmSpec rank_table_preset(bool share_latents, std::uint64_t seed);
};

struct GroundTruthBundle {
    ObservationTensor tensor;       // noisy observations, row 0 = target
    ObservationTensor mean_tensor;  // noiseless means, same shape
    Vector beta_star;               // target mean row = beta_star^T donor mean rows
    std::string generator;
    std::string rng;
    std::uint64_t seed = 0;
};

/// 10 / (1 + exp(-theta - rho - alpha * theta * rho)).
double lvm_mean(double theta, double rho, double alpha);

GroundTruthBundle generate_lvm(const LvmSpec& spec);

/// Noiseless M_ijk = sum_z U_iz V_jz W_kz with Uniform(-1, 1) factors and
/// `n_donors` donor rows. The target row is a Uniform(0, 1)-weighted
/// combination of min(rank, n_donors) distinct donor rows.
GroundTruthBundle generate_lowrank_tensor(std::size_t n_donors, std::size_t n_periods,
                                          std::size_t n_metrics, std::size_t rank,
                                          std::uint64_t seed);

/// Relative residual of projecting the flattened target mean row onto the
/// span of the flattened donor mean rows.
double prop2_residual(const GroundTruthBundle& bundle);
double prop2_residual(const ObservationTensor& mean_tensor, std::size_t target_unit = 0);

}  // namespace mrsc
