#pragma once

// Dense inner loops of the estimator. Each kernel has a serial reference and
// an OpenMP version. Every output element is computed by the same sequence of
// floating point operations in both, so results are bit-identical; the test
// suite checks this and mrsc_bench compares their timings.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>

namespace mrsc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

namespace kernels {

enum class Backend { Serial, OpenMP };

namespace serial {

Matrix zero_filled(const Matrix& values, const Mask& present);
std::size_t count_present(const Mask& present);

/// scale * sum_{z < rank} s_z u_z v_z^T, summed in increasing z.
Matrix low_rank_reconstruct(const Matrix& u, const Vector& s, const Matrix& v,
                            Eigen::Index rank, double scale);

/// weights^T rows, summed in increasing row index per column.
RowVector combine_rows(const Vector& weights, const Matrix& rows);

}  // namespace serial

namespace omp {

Matrix zero_filled(const Matrix& values, const Mask& present);
std::size_t count_present(const Mask& present);
Matrix low_rank_reconstruct(const Matrix& u, const Vector& s, const Matrix& v,
                            Eigen::Index rank, double scale);
RowVector combine_rows(const Vector& weights, const Matrix& rows);

}  // namespace omp

inline Matrix zero_filled(const Matrix& values, const Mask& present,
                          Backend backend = Backend::OpenMP) {
    return backend == Backend::Serial ? serial::zero_filled(values, present)
                                      : omp::zero_filled(values, present);
}

inline std::size_t count_present(const Mask& present, Backend backend = Backend::OpenMP) {
    return backend == Backend::Serial ? serial::count_present(present)
                                      : omp::count_present(present);
}

inline Matrix low_rank_reconstruct(const Matrix& u, const Vector& s, const Matrix& v,
                                   Eigen::Index rank, double scale,
                                   Backend backend = Backend::OpenMP) {
    return backend == Backend::Serial ? serial::low_rank_reconstruct(u, s, v, rank, scale)
                                      : omp::low_rank_reconstruct(u, s, v, rank, scale);
}

inline RowVector combine_rows(const Vector& weights, const Matrix& rows,
                              Backend backend = Backend::OpenMP) {
    return backend == Backend::Serial ? serial::combine_rows(weights, rows)
                                      : omp::combine_rows(weights, rows);
}

/// Worker count for parallel regions; honours MRSC_THREADS when set.
int max_threads();

}  // namespace kernels
}  // namespace mrsc
