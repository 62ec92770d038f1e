#include "mrsc/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cassert>
#include <cstdlib>
#include <string>

namespace mrsc::kernels {

int max_threads() {
    int threads = omp_get_max_threads();
    if (const char* env = std::getenv("MRSC_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap > 0) threads = std::min(threads, cap);
        } catch (const std::exception&) {
            // unparseable cap is ignored
        }
    }
    return std::max(threads, 1);
}

namespace omp {

Matrix zero_filled(const Matrix& values, const Mask& present) {
    assert(values.rows() == present.rows() && values.cols() == present.cols());
    Matrix out(values.rows(), values.cols());
    const Eigen::Index cols = values.cols();
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
            out(i, j) = present(i, j) ? values(i, j) : 0.0;
        }
    }
    return out;
}

std::size_t count_present(const Mask& present) {
    std::size_t count = 0;
    const Eigen::Index cols = present.cols();
#pragma omp parallel for schedule(static) reduction(+ : count) num_threads(max_threads())
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < present.rows(); ++i) {
            count += present(i, j) ? 1 : 0;
        }
    }
    return count;
}

Matrix low_rank_reconstruct(const Matrix& u, const Vector& s, const Matrix& v,
                            Eigen::Index rank, double scale) {
    assert(rank <= s.size() && rank <= u.cols() && rank <= v.cols());
    Matrix out(u.rows(), v.rows());
    const Eigen::Index cols = v.rows();
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
            double acc = 0.0;
            for (Eigen::Index z = 0; z < rank; ++z) {
                acc += s(z) * u(i, z) * v(j, z);
            }
            out(i, j) = scale * acc;
        }
    }
    return out;
}

RowVector combine_rows(const Vector& weights, const Matrix& rows) {
    assert(weights.size() == rows.rows());
    RowVector out(rows.cols());
    const Eigen::Index cols = rows.cols();
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (Eigen::Index j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            acc += weights(i) * rows(i, j);
        }
        out(j) = acc;
    }
    return out;
}

}  // namespace omp
}  // namespace mrsc::kernels
