#include "mrsc/kernels.hpp"
#include "mrsc/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <set>

using namespace mrsc;

namespace {

Matrix noise(Eigen::Index rows, Eigen::Index cols, SplitMix64& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
    return m;
}

}  // namespace

TEST_CASE("rng is reproducible and streams differ") {
    SplitMix64 a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a() == b());
    SplitMix64 root(7);
    CHECK(root.split(1)() != root.split(2)());
    CHECK(root.split(1)() == SplitMix64(7).split(1)());
}

TEST_CASE("splitmix64 matches the published reference sequence") {
    // First outputs for seed 0 of the reference splitmix64.c.
    SplitMix64 rng(0);
    CHECK(rng() == 0xe220a8397b1dcdafULL);
    CHECK(rng() == 0x6e789e6aa1b965f4ULL);
    CHECK(rng() == 0x06c45d188009454fULL);
}

TEST_CASE("uniform and normal draws have the right moments") {
    SplitMix64 rng(11);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        CHECK_MESSAGE((u >= 0.0 && u < 1.0), "uniform out of range");
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
    }
    CHECK(std::abs(su / n - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
    CHECK(std::abs(sn / n) < 5 / std::sqrt(double(n)));
    CHECK(std::abs(sn2 / n - 1.0) < 5 * std::sqrt(2.0 / n));
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) seen.insert(rng.below(10));
    CHECK(seen.size() == 10);
}

TEST_CASE("serial and OpenMP kernels agree bit for bit") {
    SplitMix64 rng(3);
    const Matrix values = noise(37, 53, rng);
    Mask present(37, 53);
    for (Eigen::Index j = 0; j < 53; ++j)
        for (Eigen::Index i = 0; i < 37; ++i) present(i, j) = rng.uniform() < 0.7;

    const Matrix zs = kernels::serial::zero_filled(values, present);
    CHECK(zs == kernels::omp::zero_filled(values, present));
    CHECK(kernels::serial::count_present(present) == kernels::omp::count_present(present));

    const Matrix u = noise(37, 5, rng), v = noise(53, 5, rng);
    Vector s(5);
    s << 5, 4, 3, 2, 1;
    for (std::size_t r = 0; r <= 5; ++r) {
        CHECK(kernels::serial::low_rank_reconstruct(u, s, v, r, 1.5) ==
              kernels::omp::low_rank_reconstruct(u, s, v, r, 1.5));
    }
    const Vector beta = noise(37, 1, rng);
    CHECK(kernels::serial::combine_rows(beta, values) == kernels::omp::combine_rows(beta, values));
}

TEST_CASE("kernels compute what they claim") {
    Matrix values(2, 2);
    values << 1, 2, 3, 4;
    Mask present(2, 2);
    present << 1, 0, 0, 1;
    Matrix expected(2, 2);
    expected << 1, 0, 0, 4;
    CHECK(kernels::zero_filled(values, present) == expected);
    CHECK(kernels::count_present(present) == 2);

    Vector beta(2);
    beta << 0.5, 2;
    RowVector combined = kernels::combine_rows(beta, values);
    CHECK(combined(0) == doctest::Approx(6.5));
    CHECK(combined(1) == doctest::Approx(9.0));

    Matrix u(2, 1), v(2, 1);
    u << 1, 0;
    v << 0, 1;
    Vector s(1);
    s << 3;
    const Matrix m = kernels::low_rank_reconstruct(u, s, v, 1, 2.0);
    CHECK(m(0, 1) == doctest::Approx(6.0));
    CHECK(m.cwiseAbs().sum() == doctest::Approx(6.0));
    CHECK(kernels::low_rank_reconstruct(u, s, v, 0, 2.0).isZero(0));
}

TEST_CASE("MRSC_THREADS caps the worker count") {
    setenv("MRSC_THREADS", "1", 1);
    CHECK(kernels::max_threads() == 1);
    setenv("MRSC_THREADS", "garbage", 1);
    CHECK(kernels::max_threads() >= 1);
    unsetenv("MRSC_THREADS");
}
