#include "mrsc/error.hpp"
#include "mrsc/rng.hpp"
#include "mrsc/tensor.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

using namespace mrsc;

namespace {

MetricTable table(const std::string& name, std::size_t units, std::size_t periods, double base) {
    MetricTable t;
    t.name = name;
    for (std::size_t i = 0; i < units; ++i) {
        t.unit_labels.push_back("u" + std::to_string(i));
        std::vector<std::optional<double>> row;
        for (std::size_t j = 0; j < periods; ++j) row.push_back(base + 10.0 * i + j);
        t.rows.push_back(row);
    }
    return t;
}

bool throws_code(ErrorCode code, const auto& body) {
    try {
        body();
    } catch (const Error& e) {
        return e.code() == code;
    }
    return false;
}

ObservationTensor ramp(std::size_t n, std::size_t t, std::size_t k) {
    std::vector<Matrix> slices;
    for (std::size_t m = 0; m < k; ++m) {
        Matrix s(n, t);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < t; ++j) s(i, j) = 100.0 * m + 10.0 * i + j;
        slices.push_back(s);
    }
    return ObservationTensor::from_dense(slices);
}

}  // namespace

TEST_CASE("build_tensor from complete tables") {
    const auto tensor = build_tensor({table("a", 3, 4, 0), table("b", 3, 4, 100)});
    CHECK(tensor.n_units() == 3);
    CHECK(tensor.n_periods() == 4);
    CHECK(tensor.n_metrics() == 2);
    CHECK(tensor.missing_count() == 0);
    CHECK(tensor.value(2, 3, 1) == 123.0);
    CHECK(tensor.metric_labels() == std::vector<std::string>{"a", "b"});
    CHECK(tensor.find_unit("u1") == 1u);
    CHECK_FALSE(tensor.find_unit("nope"));
}

TEST_CASE("a blank cell becomes exactly one missing entry") {
    auto b = table("b", 3, 4, 100);
    b.rows[1][2].reset();
    const auto tensor = build_tensor({table("a", 3, 4, 0), b});
    CHECK(tensor.missing_count() == 1);
    CHECK(tensor.missing_count(1) == 1);
    CHECK(tensor.missing_count(0) == 0);
    CHECK_FALSE(tensor.present(1, 2, 1));
    CHECK_FALSE(tensor.at(1, 2, 1));
    CHECK(tensor.value(1, 2, 1) == 0.0);
}

TEST_CASE("build_tensor rejects inconsistent or bad input") {
    CHECK(throws_code(ErrorCode::DimensionMismatch,
                      [] { build_tensor({table("a", 3, 4, 0), table("b", 3, 5, 0)}); }));
    CHECK(throws_code(ErrorCode::DimensionMismatch,
                      [] { build_tensor({table("a", 3, 4, 0), table("b", 4, 4, 0)}); }));
    auto relabeled = table("b", 3, 4, 0);
    relabeled.unit_labels[0] = "other";
    CHECK(throws_code(ErrorCode::DimensionMismatch,
                      [&] { build_tensor({table("a", 3, 4, 0), relabeled}); }));
    CHECK(throws_code(ErrorCode::EmptyInput, [] { build_tensor({}); }));
    auto bad = table("a", 3, 4, 0);
    bad.rows[0][0] = std::numeric_limits<double>::infinity();
    CHECK(throws_code(ErrorCode::NonFinite, [&] { build_tensor({bad}); }));
}

TEST_CASE("constructor invariants") {
    CHECK_THROWS_AS(ObservationTensor(1, 2, 1, {1, 2}, {1, 1}), Error);
    CHECK_THROWS_AS(ObservationTensor(2, 2, 1, {1, 2, 3}, {1, 1, 1}), Error);
    CHECK_THROWS_AS(ObservationTensor(2, 1, 1, {1, NAN}, {1, 1}), Error);
    // NaN in an absent cell is fine: absent values are never read
    ObservationTensor ok(2, 1, 1, {1, NAN}, {1, 0});
    CHECK(ok.missing_count() == 1);
    CHECK(ok.unit_labels()[1] == "unit_1");
}

TEST_CASE("flatten concatenates metric-major") {
    // N=2, T=2, K=2; donor row 1 holds [[1,2],[3,4]] per metric
    std::vector<Matrix> slices(2, Matrix(2, 2));
    slices[0] << 9, 9, 1, 2;
    slices[1] << 9, 9, 3, 4;
    const auto panel = flatten(ObservationTensor::from_dense(slices), {0, 1});
    REQUIRE(panel.donor.rows() == 1);
    REQUIRE(panel.donor.cols() == 4);
    CHECK(panel.donor(0, 0) == 1);
    CHECK(panel.donor(0, 1) == 2);
    CHECK(panel.donor(0, 2) == 3);
    CHECK(panel.donor(0, 3) == 4);
    CHECK(panel.donor_units == std::vector<std::size_t>{1});
}

TEST_CASE("flatten with K=1 is the slice minus the treatment row") {
    const auto tensor = ramp(4, 5, 1);
    const auto panel = flatten(tensor, {2, 3});
    const Matrix slice = tensor.slice(0);
    CHECK(panel.donor.row(0) == slice.row(0));
    CHECK(panel.donor.row(1) == slice.row(1));
    CHECK(panel.donor.row(2) == slice.row(3));
    CHECK(panel.treatment_pre == slice.row(2).head(3).transpose());
}

TEST_CASE("treatment columns for a 3x3x2 tensor with t0=2") {
    const auto panel = flatten(ramp(3, 3, 2), {0, 2});
    CHECK(panel.treatment_pre.size() == 4);
    const std::vector<ColumnOrigin> expected{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    CHECK(panel.treatment_columns == expected);
    CHECK(panel.donor.cols() == 6);
    CHECK(panel.donor_columns.size() == 6);
}

TEST_CASE("flatten round-trips through the column map") {
    SplitMix64 rng(5);
    const auto tensor = ramp(6, 7, 3).mask_bernoulli(0.6, rng, 0);
    const auto panel = flatten(tensor, {0, 4});
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t c = 0; c < panel.donor_columns.size(); ++c) {
        const auto [k, j] = panel.donor_columns[c];
        seen.insert({k, j});
        for (std::size_t r = 0; r < panel.n_donors(); ++r) {
            const auto unit = panel.donor_units[r];
            CHECK(panel.donor(r, c) == tensor.value(unit, j, k));
            CHECK(bool(panel.donor_present(r, c)) == tensor.present(unit, j, k));
        }
    }
    CHECK(seen.size() == 21);
    for (std::size_t c = 0; c < panel.treatment_columns.size(); ++c) {
        const auto [k, j] = panel.treatment_columns[c];
        CHECK(j < 4);
        CHECK(panel.treatment_pre(c) == tensor.value(0, j, k));
    }
}

TEST_CASE("flatten depends on metric order, not metric names") {
    const auto tensor = ramp(4, 3, 2);
    const auto renamed = ObservationTensor::from_dense({tensor.slice(0), tensor.slice(1)}, {},
                                                       {"zeta", "alpha"});
    CHECK(flatten(tensor, {0, 2}).donor == flatten(renamed, {0, 2}).donor);
    const auto swapped = tensor.select_metrics({1, 0});
    CHECK(flatten(tensor, {0, 2}).donor != flatten(swapped, {0, 2}).donor);
}

TEST_CASE("split validation") {
    const auto tensor = ramp(3, 4, 1);
    CHECK_THROWS_AS(flatten(tensor, {0, 0}), Error);
    CHECK_THROWS_AS(flatten(tensor, {0, 4}), Error);
    CHECK_THROWS_AS(flatten(tensor, {3, 2}), Error);
    CHECK_NOTHROW(flatten(tensor, {2, 3}));
}

TEST_CASE("observed fraction") {
    CHECK(observed_fraction(flatten(ramp(3, 4, 2), {0, 2})).value == 1.0);

    // 2x2 donor with one missing entry: N=3, T=2, K=1
    std::vector<double> values(6, 1.0);
    std::vector<std::uint8_t> present{1, 1, 1, 0, 1, 1};
    const ObservationTensor one_missing(3, 2, 1, values, present);
    const auto f = observed_fraction(flatten(one_missing, {0, 1}));
    CHECK(f.value == 0.75);
    CHECK_FALSE(f.missing_data_warning);

    // all-missing 3x4 donor: the floor keeps 1/rho finite
    std::vector<std::uint8_t> none(16, 0);
    for (int j = 0; j < 4; ++j) none[j] = 1;
    const ObservationTensor empty(4, 4, 1, std::vector<double>(16, 2.0), none);
    const auto floor = observed_fraction(flatten(empty, {0, 2}));
    CHECK(floor.value == doctest::Approx(1.0 / 12.0));
    CHECK(floor.missing_data_warning);
    CHECK(std::isfinite(1.0 / floor.value));
}

TEST_CASE("observed fraction ignores donor order") {
    SplitMix64 rng(9);
    const auto tensor = ramp(8, 5, 2).mask_bernoulli(0.5, rng, 0);
    const auto base = observed_fraction(flatten(tensor, {0, 3})).value;
    std::vector<std::size_t> order{0, 7, 3, 1, 6, 2, 5, 4};
    CHECK(observed_fraction(flatten(tensor.select_units(order), {0, 3})).value == base);
}

TEST_CASE("bernoulli masks are nested across probabilities and keep the treatment row") {
    const auto tensor = ramp(30, 10, 2);
    SplitMix64 a(1), b(1);
    const auto loose = tensor.mask_bernoulli(0.9, a, 0);
    const auto tight = tensor.mask_bernoulli(0.5, b, 0);
    for (std::size_t i = 0; i < 30; ++i)
        for (std::size_t j = 0; j < 10; ++j)
            for (std::size_t k = 0; k < 2; ++k) {
                if (tight.present(i, j, k)) CHECK(loose.present(i, j, k));
                if (i == 0) CHECK(tight.present(i, j, k));
            }
    const double frac = observed_fraction(flatten(tight, {0, 5})).value;
    CHECK(std::abs(frac - 0.5) < 0.06);
}
