#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <vector>

#include "fixtures.hpp"
#include "nhmdp/coefficients.hpp"
#include "nhmdp/model.hpp"
#include "nhmdp/operators.hpp"
#include "nhmdp/rng.hpp"

using namespace nhmdp;

namespace {

// Oracle: total-variation discrepancy by enumeration of all 2^S subsets,
// max_B sum_{y in B} (a_y - b_y).  Independent of the positive-part formula.
double tv_subset_oracle(const Row& a, const Row& b) {
    const std::size_t S = a.size();
    double best = 0.0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << S); ++mask) {
        double s = 0.0;
        for (std::size_t y = 0; y < S; ++y)
            if (mask & (std::size_t{1} << y)) s += a[y] - b[y];
        best = std::max(best, s);
    }
    return best;
}

double delta_oracle(const Model& m, std::size_t n) {
    const auto rows = detail::stage_rows(m.stage_at(n));
    double d = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows.size(); ++j)
            d = std::max(d, tv_subset_oracle(*rows[i], *rows[j]));
    return d;
}

// Oracle: ratio bound by enumeration of all nonempty subsets,
// sup_B num(B)/den(B); infinite when num charges a set den does not.
double ratio_subset_oracle(const Row& num, const Row& den) {
    const std::size_t S = num.size();
    double best = 0.0;
    for (std::size_t mask = 1; mask < (std::size_t{1} << S); ++mask) {
        double n = 0.0, d = 0.0;
        for (std::size_t y = 0; y < S; ++y)
            if (mask & (std::size_t{1} << y)) {
                n += num[y];
                d += den[y];
            }
        if (n <= 0.0) continue;
        if (d <= 0.0) return kInf;
        best = std::max(best, n / d);
    }
    return best;
}

double ratio_oracle(const Model& m, std::size_t n) {
    double k = 1.0;
    for (const Matrix& kernel : m.stage_at(n).kernels)
        for (const Row& a : kernel)
            for (const Row& b : kernel) {
                const double r = ratio_subset_oracle(a, b);
                if (r == kInf) return kInf;
                k = std::max(k, r);
            }
    return k;
}

// Oracle: remainder series by brute-force partial sums; the factor product is
// asserted negligible before the comparison is trusted.
double remainder_oracle(const Model& m, std::size_t n, int terms = 600) {
    double acc = 0.0, prod = 1.0;
    for (int i = 0; i < terms; ++i) {
        acc += prod * reward_span(m, n + static_cast<std::size_t>(i));
        prod *= dobrushin_delta(m, n + static_cast<std::size_t>(i));
    }
    REQUIRE(prod < 1e-30);
    return acc;
}

Model one_action(std::vector<Matrix> kernels, std::vector<std::vector<double>> rewards) {
    Model m;
    const std::size_t S = kernels[0][0].size();
    for (std::size_t i = 0; i < S; ++i) m.states.push_back("s" + std::to_string(i));
    m.actions = {"only"};
    for (std::size_t n = 0; n < kernels.size(); ++n)
        m.period.push_back(Stage{{kernels[n]}, {rewards[n]}});
    return m;
}

}  // namespace

TEST_CASE("discrepancy and ratio match subset-enumeration oracles on random models") {
    rng::Stream st(101);
    fixtures::RandomModelSpec spec;
    spec.max_prefix = 2;
    for (int rep = 0; rep < 30; ++rep) {
        spec.interval = rep % 5 == 4;
        const Model m = fixtures::random_model(st, spec);
        for (std::size_t n = 0; n < m.num_distinct_stages(); ++n) {
            CHECK(dobrushin_delta(m, n) == doctest::Approx(delta_oracle(m, n)).epsilon(1e-13));
            const double k = ratio_bound(m, n);
            const double ko = ratio_oracle(m, n);
            if (ko == kInf)
                CHECK(k == kInf);
            else
                CHECK(k == doctest::Approx(ko).epsilon(1e-12));
        }
    }
}

TEST_CASE("coefficient values on pinned rows") {
    const Model m = one_action({{{0.9, 0.1}, {0.2, 0.8}}}, {{0.0, 1.0}});
    CHECK(dobrushin_delta(m, 0) == doctest::Approx(0.7).epsilon(1e-15));

    const Model k2 = one_action({{{0.5, 0.5}, {0.25, 0.75}}}, {{0.0, 1.0}});
    CHECK(ratio_bound(k2, 0) == 2.0);
    CHECK(dobrushin_delta(k2, 0) == 0.25);

    const Model iid = fixtures::iid2();
    CHECK(dobrushin_delta(iid, 0) == 0.0);  // identical rows
    CHECK(ratio_bound(iid, 0) == 1.0);

    const Model dj = fixtures::load("disjoint.json");
    CHECK(dobrushin_delta(dj, 0) == 1.0);
    CHECK(ratio_bound(dj, 0) == kInf);

    const Model two = fixtures::load("twoaction.json");
    // Rows are shared across the two actions, so the worst pair is across
    // states: (0.7,0.3) vs (0.2,0.8).
    CHECK(dobrushin_delta(two, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(ratio_bound(two, 0) == doctest::Approx(3.5).epsilon(1e-15));
    CHECK(reward_span(two, 0) == 2.0);  // entries -0.5 .. 1.5 across actions
}

TEST_CASE("policy-restricted coefficients consider exactly the chosen rows") {
    const Model two = fixtures::load("twoaction.json");
    const Selector u{0.0, 1.0};  // action a in s0, action b in s1
    CHECK(dobrushin_delta_policy(two, 0, u) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(ratio_bound_policy(two, 0, u) == doctest::Approx(3.5).epsilon(1e-15));
    CHECK(reward_span_policy(two, 0, u) == 0.0);  // 0.5 in both states

    const Selector same{0.0, 0.0};
    CHECK(reward_span_policy(two, 0, same) == 1.0);

    // Constant selector on the identical-row model: one distinct row.
    const Model iid = fixtures::iid2();
    CHECK(dobrushin_delta_policy(iid, 0, Selector{0.0, 0.0}) == 0.0);
    CHECK(ratio_bound_policy(iid, 0, Selector{0.0, 0.0}) == 1.0);

    // The disjoint model's chosen rows have mismatched support.
    const Model dj = fixtures::load("disjoint.json");
    CHECK(ratio_bound_policy(dj, 0, Selector{0.0, 0.0}) == kInf);
}

TEST_CASE("interval stages: every mixture row stays within the endpoint extremes") {
    const Model m = fixtures::load("interval.json");
    const Stage& st = m.period[0];
    const double dlt = dobrushin_delta(m, 0);
    const double kb = ratio_bound(m, 0);
    std::vector<Row> mixes;
    for (int i = 0; i <= 10; ++i) {
        const double t = i / 10.0;
        for (std::size_t x = 0; x < 2; ++x) {
            Row r(2);
            for (std::size_t y = 0; y < 2; ++y)
                r[y] = (1.0 - t) * st.kernels[0][x][y] + t * st.kernels[1][x][y];
            mixes.push_back(r);
        }
    }
    for (const Row& a : mixes)
        for (const Row& b : mixes)
            CHECK(tv_subset_oracle(a, b) <= dlt + 1e-12);
    // Within one mixture kernel (same t), the cross-state ratio stays below
    // the endpoint ratio bound.
    for (int i = 0; i <= 10; ++i) {
        const Row& a = mixes[static_cast<std::size_t>(2 * i)];
        const Row& b = mixes[static_cast<std::size_t>(2 * i + 1)];
        CHECK(ratio_subset_oracle(a, b) <= kb + 1e-12);
        CHECK(ratio_subset_oracle(b, a) <= kb + 1e-12);
    }
}

TEST_CASE("remainder series closed form matches brute-force partial sums") {
    rng::Stream st(202);
    fixtures::RandomModelSpec spec;
    spec.max_prefix = 2;
    for (int rep = 0; rep < 20; ++rep) {
        const Model m = fixtures::random_model(st, spec);
        for (std::size_t n = 0; n < m.num_distinct_stages(); ++n) {
            const double r = remainder_R(m, n);
            const double ro = remainder_oracle(m, n);
            CHECK(r == doctest::Approx(ro).epsilon(1e-12));
        }
    }
}

TEST_CASE("remainder values on pinned models") {
    SUBCASE("constant data: R = span / (1 - delta) exactly") {
        const Model m = fixtures::constant_data_model(0.5);
        CHECK(dobrushin_delta(m, 0) == 0.5);
        CHECK(std::abs(remainder_R(m, 0) - 2.0) <= 1e-10);
        CHECK(std::abs(remainder_R(m, 7) - 2.0) <= 1e-10);
    }
    SUBCASE("zero contraction: R equals the stage reward span") {
        const Model m = fixtures::iid2();
        CHECK(remainder_R(m, 0) == 1.0);
    }
    SUBCASE("period two with deltas (0.5, 1)") {
        const Model m = one_action({{{1.0, 0.0}, {0.5, 0.5}}, {{1.0, 0.0}, {0.0, 1.0}}},
                                   {{0.0, 1.0}, {0.0, 1.0}});
        CHECK(dobrushin_delta(m, 0) == 0.5);
        CHECK(dobrushin_delta(m, 1) == 1.0);
        // rho = 0.5; R_0 = (1 + 0.5)/(1 - 0.5), R_1 = (1 + 1)/(1 - 0.5).
        CHECK(remainder_R(m, 0) == doctest::Approx(3.0).epsilon(1e-14));
        CHECK(remainder_R(m, 1) == doctest::Approx(4.0).epsilon(1e-14));
    }
    SUBCASE("prefix stage adds its own span on top of the periodic tail") {
        Model m = fixtures::constant_data_model(0.5);  // periodic R = 2
        Stage pre = m.period[0];
        pre.rewards[0] = {0.0, 2.0};
        m.prefix = {pre};
        CHECK(remainder_R(m, 0) == doctest::Approx(3.0).epsilon(1e-14));  // 2 + 0.5*2
        CHECK(remainder_R(m, 1) == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(remainder_R(m, 5) == doctest::Approx(2.0).epsilon(1e-14));
    }
    SUBCASE("no contraction and fluctuating rewards diverge") {
        const Model m = fixtures::load("disjoint.json");
        CHECK(remainder_R(m, 0) == kInf);
    }
    SUBCASE("no contraction but constant rewards stay finite") {
        const Model m = one_action({{{1.0, 0.0}, {0.0, 1.0}}}, {{5.0, 5.0}});
        CHECK(remainder_R(m, 0) == 0.0);
    }
}

TEST_CASE("tilted rows follow the exponential reweighting") {
    const Row half{0.5, 0.5};
    const Row t = tilted_row(half, {0.0, std::log(3.0)});
    CHECK(t[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(t[1] == doctest::Approx(0.75).epsilon(1e-14));

    // Point masses are fixed points of tilting, whatever the exponent.
    const Row point{1.0, 0.0};
    const Row tp = tilted_row(point, {123.0, -456.0});
    CHECK(tp[0] == 1.0);
    CHECK(tp[1] == 0.0);

    // Huge exponents must not overflow thanks to the max shift.
    const Row th = tilted_row(half, {1000.0, 2000.0});
    CHECK(std::isfinite(th[0]));
    CHECK(th[0] == doctest::Approx(0.0).epsilon(1e-200));
    CHECK(th[1] == doctest::Approx(1.0).epsilon(1e-12));

    // Zero-probability targets stay at zero even with large exponents there.
    const Row tz = tilted_row({0.5, 0.5, 0.0}, {0.0, 0.0, 1000.0});
    CHECK(tz[2] == 0.0);
    CHECK(tz[0] == doctest::Approx(0.5).epsilon(1e-14));

    const Model iid = fixtures::iid2();
    const Row via_model = tilted_kernel(iid, 0, 0, 0, {0.0, std::log(3.0)});
    CHECK(via_model[1] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("constant tilts leave the contraction coefficient unchanged") {
    rng::Stream st(303);
    fixtures::RandomModelSpec spec;
    for (int rep = 0; rep < 10; ++rep) {
        const Model m = fixtures::random_model(st, spec);
        for (std::size_t n = 0; n < m.num_distinct_stages(); ++n) {
            const std::vector<double> g(m.num_states(), 2.5);
            CHECK(tilted_delta(m, n, g) ==
                  doctest::Approx(dobrushin_delta(m, n)).epsilon(1e-13));
        }
    }
}

TEST_CASE("tilted contraction never exceeds the overlap bound: 1000 random tilts") {
    rng::Stream st(404);
    fixtures::RandomModelSpec spec;
    int done = 0;
    while (done < 1000) {
        spec.interval = done % 7 == 3;
        const Model m = fixtures::random_model(st, spec);
        for (int rep = 0; rep < 5; ++rep, ++done) {
            const std::size_t n = st.next_below(m.num_distinct_stages());
            const double scale = std::exp(st.next_range(-3.0, 2.0));
            const std::vector<double> g = fixtures::random_vector(st, m.num_states(), scale);
            const double bound = 1.0 - std::exp(-span(g)) * (1.0 - dobrushin_delta(m, n));
            const double td = tilted_delta(m, n, g);
            CHECK(td <= bound + 1e-10);
            CHECK(td <= 1.0 + 1e-15);
            CHECK(td >= 0.0);
        }
    }
}

TEST_CASE("risk contraction bound on pinned models") {
    // Two constant kernels with ratio bound exactly 1 and discrepancy 0.5:
    // the bound is 1 - e^{-|gamma| * span} * (1 - 0.5).
    const Model m = fixtures::constant_row_model();
    CHECK(dobrushin_delta(m, 0) == 0.5);
    CHECK(ratio_bound(m, 0) == 1.0);
    CHECK(reward_span(m, 0) == 1.0);
    CHECK(risk_contraction_bound(m, 0, 1.0) ==
          doctest::Approx(1.0 - 0.5 * std::exp(-1.0)).epsilon(1e-15));
    CHECK(risk_contraction_bound(m, 0, -1.0) ==
          doctest::Approx(1.0 - 0.5 * std::exp(-1.0)).epsilon(1e-15));
    // gamma -> 0 recovers the plain coefficient.
    CHECK(risk_contraction_bound(m, 0, 0.0) == 0.5);
    CHECK(risk_contraction_bound(m, 0, 1e-12) == doctest::Approx(0.5).epsilon(1e-9));

    // Infinite ratio bound degrades to the trivial coefficient 1.
    const Model dj = fixtures::load("disjoint.json");
    CHECK(risk_contraction_bound(dj, 0, 0.5) == 1.0);

    // Zero reward span and unit ratio: nothing to pay, bound equals delta.
    Model flat = fixtures::iid2();
    flat.period[0].rewards[0] = {2.0, 2.0};
    CHECK(risk_contraction_bound(flat, 0, 5.0) == 0.0);
}

TEST_CASE("risk contraction bound dominates the plain coefficient and caps at 1") {
    rng::Stream st(505);
    fixtures::RandomModelSpec spec;
    for (int rep = 0; rep < 20; ++rep) {
        const Model m = fixtures::random_model(st, spec);
        for (std::size_t n = 0; n < m.num_distinct_stages(); ++n)
            for (double g : {-5.0, -1.0, -0.1, 0.1, 1.0, 5.0}) {
                const double b = risk_contraction_bound(m, n, g);
                CHECK(b >= dobrushin_delta(m, n) - 1e-15);
                CHECK(b <= 1.0);
                CHECK(b == risk_contraction_bound(m, n, -g));  // sign-symmetric
            }
    }
}

TEST_CASE("compute_coefficients aggregates the per-stage values consistently") {
    rng::Stream st(606);
    fixtures::RandomModelSpec spec;
    spec.max_prefix = 2;
    for (int rep = 0; rep < 10; ++rep) {
        const Model m = fixtures::random_model(st, spec);
        const Coefficients c = compute_coefficients(m);
        const std::size_t q = m.prefix_length(), p = m.period_length();
        REQUIRE(c.delta.size() == q + p);
        double rho = 1.0, sup = 0.0;
        for (std::size_t n = 0; n < q + p; ++n) {
            CHECK(c.delta[n] == dobrushin_delta(m, n));
            CHECK(c.ratio_K[n] == ratio_bound(m, n));
            CHECK(c.reward_span[n] == reward_span(m, n));
            CHECK(c.remainder_R[n] == remainder_R(m, n));
            CHECK(c.delta[n] >= 0.0);
            CHECK(c.delta[n] <= 1.0);
            CHECK(c.ratio_K[n] >= 1.0);
            sup = std::max(sup, c.remainder_R[n]);
        }
        for (std::size_t j = 0; j < p; ++j) rho *= c.delta[q + j];
        CHECK(c.rho == doctest::Approx(rho).epsilon(1e-15));
        CHECK(c.sup_remainder == sup);
    }
}

TEST_CASE("risk_deltas lists the per-stage conservative coefficients") {
    const Model m = fixtures::load("prefix.json");
    const auto d = risk_deltas(m, 0.7);
    REQUIRE(d.size() == m.num_distinct_stages());
    for (std::size_t n = 0; n < d.size(); ++n)
        CHECK(d[n] == risk_contraction_bound(m, n, 0.7));
}
