#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "nhmdp/model.hpp"
#include "nhmdp/operators.hpp"

// Contraction machinery.  The one-stage operators shrink the span of the
// difference of two value vectors by the Dobrushin coefficient of the stage's
// row family; the risk-sensitive operators shrink it by a weakened coefficient
// that additionally pays for the reward span and the worst row-likelihood
// ratio.  Everything here is a plain function of the model data.

namespace nhmdp {

inline constexpr double kTailTol = 1e-12;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {

// Total-variation discrepancy of two probability rows: sum of positive parts.
inline double row_discrepancy(const Row& a, const Row& b) {
    double s = 0.0;
    for (std::size_t y = 0; y < a.size(); ++y) s += std::max(a[y] - b[y], 0.0);
    return s;
}

inline double dobrushin_of_rows(const std::vector<const Row*>& rows) {
    double d = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j)
            d = std::max(d, row_discrepancy(*rows[i], *rows[j]));
    return d;
}

// sup_y num[y] / den[y] over the support of num; infinite when num puts mass
// where den does not.
inline double ratio_of(const Row& num, const Row& den) {
    double r = 0.0;
    for (std::size_t y = 0; y < num.size(); ++y) {
        if (num[y] <= 0.0) continue;
        if (den[y] <= 0.0) return kInf;
        r = std::max(r, num[y] / den[y]);
    }
    return r;
}

// All rows of a stage's kernel family.  For the interval flavor a mixture
// row is a convex combination of the two endpoint rows, so the extreme
// discrepancies and ratios are attained at the endpoints; listing only the
// endpoint rows is exact, not an approximation.
inline std::vector<const Row*> stage_rows(const Stage& st) {
    std::vector<const Row*> rows;
    for (const Matrix& k : st.kernels)
        for (const Row& r : k) rows.push_back(&r);
    return rows;
}

}  // namespace detail

// Worst total-variation discrepancy between any two rows of the stage family,
// across states and actions.  Always in [0, 1].
inline double dobrushin_delta(const Model& m, std::size_t n) {
    return detail::dobrushin_of_rows(detail::stage_rows(m.stage_at(n)));
}

// Worst likelihood ratio between two rows of the same kernel (same action,
// different states).  Infinite when some action's rows have mismatched
// support; the risk-sensitive theory needs this finite.
inline double ratio_bound(const Model& m, std::size_t n) {
    const Stage& st = m.stage_at(n);
    double k = 1.0;
    for (const Matrix& kernel : st.kernels)
        for (const Row& a : kernel)
            for (const Row& b : kernel) {
                const double r = detail::ratio_of(a, b);
                if (r == kInf) return kInf;
                k = std::max(k, r);
            }
    return k;
}

// Span of the stage reward over all state/action entries.  Mixture rewards in
// the interval flavor are convex combinations of the endpoint rewards, so the
// endpoint entries already contain the extremes.
inline double reward_span(const Model& m, std::size_t n) {
    const Stage& st = m.stage_at(n);
    double lo = kInf, hi = -kInf;
    for (const auto& c : st.rewards)
        for (double v : c) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    return hi - lo;
}

// Policy-restricted variants: the chosen rows form one kernel (a row per
// state), so the ratio runs over all pairs of chosen rows.
inline double dobrushin_delta_policy(const Model& m, std::size_t n, const Selector& u) {
    const Matrix k = policy_kernel(m, n, u);
    std::vector<const Row*> rows;
    for (const Row& r : k) rows.push_back(&r);
    return detail::dobrushin_of_rows(rows);
}

inline double ratio_bound_policy(const Model& m, std::size_t n, const Selector& u) {
    const Matrix kernel = policy_kernel(m, n, u);
    double k = 1.0;
    for (const Row& a : kernel)
        for (const Row& b : kernel) {
            const double r = detail::ratio_of(a, b);
            if (r == kInf) return kInf;
            k = std::max(k, r);
        }
    return k;
}

inline double reward_span_policy(const Model& m, std::size_t n, const Selector& u) {
    return span(policy_reward(m, n, u));
}

namespace detail {

// R_n = sum_{i>=0} (prod_{j<i} delta_{n+j}) * cspan_{n+i}, evaluated exactly:
// finitely many prefix terms plus a geometric closed form once the stage
// index enters the periodic block (the tail there satisfies T = B + rho * T).
inline double remainder_series(const std::vector<double>& delta, const std::vector<double>& cspan,
                               std::size_t q, std::size_t p, std::size_t n) {
    double rho = 1.0, cmax = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        rho *= delta[q + j];
        cmax = std::max(cmax, cspan[q + j]);
    }
    if (cmax > 0.0 && rho >= 1.0) return kInf;

    double acc = 0.0, prod = 1.0;
    std::size_t k = n;
    while (k < q) {
        acc += prod * cspan[k];
        prod *= delta[k];
        ++k;
    }
    if (cmax == 0.0) return acc;
    double block = 0.0, bp = 1.0;
    for (std::size_t j = 0; j < p; ++j) {
        const std::size_t idx = q + (k - q + j) % p;
        block += bp * cspan[idx];
        bp *= delta[idx];
    }
    return acc + prod * block / (1.0 - rho);
}

}  // namespace detail

// Upper bound on the span of the tail-summed reward fluctuation from stage n.
// The series is evaluated in closed form, so the realized truncation error is
// zero; tail_tol is retained as the contract's cap on acceptable truncation.
inline double remainder_R(const Model& m, std::size_t n, double tail_tol = kTailTol) {
    (void)tail_tol;
    const std::size_t q = m.prefix_length(), p = m.period_length();
    std::vector<double> delta(q + p), cspan(q + p);
    for (std::size_t k = 0; k < q + p; ++k) {
        delta[k] = dobrushin_delta(m, k);
        cspan[k] = reward_span(m, k);
    }
    const std::size_t start = n < q ? n : q + (n - q) % p;
    return detail::remainder_series(delta, cspan, q, p, start);
}

// Rows reweighted by e^{g(y)} and renormalized; the transition law of the
// exponential-moment recursion.  Max-shifted over each row's support so large
// |g| cannot overflow.
inline Row tilted_row(const Row& row, const std::vector<double>& g) {
    double shift = -kInf;
    for (std::size_t y = 0; y < row.size(); ++y)
        if (row[y] > 0.0) shift = std::max(shift, g[y]);
    Row t(row.size(), 0.0);
    double z = 0.0;
    for (std::size_t y = 0; y < row.size(); ++y)
        if (row[y] > 0.0) {
            t[y] = row[y] * std::exp(g[y] - shift);
            z += t[y];
        }
    for (double& v : t) v /= z;
    return t;
}

inline Row tilted_kernel(const Model& m, std::size_t n, std::size_t x, std::size_t a,
                         const std::vector<double>& g) {
    return tilted_row(m.stage_at(n).kernels[a][x], g);
}

inline Matrix tilted_kernel(const Matrix& kernel, const std::vector<double>& g) {
    Matrix out(kernel.size());
    for (std::size_t x = 0; x < kernel.size(); ++x) out[x] = tilted_row(kernel[x], g);
    return out;
}

// Dobrushin coefficient of the stage family after tilting every row by g.
inline double tilted_delta(const Model& m, std::size_t n, const std::vector<double>& g) {
    const Stage& st = m.stage_at(n);
    std::vector<Matrix> tilted;
    for (const Matrix& k : st.kernels) tilted.push_back(tilted_kernel(k, g));
    std::vector<const Row*> rows;
    for (const Matrix& k : tilted)
        for (const Row& r : k) rows.push_back(&r);
    return detail::dobrushin_of_rows(rows);
}

// Contraction coefficient of the stage's risk-sensitive operator, uniform
// over the value vectors met during iteration: two tilted rows keep at least
// e^{-s} of the overlap the untilted rows had, where s bounds the span of the
// tilt exponents, s = |gamma| * reward-span + ln(ratio bound).
inline double risk_contraction_bound(const Model& m, std::size_t n, double gamma) {
    const double k = ratio_bound(m, n);
    if (k == kInf) return 1.0;
    const double s = std::abs(gamma) * reward_span(m, n) + std::log(k);
    const double d = 1.0 - std::exp(-s) * (1.0 - dobrushin_delta(m, n));
    return std::min(1.0, std::max(0.0, d));
}

struct Coefficients {
    std::vector<double> delta;        // per distinct stage (prefix then period)
    std::vector<double> ratio_K;      // may be +inf
    std::vector<double> reward_span;  // span of the stage reward
    std::vector<double> remainder_R;  // may be +inf
    double rho = 1.0;                 // product of delta over one period
    double sup_remainder = 0.0;       // sup over all stages of remainder_R
};

inline Coefficients compute_coefficients(const Model& m) {
    const std::size_t q = m.prefix_length(), p = m.period_length();
    Coefficients c;
    c.delta.resize(q + p);
    c.ratio_K.resize(q + p);
    c.reward_span.resize(q + p);
    c.remainder_R.resize(q + p);
    for (std::size_t k = 0; k < q + p; ++k) {
        c.delta[k] = dobrushin_delta(m, k);
        c.ratio_K[k] = ratio_bound(m, k);
        c.reward_span[k] = nhmdp::reward_span(m, k);
    }
    c.rho = 1.0;
    for (std::size_t j = 0; j < p; ++j) c.rho *= c.delta[q + j];
    c.sup_remainder = 0.0;
    for (std::size_t k = 0; k < q + p; ++k) {
        c.remainder_R[k] = detail::remainder_series(c.delta, c.reward_span, q, p, k);
        c.sup_remainder = std::max(c.sup_remainder, c.remainder_R[k]);
    }
    return c;
}

// Conservative risk contraction coefficients for every distinct stage.
inline std::vector<double> risk_deltas(const Model& m, double gamma) {
    std::vector<double> d(m.num_distinct_stages());
    for (std::size_t n = 0; n < d.size(); ++n) d[n] = risk_contraction_bound(m, n, gamma);
    return d;
}

}  // namespace nhmdp
