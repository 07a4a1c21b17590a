#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nhmdp/coefficients.hpp"
#include "nhmdp/model.hpp"
#include "nhmdp/operators.hpp"

// Long-run solver.  The periodic block of stages induces a self-map of the
// anchored value space (apply the stage operators backward through one full
// period); that map contracts the span by the product of the per-stage
// contraction coefficients, so iterating the sweep converges geometrically to
// the unique anchored fixed point.  Prefix stages are then filled by a single
// exact backward pass, and per-stage gains come from the anchor component of
// the one-stage images.

namespace nhmdp {

inline constexpr double kDefaultTol = 1e-10;
inline constexpr std::size_t kDefaultKmax = 1'000'000;

struct SolverError : std::runtime_error {
    enum class Kind { no_contraction, ratio_infinite, kmax_exceeded };

    Kind kind;
    std::size_t stage;    // offending stage, or Violation::npos when global
    double achieved;      // last sweep increment or measured contraction

    SolverError(Kind k, std::size_t st, double a, const std::string& msg)
        : std::runtime_error(msg), kind(k), stage(st), achieved(a) {}
};

struct Solution {
    std::vector<SpanVector> w;    // anchored relative values, one per distinct stage
    std::vector<double> lambda;   // per-stage gains, same indexing
    PolicySchedule policy;
    double long_run_gain = 0.0;   // mean of the periodic gains
    double gamma = 0.0;           // 0 for the plain average criterion
    std::size_t iterations_used = 0;  // one-stage operator applications
    double apriori_bound = 0.0;   // guaranteed span accuracy after the run
    std::vector<double> residual;     // per-stage fixed-point equation defect
    double max_residual = 0.0;    // worst entry of residual
};

namespace detail {

struct StageOps {
    std::function<std::vector<double>(std::size_t, const std::vector<double>&)> apply;
    // Contraction factor realized by the sweep at this stage; only consulted
    // when no conservative certificate holds (risk solves with a weak bound).
    std::function<double(std::size_t, const std::vector<double>&)> measured_delta;
};

inline double span_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double lo = kInf, hi = -kInf;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    return hi - lo;
}

// Cyclic backward iteration over the periodic block, then one exact prefix
// pass, then a diagnostic pass that recomputes gains and measures residuals
// against the final snapshots.  Returns sweeps completed via out-param.
inline Solution core_solve(const Model& m, const StageOps& ops, double tol, std::size_t kmax,
                           const std::optional<std::vector<double>>& v0, bool monitor,
                           std::size_t& sweeps_out) {
    const std::size_t q = m.prefix_length(), p = m.period_length();
    Solution s;
    s.w.assign(q + p, SpanVector{});
    s.lambda.assign(q + p, 0.0);

    std::vector<double> v(m.num_states(), 0.0);
    if (v0) {
        if (v0->size() != m.num_states())
            throw std::invalid_argument("initial vector must have one entry per state");
        v = SpanVector::anchor_at(*v0, m.anchor).values;
    }

    std::vector<std::optional<SpanVector>> snap(p);
    std::size_t iter = 0, sweeps = 0, bad_streak = 0;
    double last_inc = kInf;
    for (;;) {
        double sweep_inc = 0.0;
        double measured_product = 1.0;
        for (std::size_t jj = 0; jj < p; ++jj) {
            const std::size_t j = p - 1 - jj;
            const std::size_t n = q + j;
            if (iter >= kmax)
                throw SolverError(SolverError::Kind::kmax_exceeded, n, last_inc,
                                  "iteration budget exhausted before the periodic sweep "
                                  "converged (last sweep increment " +
                                      std::to_string(last_inc) + ")");
            if (monitor && ops.measured_delta) measured_product *= ops.measured_delta(n, v);
            std::vector<double> u = ops.apply(n, v);
            ++iter;
            SpanVector a = SpanVector::anchor_at(std::move(u), m.anchor);
            const double inc = snap[j] ? span_diff(a.values, snap[j]->values) : kInf;
            sweep_inc = std::max(sweep_inc, inc);
            v = a.values;
            snap[j] = std::move(a);
        }
        ++sweeps;
        last_inc = sweep_inc;
        if (monitor) {
            bad_streak = measured_product >= 1.0 ? bad_streak + 1 : 0;
            if (bad_streak >= 4)
                throw SolverError(SolverError::Kind::no_contraction, Violation::npos,
                                  measured_product,
                                  "no contraction observed: the measured per-sweep "
                                  "contraction product stayed >= 1 for 4 sweeps (last " +
                                      std::to_string(measured_product) + ")");
        }
        if (sweep_inc < tol) break;
    }
    for (std::size_t j = 0; j < p; ++j) s.w[q + j] = std::move(*snap[j]);

    // Prefix stages follow from the periodic block by one exact pass.
    v = s.w[q].values;
    for (std::size_t ii = 0; ii < q; ++ii) {
        const std::size_t n = q - 1 - ii;
        std::vector<double> u = ops.apply(n, v);
        ++iter;
        s.w[n] = SpanVector::anchor_at(std::move(u), m.anchor);
        v = s.w[n].values;
    }

    // Diagnostics: gains and residuals from the final snapshots, so the
    // reported pair (w, lambda) satisfies its defining equation up to
    // max_residual at every stage including the periodic wrap.
    s.residual.assign(q + p, 0.0);
    s.max_residual = 0.0;
    for (std::size_t n = 0; n < q + p; ++n) {
        const std::size_t next = n + 1 == q + p ? q : n + 1;
        std::vector<double> u = ops.apply(n, s.w[next].values);
        s.lambda[n] = u[m.anchor];
        const SpanVector a = SpanVector::anchor_at(std::move(u), m.anchor);
        s.residual[n] = span_diff(a.values, s.w[n].values);
        s.max_residual = std::max(s.max_residual, s.residual[n]);
    }

    double g = 0.0;
    for (std::size_t j = 0; j < p; ++j) g += s.lambda[q + j];
    s.long_run_gain = g / static_cast<double>(p);
    s.iterations_used = iter;
    sweeps_out = sweeps;
    return s;
}

inline double periodic_product(const Model& m, const std::vector<double>& delta) {
    double rho = 1.0;
    for (std::size_t j = 0; j < m.period_length(); ++j) rho *= delta[m.prefix_length() + j];
    return rho;
}

inline double apriori_from(const Model& m, const std::vector<double>& delta, double rho,
                           std::size_t sweeps) {
    if (rho >= 1.0) return kInf;
    const std::size_t q = m.prefix_length(), p = m.period_length();
    std::vector<double> cspan(q + p);
    for (std::size_t n = 0; n < q + p; ++n) cspan[n] = reward_span(m, n);
    double sup = 0.0;
    for (std::size_t n = 0; n < q + p; ++n)
        sup = std::max(sup, remainder_series(delta, cspan, q, p, n));
    const double power = sweeps > 0 ? static_cast<double>(sweeps - 1) : 0.0;
    return std::pow(rho, power) * sup;
}

}  // namespace detail

// Relative values, per-stage gains, and a maximizing policy for the long-run
// average criterion.  Requires the periodic contraction product to be < 1.
inline Solution solve_average(const Model& m, double tol = kDefaultTol,
                              std::size_t kmax = kDefaultKmax,
                              const std::optional<std::vector<double>>& v0 = std::nullopt) {
    const std::size_t q = m.prefix_length(), p = m.period_length();
    std::vector<double> delta(q + p);
    for (std::size_t n = 0; n < q + p; ++n) delta[n] = dobrushin_delta(m, n);
    const double rho = detail::periodic_product(m, delta);
    if (rho >= 1.0)
        throw SolverError(SolverError::Kind::no_contraction, Violation::npos, rho,
                          "every periodic stage has Dobrushin coefficient 1, so the "
                          "backward sweep does not contract (period product " +
                              std::to_string(rho) + ")");
    detail::StageOps ops;
    ops.apply = [&](std::size_t n, const std::vector<double>& v) { return apply_T(m, n, v); };
    std::size_t sweeps = 0;
    Solution s = detail::core_solve(m, ops, tol, kmax, v0, false, sweeps);
    s.apriori_bound = detail::apriori_from(m, delta, rho, sweeps);
    for (std::size_t n = 0; n < q + p; ++n) {
        const std::size_t next = n + 1 == q + p ? q : n + 1;
        const Selector u = greedy_selector(m, n, s.w[next].values);
        if (n < q)
            s.policy.prefix.push_back(u);
        else
            s.policy.period.push_back(u);
    }
    return s;
}

// Risk-sensitive counterpart for gamma != 0.  Requires every stage's ratio
// bound to be finite; when even the conservative contraction product is >= 1
// the solve proceeds but monitors the contraction it actually realizes.
inline Solution solve_risk(const Model& m, double gamma, double tol = kDefaultTol,
                           std::size_t kmax = kDefaultKmax,
                           const std::optional<std::vector<double>>& v0 = std::nullopt) {
    if (gamma == 0.0) throw std::invalid_argument("risk solve needs gamma != 0");
    const std::size_t q = m.prefix_length(), p = m.period_length();
    for (std::size_t n = 0; n < q + p; ++n)
        if (ratio_bound(m, n) == kInf)
            throw SolverError(SolverError::Kind::ratio_infinite, n, kInf,
                              "ratio coefficient is infinite at stage " + std::to_string(n) +
                                  " (some action's kernel rows have mismatched support); "
                                  "the risk-sensitive solve requires finite ratio "
                                  "coefficients at every stage");
    const std::vector<double> rdelta = risk_deltas(m, gamma);
    const double rho = detail::periodic_product(m, rdelta);

    detail::StageOps ops;
    ops.apply = [&, gamma](std::size_t n, const std::vector<double>& v) {
        return apply_T_risk(m, n, v, gamma);
    };
    ops.measured_delta = [&, gamma](std::size_t n, const std::vector<double>& v) {
        std::vector<double> g(v.size());
        for (std::size_t y = 0; y < v.size(); ++y) g[y] = gamma * v[y];
        return tilted_delta(m, n, g);
    };
    std::size_t sweeps = 0;
    Solution s = detail::core_solve(m, ops, tol, kmax, v0, rho >= 1.0, sweeps);
    s.gamma = gamma;
    s.apriori_bound = detail::apriori_from(m, rdelta, rho, sweeps);
    for (std::size_t n = 0; n < q + p; ++n) {
        const std::size_t next = n + 1 == q + p ? q : n + 1;
        const Selector u = greedy_selector(m, n, s.w[next].values, gamma);
        if (n < q)
            s.policy.prefix.push_back(u);
        else
            s.policy.period.push_back(u);
    }
    return s;
}

// Evaluation of a fixed policy schedule under the average criterion.
inline Solution solve_policy_average(const Model& m, const PolicySchedule& pol,
                                     double tol = kDefaultTol, std::size_t kmax = kDefaultKmax,
                                     const std::optional<std::vector<double>>& v0 = std::nullopt) {
    check_policy(m, pol);
    const std::size_t q = m.prefix_length(), p = m.period_length();
    std::vector<double> delta(q + p);
    for (std::size_t n = 0; n < q + p; ++n) delta[n] = dobrushin_delta_policy(m, n, pol.at(n));
    const double rho = detail::periodic_product(m, delta);
    if (rho >= 1.0)
        throw SolverError(SolverError::Kind::no_contraction, Violation::npos, rho,
                          "the policy's periodic kernels have Dobrushin coefficient 1 at "
                          "every stage, so the backward sweep does not contract (period "
                          "product " +
                              std::to_string(rho) + ")");
    detail::StageOps ops;
    ops.apply = [&](std::size_t n, const std::vector<double>& v) {
        return apply_T_policy(m, n, pol.at(n), v);
    };
    std::size_t sweeps = 0;
    Solution s = detail::core_solve(m, ops, tol, kmax, v0, false, sweeps);
    s.policy = pol;
    s.apriori_bound = detail::apriori_from(m, delta, rho, sweeps);
    return s;
}

// Evaluation of a fixed policy under the risk-sensitive criterion.
inline Solution solve_policy_risk(const Model& m, const PolicySchedule& pol, double gamma,
                                  double tol = kDefaultTol, std::size_t kmax = kDefaultKmax,
                                  const std::optional<std::vector<double>>& v0 = std::nullopt) {
    if (gamma == 0.0) throw std::invalid_argument("risk solve needs gamma != 0");
    check_policy(m, pol);
    const std::size_t q = m.prefix_length(), p = m.period_length();
    std::vector<double> rdelta(q + p);
    for (std::size_t n = 0; n < q + p; ++n) {
        const Selector& u = pol.at(n);
        const double k = ratio_bound_policy(m, n, u);
        if (k == kInf)
            throw SolverError(SolverError::Kind::ratio_infinite, n, kInf,
                              "ratio coefficient of the policy kernel is infinite at stage " +
                                  std::to_string(n) +
                                  " (chosen rows have mismatched support); the "
                                  "risk-sensitive evaluation requires finite ratio "
                                  "coefficients at every stage");
        const double s = std::abs(gamma) * reward_span_policy(m, n, u) + std::log(k);
        rdelta[n] = std::min(
            1.0, std::max(0.0, 1.0 - std::exp(-s) * (1.0 - dobrushin_delta_policy(m, n, u))));
    }
    const double rho = detail::periodic_product(m, rdelta);

    detail::StageOps ops;
    ops.apply = [&, gamma](std::size_t n, const std::vector<double>& v) {
        return apply_T_risk_policy(m, n, pol.at(n), v, gamma);
    };
    ops.measured_delta = [&, gamma](std::size_t n, const std::vector<double>& v) {
        std::vector<double> g(v.size());
        for (std::size_t y = 0; y < v.size(); ++y) g[y] = gamma * v[y];
        const Matrix tk = tilted_kernel(policy_kernel(m, n, pol.at(n)), g);
        std::vector<const Row*> rows;
        for (const Row& r : tk) rows.push_back(&r);
        return detail::dobrushin_of_rows(rows);
    };
    std::size_t sweeps = 0;
    Solution s = detail::core_solve(m, ops, tol, kmax, v0, rho >= 1.0, sweeps);
    s.gamma = gamma;
    s.policy = pol;
    s.apriori_bound = detail::apriori_from(m, rdelta, rho, sweeps);
    return s;
}

// Guaranteed span distance between the stage-n relative value and any
// horizon-k backward image: the contraction product across the window times
// the worst remaining fluctuation.  gamma = 0 gives the average-criterion
// bound; otherwise the conservative risk coefficients are used throughout.
inline double apriori_error(const Model& m, std::size_t n, std::size_t k, double gamma = 0.0) {
    const std::size_t q = m.prefix_length(), p = m.period_length();
    std::vector<double> delta(q + p), cspan(q + p);
    for (std::size_t i = 0; i < q + p; ++i) {
        delta[i] = gamma == 0.0 ? dobrushin_delta(m, i) : risk_contraction_bound(m, i, gamma);
        cspan[i] = reward_span(m, i);
    }
    double prod = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t idx = n + i < q ? n + i : q + (n + i - q) % p;
        prod *= delta[idx];
        if (prod == 0.0) return 0.0;
    }
    double sup = 0.0;
    for (std::size_t i = 0; i < q + p; ++i)
        sup = std::max(sup, detail::remainder_series(delta, cspan, q, p, i));
    return prod * sup;
}

// Cesàro limit of the stage gains: the prefix washes out, so the long-run
// gain is the plain mean of the p periodic entries.
inline double long_run_gain(const std::vector<double>& lambda, std::size_t q, std::size_t p) {
    if (p == 0 || lambda.size() < q + p)
        throw std::invalid_argument("gain sequence must cover all prefix and periodic stages");
    double g = 0.0;
    for (std::size_t j = 0; j < p; ++j) g += lambda[q + j];
    return g / static_cast<double>(p);
}

}  // namespace nhmdp
