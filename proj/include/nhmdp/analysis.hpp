#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "nhmdp/coefficients.hpp"
#include "nhmdp/model.hpp"
#include "nhmdp/operators.hpp"
#include "nhmdp/rng.hpp"
#include "nhmdp/solver.hpp"

// Independent cross-checks of the solver: exact finite-horizon recursions
// (backward expectations, forward exponential moments — different axes, so a
// shared bug cannot cancel), the Hoeffding gap between them, the gain-vs-gamma
// curve, policy-perturbation stability traces, and a Monte Carlo estimate.

namespace nhmdp {

namespace detail {

// Per-stage kernel and reward with a fixed selector, cached over the distinct
// stages so horizon-10^4 recursions do not rebuild mixture rows every step.
struct PolicyStages {
    std::vector<Matrix> kernel;
    std::vector<std::vector<double>> reward;
    std::size_t q, p;

    PolicyStages(const Model& m, const PolicySchedule& pol)
        : q(m.prefix_length()), p(m.period_length()) {
        check_policy(m, pol);
        for (std::size_t n = 0; n < q + p; ++n) {
            kernel.push_back(policy_kernel(m, n, pol.at(n)));
            reward.push_back(policy_reward(m, n, pol.at(n)));
        }
    }
    std::size_t idx(std::size_t n) const { return n < q ? n : q + (n - q) % p; }
};

inline double pairwise_sum(const double* a, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += a[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(a, h) + pairwise_sum(a + h, n - h);
}

// Backward expected reward sum over stages [n, n+k), as a vector over the
// state at stage n.
inline std::vector<double> window_expectation(const PolicyStages& ps, std::size_t n,
                                              std::size_t k) {
    const std::size_t S = ps.reward[0].size();
    std::vector<double> v(S, 0.0), nv(S);
    for (std::size_t step = 0; step < k; ++step) {
        const std::size_t i = ps.idx(n + k - 1 - step);
        for (std::size_t x = 0; x < S; ++x) nv[x] = ps.reward[i][x] + dot(ps.kernel[i][x], v);
        v.swap(nv);
    }
    return v;
}

// Forward log of the conditional exponential moments: starting from state x
// at stage n, after the window L[y] = ln E[e^{gamma * S} ; X_{n+k} = y].
// Max-shifted every stage so horizons of 10^4 stages cannot overflow.
inline double window_log_moment(const PolicyStages& ps, std::size_t n, std::size_t k,
                                std::size_t x, double gamma) {
    const std::size_t S = ps.reward[0].size();
    const double ninf = -std::numeric_limits<double>::infinity();
    std::vector<double> L(S, ninf), nL(S);
    L[x] = 0.0;
    std::vector<double> edge(S);
    for (std::size_t step = 0; step < k; ++step) {
        const std::size_t i = ps.idx(n + step);
        double shift = ninf;
        for (std::size_t z = 0; z < S; ++z) {
            edge[z] = L[z] + gamma * ps.reward[i][z];
            shift = std::max(shift, edge[z]);
        }
        for (std::size_t y = 0; y < S; ++y) {
            double s = 0.0;
            for (std::size_t z = 0; z < S; ++z)
                if (edge[z] != ninf && ps.kernel[i][z][y] > 0.0)
                    s += std::exp(edge[z] - shift) * ps.kernel[i][z][y];
            nL[y] = s > 0.0 ? shift + std::log(s) : ninf;
        }
        L.swap(nL);
    }
    double shift = *std::max_element(L.begin(), L.end());
    double s = 0.0;
    for (double l : L)
        if (l != ninf) s += std::exp(l - shift);
    return shift + std::log(s);
}

}  // namespace detail

// (1/N) * E_x of the N-stage reward sum under the policy; exact backward
// induction, no sampling.
inline double finite_horizon_average(const Model& m, const PolicySchedule& pol, std::size_t N,
                                     std::size_t x) {
    if (N < 1) throw std::invalid_argument("horizon must be at least 1");
    const detail::PolicyStages ps(m, pol);
    return detail::window_expectation(ps, 0, N)[x] / static_cast<double>(N);
}

// (1/(N*gamma)) * ln E_x[e^{gamma * sum}] by the forward exponential-moment
// recursion.
inline double finite_horizon_risk(const Model& m, const PolicySchedule& pol, std::size_t N,
                                  std::size_t x, double gamma) {
    if (N < 1) throw std::invalid_argument("horizon must be at least 1");
    if (gamma == 0.0) throw std::invalid_argument("risk oracle needs gamma != 0");
    const detail::PolicyStages ps(m, pol);
    return detail::window_log_moment(ps, 0, N, x, gamma) / (static_cast<double>(N) * gamma);
}

struct HoeffdingGap {
    double gap;    // ln E[e^{gamma*S}] - gamma*E[S] over the window, >= 0
    double bound;  // (sum of window reward spans)^2 * gamma^2 / 8
};

// Jensen gap of the window reward sum against its Hoeffding ceiling.  The sum
// lives in an interval no longer than the summed stage reward spans, so one
// application of Hoeffding's lemma bounds the gap.
inline HoeffdingGap hoeffding_gap(const Model& m, const PolicySchedule& pol, std::size_t n,
                                  std::size_t k, double gamma, std::size_t x) {
    if (k < 1) throw std::invalid_argument("window length must be at least 1");
    if (gamma == 0.0) throw std::invalid_argument("hoeffding gap needs gamma != 0");
    const detail::PolicyStages ps(m, pol);
    const double ex = detail::window_expectation(ps, n, k)[x];
    const double lm = detail::window_log_moment(ps, n, k, x, gamma);
    double span_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) span_sum += reward_span(m, n + i);
    HoeffdingGap g{lm - gamma * ex, span_sum * span_sum * gamma * gamma / 8.0};
    const double slack = 1e-9 * (1.0 + g.bound + std::abs(gamma * ex));
    if (g.gap < -slack || g.gap > g.bound + slack)
        throw std::logic_error("hoeffding gap " + std::to_string(g.gap) +
                               " escaped [0, " + std::to_string(g.bound) + "]");
    g.gap = std::max(g.gap, 0.0);
    return g;
}

struct GainCurve {
    struct Point {
        double gamma;
        double gain;      // risk-sensitive long-run gain; the plain gain at 0
        double span_gap;  // max_n span(w_n(gamma) - w_n(0))
    };
    std::vector<Point> points;  // strictly increasing gamma, always includes 0
};

inline GainCurve gain_curve(const Model& m, std::vector<double> gammas, double tol = kDefaultTol) {
    std::sort(gammas.begin(), gammas.end());
    for (std::size_t i = 1; i < gammas.size(); ++i)
        if (gammas[i] == gammas[i - 1])
            throw std::invalid_argument("gamma grid must not repeat values");
    if (std::find(gammas.begin(), gammas.end(), 0.0) == gammas.end()) {
        gammas.push_back(0.0);
        std::sort(gammas.begin(), gammas.end());
    }
    const Solution base = solve_average(m, tol);
    GainCurve curve;
    for (double g : gammas) {
        if (g == 0.0) {
            curve.points.push_back({0.0, base.long_run_gain, 0.0});
            continue;
        }
        Solution s;
        try {
            s = solve_risk(m, g, tol);
        } catch (const SolverError& e) {
            throw SolverError(e.kind, e.stage, e.achieved,
                              "gamma " + std::to_string(g) + ": " + e.what());
        }
        double gap = 0.0;
        for (std::size_t n = 0; n < s.w.size(); ++n)
            gap = std::max(gap, detail::span_diff(s.w[n].values, base.w[n].values));
        curve.points.push_back({g, s.long_run_gain, gap});
    }
    return curve;
}

struct StabilityTrace {
    struct Entry {
        std::size_t m;                // 1-based position in the sequence
        std::vector<double> lambda;   // per-stage gains under the m-th policy
        double gain;
        double deviation;             // max_n |lambda_n(u^m) - lambda_n(u)|
    };
    std::vector<double> limit_lambda;
    double limit_gain = 0.0;
    std::vector<Entry> entries;
    bool converged = false;  // final deviation fell below the requested tol
};

// Gains of a sequence of policies against the gains of its limit; the theory
// says pointwise selector convergence forces the deviations to vanish.
inline StabilityTrace stability_trace(const Model& m,
                                      const std::vector<PolicySchedule>& sequence,
                                      const PolicySchedule& limit,
                                      std::optional<double> gamma = std::nullopt,
                                      double tol = 1e-6) {
    auto eval = [&](const PolicySchedule& pol) {
        return gamma ? solve_policy_risk(m, pol, *gamma) : solve_policy_average(m, pol);
    };
    const Solution ls = eval(limit);
    StabilityTrace trace;
    trace.limit_lambda = ls.lambda;
    trace.limit_gain = ls.long_run_gain;
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        const Solution s = eval(sequence[i]);
        double dev = 0.0;
        for (std::size_t n = 0; n < s.lambda.size(); ++n)
            dev = std::max(dev, std::abs(s.lambda[n] - ls.lambda[n]));
        trace.entries.push_back({i + 1, s.lambda, s.long_run_gain, dev});
    }
    trace.converged = !trace.entries.empty() && trace.entries.back().deviation < tol;
    return trace;
}

struct SimulationResult {
    double mean;        // sample mean of per-path average rewards
    double risk_value;  // (1/(N*gamma)) ln of the sample mean of e^{gamma*sum}
    double std_error;   // standard error of the mean
};

// Monte Carlo cross-check.  Every path i draws from its own counter-based
// stream derived from (seed, i), and the reduction is a fixed pairwise sum
// over the per-path results, so the output is bit-identical for any thread
// count.
inline SimulationResult simulate(const Model& m, const PolicySchedule& pol, std::size_t N,
                                 std::size_t paths, std::uint64_t seed, double gamma = 0.0,
                                 std::optional<std::size_t> start = std::nullopt,
                                 unsigned threads = 1) {
    if (N < 1 || paths < 1) throw std::invalid_argument("horizon and path count must be >= 1");
    const detail::PolicyStages ps(m, pol);
    const std::size_t S = m.num_states();
    const std::size_t x0 = start.value_or(m.anchor);
    if (x0 >= S) throw std::invalid_argument("start state out of range");

    std::vector<double> sums(paths);
    auto run_block = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            rng::Stream stream(seed, static_cast<std::uint64_t>(i));
            std::size_t x = x0;
            double acc = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const std::size_t si = ps.idx(n);
                acc += ps.reward[si][x];
                const double u = stream.next_unit();
                const Row& row = ps.kernel[si][x];
                double cum = 0.0;
                std::size_t nxt = x;
                bool hit = false;
                for (std::size_t y = 0; y < S; ++y) {
                    if (row[y] <= 0.0) continue;
                    cum += row[y];
                    nxt = y;
                    if (u < cum) {
                        hit = true;
                        break;
                    }
                }
                (void)hit;  // u >= total mass (rounding): keep last support state
                x = nxt;
            }
            sums[i] = acc;
        }
    };
    const unsigned tc = std::max(1u, threads);
    if (tc == 1 || paths < 2 * tc) {
        run_block(0, paths);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (paths + tc - 1) / tc;
        for (unsigned t = 0; t < tc; ++t) {
            const std::size_t lo = std::min(paths, static_cast<std::size_t>(t) * chunk);
            const std::size_t hi = std::min(paths, lo + chunk);
            if (lo < hi) pool.emplace_back(run_block, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    std::vector<double> avg(paths), sq(paths);
    for (std::size_t i = 0; i < paths; ++i) {
        avg[i] = sums[i] / static_cast<double>(N);
        sq[i] = avg[i] * avg[i];
    }
    const double P = static_cast<double>(paths);
    SimulationResult r{};
    r.mean = detail::pairwise_sum(avg.data(), paths) / P;
    if (paths > 1) {
        const double ss = detail::pairwise_sum(sq.data(), paths);
        const double var = std::max(0.0, (ss - P * r.mean * r.mean) / (P - 1.0));
        r.std_error = std::sqrt(var / P);
    }
    if (gamma == 0.0) {
        r.risk_value = r.mean;
    } else {
        double shift = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < paths; ++i) shift = std::max(shift, gamma * sums[i]);
        std::vector<double> ex(paths);
        for (std::size_t i = 0; i < paths; ++i) ex[i] = std::exp(gamma * sums[i] - shift);
        const double lme = shift + std::log(detail::pairwise_sum(ex.data(), paths) / P);
        r.risk_value = lme / (static_cast<double>(N) * gamma);
    }
    return r;
}

}  // namespace nhmdp
