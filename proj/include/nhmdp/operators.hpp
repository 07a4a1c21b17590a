#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nhmdp/model.hpp"

// One-stage dynamic programming operators on raw value vectors:
//
//   T_n v(x)       = max_a [ c_n(x,a) + sum_y P_n^a(x,y) v(y) ]
//   T~_n v(x)      = max_a [ c_n(x,a) + (1/g) ln sum_y P_n^a(x,y) e^{g v(y)} ]
//
// plus the fixed-selector versions of both.  All four commute with adding a
// constant to v; anchoring is the solver's business, not the operators'.

namespace nhmdp {

inline constexpr double kTieTol = 1e-12;

// max(v) - min(v); the seminorm of the quotient space modulo constants.
inline double span(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}

// A value vector pinned to 0 at the anchor state, removing the additive gauge.
struct SpanVector {
    std::vector<double> values;
    std::size_t anchor_index = 0;
    bool anchored = false;

    static SpanVector anchor_at(std::vector<double> v, std::size_t idx) {
        const double shift = v[idx];
        for (double& x : v) x -= shift;
        v[idx] = 0.0;
        return SpanVector{std::move(v), idx, true};
    }

    double span() const { return nhmdp::span(values); }
    bool operator==(const SpanVector&) const = default;
};

// Per-state action choice: the action index (as an exact small integer) for
// the finite flavor, the parameter t in [0,1] for the interval flavor.
using Selector = std::vector<double>;

struct PolicySchedule {
    std::vector<Selector> prefix;  // u_0 .. u_{q-1}
    std::vector<Selector> period;  // length p

    bool operator==(const PolicySchedule&) const = default;

    const Selector& at(std::size_t n) const {
        if (n < prefix.size()) return prefix[n];
        return period[(n - prefix.size()) % period.size()];
    }
    std::size_t num_distinct_stages() const { return prefix.size() + period.size(); }
};

namespace detail {

inline double dot(const Row& row, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t y = 0; y < row.size(); ++y) s += row[y] * v[y];
    return s;
}

// ln sum_y row[y] e^{g[y]}, max-shifted over the row's support.
inline double log_row_exp(const Row& row, const std::vector<double>& g) {
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t y = 0; y < row.size(); ++y)
        if (row[y] > 0.0) shift = std::max(shift, g[y]);
    double s = 0.0;
    for (std::size_t y = 0; y < row.size(); ++y)
        if (row[y] > 0.0) s += row[y] * std::exp(g[y] - shift);
    return std::log(s) + shift;
}

inline std::size_t action_index(const Model& m, double choice) {
    const double r = std::floor(choice);
    if (r != choice || choice < 0.0 || choice >= static_cast<double>(m.actions.size()))
        throw std::invalid_argument("unknown action index " + std::to_string(choice));
    return static_cast<std::size_t>(r);
}

struct IntervalMax {
    double t;
    double value;
};

// Grid scan (lowest index wins ties within kTieTol) followed by one
// golden-section refinement on the bracketing cell, 20 iterations.  Returns
// the best point seen, so the result never falls below the grid maximum.
template <typename F>
IntervalMax maximize_interval(F&& q, int grid_points) {
    const int G = grid_points;
    std::vector<double> vals(static_cast<std::size_t>(G));
    for (int i = 0; i < G; ++i) vals[static_cast<std::size_t>(i)] = q(static_cast<double>(i) / (G - 1));
    const double vmax = *std::max_element(vals.begin(), vals.end());
    int j = 0;
    while (vals[static_cast<std::size_t>(j)] < vmax - kTieTol) ++j;

    IntervalMax best{static_cast<double>(j) / (G - 1), vals[static_cast<std::size_t>(j)]};
    double a = std::max(0, j - 1) / static_cast<double>(G - 1);
    double b = std::min(G - 1, j + 1) / static_cast<double>(G - 1);
    constexpr double phi = 0.6180339887498949;  // (sqrt(5)-1)/2
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = q(x1), f2 = q(x2);
    for (int it = 0; it < 20; ++it) {
        if (f1 > best.value) best = {x1, f1};
        if (f2 > best.value) best = {x2, f2};
        if (f1 >= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = q(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = q(x2);
        }
    }
    if (f1 > best.value) best = {x1, f1};
    if (f2 > best.value) best = {x2, f2};
    return best;
}

// One-stage value of a single finite action.
inline double plain_value(const Stage& st, std::size_t a, std::size_t x,
                          const std::vector<double>& v) {
    return st.rewards[a][x] + dot(st.kernels[a][x], v);
}

inline double risk_value(const Stage& st, std::size_t a, std::size_t x,
                         const std::vector<double>& v, double gamma) {
    std::vector<double> gv(v.size());
    for (std::size_t y = 0; y < v.size(); ++y) gv[y] = gamma * v[y];
    return st.rewards[a][x] + log_row_exp(st.kernels[a][x], gv) / gamma;
}

// Shared per-state machinery for interval-flavor one-stage objectives.
struct IntervalStateData {
    double c0, c1;         // endpoint rewards at x
    double e0, e1;         // endpoint continuation values (plain)
    double z0, z1, shift;  // endpoint exponential moments (risk), max-shifted
};

inline IntervalStateData interval_state_plain(const Stage& st, std::size_t x,
                                              const std::vector<double>& v) {
    IntervalStateData d{};
    d.c0 = st.rewards[0][x];
    d.c1 = st.rewards[1][x];
    d.e0 = d.c0 + dot(st.kernels[0][x], v);
    d.e1 = d.c1 + dot(st.kernels[1][x], v);
    return d;
}

inline IntervalStateData interval_state_risk(const Stage& st, std::size_t x,
                                             const std::vector<double>& v, double gamma) {
    IntervalStateData d{};
    d.c0 = st.rewards[0][x];
    d.c1 = st.rewards[1][x];
    d.shift = -std::numeric_limits<double>::infinity();
    const Row& r0 = st.kernels[0][x];
    const Row& r1 = st.kernels[1][x];
    for (std::size_t y = 0; y < v.size(); ++y)
        if (r0[y] > 0.0 || r1[y] > 0.0) d.shift = std::max(d.shift, gamma * v[y]);
    d.z0 = d.z1 = 0.0;
    for (std::size_t y = 0; y < v.size(); ++y) {
        const double e = (r0[y] > 0.0 || r1[y] > 0.0) ? std::exp(gamma * v[y] - d.shift) : 0.0;
        d.z0 += r0[y] * e;
        d.z1 += r1[y] * e;
    }
    return d;
}

inline double interval_plain_at(const IntervalStateData& d, double t) {
    return (1.0 - t) * d.e0 + t * d.e1;
}

inline double interval_risk_at(const IntervalStateData& d, double t, double gamma) {
    const double c = (1.0 - t) * d.c0 + t * d.c1;
    const double z = (1.0 - t) * d.z0 + t * d.z1;
    return c + (std::log(z) + d.shift) / gamma;
}

}  // namespace detail

inline void check_selector(const Model& m, const Selector& u) {
    if (u.size() != m.num_states()) throw std::invalid_argument("selector must cover every state");
    if (m.kind() == ActionKind::finite) {
        for (double c : u) (void)detail::action_index(m, c);
    } else {
        for (double c : u)
            if (!(c >= 0.0 && c <= 1.0))
                throw std::invalid_argument("interval action parameter outside [0,1]");
    }
}

inline void check_policy(const Model& m, const PolicySchedule& pol) {
    if (pol.prefix.size() != m.prefix_length() || pol.period.size() != m.period_length())
        throw std::invalid_argument("policy schedule shape does not match the model");
    for (const auto& u : pol.prefix) check_selector(m, u);
    for (const auto& u : pol.period) check_selector(m, u);
}

inline std::vector<double> apply_T(const Model& m, std::size_t n, const std::vector<double>& v) {
    const Stage& st = m.stage_at(n);
    const std::size_t S = m.num_states();
    std::vector<double> out(S);
    if (m.kind() == ActionKind::finite) {
        for (std::size_t x = 0; x < S; ++x) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < st.kernels.size(); ++a)
                best = std::max(best, detail::plain_value(st, a, x, v));
            out[x] = best;
        }
    } else {
        for (std::size_t x = 0; x < S; ++x) {
            const auto d = detail::interval_state_plain(st, x, v);
            out[x] = detail::maximize_interval(
                         [&](double t) { return detail::interval_plain_at(d, t); }, m.grid_points)
                         .value;
        }
    }
    return out;
}

inline std::vector<double> apply_T_risk(const Model& m, std::size_t n, const std::vector<double>& v,
                                        double gamma) {
    if (gamma == 0.0) throw std::invalid_argument("risk operator needs gamma != 0");
    const Stage& st = m.stage_at(n);
    const std::size_t S = m.num_states();
    std::vector<double> out(S);
    if (m.kind() == ActionKind::finite) {
        std::vector<double> gv(S);
        for (std::size_t y = 0; y < S; ++y) gv[y] = gamma * v[y];
        for (std::size_t x = 0; x < S; ++x) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < st.kernels.size(); ++a)
                best = std::max(best,
                                st.rewards[a][x] + detail::log_row_exp(st.kernels[a][x], gv) / gamma);
            out[x] = best;
        }
    } else {
        for (std::size_t x = 0; x < S; ++x) {
            const auto d = detail::interval_state_risk(st, x, v, gamma);
            out[x] = detail::maximize_interval(
                         [&](double t) { return detail::interval_risk_at(d, t, gamma); },
                         m.grid_points)
                         .value;
        }
    }
    return out;
}

inline std::vector<double> apply_T_policy(const Model& m, std::size_t n, const Selector& u,
                                          const std::vector<double>& v) {
    const Stage& st = m.stage_at(n);
    const std::size_t S = m.num_states();
    std::vector<double> out(S);
    if (m.kind() == ActionKind::finite) {
        for (std::size_t x = 0; x < S; ++x)
            out[x] = detail::plain_value(st, detail::action_index(m, u[x]), x, v);
    } else {
        for (std::size_t x = 0; x < S; ++x) {
            const auto d = detail::interval_state_plain(st, x, v);
            out[x] = detail::interval_plain_at(d, u[x]);
        }
    }
    return out;
}

inline std::vector<double> apply_T_risk_policy(const Model& m, std::size_t n, const Selector& u,
                                               const std::vector<double>& v, double gamma) {
    if (gamma == 0.0) throw std::invalid_argument("risk operator needs gamma != 0");
    const Stage& st = m.stage_at(n);
    const std::size_t S = m.num_states();
    std::vector<double> out(S);
    if (m.kind() == ActionKind::finite) {
        for (std::size_t x = 0; x < S; ++x)
            out[x] = detail::risk_value(st, detail::action_index(m, u[x]), x, v, gamma);
    } else {
        for (std::size_t x = 0; x < S; ++x) {
            const auto d = detail::interval_state_risk(st, x, v, gamma);
            out[x] = detail::interval_risk_at(d, u[x], gamma);
        }
    }
    return out;
}

// The single kernel / reward vector induced by fixing a selector at stage n.
inline Matrix policy_kernel(const Model& m, std::size_t n, const Selector& u) {
    const Stage& st = m.stage_at(n);
    const std::size_t S = m.num_states();
    Matrix k(S);
    for (std::size_t x = 0; x < S; ++x) {
        if (m.kind() == ActionKind::finite) {
            k[x] = st.kernels[detail::action_index(m, u[x])][x];
        } else {
            k[x].resize(S);
            for (std::size_t y = 0; y < S; ++y)
                k[x][y] = (1.0 - u[x]) * st.kernels[0][x][y] + u[x] * st.kernels[1][x][y];
        }
    }
    return k;
}

inline std::vector<double> policy_reward(const Model& m, std::size_t n, const Selector& u) {
    const Stage& st = m.stage_at(n);
    const std::size_t S = m.num_states();
    std::vector<double> c(S);
    for (std::size_t x = 0; x < S; ++x) {
        if (m.kind() == ActionKind::finite)
            c[x] = st.rewards[detail::action_index(m, u[x])][x];
        else
            c[x] = (1.0 - u[x]) * st.rewards[0][x] + u[x] * st.rewards[1][x];
    }
    return c;
}

// Per state, an action attaining the one-stage maximum within kTieTol; exact
// ties go to the lowest action index.  gamma selects the risk objective.
inline Selector greedy_selector(const Model& m, std::size_t n, const std::vector<double>& v,
                                std::optional<double> gamma = std::nullopt) {
    const Stage& st = m.stage_at(n);
    const std::size_t S = m.num_states();
    Selector u(S);
    if (m.kind() == ActionKind::finite) {
        for (std::size_t x = 0; x < S; ++x) {
            std::vector<double> q(st.kernels.size());
            for (std::size_t a = 0; a < st.kernels.size(); ++a)
                q[a] = gamma ? detail::risk_value(st, a, x, v, *gamma)
                             : detail::plain_value(st, a, x, v);
            const double qmax = *std::max_element(q.begin(), q.end());
            std::size_t pick = 0;
            while (q[pick] < qmax - kTieTol) ++pick;
            u[x] = static_cast<double>(pick);
        }
    } else {
        for (std::size_t x = 0; x < S; ++x) {
            if (gamma) {
                const auto d = detail::interval_state_risk(st, x, v, *gamma);
                u[x] = detail::maximize_interval(
                           [&](double t) { return detail::interval_risk_at(d, t, *gamma); },
                           m.grid_points)
                           .t;
            } else {
                const auto d = detail::interval_state_plain(st, x, v);
                u[x] = detail::maximize_interval(
                           [&](double t) { return detail::interval_plain_at(d, t); }, m.grid_points)
                           .t;
            }
        }
    }
    return u;
}

}  // namespace nhmdp
