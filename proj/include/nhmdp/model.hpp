#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

// Finite-state controlled Markov model whose stage data is an explicit finite
// prefix followed by an infinitely repeated periodic block.  Stage n < q uses
// prefix[n]; stage n >= q uses period[(n - q) mod p].
//
// Actions come in two flavors:
//  * finite: an ordered list of action labels, one kernel/reward per label;
//  * interval: a parameter t in [0,1] sampled on a uniform grid, with
//    kernel(t) = (1-t)*K_low + t*K_high and rewards affine in t, given by the
//    two endpoint records stored as a 2-action stage.

namespace nhmdp {

using Row = std::vector<double>;     // probability row over states
using Matrix = std::vector<Row>;     // kernel, Matrix[x][y] = P(x, {y})

inline constexpr double kRowSumTol = 1e-12;

enum class ActionKind { finite, interval };

struct Stage {
    std::vector<Matrix> kernels;               // one per action (or 2 endpoints)
    std::vector<std::vector<double>> rewards;  // rewards[a][x]

    bool operator==(const Stage&) const = default;
};

struct Model {
    std::vector<std::string> states;
    std::vector<std::string> actions;  // finite flavor; empty <=> interval flavor
    int grid_points = 0;               // interval flavor, >= 2
    std::array<std::string, 2> interval_labels{};  // stage keys for the endpoints
    std::size_t anchor = 0;            // index into states
    std::vector<Stage> prefix;
    std::vector<Stage> period;

    bool operator==(const Model&) const = default;

    ActionKind kind() const { return actions.empty() ? ActionKind::interval : ActionKind::finite; }
    std::size_t num_states() const { return states.size(); }
    // Number of kernel/reward records per stage (A for finite, 2 for interval).
    std::size_t num_records() const { return kind() == ActionKind::finite ? actions.size() : 2; }
    std::size_t prefix_length() const { return prefix.size(); }
    std::size_t period_length() const { return period.size(); }
    // Stages 0 .. q+p-1 carry all distinct data.
    std::size_t num_distinct_stages() const { return prefix.size() + period.size(); }

    const Stage& stage_at(std::size_t n) const {
        if (n < prefix.size()) return prefix[n];
        return period[(n - prefix.size()) % period.size()];
    }

    // Grid parameter of grid index i in the interval flavor.
    double grid_param(int i) const {
        return static_cast<double>(i) / static_cast<double>(grid_points - 1);
    }
};

struct Violation {
    std::string where;    // "model", "prefix" or "period"
    std::size_t stage;    // index within prefix/period (unused for "model")
    std::string action;   // offending action label, empty for stage-level issues
    std::size_t state;    // offending row, npos for non-row issues
    std::string message;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::string describe() const {
        std::string s = where;
        if (where != "model") s += "[" + std::to_string(stage) + "]";
        if (!action.empty()) s += " action '" + action + "'";
        if (state != npos) s += " row " + std::to_string(state);
        return s + ": " + message;
    }
};

namespace detail {

inline void check_stage(const Model& m, const Stage& st, const std::string& where,
                        std::size_t stage, std::vector<Violation>& out) {
    const std::size_t S = m.num_states();
    const std::size_t A = m.num_records();
    auto label = [&](std::size_t a) -> std::string {
        return m.kind() == ActionKind::finite ? m.actions[a] : m.interval_labels[a];
    };
    if (st.kernels.size() != A || st.rewards.size() != A) {
        out.push_back({where, stage, "", Violation::npos, "kernels and rewards must cover every action"});
        return;
    }
    for (std::size_t a = 0; a < A; ++a) {
        const Matrix& k = st.kernels[a];
        if (k.size() != S) {
            out.push_back({where, stage, label(a), Violation::npos, "kernel must have one row per state"});
            continue;
        }
        for (std::size_t x = 0; x < S; ++x) {
            const Row& row = k[x];
            if (row.size() != S) {
                out.push_back({where, stage, label(a), x, "kernel row must have one entry per state"});
                continue;
            }
            double sum = 0.0;
            bool bad_entry = false;
            for (double p : row) {
                if (!std::isfinite(p)) {
                    out.push_back({where, stage, label(a), x, "non-finite probability"});
                    bad_entry = true;
                    break;
                }
                if (p < 0.0) {
                    out.push_back({where, stage, label(a), x, "negative probability"});
                    bad_entry = true;
                    break;
                }
                sum += p;
            }
            if (!bad_entry && std::abs(sum - 1.0) > kRowSumTol)
                out.push_back({where, stage, label(a), x,
                               "row sum " + std::to_string(sum) + " differs from 1 by more than 1e-12"});
        }
        const auto& r = st.rewards[a];
        if (r.size() != S) {
            out.push_back({where, stage, label(a), Violation::npos, "reward vector must have one entry per state"});
            continue;
        }
        for (std::size_t x = 0; x < S; ++x)
            if (!std::isfinite(r[x]))
                out.push_back({where, stage, label(a), x, "non-finite reward"});
    }
}

}  // namespace detail

// Reports every invariant violation; empty iff the model is valid.  Never throws.
// Order: model-level issues, then prefix stages, then period stages.
inline std::vector<Violation> validate(const Model& m) {
    std::vector<Violation> out;
    if (m.states.empty())
        out.push_back({"model", 0, "", Violation::npos, "state list is empty"});
    if (m.kind() == ActionKind::interval && m.grid_points < 2)
        out.push_back({"model", 0, "", Violation::npos, "interval flavor needs grid_points >= 2"});
    if (m.anchor >= m.states.size())
        out.push_back({"model", 0, "", Violation::npos, "anchor is not a state"});
    if (m.period.empty()) {
        out.push_back({"model", 0, "", Violation::npos, "period must be non-empty"});
        return out;
    }
    for (std::size_t i = 0; i < m.prefix.size(); ++i)
        detail::check_stage(m, m.prefix[i], "prefix", i, out);
    for (std::size_t i = 0; i < m.period.size(); ++i)
        detail::check_stage(m, m.period[i], "period", i, out);
    return out;
}

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Throws ValidationError naming the first violation.
inline void require_valid(const Model& m) {
    auto v = validate(m);
    if (!v.empty()) throw ValidationError(v.front().describe());
}

}  // namespace nhmdp
