#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nhmdp/io.hpp"
#include "nhmdp/model.hpp"
#include "nhmdp/rng.hpp"

// Shared in-code fixtures and the random-model generator used by both the
// unit tests and the standalone acceptance runner.

namespace fixtures {

inline std::string model_path(const std::string& name) {
    return std::string(NHMDP_MODELS_DIR) + "/" + name;
}

inline nhmdp::Model load(const std::string& name) {
    return nhmdp::load_model_file(model_path(name));
}

// Two states, identity vs. swap kernels; rewards by state: (0,1) under the
// identity action, (2,0) under the swap action.
inline nhmdp::Model opmodel() {
    nhmdp::Model m;
    m.states = {"s0", "s1"};
    m.actions = {"a", "b"};
    nhmdp::Stage st;
    st.kernels = {{{1.0, 0.0}, {0.0, 1.0}}, {{0.0, 1.0}, {1.0, 0.0}}};
    st.rewards = {{0.0, 2.0}, {1.0, 0.0}};
    m.period = {st};
    return m;
}

// Two states, all rows (0.5, 0.5), reward 0 in the first state and 1 in the
// second; the closed-form workhorse.
inline nhmdp::Model iid2() {
    nhmdp::Model m;
    m.states = {"lo", "hi"};
    m.actions = {"only"};
    nhmdp::Stage st;
    st.kernels = {{{0.5, 0.5}, {0.5, 0.5}}};
    st.rewards = {{0.0, 1.0}};
    m.period = {st};
    return m;
}

// Single action, rows (1,0) and (d, 1-d): Dobrushin coefficient 1-d, reward
// span 1, so every remainder equals 1/d exactly.
inline nhmdp::Model constant_data_model(double d) {
    nhmdp::Model m;
    m.states = {"x0", "x1"};
    m.actions = {"only"};
    nhmdp::Stage st;
    st.kernels = {{{1.0, 0.0}, {d, 1.0 - d}}};
    st.rewards = {{0.0, 1.0}};
    m.period = {st};
    return m;
}

// Two actions whose kernels are constant across states (every row of one
// action identical), so the within-action ratio bound is exactly 1 while the
// cross-action Dobrushin coefficient is 0.5.
inline nhmdp::Model constant_row_model() {
    nhmdp::Model m;
    m.states = {"x0", "x1"};
    m.actions = {"a", "b"};
    nhmdp::Stage st;
    st.kernels = {{{0.75, 0.25}, {0.75, 0.25}}, {{0.25, 0.75}, {0.25, 0.75}}};
    st.rewards = {{0.0, 1.0}, {0.0, 1.0}};
    m.period = {st};
    return m;
}

struct RandomModelSpec {
    std::size_t max_states = 6;
    std::size_t max_actions = 4;
    std::size_t max_prefix = 0;
    std::size_t max_period = 3;
    double row_floor = 0.25;  // larger floor => stronger contraction, smaller K
    bool interval = false;
};

// Random valid model with strictly positive rows: raw entries are uniform in
// [floor, floor+1) before normalization, which caps the Dobrushin coefficient
// at 1/(1+floor) and keeps every ratio bound finite.
inline nhmdp::Model random_model(nhmdp::rng::Stream& st, const RandomModelSpec& spec) {
    nhmdp::Model m;
    const std::size_t S = 1 + st.next_below(spec.max_states);
    const std::size_t A = spec.interval ? 2 : 1 + st.next_below(spec.max_actions);
    for (std::size_t i = 0; i < S; ++i) m.states.push_back("s" + std::to_string(i));
    if (spec.interval) {
        m.grid_points = 5;
        m.interval_labels = {"low", "high"};
    } else {
        for (std::size_t a = 0; a < A; ++a) m.actions.push_back("a" + std::to_string(a));
    }
    m.anchor = st.next_below(S);
    const std::size_t q = spec.max_prefix == 0 ? 0 : st.next_below(spec.max_prefix + 1);
    const std::size_t p = 1 + st.next_below(spec.max_period);
    auto make_stage = [&]() {
        nhmdp::Stage stage;
        for (std::size_t a = 0; a < A; ++a) {
            nhmdp::Matrix k(S, nhmdp::Row(S));
            for (std::size_t x = 0; x < S; ++x) {
                double sum = 0.0;
                for (std::size_t y = 0; y < S; ++y) {
                    k[x][y] = spec.row_floor + st.next_unit();
                    sum += k[x][y];
                }
                for (std::size_t y = 0; y < S - 1; ++y) k[x][y] /= sum;
                double acc = 0.0;
                for (std::size_t y = 0; y < S - 1; ++y) acc += k[x][y];
                k[x][S - 1] = 1.0 - acc;  // exact unit row sum
            }
            stage.kernels.push_back(std::move(k));
            std::vector<double> c(S);
            for (double& v : c) v = st.next_range(-1.0, 2.0);
            stage.rewards.push_back(std::move(c));
        }
        return stage;
    };
    for (std::size_t i = 0; i < q; ++i) m.prefix.push_back(make_stage());
    for (std::size_t i = 0; i < p; ++i) m.period.push_back(make_stage());
    return m;
}

inline std::vector<double> random_vector(nhmdp::rng::Stream& st, std::size_t n, double scale) {
    std::vector<double> v(n);
    for (double& x : v) x = st.next_range(-scale, scale);
    return v;
}

inline nhmdp::Selector random_selector(nhmdp::rng::Stream& st, const nhmdp::Model& m) {
    nhmdp::Selector u(m.num_states());
    for (double& c : u) {
        if (m.kind() == nhmdp::ActionKind::finite)
            c = static_cast<double>(st.next_below(m.actions.size()));
        else
            c = st.next_unit();
    }
    return u;
}

inline nhmdp::PolicySchedule random_policy(nhmdp::rng::Stream& st, const nhmdp::Model& m) {
    nhmdp::PolicySchedule pol;
    for (std::size_t n = 0; n < m.prefix_length(); ++n)
        pol.prefix.push_back(random_selector(st, m));
    for (std::size_t n = 0; n < m.period_length(); ++n)
        pol.period.push_back(random_selector(st, m));
    return pol;
}

}  // namespace fixtures
