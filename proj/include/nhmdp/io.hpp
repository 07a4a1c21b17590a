#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nhmdp/model.hpp"
#include "nhmdp/operators.hpp"

// Model and policy files are JSON with a deliberately rigid grammar: unknown
// keys are errors, so a typo like "rewards" cannot silently produce a model
// with a default reward of zero.
//
//   {
//     "states": ["g", "b"],
//     "actions": ["stay", "move"],          // exclusive with action_interval
//     "action_interval": {"grid_points": 5,
//                          "endpoint_stages": ["low", "high"]},
//     "anchor": "g",                         // optional, default: first state
//     "prefix": [ <stage>, ... ],            // optional, default: []
//     "period": [ <stage>, ... ]             // required, nonempty
//   }
//
// A <stage> maps every action label (or both endpoint labels) to
//   {"kernel": [[...], ...], "reward": [...]}
// with an S-by-S kernel and a length-S reward vector.
//
// A policy file maps every stage index "0" .. "q+p-1" (as decimal strings) to
// an object assigning each state label an action label (finite flavor) or a
// number in [0,1] (interval flavor).

namespace nhmdp {

using njson = nlohmann::ordered_json;

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void expect_keys(const njson& obj, const std::vector<std::string>& allowed,
                        const std::string& where) {
    for (const auto& item : obj.items())
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            throw ParseError("unknown key \"" + item.key() + "\" in " + where);
}

inline std::vector<std::string> string_list(const njson& j, const std::string& where) {
    if (!j.is_array()) throw ParseError(where + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : j) {
        if (!e.is_string()) throw ParseError(where + " must be an array of strings");
        out.push_back(e.get<std::string>());
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j2 = i + 1; j2 < out.size(); ++j2)
            if (out[i] == out[j2]) throw ParseError("duplicate label \"" + out[i] + "\" in " + where);
    return out;
}

inline double number_at(const njson& j, const std::string& where) {
    if (!j.is_number()) throw ParseError(where + " must be a number");
    return j.get<double>();
}

inline std::vector<double> number_row(const njson& j, std::size_t want, const std::string& where) {
    if (!j.is_array() || j.size() != want)
        throw ParseError(where + " must be an array of " + std::to_string(want) + " numbers");
    std::vector<double> out;
    out.reserve(want);
    for (const auto& e : j) out.push_back(number_at(e, where));
    return out;
}

inline Stage parse_stage(const njson& j, const std::vector<std::string>& record_labels,
                         std::size_t S, const std::string& where) {
    if (!j.is_object()) throw ParseError(where + " must be an object keyed by action");
    expect_keys(j, record_labels, where);
    Stage st;
    for (const auto& label : record_labels) {
        if (!j.contains(label))
            throw ParseError(where + " is missing action \"" + label + "\"");
        const njson& rec = j.at(label);
        if (!rec.is_object()) throw ParseError(where + "/" + label + " must be an object");
        expect_keys(rec, {"kernel", "reward"}, where + "/" + label);
        if (!rec.contains("kernel") || !rec.contains("reward"))
            throw ParseError(where + "/" + label + " needs both \"kernel\" and \"reward\"");
        const njson& kj = rec.at("kernel");
        if (!kj.is_array() || kj.size() != S)
            throw ParseError(where + "/" + label + "/kernel must be a " + std::to_string(S) +
                             "-row matrix");
        Matrix k;
        for (std::size_t x = 0; x < S; ++x)
            k.push_back(number_row(kj.at(x), S, where + "/" + label + "/kernel row " +
                                                    std::to_string(x)));
        st.kernels.push_back(std::move(k));
        st.rewards.push_back(number_row(rec.at("reward"), S, where + "/" + label + "/reward"));
    }
    return st;
}

}  // namespace detail

inline Model load_model(const std::string& text) {
    njson j;
    try {
        j = njson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("model file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("model file must hold a JSON object");
    detail::expect_keys(j, {"states", "actions", "action_interval", "anchor", "prefix", "period"},
                        "model");

    Model m;
    if (!j.contains("states")) throw ParseError("model needs a \"states\" array");
    m.states = detail::string_list(j.at("states"), "states");
    const std::size_t S = m.states.size();

    const bool has_finite = j.contains("actions");
    const bool has_interval = j.contains("action_interval");
    if (has_finite == has_interval)
        throw ParseError("model needs exactly one of \"actions\" and \"action_interval\"");

    std::vector<std::string> record_labels;
    if (has_finite) {
        m.actions = detail::string_list(j.at("actions"), "actions");
        if (m.actions.empty()) throw ParseError("\"actions\" must not be empty");
        record_labels = m.actions;
    } else {
        const njson& ai = j.at("action_interval");
        if (!ai.is_object()) throw ParseError("\"action_interval\" must be an object");
        detail::expect_keys(ai, {"grid_points", "endpoint_stages"}, "action_interval");
        if (!ai.contains("grid_points") || !ai.contains("endpoint_stages"))
            throw ParseError("\"action_interval\" needs \"grid_points\" and \"endpoint_stages\"");
        if (!ai.at("grid_points").is_number_integer())
            throw ParseError("\"grid_points\" must be an integer");
        m.grid_points = ai.at("grid_points").get<int>();
        auto labels = detail::string_list(ai.at("endpoint_stages"), "endpoint_stages");
        if (labels.size() != 2)
            throw ParseError("\"endpoint_stages\" must list exactly two labels");
        m.interval_labels = {labels[0], labels[1]};
        record_labels = labels;
    }

    if (j.contains("anchor")) {
        if (!j.at("anchor").is_string()) throw ParseError("\"anchor\" must be a state label");
        const std::string a = j.at("anchor").get<std::string>();
        const auto it = std::find(m.states.begin(), m.states.end(), a);
        if (it == m.states.end())
            throw ValidationError("model: anchor \"" + a + "\" is not a state");
        m.anchor = static_cast<std::size_t>(it - m.states.begin());
    }

    if (j.contains("prefix")) {
        const njson& pj = j.at("prefix");
        if (!pj.is_array()) throw ParseError("\"prefix\" must be an array of stages");
        for (std::size_t i = 0; i < pj.size(); ++i)
            m.prefix.push_back(detail::parse_stage(pj.at(i), record_labels, S,
                                                   "prefix stage " + std::to_string(i)));
    }
    if (!j.contains("period")) throw ParseError("model needs a \"period\" array");
    const njson& qj = j.at("period");
    if (!qj.is_array() || qj.empty())
        throw ParseError("\"period\" must be a nonempty array of stages");
    for (std::size_t i = 0; i < qj.size(); ++i)
        m.period.push_back(detail::parse_stage(qj.at(i), record_labels, S,
                                               "period stage " + std::to_string(i)));

    require_valid(m);
    return m;
}

inline Model load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open model file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_model(ss.str());
}

inline njson serialize_model(const Model& m) {
    njson j;
    j["states"] = m.states;
    std::vector<std::string> record_labels;
    if (m.kind() == ActionKind::finite) {
        j["actions"] = m.actions;
        record_labels = m.actions;
    } else {
        j["action_interval"] = {{"grid_points", m.grid_points},
                                {"endpoint_stages", {m.interval_labels[0], m.interval_labels[1]}}};
        record_labels = {m.interval_labels[0], m.interval_labels[1]};
    }
    j["anchor"] = m.states[m.anchor];
    auto dump_stage = [&](const Stage& st) {
        njson sj = njson::object();
        for (std::size_t a = 0; a < record_labels.size(); ++a)
            sj[record_labels[a]] = {{"kernel", st.kernels[a]}, {"reward", st.rewards[a]}};
        return sj;
    };
    j["prefix"] = njson::array();
    for (const Stage& st : m.prefix) j["prefix"].push_back(dump_stage(st));
    j["period"] = njson::array();
    for (const Stage& st : m.period) j["period"].push_back(dump_stage(st));
    return j;
}

// 64-bit FNV-1a over the canonical serialization; stamped into every report
// so results can be traced back to the exact model that produced them.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string model_digest(const Model& m) {
    const std::string canon = serialize_model(m).dump();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canon)));
    return std::string(buf);
}

inline PolicySchedule load_policy(const Model& m, const std::string& text) {
    njson j;
    try {
        j = njson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("policy file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("policy file must hold a JSON object");
    const std::size_t total = m.num_distinct_stages();
    std::vector<std::string> allowed;
    for (std::size_t n = 0; n < total; ++n) allowed.push_back(std::to_string(n));
    detail::expect_keys(j, allowed, "policy");

    PolicySchedule pol;
    for (std::size_t n = 0; n < total; ++n) {
        const std::string key = std::to_string(n);
        if (!j.contains(key)) throw ParseError("policy is missing stage " + key);
        const njson& sj = j.at(key);
        if (!sj.is_object()) throw ParseError("policy stage " + key + " must be an object");
        detail::expect_keys(sj, m.states, "policy stage " + key);
        Selector u(m.num_states());
        for (std::size_t x = 0; x < m.num_states(); ++x) {
            const std::string& state = m.states[x];
            if (!sj.contains(state))
                throw ParseError("policy stage " + key + " is missing state \"" + state + "\"");
            const njson& cj = sj.at(state);
            if (m.kind() == ActionKind::finite) {
                if (!cj.is_string())
                    throw ParseError("policy stage " + key + " state \"" + state +
                                     "\" must name an action");
                const std::string label = cj.get<std::string>();
                const auto it = std::find(m.actions.begin(), m.actions.end(), label);
                if (it == m.actions.end())
                    throw ParseError("policy names unknown action \"" + label + "\"");
                u[x] = static_cast<double>(it - m.actions.begin());
            } else {
                if (!cj.is_number())
                    throw ParseError("policy stage " + key + " state \"" + state +
                                     "\" must be a number in [0,1]");
                u[x] = cj.get<double>();
                if (!(u[x] >= 0.0 && u[x] <= 1.0))
                    throw ParseError("policy stage " + key + " state \"" + state +
                                     "\" is outside [0,1]");
            }
        }
        if (n < m.prefix_length())
            pol.prefix.push_back(std::move(u));
        else
            pol.period.push_back(std::move(u));
    }
    return pol;
}

inline PolicySchedule load_policy_file(const Model& m, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open policy file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_policy(m, ss.str());
}

inline njson serialize_policy(const Model& m, const PolicySchedule& pol) {
    njson j = njson::object();
    for (std::size_t n = 0; n < m.num_distinct_stages(); ++n) {
        const Selector& u = pol.at(n);
        njson sj = njson::object();
        for (std::size_t x = 0; x < m.num_states(); ++x) {
            if (m.kind() == ActionKind::finite)
                sj[m.states[x]] = m.actions[static_cast<std::size_t>(u[x])];
            else
                sj[m.states[x]] = u[x];
        }
        j[std::to_string(n)] = std::move(sj);
    }
    return j;
}

}  // namespace nhmdp
