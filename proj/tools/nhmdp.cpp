// Command-line front end: load a model, report its contraction coefficients,
// solve the long-run equations, evaluate policies against the exact
// finite-horizon oracles, sweep the gain curve over gamma, trace stability of
// a policy sequence, or run the full property battery.
//
// Exit codes: 0 success, 1 usage problems (bad flags, unreadable or
// malformed files), 2 validation or assumption failures (invalid model data,
// missing contraction, infinite ratio coefficients, failed checks).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nhmdp/analysis.hpp"
#include "nhmdp/check.hpp"
#include "nhmdp/coefficients.hpp"
#include "nhmdp/io.hpp"
#include "nhmdp/model.hpp"
#include "nhmdp/operators.hpp"
#include "nhmdp/solver.hpp"
#include "nhmdp/version.hpp"

namespace {

using nhmdp::Model;
using nhmdp::njson;

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

njson json_num(double v) { return std::isfinite(v) ? njson(v) : njson(fmt(v)); }

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw nhmdp::ParseError("cannot open output file: " + out_path);
    f << text;
}

std::string csv_header(const Model& m) {
    return "# nhmdp " + std::string(nhmdp::kVersion) + " model_digest=" + model_digest(m) + "\n";
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

njson base_report(const std::string& cmd, const Model& m) {
    njson j;
    j["command"] = cmd;
    j["version"] = nhmdp::kVersion;
    j["model_digest"] = model_digest(m);
    return j;
}

std::size_t state_index(const Model& m, const std::string& label) {
    for (std::size_t i = 0; i < m.states.size(); ++i)
        if (m.states[i] == label) return i;
    throw std::invalid_argument("unknown state label \"" + label + "\"");
}

std::vector<double> parse_gammas(const std::string& text) {
    auto to_double = [](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("cannot parse number \"" + s + "\" in --gammas");
        }
        if (used != s.size())
            throw std::invalid_argument("cannot parse number \"" + s + "\" in --gammas");
        return v;
    };
    std::vector<std::string> parts;
    if (text.find(':') != std::string::npos) {
        std::string cur;
        for (char c : text) {
            if (c == ':') {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        parts.push_back(cur);
        if (parts.size() != 3)
            throw std::invalid_argument("--gammas range must look like lo:hi:step");
        const double lo = to_double(parts[0]), hi = to_double(parts[1]), st = to_double(parts[2]);
        if (!(st > 0.0) || hi < lo)
            throw std::invalid_argument("--gammas range needs hi >= lo and step > 0");
        std::vector<double> out;
        const auto count = static_cast<std::size_t>(std::floor((hi - lo) / st + 1e-9));
        for (std::size_t i = 0; i <= count; ++i) out.push_back(lo + static_cast<double>(i) * st);
        return out;
    }
    std::vector<double> out;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    for (const auto& p : parts) out.push_back(to_double(p));
    return out;
}

njson policy_json(const Model& m, const nhmdp::Selector& u) {
    njson sj = njson::object();
    for (std::size_t x = 0; x < m.num_states(); ++x) {
        if (m.kind() == nhmdp::ActionKind::finite)
            sj[m.states[x]] = m.actions[static_cast<std::size_t>(u[x])];
        else
            sj[m.states[x]] = u[x];
    }
    return sj;
}

struct Opts {
    std::string model, out, policy, policies_dir, gammas, start;
    double tol = nhmdp::kDefaultTol;
    std::size_t kmax = nhmdp::kDefaultKmax;
    double gamma = 0.0;
    bool csv = false;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::size_t horizon = 0;
    std::size_t sim_paths = 0;
};

int run_coeff(const Opts& o, bool has_gamma) {
    const Model m = nhmdp::load_model_file(o.model);
    const nhmdp::Coefficients c = nhmdp::compute_coefficients(m);
    std::string text = csv_header(m);
    text += "stage,delta,ratio,reward_span,remainder";
    if (has_gamma) text += ",risk_delta";
    text += "\n";
    for (std::size_t n = 0; n < m.num_distinct_stages(); ++n) {
        text += std::to_string(n) + "," + fmt(c.delta[n]) + "," + fmt(c.ratio_K[n]) + "," +
                fmt(c.reward_span[n]) + "," + fmt(c.remainder_R[n]);
        if (has_gamma) text += "," + fmt(nhmdp::risk_contraction_bound(m, n, o.gamma));
        text += "\n";
    }
    emit(text, o.out);
    return 0;
}

int run_solve(const Opts& o, bool has_gamma) {
    const auto t0 = std::chrono::steady_clock::now();
    const Model m = nhmdp::load_model_file(o.model);
    const bool risk = has_gamma && o.gamma != 0.0;
    const nhmdp::Solution s = risk ? nhmdp::solve_risk(m, o.gamma, o.tol, o.kmax)
                                   : nhmdp::solve_average(m, o.tol, o.kmax);
    if (o.csv) {
        std::string text = csv_header(m);
        text += "stage,kind,lambda";
        for (const auto& st : m.states) text += ",w_" + st;
        for (const auto& st : m.states) text += ",policy_" + st;
        text += "\n";
        for (std::size_t n = 0; n < m.num_distinct_stages(); ++n) {
            text += std::to_string(n);
            text += n < m.prefix_length() ? ",prefix," : ",period,";
            text += fmt(s.lambda[n]);
            for (double v : s.w[n].values) text += "," + fmt(v);
            const nhmdp::Selector& u = s.policy.at(n);
            for (double a : u) {
                if (m.kind() == nhmdp::ActionKind::finite)
                    text += "," + csv_quote(m.actions[static_cast<std::size_t>(a)]);
                else
                    text += "," + fmt(a);
            }
            text += "\n";
        }
        emit(text, o.out);
        return 0;
    }
    njson j = base_report("solve", m);
    j["gamma"] = risk ? o.gamma : 0.0;
    j["tol"] = o.tol;
    j["kmax"] = o.kmax;
    j["long_run_gain"] = json_num(s.long_run_gain);
    j["iterations"] = s.iterations_used;
    j["apriori_bound"] = json_num(s.apriori_bound);
    j["max_residual"] = json_num(s.max_residual);
    j["stages"] = njson::array();
    for (std::size_t n = 0; n < m.num_distinct_stages(); ++n) {
        njson sj;
        sj["stage"] = n;
        sj["kind"] = n < m.prefix_length() ? "prefix" : "period";
        sj["lambda"] = json_num(s.lambda[n]);
        sj["residual"] = json_num(s.residual[n]);
        njson wj = njson::object();
        for (std::size_t x = 0; x < m.num_states(); ++x) wj[m.states[x]] = s.w[n].values[x];
        sj["w"] = std::move(wj);
        sj["policy"] = policy_json(m, s.policy.at(n));
        j["stages"].push_back(std::move(sj));
    }
    j["warnings"] = njson::array();
    j["wall_time_s"] = elapsed_s(t0);
    emit(j.dump(2) + "\n", o.out);
    return 0;
}

int run_eval(const Opts& o, bool has_gamma, bool has_sim) {
    const auto t0 = std::chrono::steady_clock::now();
    const Model m = nhmdp::load_model_file(o.model);
    const nhmdp::PolicySchedule pol = nhmdp::load_policy_file(m, o.policy);
    if (o.horizon < 1) throw std::invalid_argument("--horizon must be at least 1");
    const std::size_t x = o.start.empty() ? m.anchor : state_index(m, o.start);

    const double avg = nhmdp::finite_horizon_average(m, pol, o.horizon, x);
    std::optional<double> riskv;
    if (has_gamma && o.gamma != 0.0)
        riskv = nhmdp::finite_horizon_risk(m, pol, o.horizon, x, o.gamma);

    std::optional<nhmdp::SimulationResult> sim;
    if (has_sim) {
        if (o.sim_paths < 1) throw std::invalid_argument("--simulate needs at least 1 path");
        sim = nhmdp::simulate(m, pol, o.horizon, o.sim_paths, o.seed,
                              has_gamma ? o.gamma : 0.0, x, o.threads);
    }

    if (o.csv) {
        std::string text = csv_header(m);
        text += "metric,value\n";
        text += "average," + fmt(avg) + "\n";
        if (riskv) text += "risk," + fmt(*riskv) + "\n";
        if (sim) {
            text += "sim_mean," + fmt(sim->mean) + "\n";
            text += "sim_risk," + fmt(sim->risk_value) + "\n";
            text += "sim_std_error," + fmt(sim->std_error) + "\n";
        }
        emit(text, o.out);
        return 0;
    }
    njson j = base_report("eval", m);
    j["horizon"] = o.horizon;
    j["start"] = m.states[x];
    if (has_gamma) j["gamma"] = o.gamma;
    j["average"] = json_num(avg);
    if (riskv) j["risk"] = json_num(*riskv);
    if (sim) {
        njson sj;
        sj["paths"] = o.sim_paths;
        sj["seed"] = o.seed;
        sj["threads"] = o.threads;
        sj["mean"] = json_num(sim->mean);
        sj["risk_value"] = json_num(sim->risk_value);
        sj["std_error"] = json_num(sim->std_error);
        j["simulate"] = std::move(sj);
    }
    j["warnings"] = njson::array();
    j["wall_time_s"] = elapsed_s(t0);
    emit(j.dump(2) + "\n", o.out);
    return 0;
}

int run_curve(const Opts& o) {
    const Model m = nhmdp::load_model_file(o.model);
    const std::vector<double> gs = parse_gammas(o.gammas);
    const nhmdp::GainCurve curve = nhmdp::gain_curve(m, gs, o.tol);
    std::string text = csv_header(m);
    text += "gamma,gain,max_span_gap\n";
    for (const auto& pt : curve.points)
        text += fmt(pt.gamma) + "," + fmt(pt.gain) + "," + fmt(pt.span_gap) + "\n";
    emit(text, o.out);
    return 0;
}

int run_stability(const Opts& o, bool has_gamma) {
    const Model m = nhmdp::load_model_file(o.model);
    namespace fs = std::filesystem;
    const fs::path dir(o.policies_dir);
    if (!fs::is_directory(dir))
        throw nhmdp::ParseError("--policies must name a directory: " + o.policies_dir);
    std::vector<fs::path> files;
    fs::path limit_path;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        if (entry.path().filename() == "limit.json")
            limit_path = entry.path();
        else
            files.push_back(entry.path());
    }
    if (limit_path.empty())
        throw nhmdp::ParseError("policies directory must contain limit.json: " + o.policies_dir);
    if (files.empty())
        throw nhmdp::ParseError("policies directory holds no sequence entries besides limit.json");
    std::sort(files.begin(), files.end());

    const nhmdp::PolicySchedule limit = nhmdp::load_policy_file(m, limit_path.string());
    std::vector<nhmdp::PolicySchedule> seq;
    for (const auto& f : files) seq.push_back(nhmdp::load_policy_file(m, f.string()));

    const std::optional<double> g =
        has_gamma && o.gamma != 0.0 ? std::optional<double>(o.gamma) : std::nullopt;
    const nhmdp::StabilityTrace trace = nhmdp::stability_trace(m, seq, limit, g, o.tol);

    std::string text = csv_header(m);
    text += "# limit_gain=" + fmt(trace.limit_gain) + "\n";
    if (!trace.converged)
        text += "# warning: final deviation " + fmt(trace.entries.back().deviation) +
                " is not below tol " + fmt(o.tol) + "\n";
    text += "m,file,gain,deviation\n";
    for (std::size_t i = 0; i < trace.entries.size(); ++i) {
        const auto& e = trace.entries[i];
        text += std::to_string(e.m) + "," + csv_quote(files[i].filename().string()) + "," +
                fmt(e.gain) + "," + fmt(e.deviation) + "\n";
    }
    emit(text, o.out);
    return 0;
}

int run_check(const Opts& o) {
    const Model m = nhmdp::load_model_file(o.model);
    const std::vector<nhmdp::PropertyCheck> checks = nhmdp::run_model_checks(m, o.seed, o.tol);
    std::string text = csv_header(m);
    text += "name,pass,measured,bound,detail\n";
    bool all = true;
    for (const auto& c : checks) {
        all = all && c.pass;
        text += c.name + "," + (c.pass ? "1" : "0") + "," + fmt(c.measured) + "," + fmt(c.bound) +
                "," + csv_quote(c.detail) + "\n";
    }
    emit(text, o.out);
    return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"long-run average and risk-sensitive control of prefix-periodic Markov "
                 "decision processes"};
    app.set_version_flag("--version", nhmdp::kVersion);
    app.require_subcommand(1);

    Opts o;
    auto add_common = [&](CLI::App* sub, bool needs_model = true) {
        auto* mo = sub->add_option("--model", o.model, "model JSON file");
        if (needs_model) mo->required();
        sub->add_option("--tol", o.tol, "convergence tolerance on sweep span increments");
        sub->add_option("--kmax", o.kmax, "budget of one-stage operator applications");
        sub->add_option("--out", o.out, "write the report here instead of standard output");
        sub->add_flag("--csv", o.csv, "tabular CSV output instead of JSON where applicable");
        sub->add_option("--seed", o.seed, "seed for randomized draws");
        sub->add_option("--threads", o.threads, "worker threads for simulation")
            ->envname("NHMDP_THREADS");
    };

    CLI::App* coeff = app.add_subcommand("coeff", "per-stage contraction coefficient table");
    add_common(coeff);
    coeff->add_option("--gamma", o.gamma, "risk-aversion parameter for the risk_delta column");

    CLI::App* solve = app.add_subcommand("solve", "solve the long-run equations");
    add_common(solve);
    solve->add_option("--gamma", o.gamma, "risk-aversion parameter (omit or 0: plain average)");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a policy by the exact oracles");
    add_common(eval);
    eval->add_option("--policy", o.policy, "policy JSON file")->required();
    eval->add_option("--horizon", o.horizon, "number of stages")->required();
    eval->add_option("--gamma", o.gamma, "also evaluate the risk functional at this gamma");
    eval->add_option("--start", o.start, "start state label (default: the model's anchor)");
    eval->add_option("--simulate", o.sim_paths, "Monte Carlo cross-check with this many paths");

    CLI::App* curve = app.add_subcommand("curve", "gain as a function of gamma");
    add_common(curve);
    curve->add_option("--gammas", o.gammas, "comma list or lo:hi:step range of gamma values")
        ->required();

    CLI::App* stability = app.add_subcommand("stability", "gains of a policy sequence vs. its limit");
    add_common(stability);
    stability->add_option("--policies", o.policies_dir,
                          "directory with limit.json and the sequence (sorted by name)")
        ->required();
    stability->add_option("--gamma", o.gamma, "use the risk criterion at this gamma");

    CLI::App* check = app.add_subcommand("check", "run the full property battery");
    add_common(check);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (app.got_subcommand(coeff)) return run_coeff(o, coeff->count("--gamma") > 0);
        if (app.got_subcommand(solve)) return run_solve(o, solve->count("--gamma") > 0);
        if (app.got_subcommand(eval))
            return run_eval(o, eval->count("--gamma") > 0, eval->count("--simulate") > 0);
        if (app.got_subcommand(curve)) return run_curve(o);
        if (app.got_subcommand(stability))
            return run_stability(o, stability->count("--gamma") > 0);
        if (app.got_subcommand(check)) return run_check(o);
    } catch (const nhmdp::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nhmdp::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nhmdp::SolverError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
