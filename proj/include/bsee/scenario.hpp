#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsee/solvers.hpp"

namespace bsee {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scenario description parsed from flat `key = value` sections. All
/// cross-field validation happens in the build helpers below so a config
/// error is always reported with the offending section and key.
struct ScenarioConfig {
    std::string name;  // builtin name, empty for file-based configs
    std::string source_text;

    // [space]
    int dim = 0;
    double norm_exponent = 2.0;
    double moment_exponent = 2.0;
    // [time]
    double horizon = 1.0;
    int steps = 8;
    // [model]
    std::string model_kind = "tree";
    int path_count = 20000;
    std::uint64_t seed = 1;
    // [generator]
    std::string generator = "zero";
    double generator_scale = 1.0;
    std::vector<double> generator_entries;
    // [driver]
    std::string driver = "zero";
    double driver_a = 0.0;
    double driver_b = 0.0;
    double driver_l0 = 0.0;
    Vec driver_value;
    // [terminal]
    std::string terminal = "constant";
    Vec terminal_value;
    double strike = 0.0;
    // [solver]
    std::string method;
    double delta = 0.0;  // 0 = horizon
    double tol = 1e-8;
    int max_iter = 60;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& section, const std::string& key,
                           const std::string& v) {
    std::size_t used = 0;
    double out;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ConfigError("[" + section + "] " + key + ": not a number: '" + v + "'");
    }
    if (used != v.size())
        throw ConfigError("[" + section + "] " + key + ": trailing junk in '" + v + "'");
    return out;
}

inline long long parse_int(const std::string& section, const std::string& key,
                           const std::string& v) {
    std::size_t used = 0;
    long long out;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        throw ConfigError("[" + section + "] " + key + ": not an integer: '" + v + "'");
    }
    if (used != v.size())
        throw ConfigError("[" + section + "] " + key + ": trailing junk in '" + v + "'");
    return out;
}

inline std::vector<double> parse_list(const std::string& section, const std::string& key,
                                      const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(section, key, trim(item)));
    if (out.empty()) throw ConfigError("[" + section + "] " + key + ": empty list");
    return out;
}

inline Vec to_vec(const std::vector<double>& v) {
    Vec out(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
    return out;
}

}  // namespace detail

/// Strict parser for the flat section/key format: unknown sections, unknown
/// keys, duplicate keys, and malformed values are all rejected up front.
inline ScenarioConfig parse_scenario_config(const std::string& text,
                                            const std::string& name = "") {
    using detail::trim;
    static const std::map<std::string, std::vector<std::string>> schema = {
        {"space", {"dim", "norm_exponent", "moment_exponent"}},
        {"time", {"horizon", "steps"}},
        {"model", {"kind", "path_count", "seed"}},
        {"generator", {"name", "scale", "entries"}},
        {"driver", {"name", "a", "b", "l0", "value"}},
        {"terminal", {"name", "value", "strike"}},
        {"solver", {"method", "delta", "tol", "max_iter"}},
    };

    std::map<std::string, std::map<std::string, std::string>> kv;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            if (!schema.count(section))
                throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" +
                                  section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const auto& allowed = schema.at(section);
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("[" + section + "] unknown key '" + key + "'");
        if (kv[section].count(key))
            throw ConfigError("[" + section + "] duplicate key '" + key + "'");
        kv[section][key] = value;
    }

    auto get = [&](const std::string& sec, const std::string& key) -> const std::string* {
        auto s = kv.find(sec);
        if (s == kv.end()) return nullptr;
        auto k = s->second.find(key);
        return k == s->second.end() ? nullptr : &k->second;
    };
    auto require = [&](const std::string& sec, const std::string& key) -> const std::string& {
        const std::string* v = get(sec, key);
        if (!v) throw ConfigError("[" + sec + "] missing required key '" + key + "'");
        return *v;
    };

    ScenarioConfig cfg;
    cfg.name = name;
    cfg.source_text = text;

    cfg.dim = static_cast<int>(detail::parse_int("space", "dim", require("space", "dim")));
    cfg.norm_exponent =
        detail::parse_double("space", "norm_exponent", require("space", "norm_exponent"));
    cfg.moment_exponent =
        detail::parse_double("space", "moment_exponent", require("space", "moment_exponent"));
    try {
        SpaceSpec probe(cfg.dim, cfg.norm_exponent, cfg.moment_exponent);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[space] invalid: ") + e.what());
    }

    cfg.horizon = detail::parse_double("time", "horizon", require("time", "horizon"));
    cfg.steps = static_cast<int>(detail::parse_int("time", "steps", require("time", "steps")));
    if (cfg.horizon <= 0.0) throw ConfigError("[time] horizon: must be positive");
    if (cfg.steps <= 0) throw ConfigError("[time] steps: must be positive");

    if (const auto* v = get("model", "kind")) cfg.model_kind = *v;
    if (cfg.model_kind != "tree" && cfg.model_kind != "paths")
        throw ConfigError("[model] kind: expected tree or paths, got '" + cfg.model_kind + "'");
    if (const auto* v = get("model", "path_count"))
        cfg.path_count = static_cast<int>(detail::parse_int("model", "path_count", *v));
    if (cfg.path_count <= 0 || cfg.path_count > 100000)
        throw ConfigError("[model] path_count: must lie in [1, 100000]");
    if (const auto* v = get("model", "seed"))
        cfg.seed = static_cast<std::uint64_t>(detail::parse_int("model", "seed", *v));

    if (const auto* v = get("generator", "name")) cfg.generator = *v;
    static const std::vector<std::string> gens = {"zero", "diag", "rotation",
                                                  "tridiag_laplacian", "literal"};
    if (std::find(gens.begin(), gens.end(), cfg.generator) == gens.end())
        throw ConfigError("[generator] name: unknown builtin '" + cfg.generator + "'");
    if (const auto* v = get("generator", "scale"))
        cfg.generator_scale = detail::parse_double("generator", "scale", *v);
    if (const auto* v = get("generator", "entries"))
        cfg.generator_entries = detail::parse_list("generator", "entries", *v);
    if (cfg.generator == "literal" &&
        cfg.generator_entries.size() != static_cast<std::size_t>(cfg.dim) * cfg.dim)
        throw ConfigError("[generator] entries: literal generator needs dim*dim values");
    if (cfg.generator == "rotation" && cfg.dim != 2)
        throw ConfigError("[generator] name: rotation requires dim = 2");

    if (const auto* v = get("driver", "name")) cfg.driver = *v;
    static const std::vector<std::string> drivers = {"zero", "constant", "wiener_forcing",
                                                     "affine", "sin"};
    if (std::find(drivers.begin(), drivers.end(), cfg.driver) == drivers.end())
        throw ConfigError("[driver] name: unknown builtin '" + cfg.driver + "'");
    if (const auto* v = get("driver", "a"))
        cfg.driver_a = detail::parse_double("driver", "a", *v);
    if (const auto* v = get("driver", "b"))
        cfg.driver_b = detail::parse_double("driver", "b", *v);
    if (const auto* v = get("driver", "l0"))
        cfg.driver_l0 = detail::parse_double("driver", "l0", *v);
    if (const auto* v = get("driver", "value"))
        cfg.driver_value = detail::to_vec(detail::parse_list("driver", "value", *v));
    if ((cfg.driver == "constant" || cfg.driver == "wiener_forcing")) {
        if (cfg.driver_value.size() != cfg.dim)
            throw ConfigError("[driver] value: needs dim components for '" + cfg.driver + "'");
    }
    if (cfg.driver == "sin" && cfg.driver_l0 < 0.0)
        throw ConfigError("[driver] l0: must be non-negative");

    cfg.terminal = require("terminal", "name");
    static const std::vector<std::string> terminals = {"constant", "wiener_linear",
                                                       "wiener_square", "call_like"};
    if (std::find(terminals.begin(), terminals.end(), cfg.terminal) == terminals.end())
        throw ConfigError("[terminal] name: unknown builtin '" + cfg.terminal + "'");
    if (const auto* v = get("terminal", "value"))
        cfg.terminal_value = detail::to_vec(detail::parse_list("terminal", "value", *v));
    if (cfg.terminal_value.size() == 0) cfg.terminal_value = Vec::Zero(cfg.dim);
    if (cfg.terminal_value.size() != cfg.dim)
        throw ConfigError("[terminal] value: needs dim components");
    if (const auto* v = get("terminal", "strike"))
        cfg.strike = detail::parse_double("terminal", "strike", *v);
    if (cfg.terminal == "call_like" && !get("terminal", "strike"))
        throw ConfigError("[terminal] strike: required for call_like");

    cfg.method = require("solver", "method");
    if (cfg.method != "a0" && cfg.method != "linear" && cfg.method != "picard")
        throw ConfigError("[solver] method: expected a0|linear|picard, got '" + cfg.method + "'");
    if (const auto* v = get("solver", "delta"))
        cfg.delta = detail::parse_double("solver", "delta", *v);
    if (cfg.delta == 0.0) cfg.delta = cfg.horizon;
    if (cfg.delta < 0.0 || cfg.delta > cfg.horizon)
        throw ConfigError("[solver] delta: must lie in (0, horizon]");
    if (const auto* v = get("solver", "tol")) cfg.tol = detail::parse_double("solver", "tol", *v);
    if (cfg.tol <= 0.0) throw ConfigError("[solver] tol: must be positive");
    if (const auto* v = get("solver", "max_iter"))
        cfg.max_iter = static_cast<int>(detail::parse_int("solver", "max_iter", *v));
    if (cfg.max_iter <= 0) throw ConfigError("[solver] max_iter: must be positive");

    if (cfg.method == "a0" && cfg.generator != "zero")
        throw ConfigError("[solver] method: a0 requires [generator] name = zero");
    if ((cfg.method == "a0" || cfg.method == "linear") &&
        (cfg.driver == "affine" || cfg.driver == "sin"))
        throw ConfigError("[solver] method: driver '" + cfg.driver +
                          "' depends on (U,V); use method = picard");
    if (cfg.model_kind == "tree" && cfg.steps > 16)
        throw ConfigError("[time] steps: tree models are capped at 16 levels");

    return cfg;
}

// ---------------------------------------------------------------------------
// builtin scenario catalog

inline const std::map<std::string, std::string>& builtin_scenarios() {
    static const std::map<std::string, std::string> catalog = {
        {"a0_wiener_linear",
         "[space]\ndim = 2\nnorm_exponent = 2\nmoment_exponent = 2\n"
         "[time]\nhorizon = 1.0\nsteps = 8\n"
         "[model]\nkind = tree\n"
         "[generator]\nname = zero\n"
         "[driver]\nname = zero\n"
         "[terminal]\nname = wiener_linear\nvalue = 1, 0\n"
         "[solver]\nmethod = a0\ntol = 1e-8\n"},
        {"picard_decay_aU",
         "[space]\ndim = 2\nnorm_exponent = 2\nmoment_exponent = 2\n"
         "[time]\nhorizon = 1.0\nsteps = 10\n"
         "[model]\nkind = tree\n"
         "[generator]\nname = diag\nscale = 0.5\n"
         "[driver]\nname = affine\na = 0.8\nb = 0\n"
         "[terminal]\nname = constant\nvalue = 1, -1\n"
         "[solver]\nmethod = picard\ndelta = 0.125\ntol = 1e-10\nmax_iter = 60\n"},
        {"linear_drift_scalar",
         "[space]\ndim = 1\nnorm_exponent = 2\nmoment_exponent = 2\n"
         "[time]\nhorizon = 1.0\nsteps = 8\n"
         "[model]\nkind = paths\npath_count = 40000\nseed = 21\n"
         "[generator]\nname = diag\nscale = 1.5\n"
         "[driver]\nname = wiener_forcing\nvalue = 2\n"
         "[terminal]\nname = constant\nvalue = 0\n"
         "[solver]\nmethod = linear\ntol = 1e-8\n"},
        {"wiener_square",
         "[space]\ndim = 2\nnorm_exponent = 2\nmoment_exponent = 2\n"
         "[time]\nhorizon = 1.0\nsteps = 10\n"
         "[model]\nkind = tree\n"
         "[generator]\nname = diag\nscale = 0.4\n"
         "[driver]\nname = zero\n"
         "[terminal]\nname = wiener_square\nvalue = 1, 0\n"
         "[solver]\nmethod = linear\ntol = 1e-8\n"},
        {"call_like",
         "[space]\ndim = 1\nnorm_exponent = 2\nmoment_exponent = 2\n"
         "[time]\nhorizon = 1.0\nsteps = 10\n"
         "[model]\nkind = tree\n"
         "[generator]\nname = zero\n"
         "[driver]\nname = zero\n"
         "[terminal]\nname = call_like\nvalue = 1\nstrike = 0.5\n"
         "[solver]\nmethod = a0\ntol = 1e-8\n"},
        {"picard_sin_square",
         "[space]\ndim = 2\nnorm_exponent = 2\nmoment_exponent = 2\n"
         "[time]\nhorizon = 1.0\nsteps = 10\n"
         "[model]\nkind = tree\n"
         "[generator]\nname = zero\n"
         "[driver]\nname = sin\nl0 = 0.5\n"
         "[terminal]\nname = wiener_square\nvalue = 1, 0\n"
         "[solver]\nmethod = picard\ndelta = 0.2\ntol = 1e-10\nmax_iter = 60\n"},
        {"zero",
         "[space]\ndim = 2\nnorm_exponent = 2\nmoment_exponent = 2\n"
         "[time]\nhorizon = 1.0\nsteps = 8\n"
         "[model]\nkind = tree\n"
         "[generator]\nname = zero\n"
         "[driver]\nname = zero\n"
         "[terminal]\nname = constant\nvalue = 0, 0\n"
         "[solver]\nmethod = a0\ntol = 1e-8\n"},
    };
    return catalog;
}

/// Resolves `ref` as a builtin scenario name first, then as a file path.
inline ScenarioConfig load_scenario(const std::string& ref) {
    const auto& catalog = builtin_scenarios();
    if (auto it = catalog.find(ref); it != catalog.end())
        return parse_scenario_config(it->second, ref);
    std::ifstream in(ref);
    if (!in) throw ConfigError("cannot read config '" + ref + "' (not a builtin, not a file)");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario_config(ss.str(), std::filesystem::path(ref).stem().string());
}

// ---------------------------------------------------------------------------
// building runtime objects

inline Mat make_generator(const ScenarioConfig& cfg) {
    const int d = cfg.dim;
    if (cfg.generator == "zero") return Mat::Zero(d, d);
    if (cfg.generator == "diag") return cfg.generator_scale * Mat::Identity(d, d);
    if (cfg.generator == "rotation") {
        Mat A(2, 2);
        A << 0.0, 1.0, -1.0, 0.0;
        return cfg.generator_scale * A;
    }
    if (cfg.generator == "tridiag_laplacian") {
        Mat A = Mat::Zero(d, d);
        for (int i = 0; i < d; ++i) {
            A(i, i) = 2.0;
            if (i > 0) A(i, i - 1) = -1.0;
            if (i + 1 < d) A(i, i + 1) = -1.0;
        }
        return cfg.generator_scale * A;
    }
    // literal
    Mat A(d, d);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) A(r, c) = cfg.generator_entries[r * d + c];
    return A;
}

inline StochasticModel make_model(const ScenarioConfig& cfg,
                                  std::optional<std::uint64_t> seed_override = std::nullopt) {
    if (cfg.model_kind == "tree") return StochasticModel::tree(cfg.horizon, cfg.steps);
    return StochasticModel::paths(cfg.horizon, cfg.steps, cfg.path_count,
                                  seed_override.value_or(cfg.seed));
}

inline RandomVector make_terminal(const ScenarioConfig& cfg, const StochasticModel& m) {
    const Vec x = cfg.terminal_value;
    const int N = m.steps();
    if (cfg.terminal == "constant") return RandomVector::constant(m, x, N);
    if (cfg.terminal == "wiener_linear")
        return RandomVector::from_brownian(m, N, [x](double, double w) { return Vec(w * x); });
    if (cfg.terminal == "wiener_square")
        return RandomVector::from_brownian(m, N,
                                           [x](double, double w) { return Vec(w * w * x); });
    const double K = cfg.strike;
    return RandomVector::from_brownian(
        m, N, [x, K](double, double w) { return Vec(std::max(w - K, 0.0) * x); });
}

inline Driver make_driver(const ScenarioConfig& cfg, const StochasticModel& m) {
    const int d = cfg.dim;
    if (cfg.driver == "zero") return Driver::zero_driver(d);
    if (cfg.driver == "constant") return Driver::constant(cfg.driver_value);
    if (cfg.driver == "wiener_forcing") {
        const Vec x = cfg.driver_value;
        return Driver::time_process_driver(AdaptedProcess::from_brownian(
            m, m.steps(), [x](double, double w) { return Vec(w * x); }));
    }
    if (cfg.driver == "affine") return Driver::affine(cfg.driver_a, cfg.driver_b, nullptr, d);
    const double L0 = cfg.driver_l0;
    return Driver::nonlinear(
        [L0](double, const Vec& u, const Vec&) { return Vec(L0 * u.array().sin().matrix()); },
        L0, L0, d);
}

/// Time-only drivers as an adapted process (for solve_a0 / solve_linear_drift).
inline AdaptedProcess driver_process(const Driver& dr, const StochasticModel& m) {
    AdaptedProcess f = AdaptedProcess::zeros(m, dr.dim, m.steps());
    const Vec z = Vec::Zero(dr.dim);
    for (int i = 0; i < m.steps(); ++i)
        for (int s = 0; s < m.states(i); ++s)
            f.values[i].col(s) = dr.evaluate(m, i, s, z, z);
    return f;
}

// ---------------------------------------------------------------------------
// running

struct ScenarioRunResult {
    ScenarioConfig cfg;
    std::shared_ptr<StochasticModel> model;
    SpaceSpec space{1, 2.0, 2.0};
    SolutionPair sol;
    std::vector<double> residual_profile;
    std::optional<double> gamma_bound;  // picard only
    std::optional<double> guard;        // picard only
    double solve_ms = 0.0;
    double residual_ms = 0.0;
    std::uint64_t effective_seed = 0;
};

inline ScenarioRunResult run_scenario(const ScenarioConfig& cfg,
                                      std::optional<std::uint64_t> seed_override = std::nullopt) {
    using clock = std::chrono::steady_clock;
    ScenarioRunResult res;
    res.cfg = cfg;
    res.space = SpaceSpec(cfg.dim, cfg.norm_exponent, cfg.moment_exponent);
    res.effective_seed = seed_override.value_or(cfg.seed);
    res.model = std::make_shared<StochasticModel>(make_model(cfg, seed_override));
    const StochasticModel& m = *res.model;

    const Mat A = make_generator(cfg);
    SemigroupOperator sg(A, cfg.horizon, cfg.steps);
    RandomVector u_T = make_terminal(cfg, m);
    Driver driver = make_driver(cfg, m);

    const auto t0 = clock::now();
    if (cfg.method == "a0") {
        res.sol = solve_a0(driver_process(driver, m), u_T, res.space);
    } else if (cfg.method == "linear") {
        res.sol = solve_linear_drift(sg, driver_process(driver, m), u_T, res.space);
    } else {
        PicardConfig pc;
        pc.delta = cfg.delta;
        pc.tol = cfg.tol;
        pc.max_iter = cfg.max_iter;
        auto gb = semigroup_gamma_bound(sg, res.space, 64, 11);
        pc.gamma_bound = gb.value;
        res.gamma_bound = gb.value;
        const double dt = m.dt();
        const int steps_per = std::max(1, static_cast<int>(std::floor(pc.delta / dt + 1e-9)));
        res.guard = pc.contraction_guard(driver.lipschitz, gb.value, steps_per * dt);
        res.sol = solve_general_picard(sg, driver, u_T, res.space, pc);
    }
    const auto t1 = clock::now();
    res.residual_profile =
        discrete_mild_residual_profile(res.sol, sg, driver, u_T, res.space);
    const auto t2 = clock::now();
    res.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    res.residual_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    return res;
}

// ---------------------------------------------------------------------------
// closed forms (for convergence studies)

/// Exact continuous-time solution evaluated at (t, W(t)), when the scenario
/// admits one. Semigroup integrals are evaluated by a fine midpoint rule so
/// the registry error (~1e-7) stays far below any grid error under study.
struct ClosedForm {
    std::function<Vec(double, double)> U;
    std::function<Vec(double, double)> V;
};

namespace detail {

inline Mat semigroup_time_integral(const Mat& A, double tau) {
    const int sub = 400;
    const double h = tau / sub;
    Mat acc = Mat::Zero(A.rows(), A.cols());
    for (int i = 0; i < sub; ++i) acc += matrix_exponential(A, (i + 0.5) * h) * h;
    return acc;
}

/// Memoizes a time-indexed matrix so closed forms evaluated once per grid
/// node stay cheap on wide models (grid times repeat exactly).
inline std::function<Mat(double)> cache_by_time(std::function<Mat(double)> fn) {
    auto cache = std::make_shared<std::map<double, Mat>>();
    return [cache, fn = std::move(fn)](double t) -> const Mat& {
        auto it = cache->find(t);
        if (it == cache->end()) it = cache->emplace(t, fn(t)).first;
        return it->second;
    };
}

}  // namespace detail

inline std::optional<ClosedForm> closed_form_for(const ScenarioConfig& cfg) {
    const Mat A = make_generator(cfg);
    const double T = cfg.horizon;
    const Vec x = cfg.terminal_value;

    auto S = detail::cache_by_time([A, T](double t) { return matrix_exponential(A, T - t); });

    if (cfg.driver == "zero") {
        if (cfg.terminal == "constant") {
            ClosedForm cf;
            cf.U = [S, x](double t, double) { return Vec(S(t) * x); };
            cf.V = [d = cfg.dim](double, double) { return Vec(Vec::Zero(d)); };
            return cf;
        }
        if (cfg.terminal == "wiener_linear") {
            ClosedForm cf;
            cf.U = [S, x](double t, double w) { return Vec(w * (S(t) * x)); };
            cf.V = [S, x](double t, double) { return Vec(S(t) * x); };
            return cf;
        }
        if (cfg.terminal == "wiener_square") {
            ClosedForm cf;
            cf.U = [S, T, x](double t, double w) { return Vec((w * w + T - t) * (S(t) * x)); };
            cf.V = [S, x](double t, double w) { return Vec(2.0 * w * (S(t) * x)); };
            return cf;
        }
    }
    if (cfg.driver == "affine" && cfg.driver_b == 0.0 && cfg.terminal == "constant") {
        const double a = cfg.driver_a;
        ClosedForm cf;
        cf.U = [S, T, x, a](double t, double) {
            return Vec(std::exp(-a * (T - t)) * (S(t) * x));
        };
        cf.V = [d = cfg.dim](double, double) { return Vec(Vec::Zero(d)); };
        return cf;
    }
    if (cfg.driver == "wiener_forcing" && cfg.terminal == "constant" && x.isZero(0.0)) {
        const Vec fx = cfg.driver_value;
        auto I = detail::cache_by_time(
            [A, T](double t) { return detail::semigroup_time_integral(A, T - t); });
        ClosedForm cf;
        cf.U = [I, fx](double t, double w) { return Vec(-w * (I(t) * fx)); };
        cf.V = [I, fx](double t, double) { return Vec(-(I(t) * fx)); };
        return cf;
    }
    return std::nullopt;
}

/// Max-over-grid L^p distance between the computed pair and the closed form.
inline double closed_form_error(const ScenarioRunResult& res, const ClosedForm& cf) {
    const StochasticModel& m = *res.model;
    const int N = m.steps();
    double worst = 0.0;
    for (int i = 0; i <= N; ++i) {
        Mat diff = res.sol.U.values[i];
        for (int s = 0; s < m.states(i); ++s)
            diff.col(s) -= cf.U(m.grid().node(i), m.brownian(i, s));
        worst = std::max(worst, lp_moment(RandomVector{&m, i, diff}, res.space));
    }
    for (int i = 0; i < N; ++i) {
        Mat diff = res.sol.V.values[i];
        for (int s = 0; s < m.states(i); ++s)
            diff.col(s) -= cf.V(m.grid().node(i), m.brownian(i, s));
        worst = std::max(worst, lp_moment(RandomVector{&m, i, diff}, res.space));
    }
    return worst;
}

struct ConvergenceRow {
    int steps = 0;
    double error = 0.0;
    std::optional<double> order;  // vs previous row
};

inline std::vector<ConvergenceRow> run_convergence(
    const ScenarioConfig& base, const std::vector<int>& steps_list,
    std::optional<std::uint64_t> seed_override = std::nullopt) {
    auto cf = closed_form_for(base);
    if (!cf) throw ConfigError("scenario has no closed form; convergence study unsupported");
    std::vector<ConvergenceRow> table;
    for (int N : steps_list) {
        ScenarioConfig cfg = base;
        cfg.steps = N;
        if (cfg.model_kind == "tree" && N > 16)
            throw ConfigError("[time] steps: tree models are capped at 16 levels; use paths");
        ConvergenceRow row;
        row.steps = N;
        row.error = closed_form_error(run_scenario(cfg, seed_override), *cf);
        if (!table.empty()) {
            const ConvergenceRow& prev = table.back();
            const double floor = 1e-13;
            if (row.error <= floor && prev.error <= floor)
                row.order = std::numeric_limits<double>::infinity();
            else if (row.error > 0.0 && prev.error > 0.0)
                row.order = std::log(prev.error / row.error) /
                            std::log(double(N) / prev.steps);
        }
        table.push_back(row);
    }
    return table;
}

// ---------------------------------------------------------------------------
// emission

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_solution_csv(const std::filesystem::path& path,
                               const ScenarioRunResult& res) {
    const StochasticModel& m = *res.model;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "t,mean_norm_U,mean_norm_V,residual_t\n";
    for (int i = 0; i <= m.steps(); ++i) {
        out << detail::fmt17(m.grid().node(i)) << ','
            << detail::fmt17(lp_moment(res.sol.U.at(i), res.space)) << ',';
        if (i < m.steps()) out << detail::fmt17(lp_moment(res.sol.V.at(i), res.space));
        out << ',' << detail::fmt17(res.residual_profile[i]) << '\n';
    }
}

inline void write_nodes_csv(const std::filesystem::path& path, const ScenarioRunResult& res) {
    const StochasticModel& m = *res.model;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "level,t,state,w";
    for (int c = 0; c < res.cfg.dim; ++c) out << ",u" << c;
    for (int c = 0; c < res.cfg.dim; ++c) out << ",v" << c;
    out << '\n';
    for (int i = 0; i <= m.steps(); ++i)
        for (int s = 0; s < m.states(i); ++s) {
            out << i << ',' << detail::fmt17(m.grid().node(i)) << ',' << s << ','
                << detail::fmt17(m.brownian(i, s));
            for (int c = 0; c < res.cfg.dim; ++c)
                out << ',' << detail::fmt17(res.sol.U.values[i](c, s));
            for (int c = 0; c < res.cfg.dim; ++c)
                out << ',' << (i < m.steps() ? detail::fmt17(res.sol.V.values[i](c, s)) : "");
            out << '\n';
        }
}

inline nlohmann::json make_manifest(const ScenarioRunResult& res) {
    nlohmann::json j;
    j["scenario"] = res.cfg.name;
    j["config_hash"] = res.cfg.source_text.empty()
                           ? "0"
                           : [&] {
                                 char buf[20];
                                 std::snprintf(buf, sizeof(buf), "%016llx",
                                               static_cast<unsigned long long>(
                                                   fnv1a(res.cfg.source_text)));
                                 return std::string(buf);
                             }();
    j["seed"] = res.effective_seed;
    j["versions"] = {{"bseelab", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                   std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)}};
    j["model"] = res.cfg.model_kind;
    j["steps"] = res.cfg.steps;
    j["solver"] = res.cfg.method;
    j["timings_ms"] = {{"solve", res.solve_ms}, {"residual", res.residual_ms}};
    j["residual_max"] =
        *std::max_element(res.residual_profile.begin(), res.residual_profile.end());
    j["iterations"] = res.sol.iterations;
    if (res.gamma_bound) j["gamma_bound"] = *res.gamma_bound;
    if (res.guard) j["guard"] = *res.guard;
    return j;
}

inline void write_manifest(const std::filesystem::path& path, const ScenarioRunResult& res) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << make_manifest(res).dump(2) << '\n';
}

inline void write_convergence_csv(const std::filesystem::path& path,
                                  const std::vector<ConvergenceRow>& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const bool with_order = table.size() > 1;
    out << (with_order ? "steps,max_error,observed_order\n" : "steps,max_error\n");
    for (const auto& row : table) {
        out << row.steps << ',' << detail::fmt17(row.error);
        if (with_order) {
            out << ',';
            if (row.order) out << detail::fmt17(*row.order);
        }
        out << '\n';
    }
}

}  // namespace bsee
