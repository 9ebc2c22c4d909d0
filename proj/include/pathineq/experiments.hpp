#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "bsdesolve.hpp"
#include "generators.hpp"
#include "inequalities.hpp"
#include "pathcore.hpp"
#include "pathio.hpp"
#include "random.hpp"
#include "sdesolve.hpp"
#include "stopping.hpp"

namespace pathineq {

inline constexpr const char* kExperimentFormat = "pathineq-experiment/1";

enum class Recipe { Brownian, SdeZvonkin, BsdeLipschitz, BsdeQuadratic, Snell, StoppingOnBsde, UtilityMax };

inline const char* to_string(Recipe r) {
    switch (r) {
        case Recipe::Brownian: return "brownian";
        case Recipe::SdeZvonkin: return "sde-zvonkin";
        case Recipe::BsdeLipschitz: return "bsde-lipschitz";
        case Recipe::BsdeQuadratic: return "bsde-quadratic";
        case Recipe::Snell: return "snell";
        case Recipe::StoppingOnBsde: return "stopping-on-bsde";
        case Recipe::UtilityMax: return "utility-max";
    }
    return "?";
}

inline Recipe recipe_from(const std::string& s) {
    for (Recipe r : {Recipe::Brownian, Recipe::SdeZvonkin, Recipe::BsdeLipschitz, Recipe::BsdeQuadratic, Recipe::Snell,
                     Recipe::StoppingOnBsde, Recipe::UtilityMax})
        if (s == to_string(r)) return r;
    throw std::invalid_argument("unknown recipe '" + s + "'");
}

// ---------------------------------------------------------------- registries

struct TerminalSpec {
    ScalarTerminal F;
    double L_F = 1.0;
    bool bounded_below = false;
    std::string name;
};

namespace detail {
inline double get_or(const std::map<std::string, double>& p, const std::string& k, double def) {
    auto it = p.find(k);
    return it == p.end() ? def : it->second;
}
}  // namespace detail

// Terminal functionals of the first coordinate, scaled by `F_scale`.
inline TerminalSpec terminal_library(const std::string& name, const std::map<std::string, double>& p) {
    const double a = detail::get_or(p, "F_scale", 1.0);
    TerminalSpec t;
    t.name = name;
    t.L_F = std::abs(a);
    if (name == "wT") {
        t.F = [a](const Path& w) { return a * w(w.rows() - 1, 0); };
    } else if (name == "sin-wT") {
        t.F = [a](const Path& w) { return a * std::sin(w(w.rows() - 1, 0)); };
        t.bounded_below = true;
    } else if (name == "clipped-wT") {
        const double c = detail::get_or(p, "clip", 2.0);
        t.F = [a, c](const Path& w) { return a * std::clamp(w(w.rows() - 1, 0), -c, c); };
        t.bounded_below = true;
    } else if (name == "running-max") {
        t.F = [a](const Path& w) {
            double m = w(0, 0);
            for (std::size_t k = 1; k < w.rows(); ++k) m = std::max(m, w(k, 0));
            return a * m;
        };
        t.bounded_below = a >= 0.0;
    } else {
        throw std::invalid_argument("unknown terminal '" + name + "'");
    }
    return t;
}

inline ObstacleProcess obstacle_library(const std::string& name, const std::map<std::string, double>& p) {
    if (name == "martingale") return martingale_obstacle();
    if (name == "put") return put_obstacle(detail::get_or(p, "K", 0.5), detail::get_or(p, "rate", 0.0));
    if (name == "constant") return constant_obstacle(detail::get_or(p, "level", 0.0));
    if (name == "running-max") return running_max_obstacle();
    throw std::invalid_argument("unknown obstacle '" + name + "'");
}

// One-dimensional drifts with constant diffusion `sigma`.
inline SdeModel drift_library(const std::string& name, const std::map<std::string, double>& p) {
    const double a = detail::get_or(p, "amplitude", 1.0);
    const double sigma = detail::get_or(p, "sigma", 1.0);
    const double x0 = detail::get_or(p, "x0", 0.0);
    SdeModel::Scalar b;
    if (name == "zero") b = [](double, double) { return 0.0; };
    else if (name == "gaussian-bump") b = [a](double, double x) { return a * std::exp(-x * x); };
    else if (name == "odd-bump") b = [a](double, double x) { return -a * x * std::exp(-x * x); };
    else if (name == "sign-bump")
        b = [a](double, double x) { return std::abs(x) < 1.0 ? (x < 0.0 ? -a : (x > 0.0 ? a : 0.0)) : 0.0; };
    else throw std::invalid_argument("unknown drift '" + name + "'");
    return constant_sigma_model(std::move(b), sigma, x0, name);
}

// "standard", or a comma list of zero | constant:c | ramp:a (q = a t) | sine:a | adapted:a (q = -a tanh(w)).
inline std::vector<GirsanovTilt> tilt_battery_from(const std::string& text, int d, double horizon) {
    if (text == "standard") return standard_tilt_battery(d, horizon);
    std::vector<GirsanovTilt> out;
    const double sd = std::sqrt(static_cast<double>(d));
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok.erase(0, tok.find_first_not_of(" \t"));
        tok.erase(tok.find_last_not_of(" \t") + 1);
        if (tok.empty()) continue;
        auto colon = tok.find(':');
        std::string kind = tok.substr(0, colon);
        double a = 1.0;
        if (colon != std::string::npos) {
            try {
                a = std::stod(tok.substr(colon + 1));
            } catch (const std::exception&) {
                throw std::invalid_argument("bad tilt amplitude in '" + tok + "'");
            }
        }
        if (kind == "zero") out.push_back(GirsanovTilt::zero(d));
        else if (kind == "constant") out.push_back(GirsanovTilt::constant(std::vector<double>(d, a), tok));
        else if (kind == "ramp")
            out.push_back(GirsanovTilt::deterministic(
                d, [a](double t, std::span<double> o) { std::fill(o.begin(), o.end(), a * t); },
                std::abs(a) * horizon * sd, tok));
        else if (kind == "sine")
            out.push_back(GirsanovTilt::deterministic(
                d,
                [a](double t, std::span<double> o) {
                    std::fill(o.begin(), o.end(), a * std::sin(2.0 * std::numbers::pi * t));
                },
                std::abs(a) * sd, tok));
        else if (kind == "adapted")
            out.push_back(GirsanovTilt::adapted(
                d,
                [a](double, const PathView& w, std::span<double> o) {
                    auto x = w.current();
                    for (std::size_t j = 0; j < o.size(); ++j) o[j] = -a * std::tanh(x[j]);
                },
                std::abs(a) * sd, tok));
        else throw std::invalid_argument("unknown tilt '" + kind + "'");
    }
    if (out.empty()) throw std::invalid_argument("empty tilt battery");
    return out;
}

// ---------------------------------------------------------------- spec

struct ExperimentSpec {
    std::string name;
    std::string theorem;
    Recipe recipe = Recipe::Brownian;
    std::map<std::string, std::string> choices;  // registry names: generator, terminal, obstacle, drift, output
    std::map<std::string, double> params;        // numeric model parameters
    double horizon = 1.0;
    std::int64_t steps = 100;
    int d = 1;
    std::size_t n_paths = 512;
    std::size_t n_train = 4000;
    std::string tilts = "standard";
    std::optional<double> constant;  // unset: taken from the owning calculator
    std::optional<double> theta;
    std::optional<RhsForm> form;
    std::size_t bootstrap = 20;
    bool gaussian = false, empirical = false, lsi = false;
    double gaussian_time = 0.5;  // fraction of the horizon
    std::size_t gaussian_n = 20000;
    std::size_t empirical_N = 64, empirical_batches = 300;
    double lsi_time = 0.5;  // fraction of the horizon
    std::size_t lsi_n = 20000;
    std::uint64_t seed = 1;

    TimeGrid grid() const { return make_grid(horizon, steps); }
    std::string choice(const std::string& k, const std::string& def) const {
        auto it = choices.find(k);
        return it == choices.end() ? def : it->second;
    }

    nlohmann::json to_json() const {
        nlohmann::json j = {{"format", kExperimentFormat},
                            {"name", name},
                            {"theorem", theorem},
                            {"recipe", to_string(recipe)},
                            {"seed", seed},
                            {"grid", {{"horizon", horizon}, {"steps", steps}}},
                            {"sample", {{"d", d}, {"n_paths", n_paths}, {"n_train", n_train}}},
                            {"model", nlohmann::json::object()},
                            {"tilts", tilts},
                            {"bootstrap", bootstrap},
                            {"checks",
                             {{"gaussian", gaussian},
                              {"empirical", empirical},
                              {"lsi", lsi},
                              {"gaussian_time", gaussian_time},
                              {"gaussian_n", gaussian_n},
                              {"empirical_N", empirical_N},
                              {"empirical_batches", empirical_batches},
                              {"lsi_time", lsi_time},
                              {"lsi_n", lsi_n}}}};
        for (const auto& [k, v] : choices) j["model"][k] = v;
        for (const auto& [k, v] : params) j["model"][k] = v;
        if (constant) j["inequality"]["constant"] = *constant;
        if (theta) j["inequality"]["theta"] = *theta;
        if (form) j["inequality"]["form"] = *form == RhsForm::PowerOfProduct ? "power-of-product" : "product-with-power";
        return j;
    }
};

namespace detail {
template <class T>
T ini_get(const boost::property_tree::ptree& pt, const std::string& key, T def) {
    auto v = pt.get_optional<std::string>(key);
    if (!v) return def;
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (*v == "true" || *v == "1" || *v == "yes") return true;
            if (*v == "false" || *v == "0" || *v == "no") return false;
            throw std::invalid_argument("not a boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
            return *v;
        } else if constexpr (std::is_floating_point_v<T>) {
            std::size_t pos = 0;
            double x = std::stod(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("trailing characters");
            return x;
        } else {
            std::size_t pos = 0;
            long long x = std::stoll(*v, &pos);
            if (pos != v->size() || x < 0) throw std::invalid_argument("not a non-negative integer");
            return static_cast<T>(x);
        }
    } catch (const std::exception&) {
        throw std::invalid_argument("spec key '" + key + "': cannot read value '" + *v + "'");
    }
}
}  // namespace detail

inline const std::vector<std::string>& experiment_choice_keys() {
    static const std::vector<std::string> keys{"generator", "terminal", "obstacle", "drift", "output"};
    return keys;
}

inline ExperimentSpec parse_experiment(std::istream& is) {
    namespace pt = boost::property_tree;
    pt::ptree t;
    try {
        pt::read_ini(is, t);
    } catch (const pt::ini_parser_error& e) {
        throw std::invalid_argument(std::string("spec does not parse: ") + e.what());
    }
    auto fmt = t.get_optional<std::string>("format");
    if (!fmt) throw std::invalid_argument("spec lacks the 'format' header field");
    if (*fmt != kExperimentFormat)
        throw std::invalid_argument("unsupported spec format '" + *fmt + "' (expected " + kExperimentFormat + ")");
    ExperimentSpec s;
    using detail::ini_get;
    s.name = ini_get<std::string>(t, "name", "");
    if (s.name.empty()) throw std::invalid_argument("spec lacks 'name'");
    for (char c : s.name)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'))
            throw std::invalid_argument("spec name may only contain letters, digits, '-' and '_'");
    s.theorem = ini_get<std::string>(t, "theorem", "");
    s.recipe = recipe_from(ini_get<std::string>(t, "recipe", ""));
    s.seed = ini_get<std::uint64_t>(t, "seed", 1);
    s.horizon = ini_get<double>(t, "grid.horizon", 1.0);
    s.steps = static_cast<std::int64_t>(ini_get<std::uint64_t>(t, "grid.steps", 100));
    s.d = static_cast<int>(ini_get<std::uint64_t>(t, "sample.d", 1));
    s.n_paths = ini_get<std::size_t>(t, "sample.n_paths", 512);
    s.n_train = ini_get<std::size_t>(t, "sample.n_train", 4000);
    if (auto m = t.get_child_optional("model")) {
        for (const auto& [k, v] : *m) {
            const auto& keys = experiment_choice_keys();
            if (std::find(keys.begin(), keys.end(), k) != keys.end()) s.choices[k] = v.data();
            else s.params[k] = ini_get<double>(t, "model." + k, 0.0);
        }
    }
    s.tilts = ini_get<std::string>(t, "tilts.battery", "standard");
    s.bootstrap = ini_get<std::size_t>(t, "tilts.bootstrap", 20);
    auto c = ini_get<std::string>(t, "inequality.constant", "auto");
    if (c != "auto") s.constant = ini_get<double>(t, "inequality.constant", 0.0);
    if (t.get_optional<std::string>("inequality.theta")) s.theta = ini_get<double>(t, "inequality.theta", 0.5);
    if (auto f = t.get_optional<std::string>("inequality.form")) {
        if (*f == "power-of-product") s.form = RhsForm::PowerOfProduct;
        else if (*f == "product-with-power") s.form = RhsForm::ProductWithPower;
        else throw std::invalid_argument("inequality.form must be power-of-product or product-with-power");
    }
    s.gaussian = ini_get<bool>(t, "checks.gaussian", false);
    s.empirical = ini_get<bool>(t, "checks.empirical", false);
    s.lsi = ini_get<bool>(t, "checks.lsi", false);
    s.gaussian_time = ini_get<double>(t, "checks.gaussian_time", 0.5);
    s.gaussian_n = ini_get<std::size_t>(t, "checks.gaussian_n", 20000);
    s.empirical_N = ini_get<std::size_t>(t, "checks.empirical_N", 64);
    s.empirical_batches = ini_get<std::size_t>(t, "checks.empirical_batches", 300);
    s.lsi_time = ini_get<double>(t, "checks.lsi_time", 0.5);
    s.lsi_n = ini_get<std::size_t>(t, "checks.lsi_n", 20000);
    return s;
}

inline ExperimentSpec load_experiment(const std::string& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot open spec file " + file);
    return parse_experiment(is);
}

inline void write_experiment(const ExperimentSpec& s, std::ostream& os) {
    os << "format = " << kExperimentFormat << "\n";
    os << "name = " << s.name << "\n";
    os << "theorem = " << s.theorem << "\n";
    os << "recipe = " << to_string(s.recipe) << "\n";
    os << "seed = " << s.seed << "\n\n";
    os << "[grid]\nhorizon = " << s.horizon << "\nsteps = " << s.steps << "\n\n";
    os << "[sample]\nd = " << s.d << "\nn_paths = " << s.n_paths << "\nn_train = " << s.n_train << "\n\n";
    os << "[model]\n";
    for (const auto& [k, v] : s.choices) os << k << " = " << v << "\n";
    for (const auto& [k, v] : s.params) os << k << " = " << v << "\n";
    os << "\n[tilts]\nbattery = " << s.tilts << "\nbootstrap = " << s.bootstrap << "\n\n";
    os << "[inequality]\nconstant = ";
    if (s.constant) os << *s.constant;
    else os << "auto";
    os << "\n";
    if (s.theta) os << "theta = " << *s.theta << "\n";
    if (s.form) os << "form = " << (*s.form == RhsForm::PowerOfProduct ? "power-of-product" : "product-with-power") << "\n";
    os << "\n[checks]\ngaussian = " << (s.gaussian ? "true" : "false") << "\nempirical = "
       << (s.empirical ? "true" : "false") << "\nlsi = " << (s.lsi ? "true" : "false") << "\n";
    os << "gaussian_time = " << s.gaussian_time << "\ngaussian_n = " << s.gaussian_n << "\n";
    os << "empirical_N = " << s.empirical_N << "\nempirical_batches = " << s.empirical_batches << "\n";
    os << "lsi_time = " << s.lsi_time << "\nlsi_n = " << s.lsi_n << "\n";
}

// ---------------------------------------------------------------- process construction

struct BuiltProcess {
    PathMap map;
    double constant = 0.0;
    std::string constant_name;
    double theta = 0.5;
    RhsForm form = RhsForm::PowerOfProduct;
    std::optional<double> lsi_constant;
    nlohmann::json info = nlohmann::json::object();
};

namespace detail {

inline BsdeModel model_from_spec(const ExperimentSpec& s, const std::string& default_generator) {
    auto gname = s.choice("generator", default_generator);
    auto term = terminal_library(s.choice("terminal", "sin-wT"), s.params);
    BsdeModel model;
    model.m = 1;
    model.d = s.d;
    model.gen = generator_library(gname, s.params, s.d);
    model.F = scalar_terminal(term.F);
    model.L_F = term.L_F;
    model.F_bounded_below = term.bounded_below;
    model.label = gname + "/" + term.name;
    validate_bsde_model(model, s.grid(), derive_seed(s.seed, 0x7a11d));
    return model;
}

inline SnellConfig contraction_snell_config() {
    SnellConfig c;
    c.basis = BasisConfig{BasisKind::LocalAverage, 3, 32, 1e-10};
    c.carry = SnellCarry::Fitted;
    return c;
}

inline PathMap compose(PathMap inner, PathMap outer) {
    return [inner = std::move(inner), outer = std::move(outer)](const PathBundle& w) { return outer(inner(w)); };
}

}  // namespace detail

inline BuiltProcess build_process(const ExperimentSpec& s) {
    const TimeGrid grid = s.grid();
    const double T = s.horizon;
    auto train = [&] { return sample_brownian(grid, s.d, s.n_train, derive_seed(s.seed, 0x7a1)); };
    BuiltProcess b;
    switch (s.recipe) {
        case Recipe::Brownian: {
            b.map = identity_process;
            b.constant = 2.0;
            b.constant_name = "Wiener measure T2 constant";
            b.lsi_constant = 2.0 * T;
            break;
        }
        case Recipe::SdeZvonkin: {
            if (s.d != 1) throw std::invalid_argument("sde-zvonkin: one-dimensional noise only");
            auto model = drift_library(s.choice("drift", "sign-bump"), s.params);
            int n_t = static_cast<int>(detail::get_or(s.params, "n_t", 4));
            auto z = std::make_shared<const ZvonkinTransform>(build_zvonkin(model, T, n_t));
            auto c = zvonkin_constants(model, *z);
            b.map = [model, z](const PathBundle& w) { return solve_sde_zvonkin(model, *z, w).X; };
            b.constant = c.C_x;
            b.constant_name = std::string("C_x (") + to_string(c.variant) + ")";
            b.info["sde_constants"] = c.to_json();
            break;
        }
        case Recipe::BsdeLipschitz:
        case Recipe::UtilityMax: {
            auto model = detail::model_from_spec(s, s.recipe == Recipe::UtilityMax ? "utility" : "linear-sin");
            if (model.gen.meta.cls == GeneratorClass::QuadraticConvex)
                throw std::invalid_argument(std::string(to_string(s.recipe)) +
                                            ": generator is quadratic-convex; use the bsde-quadratic recipe "
                                            "(only g = c/2 |z|^2 has a solver) or an unconstrained set");
            auto sol = solve_bsde_lsmc(model, grid, train());
            auto c = bsde_constants(model, T);
            b.info["bsde_constants"] = c.to_json();
            b.info["solution"] = solution_summary(sol);
            b.info["generator_class"] = to_string(model.gen.meta.cls);
            const auto out = s.choice("output", "y");
            if (out == "y" && s.recipe == Recipe::UtilityMax) {
                if (!c.C_yz) throw std::invalid_argument("utility-max: constraint set is not the full space");
                b.map = sol.as_map();
                b.constant = *c.C_yz;
                b.constant_name = "C_yz (linear generator)";
            } else if (out == "y") {
                b.map = sol.as_map();
                b.constant = *c.C_y_multi;
                b.constant_name = "C_y (Lipschitz BSDE)";
                b.lsi_constant = *c.lsi_multi;
            } else if (out == "z") {
                b.map = sol.z_map();
                b.constant = *c.C_z_quartic;
                b.constant_name = "C_z (H^1/4 inequality for Z)";
                b.theta = 0.25;
                b.form = RhsForm::ProductWithPower;
            } else if (out == "z-linear") {
                if (!c.C_z_linear) throw std::invalid_argument("output z-linear needs a linear generator");
                b.map = sol.z_map();
                b.constant = *c.C_z_linear;
                b.constant_name = "C_z (linear generator)";
            } else {
                throw std::invalid_argument("unknown output '" + out + "' (y, z, z-linear)");
            }
            break;
        }
        case Recipe::BsdeQuadratic: {
            if (s.d != 1) throw std::invalid_argument("bsde-quadratic: one-dimensional noise only");
            auto term = terminal_library(s.choice("terminal", "wT"), s.params);
            QuadraticConfig qc;
            qc.scale = detail::get_or(s.params, "scale", 1.0);
            auto sol = solve_quadratic_exponential(term.F, grid, train(), qc);
            BsdeConstantInputs in;
            in.T = T;
            in.L_F = term.L_F;
            auto c = compute_bsde_constants(in);
            b.map = sol.as_map();
            b.constant = *c.C_y_1d;
            b.constant_name = "C_y (one-dimensional quadratic BSDE)";
            b.lsi_constant = *c.lsi_1d;
            b.info["bsde_constants"] = c.to_json();
            b.info["solution"] = solution_summary(sol);
            if (!term.bounded_below) b.info["warnings"].push_back("terminal value is not bounded below");
            break;
        }
        case Recipe::Snell: {
            auto ob = obstacle_library(s.choice("obstacle", "put"), s.params);
            validate_obstacle(ob, grid, s.d, derive_seed(s.seed, 0x0b5));
            auto sol = snell_envelope_lsmc(ob, grid, train(), detail::contraction_snell_config());
            b.map = sol.as_map();
            b.constant = stopping_constants(ob.L_Gamma);
            b.constant_name = "C_s";
            b.info["snell"] = sol.to_json();
            break;
        }
        case Recipe::StoppingOnBsde: {
            auto model = detail::model_from_spec(s, "quadratic");
            auto ob = obstacle_library(s.choice("obstacle", "martingale"), s.params);
            auto comp = compose_stopping_on_bsde(model, ob, grid, train(), LsmcConfig{},
                                                 detail::contraction_snell_config());
            b.map = detail::compose(comp.bsde.as_map(), comp.snell.as_map());
            b.constant = comp.C;
            b.constant_name = "C for stopping on a BSDE value";
            b.info["composition"] = comp.to_json();
            break;
        }
    }
    if (s.constant) {
        b.constant = *s.constant;
        b.constant_name = "user constant";
    }
    if (s.theta) b.theta = *s.theta;
    if (s.form) b.form = *s.form;
    return b;
}

// ---------------------------------------------------------------- run

struct ExperimentResult {
    std::string name;
    std::string theorem;
    Verdict verdict = Verdict::Pass;
    nlohmann::json report;
    std::filesystem::path dir;
};

namespace detail {
inline std::vector<double> marginal(const PathBundle& b, double fraction, int coord = 0) {
    auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(b.grid.steps)));
    k = std::min<std::size_t>(k, static_cast<std::size_t>(b.grid.steps));
    std::vector<double> v(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) v[i] = b[i](k, coord);
    return v;
}
}  // namespace detail

// Runs one experiment into out_root/<name>. Artifacts are written to a
// temporary directory that is renamed into place only after every step has
// succeeded; on error nothing is left behind.
inline ExperimentResult run_experiment(const ExperimentSpec& s, const std::filesystem::path& out_root) {
    namespace fs = std::filesystem;
    if (s.n_paths < 2) throw std::invalid_argument("n_paths must be >= 2");
    if (s.d < 1) throw std::invalid_argument("d must be >= 1");
    const TimeGrid grid = s.grid();
    auto built = build_process(s);
    TransportInequalitySpec ineq{built.constant, built.theta, 2.0, built.form,
                                 built.theta == 0.5 && built.form == RhsForm::PowerOfProduct ? "T2" : "W2-H^theta"};
    VerifyConfig vc;
    vc.bootstrap = s.bootstrap;
    vc.process_label = to_string(s.recipe);
    auto tilts = tilt_battery_from(s.tilts, s.d, s.horizon);
    auto ver = verify_transport_inequality(built.map, tilts, ineq, grid, s.n_paths, s.seed, vc);

    ExperimentResult res;
    res.name = s.name;
    res.theorem = s.theorem;
    res.verdict = ver.verdict;
    nlohmann::json checks = nlohmann::json::object();
    std::optional<TailReport> tails;
    if (s.gaussian) {
        auto b = built.map(sample_brownian(grid, s.d, s.gaussian_n, derive_seed(s.seed, 0x6a5)));
        auto xs = detail::marginal(b, s.gaussian_time);
        double mean = 0.0, var = 0.0;
        for (double x : xs) mean += x;
        mean /= xs.size();
        for (double x : xs) var += (x - mean) * (x - mean);
        double sd = std::sqrt(var / xs.size());
        auto t = gaussian_concentration_probe(xs, linear_grid(0.0, 4.0 * std::max(sd, 1e-12), 17));
        checks["gaussian"] = t.to_json();
        checks["gaussian"]["time"] = s.gaussian_time * s.horizon;
        res.verdict = worst(res.verdict, t.verdict);
        tails = t;
    }
    if (s.empirical) {
        auto e = empirical_measure_concentration(built.map, grid, s.d, s.empirical_N, s.empirical_batches, {},
                                                 derive_seed(s.seed, 0xe3));
        checks["empirical"] = e.to_json();
        res.verdict = worst(res.verdict, e.tail.verdict);
        tails = e.tail;
    }
    if (s.lsi) {
        if (!built.lsi_constant) throw std::invalid_argument("lsi check: recipe has no log-Sobolev constant");
        auto b = built.map(sample_brownian(grid, s.d, s.lsi_n, derive_seed(s.seed, 0x151)));
        const int m = b.dim;
        auto k = static_cast<std::size_t>(std::llround(s.lsi_time * grid.steps));
        std::vector<std::vector<double>> pts(b.size(), std::vector<double>(m));
        double center = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i) {
            for (int j = 0; j < m; ++j) pts[i][j] = b[i](k, j);
            center += pts[i][0];
        }
        center /= b.size();
        auto l = lsi_probe(pts, standard_lsi_family(m, center), *built.lsi_constant);
        checks["lsi"] = l.to_json();
        checks["lsi"]["time"] = grid.time(static_cast<std::int64_t>(k));
        res.verdict = worst(res.verdict, l.pass ? Verdict::Pass : Verdict::Fail);
    }

    res.report = {{"spec", s.to_json()},
                  {"constant", {{"name", built.constant_name}, {"value", built.constant}}},
                  {"process", built.info},
                  {"verification", ver.to_json()},
                  {"checks", checks},
                  {"verdict", to_string(res.verdict)}};

    fs::create_directories(out_root);
    const fs::path final_dir = out_root / s.name;
    const fs::path tmp = out_root / ("." + s.name + ".tmp-" + std::to_string(derive_seed(s.seed, 0x7e)));
    fs::remove_all(tmp);
    try {
        fs::create_directories(tmp);
        {
            std::ofstream o(tmp / "report.json");
            o << res.report.dump(2) << "\n";
            if (!o) throw std::runtime_error("cannot write report.json");
        }
        {
            std::ofstream o(tmp / "tilts.csv");
            ver.write_csv(o);
        }
        {
            std::ofstream o(tmp / "tails.csv");
            if (tails) tails->write_csv(o);
            else o << "x,scaled_x2,tail,hits,used\n";
        }
        {
            std::ofstream o(tmp / "spec.ini");
            write_experiment(s, o);
        }
        save_bundle(*ver.sample, (tmp / "samples.bin").string());
        fs::remove_all(final_dir);
        fs::rename(tmp, final_dir);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        throw;
    }
    res.dir = final_dir;
    return res;
}

// ---------------------------------------------------------------- suite

inline std::vector<ExperimentSpec> standard_suite() {
    std::vector<ExperimentSpec> v;
    auto base = [](std::string name, std::string theorem, Recipe r, std::uint64_t seed) {
        ExperimentSpec s;
        s.name = std::move(name);
        s.theorem = std::move(theorem);
        s.recipe = r;
        s.seed = seed;
        return s;
    };
    v.push_back(base("brownian-t2", "Wiener measure satisfies T2(2)", Recipe::Brownian, 101));
    {
        auto s = base("bsde-lipschitz-t2", "T2 for multidimensional Lipschitz BSDEs", Recipe::BsdeLipschitz, 102);
        s.choices = {{"generator", "linear-sin"}, {"terminal", "sin-wT"}};
        s.params = {{"alpha", 1.0}, {"beta", 1.0}, {"gamma", 1.0}};
        v.push_back(s);
    }
    {
        auto s = base("bsde-quadratic-t2", "T2 for one-dimensional quadratic BSDEs", Recipe::BsdeQuadratic, 103);
        s.choices = {{"terminal", "sin-wT"}};
        v.push_back(s);
    }
    {
        auto s = base("bsde-quadratic-lsi", "Log-Sobolev inequality LSI(T C_y) for BSDE marginals",
                      Recipe::BsdeQuadratic, 104);
        s.choices = {{"terminal", "sin-wT"}};
        s.lsi = true;
        v.push_back(s);
    }
    {
        auto s = base("control-process-z", "H^1/4 transport inequality for the control process Z",
                      Recipe::BsdeLipschitz, 105);
        s.choices = {{"generator", "linear-sin"}, {"terminal", "sin-wT"}, {"output", "z"}};
        s.params = {{"alpha", 1.0}, {"beta", 0.0}, {"gamma", 0.0}};
        v.push_back(s);
    }
    {
        auto s = base("snell-t2", "Optimal stopping: T2(2 L_Gamma^2) and empirical-measure concentration",
                      Recipe::Snell, 106);
        s.choices = {{"obstacle", "put"}};
        s.params = {{"K", 0.5}, {"rate", 1.0}};
        s.empirical = true;
        s.gaussian = true;
        v.push_back(s);
    }
    {
        auto s = base("stopping-on-bsde", "Optimal stopping of a BSDE value process", Recipe::StoppingOnBsde, 107);
        s.choices = {{"generator", "quadratic"}, {"terminal", "clipped-wT"}, {"obstacle", "martingale"}};
        v.push_back(s);
    }
    {
        auto s = base("sde-zvonkin-t2", "T2 for SDEs with measurable drift", Recipe::SdeZvonkin, 108);
        s.choices = {{"drift", "sign-bump"}};
        s.params = {{"amplitude", 0.5}};
        v.push_back(s);
    }
    {
        auto s = base("utility-max", "Utility maximization with unconstrained portfolios", Recipe::UtilityMax, 109);
        s.choices = {{"generator", "utility"}, {"terminal", "sin-wT"}};
        s.params = {{"theta", 0.5}, {"alpha", 1.0}, {"shape", 0.0}};
        v.push_back(s);
    }
    return v;
}

// ---------------------------------------------------------------- constants

namespace detail {
inline const std::map<std::string, std::string>& constant_formulas() {
    static const std::map<std::string, std::string> f{
        {"C_y_multi", "2 (L_F + T L_g)^2 exp(2 T L_g)"},
        {"C_y_1d", "2 L_F^2"},
        {"L_Y", "(L_F + T L_g) exp(T L_g)"},
        {"L_Y_corollary", "L_F + T L_g exp(T L_g)"},
        {"z_bound", "m L_F^2 exp((2 L_g + L_g^2 + 1) T) + m L_g^2 T"},
        {"C_z_quartic", "2 (1 + (m L_F^2 exp((L_g + 1)^2 T) + m L_g^2 T)^4)^(1/4)"},
        {"C_z_quartic_proof", "2 (1 + (m L_F^2 exp((2 L_g + L_g^2 + 1) T) + m L_g^2 T)^4)^(1/4)"},
        {"Lambda", "sqrt(2 d m (L_F^2 + T L_g^2))"},
        {"C_y_growth", "2 (L_F + T max(L_g, rho_Q))^2 exp(2 T max(L_g, phi_Lambda))"},
        {"C_z_growth", "2 (1 + (m L_F^2 exp((max(L_g, phi_Lambda) + 1)^2 T) + m T max(L_g, phi_Lambda)^2)^4)^(1/4)"},
        {"small_T_ok", "T <= log(2) / (2 L_g + phi_Lambda^2 + 1)"},
        {"L_G", "max(L_alpha, |beta|, |gamma|)"},
        {"C_z_linear", "2 (L_F + T L_G)^2 exp(2 T L_G)"},
        {"C_yz", "max(C_y_multi, C_z_linear)"},
        {"lsi_multi", "T C_y_multi"},
        {"lsi_1d", "T 2 L_F^2"},
        {"C_s", "2 L_Gamma^2"},
        {"C_stop_bsde", "2 (L_Gamma L_Y)^2"},
        {"C_stop_bsde_corollary", "2 (L_Gamma L_Y_corollary)^2"},
        {"c1", "sup_t || b / (sigma sigma') ||_L1"},
        {"c2", "sup_t || b / (sigma sigma') ||_inf"},
        {"c3", "sup_t || d/dt b / (sigma sigma') ||_L1"},
        {"c4", "|| sup_t d/dt b / (sigma sigma') ||_L1"},
        {"C_y_sde", "6 exp(15 max(c3 e^{2 c1}, sigma_inf c2 e^{2 c1} + e^{2 c1} L_sigma^2))"},
        {"C_x_theorem", "6 exp(c1 + 15 max(c3 e^{2 c1}, sigma_inf c2 e^{2 c1} + e^{2 c1} L_sigma^2))"},
        {"C_x_theorem_linear_sigma", "6 exp(c1 + 15 max(c3 e^{2 c1}, sigma_inf c2 e^{2 c1} + e^{2 c1} L_sigma))"},
        {"C_x_pushforward", "6 exp(2 c1 + 15 max(c3 e^{2 c1}, sigma_inf c2 e^{2 c1} + e^{2 c1} L_sigma^2))"},
        {"C_x_pushforward_linear_sigma", "6 exp(2 c1 + 15 max(c3 e^{2 c1}, sigma_inf c2 e^{2 c1} + e^{2 c1} L_sigma))"},
        {"pushforward", "C L_psi^2"},
    };
    return f;
}

inline void put_constant(nlohmann::json& out, const std::string& key, double v) {
    out[key] = {{"value", v}, {"formula", constant_formulas().at(key)}};
}
}  // namespace detail

// All constants computable from a flat key/value model description. Numeric keys:
// T L_F L_g m d L_alpha beta gamma rho_Q phi_Lambda L_Gamma; c1 c2 c3 c4 sigma_inf
// L_sigma; C L_psi. A `drift` key (with the drift parameters) computes c1..c4
// from the Zvonkin tables instead.
inline nlohmann::json constants_report(const std::map<std::string, std::string>& kv) {
    auto num = [&](const std::string& k) -> std::optional<double> {
        auto it = kv.find(k);
        if (it == kv.end()) return std::nullopt;
        try {
            std::size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw std::invalid_argument("constants: '" + k + "' is not a number: '" + it->second + "'");
        }
    };
    static const std::vector<std::string> known{"T",   "L_F", "L_g",       "m",       "d",      "L_alpha",
                                                "beta", "gamma", "rho_Q", "phi_Lambda", "L_Gamma", "c1",
                                                "c2",  "c3",  "c4",        "sigma_inf", "L_sigma", "C",
                                                "L_psi", "drift", "amplitude", "sigma", "x0", "n_t"};
    for (const auto& [k, v] : kv)
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw std::invalid_argument("constants: unknown field '" + k + "'");

    nlohmann::json out = nlohmann::json::object();
    bool any = false;
    if (num("L_F") || num("L_Gamma")) {
        BsdeConstantInputs in;
        in.T = num("T");
        in.L_F = num("L_F");
        in.L_g = num("L_g");
        if (auto m = num("m")) in.m = static_cast<int>(*m);
        if (auto d = num("d")) in.d = static_cast<int>(*d);
        in.L_alpha = num("L_alpha");
        in.beta = num("beta");
        in.gamma = num("gamma");
        in.rho_Q = num("rho_Q");
        in.phi_Lambda = num("phi_Lambda");
        in.L_Gamma = num("L_Gamma");
        auto c = compute_bsde_constants(in);
        auto j = c.to_json();
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it.key() == "warnings") out["warnings"] = it.value();
            else if (it.key() == "small_T_ok")
                out["small_T_ok"] = {{"value", it.value()}, {"formula", detail::constant_formulas().at("small_T_ok")}};
            else detail::put_constant(out, it.key(), it.value().get<double>());
        }
        any = true;
    }
    std::optional<SdeConstants> sc;
    if (kv.count("drift")) {
        std::map<std::string, double> p;
        for (const char* k : {"amplitude", "sigma", "x0"})
            if (auto v = num(k)) p[k] = *v;
        auto model = drift_library(kv.at("drift"), p);
        auto z = build_zvonkin(model, num("T").value_or(1.0), static_cast<int>(num("n_t").value_or(4)));
        sc = zvonkin_constants(model, z);
    } else if (num("c1") && num("c2") && num("c3") && num("sigma_inf") && num("L_sigma")) {
        sc = sde_constants_from(*num("c1"), *num("c2"), *num("c3"), num("c4").value_or(0.0), *num("sigma_inf"),
                                *num("L_sigma"));
    }
    if (sc) {
        detail::put_constant(out, "c1", sc->c1);
        detail::put_constant(out, "c2", sc->c2);
        detail::put_constant(out, "c3", sc->c3);
        detail::put_constant(out, "c4", sc->c4);
        detail::put_constant(out, "C_y_sde", sc->C_y);
        detail::put_constant(out, "C_x_theorem", sc->C_x_theorem);
        detail::put_constant(out, "C_x_theorem_linear_sigma", sc->C_x_theorem_linear_sigma);
        detail::put_constant(out, "C_x_pushforward", sc->C_x_pushforward);
        detail::put_constant(out, "C_x_pushforward_linear_sigma", sc->C_x_pushforward_linear_sigma);
        any = true;
    }
    if (num("C") && num("L_psi")) {
        detail::put_constant(out, "pushforward", lipschitz_pushforward_constant(*num("C"), *num("L_psi")));
        any = true;
    }
    if (!any)
        throw std::invalid_argument(
            "constants: missing metadata fields: L_F (BSDE constants; with T, L_g, m, d for the multi-dimensional "
            "ones), L_Gamma (stopping), c1 c2 c3 sigma_inf L_sigma or drift (SDE), C and L_psi (pushforward)");
    return out;
}

}  // namespace pathineq
