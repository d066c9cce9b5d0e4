// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cot/chain.hpp"
#include "cot/errors.hpp"

namespace cot {

/// Scalar coefficient field (drift / volatility), constant in (t, y).
/// Only the constant vocabulary is admitted so instances stay auditable.
struct CoeffSpec {
    enum class Form { zero, constant } form = Form::zero;
    double value = 0.0;

    double operator()(double /*t*/, double /*y*/) const {
        return form == Form::zero ? 0.0 : value;
    }
    bool is_constant() const { return true; }
};

/// Per-state cost function from the closed config vocabulary.
struct CostFn {
    enum class Form { zero, constant, linear_xy, logistic, poly } form = Form::zero;
    std::vector<double> values;               // constant / linear-xy: one per state
    double slope = 0.0;                       // logistic
    int state = 0;                            // logistic, 0-based
    std::vector<std::vector<double>> coeffs;  // poly: per state, ascending powers

    double operator()(int i, double y) const {
        switch (form) {
            case Form::zero: return 0.0;
            case Form::constant: return values[static_cast<std::size_t>(i)];
            case Form::linear_xy: return values[static_cast<std::size_t>(i)] * y;
            case Form::logistic:
                return i == state ? 1.0 / (1.0 + std::exp(-slope * y)) : 0.0;
            case Form::poly: {
                const auto& c = coeffs[static_cast<std::size_t>(i)];
                double acc = 0.0;
                for (std::size_t k = c.size(); k-- > 0;) acc = acc * y + c[k];
                return acc;
            }
        }
        return 0.0;
    }
};

struct Atom {
    std::vector<double> y;  // point in R^d
    double w = 0.0;
};

struct DiffusionSpec {
    int dim = 1;
    CoeffSpec drift;
    CoeffSpec vol;
    double kappa = 0.0;  // declared uniform ellipticity bound
    std::vector<Atom> y0_atoms;
    double horizon = 0.0;

    void validate() const {
        if (dim < 1) throw input_error("diffusion: dim must be positive");
        if (horizon <= 0.0) throw input_error("diffusion: horizon must be positive");
        if (!(kappa > 0.0)) throw input_error("diffusion: vol must be bounded below by kappa > 0");
        if (y0_atoms.empty()) throw input_error("diffusion: y0_atoms must be nonempty");
        double mass = 0.0;
        for (const auto& a : y0_atoms) {
            if (a.w < 0.0) throw input_error("diffusion: negative atom weight");
            if (a.y.size() != static_cast<std::size_t>(dim))
                throw input_error("diffusion: atom dimension mismatch");
            for (double v : a.y)
                if (!std::isfinite(v)) throw input_error("diffusion: non-finite atom");
            mass += a.w;
        }
        if (std::abs(mass - 1.0) > 1e-12) throw input_error("diffusion: atom weights must sum to 1");
    }
};

struct CostSpec {
    CostFn f0, g0;
    double lipschitz_y = 0.0;  // declared, diagnostics only

    /// Simplex-linear lifts f(p,y) and g(p,y).
    std::pair<double, double> lift(const std::vector<double>& p, double y) const {
        double f = 0.0, g = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            f += f0(static_cast<int>(i), y) * p[i];
            g += g0(static_cast<int>(i), y) * p[i];
        }
        return {f, g};
    }
};

struct ProblemInstance {
    ChainSpec chain;
    DiffusionSpec diffusion;
    CostSpec cost;
    std::string fingerprint;  // content hash of the source config, hex

    void validate() const {
        chain.validate();
        diffusion.validate();
        auto check_states = [&](const CostFn& fn, const char* name) {
            std::size_t k = static_cast<std::size_t>(chain.K);
            switch (fn.form) {
                case CostFn::Form::constant:
                case CostFn::Form::linear_xy:
                    if (fn.values.size() != k)
                        throw input_error(std::string(name) + ": needs one value per state");
                    break;
                case CostFn::Form::logistic:
                    if (fn.state < 0 || fn.state >= chain.K)
                        throw input_error(std::string(name) + ": logistic state out of range");
                    break;
                case CostFn::Form::poly:
                    if (fn.coeffs.size() != k)
                        throw input_error(std::string(name) + ": needs coeffs per state");
                    break;
                case CostFn::Form::zero: break;
            }
        };
        check_states(cost.f0, "cost.f0");
        check_states(cost.g0, "cost.g0");
    }
};

inline std::pair<double, double> lift_costs(const CostSpec& cost, const std::vector<double>& p,
                                            double y) {
    return cost.lift(p, y);
}

inline std::uint64_t fnv1a(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace detail {

using json = nlohmann::json;

inline CostFn parse_cost_fn(const json& j, const std::string& where) {
    CostFn fn;
    if (!j.contains("form")) throw input_error(where + ": missing 'form'");
    std::string form = j.at("form").get<std::string>();
    const json params = j.value("params", json::object());
    if (form == "zero") {
        fn.form = CostFn::Form::zero;
    } else if (form == "const") {
        fn.form = CostFn::Form::constant;
        fn.values = params.at("values").get<std::vector<double>>();
    } else if (form == "linear-xy") {
        fn.form = CostFn::Form::linear_xy;
        fn.values = params.at("values").get<std::vector<double>>();
    } else if (form == "logistic") {
        fn.form = CostFn::Form::logistic;
        fn.slope = params.at("slope").get<double>();
        fn.state = params.at("state").get<int>() - 1;  // config is 1-based
    } else if (form == "poly") {
        fn.form = CostFn::Form::poly;
        fn.coeffs = params.at("coeffs").get<std::vector<std::vector<double>>>();
    } else {
        throw input_error(where + ": unknown form '" + form + "'");
    }
    return fn;
}

inline json dump_cost_fn(const CostFn& fn) {
    json j;
    switch (fn.form) {
        case CostFn::Form::zero: j["form"] = "zero"; break;
        case CostFn::Form::constant:
            j["form"] = "const";
            j["params"]["values"] = fn.values;
            break;
        case CostFn::Form::linear_xy:
            j["form"] = "linear-xy";
            j["params"]["values"] = fn.values;
            break;
        case CostFn::Form::logistic:
            j["form"] = "logistic";
            j["params"]["slope"] = fn.slope;
            j["params"]["state"] = fn.state + 1;
            break;
        case CostFn::Form::poly:
            j["form"] = "poly";
            j["params"]["coeffs"] = fn.coeffs;
            break;
    }
    return j;
}

inline CoeffSpec parse_coeff(const json& j, const std::string& where) {
    CoeffSpec c;
    std::string form = j.at("form").get<std::string>();
    if (form == "zero") {
        c.form = CoeffSpec::Form::zero;
    } else if (form == "const") {
        c.form = CoeffSpec::Form::constant;
        c.value = j.at("params").at("value").get<double>();
    } else {
        throw input_error(where + ": unknown coefficient form '" + form + "'");
    }
    return c;
}

inline json dump_coeff(const CoeffSpec& c) {
    json j;
    if (c.form == CoeffSpec::Form::zero) {
        j["form"] = "zero";
    } else {
        j["form"] = "const";
        j["params"]["value"] = c.value;
    }
    return j;
}

}  // namespace detail

inline ProblemInstance parse_instance(const std::string& text, const std::string& origin = "") {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw input_error("config parse error" + (origin.empty() ? "" : " in " + origin) + ": " +
                          e.what());
    }
    ProblemInstance inst;
    try {
        const json& jc = j.at("chain");
        int k = jc.at("K").get<int>();
        auto rows = jc.at("lambda").get<std::vector<std::vector<double>>>();
        if (static_cast<int>(rows.size()) != k)
            throw input_error("chain.lambda: wrong number of rows");
        Matrix lam(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != k)
                throw input_error("chain.lambda: row " + std::to_string(i) + " has wrong length");
            for (int c = 0; c < k; ++c)
                lam(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) =
                    rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        }
        inst.chain = ChainSpec(k, std::move(lam), jc.at("p0").get<std::vector<double>>());

        const json& jd = j.at("diffusion");
        inst.diffusion.dim = jd.at("dim").get<int>();
        inst.diffusion.drift = detail::parse_coeff(jd.at("drift"), "diffusion.drift");
        inst.diffusion.vol = detail::parse_coeff(jd.at("vol"), "diffusion.vol");
        inst.diffusion.horizon = jd.at("T").get<double>();
        inst.diffusion.kappa =
            jd.value("kappa", inst.diffusion.vol.form == CoeffSpec::Form::constant
                                  ? inst.diffusion.vol.value
                                  : 0.0);
        for (const auto& ja : jd.at("y0_atoms")) {
            Atom a;
            if (ja.at("y").is_array())
                a.y = ja.at("y").get<std::vector<double>>();
            else
                a.y = {ja.at("y").get<double>()};
            a.w = ja.at("w").get<double>();
            inst.diffusion.y0_atoms.push_back(std::move(a));
        }

        const json& jk = j.at("cost");
        inst.cost.f0 = detail::parse_cost_fn(jk.at("f0"), "cost.f0");
        inst.cost.g0 = detail::parse_cost_fn(jk.at("g0"), "cost.g0");
        inst.cost.lipschitz_y = jk.value("lipschitz_y", 0.0);
    } catch (const json::exception& e) {
        throw input_error("config schema error: " + std::string(e.what()));
    }
    inst.validate();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(text)));
    inst.fingerprint = buf;
    return inst;
}

inline ProblemInstance load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_instance(ss.str(), path);
}

inline std::string serialize_instance(const ProblemInstance& inst) {
    using nlohmann::json;
    json j;
    j["chain"]["K"] = inst.chain.K;
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(inst.chain.K),
                                          std::vector<double>(static_cast<std::size_t>(inst.chain.K)));
    for (int i = 0; i < inst.chain.K; ++i)
        for (int c = 0; c < inst.chain.K; ++c)
            rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] =
                inst.chain.lambda(static_cast<std::size_t>(i), static_cast<std::size_t>(c));
    j["chain"]["lambda"] = rows;
    j["chain"]["p0"] = inst.chain.p0;
    j["diffusion"]["dim"] = inst.diffusion.dim;
    j["diffusion"]["drift"] = detail::dump_coeff(inst.diffusion.drift);
    j["diffusion"]["vol"] = detail::dump_coeff(inst.diffusion.vol);
    j["diffusion"]["kappa"] = inst.diffusion.kappa;
    for (const auto& a : inst.diffusion.y0_atoms)
        j["diffusion"]["y0_atoms"].push_back({{"y", a.y}, {"w", a.w}});
    j["diffusion"]["T"] = inst.diffusion.horizon;
    j["cost"]["f0"] = detail::dump_cost_fn(inst.cost.f0);
    j["cost"]["g0"] = detail::dump_cost_fn(inst.cost.g0);
    j["cost"]["lipschitz_y"] = inst.cost.lipschitz_y;
    return j.dump(2);
}

}  // namespace cot
