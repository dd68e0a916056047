#include "mpru/params.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mpru/errors.hpp"

namespace mpru {

namespace {

struct FieldBinding {
    std::function<void(ModelParams&, const std::string&)> set;
    std::function<std::string(const ModelParams&)> get;
};

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

double parse_double(const std::string& s, const std::string& key, int line) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": value '" + s +
                          "' for key '" + key + "' is not a number");
    }
}

long long parse_int(const std::string& s, const std::string& key, int line) {
    double v = parse_double(s, key, line);
    long long iv = static_cast<long long>(std::llround(v));
    if (std::abs(v - static_cast<double>(iv)) > 1e-9)
        throw ConfigError("line " + std::to_string(line) + ": value '" + s +
                          "' for key '" + key + "' is not an integer");
    return iv;
}

// One binding table drives parsing, serialization and hashing so the three
// can never drift apart.
const std::map<std::string, FieldBinding>& bindings() {
    static const std::map<std::string, FieldBinding> table = [] {
        std::map<std::string, FieldBinding> m;
        auto dbl = [&m](const std::string& key, double ModelParams::* f) {
            m[key] = FieldBinding{
                [f, key](ModelParams& p, const std::string& s) { p.*f = parse_double(s, key, 0); },
                [f](const ModelParams& p) { return fmt_double(p.*f); }};
        };
        auto itg = [&m](const std::string& key, int ModelParams::* f) {
            m[key] = FieldBinding{
                [f, key](ModelParams& p, const std::string& s) { p.*f = static_cast<int>(parse_int(s, key, 0)); },
                [f](const ModelParams& p) { return std::to_string(p.*f); }};
        };
        auto lng = [&m](const std::string& key, long long ModelParams::* f) {
            m[key] = FieldBinding{
                [f, key](ModelParams& p, const std::string& s) { p.*f = parse_int(s, key, 0); },
                [f](const ModelParams& p) { return std::to_string(p.*f); }};
        };
        auto u64 = [&m](const std::string& key, std::uint64_t ModelParams::* f) {
            m[key] = FieldBinding{
                [f, key](ModelParams& p, const std::string& s) { p.*f = static_cast<std::uint64_t>(parse_int(s, key, 0)); },
                [f](const ModelParams& p) { return std::to_string(p.*f); }};
        };

        dbl("beta", &ModelParams::beta);
        dbl("gamma", &ModelParams::gamma);
        dbl("nu", &ModelParams::nu);
        dbl("psi", &ModelParams::psi);
        dbl("xi", &ModelParams::xi);
        dbl("A_cap", &ModelParams::A_cap);
        dbl("alpha", &ModelParams::alpha);
        dbl("delta", &ModelParams::delta);
        dbl("rho_Z", &ModelParams::rho_Z);
        dbl("sigma_eps", &ModelParams::sigma_eps);
        dbl("Z_disaster", &ModelParams::Z_disaster);
        dbl("zeta_low", &ModelParams::zeta_low);
        dbl("pi_enter", &ModelParams::pi_enter);
        dbl("pi_exit", &ModelParams::pi_exit);
        dbl("lambda_weight", &ModelParams::lambda_weight);
        itg("n_z", &ModelParams::n_z);
        dbl("z_span_std", &ModelParams::z_span_std);
        itg("ce_n_K", &ModelParams::ce_n_K);
        itg("ce_n_D", &ModelParams::ce_n_D);
        dbl("K_lo_frac", &ModelParams::K_lo_frac);
        dbl("K_hi_frac", &ModelParams::K_hi_frac);
        dbl("ce_dtil_lo", &ModelParams::ce_dtil_lo);
        dbl("ce_dtil_hi", &ModelParams::ce_dtil_hi);
        itg("ce_homotopy_stages", &ModelParams::ce_homotopy_stages);
        dbl("ti_damping", &ModelParams::ti_damping);
        dbl("ti_tol", &ModelParams::ti_tol);
        itg("ti_max_iter", &ModelParams::ti_max_iter);
        dbl("newton_basin", &ModelParams::newton_basin);
        dbl("newton_tol", &ModelParams::newton_tol);
        itg("newton_max_iter", &ModelParams::newton_max_iter);
        dbl("block_tol", &ModelParams::block_tol);
        itg("block_max_iter", &ModelParams::block_max_iter);
        itg("fb_n_K", &ModelParams::fb_n_K);
        dbl("fb_tol", &ModelParams::fb_tol);
        itg("fb_max_iter", &ModelParams::fb_max_iter);
        itg("ram_n_K", &ModelParams::ram_n_K);
        itg("ram_n_D", &ModelParams::ram_n_D);
        itg("ram_n_mu", &ModelParams::ram_n_mu);
        dbl("mu_abs_max", &ModelParams::mu_abs_max);
        dbl("ram_dtil_hi", &ModelParams::ram_dtil_hi);
        itg("nu_homotopy_stages", &ModelParams::nu_homotopy_stages);
        dbl("nu_homotopy_start", &ModelParams::nu_homotopy_start);
        dbl("vfi_tol", &ModelParams::vfi_tol);
        itg("vfi_max_iter", &ModelParams::vfi_max_iter);
        itg("howard_steps", &ModelParams::howard_steps);
        dbl("stage_tol", &ModelParams::stage_tol);
        itg("stage_max_iter", &ModelParams::stage_max_iter);
        itg("polish_sweeps", &ModelParams::polish_sweeps);
        dbl("polish_tol", &ModelParams::polish_tol);
        lng("sim_length", &ModelParams::sim_length);
        lng("sim_burn_in", &ModelParams::sim_burn_in);
        u64("seed", &ModelParams::seed);
        dbl("rule_d1_lo", &ModelParams::rule_d1_lo);
        dbl("rule_d1_hi", &ModelParams::rule_d1_hi);
        dbl("rule_d2_lo", &ModelParams::rule_d2_lo);
        dbl("rule_d2_hi", &ModelParams::rule_d2_hi);
        itg("rule_grid_n", &ModelParams::rule_grid_n);
        itg("rule_criterion_states", &ModelParams::rule_criterion_states);
        dbl("rule_polish_tol", &ModelParams::rule_polish_tol);
        return m;
    }();
    return table;
}

}  // namespace

void ModelParams::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid parameters: " + msg); };
    if (!(beta > 0.0 && beta < 1.0)) fail("beta must be in (0,1)");
    if (!(gamma > 0.0)) fail("gamma must be positive");
    if (!(nu > 0.0)) fail("nu must be positive");
    if (!(psi > 0.0)) fail("psi must be positive");
    if (!(xi > 0.0 && xi <= 1.0)) fail("xi must be in (0,1]");
    if (!(A_cap > 0.0)) fail("A_cap must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must be in (0,1)");
    if (!(delta > 0.0 && delta < 1.0)) fail("delta must be in (0,1)");
    if (!(std::abs(rho_Z) < 1.0)) fail("|rho_Z| must be below 1");
    if (!(sigma_eps >= 0.0)) fail("sigma_eps must be nonnegative");
    if (!(zeta_low > 0.0 && zeta_low <= 1.0)) fail("zeta_low must be in (0,1]");
    if (!(pi_enter >= 0.0 && pi_enter <= 1.0)) fail("pi_enter must be in [0,1]");
    if (!(pi_exit >= 0.0 && pi_exit <= 1.0)) fail("pi_exit must be in [0,1]");
    if (!(lambda_weight > 0.0 && lambda_weight < 1.0)) fail("lambda_weight must be in (0,1)");
    if (n_z < 2) fail("n_z must be at least 2");
    if (!(z_span_std > 0.0)) fail("z_span_std must be positive");
    if (ce_n_K < 4 || ce_n_D < 4) fail("CE grid needs at least 4 knots per axis");
    if (ram_n_K < 4 || ram_n_D < 4 || ram_n_mu < 4) fail("Ramsey grid needs at least 4 knots per axis");
    if (fb_n_K < 4) fail("first-best grid needs at least 4 knots");
    if (!(K_lo_frac > 0.0 && K_lo_frac < K_hi_frac)) fail("K grid fractions must satisfy 0 < lo < hi");
    if (!(ce_dtil_lo >= 0.0 && ce_dtil_lo < ce_dtil_hi)) fail("D/K grid bounds must satisfy 0 <= lo < hi");
    if (!(ram_dtil_hi > 0.0)) fail("ram_dtil_hi must be positive");
    if (!(mu_abs_max > 0.0)) fail("mu_abs_max must be positive");
    if (!(ti_damping > 0.0 && ti_damping <= 1.0)) fail("ti_damping must be in (0,1]");
    if (ce_homotopy_stages < 1) fail("ce_homotopy_stages must be at least 1");
    if (nu_homotopy_stages < 1) fail("nu_homotopy_stages must be at least 1");
    if (!(nu_homotopy_start >= nu)) fail("nu_homotopy_start must be at least nu");
    if (sim_length <= sim_burn_in) fail("sim_length must exceed sim_burn_in");
    if (rule_grid_n < 2) fail("rule_grid_n must be at least 2");
    if (rule_criterion_states < 1) fail("rule_criterion_states must be positive");
}

ModelParams ModelParams::from_stream(std::istream& in, const std::string& origin) {
    ModelParams p;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
        auto begin = std::find_if_not(line.begin(), line.end(), is_space);
        if (begin == line.end()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        auto trim = [&](std::string s) {
            auto b = std::find_if_not(s.begin(), s.end(), is_space);
            auto e = std::find_if_not(s.rbegin(), s.rend(), is_space).base();
            return (b < e) ? std::string(b, e) : std::string();
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto it = bindings().find(key);
        if (it == bindings().end())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (value.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty value for '" + key + "'");
        try {
            it->second.set(p, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    p.validate();
    return p;
}

ModelParams ModelParams::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open parameter file '" + path + "'");
    return from_stream(in, path);
}

void ModelParams::to_stream(std::ostream& out) const {
    for (const auto& [key, binding] : bindings()) out << key << " = " << binding.get(*this) << "\n";
}

void ModelParams::to_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write parameter file '" + path + "'");
    to_stream(out);
}

std::uint64_t ModelParams::hash() const {
    std::ostringstream os;
    to_stream(os);
    const std::string s = os.str();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace mpru
