#include "kda/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "kda/error.hpp"

namespace kda {

using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError("config field '" + path + "': " + what);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) fail(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
}

std::string sub(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string idx(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

double as_number(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(path, "must be finite");
    return v;
}

long long as_integer(const json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<long long>();
}

std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

std::vector<double> as_numbers(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], idx(path, i)));
    return out;
}

std::vector<std::vector<double>> as_matrix(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of arrays");
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_numbers(j[i], idx(path, i)));
    return out;
}

ModeDict as_modes(const json& j, const std::string& path) {
    if (!j.is_object()) fail(path, "expected an object of Fourier modes, e.g. {\"cos:1\": 0.5}");
    ModeDict d;
    for (auto it = j.begin(); it != j.end(); ++it) d.emplace_back(it.key(), as_number(it.value(), sub(path, it.key())));
    return d;
}

std::size_t as_count(const json& j, const std::string& path) {
    const long long v = as_integer(j, path);
    if (v < 2) fail(path, "path counts must be >= 2");
    return static_cast<std::size_t>(v);
}

json modes_json(const ModeDict& d) {
    json o = json::object();
    for (const auto& [k, v] : d) o[k] = v;
    return o;
}

void validate(const ExperimentConfig& c) {
    if (c.schema_version != kSchemaVersion)
        fail("schema_version", "unsupported version " + std::to_string(c.schema_version));
    if (c.dim != 1 && c.dim != 2) fail("grid.dim", "must be 1 or 2");
    if (c.resolution < 8 || c.resolution % 2 != 0) fail("grid.resolution", "must be even and >= 8");
    if (c.epsilons.empty()) fail("epsilons", "must not be empty");
    for (std::size_t i = 0; i < c.epsilons.size(); ++i) {
        if (!(c.epsilons[i] > 0.0)) fail(idx("epsilons", i), "must be positive");
        if (i > 0 && !(c.epsilons[i] < c.epsilons[i - 1])) fail("epsilons", "must be strictly decreasing");
    }
    const TimeSpec& t = c.time;
    if (!(t.t_end > 0.0)) fail("time.t_end", "must be positive");
    if (t.mesh_intervals < 1) fail("time.mesh_intervals", "must be >= 1");
    if (!(t.dt_factor > 0.0) || t.dt_factor > 0.5) fail("time.dt_factor", "must lie in (0, 0.5]");
    if (!(t.spde_dt > 0.0)) fail("time.spde_dt", "must be positive");
    const double steps = t.t_end / t.spde_dt;
    const long long n = std::llround(steps);
    if (n < 1 || std::abs(steps - static_cast<double>(n)) > 1e-9 * steps)
        fail("time.spde_dt", "must divide t_end into whole steps");
    if (n % t.mesh_intervals != 0) fail("time.spde_dt", "SPDE steps must be a multiple of mesh_intervals");
    for (std::size_t i = 0; i < t.compare_times.size(); ++i) {
        const double k = t.compare_times[i] / t.t_end * t.mesh_intervals;
        if (std::abs(k - std::round(k)) > 1e-9 || k < 0.5 || k > t.mesh_intervals + 1e-9)
            fail(idx("time.compare_times", i), "must be a nonzero snapshot time t_end * k / mesh_intervals");
    }
    if (c.test_functions.empty()) fail("test_functions", "need at least one test function");
    if (c.psi.empty()) fail("psi", "need at least one psi");
    for (std::size_t i = 0; i < c.psi.size(); ++i) {
        const auto& p = c.psi[i];
        if (p != "identity" && p != "half_square" && p != "tanh")
            fail(idx("psi", i), "unknown psi '" + p + "' (identity, half_square, tanh)");
    }
    if (c.chain.states.empty()) fail("chain.states", "need at least one state");
    if (c.chain.radius_target && !(*c.chain.radius_target > 0.0 && *c.chain.radius_target <= 1.0))
        fail("chain.radius_target", "must lie in (0, 1]");
    if (c.paths.kinetic < 2 || c.paths.scaling < 2 || c.paths.spde < 2 || c.paths.mc < 2)
        fail("paths", "path counts must be >= 2");
    const std::string& k = c.model.kind;
    if (k != "two_speed" && k != "circle" && k != "custom")
        fail("model.kind", "unknown model '" + k + "' (two_speed, circle, custom)");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("config parse error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                          ": " + e.what());
    }
    check_keys(j, "", {"schema_version", "name", "grid", "model", "chain", "initial_density", "epsilons", "time",
                       "test_functions", "psi", "paths", "seed", "output_dir"});
    ExperimentConfig c;
    if (!j.contains("schema_version")) fail("schema_version", "missing");
    c.schema_version = static_cast<int>(as_integer(j["schema_version"], "schema_version"));
    if (j.contains("name")) c.name = as_string(j["name"], "name");

    if (!j.contains("grid")) fail("grid", "missing");
    check_keys(j["grid"], "grid", {"dim", "resolution"});
    c.dim = static_cast<int>(as_integer(j["grid"].value("dim", json(1)), "grid.dim"));
    if (!j["grid"].contains("resolution")) fail("grid.resolution", "missing");
    c.resolution = static_cast<int>(as_integer(j["grid"]["resolution"], "grid.resolution"));

    if (!j.contains("model")) fail("model", "missing");
    {
        const json& m = j["model"];
        check_keys(m, "model", {"kind", "count", "speed", "velocities", "weights", "equilibrium", "alpha"});
        c.model.kind = m.contains("kind") ? as_string(m["kind"], "model.kind") : "two_speed";
        if (m.contains("count")) c.model.count = static_cast<int>(as_integer(m["count"], "model.count"));
        if (m.contains("speed")) c.model.speed = as_number(m["speed"], "model.speed");
        if (m.contains("velocities")) c.model.velocities = as_matrix(m["velocities"], "model.velocities");
        if (m.contains("weights")) c.model.weights = as_numbers(m["weights"], "model.weights");
        if (m.contains("equilibrium")) c.model.equilibrium = as_numbers(m["equilibrium"], "model.equilibrium");
        if (m.contains("alpha")) c.model.alpha = as_number(m["alpha"], "model.alpha");
    }

    if (!j.contains("chain")) fail("chain", "missing");
    {
        const json& ch = j["chain"];
        check_keys(ch, "chain", {"states", "rates", "radius_target"});
        if (!ch.contains("states") || !ch["states"].is_array()) fail("chain.states", "expected an array");
        for (std::size_t i = 0; i < ch["states"].size(); ++i)
            c.chain.states.push_back(as_modes(ch["states"][i], idx("chain.states", i)));
        if (!ch.contains("rates")) fail("chain.rates", "missing");
        c.chain.rates = as_matrix(ch["rates"], "chain.rates");
        if (ch.contains("radius_target")) c.chain.radius_target = as_number(ch["radius_target"], "chain.radius_target");
    }

    if (!j.contains("initial_density")) fail("initial_density", "missing");
    c.initial_density = as_modes(j["initial_density"], "initial_density");
    if (j.contains("epsilons")) c.epsilons = as_numbers(j["epsilons"], "epsilons");

    if (j.contains("time")) {
        const json& t = j["time"];
        check_keys(t, "time", {"t_end", "mesh_intervals", "dt_factor", "spde_dt", "compare_times"});
        if (t.contains("t_end")) c.time.t_end = as_number(t["t_end"], "time.t_end");
        if (t.contains("mesh_intervals"))
            c.time.mesh_intervals = static_cast<int>(as_integer(t["mesh_intervals"], "time.mesh_intervals"));
        if (t.contains("dt_factor")) c.time.dt_factor = as_number(t["dt_factor"], "time.dt_factor");
        if (t.contains("spde_dt")) c.time.spde_dt = as_number(t["spde_dt"], "time.spde_dt");
        if (t.contains("compare_times")) c.time.compare_times = as_numbers(t["compare_times"], "time.compare_times");
    }

    if (!j.contains("test_functions") || !j["test_functions"].is_array()) fail("test_functions", "expected an array");
    for (std::size_t i = 0; i < j["test_functions"].size(); ++i)
        c.test_functions.push_back(as_modes(j["test_functions"][i], idx("test_functions", i)));
    if (j.contains("psi")) {
        if (!j["psi"].is_array()) fail("psi", "expected an array of names");
        c.psi.clear();
        for (std::size_t i = 0; i < j["psi"].size(); ++i) c.psi.push_back(as_string(j["psi"][i], idx("psi", i)));
    }

    if (j.contains("paths")) {
        const json& p = j["paths"];
        check_keys(p, "paths", {"kinetic", "scaling", "spde", "mc"});
        if (p.contains("kinetic")) c.paths.kinetic = as_count(p["kinetic"], "paths.kinetic");
        if (p.contains("scaling")) c.paths.scaling = as_count(p["scaling"], "paths.scaling");
        if (p.contains("spde")) c.paths.spde = as_count(p["spde"], "paths.spde");
        if (p.contains("mc")) c.paths.mc = as_count(p["mc"], "paths.mc");
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) fail("seed", "expected a non-negative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("output_dir")) c.output_dir = as_string(j["output_dir"], "output_dir");
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
    json j;
    j["schema_version"] = c.schema_version;
    if (!c.name.empty()) j["name"] = c.name;
    j["grid"] = {{"dim", c.dim}, {"resolution", c.resolution}};
    json m;
    m["kind"] = c.model.kind;
    if (c.model.kind == "circle") {
        m["count"] = c.model.count;
        m["speed"] = c.model.speed;
    }
    if (c.model.kind == "custom") {
        m["velocities"] = c.model.velocities;
        m["weights"] = c.model.weights;
    }
    if (!c.model.equilibrium.empty()) m["equilibrium"] = c.model.equilibrium;
    m["alpha"] = c.model.alpha;
    j["model"] = m;
    json ch;
    ch["states"] = json::array();
    for (const auto& s : c.chain.states) ch["states"].push_back(modes_json(s));
    ch["rates"] = c.chain.rates;
    if (c.chain.radius_target) ch["radius_target"] = *c.chain.radius_target;
    j["chain"] = ch;
    j["initial_density"] = modes_json(c.initial_density);
    j["epsilons"] = c.epsilons;
    j["time"] = {{"t_end", c.time.t_end},
                 {"mesh_intervals", c.time.mesh_intervals},
                 {"dt_factor", c.time.dt_factor},
                 {"spde_dt", c.time.spde_dt},
                 {"compare_times", c.time.compare_times}};
    j["test_functions"] = json::array();
    for (const auto& t : c.test_functions) j["test_functions"].push_back(modes_json(t));
    j["psi"] = c.psi;
    j["paths"] = {{"kinetic", c.paths.kinetic}, {"scaling", c.paths.scaling}, {"spde", c.paths.spde}, {"mc", c.paths.mc}};
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    return j.dump(2) + "\n";
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string config_hash(const ExperimentConfig& c) {
    // The output directory does not influence results, so it is left out.
    ExperimentConfig k = c;
    k.output_dir.clear();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(serialize_config(k))));
    return buf;
}

std::vector<FourierMode> parse_modes(const ModeDict& d, int dim) {
    std::vector<FourierMode> out;
    for (const auto& [key, amp] : d) {
        FourierMode m;
        m.amplitude = amp;
        if (key == "const") {
            m.kind = FourierMode::Kind::Const;
            out.push_back(m);
            continue;
        }
        const auto colon = key.find(':');
        const std::string kind = key.substr(0, colon);
        if (colon == std::string::npos || (kind != "cos" && kind != "sin"))
            throw ConfigError("mode key '" + key + "': expected const, cos:k or sin:k");
        m.kind = kind == "cos" ? FourierMode::Kind::Cos : FourierMode::Kind::Sin;
        std::stringstream ss(key.substr(colon + 1));
        std::string part;
        std::vector<int> ks;
        while (std::getline(ss, part, ',')) {
            try {
                std::size_t used = 0;
                ks.push_back(std::stoi(part, &used));
                if (used != part.size()) throw std::invalid_argument(part);
            } catch (const std::exception&) {
                throw ConfigError("mode key '" + key + "': bad wavenumber '" + part + "'");
            }
        }
        if (static_cast<int>(ks.size()) != dim)
            throw ConfigError("mode key '" + key + "': expected " + std::to_string(dim) + " wavenumber(s)");
        m.k = {ks[0], dim == 2 ? ks[1] : 0};
        out.push_back(m);
    }
    return out;
}

VelocityModel build_model(const ModelSpec& m, int dim) {
    if (m.kind == "two_speed") {
        if (dim != 1) throw ConfigError("model two_speed requires grid.dim = 1");
        return make_velocity_model({{1.0}, {-1.0}}, {0.5, 0.5}, m.equilibrium.empty() ? std::vector<double>{1.0, 1.0}
                                                                                     : m.equilibrium,
                                   m.alpha);
    }
    if (m.kind == "circle") {
        if (dim != 2) throw ConfigError("model circle requires grid.dim = 2");
        return circle_model(m.count, m.speed, m.equilibrium, m.alpha);
    }
    return make_velocity_model(m.velocities, m.weights, m.equilibrium, m.alpha);
}

PilotChain build_chain_from_spec(const ChainSpec& spec, GridPtr grid, double alpha, double* raw_radius) {
    std::vector<GridField> states;
    double r = 0.0;
    const int band = default_band(*grid);
    for (const auto& s : spec.states) {
        const auto modes = parse_modes(s, grid->dim());
        states.push_back(field_from_modes(grid, modes));
        if (band_excess(states.back(), band) <= 1e-9) r = std::max(r, c3_norm(states.back()));
    }
    if (raw_radius) *raw_radius = r;
    double scale = 1.0;
    if (spec.radius_target && r > 0.0) scale = std::min(1.0, *spec.radius_target * alpha / (4.0 * r));
    if (scale != 1.0)
        for (auto& s : states) s = s * scale;
    const std::size_t n = spec.rates.size();
    Eigen::MatrixXd Q(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (spec.rates[i].size() != n)
            throw AdmissibilityError(Hypothesis::generator, "rate matrix row " + std::to_string(i) + " has " +
                                                                std::to_string(spec.rates[i].size()) +
                                                                " entries, expected " + std::to_string(n));
        for (std::size_t k = 0; k < n; ++k) Q(i, k) = spec.rates[i][k];
    }
    return build_chain(std::move(states), Q, alpha, scale);
}

Experiment build_experiment(const ExperimentConfig& c) {
    Experiment e;
    e.config = c;
    e.grid = make_grid(c.dim, c.resolution);
    e.model = build_model(c.model, c.dim);
    e.chain = build_chain_from_spec(c.chain, e.grid, e.model.alpha(), &e.raw_radius);
    e.rho_in = field_from_modes(e.grid, parse_modes(c.initial_density, c.dim));
    if (e.rho_in.min() < 0.0) throw ConfigError("config field 'initial_density': density must be non-negative");
    for (std::size_t i = 0; i < c.test_functions.size(); ++i) {
        GridField xi = field_from_modes(e.grid, parse_modes(c.test_functions[i], c.dim));
        if (band_excess(xi, default_band(*e.grid)) > 1e-9)
            throw ConfigError("config field 'test_functions[" + std::to_string(i) +
                              "]': modes must stay below resolution / 4");
        e.test_functions.push_back(std::move(xi));
    }
    return e;
}

}  // namespace kda
