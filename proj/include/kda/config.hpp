#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kda/chain.hpp"
#include "kda/velocity.hpp"

namespace kda {

inline constexpr int kSchemaVersion = 1;

// Thrown for malformed configs; the message names the line/column or field path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Ordered list of Fourier terms, keys "const", "cos:k", "sin:k" (1D) or "cos:kx,ky" (2D).
using ModeDict = std::vector<std::pair<std::string, double>>;

struct ModelSpec {
    std::string kind = "two_speed";  // two_speed | circle | custom
    int count = 4;                   // circle
    double speed = 1.0;              // circle
    std::vector<std::vector<double>> velocities;  // custom
    std::vector<double> weights;                  // custom
    std::vector<double> equilibrium;              // custom (circle: optional)
    double alpha = 1.0;
    bool operator==(const ModelSpec&) const = default;
};

struct ChainSpec {
    std::vector<ModeDict> states;
    std::vector<std::vector<double>> rates;
    std::optional<double> radius_target;  // states scaled by min(1, target alpha / (4 R))
    bool operator==(const ChainSpec&) const = default;
};

struct TimeSpec {
    double t_end = 1.0;
    int mesh_intervals = 20;
    double dt_factor = 0.25;  // kinetic dt_target = dt_factor eps^2
    double spde_dt = 1e-3;
    std::vector<double> compare_times{0.25, 0.5, 1.0};
    bool operator==(const TimeSpec&) const = default;
};

struct PathSpec {
    std::size_t kinetic = 400;  // law comparison at the smallest epsilon
    std::size_t scaling = 50;   // per epsilon for the local-equilibrium regression
    std::size_t spde = 400;
    std::size_t mc = 10000;
    bool operator==(const PathSpec&) const = default;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::string name;
    int dim = 1;
    int resolution = 64;
    ModelSpec model;
    ChainSpec chain;
    ModeDict initial_density;
    std::vector<double> epsilons{0.4, 0.2, 0.1, 0.05};
    TimeSpec time;
    std::vector<ModeDict> test_functions;
    std::vector<std::string> psi{"identity", "half_square", "tanh"};
    PathSpec paths;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& c);
// FNV-1a 64 of the canonical serialization (output_dir excluded), as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);
std::uint64_t fnv1a64(const std::string& s);

std::vector<FourierMode> parse_modes(const ModeDict& d, int dim);

// Objects built from a config; construction runs every admissibility check.
struct Experiment {
    ExperimentConfig config;
    GridPtr grid;
    VelocityModel model;
    PilotChain chain;
    double raw_radius = 0.0;  // before radius_target scaling
    GridField rho_in;
    std::vector<GridField> test_functions;
};

Experiment build_experiment(const ExperimentConfig& c);
VelocityModel build_model(const ModelSpec& m, int dim);
PilotChain build_chain_from_spec(const ChainSpec& spec, GridPtr grid, double alpha, double* raw_radius = nullptr);

}  // namespace kda
