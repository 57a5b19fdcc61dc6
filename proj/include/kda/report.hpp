#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "kda/generator.hpp"
#include "kda/harness.hpp"

namespace kda {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kManifestSchema = 1;

// Shortest round-trip text for a double ("nan", "inf" spelled out).
std::string fmt(double x);

Json to_json(const EnsembleStats& s);
Json to_json(const LawComparison& c);
Json to_json(const MeanCheck& m);
Json to_json(const SlopeFit& f);
Json to_json(const McCheck& c);
Json to_json(const PoissonReport& r);
Json coefficient_summary(const LimitCoefficients& c, const PilotChain& chain);

// Columns: t,observable,mean,var,se_mean,se_var,paths
void write_stats_csv(const std::filesystem::path& p, const EnsembleStats& s);
// Columns: path,seed,max_mass_drift,min_f,max_entropy_ratio,local_eq_integral,max_h1,steps,jumps
void write_paths_csv(const std::filesystem::path& p, const std::vector<PathRecord>& paths);
// Columns: x[,y],K_ab...,Psi_a...,Kstrato_ab...,PsiStrato_a...,min_eig_Kstar_minus_KM
void write_coefficients_csv(const std::filesystem::path& p, const LimitCoefficients& c,
                            const EnhancedDiffusionReport& enhanced);
// Columns: k,eigenvalue
void write_eigenvalues_csv(const std::filesystem::path& p, const LimitCoefficients& c);
// Columns: epsilon,local_eq_mean,local_eq_se,paths
void write_scaling_csv(const std::filesystem::path& p, const ConvergenceReport& r);

void write_json(const std::filesystem::path& p, const Json& j);
Json read_json(const std::filesystem::path& p);

// Manifest: schema, version, command, config hash, seeds, worker-independent
// run parameters and wall time.
Json make_manifest(const std::string& command, const ExperimentConfig& c, double wall_seconds, const Json& extra);

}  // namespace kda
