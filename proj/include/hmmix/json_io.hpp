#pragma once

// JSON forms of configurations and results. Readers reject unknown keys.

#include <filesystem>

#include <json.hpp>

#include "hmmix/dgp.hpp"
#include "hmmix/estimator.hpp"
#include "hmmix/harness.hpp"
#include "hmmix/inference.hpp"
#include "hmmix/mixture.hpp"
#include "hmmix/oracle.hpp"

namespace hmmix {

using Json = nlohmann::json;

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

/// Regimes as {"mu", "gamma", "sigma"} objects; the transition either as
/// {"stay_alpha": [..], "stay_beta": [..]} for two regimes or as full
/// {"alpha": [[..]], "beta": [[..]]} matrices.
Json to_json(const HmmDgpParams& p);
HmmDgpParams dgp_from_json(const Json& j);

Json to_json(const ModelSpec& s);
ModelSpec model_from_json(const Json& j);

Json to_json(const EstimatorConfig& c);
EstimatorConfig estimator_from_json(const Json& j);

Json to_json(const HacConfig& c);
HacConfig hac_from_json(const Json& j);

Json to_json(const ExperimentConfig& c);
/// Relative out_dir values resolve against `base_dir`.
ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir = {});

Json to_json(const MixtureParams& theta);
MixtureParams mixture_from_json(const Json& j);

Json to_json(const McSummary& s);
McSummary summary_from_json(const Json& j);

Json to_json(const PseudoTrueResult& r);
Json to_json(const CfCheckReport& r);
Json to_json(const KlReport& r);

/// Fit output: theta, natural-scale estimates with standard errors,
/// covariance, convergence block and HAC diagnostics.
Json fit_to_json(const EstimationResult& fit, const ModelSpec& spec, const SandwichResult* sandwich);

}  // namespace hmmix
