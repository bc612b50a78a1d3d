#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rwz/estimator.hpp"
#include "rwz/model.hpp"
#include "rwz/nuisance.hpp"
#include "rwz/policy.hpp"

namespace rwz {

using json = nlohmann::json;

// Model configuration schema (JSON).  See README for the field reference;
// matrices are row-major nested arrays.
json to_json(const PlmConfig& config);
PlmConfig plm_config_from_json(const json& j);
PlmConfig load_plm_config(const std::filesystem::path& path);
void save_plm_config(const PlmConfig& config, const std::filesystem::path& path);

json to_json(const PolicyFamilyConfig& config);
PolicyFamilyConfig policy_family_from_json(const json& j);

// Policy snapshots round-trip exactly (ids, parameters, running estimate), so
// estimation from logs recomputes the same conditional moments bit for bit.
json to_json(const PolicySnapshot& snapshot);
PolicySnapshot snapshot_from_json(const json& j);

json to_json(const EpisodeRecord& episode);
EpisodeRecord episode_from_json(const json& j);

json to_json(const ZEstimate& estimate);

// Fitted nuisance state with its fit boundary, for prequential audits.
json to_json(const NuisanceModel& model);
NuisanceModel nuisance_model_from_json(const json& j);

// Newline-delimited JSON logs.
void write_episode_log(std::span<const EpisodeRecord> episodes,
                       const std::filesystem::path& path);
std::vector<EpisodeRecord> read_episode_log(const std::filesystem::path& path);

void write_policy_log(std::span<const PolicySnapshot> snapshots,
                      const std::filesystem::path& path);
std::vector<PolicySnapshot> read_policy_log(const std::filesystem::path& path);

}  // namespace rwz
