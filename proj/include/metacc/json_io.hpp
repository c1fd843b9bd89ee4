#pragma once

#include "json.hpp"
#include "metacc/channels.hpp"
#include "metacc/taskdist.hpp"

namespace metacc {

// JSON forms shared by the dataset header and the configuration file.
//   ChannelSpec: {"family": "bursty", "snr_db": 6, "snr_b_db": -14, "alpha": 0.1}
//   TaskComponent: {"weight": 1, "family": "awgn", "snr_db": [-5, 5], ...}
// Only the parameters of the family are written; missing ones read as 0 / [0,0].

void to_json(nlohmann::json& j, const ChannelSpec& spec);
void from_json(const nlohmann::json& j, ChannelSpec& spec);
void to_json(nlohmann::json& j, const ParamRange& r);
void from_json(const nlohmann::json& j, ParamRange& r);
void to_json(nlohmann::json& j, const TaskComponent& c);
void from_json(const nlohmann::json& j, TaskComponent& c);
void to_json(nlohmann::json& j, const TaskDistributionSpec& spec);
void from_json(const nlohmann::json& j, TaskDistributionSpec& spec);
void to_json(nlohmann::json& j, const DatasetCounts& c);
void from_json(const nlohmann::json& j, DatasetCounts& c);

}  // namespace metacc
