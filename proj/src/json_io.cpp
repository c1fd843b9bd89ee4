#include "metacc/json_io.hpp"

namespace metacc {

using nlohmann::json;

void to_json(json& j, const ChannelSpec& spec) {
  j = json{{"family", family_name(spec.family)}, {"snr_db", spec.snr_db}};
  switch (spec.family) {
    case Family::kAwgn: break;
    case Family::kBursty:
      j["snr_b_db"] = spec.snr_b_db;
      j["alpha"] = spec.alpha;
      break;
    case Family::kMemory: j["alpha"] = spec.alpha; break;
    case Family::kMultipath: j["beta"] = spec.beta; break;
  }
}

void from_json(const json& j, ChannelSpec& spec) {
  spec = ChannelSpec{};
  spec.family = family_from_name(j.at("family").get<std::string>());
  spec.snr_db = j.at("snr_db").get<double>();
  spec.snr_b_db = j.value("snr_b_db", 0.0);
  spec.alpha = j.value("alpha", 0.0);
  spec.beta = j.value("beta", 0.0);
}

void to_json(json& j, const ParamRange& r) { j = json::array({r.lo, r.hi}); }

void from_json(const json& j, ParamRange& r) {
  if (j.is_number()) {
    r.lo = r.hi = j.get<double>();
    return;
  }
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("parameter range must be [lo, hi] or a number");
  r.lo = j[0].get<double>();
  r.hi = j[1].get<double>();
}

void to_json(json& j, const TaskComponent& c) {
  j = json{{"weight", c.weight}, {"family", family_name(c.family)}, {"snr_db", c.snr_db}};
  switch (c.family) {
    case Family::kAwgn: break;
    case Family::kBursty:
      j["snr_b_db"] = c.snr_b_db;
      j["alpha"] = c.alpha;
      break;
    case Family::kMemory: j["alpha"] = c.alpha; break;
    case Family::kMultipath: j["beta"] = c.beta; break;
  }
}

void from_json(const json& j, TaskComponent& c) {
  c = TaskComponent{};
  c.weight = j.value("weight", 1.0);
  c.family = family_from_name(j.at("family").get<std::string>());
  j.at("snr_db").get_to(c.snr_db);
  if (j.contains("snr_b_db")) j.at("snr_b_db").get_to(c.snr_b_db);
  if (j.contains("alpha")) j.at("alpha").get_to(c.alpha);
  if (j.contains("beta")) j.at("beta").get_to(c.beta);
}

void to_json(json& j, const TaskDistributionSpec& spec) { j = json{{"components", spec.components}}; }

void from_json(const json& j, TaskDistributionSpec& spec) {
  spec.components = j.at("components").get<std::vector<TaskComponent>>();
}

void to_json(json& j, const DatasetCounts& c) {
  j = json{{"setups", c.setups}, {"messages", c.messages}, {"examples", c.examples}};
}

void from_json(const json& j, DatasetCounts& c) {
  c.setups = j.at("setups").get<std::size_t>();
  c.messages = j.at("messages").get<std::size_t>();
  c.examples = j.at("examples").get<std::size_t>();
}

}  // namespace metacc
