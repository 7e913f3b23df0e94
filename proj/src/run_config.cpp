#include "hass/run_config.hpp"

#include <algorithm>
#include <fstream>

#include "hass/errors.hpp"

namespace hass {

namespace {

template <class T>
T get(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (categories.empty()) throw ConfigError("config: categories must not be empty");
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (std::find(categories.begin(), categories.begin() + static_cast<std::ptrdiff_t>(i), categories[i]) !=
        categories.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw ConfigError("config: duplicate category '" + categories[i] + "'");
    }
  }
  schedule.validate();
  synthesis.placement.validate();
  for (const auto& [name, w] : synthesis.category_weights) {
    if (std::find(categories.begin(), categories.end(), name) == categories.end()) {
      throw ConfigError("config: weight given for unknown category '" + name + "'");
    }
    if (!(w >= 0.0)) throw ConfigError("config: weight for '" + name + "' must be >= 0");
  }
  teacher.validate();
  scenes.validate();
  for (const auto& t : scenes.templates) {
    if (std::find(categories.begin(), categories.end(), t.name) == categories.end()) {
      throw ConfigError("config: scene template '" + t.name + "' is not a configured category");
    }
  }
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "categories") {
      c.categories = get<std::vector<std::string>>(value, key);
    } else if (key == "schedule") {
      c.schedule = HardnessSchedule::from_json(value);
    } else if (key == "synthesis") {
      if (!value.is_object()) throw ConfigError("config: synthesis must be an object");
      for (const auto& [sk, sv] : value.items()) {
        if (sk == "placement") c.synthesis.placement = PlacementPolicy::from_json(sv);
        else if (sk == "weights") c.synthesis.category_weights = get<std::map<std::string, double>>(sv, sk);
        else throw ConfigError("config: unknown synthesis key '" + sk + "'");
      }
    } else if (key == "simulator") {
      if (!value.is_object()) throw ConfigError("config: simulator must be an object");
      for (const auto& [sk, sv] : value.items()) {
        if (sk == "labeled") c.labeled_scenes = get<std::size_t>(sv, sk);
        else if (sk == "unlabeled") c.unlabeled_scenes = get<std::size_t>(sv, sk);
        else if (sk == "teacher") c.teacher = TeacherSimConfig::from_json(sv);
        else if (sk == "scenes") c.scenes = SceneGenConfig::from_json(sv);
        else throw ConfigError("config: unknown simulator key '" + sk + "'");
      }
    } else if (key == "seed") {
      c.seed = get<std::uint64_t>(value, key);
    } else if (key == "workers") {
      c.workers = get<std::size_t>(value, key);
    } else if (key == "paths") {
      if (!value.is_object()) throw ConfigError("config: paths must be an object");
      for (const auto& [pk, pv] : value.items()) {
        if (pk == "scenes_dir") c.scenes_dir = get<std::string>(pv, pk);
        else if (pk == "db_dir") c.db_dir = get<std::string>(pv, pk);
        else if (pk == "out_dir") c.out_dir = get<std::string>(pv, pk);
        else throw ConfigError("config: unknown paths key '" + pk + "'");
      }
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json paths = nlohmann::json::object();
  if (scenes_dir) paths["scenes_dir"] = *scenes_dir;
  if (db_dir) paths["db_dir"] = *db_dir;
  if (out_dir) paths["out_dir"] = *out_dir;
  nlohmann::json j = {
      {"categories", categories},
      {"schedule", schedule.to_json()},
      {"synthesis", {{"placement", synthesis.placement.to_json()}, {"weights", synthesis.category_weights}}},
      {"simulator",
       {{"labeled", labeled_scenes}, {"unlabeled", unlabeled_scenes}, {"teacher", teacher.to_json()},
        {"scenes", scenes.to_json()}}},
      {"workers", workers},
      {"paths", paths}};
  if (seed) j["seed"] = *seed;
  return j;
}

}  // namespace hass
