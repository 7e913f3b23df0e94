#include "hass/hardness_scheduler.hpp"

#include <cstdint>

#include "hass/errors.hpp"

namespace hass {

std::string_view to_string(Stage stage) { return stage == Stage::Easy ? "easy" : "hard"; }

void HardnessSchedule::validate() const {
  if (total_epochs <= 0) throw ConfigError("schedule: total_epochs must be > 0");
  if (hard_start_epoch < 0 || hard_start_epoch > total_epochs) {
    throw ConfigError("schedule: hard_start_epoch must lie in [0, total_epochs]");
  }
  if (!(tau_lo >= 0.0 && tau_hi <= 1.0 && tau_lo <= tau_hi)) {
    throw ConfigError("schedule: need 0 <= tau_lo <= tau_hi <= 1");
  }
  if (d_min < 0 || d_min > d_max) throw ConfigError("schedule: need 0 <= d_min <= d_max");
}

Stage HardnessSchedule::stage(int epoch) const {
  return epoch < hard_start_epoch ? Stage::Easy : Stage::Hard;
}

double HardnessSchedule::threshold(int epoch) const {
  if (stage(epoch) == Stage::Easy) {
    throw ContractError("threshold requested for easy-stage epoch " + std::to_string(epoch));
  }
  const int span = total_epochs - hard_start_epoch;
  if (span <= 0 || epoch <= hard_start_epoch) return tau_hi;
  if (epoch >= total_epochs) return tau_lo;
  // Written as a convex combination so both endpoints come out exact.
  const double frac = static_cast<double>(epoch - hard_start_epoch) / span;
  return (1.0 - frac) * tau_hi + frac * tau_lo;
}

int HardnessSchedule::density(int epoch) const {
  if (stage(epoch) == Stage::Easy) return d_max;
  const std::int64_t span = total_epochs - hard_start_epoch;
  if (span <= 0 || epoch <= hard_start_epoch) return d_min;
  if (epoch >= total_epochs) return d_max;
  // d_min + (d_max - d_min) * step / span, rounded half up in integers.
  const std::int64_t num = static_cast<std::int64_t>(d_max - d_min) * (epoch - hard_start_epoch);
  return d_min + static_cast<int>((2 * num + span) / (2 * span));
}

HardnessSchedule HardnessSchedule::kitti() { return {60, 45, 0.6, 0.4, 5, 15}; }

HardnessSchedule HardnessSchedule::waymo() { return {30, 15, 0.8, 0.4, 10, 30}; }

namespace {

HardnessSchedule preset(const std::string& name) {
  if (name == "kitti") return HardnessSchedule::kitti();
  if (name == "waymo") return HardnessSchedule::waymo();
  throw ConfigError("schedule: unknown preset '" + name + "'");
}

}  // namespace

HardnessSchedule HardnessSchedule::from_json(const nlohmann::json& j) {
  HardnessSchedule s;
  if (j.is_string()) {
    s = preset(j.get<std::string>());
  } else if (j.is_object()) {
    if (j.contains("preset")) s = preset(j.at("preset").get<std::string>());
    for (const auto& [key, value] : j.items()) {
      try {
        if (key == "preset") continue;
        if (key == "total_epochs") s.total_epochs = value.get<int>();
        else if (key == "hard_start_epoch") s.hard_start_epoch = value.get<int>();
        else if (key == "tau_hi") s.tau_hi = value.get<double>();
        else if (key == "tau_lo") s.tau_lo = value.get<double>();
        else if (key == "d_min") s.d_min = value.get<int>();
        else if (key == "d_max") s.d_max = value.get<int>();
        else throw ConfigError("schedule: unknown key '" + key + "'");
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("schedule: bad value for '" + key + "': " + e.what());
      }
    }
  } else {
    throw ConfigError("schedule must be a preset name or an object");
  }
  s.validate();
  return s;
}

nlohmann::json HardnessSchedule::to_json() const {
  return {{"total_epochs", total_epochs}, {"hard_start_epoch", hard_start_epoch},
          {"tau_hi", tau_hi},             {"tau_lo", tau_lo},
          {"d_min", d_min},               {"d_max", d_max}};
}

}  // namespace hass
