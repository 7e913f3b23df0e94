#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace hass {

enum class Stage { Easy, Hard };

std::string_view to_string(Stage stage);

/// Curriculum parameters. Epoch numbers are used as given: the stage flips
/// to Hard at `hard_start_epoch`, the threshold reaches `tau_lo` and the
/// density reaches `d_max` at `total_epochs`.
struct HardnessSchedule {
  int total_epochs = 60;
  int hard_start_epoch = 45;
  double tau_hi = 0.6;
  double tau_lo = 0.4;
  int d_min = 5;
  int d_max = 15;

  bool operator==(const HardnessSchedule&) const = default;

  /// Throws ConfigError when any bound is violated.
  void validate() const;

  Stage stage(int epoch) const;

  /// Admission threshold, linear from tau_hi at the hard-stage start to
  /// tau_lo at total_epochs. Throws ContractError during the easy stage.
  double threshold(int epoch) const;

  /// Objects to synthesize per scene. Easy stage: d_max. Hard stage: linear
  /// from d_min to d_max, rounded half up.
  int density(int epoch) const;

  static HardnessSchedule kitti();
  static HardnessSchedule waymo();

  /// Accepts a preset name ("kitti", "waymo"), an object with explicit
  /// fields, or an object {"preset": name, ...overrides}. Unknown keys are
  /// rejected.
  static HardnessSchedule from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

}  // namespace hass
