#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hass/scene.hpp"

namespace hass {

enum class IouMetric { Bev, ThreeD };

double box_iou(const Box3D& a, const Box3D& b, IouMetric metric);

struct Match {
  std::optional<std::size_t> gt_index;
  double iou = 0.0;  // 0 when unmatched
  std::string category;
};

/// One entry per pseudo-label, in input order.
using MatchResult = std::vector<Match>;

/// Greedy matching: repeatedly pairs the highest-IoU (pseudo, gt) pair of
/// the same category among the still unmatched items, as long as IoU > 0.
/// Ties go to the lower pseudo index, then the lower gt index.
MatchResult match(std::span<const Annotation> pseudo, std::span<const Annotation> gt,
                  IouMetric metric = IouMetric::Bev);

/// IoU bins [0, 0.6), [0.6, 0.8), [0.8, 1.0].
inline constexpr std::array<double, 4> kIouBinEdges = {0.0, 0.6, 0.8, 1.0};
using IouHistogram = std::array<std::size_t, 3>;

std::size_t iou_bin(double iou);

/// Per-category counts. Unmatched pseudo-labels land in the lowest bin.
std::map<std::string, IouHistogram> histogram(const MatchResult& matches);

enum class ScoreField { Confidence, EstimatedIou };

ScoreField score_field_from_string(const std::string& text);

struct FilterRow {
  double threshold = 0.0;
  std::size_t kept = 0;
  std::map<std::string, IouHistogram> histogram;
  /// Mean IoU over kept pseudo-labels, unmatched ones counting as 0.
  double mean_iou = 0.0;
};

/// Keeps pseudo-labels with score >= threshold, matches the survivors
/// against `gt` and bins them. Throws ValidationError if a pseudo-label
/// lacks the requested score.
std::vector<FilterRow> filter_report(std::span<const Annotation> pseudo,
                                     std::span<const Annotation> gt,
                                     std::span<const double> thresholds, ScoreField field,
                                     IouMetric metric = IouMetric::Bev);

nlohmann::json to_json(const std::vector<FilterRow>& rows);

struct ScatterRow {
  std::string category;
  double confidence = 0.0;
  double iou = 0.0;

  bool operator==(const ScatterRow&) const = default;
};

std::vector<ScatterRow> scatter_rows(std::span<const Annotation> pseudo,
                                     std::span<const Annotation> gt,
                                     IouMetric metric = IouMetric::Bev);

/// CSV with header "category,confidence,iou", LF line endings.
void write_scatter_csv(std::span<const ScatterRow> rows, const std::filesystem::path& path);
std::vector<ScatterRow> read_scatter_csv(const std::filesystem::path& path);

void scatter_export(std::span<const Annotation> pseudo, std::span<const Annotation> gt,
                    const std::filesystem::path& path, IouMetric metric = IouMetric::Bev);

}  // namespace hass
