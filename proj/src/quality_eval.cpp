#include "hass/quality_eval.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <tuple>

#include "hass/errors.hpp"
#include "hass/scene_io.hpp"

namespace hass {

double box_iou(const Box3D& a, const Box3D& b, IouMetric metric) {
  return metric == IouMetric::Bev ? bev_iou(a, b) : iou_3d(a, b);
}

MatchResult match(std::span<const Annotation> pseudo, std::span<const Annotation> gt,
                  IouMetric metric) {
  struct Pair {
    double iou;
    std::size_t p;
    std::size_t g;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < pseudo.size(); ++p) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (pseudo[p].category != gt[g].category) continue;
      const double iou = box_iou(pseudo[p].box, gt[g].box, metric);
      if (iou > 0.0) pairs.push_back({iou, p, g});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(b.iou, a.p, a.g) < std::tie(a.iou, b.p, b.g);
  });

  MatchResult result(pseudo.size());
  for (std::size_t p = 0; p < pseudo.size(); ++p) result[p].category = pseudo[p].category;
  std::vector<bool> gt_taken(gt.size(), false);
  for (const Pair& pair : pairs) {
    if (result[pair.p].gt_index || gt_taken[pair.g]) continue;
    result[pair.p].gt_index = pair.g;
    result[pair.p].iou = pair.iou;
    gt_taken[pair.g] = true;
  }
  return result;
}

std::size_t iou_bin(double iou) {
  if (iou < kIouBinEdges[1]) return 0;
  if (iou < kIouBinEdges[2]) return 1;
  return 2;
}

std::map<std::string, IouHistogram> histogram(const MatchResult& matches) {
  std::map<std::string, IouHistogram> out;
  for (const Match& m : matches) {
    auto& h = out[m.category];
    ++h[m.gt_index ? iou_bin(m.iou) : 0];
  }
  return out;
}

ScoreField score_field_from_string(const std::string& text) {
  if (text == "confidence") return ScoreField::Confidence;
  if (text == "estimated-iou") return ScoreField::EstimatedIou;
  throw ConfigError("unknown score field '" + text + "' (expected confidence or estimated-iou)");
}

std::vector<FilterRow> filter_report(std::span<const Annotation> pseudo,
                                     std::span<const Annotation> gt,
                                     std::span<const double> thresholds, ScoreField field,
                                     IouMetric metric) {
  std::vector<double> scores;
  scores.reserve(pseudo.size());
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    const auto& s = field == ScoreField::Confidence ? pseudo[i].score : pseudo[i].est_iou;
    if (!s) {
      throw ValidationError("pseudo-label " + std::to_string(i) + " has no " +
                            (field == ScoreField::Confidence ? "confidence" : "estimated IoU"));
    }
    scores.push_back(*s);
  }

  std::vector<FilterRow> rows;
  for (double tau : thresholds) {
    std::vector<Annotation> kept;
    for (std::size_t i = 0; i < pseudo.size(); ++i) {
      if (scores[i] >= tau) kept.push_back(pseudo[i]);
    }
    const MatchResult matches = match(kept, gt, metric);
    FilterRow row;
    row.threshold = tau;
    row.kept = kept.size();
    row.histogram = histogram(matches);
    double sum = 0.0;
    for (const Match& m : matches) sum += m.iou;
    row.mean_iou = kept.empty() ? 0.0 : sum / static_cast<double>(kept.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json to_json(const std::vector<FilterRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const FilterRow& r : rows) {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [category, h] : r.histogram) hist[category] = h;
    out.push_back({{"threshold", r.threshold}, {"kept", r.kept}, {"mean_iou", r.mean_iou},
                   {"histogram", hist}});
  }
  return out;
}

std::vector<ScatterRow> scatter_rows(std::span<const Annotation> pseudo,
                                     std::span<const Annotation> gt, IouMetric metric) {
  const MatchResult matches = match(pseudo, gt, metric);
  std::vector<ScatterRow> rows;
  rows.reserve(pseudo.size());
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    if (!pseudo[i].score) throw ValidationError("pseudo-label " + std::to_string(i) + " has no confidence");
    rows.push_back({pseudo[i].category, *pseudo[i].score, matches[i].iou});
  }
  return rows;
}

void write_scatter_csv(std::span<const ScatterRow> rows, const std::filesystem::path& path) {
  std::string text = "category,confidence,iou\n";
  for (const ScatterRow& r : rows) {
    if (r.category.find_first_of(",\"\n\r") != std::string::npos) {
      throw ValidationError("category '" + r.category + "' cannot be written to CSV");
    }
    text += r.category + "," + format_double(r.confidence) + "," + format_double(r.iou) + "\n";
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<ScatterRow> read_scatter_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "category,confidence,iou") {
    throw FormatError(path.string() + ": missing CSV header", 0);
  }
  std::uint64_t offset = line.size() + 1;
  std::vector<ScatterRow> rows;
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw FormatError(path.string() + ": expected 3 fields", offset);
    try {
      std::size_t used = 0;
      ScatterRow r;
      r.category = line.substr(0, c1);
      const std::string conf = line.substr(c1 + 1, c2 - c1 - 1);
      const std::string iou = line.substr(c2 + 1);
      r.confidence = std::stod(conf, &used);
      if (used != conf.size()) throw std::invalid_argument("trailing");
      r.iou = std::stod(iou, &used);
      if (used != iou.size()) throw std::invalid_argument("trailing");
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": bad number", offset);
    }
    offset += line.size() + 1;
  }
  return rows;
}

void scatter_export(std::span<const Annotation> pseudo, std::span<const Annotation> gt,
                    const std::filesystem::path& path, IouMetric metric) {
  write_scatter_csv(scatter_rows(pseudo, gt, metric), path);
}

}  // namespace hass
