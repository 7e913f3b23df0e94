#include "hass/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "hass/errors.hpp"
#include "hass/random.hpp"

namespace hass {

void PlacementPolicy::validate() const {
  if (!(max_yaw >= 0.0 && max_yaw <= kPi)) throw ConfigError("placement: max_yaw must lie in [0, pi]");
  if (!(annulus_min >= 0.0 && annulus_min <= annulus_max && std::isfinite(annulus_max))) {
    throw ConfigError("placement: need 0 <= annulus_min <= annulus_max");
  }
  if (retries < 1) throw ConfigError("placement: retries must be >= 1");
}

PlacementPolicy PlacementPolicy::from_json(const nlohmann::json& j) {
  PlacementPolicy p;
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "original-pose") p.kind = Kind::OriginalPose;
    else if (name == "jitter") p.kind = Kind::Jitter;
    else throw ConfigError("placement: unknown policy '" + name + "'");
    return p;
  }
  if (!j.is_object()) throw ConfigError("placement must be a policy name or an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "policy") p.kind = from_json(value).kind;
      else if (key == "max_yaw") p.max_yaw = value.get<double>();
      else if (key == "annulus") {
        const auto a = value.get<std::vector<double>>();
        if (a.size() != 2) throw ConfigError("placement: annulus must be [min, max]");
        p.annulus_min = a[0];
        p.annulus_max = a[1];
      } else if (key == "retries") p.retries = value.get<int>();
      else throw ConfigError("placement: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("placement: bad value for '" + key + "': " + e.what());
    }
  }
  p.validate();
  return p;
}

nlohmann::json PlacementPolicy::to_json() const {
  return {{"policy", kind == Kind::OriginalPose ? "original-pose" : "jitter"},
          {"max_yaw", max_yaw},
          {"annulus", {annulus_min, annulus_max}},
          {"retries", retries}};
}

std::map<std::string, std::size_t> split_by_weight(std::size_t k,
                                                   const std::vector<std::string>& categories,
                                                   const std::vector<double>& weights) {
  std::map<std::string, std::size_t> out;
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (const auto& c : categories) out[c] = 0;
  if (k == 0 || total <= 0.0) return out;

  std::vector<double> frac(categories.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const double quota = static_cast<double>(k) * weights[i] / total;
    const double whole = std::floor(quota);
    out[categories[i]] = static_cast<std::size_t>(whole);
    frac[i] = weights[i] > 0.0 ? quota - whole : -1.0;
    assigned += static_cast<std::size_t>(whole);
  }
  std::vector<std::size_t> order(categories.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t r = 0; assigned < k && r < order.size(); ++r, ++assigned) {
    if (frac[order[r]] < 0.0) break;
    ++out[categories[order[r]]];
  }
  return out;
}

namespace {

struct Candidate {
  const ObjectSample* sample;
  double rank;
  std::size_t category_index;
  std::size_t within;
};

RigidTransform draw_jitter(const PlacementPolicy& p, Rng& rng) {
  std::uniform_real_distribution<double> yaw(-p.max_yaw, p.max_yaw);
  std::uniform_real_distribution<double> radius(p.annulus_min, p.annulus_max);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  RigidTransform tf;
  tf.yaw = yaw(rng);
  const double r = radius(rng);
  const double a = angle(rng);
  tf.translation = {r * std::cos(a), r * std::sin(a), 0.0};
  return tf;
}

bool collides(const Box3D& box, const std::vector<Annotation>& placed) {
  for (const Annotation& other : placed) {
    if (bev_iou(box, other.box) > 0.0) return true;
  }
  return false;
}

}  // namespace

SynthesisResult synthesize(const Scene& background, const DatabaseSnapshot& db, std::size_t k,
                           const SynthesisOptions& options, std::uint64_t seed) {
  options.placement.validate();
  for (const auto& [name, w] : options.category_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("category weight for '" + name + "' must be >= 0");
  }

  std::vector<std::string> cats;
  std::vector<double> weights;
  for (const std::string& c : db.categories()) {
    if (db.pool(c).empty()) continue;
    double w = 1.0;
    if (!options.category_weights.empty()) {
      auto it = options.category_weights.find(c);
      w = it == options.category_weights.end() ? 0.0 : it->second;
    }
    cats.push_back(c);
    weights.push_back(w);
  }
  const auto alloc = split_by_weight(k, cats, weights);

  // Interleave the categories so that the candidate order for a smaller k is
  // a prefix of the order for a larger one (uniform weights).
  std::vector<DatabaseSnapshot::Entry> held;
  std::vector<Candidate> candidates;
  for (std::size_t ci = 0; ci < cats.size(); ++ci) {
    const auto picks = db.sample(cats[ci], alloc.at(cats[ci]), derive_seed(seed, "sample/" + cats[ci]));
    for (std::size_t j = 0; j < picks.size(); ++j) {
      candidates.push_back({picks[j].get(), (static_cast<double>(j) + 0.5) / weights[ci], ci, j});
      held.push_back(picks[j]);
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.rank, a.category_index, a.within) < std::tie(b.rank, b.category_index, b.within);
  });

  SynthesisResult result;
  std::vector<Annotation> placed = background.objects;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const ObjectSample& src = *candidates[i].sample;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    bool accepted = false;
    for (int attempt = 0; attempt < options.placement.attempts() && !accepted; ++attempt) {
      ObjectSample obj = src;
      if (options.placement.kind == PlacementPolicy::Kind::Jitter) {
        const RigidTransform tf = draw_jitter(options.placement, rng);
        obj.box = transform(src.box, tf);
        obj.points = transform(src.points, tf);
      }
      if (collides(obj.box, placed)) continue;
      placed.push_back(obj.annotation());
      result.inserted.push_back(std::move(obj));
      accepted = true;
    }
    if (!accepted) ++result.rejected_collisions;
  }

  Scene& out = result.scene;
  out.id = background.id;
  out.objects = std::move(placed);
  result.provenance.first_inserted = background.objects.size();

  std::size_t total_inserted_points = 0;
  for (const ObjectSample& obj : result.inserted) total_inserted_points += obj.points.size();
  out.cloud.points.reserve(background.cloud.size() + total_inserted_points);
  result.provenance.point_owner.reserve(background.cloud.size() + total_inserted_points);
  for (const Point& p : background.cloud.points) {
    const bool covered = std::any_of(result.inserted.begin(), result.inserted.end(),
                                     [&](const ObjectSample& obj) { return point_in_box(p, obj.box); });
    if (covered) {
      ++result.removed_background_points;
      continue;
    }
    out.cloud.points.push_back(p);
    result.provenance.point_owner.push_back(-1);
  }
  for (std::size_t i = 0; i < result.inserted.size(); ++i) {
    const int owner = static_cast<int>(background.objects.size() + i);
    for (const Point& p : result.inserted[i].points.points) {
      out.cloud.points.push_back(p);
      result.provenance.point_owner.push_back(owner);
    }
  }
  return result;
}

std::vector<Violation> check_scene_valid(const Scene& scene, const Provenance* provenance) {
  std::vector<Violation> out;
  const auto& objs = scene.objects;
  for (std::size_t i = 0; i < objs.size(); ++i) {
    try {
      validate_box(objs[i].box);
    } catch (const ValidationError& e) {
      out.push_back({Violation::Kind::InvalidBox, i, i, e.what()});
    }
  }
  for (std::size_t i = 0; i < objs.size(); ++i) {
    for (std::size_t j = i + 1; j < objs.size(); ++j) {
      const double iou = bev_iou(objs[i].box, objs[j].box);
      if (iou > 0.0) {
        out.push_back({Violation::Kind::Overlap, i, j,
                       "annotations " + std::to_string(i) + " and " + std::to_string(j) +
                           " overlap (BEV IoU " + std::to_string(iou) + ")"});
      }
    }
  }
  if (provenance) {
    if (provenance->point_owner.size() != scene.cloud.size()) {
      throw ValidationError("provenance does not cover every point");
    }
    for (std::size_t i = 0; i < objs.size(); ++i) {
      const int expected = i < provenance->first_inserted ? -1 : static_cast<int>(i);
      for (std::size_t p = 0; p < scene.cloud.size(); ++p) {
        const int owner = provenance->point_owner[p];
        if (owner == expected || !point_in_box(scene.cloud.points[p], objs[i].box)) continue;
        out.push_back({Violation::Kind::ForeignPoint, i, p,
                       "point " + std::to_string(p) + " inside annotation " + std::to_string(i) +
                           " belongs to " + (owner < 0 ? std::string("the background") :
                                                          "annotation " + std::to_string(owner))});
      }
    }
  }
  return out;
}

}  // namespace hass
