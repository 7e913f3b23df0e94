#include "hass/teacher_sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hass/errors.hpp"
#include "hass/parallel.hpp"
#include "hass/random.hpp"
#include "hass/scene_io.hpp"

namespace hass {

namespace {

double lerp(double a, double b, double t) { return (1.0 - t) * a + t * b; }

double gauss(Rng& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

template <class T>
void read_field(const nlohmann::json& value, const std::string& key, T& out, const char* section) {
  try {
    out = value.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(section) + ": bad value for '" + key + "': " + e.what());
  }
}

const CategoryTemplate& pick_template(std::span<const CategoryTemplate> templates, Rng& rng) {
  std::vector<double> w;
  for (const auto& t : templates) w.push_back(t.frequency);
  std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
  return templates[dist(rng)];
}

void mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ull;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> SceneGenConfig::categories() const {
  std::vector<std::string> out;
  for (const auto& t : templates) out.push_back(t.name);
  return out;
}

void SceneGenConfig::validate() const {
  if (templates.empty()) throw ConfigError("scene generator: no category templates");
  for (const auto& t : templates) {
    if (!(t.length > 0 && t.width > 0 && t.height > 0 && t.frequency >= 0)) {
      throw ConfigError("scene generator: bad template '" + t.name + "'");
    }
  }
  if (min_objects < 0 || min_objects > max_objects) throw ConfigError("scene generator: bad object count range");
  if (!(range > 0)) throw ConfigError("scene generator: range must be > 0");
  if (min_object_points < 1 || min_object_points > max_object_points) {
    throw ConfigError("scene generator: bad object point range");
  }
  if (!(dim_jitter >= 0 && dim_jitter < 1)) throw ConfigError("scene generator: dim_jitter must lie in [0, 1)");
}

SceneGenConfig SceneGenConfig::from_json(const nlohmann::json& j) {
  constexpr const char* kSection = "scene generator";
  if (!j.is_object()) throw ConfigError("scene generator config must be an object");
  SceneGenConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "templates") {
      c.templates.clear();
      for (const auto& t : value) {
        CategoryTemplate ct;
        for (const auto& [tk, tv] : t.items()) {
          if (tk == "name") read_field(tv, tk, ct.name, kSection);
          else if (tk == "length") read_field(tv, tk, ct.length, kSection);
          else if (tk == "width") read_field(tv, tk, ct.width, kSection);
          else if (tk == "height") read_field(tv, tk, ct.height, kSection);
          else if (tk == "frequency") read_field(tv, tk, ct.frequency, kSection);
          else throw ConfigError("scene generator: unknown template key '" + tk + "'");
        }
        c.templates.push_back(std::move(ct));
      }
    } else if (key == "min_objects") read_field(value, key, c.min_objects, kSection);
    else if (key == "max_objects") read_field(value, key, c.max_objects, kSection);
    else if (key == "range") read_field(value, key, c.range, kSection);
    else if (key == "ground_z") read_field(value, key, c.ground_z, kSection);
    else if (key == "clutter_points") read_field(value, key, c.clutter_points, kSection);
    else if (key == "min_object_points") read_field(value, key, c.min_object_points, kSection);
    else if (key == "max_object_points") read_field(value, key, c.max_object_points, kSection);
    else if (key == "dim_jitter") read_field(value, key, c.dim_jitter, kSection);
    else throw ConfigError("scene generator: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

nlohmann::json SceneGenConfig::to_json() const {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& ct : templates) {
    t.push_back({{"name", ct.name}, {"length", ct.length}, {"width", ct.width},
                 {"height", ct.height}, {"frequency", ct.frequency}});
  }
  return {{"templates", t},
          {"min_objects", min_objects},
          {"max_objects", max_objects},
          {"range", range},
          {"ground_z", ground_z},
          {"clutter_points", clutter_points},
          {"min_object_points", min_object_points},
          {"max_object_points", max_object_points},
          {"dim_jitter", dim_jitter}};
}

Scene generate_scene(const std::string& id, const SceneGenConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Scene scene;
  scene.id = id;

  const int n_objects = std::uniform_int_distribution<int>(config.min_objects, config.max_objects)(rng);
  for (int i = 0; i < n_objects; ++i) {
    const CategoryTemplate& tpl = pick_template(config.templates, rng);
    for (int attempt = 0; attempt < 50; ++attempt) {
      Box3D box;
      box.length = tpl.length * (1.0 + uniform(rng, -config.dim_jitter, config.dim_jitter));
      box.width = tpl.width * (1.0 + uniform(rng, -config.dim_jitter, config.dim_jitter));
      box.height = tpl.height * (1.0 + uniform(rng, -config.dim_jitter, config.dim_jitter));
      box.yaw = normalize_yaw(uniform(rng, -kPi, kPi));
      const double r = uniform(rng, std::min(3.0, config.range / 2.0), config.range);
      const double a = uniform(rng, -kPi, kPi);
      box.cx = r * std::cos(a);
      box.cy = r * std::sin(a);
      box.cz = config.ground_z + box.height / 2.0;
      const bool clash = std::any_of(scene.objects.begin(), scene.objects.end(),
                                     [&](const Annotation& o) { return bev_iou(o.box, box) > 0.0; });
      if (clash) continue;

      const double lo = std::log(static_cast<double>(config.min_object_points));
      const double hi = std::log(static_cast<double>(config.max_object_points) + 1.0);
      const auto n_points = std::clamp<std::size_t>(static_cast<std::size_t>(std::exp(uniform(rng, lo, hi))),
                                                    config.min_object_points, config.max_object_points);
      const double c = std::cos(box.yaw);
      const double s = std::sin(box.yaw);
      constexpr double kShrink = 0.999;  // keep float-rounded points strictly inside
      for (std::size_t p = 0; p < n_points; ++p) {
        const double lx = uniform(rng, -0.5, 0.5) * box.length * kShrink;
        const double ly = uniform(rng, -0.5, 0.5) * box.width * kShrink;
        const double lz = uniform(rng, -0.5, 0.5) * box.height * kShrink;
        scene.cloud.points.push_back({static_cast<float>(box.cx + c * lx - s * ly),
                                      static_cast<float>(box.cy + s * lx + c * ly),
                                      static_cast<float>(box.cz + lz),
                                      static_cast<float>(uniform(rng, 0.0, 1.0))});
      }
      scene.objects.push_back({tpl.name, box, std::nullopt, std::nullopt});
      break;
    }
  }

  std::size_t added = 0;
  while (added < config.clutter_points) {
    const double r = config.range * std::sqrt(uniform(rng, 0.0, 1.0));
    const double a = uniform(rng, -kPi, kPi);
    const Point p{static_cast<float>(r * std::cos(a)), static_cast<float>(r * std::sin(a)),
                  static_cast<float>(uniform(rng, config.ground_z, config.ground_z + 2.5)),
                  static_cast<float>(uniform(rng, 0.0, 1.0))};
    const bool covered = std::any_of(scene.objects.begin(), scene.objects.end(),
                                     [&](const Annotation& o) { return point_in_box(p, o.box); });
    if (covered) continue;
    scene.cloud.points.push_back(p);
    ++added;
  }
  return scene;
}

UnlabeledScene hide_labels(Scene scene) {
  UnlabeledScene out;
  out.hidden_gt = std::move(scene.objects);
  scene.objects.clear();
  out.observed = std::move(scene);
  return out;
}

// ---------------------------------------------------------------------------

void TeacherSimConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(recall_start) || !unit(recall_end)) throw ConfigError("teacher: recall must lie in [0, 1]");
  if (recall_end < recall_start) throw ConfigError("teacher: recall_end must be >= recall_start");
  if (!(sigma_center_end >= 0 && sigma_center_end <= sigma_center_start)) {
    throw ConfigError("teacher: need 0 <= sigma_center_end <= sigma_center_start");
  }
  if (!(sigma_conf_end >= 0 && sigma_conf_end <= sigma_conf_start)) {
    throw ConfigError("teacher: need 0 <= sigma_conf_end <= sigma_conf_start");
  }
  if (!(sigma_dims >= 0 && sigma_yaw >= 0)) throw ConfigError("teacher: sigmas must be >= 0");
  if (!(fp_rate_end >= 0 && fp_rate_end <= fp_rate_start)) {
    throw ConfigError("teacher: need 0 <= fp_rate_end <= fp_rate_start");
  }
  if (!(p_ref > 0)) throw ConfigError("teacher: p_ref must be > 0");
  if (!(fp_range > 0)) throw ConfigError("teacher: fp_range must be > 0");
}

double TeacherSimConfig::recall(double t) const { return lerp(recall_start, recall_end, t); }
double TeacherSimConfig::sigma_center(double t) const { return lerp(sigma_center_start, sigma_center_end, t); }
double TeacherSimConfig::sigma_conf(double t) const { return lerp(sigma_conf_start, sigma_conf_end, t); }
double TeacherSimConfig::fp_rate(double t) const { return lerp(fp_rate_start, fp_rate_end, t); }

TeacherSimConfig TeacherSimConfig::from_json(const nlohmann::json& j) {
  constexpr const char* kSection = "teacher";
  if (!j.is_object()) throw ConfigError("teacher config must be an object");
  TeacherSimConfig c;
  const std::map<std::string, double*> fields = {
      {"recall_start", &c.recall_start},         {"recall_end", &c.recall_end},
      {"sigma_center_start", &c.sigma_center_start}, {"sigma_center_end", &c.sigma_center_end},
      {"sigma_dims", &c.sigma_dims},             {"sigma_yaw", &c.sigma_yaw},
      {"sigma_conf_start", &c.sigma_conf_start}, {"sigma_conf_end", &c.sigma_conf_end},
      {"fp_rate_start", &c.fp_rate_start},       {"fp_rate_end", &c.fp_rate_end},
      {"p_ref", &c.p_ref},                       {"fp_range", &c.fp_range},
      {"ground_z", &c.ground_z}};
  for (const auto& [key, value] : j.items()) {
    if (key == "metric") {
      std::string m;
      read_field(value, key, m, kSection);
      if (m == "bev") c.metric = IouMetric::Bev;
      else if (m == "3d") c.metric = IouMetric::ThreeD;
      else throw ConfigError("teacher: metric must be 'bev' or '3d'");
      continue;
    }
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("teacher: unknown key '" + key + "'");
    read_field(value, key, *it->second, kSection);
  }
  c.validate();
  return c;
}

nlohmann::json TeacherSimConfig::to_json() const {
  return {{"recall_start", recall_start},
          {"recall_end", recall_end},
          {"sigma_center_start", sigma_center_start},
          {"sigma_center_end", sigma_center_end},
          {"sigma_dims", sigma_dims},
          {"sigma_yaw", sigma_yaw},
          {"sigma_conf_start", sigma_conf_start},
          {"sigma_conf_end", sigma_conf_end},
          {"fp_rate_start", fp_rate_start},
          {"fp_rate_end", fp_rate_end},
          {"p_ref", p_ref},
          {"fp_range", fp_range},
          {"ground_z", ground_z},
          {"metric", metric == IouMetric::Bev ? "bev" : "3d"}};
}

std::vector<Annotation> predict(const Scene& scene_gt, double t, const TeacherSimConfig& config,
                                std::uint64_t seed, std::span<const CategoryTemplate> templates) {
  config.validate();
  t = std::clamp(t, 0.0, 1.0);
  const SceneGenConfig defaults;
  if (templates.empty()) templates = defaults.templates;

  Rng rng(seed);
  const double recall = config.recall(t);
  const double sc = config.sigma_center(t);
  const double sconf = config.sigma_conf(t);
  std::vector<Annotation> out;

  for (const Annotation& gt : scene_gt.objects) {
    std::size_t n_points = 0;
    for (const Point& p : scene_gt.cloud.points) n_points += point_in_box(p, gt.box) ? 1 : 0;
    const double p_detect = recall * std::min(1.0, static_cast<double>(n_points) / config.p_ref);
    if (!(uniform(rng, 0.0, 1.0) < p_detect)) continue;

    Box3D box = gt.box;
    box.cx += gauss(rng, sc);
    box.cy += gauss(rng, sc);
    box.cz += gauss(rng, sc);
    box.length *= std::max(0.2, 1.0 + gauss(rng, config.sigma_dims));
    box.width *= std::max(0.2, 1.0 + gauss(rng, config.sigma_dims));
    box.height *= std::max(0.2, 1.0 + gauss(rng, config.sigma_dims));
    box.yaw = normalize_yaw(box.yaw + gauss(rng, config.sigma_yaw));
    const double iou = box_iou(box, gt.box, config.metric);
    const double conf = std::clamp(iou + gauss(rng, sconf), 0.0, 1.0);
    const double est = std::clamp(iou + gauss(rng, sconf), 0.0, 1.0);
    out.push_back({gt.category, box, conf, est});
  }

  const double fp_rate = config.fp_rate(t);
  const int n_fp = fp_rate > 0.0 ? std::poisson_distribution<int>(fp_rate)(rng) : 0;
  for (int i = 0; i < n_fp; ++i) {
    const CategoryTemplate& tpl = pick_template(templates, rng);
    const double scale = uniform(rng, 0.5, 1.0);
    for (int attempt = 0; attempt < 20; ++attempt) {
      Box3D box;
      box.length = tpl.length * scale;
      box.width = tpl.width * scale;
      box.height = tpl.height * scale;
      box.yaw = normalize_yaw(uniform(rng, -kPi, kPi));
      const double r = config.fp_range * std::sqrt(uniform(rng, 0.0, 1.0));
      const double a = uniform(rng, -kPi, kPi);
      box.cx = r * std::cos(a);
      box.cy = r * std::sin(a);
      box.cz = config.ground_z + box.height / 2.0;
      const bool hits_gt = std::any_of(scene_gt.objects.begin(), scene_gt.objects.end(),
                                       [&](const Annotation& g) { return bev_iou(g.box, box) > 0.0; });
      if (hits_gt) continue;
      const double conf = std::clamp(gauss(rng, sconf), 0.0, 1.0);
      const double est = std::clamp(gauss(rng, sconf), 0.0, 1.0);
      out.push_back({tpl.name, box, conf, est});
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string AdmissionMode::name() const {
  if (kind == Kind::Dynamic) return "dynamic";
  return "fixed:" + format_double(fixed_threshold);
}

AdmissionMode AdmissionMode::parse(const std::string& text) {
  AdmissionMode m;
  if (text == "dynamic") return m;
  if (text.rfind("fixed:", 0) == 0) {
    const std::string num = text.substr(6);
    try {
      std::size_t used = 0;
      m.fixed_threshold = std::stod(num, &used);
      if (used != num.size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ConfigError("baseline: cannot parse threshold in '" + text + "'");
    }
    if (!(m.fixed_threshold >= 0.0 && m.fixed_threshold <= 1.0)) {
      throw ConfigError("baseline: threshold must lie in [0, 1]");
    }
    m.kind = Kind::Fixed;
    return m;
  }
  throw ConfigError("baseline must be 'dynamic' or 'fixed:<tau>', got '" + text + "'");
}

nlohmann::json LoopReport::to_json() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const EpochReport& e : epochs) {
    nlohmann::json j = {{"epoch", e.epoch},
                        {"stage", std::string(to_string(e.stage))},
                        {"threshold", e.threshold ? nlohmann::json(*e.threshold) : nlohmann::json(nullptr)},
                        {"density", e.density},
                        {"predicted", e.predicted},
                        {"admitted", e.admitted},
                        {"rejected", e.rejected},
                        {"database_size", e.database_size},
                        {"quality", e.quality ? e.quality->to_json() : nlohmann::json(nullptr)},
                        {"synthesis",
                         {{"scenes", e.synthesis.scenes},
                          {"inserted", e.synthesis.inserted},
                          {"rejected_collisions", e.synthesis.rejected_collisions},
                          {"removed_background_points", e.synthesis.removed_background_points},
                          {"violations", e.synthesis.violations}}},
                        {"admission_digest", e.admission_digest}};
    epochs_json.push_back(std::move(j));
  }
  return {{"mode", mode}, {"epochs", std::move(epochs_json)}, {"final_quality", final_quality.to_json()}};
}

LoopReport run_loop(std::span<const Scene> labeled, std::span<const UnlabeledScene> unlabeled,
                    const std::vector<std::string>& categories, const HardnessSchedule& schedule,
                    const TeacherSimConfig& teacher, std::uint64_t seed, const LoopOptions& options) {
  if (labeled.empty()) throw ConfigError("run_loop: the labeled set is empty");
  schedule.validate();
  teacher.validate();
  options.synthesis.placement.validate();

  PseudoDatabase db(categories);
  {
    std::vector<ObjectSample> gt;
    for (const Scene& scene : labeled) {
      for (const Annotation& a : scene.objects) {
        gt.push_back({a.category, a.box, crop(scene.cloud, a.box).inside, std::nullopt,
                      Source::GroundTruth, 0, scene.id});
      }
    }
    db.add_ground_truth(std::move(gt));
    db.commit();
  }

  std::map<std::string, std::vector<Annotation>> gt_by_scene;
  if (options.report_quality) {
    for (const UnlabeledScene& u : unlabeled) gt_by_scene[u.observed.id] = u.hidden_gt;
  }

  // Admission thresholds for the fixed baseline come from a flat schedule
  // that is in the hard stage from epoch 0.
  HardnessSchedule admission_schedule = schedule;
  if (options.mode.kind == AdmissionMode::Kind::Fixed) {
    admission_schedule.hard_start_epoch = 0;
    admission_schedule.tau_hi = admission_schedule.tau_lo = options.mode.fixed_threshold;
  }

  LoopReport report;
  report.mode = options.mode.name();
  const int total = schedule.total_epochs;
  for (int epoch = 0; epoch < total; ++epoch) {
    EpochReport er;
    er.epoch = epoch;
    const double t = total > 1 ? static_cast<double>(epoch) / (total - 1) : 0.0;
    const bool fixed = options.mode.kind == AdmissionMode::Kind::Fixed;
    er.stage = admission_schedule.stage(epoch);
    if (er.stage == Stage::Hard) er.threshold = admission_schedule.threshold(epoch);
    er.density = schedule.density(epoch);

    const bool predicts = !fixed || epoch == 0;
    if (predicts) {
      std::vector<std::vector<ObjectSample>> per_scene(unlabeled.size());
      parallel_for(unlabeled.size(), options.workers, [&](std::size_t i) {
        const UnlabeledScene& u = unlabeled[i];
        // The surrogate teacher perceives the scene through its hidden labels.
        const Scene perceived{u.observed.id, u.observed.cloud, u.hidden_gt};
        const auto preds = predict(perceived, t, teacher,
                                   derive_seed(seed, "predict/" + std::to_string(epoch) + "/" + u.observed.id));
        for (const Annotation& p : preds) {
          per_scene[i].push_back({p.category, p.box, crop(u.observed.cloud, p.box).inside, p.score,
                                  Source::Pseudo, epoch, u.observed.id});
        }
      });
      std::vector<ObjectSample> candidates;
      for (auto& v : per_scene) {
        for (auto& s : v) candidates.push_back(std::move(s));
      }
      er.predicted = candidates.size();
      const AdmitResult ar = db.admit(candidates, epoch, admission_schedule);
      er.admitted = ar.accepted;
      er.rejected = ar.rejected;
      db.commit();
    }

    const auto snap = db.snapshot();
    er.database_size = snap->size();
    std::uint64_t digest = 0xCBF29CE484222325ull;
    for (const auto& e : snap->entries()) {
      if (e->source != Source::Pseudo || e->epoch_added != epoch) continue;
      mix(digest, e->source_scene.data(), e->source_scene.size());
      const double vals[] = {e->box.cx, e->box.cy, e->box.cz, e->box.length, e->box.width,
                             e->box.height, e->box.yaw, *e->score};
      mix(digest, vals, sizeof vals);
    }
    er.admission_digest = digest;

    std::vector<SynthesisSummary> per_labeled(labeled.size());
    parallel_for(labeled.size(), options.workers, [&](std::size_t i) {
      const Scene& bg = labeled[i];
      const auto res = synthesize(bg, *snap, static_cast<std::size_t>(er.density), options.synthesis,
                                  derive_seed(seed, "synth/" + std::to_string(epoch) + "/" + bg.id));
      SynthesisSummary& s = per_labeled[i];
      s.scenes = 1;
      s.inserted = res.inserted.size();
      s.rejected_collisions = res.rejected_collisions;
      s.removed_background_points = res.removed_background_points;
      s.violations = check_scene_valid(res.scene).size();
    });
    for (const SynthesisSummary& s : per_labeled) {
      er.synthesis.scenes += s.scenes;
      er.synthesis.inserted += s.inserted;
      er.synthesis.rejected_collisions += s.rejected_collisions;
      er.synthesis.removed_background_points += s.removed_background_points;
      er.synthesis.violations += s.violations;
    }

    if (options.report_quality) er.quality = snap->stats(&gt_by_scene, teacher.metric);
    report.epochs.push_back(std::move(er));
  }
  report.final_quality = options.report_quality ? db.snapshot()->stats(&gt_by_scene, teacher.metric)
                                                : db.snapshot()->stats(nullptr);
  return report;
}

}  // namespace hass
