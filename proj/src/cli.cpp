#include "hass/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "hass/augmentation.hpp"
#include "hass/errors.hpp"
#include "hass/parallel.hpp"
#include "hass/pseudo_database.hpp"
#include "hass/quality_eval.hpp"
#include "hass/random.hpp"
#include "hass/run_config.hpp"
#include "hass/scene_io.hpp"
#include "hass/synthesis.hpp"
#include "hass/teacher_sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hass {

namespace {

std::shared_ptr<spdlog::logger> make_logger() {
  auto logger = std::make_shared<spdlog::logger>("hass", std::make_shared<spdlog::sinks::stderr_sink_mt>());
  logger->set_pattern("[%l] %v");
  logger->set_level(spdlog::level::info);
  if (const char* env = std::getenv("HASS_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only honour real names.
    if (level != spdlog::level::off || std::string(env) == "off") logger->set_level(level);
  }
  return logger;
}

struct Context {
  RunConfig config;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::shared_ptr<spdlog::logger> log;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

void echo_config(const Context& ctx, const fs::path& dir) {
  json j = ctx.config.to_json();
  j["seed"] = ctx.seed;
  j["workers"] = ctx.workers;
  write_json(dir / "effective_config.json", j);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<Scene> read_scene_dir(const Context& ctx, const fs::path& dir, std::vector<fs::path>* files_out = nullptr) {
  const auto files = list_scene_files(dir);
  std::vector<Scene> scenes;
  for (const auto& f : files) {
    auto r = read_scene(f, ctx.config.categories);
    for (const auto& w : r.warnings) ctx.log->warn("{}", w);
    scenes.push_back(std::move(r.scene));
  }
  if (files_out) *files_out = files;
  return scenes;
}

int cmd_dbgen(const Context& ctx, const fs::path& scenes_dir, const fs::path& out_db) {
  const auto scenes = read_scene_dir(ctx, scenes_dir);
  const DatabaseManifest m = build_gt_database(scenes, out_db, ctx.config.categories);
  echo_config(ctx, out_db);
  std::map<std::string, std::size_t> counts;
  for (const auto& c : m.categories) counts[c] = 0;
  for (const auto& e : m.entries) ++counts[e.category];
  for (const auto& c : m.categories) ctx.log->info("{}: {} entries", c, counts[c]);
  ctx.log->info("database written to {} ({} entries from {} scenes)", out_db.string(), m.entries.size(),
                scenes.size());
  return 0;
}

int cmd_synth(const Context& ctx, const fs::path& scenes_dir, const fs::path& db_dir, int epoch,
              const fs::path& out_dir) {
  const auto& schedule = ctx.config.schedule;
  if (epoch < 0 || epoch > schedule.total_epochs) {
    throw ConfigError("epoch " + std::to_string(epoch) + " is outside [0, " +
                      std::to_string(schedule.total_epochs) + "]");
  }
  std::vector<fs::path> files;
  const auto scenes = read_scene_dir(ctx, scenes_dir, &files);
  const PseudoDatabase db = PseudoDatabase::open(db_dir);
  const auto snap = db.snapshot();
  const auto k = static_cast<std::size_t>(schedule.density(epoch));
  ctx.log->info("epoch {} ({} stage): synthesizing {} objects per scene", epoch, to_string(schedule.stage(epoch)), k);

  ensure_dir(out_dir);
  std::vector<SynthesisResult> results(scenes.size());
  parallel_for(scenes.size(), ctx.workers, [&](std::size_t i) {
    results[i] = synthesize(scenes[i], *snap, k, ctx.config.synthesis, derive_seed(ctx.seed, scenes[i].id));
  });

  json per_scene = json::array();
  std::size_t violations = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& r = results[i];
    const auto v = check_scene_valid(r.scene, &r.provenance);
    violations += v.size();
    for (const auto& bad : v) ctx.log->error("{}: {}", scenes[i].id, bad.message);
    write_scene(r.scene, out_dir / files[i].filename());
    per_scene.push_back({{"scene_id", scenes[i].id},
                         {"file", files[i].filename().string()},
                         {"inserted", r.inserted.size()},
                         {"rejected_collisions", r.rejected_collisions},
                         {"removed_background_points", r.removed_background_points},
                         {"violations", v.size()}});
  }
  write_json(out_dir / "synth_summary.json", {{"epoch", epoch},
                                              {"stage", std::string(to_string(schedule.stage(epoch)))},
                                              {"density", k},
                                              {"database_entries", snap->size()},
                                              {"scenes", per_scene}});
  echo_config(ctx, out_dir);
  return violations == 0 ? 0 : 1;
}

json summary_of(const LoopReport& r) {
  return {{"mode", r.mode},
          {"pseudo_entries", r.final_quality.overall.with_score},
          {"matched", r.final_quality.overall.matched},
          {"mean_matched_iou", r.final_quality.overall.mean_matched_iou}};
}

int cmd_simulate(const Context& ctx, const fs::path& out_dir, const std::optional<std::string>& baseline) {
  const RunConfig& cfg = ctx.config;
  std::vector<Scene> labeled;
  std::vector<UnlabeledScene> unlabeled;
  for (std::size_t i = 0; i < cfg.labeled_scenes; ++i) {
    const std::string id = "labeled-" + std::to_string(i);
    labeled.push_back(generate_scene(id, cfg.scenes, derive_seed(ctx.seed, id)));
  }
  for (std::size_t i = 0; i < cfg.unlabeled_scenes; ++i) {
    const std::string id = "unlabeled-" + std::to_string(i);
    unlabeled.push_back(hide_labels(generate_scene(id, cfg.scenes, derive_seed(ctx.seed, id))));
  }

  LoopOptions opts;
  opts.synthesis = cfg.synthesis;
  opts.workers = ctx.workers;
  ensure_dir(out_dir);
  const LoopReport dynamic = run_loop(labeled, unlabeled, cfg.categories, cfg.schedule, cfg.teacher, ctx.seed, opts);
  write_json(out_dir / "loop_report.json", dynamic.to_json());
  ctx.log->info("dynamic: {} pseudo entries, mean matched IoU {:.4f}", dynamic.final_quality.overall.with_score,
                dynamic.final_quality.overall.mean_matched_iou);

  if (baseline) {
    opts.mode = AdmissionMode::parse(*baseline);
    const LoopReport base = run_loop(labeled, unlabeled, cfg.categories, cfg.schedule, cfg.teacher, ctx.seed, opts);
    write_json(out_dir / "baseline_report.json", base.to_json());
    const auto& d = dynamic.final_quality.overall;
    const auto& b = base.final_quality.overall;
    write_json(out_dir / "comparison.json",
               {{"dynamic", summary_of(dynamic)},
                {"baseline", summary_of(base)},
                {"mean_iou_not_lower", d.mean_matched_iou >= b.mean_matched_iou},
                {"entries_not_fewer", d.with_score >= b.with_score}});
    ctx.log->info("{}: {} pseudo entries, mean matched IoU {:.4f}", base.mode, b.with_score, b.mean_matched_iou);
  }
  echo_config(ctx, out_dir);
  return 0;
}

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ConfigError("bad threshold '" + item + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int cmd_eval_quality(const Context& ctx, const fs::path& pseudo_file, const fs::path& gt_file,
                     const fs::path& out_dir, const std::string& thresholds, const std::string& field,
                     const std::string& metric_name) {
  const auto pseudo = read_scene(pseudo_file, ctx.config.categories);
  const auto gt = read_scene(gt_file, ctx.config.categories);
  for (const auto& w : pseudo.warnings) ctx.log->warn("{}", w);
  for (const auto& w : gt.warnings) ctx.log->warn("{}", w);
  if (metric_name != "bev" && metric_name != "3d") throw ConfigError("metric must be 'bev' or '3d'");
  const IouMetric metric = metric_name == "bev" ? IouMetric::Bev : IouMetric::ThreeD;
  const auto taus = parse_thresholds(thresholds);
  const auto rows = filter_report(pseudo.scene.objects, gt.scene.objects, taus, score_field_from_string(field), metric);

  ensure_dir(out_dir);
  json hist = json::object();
  for (const auto& [c, h] : histogram(match(pseudo.scene.objects, gt.scene.objects, metric))) hist[c] = h;
  write_json(out_dir / "filter_report.json", {{"score_field", field},
                                              {"metric", metric_name},
                                              {"pseudo_labels", pseudo.scene.objects.size()},
                                              {"ground_truth", gt.scene.objects.size()},
                                              {"histogram", hist},
                                              {"rows", to_json(rows)}});
  scatter_export(pseudo.scene.objects, gt.scene.objects, out_dir / "scatter.csv", metric);
  echo_config(ctx, out_dir);
  return 0;
}

int cmd_flip(const Context& ctx, const fs::path& in, const fs::path& out) {
  const auto r = read_scene(in, ctx.config.categories);
  for (const auto& w : r.warnings) ctx.log->warn("{}", w);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  write_scene(flip(r.scene), out);
  return 0;
}

int cmd_cutmix(const Context& ctx, const fs::path& a, const fs::path& b, const fs::path& out, double width) {
  const auto ra = read_scene(a, ctx.config.categories);
  const auto rb = read_scene(b, ctx.config.categories);
  const auto res = point_cutmix(ra.scene, rb.scene, RegionSpec{width}, ctx.seed);
  if (res.dropped_boxes) {
    ctx.log->info("dropped {} overlapping boxes ({} points)", res.dropped_boxes, res.dropped_points);
  }
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  write_scene(res.scene, out);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  auto log = make_logger();
  CLI::App app{"Hardness-aware scene synthesis for LiDAR point clouds", "hass"};
  app.require_subcommand(1);
  app.fallthrough();  // subcommands inherit this at creation

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  app.add_option("--config", config_path, "Run configuration (JSON)");
  app.add_option("--seed", seed, "Random seed (overrides the config)");
  app.add_option("--workers", workers, "Worker threads; 0 = available parallelism");

  std::string scenes_dir, db_dir, out_dir, pseudo_file, gt_file, in_a, in_b, out_file;
  int epoch = 0;
  std::optional<std::string> baseline;
  std::string thresholds = "0,0.3,0.5,0.6,0.7,0.8,0.9";
  std::string score_field = "confidence";
  std::string metric = "bev";
  double width = kPi / 2.0;

  auto* dbgen = app.add_subcommand("dbgen", "Build the ground-truth object database");
  dbgen->add_option("scenes_dir", scenes_dir);
  dbgen->add_option("out_db", db_dir);

  auto* synth = app.add_subcommand("synth", "Synthesize every scene at the schedule's density");
  synth->add_option("--epoch", epoch, "Epoch that selects the density")->required();
  synth->add_option("scenes_dir", scenes_dir);
  synth->add_option("db_dir", db_dir);
  synth->add_option("out_dir", out_dir);

  auto* simulate = app.add_subcommand("simulate", "Run the simulated teacher loop");
  simulate->add_option("--baseline", baseline, "Paired baseline, e.g. fixed:0.6");
  simulate->add_option("out_dir", out_dir);

  auto* eval = app.add_subcommand("eval-quality", "Pseudo-label quality against ground truth");
  eval->add_option("--thresholds", thresholds, "Comma-separated score thresholds");
  eval->add_option("--score-field", score_field, "confidence | estimated-iou");
  eval->add_option("--metric", metric, "bev | 3d");
  eval->add_option("pseudo_file", pseudo_file)->required();
  eval->add_option("gt_file", gt_file)->required();
  eval->add_option("out_dir", out_dir)->required();

  auto* augment = app.add_subcommand("augment", "Scene augmentations");
  augment->require_subcommand(1);
  auto* flip_cmd = augment->add_subcommand("flip", "Mirror a scene across the x-z plane");
  flip_cmd->add_option("input", in_a)->required();
  flip_cmd->add_option("output", out_file)->required();
  auto* cutmix_cmd = augment->add_subcommand("cutmix", "Swap a BEV sector between two scenes");
  cutmix_cmd->add_option("--width", width, "Sector width in radians, [0, 2*pi]");
  cutmix_cmd->add_option("a", in_a)->required();
  cutmix_cmd->add_option("b", in_b)->required();
  cutmix_cmd->add_option("output", out_file)->required();

  try {
    std::vector<const char*> argv{"hass"};
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    std::ostringstream out, err;
    const int status = app.exit(e, out, err);
    std::cerr << out.str() << err.str();
    return status;
  }

  try {
    Context ctx;
    ctx.log = log;
    if (!config_path.empty()) ctx.config = RunConfig::load(config_path);
    const char* ci = std::getenv("CI");
    if (ci && *ci && !seed) throw ConfigError("--seed is required when CI is set");
    ctx.seed = seed.value_or(ctx.config.seed.value_or(0));
    ctx.workers = resolve_workers(workers.value_or(ctx.config.workers));

    auto pick = [](const std::string& flag, const std::optional<std::string>& from_config) {
      if (!flag.empty()) return flag;
      if (from_config) return *from_config;
      throw ConfigError("missing path argument (give it on the command line or under \"paths\" in the config)");
    };

    if (*dbgen) return cmd_dbgen(ctx, pick(scenes_dir, ctx.config.scenes_dir), pick(db_dir, ctx.config.db_dir));
    if (*synth) {
      return cmd_synth(ctx, pick(scenes_dir, ctx.config.scenes_dir), pick(db_dir, ctx.config.db_dir), epoch,
                       pick(out_dir, ctx.config.out_dir));
    }
    if (*simulate) return cmd_simulate(ctx, pick(out_dir, ctx.config.out_dir), baseline);
    if (*eval) return cmd_eval_quality(ctx, pseudo_file, gt_file, out_dir, thresholds, score_field, metric);
    if (*flip_cmd) return cmd_flip(ctx, in_a, out_file);
    if (*cutmix_cmd) return cmd_cutmix(ctx, in_a, in_b, out_file, width);
  } catch (const std::exception& e) {
    log->error("{}", e.what());
    return 1;
  }
  return 1;
}

}  // namespace hass
