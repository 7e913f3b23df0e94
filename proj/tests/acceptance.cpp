// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hass/augmentation.hpp"
#include "hass/errors.hpp"
#include "hass/hardness_scheduler.hpp"
#include "hass/parallel.hpp"
#include "hass/pseudo_database.hpp"
#include "hass/quality_eval.hpp"
#include "hass/random.hpp"
#include "hass/scene_io.hpp"
#include "hass/synthesis.hpp"
#include "hass/teacher_sim.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hass;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::size_t workers() { return resolve_workers(0); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string serialize(const Scene& s) {
  std::string out = s.id + "\n";
  for (const auto& a : s.objects) out += annotation_line(a) + "\n";
  const auto bytes = encode_cloud(s.cloud);
  out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return out;
}

Outcome geometry() {
  constexpr std::size_t kPairs = 1000, kSamples = 200'000;
  std::mt19937_64 rng(20240601);
  std::vector<std::pair<Box3D, Box3D>> pairs;
  for (std::size_t i = 0; i < kPairs; ++i) {
    const Box3D a = oracle::random_box(rng, 1.5);
    pairs.push_back({a, oracle::random_box(rng, 1.5)});
  }
  std::vector<double> err_bev(kPairs), err_3d(kPairs);
  std::vector<int> overlapping(kPairs);
  parallel_for(kPairs, workers(), [&](std::size_t i) {
    const auto& [a, b] = pairs[i];
    err_bev[i] = std::abs(bev_iou(a, b) - oracle::mc_bev_iou(a, b, kSamples, 1000 + i));
    err_3d[i] = std::abs(iou_3d(a, b) - oracle::mc_iou_3d(a, b, kSamples, 5000 + i));
    overlapping[i] = bev_iou(a, b) > 0.0;
  });
  double max_bev = 0, max_3d = 0;
  int n_overlap = 0;
  for (std::size_t i = 0; i < kPairs; ++i) {
    max_bev = std::max(max_bev, err_bev[i]);
    max_3d = std::max(max_3d, err_3d[i]);
    n_overlap += overlapping[i];
  }

  std::size_t mask_mismatch = 0, points = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const Box3D box = oracle::random_box(rng, 2.0);
    const PointCloud cloud = oracle::random_cloud(rng, 10'000, 4.0);
    const auto got = points_in_box(cloud, box), want = oracle::halfspace_mask(cloud, box);
    points += cloud.size();
    for (std::size_t k = 0; k < cloud.size(); ++k) mask_mismatch += got[k] != want[k];
  }
  Outcome o;
  o.pass = max_bev <= 0.01 && max_3d <= 0.01 && mask_mismatch == 0;
  o.detail = fmt("%zu pairs (%d overlapping), max |err| bev %.4f 3d %.4f; points_in_box mismatches %zu/%zu",
                 kPairs, n_overlap, max_bev, max_3d, mask_mismatch, points);
  return o;
}

Outcome schedule_constants() {
  const auto k = HardnessSchedule::kitti();
  const auto w = HardnessSchedule::waymo();
  std::vector<std::pair<const char*, bool>> checks = {
      {"kitti stage(44)=Easy", k.stage(44) == Stage::Easy},
      {"kitti stage(45)=Hard", k.stage(45) == Stage::Hard},
      {"kitti threshold(45)=0.6", k.threshold(45) == 0.6},
      {"kitti threshold(60)=0.4", k.threshold(60) == 0.4},
      {"kitti density(45)=5", k.density(45) == 5},
      {"kitti density(60)=15", k.density(60) == 15},
      {"waymo threshold(15)=0.8", w.threshold(15) == 0.8},
      {"waymo threshold(30)=0.4", w.threshold(30) == 0.4},
      {"waymo density(15)=10", w.density(15) == 10},
      {"waymo density(30)=30", w.density(30) == 30},
  };
  Outcome o;
  int ok = 0;
  for (const auto& [name, good] : checks) {
    ok += good;
    if (!good) {
      o.pass = false;
      o.detail += std::string(name) + " failed; ";
    }
  }
  o.detail += fmt("%d/%zu exact", ok, checks.size());
  return o;
}

Outcome synthesis_invariants() {
  SceneGenConfig gen;
  PseudoDatabase db(gen.categories());
  std::vector<ObjectSample> samples;
  for (int i = 0; i < 20; ++i) {
    const Scene s = generate_scene("source-" + std::to_string(i), gen, derive_seed(77, i));
    for (const auto& a : s.objects) {
      ObjectSample o;
      o.category = a.category;
      o.box = a.box;
      o.points = crop(s.cloud, a.box).inside;
      o.source_scene = s.id;
      samples.push_back(std::move(o));
    }
  }
  db.add_ground_truth(std::move(samples));
  db.commit();
  const auto snap = db.snapshot();

  SynthesisOptions jitter;
  jitter.placement.kind = PlacementPolicy::Kind::Jitter;
  constexpr std::size_t kRuns = 200;
  std::vector<int> overlaps(kRuns), conservation_bad(kRuns), rerun_diff(kRuns), violations(kRuns);
  std::vector<std::size_t> inserted(kRuns);
  parallel_for(kRuns, workers(), [&](std::size_t run) {
    const Scene bg = generate_scene("bg-" + std::to_string(run), gen, derive_seed(99, run));
    const SynthesisOptions opts = run % 2 ? jitter : SynthesisOptions{};
    const std::size_t k = 1 + run % 20;
    const std::uint64_t seed = derive_seed(1234, run);
    const auto r = synthesize(bg, *snap, k, opts, seed);
    for (std::size_t i = 0; i < r.scene.objects.size(); ++i)
      for (std::size_t j = i + 1; j < r.scene.objects.size(); ++j)
        overlaps[run] += bev_iou(r.scene.objects[i].box, r.scene.objects[j].box) != 0.0;
    std::size_t pts = 0;
    for (const auto& o : r.inserted) pts += o.points.size();
    conservation_bad[run] = r.scene.cloud.size() != bg.cloud.size() - r.removed_background_points + pts;
    violations[run] = static_cast<int>(check_scene_valid(r.scene, &r.provenance).size());
    rerun_diff[run] = serialize(synthesize(bg, *snap, k, opts, seed).scene) != serialize(r.scene);
    inserted[run] = r.inserted.size();
  });
  int n_overlap = 0, n_cons = 0, n_diff = 0, n_viol = 0;
  std::size_t n_ins = 0;
  for (std::size_t i = 0; i < kRuns; ++i) {
    n_overlap += overlaps[i];
    n_cons += conservation_bad[i];
    n_diff += rerun_diff[i];
    n_viol += violations[i];
    n_ins += inserted[i];
  }
  Outcome o;
  o.pass = n_overlap == 0 && n_cons == 0 && n_diff == 0 && n_viol == 0 && n_ins > 0;
  o.detail = fmt("%zu runs, %zu objects inserted; overlapping pairs %d, conservation failures %d, "
                 "validity violations %d, non-identical reruns %d",
                 kRuns, n_ins, n_overlap, n_cons, n_viol, n_diff);
  return o;
}

Outcome dynamic_database() {
  HardnessSchedule schedule = HardnessSchedule::kitti();
  schedule.total_epochs = 12;
  schedule.hard_start_epoch = 9;
  SceneGenConfig gen;
  const TeacherSimConfig teacher;
  Outcome o;
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<Scene> labeled;
    std::vector<UnlabeledScene> unlabeled;
    for (int i = 0; i < 50; ++i) {
      const std::string id = "labeled-" + std::to_string(i);
      labeled.push_back(generate_scene(id, gen, derive_seed(seed, id)));
    }
    for (int i = 0; i < 200; ++i) {
      const std::string id = "unlabeled-" + std::to_string(i);
      unlabeled.push_back(hide_labels(generate_scene(id, gen, derive_seed(seed, id))));
    }
    LoopOptions dyn, fixed;
    dyn.workers = fixed.workers = workers();
    fixed.mode = AdmissionMode::parse("fixed:0.6");
    const auto a = run_loop(labeled, unlabeled, gen.categories(), schedule, teacher, seed, dyn);
    const auto b = run_loop(labeled, unlabeled, gen.categories(), schedule, teacher, seed, fixed);
    const auto& qa = a.final_quality.overall;
    const auto& qb = b.final_quality.overall;
    const bool ok = qa.mean_matched_iou >= qb.mean_matched_iou && qa.with_score >= qb.with_score;
    wins += ok;
    o.detail += fmt("seed %llu: iou %.3f vs %.3f, entries %zu vs %zu%s; ", static_cast<unsigned long long>(seed),
                    qa.mean_matched_iou, qb.mean_matched_iou, qa.with_score, qb.with_score, ok ? "" : " (FAIL)");
  }
  o.pass = wins == 5;
  o.detail += fmt("%d/5 seeds", wins);
  return o;
}

Outcome confidence_scatter() {
  SceneGenConfig gen;
  const TeacherSimConfig teacher;
  Outcome o;
  int ok_seeds = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::size_t kept_low = 0, dropped_high = 0, rows = 0;
    // The unlabeled set of the desk simulation: 200 generated scenes.
    for (int i = 0; i < 200; ++i) {
      const std::string id = "unlabeled-" + std::to_string(i);
      const Scene s = generate_scene(id, gen, derive_seed(seed, id));
      const auto pred = predict(s, 0.0, teacher, derive_seed(seed, "predict/" + id));
      for (const auto& r : scatter_rows(pred, s.objects)) {
        ++rows;
        // Only matched rows: these are real objects, not false positives.
        if (r.iou <= 0.0) continue;
        kept_low += r.confidence >= 0.8 && r.iou < 0.6;
        dropped_high += r.confidence < 0.8 && r.iou > 0.8;
      }
    }
    const bool ok = kept_low >= 1 && dropped_high >= 1;
    ok_seeds += ok;
    o.detail += fmt("seed %llu: %zu rows, kept IoU<0.6: %zu, discarded IoU>0.8: %zu; ",
                    static_cast<unsigned long long>(seed), rows, kept_low, dropped_high);
  }
  o.pass = ok_seeds == 5;
  o.detail += fmt("%d/5 seeds", ok_seeds);
  return o;
}

Outcome augmentation() {
  SceneGenConfig gen;
  std::mt19937_64 rng(4242);
  double max_dev = 0.0;
  std::size_t invalid = 0, identity_fail = 0, outputs = 0;
  for (int i = 0; i < 100; ++i) {
    const Scene a = generate_scene("aug-a-" + std::to_string(i), gen, derive_seed(5, i));
    const Scene b = generate_scene("aug-b-" + std::to_string(i), gen, derive_seed(6, i));
    const Scene f = flip(a), ff = flip(f);
    for (std::size_t k = 0; k < a.cloud.size(); ++k) {
      max_dev = std::max<double>(max_dev, std::abs(ff.cloud.points[k].x - a.cloud.points[k].x));
      max_dev = std::max<double>(max_dev, std::abs(ff.cloud.points[k].y - a.cloud.points[k].y));
      max_dev = std::max<double>(max_dev, std::abs(ff.cloud.points[k].z - a.cloud.points[k].z));
    }
    for (std::size_t k = 0; k < a.objects.size(); ++k) {
      const Box3D &p = a.objects[k].box, &q = ff.objects[k].box;
      max_dev = std::max({max_dev, std::abs(p.cx - q.cx), std::abs(p.cy - q.cy), std::abs(p.cz - q.cz),
                          std::abs(normalize_yaw(p.yaw - q.yaw))});
    }
    if (ff.cloud.size() != a.cloud.size() || ff.objects.size() != a.objects.size()) max_dev = 1e9;

    const auto none = point_cutmix(a, b, RegionSpec{0.0}, derive_seed(7, i));
    const auto all = point_cutmix(a, b, RegionSpec{2 * kPi}, derive_seed(7, i));
    identity_fail += !(none.scene.cloud == a.cloud && none.scene.objects == a.objects);
    identity_fail += !(all.scene.cloud == b.cloud && all.scene.objects == b.objects);
    std::uniform_real_distribution<double> width(0.0, 2 * kPi);
    const auto mixed = point_cutmix(a, b, RegionSpec{width(rng)}, derive_seed(8, i));
    for (const Scene* s : {&f, &ff, &none.scene, &all.scene, &mixed.scene}) {
      invalid += !check_scene_valid(*s).empty();
      ++outputs;
    }
  }
  Outcome o;
  o.pass = max_dev <= 1e-6 && identity_fail == 0 && invalid == 0;
  o.detail = fmt("flip involution max deviation %.2e; cutmix identity failures %zu/200; invalid outputs %zu/%zu",
                 max_dev, identity_fail, invalid, outputs);
  return o;
}

Outcome io() {
  testutil::TempDir dir("acceptance-io");
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(0, 1);
  const char* cats[] = {"Car", "Pedestrian", "Cyclist"};
  std::size_t mismatch = 0;
  for (int i = 0; i < 1000; ++i) {
    Scene s;
    s.id = "io-" + std::to_string(i);
    s.cloud = oracle::random_cloud(rng, 1 + rng() % 400, 70.0);
    const int n = static_cast<int>(rng() % 8);
    for (int k = 0; k < n; ++k) {
      Annotation a{cats[k % 3], oracle::random_box(rng, 40.0), {}, {}};
      if (u(rng) < 0.5) a.score = u(rng);
      if (u(rng) < 0.3) a.est_iou = u(rng);
      s.objects.push_back(a);
    }
    const auto path = dir / (s.id + ".jsonl");
    write_scene(s, path);
    const auto first = testutil::slurp(path) + testutil::slurp(dir / (s.id + ".bin"));
    const Scene back = read_scene(path).scene;
    write_scene(back, path);
    const auto second = testutil::slurp(path) + testutil::slurp(dir / (s.id + ".bin"));
    mismatch += !(back == s) || first != second;
  }

  // Corrupt inputs: each must raise the documented error.
  int caught = 0, cases = 0;
  auto expect = [&](auto&& fn, auto tag) {
    ++cases;
    try {
      fn();
    } catch (const decltype(tag)&) {
      ++caught;
    } catch (...) {
    }
  };
  testutil::spit(dir / "odd.bin", std::string(17, '\0'));
  ++cases;
  try {
    read_cloud(dir / "odd.bin");
  } catch (const FormatError& e) {
    caught += e.offset() == 16;
  }
  PointCloud nan_cloud;
  nan_cloud.points = {{0, 0, 0, 0}, {NAN, 0, 0, 0}};
  const auto nan_bytes = encode_cloud(nan_cloud);
  testutil::spit(dir / "nan.bin", std::string(reinterpret_cast<const char*>(nan_bytes.data()), nan_bytes.size()));
  expect([&] { read_cloud(dir / "nan.bin"); }, ValidationError(""));
  write_scene(Scene{"c", {}, {}}, dir / "c.jsonl");
  const std::string header = testutil::slurp(dir / "c.jsonl");
  testutil::spit(dir / "c.jsonl", header + R"({"category":"Car","box":[0,0,0,1,1,1,0],"score":1.2})" "\n");
  expect([&] { read_scene(dir / "c.jsonl"); }, ValidationError(""));
  testutil::spit(dir / "c.jsonl", header + R"({"category":"Car","box":[0,0,0,1,1]})" "\n");
  expect([&] { read_scene(dir / "c.jsonl"); }, Error(""));
  testutil::spit(dir / "c.jsonl", header + "{\"category\":\n");
  expect([&] { read_scene(dir / "c.jsonl"); }, Error(""));
  testutil::spit(dir / "d.jsonl", R"({"scene_id":"d","cloud":"missing.bin"})" "\n");
  expect([&] { read_scene(dir / "d.jsonl"); }, IoError(""));

  const Box3D box{0, 0, 0, 2, 2, 2, 0};
  const std::vector<Scene> src = {Scene{"m", oracle::points_inside(rng, box, 10), {{"Car", box, {}, {}}}}};
  const auto manifest = build_gt_database(src, dir / "db");
  testutil::spit(dir / "db" / manifest.entries[0].blob, std::string(48, '\0'));
  expect([&] { read_manifest(dir / "db"); }, ValidationError(""));
  testutil::spit(dir / "db" / "manifest.json", "{\"version\": 1, \"entries\": [");
  expect([&] { read_manifest(dir / "db"); }, Error(""));

  Outcome o;
  o.pass = mismatch == 0 && caught == cases;
  o.detail = fmt("1000 scenes, %zu round-trip mismatches; corrupt-file cases raised %d/%d", mismatch, caught, cases);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"geometry oracle suite", 60, geometry},
      {"schedule constants", 1, schedule_constants},
      {"synthesis invariants", 120, synthesis_invariants},
      {"dynamic vs fixed-0.6 database", 300, dynamic_database},
      {"confidence vs IoU scatter at progress 0", 60, confidence_scatter},
      {"augmentation", 60, augmentation},
      {"scene and cloud I/O", 60, io},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt("; over time budget %.0f s", c.budget_s);
    }
    failed += !o.pass;
    std::printf("%s  %s  [%.1f s]  %s\n", o.pass ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
  return failed ? 1 : 0;
}
