#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "hass/errors.hpp"
#include "hass/pseudo_database.hpp"
#include "hass/random.hpp"
#include "hass/scene_io.hpp"
#include "hass/teacher_sim.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hass;

namespace {

ObjectSample pseudo(const std::string& cat, double score, double x = 0.0, const std::string& scene = "u0") {
  ObjectSample s;
  s.category = cat;
  s.box = Box3D{x, 0, 0, 1, 1, 1, 0};
  s.score = score;
  s.source = Source::Pseudo;
  s.source_scene = scene;
  return s;
}

ObjectSample gt(const std::string& cat, double x) {
  ObjectSample s;
  s.category = cat;
  s.box = Box3D{x, 0, 0, 1, 1, 1, 0};
  s.source_scene = "l0";
  return s;
}

}  // namespace

TEST_CASE("admission follows the schedule") {
  const auto kitti = HardnessSchedule::kitti();
  PseudoDatabase db({"Car"});
  const std::vector<ObjectSample> at45 = {pseudo("Car", 0.65), pseudo("Car", 0.55)};
  auto r = db.admit(at45, 45, kitti);
  CHECK(r.accepted == 1);
  CHECK(r.rejected == 1);
  const std::vector<ObjectSample> at60 = {pseudo("Car", 0.45), pseudo("Car", 0.35)};
  r = db.admit(at60, 60, kitti);
  CHECK(r.accepted == 1);
  CHECK(r.rejected == 1);

  const std::vector<ObjectSample> easy = {pseudo("Car", 1.0), pseudo("Car", 0.99), pseudo("Car", 0.0)};
  r = db.admit(easy, 10, kitti);
  CHECK(r.accepted == 0);
  CHECK(r.rejected == 3);

  // Boundary score is accepted.
  const std::vector<ObjectSample> edge = {pseudo("Car", kitti.threshold(51))};
  CHECK(db.admit(edge, 51, kitti).accepted == 1);

  db.commit();
  const auto snap = db.snapshot();
  CHECK(snap->pseudo_count() == 3);
  for (const auto& e : snap->entries()) CHECK(*e->score >= kitti.threshold(e->epoch_added));
}

TEST_CASE("admission errors") {
  const auto kitti = HardnessSchedule::kitti();
  PseudoDatabase db({"Car"});
  auto no_score = pseudo("Car", 0.9);
  no_score.score.reset();
  std::vector<ObjectSample> batch = {no_score};
  CHECK_THROWS_AS(db.admit(batch, 50, kitti), ValidationError);
  batch = {pseudo("Truck", 0.9)};
  CHECK_THROWS_AS(db.admit(batch, 50, kitti), ValidationError);
  batch = {pseudo("Car", 0.9)};
  CHECK_THROWS_AS(db.admit(batch, 61, kitti), ContractError);
  CHECK_THROWS_AS(db.admit(batch, -1, kitti), ContractError);
}

TEST_CASE("staged entries appear only at commit and the database only grows") {
  HardnessSchedule s{10, 0, 0.5, 0.5, 1, 1};
  PseudoDatabase db({"Car", "Cyclist"});
  db.add_ground_truth({gt("Car", 0), gt("Cyclist", 5)});
  db.commit();
  CHECK(db.snapshot()->size() == 2);
  std::size_t last = 2;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int e = 0; e <= 10; ++e) {
    std::vector<ObjectSample> batch;
    for (int i = 0; i < 5; ++i) batch.push_back(pseudo(i % 2 ? "Car" : "Cyclist", u(rng), i * 3.0));
    const auto before = db.snapshot();
    const auto r = db.admit(batch, e, s);
    CHECK(db.snapshot() == before);
    CHECK(db.staged() == r.accepted);
    db.commit();
    CHECK(db.snapshot()->size() == last + r.accepted);
    // Old snapshot still intact.
    CHECK(before->size() == last);
    last = db.snapshot()->size();
  }
}

TEST_CASE("easy stage keeps the database ground-truth only") {
  const auto kitti = HardnessSchedule::kitti();
  PseudoDatabase db({"Car"});
  db.add_ground_truth({gt("Car", 0)});
  for (int e = 0; e < kitti.hard_start_epoch; ++e) {
    const std::vector<ObjectSample> batch = {pseudo("Car", 1.0), pseudo("Car", 0.7)};
    db.admit(batch, e, kitti);
    db.commit();
    CHECK(db.snapshot()->pseudo_count() == 0);
  }
}

TEST_CASE("sampling") {
  PseudoDatabase db({"Car", "Pedestrian", "Cyclist"});
  std::vector<ObjectSample> g;
  for (int i = 0; i < 20; ++i) g.push_back(gt("Car", i * 2.0));
  for (int i = 0; i < 3; ++i) g.push_back(gt("Pedestrian", i * 2.0));
  db.add_ground_truth(g);
  db.commit();
  const auto snap = db.snapshot();

  CHECK(snap->sample("Car", 0, 1).empty());
  CHECK(snap->sample("Cyclist", 4, 1).empty());
  CHECK(snap->sample("Pedestrian", 10, 1).size() == 3);
  CHECK_THROWS_AS(snap->sample("Truck", 1, 1), ValidationError);

  const auto a = snap->sample("Car", 7, 99), b = snap->sample("Car", 7, 99);
  CHECK(a == b);
  std::set<const ObjectSample*> uniq;
  for (const auto& e : a) {
    uniq.insert(e.get());
    CHECK(e->category == "Car");
  }
  CHECK(uniq.size() == 7);

  // Prefix consistency across n.
  const auto full = snap->sample("Car", 20, 5);
  for (std::size_t n = 0; n <= 20; ++n) {
    const auto part = snap->sample("Car", n, 5);
    CHECK(std::equal(part.begin(), part.end(), full.begin()));
  }
}

TEST_CASE("sampling is roughly uniform") {
  PseudoDatabase db({"Car"});
  std::vector<ObjectSample> g;
  for (int i = 0; i < 10; ++i) g.push_back(gt("Car", i * 2.0));
  db.add_ground_truth(g);
  db.commit();
  const auto snap = db.snapshot();
  std::map<const ObjectSample*, int> hits;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    for (const auto& e : snap->sample("Car", 3, static_cast<std::uint64_t>(t))) ++hits[e.get()];
  }
  REQUIRE(hits.size() == 10);
  // Each entry expected 0.3 * trials; binomial sd ~ 65.
  for (const auto& [_, n] : hits) CHECK(std::abs(n - 0.3 * trials) < 400);
}

TEST_CASE("stats trivial cases") {
  PseudoDatabase db({"Car"});
  db.add_ground_truth({gt("Car", 0)});
  db.commit();
  std::map<std::string, std::vector<Annotation>> gts = {{"u0", {{"Car", Box3D{3, 0, 0, 1, 1, 1, 0}, {}, {}}}}};
  auto rep = db.snapshot()->stats(&gts);
  CHECK(rep.overall.with_score == 0);
  CHECK(rep.overall.histogram == IouHistogram{0, 0, 0});
  CHECK(rep.overall.entries == 1);

  HardnessSchedule s{10, 0, 0.0, 0.0, 1, 1};
  const std::vector<ObjectSample> batch = {pseudo("Car", 0.9, 3.0)};
  db.admit(batch, 0, s);
  db.commit();
  rep = db.snapshot()->stats(&gts);
  CHECK(rep.categories.at("Car").histogram == IouHistogram{0, 0, 1});
  CHECK(rep.categories.at("Car").matched == 1);
  CHECK(rep.categories.at("Car").mean_matched_iou == 1.0);
}

TEST_CASE("stats equals an independent recount on a simulated run") {
  SceneGenConfig gen;
  TeacherSimConfig teacher;
  HardnessSchedule s{4, 0, 0.6, 0.3, 1, 1};
  PseudoDatabase db(gen.categories());
  std::map<std::string, std::vector<Annotation>> gts;
  std::vector<UnlabeledScene> scenes;
  for (int i = 0; i < 30; ++i) {
    scenes.push_back(hide_labels(generate_scene("u" + std::to_string(i), gen, 1000 + i)));
    gts[scenes.back().observed.id] = scenes.back().hidden_gt;
  }
  for (int e = 0; e <= 4; ++e) {
    std::vector<ObjectSample> batch;
    for (const auto& u : scenes) {
      Scene full = u.observed;
      full.objects = u.hidden_gt;
      for (const auto& a : predict(full, e / 4.0, teacher, derive_seed(7, u.observed.id + std::to_string(e)))) {
        ObjectSample o;
        o.category = a.category;
        o.box = a.box;
        o.score = a.score;
        o.source = Source::Pseudo;
        o.source_scene = u.observed.id;
        batch.push_back(o);
      }
    }
    db.admit(batch, e, s);
    db.commit();
  }
  const auto snap = db.snapshot();
  REQUIRE(snap->pseudo_count() > 50);
  const auto rep = snap->stats(&gts);

  // Recount: group by (scene, epoch) in entry order, exhaustive greedy scan.
  std::map<std::pair<std::string, int>, std::vector<Annotation>> batches;
  for (const auto& e : snap->entries()) {
    if (e->source == Source::Pseudo) batches[{e->source_scene, e->epoch_added}].push_back(e->annotation());
  }
  std::map<std::string, IouHistogram> hist;
  std::map<std::string, std::size_t> matched;
  for (const auto& [key, p] : batches) {
    const auto ref = oracle::greedy_by_scan(p, gts.at(key.first),
                                            [](const Box3D& a, const Box3D& b) { return bev_iou(a, b); });
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (ref[i].gt < 0) continue;
      ++hist[p[i].category][oracle::recount_bin(ref[i].iou)];
      ++matched[p[i].category];
    }
  }
  std::size_t total = 0;
  for (const auto& [cat, q] : rep.categories) {
    CHECK(q.histogram == hist[cat]);
    CHECK(q.matched == matched[cat]);
    CHECK(q.histogram[0] + q.histogram[1] + q.histogram[2] == q.matched);
    total += q.matched;
  }
  CHECK(rep.overall.matched == total);
}

TEST_CASE("persistence through attach, commit and open") {
  testutil::TempDir dir("pdb");
  std::mt19937_64 rng(3);
  PseudoDatabase db({"Car"});
  ObjectSample g = gt("Car", 0);
  g.points = oracle::points_inside(rng, g.box, 25);
  db.add_ground_truth({g});
  db.attach(dir.path());
  db.commit();
  HardnessSchedule s{5, 0, 0.5, 0.5, 1, 1};
  ObjectSample p = pseudo("Car", 0.8, 10.0);
  p.points = oracle::points_inside(rng, p.box, 12);
  const std::vector<ObjectSample> batch = {p};
  db.admit(batch, 2, s);
  db.commit();

  const auto manifest = read_manifest(dir.path());
  REQUIRE(manifest.entries.size() == 2);
  CHECK(manifest.entries[1].source == Source::Pseudo);
  CHECK(manifest.entries[1].epoch_added == 2);
  CHECK(manifest.entries[1].point_count == 12);
  CHECK_FALSE(std::filesystem::exists(dir.path() / ".lock"));

  const auto reopened = PseudoDatabase::open(dir.path());
  const auto snap = reopened.snapshot();
  REQUIRE(snap->size() == 2);
  CHECK(snap->entries()[1]->points == p.points);
  CHECK(*snap->entries()[1]->score == 0.8);
  CHECK(snap->entries()[0]->points == g.points);
}
