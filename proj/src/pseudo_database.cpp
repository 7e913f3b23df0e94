#include "hass/pseudo_database.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

#include "hass/errors.hpp"
#include "hass/random.hpp"

namespace hass {

namespace {

void accumulate(CategoryQuality& into, const CategoryQuality& from, double iou_sum_from,
                double& iou_sum_into) {
  into.entries += from.entries;
  into.with_score += from.with_score;
  into.matched += from.matched;
  for (std::size_t b = 0; b < into.histogram.size(); ++b) into.histogram[b] += from.histogram[b];
  iou_sum_into += iou_sum_from;
}

}  // namespace

nlohmann::json QualityReport::to_json() const {
  auto one = [](const CategoryQuality& q) {
    return nlohmann::json{{"entries", q.entries},
                          {"with_score", q.with_score},
                          {"matched", q.matched},
                          {"mean_matched_iou", q.mean_matched_iou},
                          {"histogram", q.histogram}};
  };
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [name, q] : categories) cats[name] = one(q);
  return {{"categories", cats}, {"overall", one(overall)}};
}

DatabaseSnapshot::DatabaseSnapshot(std::vector<std::string> categories, std::vector<Entry> entries)
    : categories_(std::move(categories)), entries_(std::move(entries)) {
  for (const std::string& c : categories_) pools_[c];
  for (std::size_t i = 0; i < entries_.size(); ++i) pools_[entries_[i]->category].push_back(i);
}

std::size_t DatabaseSnapshot::pseudo_count() const {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const Entry& e) {
    return e->source == Source::Pseudo;
  }));
}

const std::vector<std::size_t>& DatabaseSnapshot::pool(const std::string& category) const {
  auto it = pools_.find(category);
  if (it == pools_.end()) throw ValidationError("unknown category '" + category + "'");
  return it->second;
}

std::vector<DatabaseSnapshot::Entry> DatabaseSnapshot::sample(const std::string& category,
                                                              std::size_t n,
                                                              std::uint64_t seed) const {
  std::vector<std::size_t> idx = pool(category);
  const std::size_t take = std::min(n, idx.size());
  Rng rng(seed);
  // Partial Fisher-Yates; the first `take` slots are the sample.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<Entry> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(entries_[idx[i]]);
  return out;
}

QualityReport DatabaseSnapshot::stats(const std::map<std::string, std::vector<Annotation>>* gt_by_scene,
                                      IouMetric metric) const {
  QualityReport report;
  std::map<std::string, double> iou_sums;
  for (const std::string& c : categories_) report.categories[c];

  // Pseudo entries grouped into prediction batches.
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const ObjectSample& e = *entries_[i];
    CategoryQuality& q = report.categories[e.category];
    ++q.entries;
    if (e.source != Source::Pseudo) continue;
    ++q.with_score;
    batches[{e.source_scene, e.epoch_added}].push_back(i);
  }

  if (gt_by_scene) {
    for (const auto& [key, members] : batches) {
      auto it = gt_by_scene->find(key.first);
      if (it == gt_by_scene->end()) continue;
      std::vector<Annotation> pseudo;
      pseudo.reserve(members.size());
      for (std::size_t i : members) pseudo.push_back(entries_[i]->annotation());
      const MatchResult matches = match(pseudo, it->second, metric);
      for (const Match& m : matches) {
        if (!m.gt_index) continue;
        CategoryQuality& q = report.categories[m.category];
        ++q.matched;
        ++q.histogram[iou_bin(m.iou)];
        iou_sums[m.category] += m.iou;
      }
    }
  }

  double overall_sum = 0.0;
  for (auto& [name, q] : report.categories) {
    const double sum = iou_sums[name];
    q.mean_matched_iou = q.matched ? sum / static_cast<double>(q.matched) : 0.0;
    accumulate(report.overall, q, sum, overall_sum);
  }
  report.overall.mean_matched_iou =
      report.overall.matched ? overall_sum / static_cast<double>(report.overall.matched) : 0.0;
  return report;
}

// ---------------------------------------------------------------------------

PseudoDatabase::PseudoDatabase(std::vector<std::string> categories)
    : categories_(std::move(categories)),
      snapshot_(std::make_shared<const DatabaseSnapshot>(categories_, std::vector<DatabaseSnapshot::Entry>{})) {}

PseudoDatabase PseudoDatabase::open(const std::filesystem::path& dir) {
  LoadedDatabase loaded = load_database(dir);
  PseudoDatabase db(loaded.manifest.categories);
  for (ObjectSample& s : loaded.samples) {
    db.entries_.push_back(std::make_shared<const ObjectSample>(std::move(s)));
  }
  db.snapshot_ = std::make_shared<const DatabaseSnapshot>(db.categories_, db.entries_);
  db.dir_ = dir;
  db.manifest_ = std::move(loaded.manifest);
  return db;
}

void PseudoDatabase::attach(const std::filesystem::path& dir) {
  DatabaseLock lock(dir);
  DatabaseManifest manifest;
  manifest.categories = categories_;
  std::filesystem::remove_all(dir / "objects");
  std::vector<ObjectSample> existing;
  existing.reserve(entries_.size());
  for (const auto& e : entries_) existing.push_back(*e);
  append_samples(dir, manifest, existing);
  write_manifest(dir, manifest);
  dir_ = dir;
  manifest_ = std::move(manifest);
}

void PseudoDatabase::add_ground_truth(std::vector<ObjectSample> samples) {
  for (ObjectSample& s : samples) {
    if (std::find(categories_.begin(), categories_.end(), s.category) == categories_.end()) {
      throw ValidationError("unknown category '" + s.category + "'");
    }
    if (s.source != Source::GroundTruth || s.score) {
      throw ValidationError("ground-truth samples must be tagged ground-truth and carry no score");
    }
    staged_.push_back(std::make_shared<const ObjectSample>(std::move(s)));
  }
}

AdmitResult PseudoDatabase::admit(std::span<const ObjectSample> candidates, int epoch,
                                  const HardnessSchedule& schedule) {
  if (epoch < 0 || epoch > schedule.total_epochs) {
    throw ContractError("epoch " + std::to_string(epoch) + " outside the schedule");
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const ObjectSample& c = candidates[i];
    if (!c.score) throw ValidationError("candidate " + std::to_string(i) + " has no score");
    if (c.source != Source::Pseudo) throw ValidationError("candidate " + std::to_string(i) + " is not a pseudo entry");
    if (std::find(categories_.begin(), categories_.end(), c.category) == categories_.end()) {
      throw ValidationError("candidate " + std::to_string(i) + " has unknown category '" + c.category + "'");
    }
  }
  AdmitResult result;
  if (schedule.stage(epoch) == Stage::Easy) {
    result.rejected = candidates.size();
    return result;
  }
  const double tau = schedule.threshold(epoch);
  for (const ObjectSample& c : candidates) {
    if (*c.score >= tau) {
      ObjectSample s = c;
      s.epoch_added = epoch;
      staged_.push_back(std::make_shared<const ObjectSample>(std::move(s)));
      ++result.accepted;
    } else {
      ++result.rejected;
    }
  }
  return result;
}

void PseudoDatabase::commit() {
  if (staged_.empty()) return;
  if (dir_) {
    DatabaseLock lock(*dir_);
    std::vector<ObjectSample> fresh;
    fresh.reserve(staged_.size());
    for (const auto& e : staged_) fresh.push_back(*e);
    append_samples(*dir_, *manifest_, fresh);
    write_manifest(*dir_, *manifest_);
  }
  entries_.insert(entries_.end(), staged_.begin(), staged_.end());
  staged_.clear();
  snapshot_ = std::make_shared<const DatabaseSnapshot>(categories_, entries_);
}

}  // namespace hass
