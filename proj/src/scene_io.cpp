#include "hass/scene_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include "hass/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hass {

std::string_view to_string(Source source) {
  return source == Source::GroundTruth ? "ground-truth" : "pseudo";
}

Source source_from_string(std::string_view text) {
  if (text == "ground-truth") return Source::GroundTruth;
  if (text == "pseudo") return Source::Pseudo;
  throw ValidationError("unknown source tag '" + std::string(text) + "'");
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("failed to format number");
  return std::string(buf, end);
}

namespace {

constexpr std::size_t kRecordBytes = 16;

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

void put_float(std::byte* dst, float f) {
  const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(f));
  std::memcpy(dst, &bits, 4);
}

float get_float(const std::byte* src) {
  std::uint32_t bits;
  std::memcpy(&bits, src, 4);
  return std::bit_cast<float>(to_little(bits));
}

std::vector<std::byte> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("failed reading " + path.string());
  }
  return bytes;
}

void write_file(const fs::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::as_bytes(std::span(text.data(), text.size())));
}

bool allowed(std::span<const std::string> categories, const std::string& name) {
  return categories.empty() || std::find(categories.begin(), categories.end(), name) != categories.end();
}

std::string box_json(const Box3D& b) {
  std::string out = "[";
  const double v[] = {b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw};
  for (int i = 0; i < 7; ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out + "]";
}

Box3D box_from_json(const json& j, std::vector<std::string>* warnings) {
  if (!j.is_array() || j.size() != 7) throw ValidationError("box must be an array of 7 numbers");
  double v[7];
  for (std::size_t i = 0; i < 7; ++i) {
    if (!j[i].is_number()) throw ValidationError("box must be an array of 7 numbers");
    v[i] = j[i].get<double>();
  }
  Box3D box{v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
  if (std::isfinite(box.yaw) && !(box.yaw > -kPi && box.yaw <= kPi)) {
    const double fixed = normalize_yaw(box.yaw);
    if (warnings) {
      warnings->push_back("yaw " + format_double(box.yaw) + " normalized to " + format_double(fixed));
    }
    box.yaw = fixed;
  }
  validate_box(box);
  return box;
}

std::optional<double> unit_interval(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_number()) throw ValidationError(std::string(key) + " must be a number");
  const double v = j.at(key).get<double>();
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ValidationError(std::string(key) + " " + format_double(v) + " is outside [0, 1]");
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::byte> encode_cloud(const PointCloud& cloud) {
  std::vector<std::byte> bytes(cloud.size() * kRecordBytes);
  std::byte* dst = bytes.data();
  for (const Point& p : cloud.points) {
    put_float(dst, p.x);
    put_float(dst + 4, p.y);
    put_float(dst + 8, p.z);
    put_float(dst + 12, p.intensity);
    dst += kRecordBytes;
  }
  return bytes;
}

PointCloud decode_cloud(std::span<const std::byte> bytes) {
  if (bytes.size() % kRecordBytes != 0) {
    throw FormatError("cloud size is not a multiple of 16 bytes",
                      bytes.size() - bytes.size() % kRecordBytes);
  }
  PointCloud cloud;
  cloud.points.resize(bytes.size() / kRecordBytes);
  const std::byte* src = bytes.data();
  for (Point& p : cloud.points) {
    p = {get_float(src), get_float(src + 4), get_float(src + 8), get_float(src + 12)};
    src += kRecordBytes;
  }
  validate_cloud(cloud);
  return cloud;
}

PointCloud read_cloud(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_cloud(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": cloud size is not a multiple of 16 bytes", e.offset());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_cloud(const PointCloud& cloud, const fs::path& path) {
  validate_cloud(cloud);
  write_file(path, encode_cloud(cloud));
}

// ---------------------------------------------------------------------------

std::string annotation_line(const Annotation& a) {
  std::string line = "{\"category\":" + json(a.category).dump() + ",\"box\":" + box_json(a.box);
  if (a.score) line += ",\"score\":" + format_double(*a.score);
  if (a.est_iou) line += ",\"est_iou\":" + format_double(*a.est_iou);
  return line + "}";
}

Annotation parse_annotation(const json& j, std::span<const std::string> categories,
                            std::vector<std::string>* warnings) {
  if (!j.is_object()) throw ValidationError("annotation must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "category" && key != "box" && key != "score" && key != "est_iou") {
      throw ValidationError("unknown annotation key '" + key + "'");
    }
  }
  if (!j.contains("category") || !j.at("category").is_string()) {
    throw ValidationError("annotation needs a string 'category'");
  }
  Annotation a;
  a.category = j.at("category").get<std::string>();
  if (!allowed(categories, a.category)) throw ValidationError("unknown category '" + a.category + "'");
  if (!j.contains("box")) throw ValidationError("annotation needs a 'box'");
  a.box = box_from_json(j.at("box"), warnings);
  a.score = unit_interval(j, "score");
  a.est_iou = unit_interval(j, "est_iou");
  return a;
}

SceneReadResult read_scene(const fs::path& path, std::span<const std::string> categories) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  SceneReadResult result;
  std::string line;
  std::uint64_t offset = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    const std::uint64_t line_offset = offset;
    offset += line.size() + 1;
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) + " is not valid JSON",
                        line_offset + (e.byte > 0 ? e.byte - 1 : 0));
    }
    try {
      if (!have_header) {
        if (!j.is_object() || !j.contains("scene_id") || !j.contains("cloud") ||
            !j.at("scene_id").is_string() || !j.at("cloud").is_string() || j.size() != 2) {
          throw ValidationError("header must be {\"scene_id\": string, \"cloud\": string}");
        }
        result.scene.id = j.at("scene_id").get<std::string>();
        const fs::path cloud = path.parent_path() / j.at("cloud").get<std::string>();
        result.scene.cloud = read_cloud(cloud);
        have_header = true;
      } else {
        result.scene.objects.push_back(parse_annotation(j, categories, &result.warnings));
      }
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw FormatError(path.string() + ": missing header line", 0);
  for (std::string& w : result.warnings) w = path.string() + ": " + w;
  return result;
}

void write_scene(const Scene& scene, const fs::path& path) {
  const fs::path cloud_name = path.stem().string() + ".bin";
  std::string text = "{\"scene_id\":" + json(scene.id).dump() + ",\"cloud\":" +
                     json(cloud_name.string()).dump() + "}\n";
  for (const Annotation& a : scene.objects) {
    validate_box(a.box);
    text += annotation_line(a) + "\n";
  }
  write_cloud(scene.cloud, path.parent_path() / cloud_name);
  write_text(path, text);
}

std::vector<fs::path> list_scene_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------------------

json DatabaseManifest::to_json() const {
  json entries_json = json::array();
  for (const ManifestEntry& e : entries) {
    json j = {{"id", e.id},
              {"category", e.category},
              {"box", {e.box.cx, e.box.cy, e.box.cz, e.box.length, e.box.width, e.box.height, e.box.yaw}},
              {"score", e.score ? json(*e.score) : json(nullptr)},
              {"source", std::string(hass::to_string(e.source))},
              {"epoch_added", e.epoch_added},
              {"source_scene", e.source_scene},
              {"blob", e.blob},
              {"point_count", e.point_count},
              {"empty", e.empty}};
    entries_json.push_back(std::move(j));
  }
  return {{"version", version}, {"categories", categories}, {"entries", std::move(entries_json)}};
}

DatabaseManifest DatabaseManifest::from_json(const json& j) {
  try {
    DatabaseManifest m;
    m.version = j.at("version").get<int>();
    if (m.version != kVersion) {
      throw ValidationError("unsupported manifest version " + std::to_string(m.version));
    }
    m.categories = j.at("categories").get<std::vector<std::string>>();
    for (const json& je : j.at("entries")) {
      ManifestEntry e;
      e.id = je.at("id").get<std::string>();
      e.category = je.at("category").get<std::string>();
      e.box = box_from_json(je.at("box"), nullptr);
      if (!je.at("score").is_null()) e.score = je.at("score").get<double>();
      e.source = source_from_string(je.at("source").get<std::string>());
      e.epoch_added = je.at("epoch_added").get<int>();
      e.source_scene = je.at("source_scene").get<std::string>();
      e.blob = je.at("blob").get<std::string>();
      e.point_count = je.at("point_count").get<std::size_t>();
      e.empty = je.at("empty").get<bool>();
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
}

DatabaseLock::DatabaseLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw IoError("database " + dir.string() + " is locked or not writable (" + path_.string() + ")");
  ::close(fd);
}

DatabaseLock::~DatabaseLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

void write_manifest(const fs::path& dir, const DatabaseManifest& manifest) {
  const fs::path tmp = dir / "manifest.json.tmp";
  write_text(tmp, manifest.to_json().dump(1) + "\n");
  std::error_code ec;
  fs::rename(tmp, dir / "manifest.json", ec);
  if (ec) throw IoError("cannot replace manifest in " + dir.string() + ": " + ec.message());
}

DatabaseManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": not valid JSON", e.byte);
  }
  DatabaseManifest m = DatabaseManifest::from_json(j);
  std::set<std::string> ids;
  for (const ManifestEntry& e : m.entries) {
    if (!ids.insert(e.id).second) throw ValidationError(path.string() + ": duplicate entry id " + e.id);
    const fs::path blob = dir / e.blob;
    std::error_code ec;
    const auto size = fs::file_size(blob, ec);
    if (ec) throw ValidationError(path.string() + ": missing blob " + e.blob);
    if (size != e.point_count * kRecordBytes) {
      throw ValidationError(path.string() + ": blob " + e.blob + " does not hold " +
                            std::to_string(e.point_count) + " points");
    }
  }
  return m;
}

void append_samples(const fs::path& dir, DatabaseManifest& manifest,
                    std::span<const ObjectSample> samples) {
  fs::create_directories(dir / "objects");
  for (const ObjectSample& s : samples) {
    char id[16];
    std::snprintf(id, sizeof id, "%06zu", manifest.entries.size());
    ManifestEntry e;
    e.id = id;
    e.category = s.category;
    e.box = s.box;
    e.score = s.score;
    e.source = s.source;
    e.epoch_added = s.epoch_added;
    e.source_scene = s.source_scene;
    e.blob = "objects/" + e.id + ".bin";
    e.point_count = s.points.size();
    e.empty = s.points.empty();
    write_cloud(s.points, dir / e.blob);
    manifest.entries.push_back(std::move(e));
  }
}

LoadedDatabase load_database(const fs::path& dir) {
  LoadedDatabase db;
  db.manifest = read_manifest(dir);
  db.samples.reserve(db.manifest.entries.size());
  for (const ManifestEntry& e : db.manifest.entries) {
    ObjectSample s;
    s.category = e.category;
    s.box = e.box;
    s.points = read_cloud(dir / e.blob);
    s.score = e.score;
    s.source = e.source;
    s.epoch_added = e.epoch_added;
    s.source_scene = e.source_scene;
    db.samples.push_back(std::move(s));
  }
  return db;
}

DatabaseManifest build_gt_database(std::span<const Scene> scenes, const fs::path& out_dir,
                                   std::span<const std::string> categories) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  DatabaseLock lock(out_dir);

  DatabaseManifest manifest;
  manifest.categories.assign(categories.begin(), categories.end());
  const bool derive = manifest.categories.empty();
  for (const Scene& scene : scenes) {
    for (const Annotation& a : scene.objects) {
      const bool known = std::find(manifest.categories.begin(), manifest.categories.end(),
                                   a.category) != manifest.categories.end();
      if (known) continue;
      if (!derive) throw ValidationError("scene " + scene.id + ": unknown category '" + a.category + "'");
      manifest.categories.push_back(a.category);
    }
  }

  std::vector<ObjectSample> samples;
  for (const std::string& category : manifest.categories) {
    for (const Scene& scene : scenes) {
      for (const Annotation& a : scene.objects) {
        if (a.category != category) continue;
        ObjectSample s;
        s.category = a.category;
        s.box = a.box;
        s.points = crop(scene.cloud, a.box).inside;
        s.source = Source::GroundTruth;
        s.epoch_added = 0;
        s.source_scene = scene.id;
        samples.push_back(std::move(s));
      }
    }
  }
  fs::remove_all(out_dir / "objects", ec);
  append_samples(out_dir, manifest, samples);
  write_manifest(out_dir, manifest);
  return manifest;
}

}  // namespace hass
