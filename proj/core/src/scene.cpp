#include "autolabel/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "autolabel/detail/binary.hpp"
#include "autolabel/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace autolabel {

namespace {

std::string frame_name(int frame_index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", frame_index);
  return buf;
}

json parse_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return j;
}

double get_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number())
    throw DataError(where + ": missing or non-numeric field '" + key + "'");
  return j[key].get<double>();
}

bool rotation_ok(const Mat3& r) {
  const Mat3 err = r.transpose() * r - Mat3::Identity();
  return err.cwiseAbs().maxCoeff() < 1e-6 && r.determinant() > 0.0;
}

}  // namespace

const MaskRecord* MaskImage::record_for(uint16_t k) const {
  auto it = std::lower_bound(
      records.begin(), records.end(), k,
      [](const MaskRecord& r, uint16_t key) { return r.k < key; });
  if (it == records.end() || it->k != k) return nullptr;
  return &*it;
}

double SceneBundle::panorama_width() const {
  double w = 0.0;
  for (const auto& v : views) w += v.width;
  return w;
}

double SceneBundle::panorama_offset(int view_index) const {
  double w = 0.0;
  for (int i = 0; i < view_index; ++i) w += views[i].width;
  return w;
}

std::optional<uint16_t> SceneBundle::semantic_id(
    const std::string& category) const {
  for (size_t i = 0; i < vocabulary.size(); ++i)
    if (vocabulary[i] == category) return static_cast<uint16_t>(i);
  return std::nullopt;
}

const std::string& SceneBundle::category_of(uint16_t semantic) const {
  return vocabulary.at(semantic);
}

std::vector<Diagnostic> validate_bundle(const SceneBundle& b) {
  std::vector<Diagnostic> out;
  auto bad = [&out](std::string where, std::string message) {
    out.push_back({std::move(where), std::move(message)});
  };

  if (b.vocabulary.empty()) bad("vocab", "empty vocabulary");
  {
    std::set<std::string> seen;
    for (const auto& c : b.vocabulary) {
      if (c.empty()) bad("vocab", "empty category name");
      if (c.find(',') != std::string::npos)
        bad("vocab", "category contains comma: " + c);
      if (!seen.insert(c).second) bad("vocab", "duplicate category: " + c);
    }
  }
  if (b.vocabulary.size() >= kNoSemantic)
    bad("vocab", "vocabulary too large for uint16 semantic ids");

  // Views: panoramic indices must form a permutation of 0..V-1 and the list
  // must be sorted by them.
  {
    std::set<int> pano;
    for (size_t i = 0; i < b.views.size(); ++i) {
      const auto& v = b.views[i];
      const std::string where = "calib/" + v.view_id;
      if (v.view_id.empty()) bad(where, "empty view_id");
      if (!rotation_ok(v.rotation)) bad(where, "rotation not orthonormal");
      if (!(v.fx > 0.0) || !(v.fy > 0.0)) bad(where, "focal lengths must be positive");
      if (v.width <= 0 || v.height <= 0) bad(where, "image size must be positive");
      if (!pano.insert(v.panoramic_index).second)
        bad(where, "duplicate panoramic_index");
      if (v.panoramic_index != static_cast<int>(i))
        bad(where, "views not sorted by panoramic_index");
    }
    if (!b.views.empty() &&
        (*pano.begin() != 0 ||
         *pano.rbegin() != static_cast<int>(b.views.size()) - 1))
      bad("calib", "panoramic indices do not cover 0..V-1");
  }

  if (b.poses.size() != b.frames.size())
    bad("poses", "pose count does not match frame count");
  for (size_t i = 0; i < b.frames.size(); ++i) {
    const auto& f = b.frames[i];
    const std::string where = "frames/" + frame_name(f.frame_index);
    if (i > 0) {
      if (f.frame_index <= b.frames[i - 1].frame_index)
        bad(where, "frame indices not strictly increasing");
      if (!(f.timestamp > b.frames[i - 1].timestamp))
        bad(where, "timestamps not strictly increasing");
    }
    if (!f.intensity.empty() && f.intensity.size() != f.points.size())
      bad(where, "intensity count does not match point count");
    for (const auto& p : f.points) {
      if (!p.allFinite()) {
        bad(where, "non-finite point coordinates");
        break;
      }
    }
    if (i < b.poses.size()) {
      const auto& pose = b.poses[i];
      if (pose.frame_index != f.frame_index)
        bad(where, "pose frame_index mismatch");
      if (!rotation_ok(pose.sensor_to_global.linear()))
        bad(where, "pose rotation not orthonormal");
    }
  }

  if (!b.masks.empty()) {
    if (b.masks.size() != b.views.size())
      bad("masks", "mask grid view count mismatch");
    Eigen::Index appearance_dim = -1;
    for (size_t vi = 0; vi < b.masks.size() && vi < b.views.size(); ++vi) {
      const auto& view = b.views[vi];
      if (b.masks[vi].size() != b.frames.size()) {
        bad("masks/" + view.view_id, "mask grid frame count mismatch");
        continue;
      }
      for (size_t fi = 0; fi < b.masks[vi].size(); ++fi) {
        const auto& m = b.masks[vi][fi];
        const std::string where =
            "masks/" + view.view_id + "/" + frame_name(b.frames[fi].frame_index);
        if (m.width != view.width || m.height != view.height)
          bad(where, "mask size does not match view calibration");
        if (m.index_map.size() !=
            static_cast<size_t>(m.width) * static_cast<size_t>(m.height)) {
          bad(where, "index map size mismatch");
          continue;
        }
        std::set<uint16_t> ks;
        std::set<int64_t> local_ids;
        for (const auto& r : m.records) {
          const std::string rwhere = where + " mask k=" + std::to_string(r.k);
          if (r.k == 0) bad(rwhere, "mask record k must be >= 1");
          if (!ks.insert(r.k).second) bad(rwhere, "duplicate mask k");
          if (!b.semantic_id(r.category))
            bad(rwhere, "category not in vocabulary: " + r.category);
          if (!(r.confidence >= 0.0 && r.confidence <= 1.0))
            bad(rwhere, "confidence outside [0, 1]");
          if (r.is_foreground()) {
            if (!local_ids.insert(r.local_id).second)
              bad(rwhere, "duplicate local_id in view/frame");
            if (r.appearance.size() == 0)
              bad(rwhere, "foreground mask lacks appearance feature");
          }
          if (r.appearance.size() > 0 &&
              std::abs(r.appearance.norm() - 1.0) > 1e-6)
            bad(rwhere, "appearance feature not unit norm");
          if (r.appearance.size() > 0) {
            if (appearance_dim < 0)
              appearance_dim = r.appearance.size();
            else if (r.appearance.size() != appearance_dim)
              bad(rwhere, "appearance feature dimension mismatch");
          }
        }
        for (size_t i = 1; i < m.records.size(); ++i)
          if (m.records[i].k < m.records[i - 1].k)
            bad(where, "mask records not sorted by k");
        // Pixel coverage: every nonzero map value has a record; box2d is the
        // tight bound of the mask pixels.
        std::map<uint16_t, std::array<int, 4>> bounds;  // k -> u0 v0 u1 v1
        for (int v = 0; v < m.height; ++v) {
          for (int u = 0; u < m.width; ++u) {
            const uint16_t k = m.index_map[static_cast<size_t>(v) * m.width + u];
            if (k == 0) continue;
            auto [it, fresh] = bounds.try_emplace(k, std::array<int, 4>{u, v, u, v});
            if (!fresh) {
              it->second[0] = std::min(it->second[0], u);
              it->second[1] = std::min(it->second[1], v);
              it->second[2] = std::max(it->second[2], u);
              it->second[3] = std::max(it->second[3], v);
            }
          }
        }
        for (const auto& [k, bb] : bounds) {
          const MaskRecord* r = m.record_for(k);
          if (!r) {
            bad(where, "index map references unknown mask k=" + std::to_string(k));
            continue;
          }
          const bool tight = std::abs(r->box2d[0] - bb[0]) < 1e-6 &&
                             std::abs(r->box2d[1] - bb[1]) < 1e-6 &&
                             std::abs(r->box2d[2] - (bb[2] + 1)) < 1e-6 &&
                             std::abs(r->box2d[3] - (bb[3] + 1)) < 1e-6;
          if (!tight)
            bad(where + " mask k=" + std::to_string(k),
                "box2d does not tightly bound mask pixels");
        }
        for (const auto& r : m.records)
          if (!bounds.count(r.k))
            bad(where + " mask k=" + std::to_string(r.k), "mask has no pixels");
      }
    }
  }

  return out;
}

namespace {

CameraCalibration parse_view(const json& jv, const std::string& where) {
  CameraCalibration c;
  if (!jv.contains("view_id") || !jv["view_id"].is_string())
    throw DataError(where + ": missing view_id");
  c.view_id = jv["view_id"].get<std::string>();
  c.panoramic_index =
      static_cast<int>(get_number(jv, "panoramic_index", where));
  if (!jv.contains("rotation") || !jv["rotation"].is_array() ||
      jv["rotation"].size() != 9)
    throw DataError(where + ": rotation must be 9 numbers (row-major)");
  for (int i = 0; i < 9; ++i)
    c.rotation(i / 3, i % 3) = jv["rotation"][i].get<double>();
  if (!jv.contains("translation") || !jv["translation"].is_array() ||
      jv["translation"].size() != 3)
    throw DataError(where + ": translation must be 3 numbers");
  for (int i = 0; i < 3; ++i) c.translation(i) = jv["translation"][i].get<double>();
  c.fx = get_number(jv, "fx", where);
  c.fy = get_number(jv, "fy", where);
  c.cx = get_number(jv, "cx", where);
  c.cy = get_number(jv, "cy", where);
  c.width = static_cast<int>(get_number(jv, "width", where));
  c.height = static_cast<int>(get_number(jv, "height", where));
  return c;
}

std::vector<PointCloudFrame> load_frames(const fs::path& dir) {
  const fs::path frames_dir = dir / "frames";
  if (!fs::is_directory(frames_dir))
    throw DataError("missing frames directory: " + frames_dir.string());
  std::vector<int> indices;
  for (const auto& e : fs::directory_iterator(frames_dir)) {
    if (e.path().extension() != ".bin") continue;
    const std::string stem = e.path().stem().string();
    if (stem.size() != 6 || !std::all_of(stem.begin(), stem.end(), ::isdigit))
      throw DataError("bad frame file name: " + e.path().string());
    indices.push_back(std::stoi(stem));
  }
  std::sort(indices.begin(), indices.end());
  std::vector<PointCloudFrame> frames;
  frames.reserve(indices.size());
  for (int idx : indices) {
    const fs::path p = frames_dir / (frame_name(idx) + ".bin");
    std::ifstream is(p, std::ios::binary);
    if (!is) throw DataError("cannot open " + p.string());
    is.seekg(0, std::ios::end);
    const auto size = static_cast<size_t>(is.tellg());
    is.seekg(0);
    if (size % 16 != 0)
      throw DataError(p.string() + ": size not a multiple of 16 bytes");
    const size_t n = size / 16;
    PointCloudFrame f;
    f.frame_index = idx;
    f.points.resize(n);
    f.intensity.resize(n);
    std::vector<float> raw(n * 4);
    detail::read_le_array(is, raw.data(), raw.size(), p.string());
    for (size_t i = 0; i < n; ++i) {
      f.points[i] = Vec3(raw[i * 4 + 0], raw[i * 4 + 1], raw[i * 4 + 2]);
      f.intensity[i] = raw[i * 4 + 3];
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

MaskImage load_mask_image(const fs::path& idx_path, const fs::path& json_path,
                          int view_index, int frame_index, int width,
                          int height) {
  MaskImage m;
  m.view_index = view_index;
  m.frame_index = frame_index;
  m.width = width;
  m.height = height;
  {
    std::ifstream is(idx_path, std::ios::binary);
    if (!is) throw DataError("cannot open " + idx_path.string());
    is.seekg(0, std::ios::end);
    const auto size = static_cast<size_t>(is.tellg());
    is.seekg(0);
    const size_t expect = static_cast<size_t>(width) * height * 2;
    if (size != expect)
      throw DataError(idx_path.string() + ": expected " +
                      std::to_string(expect) + " bytes, found " +
                      std::to_string(size));
    m.index_map.resize(static_cast<size_t>(width) * height);
    detail::read_le_array(is, m.index_map.data(), m.index_map.size(),
                          idx_path.string());
  }
  const json j = parse_json_file(json_path);
  if (!j.contains("masks") || !j["masks"].is_array())
    throw DataError(json_path.string() + ": missing masks array");
  for (const auto& jm : j["masks"]) {
    MaskRecord r;
    const std::string where = json_path.string();
    r.k = static_cast<uint16_t>(get_number(jm, "k", where));
    if (jm.contains("instance_id") && !jm["instance_id"].is_null())
      r.local_id = jm["instance_id"].get<int64_t>();
    if (!jm.contains("category") || !jm["category"].is_string())
      throw DataError(where + ": mask k=" + std::to_string(r.k) +
                      " missing category");
    r.category = jm["category"].get<std::string>();
    if (!jm.contains("box2d") || !jm["box2d"].is_array() ||
        jm["box2d"].size() != 4)
      throw DataError(where + ": mask k=" + std::to_string(r.k) +
                      " box2d must be 4 numbers");
    for (int i = 0; i < 4; ++i) r.box2d[i] = jm["box2d"][i].get<double>();
    r.confidence = jm.contains("confidence")
                       ? jm["confidence"].get<double>()
                       : 1.0;
    if (jm.contains("appearance") && jm["appearance"].is_array()) {
      r.appearance.resize(jm["appearance"].size());
      for (size_t i = 0; i < jm["appearance"].size(); ++i)
        r.appearance(static_cast<Eigen::Index>(i)) =
            jm["appearance"][i].get<double>();
      const double norm = r.appearance.norm();
      if (norm <= 0.0)
        throw DataError(where + ": mask k=" + std::to_string(r.k) +
                        " zero appearance feature");
      r.appearance /= norm;
    }
    if (r.is_foreground() && r.appearance.size() == 0)
      throw DataError(json_path.string() + ": mask k=" + std::to_string(r.k) +
                      " foreground mask lacks appearance");
    m.records.push_back(std::move(r));
  }
  std::sort(m.records.begin(), m.records.end(),
            [](const MaskRecord& a, const MaskRecord& b) { return a.k < b.k; });
  return m;
}

}  // namespace

SceneBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw DataError("bundle directory does not exist: " + dir.string());
  SceneBundle b;

  {  // vocab.txt
    const fs::path p = dir / "vocab.txt";
    std::ifstream is(p);
    if (!is) throw DataError("cannot open " + p.string());
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) b.vocabulary.push_back(line);
    }
  }

  {  // calib.json
    const fs::path p = dir / "calib.json";
    const json j = parse_json_file(p);
    if (!j.contains("views") || !j["views"].is_array() || j["views"].empty())
      throw DataError(p.string() + ": missing views array");
    for (const auto& jv : j["views"])
      b.views.push_back(parse_view(jv, p.string()));
    std::sort(b.views.begin(), b.views.end(),
              [](const CameraCalibration& a, const CameraCalibration& c) {
                return a.panoramic_index < c.panoramic_index;
              });
  }

  b.frames = load_frames(dir);

  {  // poses.jsonl
    const fs::path p = dir / "poses.jsonl";
    std::ifstream is(p);
    if (!is) throw DataError("cannot open " + p.string());
    std::string line;
    int lineno = 0;
    std::map<int, EgoPose> by_frame;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw DataError(p.string() + ":" + std::to_string(lineno) + ": " +
                        e.what());
      }
      const std::string where = p.string() + ":" + std::to_string(lineno);
      EgoPose pose;
      pose.frame_index = static_cast<int>(get_number(j, "frame_index", where));
      pose.timestamp = get_number(j, "timestamp", where);
      if (!j.contains("transform") || !j["transform"].is_array() ||
          j["transform"].size() != 16)
        throw DataError(where + ": transform must be 16 numbers (row-major)");
      Mat4 t;
      for (int i = 0; i < 16; ++i)
        t(i / 4, i % 4) = j["transform"][i].get<double>();
      if (t(3, 0) != 0.0 || t(3, 1) != 0.0 || t(3, 2) != 0.0 || t(3, 3) != 1.0)
        throw DataError(where + ": transform bottom row must be 0 0 0 1");
      if (!rotation_ok(t.topLeftCorner<3, 3>()))
        throw DataError(where + ": transform rotation not orthonormal");
      pose.sensor_to_global.linear() = t.topLeftCorner<3, 3>();
      pose.sensor_to_global.translation() = t.topRightCorner<3, 1>();
      if (!by_frame.emplace(pose.frame_index, pose).second)
        throw DataError(where + ": duplicate frame_index");
    }
    for (auto& f : b.frames) {
      auto it = by_frame.find(f.frame_index);
      if (it == by_frame.end())
        throw DataError(p.string() + ": no pose for frame " +
                        std::to_string(f.frame_index));
      f.timestamp = it->second.timestamp;
      b.poses.push_back(it->second);
    }
  }

  {  // masks/
    const fs::path masks_dir = dir / "masks";
    if (!fs::is_directory(masks_dir))
      throw DataError("missing masks directory: " + masks_dir.string());
    b.masks.resize(b.views.size());
    for (size_t vi = 0; vi < b.views.size(); ++vi) {
      const auto& view = b.views[vi];
      const fs::path vdir = masks_dir / view.view_id;
      if (!fs::is_directory(vdir))
        throw DataError("missing mask directory: " + vdir.string());
      for (const auto& f : b.frames) {
        const fs::path idx = vdir / (frame_name(f.frame_index) + ".idx");
        const fs::path meta = vdir / (frame_name(f.frame_index) + ".json");
        b.masks[vi].push_back(load_mask_image(idx, meta,
                                              static_cast<int>(vi),
                                              f.frame_index, view.width,
                                              view.height));
      }
    }
  }

  const auto diagnostics = validate_bundle(b);
  if (!diagnostics.empty()) {
    std::ostringstream msg;
    msg << dir.string() << ": bundle validation failed:";
    for (const auto& d : diagnostics)
      msg << "\n  [" << d.where << "] " << d.message;
    throw DataError(msg.str());
  }
  return b;
}

void save_bundle(const SceneBundle& b, const fs::path& dir) {
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "masks");

  {
    std::ofstream os(dir / "vocab.txt");
    for (const auto& c : b.vocabulary) os << c << "\n";
  }

  {
    json views = json::array();
    for (const auto& v : b.views) {
      json jv;
      jv["view_id"] = v.view_id;
      jv["panoramic_index"] = v.panoramic_index;
      json rot = json::array();
      for (int i = 0; i < 9; ++i) rot.push_back(v.rotation(i / 3, i % 3));
      jv["rotation"] = rot;
      jv["translation"] = {v.translation.x(), v.translation.y(),
                           v.translation.z()};
      jv["fx"] = v.fx;
      jv["fy"] = v.fy;
      jv["cx"] = v.cx;
      jv["cy"] = v.cy;
      jv["width"] = v.width;
      jv["height"] = v.height;
      views.push_back(jv);
    }
    json j;
    j["views"] = views;
    std::ofstream os(dir / "calib.json");
    os << j.dump(2) << "\n";
  }

  {
    std::ofstream os(dir / "poses.jsonl");
    for (const auto& p : b.poses) {
      json j;
      j["frame_index"] = p.frame_index;
      j["timestamp"] = p.timestamp;
      json t = json::array();
      Mat4 m = Mat4::Identity();
      m.topLeftCorner<3, 3>() = p.sensor_to_global.linear();
      m.topRightCorner<3, 1>() = p.sensor_to_global.translation();
      for (int i = 0; i < 16; ++i) t.push_back(m(i / 4, i % 4));
      j["transform"] = t;
      os << j.dump() << "\n";
    }
  }

  for (const auto& f : b.frames) {
    const fs::path p = dir / "frames" / (frame_name(f.frame_index) + ".bin");
    std::ofstream os(p, std::ios::binary);
    std::vector<float> raw(f.points.size() * 4);
    for (size_t i = 0; i < f.points.size(); ++i) {
      raw[i * 4 + 0] = static_cast<float>(f.points[i].x());
      raw[i * 4 + 1] = static_cast<float>(f.points[i].y());
      raw[i * 4 + 2] = static_cast<float>(f.points[i].z());
      raw[i * 4 + 3] = f.intensity.empty() ? 0.0f : f.intensity[i];
    }
    detail::write_le_array(os, raw.data(), raw.size());
  }

  for (size_t vi = 0; vi < b.views.size(); ++vi) {
    const fs::path vdir = dir / "masks" / b.views[vi].view_id;
    fs::create_directories(vdir);
    for (size_t fi = 0; fi < b.frames.size(); ++fi) {
      const MaskImage& m = b.masks[vi][fi];
      const std::string name = frame_name(b.frames[fi].frame_index);
      {
        std::ofstream os(vdir / (name + ".idx"), std::ios::binary);
        detail::write_le_array(os, m.index_map.data(), m.index_map.size());
      }
      json masks = json::array();
      for (const auto& r : m.records) {
        json jm;
        jm["k"] = r.k;
        if (r.is_foreground()) jm["instance_id"] = r.local_id;
        jm["category"] = r.category;
        jm["box2d"] = {r.box2d[0], r.box2d[1], r.box2d[2], r.box2d[3]};
        jm["confidence"] = r.confidence;
        if (r.appearance.size() > 0) {
          json app = json::array();
          for (Eigen::Index i = 0; i < r.appearance.size(); ++i)
            app.push_back(static_cast<float>(r.appearance(i)));
          jm["appearance"] = app;
        }
        masks.push_back(jm);
      }
      json j;
      j["masks"] = masks;
      std::ofstream os(vdir / (name + ".json"));
      os << j.dump() << "\n";
    }
  }
}

}  // namespace autolabel
