#include "seedgrow/scene_io.hpp"

#include "seedgrow/errors.hpp"
#include "seedgrow/png16.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace seedgrow {

using nlohmann::json;

namespace {

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  const auto at = in.tellg();
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError(path.string() + ": byte " + std::to_string(static_cast<long long>(at)) + ": truncated header");
  return v;
}

void expect_magic(std::istream& in, const fs::path& path, const char (&magic)[4]) {
  char m[4] = {};
  in.read(m, 4);
  if (!in || std::memcmp(m, magic, 4) != 0)
    throw ParseError(path.string() + ": byte 0: bad magic, expected '" + std::string(magic, 4) + "'");
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

template <typename T>
void read_payload(std::istream& in, const fs::path& path, T* dst, std::size_t count) {
  const auto at = static_cast<long long>(in.tellg());
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * sizeof(T)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(T))
    throw ParseError(path.string() + ": byte " + std::to_string(at + in.gcount()) + ": truncated payload");
}

void expect_eof(std::istream& in, const fs::path& path) {
  const auto at = static_cast<long long>(in.tellg());
  if (in.peek() != std::char_traits<char>::eof())
    throw ParseError(path.string() + ": byte " + std::to_string(at) + ": trailing data");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

// ---- cameras ----------------------------------------------------------------

json cameras_to_json(const std::vector<CameraView>& views) {
  json arr = json::array();
  for (const auto& v : views) {
    std::vector<double> K(9), T(16);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) K[static_cast<std::size_t>(r * 3 + c)] = v.intrinsics(r, c);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) T[static_cast<std::size_t>(r * 4 + c)] = v.pose(r, c);
    arr.push_back({{"view_id", v.view_id}, {"width", v.width}, {"height", v.height}, {"K", K}, {"T", T}});
  }
  return arr;
}

std::vector<CameraView> cameras_from_json(const json& j, const std::string& origin) {
  if (!j.is_array()) throw ParseError(origin + ": expected a JSON array of views");
  std::vector<CameraView> views;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto& e = j[k];
    const std::string at = origin + ": view entry " + std::to_string(k);
    try {
      CameraView v;
      v.view_id = e.at("view_id").get<std::string>();
      v.width = e.at("width").get<int>();
      v.height = e.at("height").get<int>();
      const auto K = e.at("K").get<std::vector<double>>();
      const auto T = e.at("T").get<std::vector<double>>();
      if (K.size() != 9) throw ParseError(at + ": K must have 9 entries");
      if (T.size() != 16) throw ParseError(at + ": T must have 16 entries");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) v.intrinsics(r, c) = K[static_cast<std::size_t>(r * 3 + c)];
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) v.pose(r, c) = T[static_cast<std::size_t>(r * 4 + c)];
      views.push_back(std::move(v));
    } catch (const json::exception& ex) {
      throw ParseError(at + ": " + ex.what());
    }
  }
  for (const auto& v : views) {
    try {
      v.validate();
    } catch (const ValidationError& ex) {
      throw ValidationError(origin + ": " + ex.what());
    }
  }
  return views;
}

std::vector<CameraView> read_cameras(const fs::path& path) {
  return cameras_from_json(read_json_file(path), path.string());
}

void write_cameras(const fs::path& path, const std::vector<CameraView>& views) {
  write_json_file(path, cameras_to_json(views));
}

// ---- label arrays -----------------------------------------------------------

std::vector<std::int32_t> read_label_array(const fs::path& path, const char (&magic)[4]) {
  auto in = open_in(path);
  expect_magic(in, path, magic);
  const auto version = get<std::uint32_t>(in, path);
  if (version != 1) throw ParseError(path.string() + ": byte 4: unsupported version " + std::to_string(version));
  const auto n = get<std::uint64_t>(in, path);
  if (n > (std::uint64_t{1} << 33)) throw ParseError(path.string() + ": byte 8: implausible count");
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  read_payload(in, path, labels.data(), labels.size());
  expect_eof(in, path);
  return labels;
}

void write_label_array(const fs::path& path, const char (&magic)[4], std::span<const std::int32_t> labels) {
  auto out = open_out(path);
  out.write(magic, 4);
  put<std::uint32_t>(out, 1);
  put<std::uint64_t>(out, labels.size());
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size() * 4));
  if (!out) throw IoError("write failed: " + path.string());
}

SuperpointPartition read_superpoints(const fs::path& path) {
  auto labels = read_label_array(path, kSuperpointMagic);
  try {
    return SuperpointPartition::from_labels(std::move(labels));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_superpoints(const fs::path& path, const SuperpointPartition& partition) {
  write_label_array(path, kSuperpointMagic, partition.labels());
}

// ---- features ---------------------------------------------------------------

FeatureTable read_features(const fs::path& path) {
  static constexpr char magic[4] = {'F', 'T', '3', 'D'};
  auto in = open_in(path);
  expect_magic(in, path, magic);
  FeatureTable t;
  t.rows = static_cast<std::size_t>(get<std::uint64_t>(in, path));
  t.dim = static_cast<std::size_t>(get<std::uint64_t>(in, path));
  if (t.dim == 0 || t.rows > (std::size_t{1} << 28) || t.dim > (std::size_t{1} << 16))
    throw ParseError(path.string() + ": byte 4: implausible table shape");
  t.values.resize(t.rows * t.dim);
  read_payload(in, path, t.values.data(), t.values.size());
  expect_eof(in, path);
  try {
    t.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return t;
}

void write_features(const fs::path& path, const FeatureTable& table) {
  auto out = open_out(path);
  out.write("FT3D", 4);
  put<std::uint64_t>(out, table.rows);
  put<std::uint64_t>(out, table.dim);
  out.write(reinterpret_cast<const char*>(table.values.data()),
            static_cast<std::streamsize>(table.values.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

// ---- masks ------------------------------------------------------------------

MaskId default_mask_id(std::size_t view_ordinal, std::uint16_t label) {
  return static_cast<MaskId>((view_ordinal << 16) | label);
}

namespace {

std::vector<std::uint32_t> encode_runs(const std::vector<std::uint8_t>& px) {
  std::vector<std::uint32_t> runs;
  std::size_t k = 0;
  while (k < px.size()) {
    if (!px[k]) {
      ++k;
      continue;
    }
    const std::size_t start = k;
    while (k < px.size() && px[k]) ++k;
    runs.push_back(static_cast<std::uint32_t>(start));
    runs.push_back(static_cast<std::uint32_t>(k - start));
  }
  return runs;
}

}  // namespace

MaskSet read_masks(const fs::path& dir, const std::vector<CameraView>& views) {
  MaskSet masks;
  std::set<MaskId> seen;
  for (std::size_t o = 0; o < views.size(); ++o) {
    const auto& view = views[o];
    const fs::path png_path = dir / (view.view_id + ".png");
    const fs::path side_path = dir / (view.view_id + ".masks.json");
    if (!fs::exists(png_path)) continue;
    const LabelRaster raster = read_png16(png_path);
    if (raster.width != view.width || raster.height != view.height)
      throw ValidationError(png_path.string() + ": raster " + std::to_string(raster.width) + "x" +
                            std::to_string(raster.height) + " does not match view " + view.view_id + " (" +
                            std::to_string(view.width) + "x" + std::to_string(view.height) + ")");
    const std::size_t npx = raster.values.size();

    struct Entry {
      std::uint16_t label = 0;
      MaskId id = 0;
      std::vector<std::uint32_t> runs;
    };
    std::vector<Entry> entries;
    if (fs::exists(side_path)) {
      const json j = read_json_file(side_path);
      try {
        for (const auto& e : j.at("masks")) {
          Entry en;
          en.id = e.at("mask_id").get<MaskId>();
          en.label = e.value("label", std::uint16_t{0});
          if (e.contains("rle")) en.runs = e.at("rle").get<std::vector<std::uint32_t>>();
          entries.push_back(std::move(en));
        }
      } catch (const json::exception& ex) {
        throw ParseError(side_path.string() + ": " + ex.what());
      }
    } else {
      std::set<std::uint16_t> labels(raster.values.begin(), raster.values.end());
      labels.erase(0);
      for (auto l : labels) entries.push_back({l, default_mask_id(o, l), {}});
    }

    for (const auto& en : entries) {
      Mask2D m;
      m.view_id = view.view_id;
      m.mask_id = en.id;
      m.width = view.width;
      m.height = view.height;
      m.pixels.assign(npx, 0);
      if (!en.runs.empty()) {
        if (en.runs.size() % 2 != 0) throw ParseError(side_path.string() + ": odd-length rle for mask " + std::to_string(en.id));
        for (std::size_t r = 0; r < en.runs.size(); r += 2) {
          const std::size_t start = en.runs[r], len = en.runs[r + 1];
          if (start + len > npx) throw ValidationError(side_path.string() + ": rle exceeds raster for mask " + std::to_string(en.id));
          std::fill_n(m.pixels.begin() + static_cast<std::ptrdiff_t>(start), len, std::uint8_t{1});
        }
      } else {
        for (std::size_t k = 0; k < npx; ++k) m.pixels[k] = raster.values[k] == en.label ? 1 : 0;
      }
      if (m.area() == 0) throw ValidationError(png_path.string() + ": mask " + std::to_string(en.id) + " is empty");
      if (!seen.insert(m.mask_id).second)
        throw ValidationError(png_path.string() + ": duplicate mask id " + std::to_string(m.mask_id));
      masks.push_back(std::move(m));
    }
  }
  return masks;
}

void write_masks(const fs::path& dir, const MaskSet& masks, const std::vector<CameraView>& views) {
  fs::create_directories(dir);
  for (const auto& view : views) {
    std::vector<const Mask2D*> mine;
    for (const auto& m : masks)
      if (m.view_id == view.view_id) mine.push_back(&m);
    if (mine.size() > 0xffff) throw ValidationError("view " + view.view_id + " has more than 65535 masks");
    LabelRaster raster{view.width, view.height,
                       std::vector<std::uint16_t>(static_cast<std::size_t>(view.width) * view.height, 0)};
    bool overlap = false;
    for (std::size_t k = 0; k < mine.size(); ++k) {
      const auto& m = *mine[k];
      if (m.width != view.width || m.height != view.height)
        throw ValidationError("mask " + std::to_string(m.mask_id) + " does not match view " + view.view_id);
      for (std::size_t p = 0; p < m.pixels.size(); ++p) {
        if (!m.pixels[p]) continue;
        if (raster.values[p] != 0) overlap = true;
        raster.values[p] = static_cast<std::uint16_t>(k + 1);
      }
    }
    write_png16(dir / (view.view_id + ".png"), raster);
    json side;
    side["masks"] = json::array();
    for (std::size_t k = 0; k < mine.size(); ++k) {
      json e = {{"label", k + 1}, {"mask_id", mine[k]->mask_id}};
      if (overlap) e["rle"] = encode_runs(mine[k]->pixels);
      side["masks"].push_back(std::move(e));
    }
    write_json_file(dir / (view.view_id + ".masks.json"), side);
  }
}

// ---- instances --------------------------------------------------------------

fs::path manifest_path_for(const fs::path& labels_path) {
  fs::path p = labels_path;
  p.replace_extension(".json");
  return p;
}

std::vector<std::size_t> confidence_order(const ProposalSet& proposals) {
  std::vector<std::size_t> order(proposals.instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& inst = proposals.instances;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (inst[a].confidence != inst[b].confidence) return inst[a].confidence > inst[b].confidence;
    if (inst[a].points.size() != inst[b].points.size()) return inst[a].points.size() > inst[b].points.size();
    return inst[a].points.front() < inst[b].points.front();
  });
  return order;
}

std::vector<std::int32_t> resolve_instance_labels(const ProposalSet& proposals, std::size_t point_count,
                                                  std::size_t* contested) {
  std::vector<std::int32_t> labels(point_count, -1);
  std::vector<std::uint8_t> claims(point_count, 0);
  const auto order = confidence_order(proposals);
  for (std::size_t id = 0; id < order.size(); ++id) {
    for (PointIndex p : proposals.instances[order[id]].points) {
      if (p >= point_count) throw ValidationError("instance point index out of range");
      if (labels[p] < 0) labels[p] = static_cast<std::int32_t>(id);
      if (claims[p] < 2) ++claims[p];
    }
  }
  if (contested) *contested = static_cast<std::size_t>(std::count(claims.begin(), claims.end(), 2));
  return labels;
}

InstanceWriteSummary write_instances(const fs::path& labels_path, const ProposalSet& proposals,
                                     std::size_t point_count, bool exact_sets) {
  for (const auto& inst : proposals.instances) inst.validate(point_count);
  InstanceWriteSummary summary;
  summary.labels = resolve_instance_labels(proposals, point_count, &summary.contested_points);
  const auto order = confidence_order(proposals);
  std::vector<std::size_t> assigned(order.size(), 0);
  for (auto l : summary.labels)
    if (l >= 0) ++assigned[static_cast<std::size_t>(l)];

  json manifest;
  manifest["point_count"] = point_count;
  manifest["view_count"] = proposals.view_count;
  manifest["contested_points"] = summary.contested_points;
  manifest["instances"] = json::array();
  for (std::size_t id = 0; id < order.size(); ++id) {
    const auto& inst = proposals.instances[order[id]];
    json e = {{"id", id},
              {"confidence", inst.confidence},
              {"size", inst.points.size()},
              {"assigned", assigned[id]},
              {"provenance",
               {{"stage", to_string(inst.provenance.stage)},
                {"views", inst.provenance.views},
                {"masks", inst.provenance.masks}}}};
    if (exact_sets) e["points"] = inst.points;
    manifest["instances"].push_back(std::move(e));
  }
  write_label_array(labels_path, kInstanceMagic, summary.labels);
  write_json_file(manifest_path_for(labels_path), manifest);
  return summary;
}

ProposalSet read_instances(const fs::path& labels_path) {
  const auto labels = read_label_array(labels_path, kInstanceMagic);
  const fs::path mpath = manifest_path_for(labels_path);
  const json manifest = read_json_file(mpath);
  ProposalSet out;
  try {
    out.view_count = manifest.value("view_count", std::size_t{1});
    const auto& arr = manifest.at("instances");
    std::vector<std::vector<PointIndex>> from_labels(arr.size());
    for (std::size_t p = 0; p < labels.size(); ++p) {
      const auto l = labels[p];
      if (l < -1 || l >= static_cast<std::int32_t>(arr.size()))
        throw ValidationError(labels_path.string() + ": label " + std::to_string(l) + " at point " +
                              std::to_string(p) + " has no manifest entry");
      if (l >= 0) from_labels[static_cast<std::size_t>(l)].push_back(static_cast<PointIndex>(p));
    }
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const auto& e = arr[k];
      if (e.at("id").get<std::size_t>() != k) throw ValidationError(mpath.string() + ": ids must be 0..K-1 in order");
      PointSetInstance inst;
      inst.confidence = e.at("confidence").get<double>();
      const auto& prov = e.at("provenance");
      inst.provenance.stage = stage_from_string(prov.at("stage").get<std::string>());
      inst.provenance.views = prov.at("views").get<std::vector<std::string>>();
      inst.provenance.masks = prov.at("masks").get<std::vector<MaskId>>();
      inst.points = e.contains("points") ? e.at("points").get<std::vector<PointIndex>>() : std::move(from_labels[k]);
      if (inst.points.empty()) continue;  // fully claimed by higher-confidence instances
      inst.validate(labels.size());
      out.instances.push_back(std::move(inst));
    }
  } catch (const json::exception& ex) {
    throw ParseError(mpath.string() + ": " + ex.what());
  }
  return out;
}

// ---- scenes -----------------------------------------------------------------

ScenePaths ScenePaths::in_directory(const fs::path& dir) {
  return {dir / "points.ply", dir / "cameras.json", dir / "superpoints.sp3d", dir / "features.ft3d", dir / "masks"};
}

SceneBundle load_scene(const ScenePaths& paths) {
  SceneBundle scene;
  scene.cloud = read_ply(paths.cloud);
  scene.views = read_cameras(paths.cameras);
  scene.superpoints = read_superpoints(paths.superpoints);
  scene.features = read_features(paths.features);
  if (scene.superpoints.point_count() != scene.cloud.size())
    throw ValidationError(paths.superpoints.string() + ": N=" + std::to_string(scene.superpoints.point_count()) +
                          " but " + paths.cloud.string() + " has N=" + std::to_string(scene.cloud.size()));
  if (scene.features.rows != static_cast<std::size_t>(scene.superpoints.count()))
    throw ValidationError(paths.features.string() + ": U=" + std::to_string(scene.features.rows) + " but " +
                          paths.superpoints.string() + " has U=" + std::to_string(scene.superpoints.count()));
  scene.validate();
  return scene;
}

void save_scene(const ScenePaths& paths, const SceneBundle& scene) {
  for (const auto* p : {&paths.cloud, &paths.cameras, &paths.superpoints, &paths.features})
    if (p->has_parent_path()) fs::create_directories(p->parent_path());
  write_ply(paths.cloud, scene.cloud);
  write_cameras(paths.cameras, scene.views);
  write_superpoints(paths.superpoints, scene.superpoints);
  write_features(paths.features, scene.features);
}

// ---- depth dumps ------------------------------------------------------------

void write_depth_dump(const fs::path& path, int width, int height, std::span<const double> depth) {
  auto out = open_out(path);
  out.write("DB3D", 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(height));
  for (double d : depth) put<float>(out, static_cast<float>(d));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<float> read_depth_dump(const fs::path& path, int& width, int& height) {
  static constexpr char magic[4] = {'D', 'B', '3', 'D'};
  auto in = open_in(path);
  expect_magic(in, path, magic);
  width = static_cast<int>(get<std::uint32_t>(in, path));
  height = static_cast<int>(get<std::uint32_t>(in, path));
  std::vector<float> v(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  read_payload(in, path, v.data(), v.size());
  expect_eof(in, path);
  return v;
}

}  // namespace seedgrow
