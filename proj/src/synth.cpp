#include "seedgrow/synth.hpp"

#include "seedgrow/config_json.hpp"
#include "seedgrow/errors.hpp"
#include "seedgrow/scene_io.hpp"

#include <Eigen/Geometry>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

namespace seedgrow {

using nlohmann::json;

void SynthConfig::validate() const {
  if (object_count < 1) throw ConfigError("synth: object_count must be positive");
  if (points_per_object < 1) throw ConfigError("synth: points_per_object must be positive");
  if (background_points < 0) throw ConfigError("synth: background_points must be >= 0");
  if (camera_count < 1) throw ConfigError("synth: camera_count must be positive");
  if (image_width < 1 || image_height < 1) throw ConfigError("synth: image size must be positive");
  if (image_width > 65535 || image_height > 65535) throw ConfigError("synth: image size too large");
  if (!(horizontal_fov_deg > 1.0 && horizontal_fov_deg < 179.0))
    throw ConfigError("synth: horizontal_fov_deg must lie in (1, 179)");
  if (feature_dim < 2) throw ConfigError("synth: feature_dim must be >= 2");
  if (!(room_size.x() >= 2.0 && room_size.y() >= 2.0 && room_size.z() >= 1.5))
    throw ConfigError("synth: room_size must be at least 2 x 2 x 1.5 m");
  if (!(object_clearance >= 0.0)) throw ConfigError("synth: object_clearance must be >= 0");
  const auto& c = corruption;
  if (!(c.merge_mask_probability >= 0.0 && c.merge_mask_probability <= 1.0))
    throw ConfigError("synth: merge_mask_probability must lie in [0, 1]");
  if (!(c.split_mask_probability >= 0.0 && c.split_mask_probability <= 1.0))
    throw ConfigError("synth: split_mask_probability must lie in [0, 1]");
  if (c.boundary_noise_px < 0) throw ConfigError("synth: boundary_noise_px must be >= 0");
  if (!(c.feature_noise_sigma >= 0.0)) throw ConfigError("synth: feature_noise_sigma must be >= 0");
  if (c.clutter_masks_per_view < 0) throw ConfigError("synth: clutter_masks_per_view must be >= 0");
  if (c.duplicate_appearance && object_count < 2)
    throw ConfigError("synth: duplicate_appearance needs at least 2 objects");
  overseg.validate();
  render.validate();
  if (render.strategy == VisibilityStrategy::naive)
    throw ConfigError("synth: rendering needs a depth buffer; use min_depth or occlusion_aware");
}

json SynthConfig::to_json() const {
  return {{"rng_seed", rng_seed},
          {"room_size", {room_size.x(), room_size.y(), room_size.z()}},
          {"object_count", object_count},
          {"points_per_object", points_per_object},
          {"background_points", background_points},
          {"camera_count", camera_count},
          {"image_width", image_width},
          {"image_height", image_height},
          {"horizontal_fov_deg", horizontal_fov_deg},
          {"feature_dim", feature_dim},
          {"object_clearance", object_clearance},
          {"clustered", clustered},
          {"corruption",
           {{"merge_mask_probability", corruption.merge_mask_probability},
            {"split_mask_probability", corruption.split_mask_probability},
            {"boundary_noise_px", corruption.boundary_noise_px},
            {"feature_noise_sigma", corruption.feature_noise_sigma},
            {"duplicate_appearance", corruption.duplicate_appearance},
            {"clutter_masks_per_view", corruption.clutter_masks_per_view}}},
          {"overseg", seedgrow::to_json(overseg)},
          {"render", seedgrow::to_json(render)}};
}

SynthConfig SynthConfig::from_json(const json& j) {
  reject_unknown_keys(j,
                      {"rng_seed", "room_size", "object_count", "points_per_object", "background_points",
                       "camera_count", "image_width", "image_height", "horizontal_fov_deg", "feature_dim",
                       "object_clearance", "clustered", "corruption", "overseg", "render"},
                      "synth");
  SynthConfig c;
  try {
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    if (j.contains("room_size")) {
      const auto r = j.at("room_size").get<std::vector<double>>();
      if (r.size() != 3) throw ConfigError("synth.room_size: expected 3 numbers");
      c.room_size = {r[0], r[1], r[2]};
    }
    c.object_count = j.value("object_count", c.object_count);
    c.points_per_object = j.value("points_per_object", c.points_per_object);
    c.background_points = j.value("background_points", c.background_points);
    c.camera_count = j.value("camera_count", c.camera_count);
    c.image_width = j.value("image_width", c.image_width);
    c.image_height = j.value("image_height", c.image_height);
    c.horizontal_fov_deg = j.value("horizontal_fov_deg", c.horizontal_fov_deg);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.object_clearance = j.value("object_clearance", c.object_clearance);
    c.clustered = j.value("clustered", c.clustered);
    if (j.contains("corruption")) {
      const auto& k = j.at("corruption");
      reject_unknown_keys(k,
                          {"merge_mask_probability", "split_mask_probability", "boundary_noise_px", "feature_noise_sigma",
                           "duplicate_appearance", "clutter_masks_per_view"},
                          "synth.corruption");
      auto& o = c.corruption;
      o.merge_mask_probability = k.value("merge_mask_probability", o.merge_mask_probability);
      o.split_mask_probability = k.value("split_mask_probability", o.split_mask_probability);
      o.boundary_noise_px = k.value("boundary_noise_px", o.boundary_noise_px);
      o.feature_noise_sigma = k.value("feature_noise_sigma", o.feature_noise_sigma);
      o.duplicate_appearance = k.value("duplicate_appearance", o.duplicate_appearance);
      o.clutter_masks_per_view = k.value("clutter_masks_per_view", o.clutter_masks_per_view);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  if (j.contains("overseg")) from_json_into(j.at("overseg"), c.overseg);
  if (j.contains("render")) from_json_into(j.at("render"), c.render);
  return c;
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

enum class Shape { box, cylinder, dome };

struct Placed {
  Shape shape = Shape::box;
  Eigen::Vector2d center{0, 0};
  double base = 0.0;     // z of the lowest surface point
  double a = 0.0, b = 0.0;  // box half extents, or radius in a
  double height = 0.0;
  double yaw = 0.0;

  double footprint() const { return shape == Shape::box ? std::hypot(a, b) : a; }
  double area() const {
    const double pi = std::numbers::pi;
    switch (shape) {
      case Shape::box: return 4 * a * b + 4 * (a + b) * height;
      case Shape::cylinder: return pi * a * a + 2 * pi * a * height;
      case Shape::dome: return 2 * pi * a * height;
    }
    return 0.0;
  }
};

Placed random_shape(Rng& rng) {
  Placed p;
  p.shape = static_cast<Shape>(std::uniform_int_distribution<int>(0, 2)(rng));
  switch (p.shape) {
    case Shape::box:
      p.a = uniform(rng, 0.2, 0.34);
      p.b = uniform(rng, 0.2, 0.34);
      p.height = uniform(rng, 0.15, 0.3);
      p.yaw = uniform(rng, 0.0, std::numbers::pi);
      break;
    case Shape::cylinder:
      p.a = uniform(rng, 0.22, 0.38);
      p.height = uniform(rng, 0.15, 0.3);
      break;
    case Shape::dome:
      p.a = uniform(rng, 0.22, 0.38);
      p.height = 1.3 * p.a;
      break;
  }
  return p;
}

// Uniform surface sample. Boxes have no bottom face, cylinders a top cap only,
// domes are the sphere above 0.3 r below the equator.
Eigen::Vector3f sample_surface(const Placed& p, Rng& rng) {
  const double pi = std::numbers::pi;
  Eigen::Vector3d local = Eigen::Vector3d::Zero();
  switch (p.shape) {
    case Shape::box: {
      const double top = 4 * p.a * p.b, sx = 2 * p.b * p.height, sy = 2 * p.a * p.height;
      const double pick = uniform(rng, 0.0, top + 2 * sx + 2 * sy);
      const double z = uniform(rng, 0.0, p.height);
      if (pick < top) {
        local = {uniform(rng, -p.a, p.a), uniform(rng, -p.b, p.b), p.height};
      } else if (pick < top + 2 * sx) {
        local = {pick < top + sx ? -p.a : p.a, uniform(rng, -p.b, p.b), z};
      } else {
        local = {uniform(rng, -p.a, p.a), pick < top + 2 * sx + sy ? -p.b : p.b, z};
      }
      break;
    }
    case Shape::cylinder: {
      const double cap = pi * p.a * p.a, side = 2 * pi * p.a * p.height;
      const double phi = uniform(rng, 0.0, 2 * pi);
      if (uniform(rng, 0.0, cap + side) < cap) {
        const double r = p.a * std::sqrt(uniform(rng, 0.0, 1.0));
        local = {r * std::cos(phi), r * std::sin(phi), p.height};
      } else {
        local = {p.a * std::cos(phi), p.a * std::sin(phi), uniform(rng, 0.0, p.height)};
      }
      break;
    }
    case Shape::dome: {
      // Archimedes: height on a sphere is uniform for uniform area.
      const double zs = uniform(rng, -0.3, 1.0);
      const double phi = uniform(rng, 0.0, 2 * pi);
      const double rr = std::sqrt(std::max(0.0, 1.0 - zs * zs));
      local = {p.a * rr * std::cos(phi), p.a * rr * std::sin(phi), p.a * (zs + 0.3)};
      break;
    }
  }
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  return Eigen::Vector3d(p.center.x() + c * local.x() - s * local.y(), p.center.y() + s * local.x() + c * local.y(),
                         p.base + local.z())
      .cast<float>();
}

// Splits `total` in proportion to surface area (largest remainder) so every
// surface is sampled at one density; each object keeps at least one point.
std::vector<std::size_t> points_by_area(const std::vector<Placed>& objects, std::size_t total) {
  double sum = 0.0;
  for (const auto& p : objects) sum += p.area();
  std::vector<std::size_t> out(objects.size());
  std::vector<std::pair<double, std::size_t>> rest;
  std::size_t given = 0;
  for (std::size_t o = 0; o < objects.size(); ++o) {
    const double share = static_cast<double>(total) * objects[o].area() / sum;
    out[o] = static_cast<std::size_t>(share);
    given += out[o];
    rest.emplace_back(-(share - static_cast<double>(out[o])), o);
  }
  std::sort(rest.begin(), rest.end());
  for (std::size_t k = 0; given < total; ++k, ++given) ++out[rest[k % rest.size()].second];
  for (auto& c : out) c = std::max<std::size_t>(c, 1);
  return out;
}

// Floor plus four walls, area weighted. `face` is 0 for the floor, 1..4 for walls.
Eigen::Vector3f sample_shell(const Eigen::Vector3d& room, Rng& rng, int& face) {
  const double floor = room.x() * room.y(), wx = room.x() * room.z(), wy = room.y() * room.z();
  const double pick = uniform(rng, 0.0, floor + 2 * wx + 2 * wy);
  if (pick < floor) {
    face = 0;
    return Eigen::Vector3d(uniform(rng, 0, room.x()), uniform(rng, 0, room.y()), 0.0).cast<float>();
  }
  const double z = uniform(rng, 0.0, room.z());
  if (pick < floor + 2 * wx) {
    face = pick < floor + wx ? 1 : 2;
    return Eigen::Vector3d(uniform(rng, 0, room.x()), face == 1 ? 0.0 : room.y(), z).cast<float>();
  }
  face = pick < floor + 2 * wx + wy ? 3 : 4;
  return Eigen::Vector3d(face == 3 ? 0.0 : room.x(), uniform(rng, 0, room.y()), z).cast<float>();
}

// Over-segments each surface separately, so touching surfaces never share a
// segment (a mesh segmenter would split them at the crease).
SuperpointPartition segment_surfaces(const PointCloud& cloud, const std::vector<int>& surface,
                                     const OversegConfig& cfg) {
  std::map<int, std::vector<PointIndex>> groups;
  for (std::size_t i = 0; i < surface.size(); ++i) groups[surface[i]].push_back(static_cast<PointIndex>(i));
  std::vector<SuperpointId> labels(cloud.size(), -1);
  SuperpointId next = 0;
  for (const auto& [_, members] : groups) {
    if (members.size() <= static_cast<std::size_t>(cfg.k_neighbors)) {
      for (PointIndex i : members) labels[i] = next;
      ++next;
      continue;
    }
    PointCloud sub;
    sub.positions.reserve(members.size());
    for (PointIndex i : members) sub.positions.push_back(cloud.positions[i]);
    const auto part = oversegment(sub, cfg);
    for (std::size_t k = 0; k < members.size(); ++k) labels[members[k]] = next + part.label(static_cast<PointIndex>(k));
    next += part.count();
  }
  return SuperpointPartition(std::move(labels), next);
}

std::vector<float> random_unit(Rng& rng, int dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dim));
  double n = 0.0;
  do {
    n = 0.0;
    for (auto& x : v) {
      x = g(rng);
      n += x * x;
    }
  } while (!(n > 1e-12));
  n = std::sqrt(n);
  std::vector<float> out(v.size());
  for (std::size_t d = 0; d < v.size(); ++d) out[d] = static_cast<float>(v[d] / n);
  return out;
}

double orbit_radius(const Eigen::Vector3d& room) { return 0.5 * std::min(room.x(), room.y()) - 0.3; }

std::vector<CameraView> orbit_cameras(const SynthConfig& cfg, Rng& rng) {
  const Eigen::Vector3d& room = cfg.room_size;
  const Eigen::Vector2d mid(room.x() / 2, room.y() / 2);
  const double radius = orbit_radius(room);
  const double f = cfg.image_width / (2.0 * std::tan(cfg.horizontal_fov_deg * std::numbers::pi / 360.0));
  std::vector<CameraView> views;
  for (int k = 0; k < cfg.camera_count; ++k) {
    const double angle = 2 * std::numbers::pi * (k + uniform(rng, -0.2, 0.2)) / cfg.camera_count;
    const Eigen::Vector3d eye(mid.x() + radius * std::cos(angle), mid.y() + radius * std::sin(angle),
                              room.z() * uniform(rng, 0.72, 0.85));
    // Aim about 1.4 m ahead so the frame spans objects near the camera's feet
    // as well as those across the room.
    const Eigen::Vector2d inward = (mid - eye.head<2>()).normalized();
    const Eigen::Vector2d aim = eye.head<2>() + inward * uniform(rng, 1.3, 1.5) +
                                Eigen::Vector2d(-inward.y(), inward.x()) * uniform(rng, -0.3, 0.3);
    const Eigen::Vector3d target(aim.x(), aim.y(), 0.3);
    const Eigen::Vector3d fwd = (target - eye).normalized();
    const Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitZ()).normalized();
    const Eigen::Vector3d down = fwd.cross(right);
    CameraView v;
    v.view_id = fmt::format("view_{:03d}", k);
    v.width = cfg.image_width;
    v.height = cfg.image_height;
    v.intrinsics << f, 0, (cfg.image_width - 1) / 2.0, 0, f, (cfg.image_height - 1) / 2.0, 0, 0, 1;
    v.pose.setIdentity();
    v.pose.block<3, 1>(0, 0) = right;
    v.pose.block<3, 1>(0, 1) = down;
    v.pose.block<3, 1>(0, 2) = fwd;
    v.pose.block<3, 1>(0, 3) = eye;
    views.push_back(std::move(v));
  }
  return views;
}

// Random sequential placement inside the camera orbit; false when an object
// finds no spot.
bool place_objects(const SynthConfig& cfg, Rng& rng, std::vector<Placed>& out) {
  const Eigen::Vector3d& room = cfg.room_size;
  const Eigen::Vector2d mid(room.x() / 2, room.y() / 2);
  const double disc = orbit_radius(room) - 0.3;
  const double gap = cfg.object_clearance;
  out.clear();
  for (int o = 0; o < cfg.object_count; ++o) {
    Placed p = random_shape(rng);
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      const double r = p.footprint();
      const double reach = disc - r;
      if (reach <= 0) break;
      if (cfg.clustered && !out.empty()) {
        // Against a random placed object, at exactly the clearance.
        const Placed& q = out[std::uniform_int_distribution<std::size_t>(0, out.size() - 1)(rng)];
        const double phi = uniform(rng, 0.0, 2 * std::numbers::pi);
        p.center = q.center + (q.footprint() + r + gap) * Eigen::Vector2d(std::cos(phi), std::sin(phi));
        if ((p.center - mid).norm() > reach) continue;
      } else {
        const double rho = reach * std::sqrt(uniform(rng, 0.0, 1.0)), phi = uniform(rng, 0.0, 2 * std::numbers::pi);
        p.center = mid + Eigen::Vector2d(rho * std::cos(phi), rho * std::sin(phi));
      }
      if (p.center.x() - r < gap || p.center.x() + r > room.x() - gap || p.center.y() - r < gap ||
          p.center.y() + r > room.y() - gap)
        continue;
      placed = std::all_of(out.begin(), out.end(), [&](const Placed& q) {
        return (q.center - p.center).norm() >= q.footprint() + r + gap - 1e-9;
      });
    }
    if (!placed) return false;
    out.push_back(p);
  }
  return true;
}

// For every pixel, the lowest index among the points whose splat reaches it
// with a depth equal to the buffer value; -1 where nothing lands.
std::vector<std::int64_t> pixel_owners(const ViewMapping& m, int splat) {
  std::vector<std::int64_t> owner(static_cast<std::size_t>(m.width) * m.height, -1);
  for (std::size_t i = 0; i < m.point_count(); ++i) {
    if (!m.visible[i]) continue;
    const auto [pu, pv] = m.pixel[i];
    for (int dv = -splat; dv <= splat; ++dv)
      for (int du = -splat; du <= splat; ++du) {
        const int u = pu + du, v = pv + dv;
        if (u < 0 || v < 0 || u >= m.width || v >= m.height) continue;
        const auto p = static_cast<std::size_t>(v) * m.width + u;
        if (m.z[i] == m.depth[p] && owner[p] < 0) owner[p] = static_cast<std::int64_t>(i);
      }
  }
  return owner;
}

Rng view_rng(std::uint64_t seed, std::size_t view, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(view), static_cast<std::uint32_t>(salt)};
  return Rng(seq);
}

void union_into(Mask2D& dst, const Mask2D& src) {
  for (std::size_t p = 0; p < dst.pixels.size(); ++p) dst.pixels[p] |= src.pixels[p];
}

// Square structuring element of the given radius.
Mask2D morph(const Mask2D& m, int radius, bool dilate) {
  Mask2D out = m;
  for (int v = 0; v < m.height; ++v)
    for (int u = 0; u < m.width; ++u) {
      bool any = false, all = true;
      for (int dv = -radius; dv <= radius; ++dv)
        for (int du = -radius; du <= radius; ++du) {
          const int x = u + du, y = v + dv;
          const bool on = x >= 0 && y >= 0 && x < m.width && y < m.height && m.at(x, y);
          any = any || on;
          all = all && on;
        }
      out.pixels[static_cast<std::size_t>(v) * m.width + u] = (dilate ? any : all) ? 1 : 0;
    }
  return out;
}

// Over-segmentation: the two sides of a line through the mask centroid.
std::pair<Mask2D, Mask2D> cut_through_centroid(const Mask2D& m, double angle) {
  double su = 0.0, sv = 0.0, n = 0.0;
  for (int v = 0; v < m.height; ++v)
    for (int u = 0; u < m.width; ++u)
      if (m.at(u, v)) {
        su += u;
        sv += v;
        n += 1.0;
      }
  Mask2D a = m, b = m;
  if (n == 0.0) return {a, b};
  const double cu = su / n, cv = sv / n, nu = std::cos(angle), nv = std::sin(angle);
  for (int v = 0; v < m.height; ++v)
    for (int u = 0; u < m.width; ++u) {
      const auto p = static_cast<std::size_t>(v) * m.width + u;
      const bool side = (u - cu) * nu + (v - cv) * nv >= 0.0;
      (side ? b : a).pixels[p] = 0;
    }
  return {a, b};
}

}  // namespace

SynthScene generate_scene(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.rng_seed);
  constexpr int kSceneAttempts = 50;
  int placement_failures = 0;
  for (int attempt = 0; attempt < kSceneAttempts; ++attempt) {
    std::vector<Placed> objects;
    if (!place_objects(cfg, rng, objects)) {
      ++placement_failures;
      continue;
    }
    SynthScene s;
    auto& cloud = s.scene.cloud;
    auto& inst = s.gt.instance;
    std::vector<int> surface;  // object index, or object_count + shell face
    cloud.positions.reserve(static_cast<std::size_t>(cfg.object_count) * cfg.points_per_object + cfg.background_points);
    const auto counts = points_by_area(objects, static_cast<std::size_t>(cfg.object_count) * cfg.points_per_object);
    for (int o = 0; o < cfg.object_count; ++o)
      for (std::size_t k = 0; k < counts[static_cast<std::size_t>(o)]; ++k) {
        cloud.positions.push_back(sample_surface(objects[static_cast<std::size_t>(o)], rng));
        inst.push_back(o);
        surface.push_back(o);
      }
    for (int k = 0; k < cfg.background_points; ++k) {
      int face = 0;
      cloud.positions.push_back(sample_shell(cfg.room_size, rng, face));
      surface.push_back(cfg.object_count + face);
      inst.push_back(-1);
    }
    s.scene.views = orbit_cameras(cfg, rng);

    const auto coverage = object_view_coverage(s, cfg.render);
    const auto worst = std::min_element(coverage.begin(), coverage.end());
    if (*worst < 3) {
      spdlog::debug("synth attempt {}: object {} seen by {} views, retrying", attempt, worst - coverage.begin(),
                    *worst);
      continue;
    }

    for (int o = 0; o < cfg.object_count; ++o) s.gt.prototypes.push_back(random_unit(rng, cfg.feature_dim));
    s.gt.background_prototype = random_unit(rng, cfg.feature_dim);
    if (cfg.corruption.duplicate_appearance) {
      // The two objects farthest apart look identical.
      double far = -1.0;
      for (int a = 0; a < cfg.object_count; ++a)
        for (int b = a + 1; b < cfg.object_count; ++b) {
          const double d = (objects[static_cast<std::size_t>(a)].center - objects[static_cast<std::size_t>(b)].center).norm();
          if (d > far) {
            far = d;
            s.gt.look_alike = {a, b};
          }
        }
      s.gt.prototypes[static_cast<std::size_t>(s.gt.look_alike[1])] =
          s.gt.prototypes[static_cast<std::size_t>(s.gt.look_alike[0])];
    }

    s.scene.superpoints = segment_surfaces(cloud, surface, cfg.overseg);
    const auto U = static_cast<std::size_t>(s.scene.superpoints.count());
    auto& ft = s.scene.features;
    ft.rows = U;
    ft.dim = static_cast<std::size_t>(cfg.feature_dim);
    ft.values.assign(U * ft.dim, 0.0f);
    std::normal_distribution<double> noise(0.0, cfg.corruption.feature_noise_sigma);
    for (std::size_t u = 0; u < U; ++u) {
      std::map<std::int32_t, std::size_t> votes;
      for (PointIndex i : s.scene.superpoints.members(static_cast<SuperpointId>(u))) ++votes[inst[i]];
      std::int32_t major = votes.begin()->first;
      std::size_t best = 0;
      for (const auto& [label, count] : votes)
        if (count > best) {
          best = count;
          major = label;
        }
      const auto& proto = major < 0 ? s.gt.background_prototype : s.gt.prototypes[static_cast<std::size_t>(major)];
      std::vector<double> row(ft.dim);
      double n = 0.0;
      for (std::size_t d = 0; d < ft.dim; ++d) {
        row[d] = proto[d] + (cfg.corruption.feature_noise_sigma > 0 ? noise(rng) : 0.0);
        n += row[d] * row[d];
      }
      n = std::sqrt(n);
      auto out = ft.row(u);
      for (std::size_t d = 0; d < ft.dim; ++d) out[d] = static_cast<float>(n > 0 ? row[d] / n : proto[d]);
    }
    s.scene.validate();
    return s;
  }
  if (placement_failures == kSceneAttempts)
    throw PipelineError("synth", "could not place " + std::to_string(cfg.object_count) + " objects without overlap after " +
                                     std::to_string(kSceneAttempts) + " attempts; try a smaller object_count");
  throw PipelineError("synth", "could not make every object visible in 3 views after " +
                                   std::to_string(kSceneAttempts) + " attempts; try a smaller object_count or more cameras");
}

std::vector<int> object_view_coverage(const SynthScene& s, const MappingConfig& mapping) {
  int objects = 0;
  for (auto id : s.gt.instance) objects = std::max(objects, id + 1);
  std::vector<std::size_t> sizes(static_cast<std::size_t>(objects), 0);
  for (auto id : s.gt.instance)
    if (id >= 0) ++sizes[static_cast<std::size_t>(id)];
  std::vector<int> coverage(static_cast<std::size_t>(objects), 0);
  for (const auto& view : s.scene.views) {
    const auto m = build_mapping(s.scene.cloud, view, mapping);
    std::vector<std::size_t> seen(static_cast<std::size_t>(objects), 0);
    for (std::size_t i = 0; i < m.point_count(); ++i)
      if (m.visible[i] && s.gt.instance[i] >= 0) ++seen[static_cast<std::size_t>(s.gt.instance[i])];
    for (std::size_t o = 0; o < seen.size(); ++o)
      if (seen[o] * 20 >= sizes[o] && seen[o] > 0) ++coverage[o];
  }
  return coverage;
}

RenderedMasks render_masks(const SynthScene& s, const SynthConfig& cfg) {
  cfg.validate();
  const auto& views = s.scene.views;
  const auto& corr = cfg.corruption;
  struct PerView {
    MaskSet clean;
    std::vector<int> clean_object;
    MaskSet masks;
  };
  std::vector<PerView> per(views.size());

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(views.size()); ++t) {
    const auto vt = static_cast<std::size_t>(t);
    const auto& view = views[vt];
    const auto m = build_mapping(s.scene.cloud, view, cfg.render);
    const auto owner = pixel_owners(m, cfg.render.splat_radius);
    const std::size_t npx = owner.size();
    auto blank = [&] {
      Mask2D k;
      k.view_id = view.view_id;
      k.width = view.width;
      k.height = view.height;
      k.pixels.assign(npx, 0);
      return k;
    };

    std::map<int, Mask2D> by_object;
    for (std::size_t p = 0; p < npx; ++p) {
      if (owner[p] < 0) continue;
      const int o = s.gt.instance[static_cast<std::size_t>(owner[p])];
      if (o < 0) continue;
      auto it = by_object.find(o);
      if (it == by_object.end()) it = by_object.emplace(o, blank()).first;
      it->second.pixels[p] = 1;
    }
    PerView& out = per[vt];
    std::uint16_t label = 0;
    for (auto& [o, mask] : by_object) {
      mask.mask_id = default_mask_id(vt, ++label);
      out.clean.push_back(mask);
      out.clean_object.push_back(o);
    }

    Rng rng = view_rng(cfg.rng_seed, vt, 0x6d61736bULL);
    // Groups of objects whose masks end up as one.
    std::vector<std::vector<int>> groups;
    for (const auto& [o, _] : by_object) groups.push_back({o});
    auto group_of = [&](int o) {
      for (std::size_t g = 0; g < groups.size(); ++g)
        if (std::find(groups[g].begin(), groups[g].end(), o) != groups[g].end()) return g;
      return groups.size();
    };
    auto fuse = [&](std::size_t a, std::size_t b) {
      if (a > b) std::swap(a, b);
      groups[a].insert(groups[a].end(), groups[b].begin(), groups[b].end());
      groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(b));
    };
    if (corr.duplicate_appearance) {
      const auto a = group_of(s.gt.look_alike[0]), b = group_of(s.gt.look_alike[1]);
      if (a < groups.size() && b < groups.size() && a != b) fuse(a, b);
    }
    if (groups.size() >= 2 && uniform(rng, 0.0, 1.0) < corr.merge_mask_probability) {
      const auto a = std::uniform_int_distribution<std::size_t>(0, groups.size() - 1)(rng);
      auto b = std::uniform_int_distribution<std::size_t>(0, groups.size() - 2)(rng);
      if (b >= a) ++b;
      fuse(a, b);
    }

    std::vector<Mask2D> noisy;
    for (const auto& g : groups) {
      Mask2D k = blank();
      for (int o : g) union_into(k, by_object.at(o));
      std::vector<Mask2D> parts;
      if (corr.split_mask_probability > 0.0 && uniform(rng, 0.0, 1.0) < corr.split_mask_probability) {
        auto [a, b] = cut_through_centroid(k, uniform(rng, 0.0, std::numbers::pi));
        parts.push_back(std::move(a));
        parts.push_back(std::move(b));
      } else {
        parts.push_back(std::move(k));
      }
      for (auto& part : parts) {
        if (corr.boundary_noise_px > 0) {
          const int r = std::uniform_int_distribution<int>(1, corr.boundary_noise_px)(rng);
          part = morph(part, r, uniform(rng, 0.0, 1.0) < 0.5);
        }
        if (part.area() > 0) noisy.push_back(std::move(part));
      }
    }

    std::vector<std::size_t> background;
    for (std::size_t p = 0; p < npx; ++p)
      if (owner[p] >= 0 && s.gt.instance[static_cast<std::size_t>(owner[p])] < 0) background.push_back(p);
    for (int c = 0; c < corr.clutter_masks_per_view && !background.empty(); ++c) {
      const std::size_t seed = background[std::uniform_int_distribution<std::size_t>(0, background.size() - 1)(rng)];
      const int su = static_cast<int>(seed % static_cast<std::size_t>(view.width));
      const int sv = static_cast<int>(seed / static_cast<std::size_t>(view.width));
      const double rad = uniform(rng, 0.05, 0.12) * view.width;
      Mask2D k = blank();
      for (std::size_t p : background) {
        const double du = static_cast<double>(p % static_cast<std::size_t>(view.width)) - su;
        const double dv = static_cast<double>(p / static_cast<std::size_t>(view.width)) - sv;
        if (du * du + dv * dv <= rad * rad) k.pixels[p] = 1;
      }
      noisy.push_back(std::move(k));
    }

    label = 0;
    for (auto& k : noisy) {
      k.mask_id = default_mask_id(vt, ++label);
      out.masks.push_back(std::move(k));
    }
  }

  RenderedMasks r;
  for (auto& pv : per) {
    for (auto& k : pv.clean) r.clean.push_back(std::move(k));
    r.clean_object.insert(r.clean_object.end(), pv.clean_object.begin(), pv.clean_object.end());
    for (auto& k : pv.masks) r.masks.push_back(std::move(k));
  }
  return r;
}

PixelFeatureSource synthetic_pixel_features(const SynthScene& s, const SynthConfig& cfg, double noise_sigma,
                                            std::uint64_t rng_seed) {
  cfg.validate();
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth: pixel feature noise must be >= 0");
  const auto& views = s.scene.views;
  const std::size_t dim = s.gt.background_prototype.size();
  PixelFeatureSource src;
  src.maps.resize(views.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(views.size()); ++t) {
    const auto vt = static_cast<std::size_t>(t);
    const auto m = build_mapping(s.scene.cloud, views[vt], cfg.render);
    const auto owner = pixel_owners(m, cfg.render.splat_radius);
    Rng rng = view_rng(rng_seed, vt, 0x70697866ULL);
    std::normal_distribution<double> g(0.0, noise_sigma);
    auto& map = src.maps[vt];
    map.view_id = views[vt].view_id;
    map.width = views[vt].width;
    map.height = views[vt].height;
    map.dim = dim;
    map.values.assign(owner.size() * dim, 0.0f);
    for (std::size_t p = 0; p < owner.size(); ++p) {
      if (owner[p] < 0) continue;
      const int o = s.gt.instance[static_cast<std::size_t>(owner[p])];
      const auto& proto = o < 0 ? s.gt.background_prototype : s.gt.prototypes[static_cast<std::size_t>(o)];
      for (std::size_t d = 0; d < dim; ++d)
        map.values[p * dim + d] = static_cast<float>(proto[d] + (noise_sigma > 0 ? g(rng) : 0.0));
    }
  }
  return src;
}

void write_synth_scene(const std::filesystem::path& dir, const SynthScene& s, const SynthConfig& cfg,
                       const MaskSet& masks, const PixelFeatureSource* pixel_features) {
  std::filesystem::create_directories(dir);
  const auto paths = ScenePaths::in_directory(dir);
  save_scene(paths, s.scene);
  write_masks(paths.masks, masks, s.scene.views);
  write_label_array(dir / "gt.in3d", kInstanceMagic, s.gt.instance);
  {
    std::ofstream out(dir / "synth.json");
    json j = cfg.to_json();
    j["look_alike"] = s.gt.look_alike;
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + (dir / "synth.json").string());
  }
  if (pixel_features) {
    save_pixel_features(dir / "pixfeat", *pixel_features);
    std::vector<TextQuery> queries;
    for (std::size_t o = 0; o < s.gt.prototypes.size(); ++o)
      queries.push_back({"object_" + std::to_string(o),
                         std::vector<double>(s.gt.prototypes[o].begin(), s.gt.prototypes[o].end())});
    write_queries(dir / "queries.json", queries);
  }
}

}  // namespace seedgrow
