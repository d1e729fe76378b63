// Binary little-endian PLY reader/writer for point clouds.

#include "seedgrow/errors.hpp"
#include "seedgrow/scene_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace seedgrow {

namespace {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

enum class Scalar { i8, u8, i16, u16, i32, u32, f32, f64 };

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::i8:
    case Scalar::u8: return 1;
    case Scalar::i16:
    case Scalar::u16: return 2;
    case Scalar::i32:
    case Scalar::u32:
    case Scalar::f32: return 4;
    case Scalar::f64: return 8;
  }
  return 0;
}

bool parse_scalar(const std::string& name, Scalar& out) {
  static const std::pair<const char*, Scalar> table[] = {
      {"char", Scalar::i8},    {"int8", Scalar::i8},     {"uchar", Scalar::u8},   {"uint8", Scalar::u8},
      {"short", Scalar::i16},  {"int16", Scalar::i16},   {"ushort", Scalar::u16}, {"uint16", Scalar::u16},
      {"int", Scalar::i32},    {"int32", Scalar::i32},   {"uint", Scalar::u32},   {"uint32", Scalar::u32},
      {"float", Scalar::f32},  {"float32", Scalar::f32}, {"double", Scalar::f64}, {"float64", Scalar::f64}};
  for (const auto& [n, s] : table) {
    if (name == n) {
      out = s;
      return true;
    }
  }
  return false;
}

double read_as_double(const char* p, Scalar s) {
  switch (s) {
    case Scalar::i8: return static_cast<double>(*reinterpret_cast<const std::int8_t*>(p));
    case Scalar::u8: return static_cast<double>(*reinterpret_cast<const std::uint8_t*>(p));
    case Scalar::i16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case Scalar::u16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case Scalar::i32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case Scalar::u32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case Scalar::f32: { float v; std::memcpy(&v, p, 4); return v; }
    case Scalar::f64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::f32;
  bool is_list = false;
  Scalar count_type = Scalar::u8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

}  // namespace

PointCloud read_ply(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string where = path.string();

  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line() || line != "ply") throw ParseError(where + ": line 1: missing 'ply' magic");

  std::vector<Element> elements;
  bool have_format = false;
  while (true) {
    if (!next_line()) throw ParseError(where + ": line " + std::to_string(line_no) + ": header not terminated");
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info" || kw.empty()) continue;
    if (kw == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt != "binary_little_endian")
        throw ParseError(where + ": line " + std::to_string(line_no) + ": unsupported format '" + fmt + "'");
      have_format = true;
    } else if (kw == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (!ls || count < 0) throw ParseError(where + ": line " + std::to_string(line_no) + ": bad element line");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (elements.empty())
        throw ParseError(where + ": line " + std::to_string(line_no) + ": property before element");
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, vt;
        ls >> ct >> vt >> p.name;
        p.is_list = true;
        if (!parse_scalar(ct, p.count_type) || !parse_scalar(vt, p.type))
          throw ParseError(where + ": line " + std::to_string(line_no) + ": bad list property types");
      } else {
        ls >> p.name;
        if (!parse_scalar(type, p.type))
          throw ParseError(where + ": line " + std::to_string(line_no) + ": unknown type '" + type + "'");
      }
      elements.back().props.push_back(std::move(p));
    } else {
      throw ParseError(where + ": line " + std::to_string(line_no) + ": unexpected keyword '" + kw + "'");
    }
  }
  if (!have_format) throw ParseError(where + ": line " + std::to_string(line_no) + ": missing format line");

  PointCloud cloud;
  bool found_vertex = false;
  for (const auto& e : elements) {
    const auto offset = static_cast<std::size_t>(in.tellg());
    if (e.name != "vertex") {
      // Skip foreign elements, walking list properties one record at a time.
      for (std::size_t r = 0; r < e.count; ++r) {
        for (const auto& p : e.props) {
          if (!p.is_list) {
            in.ignore(static_cast<std::streamsize>(scalar_size(p.type)));
            continue;
          }
          char buf[8] = {};
          in.read(buf, static_cast<std::streamsize>(scalar_size(p.count_type)));
          const auto n = static_cast<std::size_t>(read_as_double(buf, p.count_type));
          in.ignore(static_cast<std::streamsize>(n * scalar_size(p.type)));
        }
        if (!in) throw ParseError(where + ": byte " + std::to_string(offset) + ": truncated element '" + e.name + "'");
      }
      continue;
    }
    found_vertex = true;
    std::size_t stride = 0;
    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
    std::vector<std::size_t> prop_offset;
    for (std::size_t k = 0; k < e.props.size(); ++k) {
      const auto& p = e.props[k];
      if (p.is_list) throw ParseError(where + ": vertex list properties are not supported");
      prop_offset.push_back(stride);
      stride += scalar_size(p.type);
      if (p.name == "x") ix = static_cast<int>(k);
      if (p.name == "y") iy = static_cast<int>(k);
      if (p.name == "z") iz = static_cast<int>(k);
      if (p.name == "red") ir = static_cast<int>(k);
      if (p.name == "green") ig = static_cast<int>(k);
      if (p.name == "blue") ib = static_cast<int>(k);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw ParseError(where + ": vertex element lacks x/y/z");
    const bool colors = ir >= 0 && ig >= 0 && ib >= 0;
    std::vector<char> data(stride * e.count);
    in.read(data.data(), static_cast<std::streamsize>(data.size()));
    if (static_cast<std::size_t>(in.gcount()) != data.size())
      throw ParseError(where + ": byte " + std::to_string(offset + static_cast<std::size_t>(in.gcount())) +
                       ": truncated vertex data (expected " + std::to_string(e.count) + " vertices)");
    cloud.positions.resize(e.count);
    if (colors) cloud.colors.resize(e.count);
    auto get = [&](std::size_t r, int k) {
      return read_as_double(data.data() + r * stride + prop_offset[static_cast<std::size_t>(k)],
                            e.props[static_cast<std::size_t>(k)].type);
    };
    auto get_float = [&](std::size_t r, int k) -> float {
      const auto& p = e.props[static_cast<std::size_t>(k)];
      if (p.type == Scalar::f32) {
        float v;
        std::memcpy(&v, data.data() + r * stride + prop_offset[static_cast<std::size_t>(k)], 4);
        return v;
      }
      return static_cast<float>(get(r, k));
    };
    for (std::size_t r = 0; r < e.count; ++r) {
      cloud.positions[r] = {get_float(r, ix), get_float(r, iy), get_float(r, iz)};
      if (colors) {
        auto channel = [&](int k) {
          const double v = get(r, k);
          return e.props[static_cast<std::size_t>(k)].type == Scalar::u8 ? static_cast<float>(v / 255.0)
                                                                          : static_cast<float>(v);
        };
        cloud.colors[r] = {channel(ir), channel(ig), channel(ib)};
      }
    }
  }
  if (!found_vertex) throw ParseError(where + ": no vertex element");
  try {
    cloud.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  return cloud;
}

void write_ply(const fs::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out.write(reinterpret_cast<const char*>(cloud.positions[i].data()), 3 * sizeof(float));
    if (cloud.has_colors()) {
      std::uint8_t rgb[3];
      for (int c = 0; c < 3; ++c)
        rgb[c] = static_cast<std::uint8_t>(std::lround(std::clamp(cloud.colors[i][c], 0.0f, 1.0f) * 255.0f));
      out.write(reinterpret_cast<const char*>(rgb), 3);
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace seedgrow
