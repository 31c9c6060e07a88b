#include "forest_coreg/ply_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "forest_coreg/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary PLY I/O assumes a little-endian host");

namespace fcoreg {

namespace {

enum class PropType { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

std::size_t prop_size(PropType t) {
  switch (t) {
    case PropType::kInt8:
    case PropType::kUInt8: return 1;
    case PropType::kInt16:
    case PropType::kUInt16: return 2;
    case PropType::kInt32:
    case PropType::kUInt32:
    case PropType::kFloat32: return 4;
    case PropType::kFloat64: return 8;
  }
  return 0;
}

PropType parse_prop_type(const std::string& s, const std::string& path) {
  if (s == "char" || s == "int8") return PropType::kInt8;
  if (s == "uchar" || s == "uint8") return PropType::kUInt8;
  if (s == "short" || s == "int16") return PropType::kInt16;
  if (s == "ushort" || s == "uint16") return PropType::kUInt16;
  if (s == "int" || s == "int32") return PropType::kInt32;
  if (s == "uint" || s == "uint32") return PropType::kUInt32;
  if (s == "float" || s == "float32") return PropType::kFloat32;
  if (s == "double" || s == "float64") return PropType::kFloat64;
  throw ParseError(path + ": unsupported PLY property type '" + s + "'");
}

double decode_binary(const char* bytes, PropType t) {
  switch (t) {
    case PropType::kInt8: { std::int8_t v; std::memcpy(&v, bytes, 1); return v; }
    case PropType::kUInt8: { std::uint8_t v; std::memcpy(&v, bytes, 1); return v; }
    case PropType::kInt16: { std::int16_t v; std::memcpy(&v, bytes, 2); return v; }
    case PropType::kUInt16: { std::uint16_t v; std::memcpy(&v, bytes, 2); return v; }
    case PropType::kInt32: { std::int32_t v; std::memcpy(&v, bytes, 4); return v; }
    case PropType::kUInt32: { std::uint32_t v; std::memcpy(&v, bytes, 4); return v; }
    case PropType::kFloat32: { float v; std::memcpy(&v, bytes, 4); return v; }
    case PropType::kFloat64: { double v; std::memcpy(&v, bytes, 8); return v; }
  }
  return 0.0;
}

struct VertexLayout {
  std::vector<PropType> types;
  std::vector<std::string> names;
  int x = -1, y = -1, z = -1, nx = -1, ny = -1, nz = -1;
  std::size_t record_size = 0;
};

}  // namespace

PointCloud load_cloud(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (line.ends_with('\r')) line.pop_back();
  if (line != "ply") throw ParseError(path + ": missing 'ply' magic");

  bool binary = false;
  bool have_format = false;
  std::size_t vertex_count = 0;
  bool in_vertex_element = false;
  bool seen_vertex_element = false;
  VertexLayout layout;

  while (std::getline(in, line)) {
    if (line.ends_with('\r')) line.pop_back();
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    if (token == "comment" || token == "obj_info" || token.empty()) continue;
    if (token == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else throw ParseError(path + ": unsupported PLY format '" + fmt + "'");
      have_format = true;
    } else if (token == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        in_vertex_element = true;
        seen_vertex_element = true;
        vertex_count = count;
      } else {
        if (!seen_vertex_element && count > 0) {
          throw ParseError(path + ": element '" + name +
                           "' precedes the vertex element");
        }
        in_vertex_element = false;
      }
    } else if (token == "property") {
      if (!in_vertex_element) continue;  // properties of trailing elements
      std::string type_name;
      ls >> type_name;
      if (type_name == "list") {
        throw ParseError(path + ": list properties on the vertex element are not supported");
      }
      std::string prop_name;
      ls >> prop_name;
      const PropType t = parse_prop_type(type_name, path);
      const int idx = static_cast<int>(layout.types.size());
      if (prop_name == "x") layout.x = idx;
      else if (prop_name == "y") layout.y = idx;
      else if (prop_name == "z") layout.z = idx;
      else if (prop_name == "nx") layout.nx = idx;
      else if (prop_name == "ny") layout.ny = idx;
      else if (prop_name == "nz") layout.nz = idx;
      else if (warnings) warnings->push_back("ignored vertex property '" + prop_name + "'");
      layout.types.push_back(t);
      layout.names.push_back(prop_name);
      layout.record_size += prop_size(t);
    } else if (token == "end_header") {
      break;
    } else {
      throw ParseError(path + ": unexpected header token '" + token + "'");
    }
  }
  if (!have_format) throw ParseError(path + ": header has no format line");
  if (!seen_vertex_element) throw ParseError(path + ": no vertex element");
  if (layout.x < 0 || layout.y < 0 || layout.z < 0) {
    throw ParseError(path + ": vertex element lacks x/y/z properties");
  }
  const bool with_normals = layout.nx >= 0 && layout.ny >= 0 && layout.nz >= 0;

  PointCloud cloud;
  cloud.points.resize(vertex_count);
  if (with_normals) cloud.normals.resize(vertex_count);

  const std::size_t n_props = layout.types.size();
  if (binary) {
    std::vector<char> record(layout.record_size);
    std::vector<std::size_t> offsets(n_props);
    std::size_t off = 0;
    for (std::size_t p = 0; p < n_props; ++p) {
      offsets[p] = off;
      off += prop_size(layout.types[p]);
    }
    for (std::size_t i = 0; i < vertex_count; ++i) {
      in.read(record.data(), static_cast<std::streamsize>(record.size()));
      if (!in) throw ParseError(path + ": truncated binary payload at vertex " + std::to_string(i));
      auto value = [&](int idx) {
        return decode_binary(record.data() + offsets[idx], layout.types[idx]);
      };
      cloud.points[i] = {value(layout.x), value(layout.y), value(layout.z)};
      if (with_normals) {
        cloud.normals[i] = {value(layout.nx), value(layout.ny), value(layout.nz)};
      }
    }
  } else {
    std::vector<double> vals(n_props);
    for (std::size_t i = 0; i < vertex_count; ++i) {
      if (!std::getline(in, line)) {
        throw ParseError(path + ": truncated ASCII payload at vertex " + std::to_string(i));
      }
      std::istringstream ls(line);
      for (std::size_t p = 0; p < n_props; ++p) {
        if (!(ls >> vals[p])) {
          throw ParseError(path + ": bad ASCII vertex record at line " + std::to_string(i));
        }
      }
      cloud.points[i] = {vals[layout.x], vals[layout.y], vals[layout.z]};
      if (with_normals) {
        cloud.normals[i] = {vals[layout.nx], vals[layout.ny], vals[layout.nz]};
      }
    }
  }

  for (const auto& p : cloud.points) {
    if (!p.allFinite()) throw ParseError(path + ": non-finite coordinates");
  }
  return cloud;
}

void save_cloud(const PointCloud& cloud, const std::string& path, PlyFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path + ": cannot open file for writing");

  const bool with_normals = cloud.has_normals();
  out << "ply\n";
  out << (format == PlyFormat::kAscii ? "format ascii 1.0\n"
                                      : "format binary_little_endian 1.0\n");
  out << "element vertex " << cloud.size() << "\n";
  out << "property float64 x\nproperty float64 y\nproperty float64 z\n";
  if (with_normals) {
    out << "property float nx\nproperty float ny\nproperty float nz\n";
  }
  out << "end_header\n";

  if (format == PlyFormat::kAscii) {
    char buf[256];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      if (with_normals) {
        const auto& n = cloud.normals[i];
        std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.9g %.9g %.9g\n",
                      p.x(), p.y(), p.z(), n.x(), n.y(), n.z());
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
      }
      out << buf;
    }
  } else {
    std::vector<char> record(with_normals ? 36 : 24);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      std::memcpy(record.data(), p.data(), 24);
      if (with_normals) {
        const float n[3] = {static_cast<float>(cloud.normals[i].x()),
                            static_cast<float>(cloud.normals[i].y()),
                            static_cast<float>(cloud.normals[i].z())};
        std::memcpy(record.data() + 24, n, 12);
      }
      out.write(record.data(), static_cast<std::streamsize>(record.size()));
    }
  }
  if (!out) throw ParseError(path + ": write failed");
}

}  // namespace fcoreg
