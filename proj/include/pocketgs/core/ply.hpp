#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pocketgs/core/gaussian_model.hpp"
#include "pocketgs/core/point_cloud.hpp"

namespace pocketgs {

static_assert(std::endian::native == std::endian::little, "PLY writer assumes a little-endian host");

class PlyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PlyPrecision { Float32, Float64 };

namespace detail {

struct PlyProperty {
  std::string name;
  std::string type;
  std::size_t offset = 0;
  std::size_t bytes = 0;
};

struct PlyTable {
  std::size_t count = 0;
  std::vector<PlyProperty> props;
  std::size_t stride = 0;
  std::vector<char> data;

  const PlyProperty* find(const std::string& name) const {
    for (const auto& p : props)
      if (p.name == name) return &p;
    return nullptr;
  }

  double get(std::size_t row, const PlyProperty& p) const {
    const char* src = data.data() + row * stride + p.offset;
    if (p.type == "float" || p.type == "float32") {
      float f;
      std::memcpy(&f, src, 4);
      return f;
    }
    if (p.type == "double" || p.type == "float64") {
      double d;
      std::memcpy(&d, src, 8);
      return d;
    }
    if (p.type == "uchar" || p.type == "uint8") return static_cast<unsigned char>(*src);
    if (p.type == "int" || p.type == "int32") {
      std::int32_t v;
      std::memcpy(&v, src, 4);
      return v;
    }
    throw PlyError("unsupported PLY property type: " + p.type);
  }

  double get(std::size_t row, const std::string& name) const {
    const PlyProperty* p = find(name);
    if (!p) throw PlyError("PLY is missing property: " + name);
    return get(row, *p);
  }
};

inline std::size_t ply_type_size(const std::string& t) {
  if (t == "float" || t == "float32" || t == "int" || t == "int32" || t == "uint" || t == "uint32") return 4;
  if (t == "double" || t == "float64") return 8;
  if (t == "uchar" || t == "uint8" || t == "char" || t == "int8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  throw PlyError("unsupported PLY property type: " + t);
}

inline PlyTable read_vertex_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PlyError("cannot open PLY: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw PlyError("not a PLY file: " + path.string());
  PlyTable t;
  bool in_vertex = false;
  bool binary_le = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (kw == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> t.count;
      else throw PlyError("only vertex elements are supported: " + path.string());
    } else if (kw == "property" && in_vertex) {
      PlyProperty p;
      ls >> p.type >> p.name;
      if (p.type == "list") throw PlyError("list properties are not supported: " + path.string());
      p.bytes = ply_type_size(p.type);
      p.offset = t.stride;
      t.stride += p.bytes;
      t.props.push_back(p);
    } else if (kw == "end_header") {
      break;
    }
  }
  if (!binary_le) throw PlyError("only binary_little_endian PLY is supported: " + path.string());
  t.data.resize(t.count * t.stride);
  in.read(t.data.data(), static_cast<std::streamsize>(t.data.size()));
  if (!in && t.count > 0) throw PlyError("truncated PLY body: " + path.string());
  return t;
}

class PlyWriter {
 public:
  PlyWriter(const std::filesystem::path& path, std::size_t count, const std::vector<std::string>& names,
            PlyPrecision precision)
      : out_(path, std::ios::binary), double_(precision == PlyPrecision::Float64) {
    if (!out_) throw PlyError("cannot write PLY: " + path.string());
    out_ << "ply\nformat binary_little_endian 1.0\nelement vertex " << count << "\n";
    for (const auto& n : names) out_ << "property " << (double_ ? "double " : "float ") << n << "\n";
    out_ << "end_header\n";
  }
  void put(double v) {
    if (double_) {
      out_.write(reinterpret_cast<const char*>(&v), 8);
    } else {
      const float f = static_cast<float>(v);
      out_.write(reinterpret_cast<const char*>(&f), 4);
    }
  }

 private:
  std::ofstream out_;
  bool double_;
};

inline const std::vector<std::string>& gaussian_ply_fields() {
  static const std::vector<std::string> names = {"x",       "y",       "z",       "f_dc_0", "f_dc_1",
                                                 "f_dc_2",  "opacity", "scale_0", "scale_1", "scale_2",
                                                 "rot_0",   "rot_1",   "rot_2",   "rot_3"};
  return names;
}

}  // namespace detail

/// Writes the 3DGS vertex layout. f_dc_* carry the stored color logits,
/// opacity the opacity logit, scale_* log scales and rot_* the (w, x, y, z)
/// quaternion. Float64 round-trips bit-exactly.
inline void export_ply(const GaussianModel& model, const std::filesystem::path& path,
                       PlyPrecision precision = PlyPrecision::Float32) {
  const GaussianParams& p = model.params;
  if (const long bad = p.first_non_finite(); bad >= 0)
    throw PlyError("non-finite parameter at Gaussian " + std::to_string(bad));
  detail::PlyWriter w(path, p.size(), detail::gaussian_ply_fields(), precision);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (int k = 0; k < 3; ++k) w.put(p.position[3 * i + k]);
    for (int k = 0; k < 3; ++k) w.put(p.color[3 * i + k]);
    w.put(p.opacity[i]);
    for (int k = 0; k < 3; ++k) w.put(p.log_scale[3 * i + k]);
    for (int k = 0; k < 4; ++k) w.put(p.rotation[4 * i + k]);
  }
}

/// Reads a PLY written by export_ply (or any 3DGS-layout PLY). Optimizer
/// moments start at zero.
inline GaussianModel import_ply(const std::filesystem::path& path) {
  const detail::PlyTable t = detail::read_vertex_table(path);
  GaussianModel m;
  m.resize(t.count);
  std::vector<const detail::PlyProperty*> f;
  for (const auto& n : detail::gaussian_ply_fields()) {
    const auto* prop = t.find(n);
    if (!prop) throw PlyError("PLY is missing property: " + n);
    f.push_back(prop);
  }
  GaussianParams& p = m.params;
  for (std::size_t i = 0; i < t.count; ++i) {
    for (int k = 0; k < 3; ++k) p.position[3 * i + k] = t.get(i, *f[k]);
    for (int k = 0; k < 3; ++k) p.color[3 * i + k] = t.get(i, *f[3 + k]);
    p.opacity[i] = t.get(i, *f[6]);
    for (int k = 0; k < 3; ++k) p.log_scale[3 * i + k] = t.get(i, *f[7 + k]);
    for (int k = 0; k < 4; ++k) p.rotation[4 * i + k] = t.get(i, *f[10 + k]);
  }
  return m;
}

/// Dense cloud interchange: double x, y, z, linear red, green, blue and the
/// world position of the observing camera (vx, vy, vz).
inline void export_point_cloud(const std::vector<DensePoint>& cloud, const std::filesystem::path& path) {
  detail::PlyWriter w(path, cloud.size(), {"x", "y", "z", "red", "green", "blue", "vx", "vy", "vz"},
                      PlyPrecision::Float64);
  for (const auto& pt : cloud) {
    for (int k = 0; k < 3; ++k) w.put(pt.position[k]);
    for (int k = 0; k < 3; ++k) w.put(pt.color[k]);
    for (int k = 0; k < 3; ++k) w.put(pt.view_origin[k]);
  }
}

inline std::vector<DensePoint> import_point_cloud(const std::filesystem::path& path) {
  const detail::PlyTable t = detail::read_vertex_table(path);
  std::vector<DensePoint> cloud(t.count);
  const bool has_view = t.find("vx") != nullptr;
  const bool byte_color = t.find("red") && t.find("red")->type.starts_with("u");
  for (std::size_t i = 0; i < t.count; ++i) {
    DensePoint& pt = cloud[i];
    pt.position = {t.get(i, "x"), t.get(i, "y"), t.get(i, "z")};
    if (t.find("red")) {
      pt.color = {t.get(i, "red"), t.get(i, "green"), t.get(i, "blue")};
      if (byte_color) pt.color /= 255.0;
    }
    if (has_view) {
      pt.view_origin = {t.get(i, "vx"), t.get(i, "vy"), t.get(i, "vz")};
      pt.has_view = true;
    }
  }
  return cloud;
}

}  // namespace pocketgs
