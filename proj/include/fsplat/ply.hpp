#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fsplat/common.hpp"

namespace fsplat {

static_assert(std::endian::native == std::endian::little,
              "ply I/O assumes a little-endian host");

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

namespace detail {

inline std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::I8:
    case PlyType::U8: return 1;
    case PlyType::I16:
    case PlyType::U16: return 2;
    case PlyType::I32:
    case PlyType::U32:
    case PlyType::F32: return 4;
    case PlyType::F64: return 8;
  }
  return 0;
}

inline const char* ply_type_name(PlyType t) {
  switch (t) {
    case PlyType::I8: return "char";
    case PlyType::U8: return "uchar";
    case PlyType::I16: return "short";
    case PlyType::U16: return "ushort";
    case PlyType::I32: return "int";
    case PlyType::U32: return "uint";
    case PlyType::F32: return "float";
    case PlyType::F64: return "double";
  }
  return "?";
}

inline bool ply_type_from_name(const std::string& s, PlyType& out) {
  if (s == "char" || s == "int8") out = PlyType::I8;
  else if (s == "uchar" || s == "uint8") out = PlyType::U8;
  else if (s == "short" || s == "int16") out = PlyType::I16;
  else if (s == "ushort" || s == "uint16") out = PlyType::U16;
  else if (s == "int" || s == "int32") out = PlyType::I32;
  else if (s == "uint" || s == "uint32") out = PlyType::U32;
  else if (s == "float" || s == "float32") out = PlyType::F32;
  else if (s == "double" || s == "float64") out = PlyType::F64;
  else return false;
  return true;
}

}  // namespace detail

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::F32;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
  std::vector<double> values;  // count rows x properties columns

  int column(const std::string& prop) const {
    for (std::size_t i = 0; i < properties.size(); ++i)
      if (properties[i].name == prop) return static_cast<int>(i);
    return -1;
  }
  int require_column(const std::string& prop, const std::string& path) const {
    const int c = column(prop);
    if (c < 0)
      throw ConfigError("ply: " + path + ": element \"" + name +
                        "\" lacks property \"" + prop + "\"");
    return c;
  }
  double value(std::size_t row, int col) const {
    return values[row * properties.size() + static_cast<std::size_t>(col)];
  }
  double& value(std::size_t row, int col) {
    return values[row * properties.size() + static_cast<std::size_t>(col)];
  }
};

struct PlyData {
  std::vector<PlyElement> elements;

  const PlyElement* find(const std::string& name) const {
    for (const auto& e : elements)
      if (e.name == name) return &e;
    return nullptr;
  }
  const PlyElement& require(const std::string& name, const std::string& path) const {
    const PlyElement* e = find(name);
    if (!e) throw ConfigError("ply: " + path + ": missing element \"" + name + "\"");
    return *e;
  }
};

inline PlyData load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("ply: cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || (line != "ply" && line != "ply\r"))
    throw ConfigError("ply: " + path + ": missing magic line");

  PlyData data;
  bool binary = false;
  bool format_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt == "ascii") binary = false;
      else throw ConfigError("ply: " + path + ": unsupported format " + fmt);
      format_seen = true;
    } else if (tok == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      if (ls.fail()) throw ConfigError("ply: " + path + ": bad element line");
      data.elements.push_back(std::move(e));
    } else if (tok == "property") {
      if (data.elements.empty())
        throw ConfigError("ply: " + path + ": property before element");
      std::string type_name;
      ls >> type_name;
      if (type_name == "list")
        throw ConfigError("ply: " + path + ": list properties are not supported");
      PlyProperty p;
      if (!detail::ply_type_from_name(type_name, p.type))
        throw ConfigError("ply: " + path + ": unknown property type " + type_name);
      ls >> p.name;
      if (ls.fail() || p.name.empty())
        throw ConfigError("ply: " + path + ": bad property line");
      data.elements.back().properties.push_back(std::move(p));
    } else if (tok == "end_header") {
      break;
    } else {
      throw ConfigError("ply: " + path + ": unknown header token " + tok);
    }
  }
  if (!format_seen) throw ConfigError("ply: " + path + ": missing format line");

  for (auto& e : data.elements) {
    e.values.resize(e.count * e.properties.size());
    if (binary) {
      std::size_t row_bytes = 0;
      for (const auto& p : e.properties) row_bytes += detail::ply_type_size(p.type);
      std::vector<char> row(row_bytes);
      for (std::size_t r = 0; r < e.count; ++r) {
        in.read(row.data(), static_cast<std::streamsize>(row_bytes));
        if (static_cast<std::size_t>(in.gcount()) != row_bytes)
          throw ConfigError("ply: " + path + ": truncated data");
        const char* ptr = row.data();
        for (std::size_t c = 0; c < e.properties.size(); ++c) {
          double v = 0.0;
          switch (e.properties[c].type) {
            case PlyType::I8: { std::int8_t t; std::memcpy(&t, ptr, 1); v = t; } break;
            case PlyType::U8: { std::uint8_t t; std::memcpy(&t, ptr, 1); v = t; } break;
            case PlyType::I16: { std::int16_t t; std::memcpy(&t, ptr, 2); v = t; } break;
            case PlyType::U16: { std::uint16_t t; std::memcpy(&t, ptr, 2); v = t; } break;
            case PlyType::I32: { std::int32_t t; std::memcpy(&t, ptr, 4); v = t; } break;
            case PlyType::U32: { std::uint32_t t; std::memcpy(&t, ptr, 4); v = t; } break;
            case PlyType::F32: { float t; std::memcpy(&t, ptr, 4); v = t; } break;
            case PlyType::F64: { double t; std::memcpy(&t, ptr, 8); v = t; } break;
          }
          e.values[r * e.properties.size() + c] = v;
          ptr += detail::ply_type_size(e.properties[c].type);
        }
      }
    } else {
      for (std::size_t r = 0; r < e.count; ++r) {
        for (std::size_t c = 0; c < e.properties.size(); ++c) {
          double v;
          if (!(in >> v)) throw ConfigError("ply: " + path + ": truncated data");
          e.values[r * e.properties.size() + c] = v;
        }
      }
    }
  }
  return data;
}

inline void save_ply(const std::string& path, const PlyData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("ply: cannot write " + path);
  out << "ply\nformat binary_little_endian 1.0\n";
  for (const auto& e : data.elements) {
    out << "element " << e.name << " " << e.count << "\n";
    for (const auto& p : e.properties)
      out << "property " << detail::ply_type_name(p.type) << " " << p.name << "\n";
  }
  out << "end_header\n";
  for (const auto& e : data.elements) {
    for (std::size_t r = 0; r < e.count; ++r) {
      for (std::size_t c = 0; c < e.properties.size(); ++c) {
        const double v = e.values[r * e.properties.size() + c];
        char buf[8];
        std::size_t nb = detail::ply_type_size(e.properties[c].type);
        switch (e.properties[c].type) {
          case PlyType::I8: { auto t = static_cast<std::int8_t>(v); std::memcpy(buf, &t, 1); } break;
          case PlyType::U8: { auto t = static_cast<std::uint8_t>(v); std::memcpy(buf, &t, 1); } break;
          case PlyType::I16: { auto t = static_cast<std::int16_t>(v); std::memcpy(buf, &t, 2); } break;
          case PlyType::U16: { auto t = static_cast<std::uint16_t>(v); std::memcpy(buf, &t, 2); } break;
          case PlyType::I32: { auto t = static_cast<std::int32_t>(v); std::memcpy(buf, &t, 4); } break;
          case PlyType::U32: { auto t = static_cast<std::uint32_t>(v); std::memcpy(buf, &t, 4); } break;
          case PlyType::F32: { auto t = static_cast<float>(v); std::memcpy(buf, &t, 4); } break;
          case PlyType::F64: { std::memcpy(buf, &v, 8); } break;
        }
        out.write(buf, static_cast<std::streamsize>(nb));
      }
    }
  }
  if (!out) throw std::runtime_error("ply: write failure for " + path);
}

}  // namespace fsplat
