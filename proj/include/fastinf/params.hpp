#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "fastinf/errors.hpp"
#include "fastinf/rng.hpp"

namespace fastinf {

// Gradients, HVPs and s_test all share the flat parameter layout.
using GradVector = Eigen::VectorXd;

struct ParamSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  bool frozen = false;  // zero-masked in gradients and HVPs
};

struct ParamLayout {
  std::vector<ParamSegment> segments;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.length;
    return n;
  }

  const ParamSegment& find(const std::string& name) const {
    for (const auto& s : segments)
      if (s.name == name) return s;
    throw ConfigError("no parameter segment named " + name);
  }

  bool any_frozen() const {
    for (const auto& s : segments)
      if (s.frozen) return true;
    return false;
  }
};

struct ParamVector {
  Eigen::VectorXd values;
  ParamLayout layout;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

inline void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string(what) + " contains non-finite values");
}

inline std::uint64_t params_digest(const ParamVector& p) {
  return fnv1a(p.values.data(), sizeof(double) * p.values.size());
}

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace detail

// Binary blob: magic FIFP, version u32, P u64, P float64, then the layout table.
inline constexpr std::uint32_t kParamsFormatVersion = 1;

inline void save_params(const ParamVector& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write params file: " + path);
  out.write("FIFP", 4);
  detail::write_u32(out, kParamsFormatVersion);
  detail::write_u64(out, p.size());
  out.write(reinterpret_cast<const char*>(p.values.data()), sizeof(double) * p.values.size());
  detail::write_u32(out, static_cast<std::uint32_t>(p.layout.segments.size()));
  for (const auto& s : p.layout.segments) {
    detail::write_u32(out, static_cast<std::uint32_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    detail::write_u64(out, s.offset);
    detail::write_u64(out, s.length);
    out.put(s.frozen ? 1 : 0);
  }
  if (!out) throw ConfigError("write failed: " + path);
}

inline ParamVector load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open params file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "FIFP") throw ConfigError(path + ": bad magic, not a FIFP params file");
  if (detail::read_u32(in) != kParamsFormatVersion) throw ConfigError(path + ": unsupported format version");
  ParamVector p;
  const auto n = detail::read_u64(in);
  p.values.resize(static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(p.values.data()), static_cast<std::streamsize>(sizeof(double) * n));
  const auto nseg = detail::read_u32(in);
  for (std::uint32_t i = 0; i < nseg; ++i) {
    ParamSegment s;
    const auto len = detail::read_u32(in);
    s.name.resize(len);
    in.read(s.name.data(), len);
    s.offset = detail::read_u64(in);
    s.length = detail::read_u64(in);
    s.frozen = in.get() != 0;
    p.layout.segments.push_back(std::move(s));
  }
  if (!in) throw ConfigError(path + ": truncated params file");
  if (p.layout.total() != p.size()) throw ConfigError(path + ": layout table does not cover the vector");
  return p;
}

// Feature/s_test caches reuse the same vector framing, one record per file or
// appended records for per-id feature caches.
inline void save_vector(const Eigen::VectorXd& v, const std::string& path) {
  ParamVector p;
  p.values = v;
  p.layout.segments.push_back({"values", 0, static_cast<std::size_t>(v.size()), false});
  save_params(p, path);
}

inline Eigen::VectorXd load_vector(const std::string& path) { return load_params(path).values; }

}  // namespace fastinf
