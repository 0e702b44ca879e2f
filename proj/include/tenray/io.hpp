#pragma once
// File formats, run configuration, and run manifests for the command-line
// drivers: a compact little-endian binary container for tensor fields and
// sinograms, CSV emission, INI-style configuration files, and a JSON
// manifest that records content checksums and timings so repeated runs can
// be compared byte for byte.

#include "tenray/core.hpp"
#include "tenray/grid.hpp"
#include "tenray/tensor_field.hpp"
#include "tenray/xray.hpp"

#include <json.hpp>

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace tenray {

// ---------------------------------------------------------------------------
// Binary containers
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError(std::string("truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& out, double v) {
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(&v), 8);
}

inline double get_f64(std::istream& in, const char* what) {
  double v = 0.0;
  if (!in.read(reinterpret_cast<char*>(&v), 8)) throw IoError(std::string("truncated ") + what);
  return v;
}

template <class S>
constexpr std::uint32_t scalar_tag() {
  return std::is_same_v<S, Complex> ? 1u : 0u;
}

template <class S>
void put_scalars(std::ostream& out, const std::vector<S>& v) {
  for (const S& s : v) {
    if constexpr (std::is_same_v<S, Complex>) {
      put_f64(out, s.real());
      put_f64(out, s.imag());
    } else {
      put_f64(out, s);
    }
  }
}

template <class S>
void get_scalars(std::istream& in, std::vector<S>& v, const char* what) {
  for (S& s : v) {
    if constexpr (std::is_same_v<S, Complex>) {
      const double re = get_f64(in, what);
      const double im = get_f64(in, what);
      s = Complex{re, im};
    } else {
      s = get_f64(in, what);
    }
  }
}

}  // namespace detail

// Field container ("TNRF"): rank, grid, then the m+1 component lattices.
// The node mask is not stored; readers attach the full-disc default.
template <class S>
void write_field(const SymTensorField<S>& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_field: cannot open " + path);
  out.write("TNRF", 4);
  detail::put_u32(out, 1u);
  detail::put_u32(out, static_cast<std::uint32_t>(f.m));
  detail::put_u32(out, static_cast<std::uint32_t>(f.grid.n));
  detail::put_u32(out, detail::scalar_tag<S>());
  detail::put_f64(out, f.grid.R);
  for (const auto& comp : f.comps) detail::put_scalars(out, comp);
  if (!out) throw IoError("write_field: write failed for " + path);
}

template <class S>
SymTensorField<S> read_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_field: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "TNRF")
    throw IoError("read_field: " + path + " is not a field container");
  if (detail::get_u32(in, "field header") != 1u)
    throw IoError("read_field: unsupported container version in " + path);
  const int m = static_cast<int>(detail::get_u32(in, "field header"));
  const int n = static_cast<int>(detail::get_u32(in, "field header"));
  const std::uint32_t tag = detail::get_u32(in, "field header");
  if (tag != detail::scalar_tag<S>())
    throw IoError("read_field: scalar kind mismatch in " + path);
  GridSpec grid;
  grid.n = n;
  grid.R = detail::get_f64(in, "field header");
  if (m < 0 || m > 4 || n < 2 || !(grid.R > 0.0))
    throw IoError("read_field: malformed header in " + path);
  auto mask = std::make_shared<GridMask>(GridMask::make(grid, grid.R, 2));
  auto f = SymTensorField<S>::zeros(m, grid, mask);
  for (auto& comp : f.comps) detail::get_scalars(in, comp, "field payload");
  return f;
}

// Sinogram container ("TNRS").
template <class S>
void write_sinogram(const Sinogram<S>& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_sinogram: cannot open " + path);
  out.write("TNRS", 4);
  detail::put_u32(out, 1u);
  detail::put_u32(out, static_cast<std::uint32_t>(s.m));
  detail::put_u32(out, static_cast<std::uint32_t>(s.fan.n_z));
  detail::put_u32(out, static_cast<std::uint32_t>(s.fan.n_w));
  detail::put_u32(out, detail::scalar_tag<S>());
  detail::put_f64(out, s.fan.eps_w);
  detail::put_f64(out, s.boundary_len);
  detail::put_scalars(out, s.values);
  if (!out) throw IoError("write_sinogram: write failed for " + path);
}

template <class S>
Sinogram<S> read_sinogram(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_sinogram: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "TNRS")
    throw IoError("read_sinogram: " + path + " is not a sinogram container");
  if (detail::get_u32(in, "sinogram header") != 1u)
    throw IoError("read_sinogram: unsupported container version in " + path);
  const int m = static_cast<int>(detail::get_u32(in, "sinogram header"));
  FanSpec fan;
  fan.n_z = static_cast<int>(detail::get_u32(in, "sinogram header"));
  fan.n_w = static_cast<int>(detail::get_u32(in, "sinogram header"));
  const std::uint32_t tag = detail::get_u32(in, "sinogram header");
  if (tag != detail::scalar_tag<S>())
    throw IoError("read_sinogram: scalar kind mismatch in " + path);
  fan.eps_w = detail::get_f64(in, "sinogram header");
  const double blen = detail::get_f64(in, "sinogram header");
  if (m < 0 || m > 4 || fan.n_z < 1 || fan.n_w < 1 || !(blen > 0.0))
    throw IoError("read_sinogram: malformed header in " + path);
  auto s = Sinogram<S>::zeros(m, fan, blen);
  detail::get_scalars(in, s.values, "sinogram payload");
  return s;
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

inline void write_csv(const std::string& path, const std::string& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("write_csv: cannot open " + path);
  out << header << "\n";
  char buf[64];
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      out << (i ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("write_csv: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Run configuration: INI-style sections of key = value lines
// ---------------------------------------------------------------------------

// Keys are flattened to "section.key"; lines outside a section keep the bare
// key.  '#' and ';' start comments; blanks are trimmed.
struct RunConfig {
  std::map<std::string, std::string> kv;
  std::string text;  // raw bytes, hashed into the manifest

  static RunConfig parse_stream(std::istream& in, const std::string& origin) {
    RunConfig cfg;
    std::ostringstream raw;
    raw << in.rdbuf();
    cfg.text = raw.str();

    auto trim = [](std::string s) {
      std::size_t b = 0, e = s.size();
      while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
      while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
      return s.substr(b, e - b);
    };

    std::istringstream lines(cfg.text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      const std::size_t hash = line.find_first_of("#;");
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw UsageError(origin + ":" + std::to_string(lineno) + ": unterminated section");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string val = trim(line.substr(eq + 1));
      if (key.empty())
        throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
      cfg.kv[section.empty() ? key : section + "." + key] = val;
    }
    return cfg;
  }

  static RunConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    return parse_stream(in, path);
  }

  bool has(const std::string& key) const { return kv.count(key) != 0; }

  std::string str(const std::string& key, const std::string& fallback = "") const {
    const auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  }

  double num(const std::string& key, double fallback) const {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(it->second, &used);
    } catch (const std::exception&) {
      throw UsageError("config: key '" + key + "' is not a number: " + it->second);
    }
    if (used != it->second.size())
      throw UsageError("config: key '" + key + "' is not a number: " + it->second);
    return v;
  }

  int integer(const std::string& key, int fallback) const {
    const double v = num(key, static_cast<double>(fallback));
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
      throw UsageError("config: key '" + key + "' is not an integer");
    return i;
  }

  bool flag(const std::string& key, bool fallback) const {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw UsageError("config: key '" + key + "' is not a boolean: " + v);
  }
};

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

// One JSON document per run: tool identity, configuration hash, wall-clock
// timings, and a checksum per emitted artifact.  Two runs of the same build
// on the same configuration must produce identical manifests except for the
// timing block, which is why timings live in their own object.
class Manifest {
 public:
  Manifest(const std::string& tool, const std::string& version, const RunConfig& cfg) {
    j_["tool"] = tool;
    j_["version"] = version;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(cfg.text)));
    j_["config_fnv1a64"] = buf;
    j_["artifacts"] = nlohmann::json::array();
    j_["timings_seconds"] = nlohmann::json::object();
  }

  void add_artifact(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("manifest: cannot read artifact " + path);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    const std::string data = bytes.str();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(data)));
    j_["artifacts"].push_back(
        {{"path", path}, {"bytes", data.size()}, {"fnv1a64", buf}});
  }

  void add_timing(const std::string& name, double seconds) {
    j_["timings_seconds"][name] = seconds;
  }

  void set(const std::string& key, const nlohmann::json& value) { j_[key] = value; }

  const nlohmann::json& json() const { return j_; }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("manifest: cannot open " + path);
    out << j_.dump(2) << "\n";
    if (!out) throw IoError("manifest: write failed for " + path);
  }

 private:
  nlohmann::json j_;
};

}  // namespace tenray
