#pragma once

// Flat key = value run configuration: one key per line, '#' comments,
// comma-separated lists.  parse_config validates everything up front and
// reports the offending key and line; to_text is the canonical serializer
// (parse(to_text(c)) == c).

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "topomulti/problem.hpp"

namespace topomulti {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ProblemSpec problem;
  OptimizationSettings opt;
  bool write_vtk = false;
  std::string out_dir = "out";

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view v) {
  std::string s(v);
  std::size_t pos = 0;
  double d;
  try {
    d = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  if (pos != s.size()) throw std::invalid_argument("trailing characters after number '" + s + "'");
  return d;
}

inline int parse_int(std::string_view v) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), value);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw std::invalid_argument("expected an integer, got '" + std::string(v) + "'");
  return value;
}

inline bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + std::string(v) + "'");
}

inline std::vector<double> parse_list(std::string_view v) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    std::size_t comma = v.find(',', start);
    if (comma == std::string_view::npos) comma = v.size();
    const auto item = trim(v.substr(start, comma - start));
    if (item.empty()) throw std::invalid_argument("empty list entry");
    out.push_back(parse_double(item));
    start = comma + 1;
    if (comma == v.size()) break;
  }
  return out;
}

inline std::string format_double(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

}  // namespace detail

/// Applies one key to a config; used by the parser and by sweep overrides.
/// Throws std::invalid_argument naming the problem (no line context).
inline void apply_config_key(RunConfig& cfg, std::string_view key, std::string_view value) {
  using namespace detail;
  auto positive = [&](double d, const char* what) {
    if (!(d > 0.0)) throw std::invalid_argument(std::string(what) + " must be positive");
    return d;
  };
  if (key == "problem") cfg.problem.geometry = geometry_from_name(value);
  else if (key == "nelx") {
    cfg.problem.nelx = parse_int(value);
    if (cfg.problem.nelx < 1) throw std::invalid_argument("nelx must be >= 1");
  } else if (key == "nely") {
    cfg.problem.nely = parse_int(value);
    if (cfg.problem.nely < 1) throw std::invalid_argument("nely must be >= 1");
  } else if (key == "width") cfg.problem.width = positive(parse_double(value), "width");
  else if (key == "height") cfg.problem.height = positive(parse_double(value), "height");
  else if (key == "load") {
    cfg.problem.load = parse_double(value);
    if (cfg.problem.load == 0.0) throw std::invalid_argument("load must be nonzero");
  } else if (key == "poisson") {
    cfg.problem.poisson = parse_double(value);
    if (!(cfg.problem.poisson > -1.0 && cfg.problem.poisson < 0.5))
      throw std::invalid_argument("poisson must lie in (-1, 0.5)");
  } else if (key == "scheme") cfg.opt.scheme = scheme_from_name(value);
  else if (key == "moduli") {
    cfg.opt.materials.moduli = parse_list(value);
    for (double e : cfg.opt.materials.moduli)
      if (!(e > 0.0)) throw std::invalid_argument("moduli must be positive");
  } else if (key == "volfrac") {
    cfg.opt.volume_fractions = parse_list(value);
    for (double v : cfg.opt.volume_fractions)
      if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument("volume fractions must lie in (0, 1]");
  } else if (key == "e_void") cfg.opt.materials.e_void = positive(parse_double(value), "e_void");
  else if (key == "p") {
    cfg.opt.materials.norm_p = parse_double(value);
    if (!(cfg.opt.materials.norm_p >= 1.0)) throw std::invalid_argument("norm order must be >= 1");
  } else if (key == "n") {
    cfg.opt.materials.penal_n = parse_double(value);
    if (!(cfg.opt.materials.penal_n >= 1.0)) throw std::invalid_argument("penalization must be >= 1");
  } else if (key == "delta") cfg.opt.materials.delta = positive(parse_double(value), "delta");
  else if (key == "filter") {
    if (value == "sensitivity") cfg.opt.filter_kind = FilterKind::sensitivity;
    else if (value == "pde") cfg.opt.filter_kind = FilterKind::pde;
    else throw std::invalid_argument("filter must be 'sensitivity' or 'pde'");
  } else if (key == "filter_radius") cfg.opt.filter_radius = positive(parse_double(value), "filter_radius");
  else if (key == "beta0") cfg.opt.projection.beta_initial = positive(parse_double(value), "beta0");
  else if (key == "beta_period") {
    cfg.opt.projection.doubling_period = parse_int(value);
    if (cfg.opt.projection.doubling_period < 1) throw std::invalid_argument("beta_period must be >= 1");
  } else if (key == "beta_max") cfg.opt.projection.beta_max = positive(parse_double(value), "beta_max");
  else if (key == "max_iters") {
    cfg.opt.max_iterations = parse_int(value);
    if (cfg.opt.max_iterations < 1) throw std::invalid_argument("max_iters must be >= 1");
  } else if (key == "change_tol") {
    cfg.opt.change_tol = parse_double(value);
    if (!(cfg.opt.change_tol >= 0.0)) throw std::invalid_argument("change_tol must be >= 0");
  } else if (key == "vtk") cfg.write_vtk = parse_bool(value);
  else if (key == "out") cfg.out_dir = std::string(value);
  else throw std::invalid_argument("unknown key '" + std::string(key) + "'");
}

inline RunConfig parse_config(std::string_view text, const std::string& source = "config") {
  RunConfig cfg;
  std::map<std::string, int> seen;
  auto fail = [&](int line, const std::string& msg) -> void {
    throw ConfigError(source + ":" + std::to_string(line) + ": " + msg);
  };

  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    ++lineno;
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) {
      if (eol == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(lineno, "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) fail(lineno, "missing key before '='");
    if (auto [it, inserted] = seen.emplace(key, lineno); !inserted)
      fail(lineno, "duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");
    try {
      apply_config_key(cfg, key, value);
    } catch (const std::exception& e) {
      fail(lineno, "key '" + key + "': " + e.what());
    }
    if (eol == text.size()) break;
  }

  for (const char* req : {"problem", "nelx", "nely", "moduli", "volfrac"})
    if (!seen.count(req)) throw ConfigError(source + ": missing required key '" + req + "'");

  auto line_of = [&](const char* key) { return seen.count(key) ? seen[key] : seen["moduli"]; };
  if (cfg.opt.volume_fractions.size() != cfg.opt.materials.moduli.size())
    fail(line_of("volfrac"), "key 'volfrac': expected one entry per material (" +
                                 std::to_string(cfg.opt.materials.moduli.size()) + ")");
  for (double e : cfg.opt.materials.moduli)
    if (!(e > cfg.opt.materials.e_void))
      fail(line_of("moduli"), "key 'moduli': every modulus must exceed e_void");
  try {
    cfg.problem.validate();
    cfg.opt.validate();
  } catch (const std::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

/// Canonical serialization; emits every key so defaults are explicit.
inline std::string to_text(const RunConfig& cfg) {
  using detail::format_double;
  std::string s;
  auto kv = [&s](std::string_view k, const std::string& v) {
    s += k;
    s += " = ";
    s += v;
    s += '\n';
  };
  kv("problem", geometry_name(cfg.problem.geometry));
  kv("nelx", std::to_string(cfg.problem.nelx));
  kv("nely", std::to_string(cfg.problem.nely));
  kv("width", format_double(cfg.problem.width));
  kv("height", format_double(cfg.problem.height));
  kv("load", format_double(cfg.problem.load));
  kv("poisson", format_double(cfg.problem.poisson));
  kv("scheme", scheme_name(cfg.opt.scheme));
  kv("moduli", detail::format_list(cfg.opt.materials.moduli));
  kv("volfrac", detail::format_list(cfg.opt.volume_fractions));
  kv("e_void", format_double(cfg.opt.materials.e_void));
  kv("p", format_double(cfg.opt.materials.norm_p));
  kv("n", format_double(cfg.opt.materials.penal_n));
  kv("delta", format_double(cfg.opt.materials.delta));
  kv("filter", cfg.opt.filter_kind == FilterKind::sensitivity ? "sensitivity" : "pde");
  kv("filter_radius", format_double(cfg.opt.filter_radius));
  kv("beta0", format_double(cfg.opt.projection.beta_initial));
  kv("beta_period", std::to_string(cfg.opt.projection.doubling_period));
  kv("beta_max", format_double(cfg.opt.projection.beta_max));
  kv("max_iters", std::to_string(cfg.opt.max_iterations));
  kv("change_tol", format_double(cfg.opt.change_tol));
  kv("vtk", cfg.write_vtk ? "true" : "false");
  kv("out", cfg.out_dir);
  return s;
}

}  // namespace topomulti
