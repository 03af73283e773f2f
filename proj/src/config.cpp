#include "condflow/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace condflow {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::int64_t parse_int(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const long long r = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw std::invalid_argument("config: key '" + key + "': not an integer: '" + v + "'");
  return r;
}

std::uint64_t parse_uint(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const unsigned long long r = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0' || v.find('-') != std::string::npos)
    throw std::invalid_argument("config: key '" + key + "': not a non-negative integer: '" + v +
                                "'");
  return r;
}

double parse_double(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const double r = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw std::invalid_argument("config: key '" + key + "': not a number: '" + v + "'");
  return r;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: key '" + key + "': not a boolean: '" + v + "'");
}

// single table drives parse + serialize so the two can't drift apart
struct Field {
  std::function<void(ModelConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ModelConfig&)> get;
};

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = [] {
    std::map<std::string, Field> m;
    auto add_i64 = [&m](const std::string& k, std::int64_t ModelConfig::*p) {
      m[k] = {[p](ModelConfig& c, const std::string& v, const std::string& key) {
                c.*p = parse_int(v, key);
              },
              [p](const ModelConfig& c) { return std::to_string(c.*p); }};
    };
    auto add_f64 = [&m](const std::string& k, double ModelConfig::*p) {
      m[k] = {[p](ModelConfig& c, const std::string& v, const std::string& key) {
                c.*p = parse_double(v, key);
              },
              [p](const ModelConfig& c) { return fmt_double(c.*p); }};
    };
    auto add_bool = [&m](const std::string& k, bool ModelConfig::*p) {
      m[k] = {[p](ModelConfig& c, const std::string& v, const std::string& key) {
                c.*p = parse_bool(v, key);
              },
              [p](const ModelConfig& c) { return c.*p ? "true" : "false"; }};
    };
    auto add_str = [&m](const std::string& k, std::string ModelConfig::*p) {
      m[k] = {[p](ModelConfig& c, const std::string& v, const std::string&) { c.*p = v; },
              [p](const ModelConfig& c) { return c.*p; }};
    };
    add_i64("levels", &ModelConfig::levels);
    add_i64("steps", &ModelConfig::steps);
    add_i64("height_a", &ModelConfig::height_a);
    add_i64("width_a", &ModelConfig::width_a);
    add_i64("channels_a", &ModelConfig::channels_a);
    add_i64("height_b", &ModelConfig::height_b);
    add_i64("width_b", &ModelConfig::width_b);
    add_i64("channels_b", &ModelConfig::channels_b);
    add_i64("hidden", &ModelConfig::hidden);
    add_str("coupling_a", &ModelConfig::coupling_a);
    add_str("coupling_b", &ModelConfig::coupling_b);
    add_bool("pointcloud_a", &ModelConfig::pointcloud_a);
    add_bool("pointcloud_b", &ModelConfig::pointcloud_b);
    add_bool("squeeze", &ModelConfig::squeeze);
    add_i64("hilbert_order", &ModelConfig::hilbert_order);
    add_f64("lambda_cycle", &ModelConfig::lambda_cycle);
    add_f64("temperature", &ModelConfig::temperature);
    add_str("cycle_distance", &ModelConfig::cycle_distance);
    m["seed"] = {[](ModelConfig& c, const std::string& v, const std::string& key) {
                   c.seed = parse_uint(v, key);
                 },
                 [](const ModelConfig& c) { return std::to_string(c.seed); }};
    add_f64("lr", &ModelConfig::lr);
    add_f64("beta1", &ModelConfig::beta1);
    add_f64("beta2", &ModelConfig::beta2);
    add_f64("adam_eps", &ModelConfig::adam_eps);
    add_i64("batch_size", &ModelConfig::batch_size);
    add_i64("train_steps", &ModelConfig::train_steps);
    add_i64("checkpoint_every", &ModelConfig::checkpoint_every);
    add_bool("dequantize", &ModelConfig::dequantize);
    return m;
  }();
  return f;
}

}  // namespace

ModelConfig ModelConfig::parse_text(const std::string& text, const std::string& origin) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end())
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": unknown config key '" + key + "'");
    if (!seen.insert(key).second)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": duplicate config key '" + key + "'");
    it->second.set(cfg, val, key);
  }
  return cfg;
}

ModelConfig ModelConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_text(ss.str(), path);
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [key, f] : fields()) os << key << " = " << f.get(*this) << "\n";
  return os.str();
}

std::string ModelConfig::resolved_cycle_distance() const {
  if (cycle_distance == "l1" || cycle_distance == "chamfer") return cycle_distance;
  return pointcloud_b ? "chamfer" : "l1";
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (levels < 1) fail("levels must be >= 1");
  if (steps < 1) fail("steps must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  if (height_a < 1 || width_a < 1 || channels_a < 1 || height_b < 1 || width_b < 1 ||
      channels_b < 1)
    fail("branch dims must be positive");
  if (squeeze) {
    const std::int64_t div = std::int64_t(1) << levels;
    if (height_a % div || width_a % div || height_b % div || width_b % div)
      fail("height/width must be divisible by 2^levels = " + std::to_string(div));
  } else {
    if (levels != 1) fail("squeeze = false requires levels = 1");
    if (channels_a % 2 || channels_b % 2)
      fail("squeeze = false requires even channel counts (coupling split)");
  }
  for (const auto* mode : {&coupling_a, &coupling_b})
    if (*mode != "affine" && *mode != "additive")
      fail("coupling mode must be 'affine' or 'additive', got '" + *mode + "'");
  if (pointcloud_a && channels_a != 3) fail("pointcloud_a requires channels_a = 3");
  if (pointcloud_b && channels_b != 3) fail("pointcloud_b requires channels_b = 3");
  if (cycle_distance != "auto" && cycle_distance != "l1" && cycle_distance != "chamfer")
    fail("cycle_distance must be auto|l1|chamfer, got '" + cycle_distance + "'");
  if (lambda_cycle < 0) fail("lambda_cycle must be >= 0");
  if (temperature < 0) fail("temperature must be >= 0");
  if (hilbert_order < 1 || hilbert_order > 21) fail("hilbert_order must be in [1,21]");
  if (lr <= 0) fail("lr must be > 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) fail("betas must be in [0,1)");
  if (adam_eps <= 0) fail("adam_eps must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (train_steps < 0) fail("train_steps must be >= 0");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
}

}  // namespace condflow
