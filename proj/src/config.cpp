#include "dpdn/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dpdn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw Error(ErrorCode::kConfig, "bad value '" + value + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(ErrorCode::kConfig, "bad boolean '" + value + "' for " + key);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class T>
Field field(T TrainConfig::*member) {
  Field f;
  f.set = [member](TrainConfig& c, const std::string& k, const std::string& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      c.*member = v;
    } else if constexpr (std::is_same_v<T, bool>) {
      c.*member = parse_bool(k, v);
    } else {
      c.*member = parse_number<T>(k, v);
    }
  };
  f.get = [member](const TrainConfig& c) -> std::string {
    if constexpr (std::is_same_v<T, std::string>) {
      return c.*member;
    } else if constexpr (std::is_same_v<T, bool>) {
      return c.*member ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  return f;
}

// Ordered so that to_string() output is stable.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"dataset", field(&TrainConfig::dataset)},
      {"scale", field(&TrainConfig::scale)},
      {"seed", field(&TrainConfig::seed)},
      {"depth_scale", field(&TrainConfig::depth_scale)},
      {"side", field(&TrainConfig::side)},
      {"hidden", field(&TrainConfig::hidden)},
      {"depth_only", field(&TrainConfig::depth_only)},
      {"pretrain_epochs", field(&TrainConfig::pretrain_epochs)},
      {"pretrain_lr", field(&TrainConfig::pretrain_lr)},
      {"pretrain_momentum", field(&TrainConfig::pretrain_momentum)},
      {"pretrain_eps", field(&TrainConfig::pretrain_eps)},
      {"joint_epochs", field(&TrainConfig::joint_epochs)},
      {"joint_lr", field(&TrainConfig::joint_lr)},
      {"joint_momentum", field(&TrainConfig::joint_momentum)},
      {"clip_norm", field(&TrainConfig::clip_norm)},
      {"pdn_iters", field(&TrainConfig::pdn_iters)},
      {"lambda0", field(&TrainConfig::lambda0)},
      {"eps0", field(&TrainConfig::eps0)},
      {"sigma_d", field(&TrainConfig::sigma_d)},
      {"sigma_v", field(&TrainConfig::sigma_v)},
      {"nlh_iters", field(&TrainConfig::nlh_iters)},
      {"patch", field(&TrainConfig::patch)},
      {"split_train", field(&TrainConfig::split_train)},
      {"split_val", field(&TrainConfig::split_val)},
      {"log", field(&TrainConfig::log)},
      {"noise_c", field(&TrainConfig::noise_c)},
      {"gen_count", field(&TrainConfig::gen_count)},
      {"gen_width", field(&TrainConfig::gen_width)},
      {"gen_height", field(&TrainConfig::gen_height)},
      {"gen_min_objects", field(&TrainConfig::gen_min_objects)},
      {"gen_max_objects", field(&TrainConfig::gen_max_objects)},
  };
  return table;
}

}  // namespace

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, f] : fields()) {
    if (name == key) {
      f.set(cfg, key, value);
      return;
    }
  }
  throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfig, what); };
  if (scale != 1 && scale != 2 && scale != 4 && scale != 8 && scale != 16) fail("scale must be one of 1, 2, 4, 8, 16");
  if (side < 3 || side % 2 == 0) fail("side must be odd and >= 3");
  if (!(depth_scale > 0)) fail("depth_scale must be positive");
  if (hidden < 1) fail("hidden must be positive");
  if (pretrain_epochs < 0 || joint_epochs < 0) fail("epochs must be non-negative");
  if (!(pretrain_lr >= 0) || !(joint_lr >= 0)) fail("learning rates must be non-negative");
  if (!(pretrain_momentum >= 0 && pretrain_momentum < 1) || !(joint_momentum >= 0 && joint_momentum < 1)) {
    fail("momentum must lie in [0, 1)");
  }
  if (!(clip_norm >= 0)) fail("clip_norm must be non-negative");
  if (!(pretrain_eps > 0) || !(eps0 > 0)) fail("Huber thresholds must be positive");
  if (pdn_iters < 0 || nlh_iters < 0) fail("iteration counts must be non-negative");
  if (!(lambda0 >= 0) || !(sigma_d > 0) || !(sigma_v > 0)) fail("need lambda0 >= 0 and positive sigmas");
  if (patch < 0) fail("patch must be non-negative");
  if (!(split_train >= 0) || !(split_val >= 0) || split_train + split_val > 1) fail("invalid split fractions");
  if (!(noise_c >= 0)) fail("noise_c must be non-negative");
  if (gen_count < 0) fail("gen_count must be non-negative");
  gen_config().validate();
}

GenConfig TrainConfig::gen_config() const {
  GenConfig g;
  g.width = gen_width;
  g.height = gen_height;
  g.min_objects = gen_min_objects;
  g.max_objects = gen_max_objects;
  return g;
}

std::string TrainConfig::to_string() const {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(*this) + "\n";
  return out;
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig, "line " + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace dpdn
