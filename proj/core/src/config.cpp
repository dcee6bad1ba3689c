#include "usema/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace usema {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got '" + value + "'");
}

std::int64_t as_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t as_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double as_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a real number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a real number");
  }
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::int64_t> as_list(const std::string& key, const std::string& v) {
  std::vector<std::int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(as_int(key, trim(item)));
  if (out.empty()) bad_value(key, v, "a comma-separated integer list");
  return out;
}

std::string list_str(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string real_str(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"stages", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.stages = as_int(k, v); }},
      {"base_channels", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.base_channels = as_int(k, v); }},
      {"in_channels", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.in_channels = as_int(k, v); }},
      {"classes", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.classes = as_int(k, v); }},
      {"head_dim", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.head_dim = as_int(k, v); }},
      {"heads", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.heads = as_list(k, v); }},
      {"windows", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.windows = as_list(k, v); }},
      {"bottleneck_window", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.bottleneck_window = as_int(k, v); }},
      {"global_average", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.global_average = as_bool(k, v); }},
      {"residual_norm", [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v != "instance" && v != "none") {
           throw ConfigError("config key '" + k + "': expected instance or none, got '" + v + "'");
         }
         c.model.instance_norm = v == "instance";
       }},
      {"deep_supervision", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.deep_supervision = as_bool(k, v); }},
      {"lr", [](TrainConfig& c, const std::string& k, const std::string& v) { c.optim.lr = as_real(k, v); }},
      {"weight_decay", [](TrainConfig& c, const std::string& k, const std::string& v) { c.optim.weight_decay = as_real(k, v); }},
      {"beta1", [](TrainConfig& c, const std::string& k, const std::string& v) { c.optim.beta1 = as_real(k, v); }},
      {"beta2", [](TrainConfig& c, const std::string& k, const std::string& v) { c.optim.beta2 = as_real(k, v); }},
      {"adam_eps", [](TrainConfig& c, const std::string& k, const std::string& v) { c.optim.eps = as_real(k, v); }},
      {"epochs", [](TrainConfig& c, const std::string& k, const std::string& v) { c.epochs = as_int(k, v); }},
      {"batch_size", [](TrainConfig& c, const std::string& k, const std::string& v) { c.batch_size = as_int(k, v); }},
      {"t_max", [](TrainConfig& c, const std::string& k, const std::string& v) { c.t_max = as_int(k, v); }},
      {"eta_min", [](TrainConfig& c, const std::string& k, const std::string& v) { c.eta_min = as_real(k, v); }},
      {"seed", [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = as_uint(k, v); }},
      {"target_val_dsc", [](TrainConfig& c, const std::string& k, const std::string& v) { c.target_val_dsc = as_real(k, v); }},
      {"nsd_tau", [](TrainConfig& c, const std::string& k, const std::string& v) { c.nsd_tau = as_real(k, v); }},
  };
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (t_max < 1) throw ConfigError("t_max must be >= 1");
  if (!(optim.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(optim.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0) || !(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) {
    throw ConfigError("betas must lie in [0, 1)");
  }
  if (!(optim.eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(nsd_tau > 0.0)) throw ConfigError("nsd_tau must be > 0");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  bool has_classes = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, key, value);
    has_classes = has_classes || key == "classes";
  }
  if (!has_classes) throw ConfigError("missing required config key 'classes'");
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_text(const TrainConfig& c) {
  std::ostringstream out;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  out << "stages = " << c.model.stages << '\n'
      << "base_channels = " << c.model.base_channels << '\n'
      << "in_channels = " << c.model.in_channels << '\n'
      << "classes = " << c.model.classes << '\n'
      << "head_dim = " << c.model.head_dim << '\n';
  if (!c.model.heads.empty()) out << "heads = " << list_str(c.model.heads) << '\n';
  out << "windows = " << list_str(c.model.windows) << '\n'
      << "bottleneck_window = " << c.model.bottleneck_window << '\n'
      << "global_average = " << b(c.model.global_average) << '\n'
      << "deep_supervision = " << b(c.model.deep_supervision) << '\n'
      << "residual_norm = " << (c.model.instance_norm ? "instance" : "none") << '\n'
      << "lr = " << real_str(c.optim.lr) << '\n'
      << "weight_decay = " << real_str(c.optim.weight_decay) << '\n'
      << "beta1 = " << real_str(c.optim.beta1) << '\n'
      << "beta2 = " << real_str(c.optim.beta2) << '\n'
      << "adam_eps = " << real_str(c.optim.eps) << '\n'
      << "epochs = " << c.epochs << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "t_max = " << c.t_max << '\n'
      << "eta_min = " << real_str(c.eta_min) << '\n'
      << "seed = " << c.seed << '\n'
      << "target_val_dsc = " << real_str(c.target_val_dsc) << '\n'
      << "nsd_tau = " << real_str(c.nsd_tau) << '\n';
  return out.str();
}

}  // namespace usema
