#include "asf/runconfig.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace asf {

RunConfig::RunConfig() {
  // desk-scale defaults; the full-scale head is selected explicitly via
  // config keys when reproducing the parameter tables
  head.backbone_channels = 64;
  head.feature_channels = 32;
  head.observations = 8;
  head.groups = 4;
  head.activities = dataset.activities;
  head.dropout_rate = 0.5;
  train.iterations = 3000;
}

void RunConfig::validate() const {
  dataset.validate();
  HeadConfig h = head;
  h.activities = dataset.activities;
  h.validate();
  train.validate(dataset.t_full);
  if (temporal_pool == 0 || 32 % temporal_pool != 0)
    throw ConfigError("temporal_pool must divide the 32-frame clip length");
  if (threads == 0) throw ConfigError("threads must be positive");
  view_plan().validate(dataset.t_full);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_num(const std::string& key, const std::string& value) {
  std::istringstream ss(value);
  T v{};
  ss >> v;
  if (ss.fail() || !ss.eof())
    throw ConfigError("bad value '" + value + "' for key '" + key + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw ConfigError("bad boolean '" + value + "' for key '" + key + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    auto num = [&m](const char* key, auto member) {
      m[key] = [key, member](RunConfig& c, const std::string& v) {
        c.*member = parse_num<std::remove_reference_t<decltype(c.*member)>>(key, v);
      };
    };
    // dataset
    m["num_videos"] = [](RunConfig& c, const std::string& v) {
      c.dataset.num_videos = parse_num<std::size_t>("num_videos", v);
    };
    m["activities"] = [](RunConfig& c, const std::string& v) {
      c.dataset.activities = parse_num<std::size_t>("activities", v);
      c.head.activities = c.dataset.activities;
    };
    m["t_full"] = [](RunConfig& c, const std::string& v) {
      c.dataset.t_full = parse_num<std::size_t>("t_full", v);
    };
    m["width"] = [](RunConfig& c, const std::string& v) {
      c.dataset.width = parse_num<std::size_t>("width", v);
    };
    m["height"] = [](RunConfig& c, const std::string& v) {
      c.dataset.height = parse_num<std::size_t>("height", v);
    };
    m["channels"] = [](RunConfig& c, const std::string& v) {
      c.dataset.channels = parse_num<std::size_t>("channels", v);
    };
    m["min_activities"] = [](RunConfig& c, const std::string& v) {
      c.dataset.min_activities = parse_num<std::size_t>("min_activities", v);
    };
    m["max_activities"] = [](RunConfig& c, const std::string& v) {
      c.dataset.max_activities = parse_num<std::size_t>("max_activities", v);
    };
    m["snr"] = [](RunConfig& c, const std::string& v) {
      c.dataset.snr = parse_num<double>("snr", v);
    };
    m["eval_fraction"] = [](RunConfig& c, const std::string& v) {
      c.dataset.eval_fraction = parse_num<double>("eval_fraction", v);
    };
    m["data_seed"] = [](RunConfig& c, const std::string& v) {
      c.dataset.seed = parse_num<std::uint64_t>("data_seed", v);
    };
    // forced_pairs = j:k:p[,j:k:p...]; forbidden_pairs = j:k[,j:k...]
    m["forced_pairs"] = [](RunConfig& c, const std::string& v) {
      c.dataset.forced_pairs.clear();
      if (trim(v).empty()) return;
      for (const auto& item : split(v, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() != 3)
          throw ConfigError("forced_pairs entry '" + item + "' must be j:k:p");
        c.dataset.forced_pairs.push_back(
            {parse_num<std::size_t>("forced_pairs", parts[0]),
             parse_num<std::size_t>("forced_pairs", parts[1]),
             parse_num<double>("forced_pairs", parts[2])});
      }
    };
    m["forbidden_pairs"] = [](RunConfig& c, const std::string& v) {
      c.dataset.forbidden_pairs.clear();
      if (trim(v).empty()) return;
      for (const auto& item : split(v, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() != 2)
          throw ConfigError("forbidden_pairs entry '" + item + "' must be j:k");
        c.dataset.forbidden_pairs.push_back(
            {parse_num<std::size_t>("forbidden_pairs", parts[0]),
             parse_num<std::size_t>("forbidden_pairs", parts[1])});
      }
    };
    // head
    m["backbone_channels"] = [](RunConfig& c, const std::string& v) {
      c.head.backbone_channels = parse_num<std::size_t>("backbone_channels", v);
    };
    m["feature_channels"] = [](RunConfig& c, const std::string& v) {
      c.head.feature_channels = parse_num<std::size_t>("feature_channels", v);
    };
    m["observations"] = [](RunConfig& c, const std::string& v) {
      c.head.observations = parse_num<std::size_t>("observations", v);
    };
    m["groups"] = [](RunConfig& c, const std::string& v) {
      c.head.groups = parse_num<std::size_t>("groups", v);
    };
    m["dropout_rate"] = [](RunConfig& c, const std::string& v) {
      c.head.dropout_rate = parse_num<double>("dropout_rate", v);
    };
    num("temporal_pool", &RunConfig::temporal_pool);
    num("backbone_seed", &RunConfig::backbone_seed);
    num("init_seed", &RunConfig::init_seed);
    // training
    m["learning_rate"] = [](RunConfig& c, const std::string& v) {
      c.train.learning_rate = parse_num<double>("learning_rate", v);
    };
    m["weight_decay"] = [](RunConfig& c, const std::string& v) {
      c.train.weight_decay = parse_num<double>("weight_decay", v);
    };
    m["batch_size"] = [](RunConfig& c, const std::string& v) {
      c.train.batch_size = parse_num<std::size_t>("batch_size", v);
    };
    m["iterations"] = [](RunConfig& c, const std::string& v) {
      c.train.iterations = parse_num<std::size_t>("iterations", v);
    };
    m["finetune_iterations"] = [](RunConfig& c, const std::string& v) {
      c.train.finetune_iterations = parse_num<std::size_t>("finetune_iterations", v);
    };
    m["base_rate"] = [](RunConfig& c, const std::string& v) {
      c.train.base_rate = parse_num<std::size_t>("base_rate", v);
    };
    m["tuning_rates"] = [](RunConfig& c, const std::string& v) {
      c.train.tuning_rates.clear();
      for (const auto& item : split(v, ','))
        c.train.tuning_rates.push_back(parse_num<std::size_t>("tuning_rates", item));
    };
    m["train_seed"] = [](RunConfig& c, const std::string& v) {
      c.train.seed = parse_num<std::uint64_t>("train_seed", v);
    };
    // views
    num("views_r2", &RunConfig::views_r2);
    num("views_r4", &RunConfig::views_r4);
    num("views_r8", &RunConfig::views_r8);
    // paths, ablations, execution
    m["data_dir"] = [](RunConfig& c, const std::string& v) { c.data_dir = v; };
    m["output_dir"] = [](RunConfig& c, const std::string& v) { c.output_dir = v; };
    m["disable_correlation"] = [](RunConfig& c, const std::string& v) {
      c.disable_correlation = parse_bool("disable_correlation", v);
    };
    m["disable_activity_specific"] = [](RunConfig& c, const std::string& v) {
      c.disable_activity_specific = parse_bool("disable_activity_specific", v);
    };
    num("threads", &RunConfig::threads);
    return m;
  }();
  return table;
}

void apply_line(RunConfig& cfg, const std::string& raw, const std::string& where) {
  std::string line = raw;
  const auto hash = line.find('#');
  if (hash != std::string::npos) line.erase(hash);
  line = trim(line);
  if (line.empty()) return;
  const auto eq = line.find('=');
  if (eq == std::string::npos)
    throw ConfigError("missing '=' in " + where + ": '" + trim(raw) + "'");
  const std::string key = trim(line.substr(0, eq));
  const std::string value = trim(line.substr(eq + 1));
  auto it = setters().find(key);
  if (it == setters().end())
    throw ConfigError("unknown config key '" + key + "' in " + where);
  it->second(cfg, value);
}

}  // namespace

RunConfig parse_run_config(std::istream& in,
                           const std::vector<std::string>& overrides) {
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    apply_line(cfg, line, "line " + std::to_string(line_no));
  }
  for (const auto& ov : overrides) apply_line(cfg, ov, "--set override");
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  return parse_run_config(f, overrides);
}

}  // namespace asf
