#include "nedb/run_config.hpp"

#include <fmt/format.h>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace nedb {
namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_double(const std::string& text) {
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw std::invalid_argument("bad number '" + text + "'");
  return v;
}

int parse_int(const std::string& text) {
  std::size_t used = 0;
  const int v = std::stoi(text, &used);
  if (used != text.size()) throw std::invalid_argument("bad integer '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("bad boolean '" + text + "'");
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) out.push_back(parse_double(trim(part)));
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt::format("{}", v[i]);
  return out;
}

std::string resolve(const std::string& value, const fs::path& base) {
  if (value.empty() || base.empty() || fs::path(value).is_absolute()) return value;
  return (base / value).lexically_normal().string();
}

}  // namespace

NedbConfig RunConfig::desk_model() {
  NedbConfig m;
  m.base_width = 8;
  m.input_size = 64;
  return m;
}

void RunConfig::validate() const {
  model.validate();
  if (steps < 1) throw ConfigError("steps must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (lr_milestones.size() != lr_values.size()) throw ConfigError("lr_milestones and lr_values differ in length");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
}

void apply_run_key(RunConfig& c, const std::string& key, const std::string& value, const fs::path& base_dir) {
  try {
    if (key == "train_manifest") {
      c.train_manifest = resolve(value, base_dir);
    } else if (key == "eval_manifest") {
      c.eval_manifest = resolve(value, base_dir);
    } else if (key == "steps") {
      c.steps = parse_int(value);
    } else if (key == "batch_size") {
      c.batch_size = parse_int(value);
    } else if (key == "learning_rate") {
      c.learning_rate = parse_double(value);
    } else if (key == "momentum") {
      c.momentum = parse_double(value);
    } else if (key == "lr_milestones") {
      c.lr_milestones = parse_double_list(value);
    } else if (key == "lr_values") {
      c.lr_values = parse_double_list(value);
    } else if (key == "augment") {
      c.augment = parse_bool(value);
    } else if (key == "seed") {
      c.seed = std::stoull(value);
    } else if (key == "recompute_edges") {
      c.recompute_edges = parse_bool(value);
    } else if (key == "invariant_check_every") {
      c.invariant_check_every = parse_int(value);
    } else if (key == "threshold") {
      c.threshold = parse_double(value);
    } else if (key == "averaging") {
      if (value == "per-image") {
        c.averaging = Averaging::kPerImage;
      } else if (value == "pooled") {
        c.averaging = Averaging::kPooled;
      } else {
        throw std::invalid_argument("averaging must be per-image or pooled");
      }
    } else if (key == "overlays") {
      c.overlays = parse_bool(value);
    } else if (!apply_key_value(c.model, key, value)) {
      throw ConfigError(fmt::format("unknown config key '{}'", key));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("bad value '{}' for '{}': {}", value, key, e.what()));
  }
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected key=value, got '{}'", line_no, line));
    try {
      apply_run_key(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), fs::absolute(path).parent_path());
}

std::string format_run_config(const RunConfig& c) {
  std::string out;
  const auto line = [&out](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
  for (const auto& [k, v] : to_key_values(c.model)) line(k, v);
  line("train_manifest", c.train_manifest);
  line("eval_manifest", c.eval_manifest);
  line("steps", std::to_string(c.steps));
  line("batch_size", std::to_string(c.batch_size));
  line("learning_rate", fmt::format("{}", c.learning_rate));
  line("momentum", fmt::format("{}", c.momentum));
  line("lr_milestones", join(c.lr_milestones));
  line("lr_values", join(c.lr_values));
  line("augment", c.augment ? "true" : "false");
  line("seed", std::to_string(c.seed));
  line("recompute_edges", c.recompute_edges ? "true" : "false");
  line("invariant_check_every", std::to_string(c.invariant_check_every));
  line("threshold", fmt::format("{}", c.threshold));
  line("averaging", c.averaging == Averaging::kPooled ? "pooled" : "per-image");
  line("overlays", c.overlays ? "true" : "false");
  return out;
}

double learning_rate_at(const RunConfig& c, int step) {
  const double progress = static_cast<double>(step - 1) / c.steps;
  double lr = c.learning_rate;
  for (std::size_t i = 0; i < c.lr_milestones.size(); ++i) {
    if (progress >= c.lr_milestones[i]) lr = c.lr_values[i];
  }
  return lr;
}

}  // namespace nedb
