#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "nedb/metrics.hpp"
#include "nedb/network.hpp"

namespace nedb {

/// Raised for unknown keys or unparsable values; the message names the line.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Model, optimizer, data and evaluation settings of one run.
struct RunConfig {
  NedbConfig model = desk_model();

  std::string train_manifest;
  std::string eval_manifest;

  int steps = 300;
  int batch_size = 4;
  /// Desk-scale rate; the full-scale preset uses 0.01 with drops to
  /// 0.0075, 0.005 and 0.0025.
  double learning_rate = 0.05;
  double momentum = 0.9;
  /// Fractions of `steps` after which the learning rate drops to the
  /// matching entry of lr_values.
  std::vector<double> lr_milestones{5.0 / 12.0, 7.5 / 12.0, 10.0 / 12.0};
  std::vector<double> lr_values{0.0375, 0.025, 0.0125};
  bool augment = true;
  std::uint64_t seed = 0;
  /// Recompute edge targets from the masks instead of reading edge files.
  bool recompute_edges = false;
  /// Bank invariants are asserted every this many steps (0 disables).
  int invariant_check_every = 10;

  double threshold = kDefaultThreshold;
  Averaging averaging = Averaging::kPerImage;
  bool overlays = false;

  static NedbConfig desk_model();
  void validate() const;
};

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
/// Relative manifest paths are resolved against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
/// Applies one key=value; throws ConfigError for unknown keys.
void apply_run_key(RunConfig& config, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir = {});
/// Every key in a fixed order, one `key=value` per line.
std::string format_run_config(const RunConfig& config);

/// Learning rate of a 1-based step.
double learning_rate_at(const RunConfig& config, int step);

}  // namespace nedb
