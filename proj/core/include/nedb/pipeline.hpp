#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nedb/dataset.hpp"
#include "nedb/metrics.hpp"
#include "nedb/network.hpp"
#include "nedb/run_config.hpp"

namespace nedb {

struct TrainStep {
  int step = 0;
  double lr = 0.0;
  double loss_region = 0.0;
  double loss_edge = 0.0;
  double loss_total = 0.0;
};

/// Raised when the constrained bank leaves its constraint set during training.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Edge element of a model config.
StructuringElement edge_element(const NedbConfig& config);

/// Loads every record at the model resolution.
std::vector<LoadedSample> load_samples(const std::vector<SampleRecord>& records, const RunConfig& config);

/// SGD with momentum on the combined Dice loss, projecting the constrained
/// bank after every step. Returns one log entry per step.
std::vector<TrainStep> train_model(NedbModel& model, const RunConfig& config, const std::vector<LoadedSample>& data,
                                   const std::function<void(const TrainStep&)>& on_step = {});

/// Mask probabilities (S x S) of one sample in eval mode.
std::vector<double> predict_mask(NedbModel& model, const LoadedSample& sample);

/// Per-image metrics in record order. Overlays go to `overlay_dir` when it is
/// non-empty.
MetricReport evaluate_model(NedbModel& model, const std::vector<LoadedSample>& data, const RunConfig& config,
                            const std::filesystem::path& overlay_dir = {});

void write_loss_log(const std::vector<TrainStep>& log, std::ostream& out);

/// Mean total loss over log entries [first, last] (1-based, clipped).
double mean_total_loss(const std::vector<TrainStep>& log, int first, int last);

/// train command: writes run.cfg, loss_log.csv and model.ckpt under out_dir.
std::vector<TrainStep> run_training(const RunConfig& config, const std::filesystem::path& out_dir);
/// eval command: writes run.cfg, metrics.csv and optional overlays/.
MetricReport run_evaluation(const std::filesystem::path& checkpoint, const std::vector<SampleRecord>& records,
                            const RunConfig& config, const std::filesystem::path& out_dir);

struct AblationVariant {
  std::string name;
  RunConfig config;
};

struct AblationRow {
  std::string name;
  MetricReport report;
  double final_loss = 0.0;
};

/// Known suites: dual-branch, init, kernel-size, edge-kernel, attention.
const std::vector<std::string>& ablation_suites();
/// Throws std::invalid_argument for an unknown suite.
std::vector<AblationVariant> ablation_variants(const std::string& suite, const RunConfig& base);

/// Trains and evaluates every variant on the base config's manifests.
std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                      const std::function<void(const AblationRow&)>& on_row = {});

/// `variant,precision,recall,f1,auc,final_loss`, 6 decimals.
void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& out);

}  // namespace nedb
