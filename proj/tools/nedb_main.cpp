// nedb: dataset generation, training, evaluation and verification commands.

#include <CLI11.hpp>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <spdlog/spdlog.h>

#include "nedb/checkpoint.hpp"
#include "nedb/constrained_noise.hpp"
#include "nedb/dataset.hpp"
#include "nedb/gradcheck.hpp"
#include "nedb/pipeline.hpp"
#include "nedb/run_config.hpp"

namespace fs = std::filesystem;
using namespace nedb;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

const CLI::Validator kOddSize = CLI::Validator(
    [](std::string& s) -> std::string {
      int k = 0;
      try {
        k = std::stoi(s);
      } catch (...) {
        return "not an integer: " + s;
      }
      if (k < 3 || k % 2 == 0) return "kernel size must be odd and >= 3, got " + s;
      return {};
    },
    "ODD>=3");

const CLI::Validator kShapeName = CLI::Validator(
    [](std::string& s) -> std::string {
      try {
        parse_element_shape(s);
      } catch (const std::invalid_argument& e) {
        return e.what();
      }
      return {};
    },
    "SHAPE");

RunConfig config_with_overrides(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig c = path.empty() ? RunConfig{} : load_run_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_run_key(c, kv.substr(0, eq), kv.substr(eq + 1), fs::current_path());
  }
  c.validate();
  return c;
}

int cmd_init_weights(const std::string& scheme, int size, const std::string& mode, std::uint64_t seed,
                     const std::string& out) {
  const auto bank = ConstrainedKernelBank::create({size}, parse_init_scheme(scheme), parse_projection_mode(mode), seed);
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  bank.save(out);
  std::cout << fmt::format("wrote {} kernel(s) of size {} to {}\n", bank.kernel_count(), size, out);
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, int seeds, double corrupt, const std::string& out) {
  GradCheckOptions opts;
  opts.corrupt_factor = corrupt;
  std::ofstream csv;
  if (!out.empty()) {
    fs::create_directories(out);
    csv.open(fs::path(out) / "gradcheck.csv", std::ios::binary);
    csv << "op,seeds,max_rel_error,passed\n";
  }
  bool all_passed = true;
  std::cout << fmt::format("{:<24} {:>6} {:>14}  {}\n", "op", "seeds", "max_rel_error", "result");
  for (const auto& check : op_check_registry()) {
    double worst = 0.0;
    bool passed = true;
    for (int s = 0; s < seeds; ++s) {
      const auto r = run_op_check(check, seed + static_cast<std::uint64_t>(s), opts);
      worst = std::max(worst, r.max_rel_error);
      passed = passed && r.passed;
    }
    all_passed = all_passed && passed;
    std::cout << fmt::format("{:<24} {:>6} {:>14.3e}  {}\n", check.name, seeds, worst, passed ? "PASS" : "FAIL");
    if (csv) csv << fmt::format("{},{},{:.6e},{}\n", check.name, seeds, worst, passed ? "true" : "false");
  }
  return all_passed ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-residual dual-branch manipulation detector"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress");

  // init-weights
  auto* init = app.add_subcommand("init-weights", "Write an initialized constrained kernel bank");
  std::string scheme = "laplace-like-d", mode = "improved", init_out;
  int kernel_size = 5;
  std::uint64_t init_seed = 0;
  init->add_option("--scheme", scheme, "random | random-sum | laplace-like | laplace-like-d")
      ->check(CLI::IsMember({"random", "random-sum", "laplace-like", "laplace-like-d"}))
      ->capture_default_str();
  init->add_option("--size", kernel_size, "Kernel size (odd)")->check(kOddSize)->capture_default_str();
  init->add_option("--mode", mode, "improved | original")
      ->check(CLI::IsMember({"improved", "original"}))
      ->capture_default_str();
  init->add_option("--seed", init_seed, "Seed for random schemes")->capture_default_str();
  init->add_option("--out", init_out, "Output file")->required();

  // gen-forgery
  auto* gen = app.add_subcommand("gen-forgery", "Generate a synthetic copy-move/splice dataset");
  std::string images_dir, objects_dir, coco_dir, gen_out;
  int synthetic = 0, synthetic_size = 64;
  GenerateOptions gen_opts;
  std::string gen_edge_shape = "ellipse";
  int gen_edge_size = 5;
  auto* images_opt = gen->add_option("--images", images_dir, "Directory of P6 source images");
  auto* objects_opt = gen->add_option("--objects", objects_dir, "Directory of P5 object masks (same stems)");
  auto* coco_opt = gen->add_option("--coco-style-dir", coco_dir, "Directory holding images/ and objects/");
  auto* synth_opt = gen->add_option("--synthetic", synthetic, "Number of procedural source scenes");
  gen->add_option("--synthetic-size", synthetic_size, "Side of procedural scenes")->capture_default_str();
  images_opt->needs(objects_opt);
  objects_opt->needs(images_opt);
  coco_opt->excludes(images_opt)->excludes(synth_opt);
  synth_opt->excludes(images_opt);
  gen->add_option("--count", gen_opts.count, "Number of samples")->capture_default_str();
  gen->add_option("--seed", gen_opts.seed, "Base seed; sample i uses seed + i")->capture_default_str();
  gen->add_option("--max-rotation", gen_opts.ranges.max_rotation_deg, "Degrees")->capture_default_str();
  gen->add_option("--min-scale", gen_opts.ranges.min_scale)->capture_default_str();
  gen->add_option("--max-scale", gen_opts.ranges.max_scale)->capture_default_str();
  gen->add_option("--max-blur", gen_opts.ranges.max_blur_sigma, "Largest boundary blur sigma")->capture_default_str();
  gen->add_option("--splice-probability", gen_opts.ranges.splice_probability)->capture_default_str();
  gen->add_option("--edge-shape", gen_edge_shape, "ellipse | rect | cross")->check(kShapeName)->capture_default_str();
  gen->add_option("--edge-size", gen_edge_size, "Edge element size")->check(kOddSize)->capture_default_str();
  gen->add_option("--out", gen_out, "Output dataset directory")->required();

  // gen-edge-gt
  auto* edge = app.add_subcommand("gen-edge-gt", "Derive edge ground truth for a manifest");
  std::string edge_manifest, edge_shape = "ellipse", edge_out;
  int edge_size = 5;
  edge->add_option("--manifest", edge_manifest, "Input manifest")->required();
  edge->add_option("--shape", edge_shape, "ellipse | rect | cross")->check(kShapeName)->capture_default_str();
  edge->add_option("--size", edge_size, "Element size")->check(kOddSize)->capture_default_str();
  edge->add_option("--out", edge_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  std::string train_config, train_out;
  std::vector<std::string> train_set;
  train->add_option("--config", train_config, "key=value run config")->required();
  train->add_option("--set", train_set, "Override a config key (key=value)");
  train->add_option("--out", train_out, "Output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  std::string eval_ckpt, eval_manifest, eval_out, eval_config;
  bool eval_overlays = false, eval_pooled = false;
  eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval->add_option("--manifest", eval_manifest, "Evaluation manifest")->required();
  eval->add_option("--config", eval_config, "Optional run config (threshold, averaging)");
  eval->add_flag("--overlays", eval_overlays, "Write prediction overlays");
  eval->add_flag("--pooled", eval_pooled, "Pool pixels across images instead of averaging per image");
  eval->add_option("--out", eval_out, "Output directory")->required();

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  std::uint64_t grad_seed = 0;
  int grad_seeds = 20;
  double grad_corrupt = 1.0;
  std::string grad_out;
  grad->add_option("--seed", grad_seed, "First seed")->capture_default_str();
  grad->add_option("--seeds", grad_seeds, "Seeds per op")->check(CLI::PositiveNumber)->capture_default_str();
  grad->add_option("--corrupt", grad_corrupt, "Scale tape gradients by this factor before comparing");
  grad->add_option("--out", grad_out, "Directory for gradcheck.csv");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate a family of variants");
  std::string suite, ablate_config, ablate_out;
  std::vector<std::string> ablate_set;
  ablate->add_option("--suite", suite, "dual-branch | init | kernel-size | edge-kernel | attention")
      ->required()
      ->check(CLI::IsMember(ablation_suites()));
  ablate->add_option("--config", ablate_config, "Base run config")->required();
  ablate->add_option("--set", ablate_set, "Override a config key (key=value)");
  ablate->add_option("--out", ablate_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*init) return cmd_init_weights(scheme, kernel_size, mode, init_seed, init_out);

    if (*gen) {
      std::vector<ObjectSource> sources;
      if (!coco_dir.empty()) {
        sources = load_object_sources(fs::path(coco_dir) / "images", fs::path(coco_dir) / "objects");
      } else if (!images_dir.empty()) {
        sources = load_object_sources(images_dir, objects_dir);
      } else if (synthetic > 0) {
        sources = synthetic_object_sources(synthetic, synthetic_size, gen_opts.seed);
      } else {
        throw UsageError("gen-forgery needs --images/--objects, --coco-style-dir or --synthetic");
      }
      gen_opts.edge_element = StructuringElement::make(parse_element_shape(gen_edge_shape), gen_edge_size);
      const auto records = generate_dataset(sources, gen_opts, gen_out);
      std::cout << fmt::format("wrote {} samples to {}\n", records.size(), gen_out);
      return kExitOk;
    }

    if (*edge) {
      const auto se = StructuringElement::make(parse_element_shape(edge_shape), edge_size);
      const auto records = generate_edge_masks(read_manifest(edge_manifest), se, edge_out);
      write_manifest(fs::path(edge_out) / "manifest.csv", records);
      std::cout << fmt::format("wrote {} edge masks to {}\n", records.size(), edge_out);
      return kExitOk;
    }

    if (*train) {
      const RunConfig c = config_with_overrides(train_config, train_set);
      const auto log = run_training(c, train_out);
      std::cout << fmt::format("trained {} steps, final loss {:.6f}\n", log.size(), log.back().loss_total);
      return kExitOk;
    }

    if (*eval) {
      RunConfig c = config_with_overrides(eval_config, {});
      if (eval_overlays) c.overlays = true;
      if (eval_pooled) c.averaging = Averaging::kPooled;
      const auto report = run_evaluation(eval_ckpt, read_manifest(eval_manifest), c, eval_out);
      write_metrics_csv(report, std::cout);
      if (report.auc_excluded > 0) {
        std::cout << fmt::format("{} image(s) had a single class and no AUC\n", report.auc_excluded);
      }
      return kExitOk;
    }

    if (*grad) return cmd_gradcheck(grad_seed, grad_seeds, grad_corrupt, grad_out);

    if (*ablate) {
      const RunConfig base = config_with_overrides(ablate_config, ablate_set);
      fs::create_directories(ablate_out);
      std::ofstream(fs::path(ablate_out) / "run.cfg", std::ios::binary) << format_run_config(base);
      const auto rows = run_ablation(ablation_variants(suite, base), [](const AblationRow& r) {
        spdlog::info("{}: f1 {:.6f}", r.name, r.report.mean_prf.f1);
      });
      std::ofstream csv(fs::path(ablate_out) / "ablation.csv", std::ios::binary);
      write_ablation_csv(rows, csv);
      write_ablation_csv(rows, std::cout);
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
