#include "nedb/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <spdlog/spdlog.h>

#include "nedb/checkpoint.hpp"
#include "nedb/losses.hpp"
#include "nedb/tape.hpp"

namespace fs = std::filesystem;

namespace nedb {
namespace {

// Mirror (left-right) and/or flip (top-bottom) every plane of a C x S x S block.
void flip_planes(std::vector<double>& v, int channels, int size, bool mirror, bool flip) {
  if (!mirror && !flip) return;
  std::vector<double> out(v.size());
  const auto s = static_cast<std::size_t>(size);
  for (std::size_t ch = 0; ch < static_cast<std::size_t>(channels); ++ch) {
    for (std::size_t r = 0; r < s; ++r) {
      const std::size_t sr = flip ? s - 1 - r : r;
      for (std::size_t c = 0; c < s; ++c) {
        const std::size_t sc = mirror ? s - 1 - c : c;
        out[(ch * s + r) * s + c] = v[(ch * s + sr) * s + sc];
      }
    }
  }
  v = std::move(out);
}

void check_bank_invariants(const ConstrainedKernelBank& bank, int step) {
  if (bank.mode() != ProjectionMode::kImproved) return;
  for (std::size_t i = 0; i < bank.kernel_count(); ++i) {
    const Kernel& k = bank.kernel(i);
    if (k.min_non_center() < kMinNonCenterWeight) {
      throw InvariantViolation(fmt::format("step {}: kernel {} has a non-center weight {} below {}", step, i,
                                           k.min_non_center(), kMinNonCenterWeight));
    }
    if (bank.center_rule() == CenterRule::kNegativeSum && std::abs(k.total()) >= 1e-9) {
      throw InvariantViolation(fmt::format("step {}: kernel {} sums to {}", step, i, k.total()));
    }
  }
}

std::string fixed(double v) { return fmt::format("{:.6f}", v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << text;
}

}  // namespace

StructuringElement edge_element(const NedbConfig& config) {
  return StructuringElement::make(config.edge_shape, config.edge_size);
}

std::vector<LoadedSample> load_samples(const std::vector<SampleRecord>& records, const RunConfig& config) {
  validate_records(records);
  const StructuringElement se = edge_element(config.model);
  std::vector<LoadedSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(load_sample(r, config.model.input_size, se, !config.recompute_edges));
  return out;
}

std::vector<TrainStep> train_model(NedbModel& model, const RunConfig& config, const std::vector<LoadedSample>& data,
                                   const std::function<void(const TrainStep&)>& on_step) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("training set is empty");
  const int size = model.config().input_size;
  for (const auto& s : data) {
    if (s.size != size) throw ShapeError(fmt::format("sample {} is {}px, model expects {}px", s.id, s.size, size));
  }
  const int edge_size = size / 4;
  const auto plane = static_cast<std::size_t>(size) * size;
  const auto edge_plane = static_cast<std::size_t>(edge_size) * edge_size;
  const std::int64_t batch = config.batch_size;
  const double alpha = model.config().use_edge ? model.config().alpha : 1.0;

  std::mt19937_64 rng(config.seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  std::map<std::string, std::vector<double>> velocity;
  auto sgd = [&](const std::string& name, std::vector<double>& w, std::span<const double> g, double lr) {
    auto& v = velocity[name];
    if (v.empty()) v.assign(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = config.momentum * v[i] + g[i];
      w[i] -= lr * v[i];
    }
  };

  std::vector<TrainStep> log;
  for (int step = 1; step <= config.steps; ++step) {
    std::vector<double> images, masks, edges;
    images.reserve(batch * 3 * plane);
    masks.reserve(batch * plane);
    edges.reserve(batch * edge_plane);
    for (std::int64_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const LoadedSample& s = data[order[cursor++]];
      std::vector<double> im = s.image.to_vector(), m = s.mask, e = s.edge;
      if (config.augment) {
        const bool mirror = coin(rng), flip = coin(rng);
        flip_planes(im, 3, size, mirror, flip);
        flip_planes(m, 1, size, mirror, flip);
        flip_planes(e, 1, edge_size, mirror, flip);
      }
      images.insert(images.end(), im.begin(), im.end());
      masks.insert(masks.end(), m.begin(), m.end());
      edges.insert(edges.end(), e.begin(), e.end());
    }
    const Tensor x({batch, 3, size, size}, std::move(images));
    const Tensor mask_gt({batch, 1, size, size}, std::move(masks));
    const Tensor edge_gt({batch, 1, edge_size, edge_size}, std::move(edges));

    Tape tape;
    TrainStep entry;
    entry.step = step;
    entry.lr = learning_rate_at(config, step);
    Gradients grads;
    Tensor bank_weights;
    {
      TapeScope scope(tape);
      const ForwardResult out = model.forward(x, Mode::kTrain);
      bank_weights = out.bank_weights;
      const CombinedLoss loss = combined_loss(out.mask, mask_gt, out.edge, edge_gt, alpha);
      entry.loss_region = loss.region.item();
      entry.loss_edge = loss.edge.item();
      entry.loss_total = loss.total.item();
      grads = tape.backward(loss.total);
    }

    model.visit_parameters([&](const std::string& name, Tensor& p) {
      std::vector<double> w = p.to_vector();
      const Tensor g = grads.of(p);
      sgd(name, w, g.data(), entry.lr);
      p = Tensor::parameter(p.shape(), std::move(w));
    });
    if (!bank_weights.empty() && grads.has(bank_weights)) {
      ConstrainedKernelBank& bank = model.bank();
      const auto wg = grads.raw(bank_weights);
      for (std::size_t i = 0; i < bank.kernel_count(); ++i) {
        const auto kg = bank.kernel_gradient(wg, i);
        sgd(fmt::format("constrained.kernel{}", i), bank.kernel(i).weights, kg, entry.lr);
      }
      bank.project();
      if (config.invariant_check_every > 0 && step % config.invariant_check_every == 0) check_bank_invariants(bank, step);
    }

    log.push_back(entry);
    if (on_step) on_step(entry);
  }
  return log;
}

std::vector<double> predict_mask(NedbModel& model, const LoadedSample& sample) {
  NoGradScope no_grad;
  return model.forward(sample.image, Mode::kEval).mask.to_vector();
}

MetricReport evaluate_model(NedbModel& model, const std::vector<LoadedSample>& data, const RunConfig& config,
                            const fs::path& overlay_dir) {
  MetricAccumulator acc(config.threshold, config.averaging);
  if (!overlay_dir.empty()) fs::create_directories(overlay_dir);
  for (const auto& s : data) {
    const std::vector<double> scores = predict_mask(model, s);
    std::vector<std::uint8_t> labels(s.mask.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = s.mask[i] > 0.5 ? 1 : 0;
    acc.add(s.id, scores, labels);
    if (!overlay_dir.empty()) {
      const std::vector<double> bgr = denormalize(s.image);
      Image overlay(s.size, s.size, 3);
      for (std::size_t i = 0; i < scores.size(); ++i) {
        for (int ch = 0; ch < 3; ++ch) {
          double v = bgr[i * 3 + static_cast<std::size_t>(2 - ch)];
          if (scores[i] >= config.threshold) v = 0.5 * v + (ch == 0 ? 127.5 : 0.0);
          overlay.pixels[i * 3 + static_cast<std::size_t>(ch)] =
              static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
        }
      }
      write_image((overlay_dir / (s.id + ".ppm")).string(), overlay);
    }
  }
  return acc.finish();
}

void write_loss_log(const std::vector<TrainStep>& log, std::ostream& out) {
  out << "step,lr,loss_region,loss_edge,loss_total\n";
  for (const auto& e : log) {
    out << e.step << ',' << fixed(e.lr) << ',' << fixed(e.loss_region) << ',' << fixed(e.loss_edge) << ','
        << fixed(e.loss_total) << '\n';
  }
}

double mean_total_loss(const std::vector<TrainStep>& log, int first, int last) {
  first = std::max(first, 1);
  last = std::min(last, static_cast<int>(log.size()));
  if (first > last) throw std::invalid_argument("empty loss window");
  double sum = 0.0;
  for (int i = first; i <= last; ++i) sum += log[static_cast<std::size_t>(i - 1)].loss_total;
  return sum / (last - first + 1);
}

std::vector<TrainStep> run_training(const RunConfig& config, const fs::path& out_dir) {
  if (config.train_manifest.empty()) throw std::invalid_argument("train_manifest is not set");
  fs::create_directories(out_dir);
  write_text(out_dir / "run.cfg", format_run_config(config));
  const auto data = load_samples(read_manifest(config.train_manifest), config);
  NedbModel model(config.model);
  const auto log = train_model(model, config, data, [](const TrainStep& e) {
    if (e.step % 10 == 0) spdlog::info("step {} lr {} loss {:.6f}", e.step, e.lr, e.loss_total);
  });
  std::ofstream loss(out_dir / "loss_log.csv", std::ios::binary);
  write_loss_log(log, loss);
  save_checkpoint(model, (out_dir / "model.ckpt").string());
  return log;
}

MetricReport run_evaluation(const fs::path& checkpoint, const std::vector<SampleRecord>& records,
                            const RunConfig& config, const fs::path& out_dir) {
  NedbModel model = load_checkpoint(checkpoint.string());
  RunConfig resolved = config;
  resolved.model = model.config();
  fs::create_directories(out_dir);
  write_text(out_dir / "run.cfg", format_run_config(resolved));
  const auto data = load_samples(records, resolved);
  const MetricReport report = evaluate_model(model, data, resolved, resolved.overlays ? out_dir / "overlays" : fs::path{});
  std::ofstream csv(out_dir / "metrics.csv", std::ios::binary);
  write_metrics_csv(report, csv);
  return report;
}

const std::vector<std::string>& ablation_suites() {
  static const std::vector<std::string> suites{"dual-branch", "init", "kernel-size", "edge-kernel", "attention"};
  return suites;
}

std::vector<AblationVariant> ablation_variants(const std::string& suite, const RunConfig& base) {
  std::vector<AblationVariant> out;
  auto variant = [&](std::string name, auto&& edit) {
    RunConfig c = base;
    edit(c.model);
    c.validate();
    out.push_back({std::move(name), std::move(c)});
  };
  auto topology = [](bool dual, bool cc, bool edge, bool nl, bool nld) {
    return [=](NedbConfig& m) {
      m.dual_branch = dual;
      m.noise = cc ? NoiseFrontEnd::kImproved : NoiseFrontEnd::kNone;
      m.use_edge = edge;
      m.use_nonlocal = nl;
      m.use_distance = nld;
    };
  };
  if (suite == "dual-branch") {
    variant("SB", topology(false, false, false, false, false));
    variant("SB+CC", topology(false, true, false, false, false));
    variant("DB", topology(true, false, false, false, false));
    variant("DB+CC", topology(true, true, false, false, false));
    variant("DB+CC+Edge", topology(true, true, true, false, false));
    variant("DB+CC+Edge+NL", topology(true, true, true, true, false));
    variant("DB+CC+Edge+NL-D", topology(true, true, true, true, true));
  } else if (suite == "init") {
    const std::pair<const char*, InitScheme> schemes[] = {{"Random", InitScheme::kRandom},
                                                          {"Random-Sum", InitScheme::kRandomSum},
                                                          {"Laplace-like", InitScheme::kLaplaceLike},
                                                          {"Laplace-like-D", InitScheme::kLaplaceLikeD}};
    for (const auto& [name, scheme] : schemes) {
      variant(name, [scheme](NedbConfig& m) {
        m.noise = NoiseFrontEnd::kImproved;
        m.cc_scheme = scheme;
      });
    }
  } else if (suite == "kernel-size") {
    for (int k : {3, 5, 7, 9, 11}) {
      variant(fmt::format("{}x{}", k, k), [k](NedbConfig& m) {
        m.noise = NoiseFrontEnd::kImproved;
        m.cc_sizes = {k};
      });
    }
    const std::vector<std::vector<int>> mixed{{3, 5, 7}, {5, 7, 9}, {5, 5, 5}};
    for (const auto& sizes : mixed) {
      variant(fmt::format("{}+{}+{}", sizes[0], sizes[1], sizes[2]), [sizes](NedbConfig& m) {
        m.noise = NoiseFrontEnd::kImproved;
        m.cc_mapping = ChannelMapping::kDiagonal;
        m.cc_sizes = sizes;
      });
    }
  } else if (suite == "edge-kernel") {
    for (ElementShape shape : {ElementShape::kEllipse, ElementShape::kRect, ElementShape::kCross}) {
      for (int k : {3, 5, 7, 9}) {
        std::string name(to_string(shape));
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
        variant(fmt::format("{}_{}x{}", name, k, k), [shape, k](NedbConfig& m) {
          m.edge_shape = shape;
          m.edge_size = k;
        });
        out.back().config.recompute_edges = true;
      }
    }
  } else if (suite == "attention") {
    variant("no-NL", [](NedbConfig& m) { m.use_nonlocal = false; });
    variant("NL", [](NedbConfig& m) {
      m.use_nonlocal = true;
      m.use_distance = false;
    });
    variant("NL-D", [](NedbConfig& m) {
      m.use_nonlocal = true;
      m.use_distance = true;
    });
  } else {
    throw std::invalid_argument(fmt::format("unknown ablation suite '{}'", suite));
  }
  return out;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                      const std::function<void(const AblationRow&)>& on_row) {
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    if (v.config.train_manifest.empty() || v.config.eval_manifest.empty()) {
      throw std::invalid_argument("ablation needs train_manifest and eval_manifest");
    }
    const auto train = load_samples(read_manifest(v.config.train_manifest), v.config);
    const auto held_out = load_samples(read_manifest(v.config.eval_manifest), v.config);
    NedbModel model(v.config.model);
    const auto log = train_model(model, v.config, train);
    const int last = static_cast<int>(log.size());
    AblationRow row{v.name, evaluate_model(model, held_out, v.config), mean_total_loss(log, last - 19, last)};
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& out) {
  out << "variant,precision,recall,f1,auc,final_loss\n";
  for (const auto& r : rows) {
    out << r.name << ',' << fixed(r.report.mean_prf.precision) << ',' << fixed(r.report.mean_prf.recall) << ','
        << fixed(r.report.mean_prf.f1) << ',' << (r.report.mean_auc ? fixed(*r.report.mean_auc) : "nan") << ','
        << fixed(r.final_loss) << '\n';
  }
}

}  // namespace nedb
