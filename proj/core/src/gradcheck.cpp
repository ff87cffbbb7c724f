#include "nedb/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nedb/distance_attention.hpp"
#include "nedb/losses.hpp"
#include "nedb/network.hpp"
#include "nedb/ops.hpp"
#include "nedb/tape.hpp"

namespace nedb {
namespace {

Tensor with_value(const Tensor& t, std::size_t index, double value) {
  std::vector<double> data = t.to_vector();
  data[index] = value;
  return Tensor(t.shape(), std::move(data), t.requires_grad());
}

double evaluate(const LossFn& fn, const std::vector<Tensor>& inputs) {
  NoGradScope no_grad;
  return fn(inputs).item();
}

// Values bounded away from zero so relu kinks are never crossed by a step.
Tensor off_kink_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(static_cast<std::size_t>(shape.numel()));
  for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor::parameter(shape, std::move(v));
}

// Pairwise separated values so a finite-difference step never reorders a max.
Tensor distinct_tensor(Shape shape, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(shape.numel());
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 2.0 * (static_cast<double>(rank[i]) + 0.5) / static_cast<double>(n) - 1.0;
  return Tensor::parameter(shape, std::move(v));
}

Tensor param(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  const Tensor t = random_tensor(shape, rng, lo, hi);
  return Tensor::parameter(shape, t.to_vector());
}

std::vector<OpCheck> build_registry() {
  using Inputs = std::vector<Tensor>;
  std::vector<OpCheck> r;
  auto add = [&r](std::string name, std::function<Inputs(std::mt19937_64&)> make, std::function<Tensor(const Inputs&)> op) {
    r.push_back({std::move(name), std::move(make), std::move(op)});
  };

  add("conv2d", [](auto& g) { return Inputs{param({2, 3, 5, 5}, g), param({4, 3, 3, 3}, g), param({1, 4, 1, 1}, g)}; },
      [](const Inputs& in) { return ops::conv2d(in[0], in[1], in[2], {1, 1, 1}); });
  add("conv2d_stride2", [](auto& g) { return Inputs{param({1, 2, 6, 6}, g), param({3, 2, 3, 3}, g), param({1, 3, 1, 1}, g)}; },
      [](const Inputs& in) { return ops::conv2d(in[0], in[1], in[2], {2, 1, 1}); });
  add("conv2d_grouped", [](auto& g) { return Inputs{param({1, 3, 5, 5}, g), param({3, 1, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::conv2d(in[0], in[1], Tensor(), {1, 1, 3}); });
  add("conv2d_7x7", [](auto& g) { return Inputs{param({1, 2, 8, 8}, g), param({2, 2, 7, 7}, g)}; },
      [](const Inputs& in) { return ops::conv2d(in[0], in[1], Tensor(), {2, 3, 1}); });
  add("batchnorm_train", [](auto& g) { return Inputs{param({2, 3, 3, 3}, g), param({1, 3, 1, 1}, g, 0.5, 1.5), param({1, 3, 1, 1}, g)}; },
      [](const Inputs& in) {
        ops::BatchNormStats stats{std::vector<double>(3, 0.0), std::vector<double>(3, 1.0)};
        return ops::batchnorm(in[0], in[1], in[2], stats, {ops::BatchNormMode::kTrain});
      });
  add("batchnorm_eval", [](auto& g) { return Inputs{param({2, 3, 3, 3}, g), param({1, 3, 1, 1}, g, 0.5, 1.5), param({1, 3, 1, 1}, g)}; },
      [](const Inputs& in) {
        ops::BatchNormStats stats{{0.1, -0.2, 0.3}, {0.5, 1.5, 2.0}};
        return ops::batchnorm(in[0], in[1], in[2], stats, {ops::BatchNormMode::kEval});
      });
  add("relu", [](auto& g) { return Inputs{off_kink_tensor({2, 2, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::relu(in[0]); });
  add("sigmoid", [](auto& g) { return Inputs{param({2, 2, 3, 3}, g, -3, 3)}; },
      [](const Inputs& in) { return ops::sigmoid(in[0]); });
  add("add", [](auto& g) { return Inputs{param({1, 2, 3, 3}, g), param({1, 2, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::add(in[0], in[1]); });
  add("sub", [](auto& g) { return Inputs{param({1, 2, 3, 3}, g), param({1, 2, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::sub(in[0], in[1]); });
  add("mul", [](auto& g) { return Inputs{param({1, 2, 3, 3}, g), param({1, 2, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::mul(in[0], in[1]); });
  add("mul_shared_operand", [](auto& g) { return Inputs{param({1, 2, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::mul(in[0], in[0]); });
  add("div", [](auto& g) { return Inputs{param({1, 2, 3, 3}, g), param({1, 2, 3, 3}, g, 0.5, 2.0)}; },
      [](const Inputs& in) { return ops::div(in[0], in[1]); });
  add("scale", [](auto& g) { return Inputs{param({1, 2, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::scale(in[0], -1.7); });
  add("add_scalar", [](auto& g) { return Inputs{param({1, 2, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::add_scalar(in[0], 0.3); });
  add("mul_channel", [](auto& g) { return Inputs{param({2, 3, 3, 3}, g), param({2, 3, 1, 1}, g)}; },
      [](const Inputs& in) { return ops::mul_channel(in[0], in[1]); });
  add("div_const", [](auto& g) { return Inputs{param({2, 2, 3, 3}, g), random_tensor({1, 1, 3, 3}, g, 1.0, 3.0)}; },
      [](const Inputs& in) { return ops::div_const(in[0], in[1]); });
  add("concat_channels", [](auto& g) { return Inputs{param({1, 2, 3, 3}, g), param({1, 3, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::concat_channels({in[0], in[1]}); });
  add("slice_channels", [](auto& g) { return Inputs{param({1, 5, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::slice_channels(in[0], 1, 3); });
  for (int f : {2, 4, 8}) {
    add("bilinear_upsample_x" + std::to_string(f), [](auto& g) { return Inputs{param({1, 2, 3, 2}, g)}; },
        [f](const Inputs& in) { return ops::bilinear_upsample(in[0], f); });
  }
  add("maxpool2d", [](auto& g) { return Inputs{distinct_tensor({1, 2, 6, 6}, g)}; },
      [](const Inputs& in) { return ops::maxpool2d(in[0]); });
  add("maxpool2d_k4s4", [](auto& g) { return Inputs{distinct_tensor({1, 1, 8, 8}, g)}; },
      [](const Inputs& in) { return ops::maxpool2d(in[0], 4, 4, 0); });
  add("global_avgpool", [](auto& g) { return Inputs{param({2, 3, 3, 4}, g)}; },
      [](const Inputs& in) { return ops::global_avgpool(in[0]); });
  add("matmul", [](auto& g) { return Inputs{param({2, 1, 3, 4}, g), param({2, 1, 4, 5}, g)}; },
      [](const Inputs& in) { return ops::matmul(in[0], in[1]); });
  add("transpose_last", [](auto& g) { return Inputs{param({1, 2, 3, 4}, g)}; },
      [](const Inputs& in) { return ops::transpose_last(in[0]); });
  add("softmax_rows", [](auto& g) { return Inputs{param({1, 2, 4, 5}, g, -2, 2)}; },
      [](const Inputs& in) { return ops::softmax_rows(in[0]); });
  add("sum", [](auto& g) { return Inputs{param({1, 2, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::sum(in[0]); });
  add("mean", [](auto& g) { return Inputs{param({1, 2, 3, 3}, g)}; },
      [](const Inputs& in) { return ops::mean(in[0]); });
  add("reshape", [](auto& g) { return Inputs{param({1, 2, 3, 4}, g)}; },
      [](const Inputs& in) { return in[0].reshape({1, 1, 6, 4}); });
  add("dice_loss", [](auto& g) { return Inputs{param({1, 1, 4, 4}, g, 0.05, 0.95)}; },
      [](const Inputs& in) {
        std::vector<double> gt(16);
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = (i % 3 == 0) ? 1.0 : 0.0;
        return dice_loss(in[0], Tensor({1, 1, 4, 4}, gt));
      });
  for (bool use_distance : {true, false}) {
    add(use_distance ? "attention_distance" : "attention_vanilla",
        [use_distance](auto& g) {
          NonLocalParams p = NonLocalParams::init(8, g);
          Inputs in{param({1, 8, 3, 3}, g)};
          p.visit("", [&in, &g](const std::string&, Tensor& t) { in.push_back(param(t.shape(), g, -0.5, 0.5)); });
          // Without the distance prior the key bias shifts whole softmax rows, so
          // its gradient is exactly zero and a difference quotient sees only
          // rounding noise.
          if (!use_distance) in[4] = in[4].detach();
          return in;
        },
        [use_distance](const Inputs& in) {
          NonLocalParams p{in[1], in[2], in[3], in[4], in[5], in[6], in[7], in[8]};
          return attention_forward(p, in[0], use_distance);
        });
  }
  return r;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(shape.numel()));
  for (auto& x : v) x = dist(rng);
  return Tensor(shape, std::move(v));
}

GradCheckResult check_gradients(const std::string& name, const LossFn& fn, const std::vector<Tensor>& inputs,
                                const GradCheckOptions& opts) {
  GradCheckResult result{name, 0.0, 0, true};
  Gradients grads;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor loss = fn(inputs);
    grads = tape.backward(loss);
  }

  std::mt19937_64 rng(opts.seed);
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad()) continue;
    const Tensor analytic = grads.of(inputs[k]);
    const auto n = static_cast<std::size_t>(inputs[k].numel());
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords_per_input > 0 && opts.max_coords_per_input < n) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_input);
    }
    for (std::size_t i : coords) {
      const double x = inputs[k].data()[i];
      probe[k] = with_value(inputs[k], i, x + opts.step);
      const double plus = evaluate(fn, probe);
      probe[k] = with_value(inputs[k], i, x - opts.step);
      const double minus = evaluate(fn, probe);
      probe[k] = inputs[k];
      const double numeric = (plus - minus) / (2.0 * opts.step);
      const double a = analytic.data()[i] * opts.corrupt_factor;
      result.max_rel_error = std::max(result.max_rel_error, relative_error(a, numeric, opts.denominator_floor));
      ++result.coords_checked;
    }
  }
  result.passed = result.max_rel_error < opts.tolerance;
  return result;
}

const std::vector<OpCheck>& op_check_registry() {
  static const std::vector<OpCheck> registry = build_registry();
  return registry;
}

GradCheckResult check_model_gradients(NedbModel& model, const Tensor& image, const Tensor& mask_gt,
                                      const Tensor& edge_gt, std::size_t count, const GradCheckOptions& opts) {
  const double alpha = model.config().alpha;
  auto loss_of = [&](const ForwardResult& r) {
    return combined_loss(r.mask, mask_gt, r.edge, edge_gt, alpha).total;
  };

  // Analytic gradients.
  Gradients grads;
  Tensor bank_weights;
  {
    Tape tape;
    TapeScope scope(tape);
    const ForwardResult r = model.forward(image, Mode::kEval);
    bank_weights = r.bank_weights;
    grads = tape.backward(loss_of(r));
  }

  // Candidate coordinates: (tensor slot or bank kernel, element).
  struct Coord {
    std::string name;
    std::size_t index;
    double analytic;
  };
  std::vector<Coord> candidates;
  model.visit_parameters([&](const std::string& name, Tensor& p) {
    const Tensor g = grads.of(p);
    for (std::size_t i = 0; i < static_cast<std::size_t>(p.numel()); ++i) candidates.push_back({name, i, g.data()[i]});
  });
  ConstrainedKernelBank& bank = model.bank();
  if (!bank_weights.empty()) {
    const Tensor wg = grads.of(bank_weights);
    for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
      const auto kg = bank.kernel_gradient(wg.data(), k);
      for (std::size_t i = 0; i < kg.size(); ++i) candidates.push_back({"constrained.kernel" + std::to_string(k), i, kg[i]});
    }
  }
  std::mt19937_64 rng(opts.seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(std::min(count, candidates.size()));

  auto loss_with = [&](const Coord& c, double delta) {
    NoGradScope no_grad;
    // Writes `value` into the coordinate and returns what was there.
    const auto put = [&](double value) {
      double previous = 0.0;
      if (c.name.rfind("constrained.kernel", 0) == 0) {
        double& w = bank.kernel(std::stoul(c.name.substr(18))).weights[c.index];
        previous = w;
        w = value;
        return previous;
      }
      model.visit_parameters([&](const std::string& name, Tensor& p) {
        if (name != c.name) return;
        previous = p.data()[c.index];
        p = with_value(p, c.index, value);
      });
      return previous;
    };
    const double original = put(0.0);
    put(original + delta);
    const double v = loss_of(model.forward(image, Mode::kEval)).item();
    put(original);
    return v;
  };

  GradCheckResult result{"model", 0.0, 0, true};
  for (const auto& c : candidates) {
    const double numeric = (loss_with(c, opts.step) - loss_with(c, -opts.step)) / (2.0 * opts.step);
    result.max_rel_error =
        std::max(result.max_rel_error, relative_error(c.analytic * opts.corrupt_factor, numeric, opts.denominator_floor));
    ++result.coords_checked;
  }
  result.passed = result.max_rel_error < opts.tolerance;
  return result;
}

GradCheckResult run_op_check(const OpCheck& check, std::uint64_t seed, const GradCheckOptions& opts) {
  std::mt19937_64 rng(seed);
  const std::vector<Tensor> inputs = check.make_inputs(rng);
  Shape out_shape;
  {
    NoGradScope no_grad;
    out_shape = check.op(inputs).shape();
  }
  const Tensor weights = random_tensor(out_shape, rng);
  const LossFn fn = [&check, weights](const std::vector<Tensor>& in) {
    return ops::sum(ops::mul(check.op(in), weights));
  };
  GradCheckOptions o = opts;
  o.seed = seed;
  return check_gradients(check.name, fn, inputs, o);
}

}  // namespace nedb
