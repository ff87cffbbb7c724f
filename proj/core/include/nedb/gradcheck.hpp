#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nedb/tensor.hpp"

namespace nedb {

/// Scalar-valued function of a list of tensors.
using LossFn = std::function<Tensor(const std::vector<Tensor>& inputs)>;

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-3;
  double denominator_floor = 1e-8;
  /// Coordinates probed per input; 0 probes all of them.
  std::size_t max_coords_per_input = 0;
  /// Multiplies the tape gradient before comparison. 1 disables injection.
  double corrupt_factor = 1.0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  bool passed = false;
};

/// Compares tape gradients of `fn` at `inputs` with central differences
/// computed without a tape.
GradCheckResult check_gradients(const std::string& name, const LossFn& fn, const std::vector<Tensor>& inputs,
                                const GradCheckOptions& opts = {});

/// Relative error with the denominator clamped from below.
double relative_error(double analytic, double numeric, double floor);

/// A differentiable operation with a generator of random inputs.
struct OpCheck {
  std::string name;
  std::function<std::vector<Tensor>(std::mt19937_64&)> make_inputs;
  /// Maps inputs to the op output; the checker contracts it with a fixed
  /// random tensor to obtain a scalar.
  std::function<Tensor(const std::vector<Tensor>&)> op;
};

/// Every differentiable op of the engine plus the distance attention block.
const std::vector<OpCheck>& op_check_registry();

/// Runs one registered op check for one seed.
GradCheckResult run_op_check(const OpCheck& check, std::uint64_t seed, const GradCheckOptions& opts = {});

class NedbModel;

/// Checks `count` randomly drawn scalar parameters of a whole model (learnable
/// tensors and constrained kernel taps) for the combined Dice loss of one
/// batch, evaluated in eval mode.
GradCheckResult check_model_gradients(NedbModel& model, const Tensor& image, const Tensor& mask_gt,
                                      const Tensor& edge_gt, std::size_t count, const GradCheckOptions& opts = {});

/// Tensor of the given shape filled from U(lo, hi).
Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

}  // namespace nedb
