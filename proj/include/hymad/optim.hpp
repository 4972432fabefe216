#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hymad/tensor.hpp"

namespace hymad {

struct AdamWConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moment buffers for one parameter tensor.
struct MomentState {
  Buffer m;
  Buffer v;
};

/// Optimizer state shared across all parameters; `step` counts completed
/// updates and drives bias correction.
struct OptimState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<MomentState> moments;
};

/// One AdamW update over `params` using their accumulated grads. Weight
/// decay is decoupled: θ ← θ - lr·wd·θ, then the bias-corrected Adam step.
/// Throws NumericError (without touching anything) if any grad is
/// non-finite.
void adamw_step(std::vector<Tensor>& params, OptimState& state);

class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config);

  void step();
  void zero_grad();

  const OptimState& state() const { return state_; }
  OptimState& state() { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  OptimState state_;
};

struct GradCheckEntry {
  std::string name;
  std::size_t count = 0;
  double max_rel_err = 0.0;
  double max_abs_grad = 0.0;
  // Coordinate with the largest relative error.
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> per_param;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// Compares analytic grads of `loss_fn` against central differences
/// (f(θ+eps) - f(θ-eps)) / 2eps for every coordinate of every parameter.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8). Existing grads on the
/// parameters are zeroed first and left holding the analytic gradient.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::vector<NamedParam> params, double eps = 1e-5);

}  // namespace hymad
