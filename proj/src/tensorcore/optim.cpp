#include "hymad/optim.hpp"

#include <algorithm>
#include <cmath>

namespace hymad {

void adamw_step(std::vector<Tensor>& params, OptimState& state) {
  const auto& cfg = state.config;
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
      cfg.beta2 >= 1.0) {
    throw ValidationError("adamw: betas must lie in [0, 1)");
  }
  if (state.moments.empty()) {
    state.moments.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.moments[i].m.assign(params[i].numel(), 0.0);
      state.moments[i].v.assign(params[i].numel(), 0.0);
    }
  }
  if (state.moments.size() != params.size()) {
    throw ShapeError("adamw: optimizer state tracks " +
                     std::to_string(state.moments.size()) +
                     " tensors, given " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.moments[i].m.size() != params[i].numel()) {
      throw ShapeError("adamw: moment shape mismatch for parameter " +
                       std::to_string(i));
    }
    for (double g : params[i].grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adamw: non-finite gradient in parameter " +
                           std::to_string(i));
      }
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].mutable_data();
    auto grad = params[i].grad();
    auto& [m, v] = state.moments[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      theta[j] -= cfg.lr * cfg.weight_decay * theta[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config)
    : params_(std::move(params)) {
  state_.config = config;
}

void AdamW::step() { adamw_step(params_, state_); }

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::vector<NamedParam> params, double eps) {
  if (!(eps > 0.0)) throw ValidationError("grad_check: eps must be positive");
  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) {
    throw NumericError("grad_check: loss is not finite");
  }
  backward(loss);

  auto eval = [&]() {
    NoGradGuard guard;
    const double f = loss_fn().item();
    if (!std::isfinite(f)) {
      throw NumericError("grad_check: perturbed loss is not finite");
    }
    return f;
  };

  GradCheckReport report;
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    entry.count = p.tensor.numel();
    const std::vector<double> analytic =
        p.tensor.has_grad()
            ? std::vector<double>(p.tensor.grad().begin(), p.tensor.grad().end())
            : std::vector<double>(p.tensor.numel(), 0.0);
    auto theta = p.tensor.mutable_data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + eps;
      const double f_plus = eval();
      theta[i] = saved - eps;
      const double f_minus = eval();
      theta[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > entry.max_rel_err || i == 0) {
        entry.max_rel_err = rel;
        entry.worst_index = i;
        entry.worst_analytic = a;
        entry.worst_numeric = numeric;
      }
      entry.max_abs_grad = std::max(entry.max_abs_grad, std::fabs(a));
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }
  return report;
}

}  // namespace hymad
