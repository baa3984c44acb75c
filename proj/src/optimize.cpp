#include "ksrecon/optimize.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <ostream>

#include "ksrecon/errors.hpp"

namespace ksr {

std::string IterationTrace::event_string(unsigned events) {
  std::string out;
  auto add = [&out](const char* tok) {
    if (!out.empty()) out += ';';
    out += tok;
  };
  if (events & kEventPseudoProjection) add("pp");
  if (events & kEventKappaSwitch) add("kappa_switch");
  if (events & kEventLineSearchFail) add("ls_fail");
  if (events & kEventEigFallback) add("eig_fallback");
  if (events & kEventBlowUpAbort) add("blow_up");
  return out;
}

void IterationTrace::to_csv(std::ostream& os) const {
  os << "iter,loss,grad_norm,quad_form,step_norm,kappa,event\n";
  os.precision(17);
  for (const TraceRecord& r : records)
    os << r.iter << ',' << r.loss << ',' << r.grad_norm << ',' << r.quad_form << ','
       << r.step_norm << ',' << r.kappa << ',' << event_string(r.events) << '\n';
}

int IterationTrace::count_events(unsigned mask) const {
  int count = 0;
  for (const TraceRecord& r : records)
    if (r.events & mask) ++count;
  return count;
}

LineSearchResult armijo_search(Objective& objective, const Eigen::VectorXd& x, double value,
                               const Eigen::VectorXd& grad, const Eigen::VectorXd& step,
                               const LineSearchConfig& config) {
  config.validate();
  const double slope = grad.dot(step);
  LineSearchResult result;
  if (!(slope < 0.0)) return result;  // not a descent direction
  double eta = config.eta0;
  for (int i = 0; i <= config.max_backtracks; ++i) {
    double candidate;
    try {
      candidate = objective.value(x + eta * step);
    } catch (const BlowUpError&) {
      eta *= config.shrink;
      continue;
    }
    if (candidate <= value + config.armijo_c * eta * slope) {
      result.eta = eta;
      result.new_value = candidate;
      result.success = true;
      break;
    }
    eta *= config.shrink;
  }
  if (result.success && config.quad_interp) {
    // one-shot parabola through (0, value), slope, (eta, new_value)
    const double denom = result.new_value - value - slope * result.eta;
    if (denom > 0.0) {
      const double eta_hat = -0.5 * slope * result.eta * result.eta / denom;
      if (eta_hat > 0.0 && std::isfinite(eta_hat)) {
        try {
          const double candidate = objective.value(x + eta_hat * step);
          if (candidate < result.new_value &&
              candidate <= value + config.armijo_c * eta_hat * slope) {
            result.eta = eta_hat;
            result.new_value = candidate;
          }
        } catch (const BlowUpError&) {
        }
      }
    }
  }
  return result;
}

Eigen::VectorXd ncn_step(const Eigen::VectorXd& grad, const Eigen::MatrixXd& hess, double kappa,
                         NcnDiagnostics* diag) {
  if (kappa < 1.0) throw std::invalid_argument("ncn_step: kappa must be >= 1");
  NcnDiagnostics local;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
  const bool eig_ok = eig.info() == Eigen::Success && eig.eigenvalues().allFinite();
  const double lambda_max = eig_ok ? eig.eigenvalues().maxCoeff() : 0.0;
  Eigen::VectorXd step;
  if (!eig_ok || !(lambda_max > 0.0)) {
    const double gnorm = grad.norm();
    step = gnorm > 0.0 ? Eigen::VectorXd(-grad / gnorm) : Eigen::VectorXd::Zero(grad.size());
    local.fallback = true;
    local.quad_form = -grad.dot(step);
  } else {
    local.lambda_max = lambda_max;
    local.delta = lambda_max / kappa;
    Eigen::VectorXd inv_abs(eig.eigenvalues().size());
    for (int i = 0; i < inv_abs.size(); ++i) {
      const double mag = std::abs(eig.eigenvalues()[i]);
      if (mag < local.delta) ++local.clipped;
      inv_abs[i] = 1.0 / std::max(mag, local.delta);
    }
    const Eigen::VectorXd projected = eig.eigenvectors().transpose() * grad;
    step = -(eig.eigenvectors() * inv_abs.cwiseProduct(projected).matrix());
    local.quad_form = -grad.dot(step);
  }
  if (diag) *diag = local;
  return step;
}

Eigen::VectorXd modified_newton_step(const Eigen::VectorXd& grad, const Eigen::MatrixXd& hess,
                                     double delta) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
  Eigen::VectorXd scale(eig.eigenvalues().size());
  for (int i = 0; i < scale.size(); ++i) {
    const double lambda = eig.eigenvalues()[i];
    scale[i] = std::abs(lambda) >= delta ? 1.0 / lambda : 0.0;
  }
  const Eigen::VectorXd projected = eig.eigenvectors().transpose() * grad;
  return -(eig.eigenvectors() * scale.cwiseProduct(projected).matrix());
}

namespace {

struct BestTracker {
  double loss = std::numeric_limits<double>::infinity();
  Eigen::VectorXd theta;

  void offer(double candidate, const Eigen::VectorXd& x) {
    if (candidate < loss) {
      loss = candidate;
      theta = x;
    }
  }
};

}  // namespace

OptimizeResult gradient_descent(Objective& objective, const Eigen::VectorXd& theta0, double eta,
                                int iters, const LineSearchConfig& ls) {
  OptimizeResult result;
  Eigen::VectorXd theta = theta0;
  Eigen::VectorXd grad(objective.dim());
  BestTracker best;
  try {
    for (int it = 0; it < iters; ++it) {
      const double value = objective.value_grad(theta, grad);
      best.offer(value, theta);
      TraceRecord rec;
      rec.iter = it;
      rec.loss = value;
      rec.grad_norm = grad.norm();
      if (rec.grad_norm == 0.0) {
        result.trace.records.push_back(rec);
        break;
      }
      if (eta > 0.0) {
        theta -= eta * grad;
        rec.step_norm = eta * rec.grad_norm;
      } else {
        const LineSearchResult lsr = armijo_search(objective, theta, value, grad, -grad, ls);
        if (!lsr.success) rec.events |= kEventLineSearchFail;
        theta -= lsr.eta * grad;
        rec.step_norm = lsr.eta * rec.grad_norm;
      }
      result.trace.records.push_back(rec);
    }
    const double final_value = objective.value(theta);
    best.offer(final_value, theta);
    TraceRecord rec;
    rec.iter = static_cast<int>(result.trace.records.size());
    rec.loss = final_value;
    result.trace.records.push_back(rec);
  } catch (const BlowUpError&) {
    TraceRecord rec;
    rec.iter = static_cast<int>(result.trace.records.size());
    rec.events |= kEventBlowUpAbort;
    result.trace.records.push_back(rec);
  }
  result.theta = best.theta.size() ? best.theta : theta0;
  result.loss = best.loss;
  return result;
}

bool bfgs_update(Eigen::MatrixXd& inv_hessian, const Eigen::VectorXd& s,
                 const Eigen::VectorXd& y) {
  const double sy = s.dot(y);
  if (!(sy > 0.0) || !std::isfinite(sy)) {
    inv_hessian.setIdentity();
    return false;
  }
  const double rho = 1.0 / sy;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(s.size(), s.size());
  const Eigen::MatrixXd left = eye - rho * s * y.transpose();
  inv_hessian = left * inv_hessian * left.transpose() + rho * s * s.transpose();
  return true;
}

OptimizeResult bfgs(Objective& objective, const Eigen::VectorXd& theta0, int iters,
                    const LineSearchConfig& ls) {
  const int d = objective.dim();
  OptimizeResult result;
  Eigen::VectorXd theta = theta0;
  Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd grad(d), prev_grad(d);
  BestTracker best;
  try {
    double value = objective.value_grad(theta, grad);
    for (int it = 0; it < iters; ++it) {
      best.offer(value, theta);
      TraceRecord rec;
      rec.iter = it;
      rec.loss = value;
      rec.grad_norm = grad.norm();
      if (rec.grad_norm == 0.0) {
        result.trace.records.push_back(rec);
        break;
      }
      Eigen::VectorXd step = -(inv_hessian * grad);
      if (step.dot(grad) >= 0.0) {  // safeguard: reset if not a descent direction
        inv_hessian.setIdentity();
        step = -grad;
      }
      const LineSearchResult lsr = armijo_search(objective, theta, value, grad, step, ls);
      if (!lsr.success) {
        rec.events |= kEventLineSearchFail;
        result.trace.records.push_back(rec);
        break;  // zero step: BFGS cannot make further progress
      }
      const Eigen::VectorXd s = lsr.eta * step;
      theta += s;
      prev_grad = grad;
      value = objective.value_grad(theta, grad);
      bfgs_update(inv_hessian, s, Eigen::VectorXd(grad - prev_grad));
      rec.step_norm = s.norm();
      result.trace.records.push_back(rec);
    }
    best.offer(value, theta);
    TraceRecord rec;
    rec.iter = static_cast<int>(result.trace.records.size());
    rec.loss = value;
    result.trace.records.push_back(rec);
  } catch (const BlowUpError&) {
    TraceRecord rec;
    rec.iter = static_cast<int>(result.trace.records.size());
    rec.events |= kEventBlowUpAbort;
    result.trace.records.push_back(rec);
  }
  result.theta = best.theta.size() ? best.theta : theta0;
  result.loss = best.loss;
  return result;
}

namespace {

// Shared driver for the curvature-based loops. step_fn(grad, H, kappa, rec)
// must return a descent step and fill the diagnostics fields of rec.
template <typename StepFn>
OptimizeResult curvature_loop(Objective& objective, const Eigen::VectorXd& theta0, double kappa,
                              int iters, const LineSearchConfig& ls, StepFn step_fn) {
  OptimizeResult result;
  Eigen::VectorXd theta = theta0;
  Eigen::VectorXd grad(objective.dim());
  Eigen::MatrixXd hess(objective.dim(), objective.dim());
  BestTracker best;
  try {
    for (int it = 0; it < iters; ++it) {
      const double value = objective.value_grad_hess(theta, grad, hess);
      best.offer(value, theta);
      TraceRecord rec;
      rec.iter = it;
      rec.loss = value;
      rec.grad_norm = grad.norm();
      rec.kappa = kappa;
      if (rec.grad_norm == 0.0) {
        result.trace.records.push_back(rec);
        break;
      }
      const Eigen::VectorXd step = step_fn(grad, hess, kappa, rec);
      const LineSearchResult lsr = armijo_search(objective, theta, value, grad, step, ls);
      if (!lsr.success)
        rec.events |= kEventLineSearchFail;
      else
        theta += lsr.eta * step;
      rec.step_norm = lsr.eta * step.norm();
      result.trace.records.push_back(rec);
    }
    const double final_value = objective.value(theta);
    best.offer(final_value, theta);
    TraceRecord rec;
    rec.iter = static_cast<int>(result.trace.records.size());
    rec.loss = final_value;
    rec.kappa = kappa;
    result.trace.records.push_back(rec);
  } catch (const BlowUpError&) {
    TraceRecord rec;
    rec.iter = static_cast<int>(result.trace.records.size());
    rec.events |= kEventBlowUpAbort;
    result.trace.records.push_back(rec);
  }
  result.theta = best.theta.size() ? best.theta : theta0;
  result.loss = best.loss;
  return result;
}

}  // namespace

OptimizeResult modified_newton(Objective& objective, const Eigen::VectorXd& theta0, double kappa,
                               int iters, const LineSearchConfig& ls) {
  return curvature_loop(objective, theta0, kappa, iters, ls,
                        [](const Eigen::VectorXd& g, const Eigen::MatrixXd& h, double kap,
                           TraceRecord& rec) {
                          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
                          const double scale = eig.eigenvalues().array().abs().maxCoeff();
                          const double delta = scale > 0.0 ? scale / kap : 0.0;
                          Eigen::VectorXd step = modified_newton_step(g, h, delta);
                          rec.quad_form = -g.dot(step);
                          return step;
                        });
}

OptimizeResult ncn_minimize(Objective& objective, const Eigen::VectorXd& theta0, double kappa,
                            int iters, const LineSearchConfig& ls) {
  return curvature_loop(objective, theta0, kappa, iters, ls,
                        [](const Eigen::VectorXd& g, const Eigen::MatrixXd& h, double kap,
                           TraceRecord& rec) {
                          NcnDiagnostics diag;
                          Eigen::VectorXd step = ncn_step(g, h, kap, &diag);
                          rec.quad_form = diag.quad_form;
                          if (diag.fallback) rec.events |= kEventEigFallback;
                          return step;
                        });
}

ControlVector pseudo_projection(const ControlVector& theta, int j_steps, int horizon_steps) {
  // route through a minimal observation set just to reuse the guarded core
  SensorLayout layout = SensorLayout::uniform(theta.config, 1, 1, horizon_steps);
  ObservationSet obs;
  obs.sensor_nodes = layout.sensor_nodes;
  obs.time_indices = layout.time_indices;
  obs.horizon_steps = horizon_steps;
  obs.values = Eigen::MatrixXd::Zero(1, 1);
  AssimilationProblem problem(theta.config, obs);
  ControlVector out = theta;
  out.real_coeffs = problem.project(theta.real_coeffs, j_steps);
  return out;
}

OptimizeResult run_reconstruction(KsObjective& objective, const Eigen::VectorXd& theta0,
                                  const NcnConfig& ncn, const LineSearchConfig& ls,
                                  bool with_projection) {
  ncn.validate();
  ls.validate();
  OptimizeResult result;
  Eigen::VectorXd theta = theta0;
  Eigen::VectorXd grad(objective.dim());
  Eigen::MatrixXd hess(objective.dim(), objective.dim());
  double kappa = ncn.kappa_low;
  BestTracker best;
  try {
    for (int it = 0; it < ncn.max_iters; ++it) {
      unsigned events = 0;
      if (with_projection &&
          std::find(ncn.pp_schedule.begin(), ncn.pp_schedule.end(), it) != ncn.pp_schedule.end()) {
        theta = objective.project(theta, ncn.pp_steps);
        kappa = ncn.kappa_low;  // refine physical modes after each projection
        events |= kEventPseudoProjection;
      }
      const double value = objective.value_grad_hess(theta, grad, hess);
      best.offer(value, theta);
      TraceRecord rec;
      rec.iter = it;
      rec.loss = value;
      rec.grad_norm = grad.norm();
      rec.kappa = kappa;
      rec.events = events;
      if (value == 0.0) {  // exact interpolation of the data; nothing to do
        result.trace.records.push_back(rec);
        break;
      }
      NcnDiagnostics diag;
      const Eigen::VectorXd step = ncn_step(grad, hess, kappa, &diag);
      rec.quad_form = diag.quad_form;
      if (diag.fallback) rec.events |= kEventEigFallback;
      // stall rule: enable the wide-spectrum preconditioner from the next
      // iteration on, sticky until a later projection resets kappa
      if (kappa == ncn.kappa_low && diag.quad_form < ncn.stall_ratio * value) {
        kappa = ncn.kappa_high;
        rec.events |= kEventKappaSwitch;
      }
      const LineSearchResult lsr = armijo_search(objective, theta, value, grad, step, ls);
      if (!lsr.success)
        rec.events |= kEventLineSearchFail;
      else
        theta += lsr.eta * step;
      rec.step_norm = lsr.eta * step.norm();
      result.trace.records.push_back(rec);
    }
    const double final_value = objective.value(theta);
    best.offer(final_value, theta);
    TraceRecord rec;
    rec.iter = static_cast<int>(result.trace.records.size());
    rec.loss = final_value;
    rec.kappa = kappa;
    result.trace.records.push_back(rec);
  } catch (const BlowUpError&) {
    TraceRecord rec;
    rec.iter = static_cast<int>(result.trace.records.size());
    rec.events |= kEventBlowUpAbort;
    result.trace.records.push_back(rec);
  }
  result.theta = best.theta.size() ? best.theta : theta0;
  result.loss = best.loss;
  return result;
}

}  // namespace ksr
