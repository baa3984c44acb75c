#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "ksrecon/adjoint.hpp"

namespace ksr {

struct LineSearchConfig {
  double armijo_c = 1e-4;
  double shrink = 0.5;
  double eta0 = 1.0;
  int max_backtracks = 40;
  // After an accepted Armijo step, additionally try the one-shot quadratic
  // interpolant and keep the better point (exact on quadratic objectives).
  bool quad_interp = false;

  void validate() const {
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw std::invalid_argument("armijo_c in (0,1)");
    if (!(shrink > 0.0 && shrink < 1.0)) throw std::invalid_argument("shrink in (0,1)");
    if (eta0 <= 0.0) throw std::invalid_argument("eta0 > 0");
  }
};

struct NcnConfig {
  double kappa_low = 1e3;
  double kappa_high = 1e5;
  double stall_ratio = 0.01;  // switch kappa when quad_form / loss drops below
  int max_iters = 350;
  std::vector<int> pp_schedule = {50, 100, 150};
  int pp_steps = 10;  // pseudo-projection rollout length (steps)

  void validate() const {
    if (kappa_low > kappa_high) throw std::invalid_argument("kappa_low <= kappa_high required");
    for (std::size_t i = 0; i < pp_schedule.size(); ++i) {
      if (pp_schedule[i] >= max_iters || pp_schedule[i] <= 0)
        throw std::invalid_argument("pp_schedule entries must lie in (0, max_iters)");
      if (i > 0 && pp_schedule[i] <= pp_schedule[i - 1])
        throw std::invalid_argument("pp_schedule must be strictly increasing");
    }
  }
};

enum TraceEvent : unsigned {
  kEventPseudoProjection = 1u << 0,
  kEventKappaSwitch = 1u << 1,
  kEventLineSearchFail = 1u << 2,
  kEventEigFallback = 1u << 3,
  kEventBlowUpAbort = 1u << 4,
};

struct TraceRecord {
  int iter = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double quad_form = 0.0;  // g^T |H|^{-1} g
  double step_norm = 0.0;
  double kappa = 0.0;
  unsigned events = 0;
};

struct IterationTrace {
  std::vector<TraceRecord> records;

  static std::string event_string(unsigned events);
  void to_csv(std::ostream& os) const;
  int count_events(unsigned mask) const;
};

// Minimization problem interface; value/gradient/Hessian of a smooth scalar.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual int dim() const = 0;
  virtual double value(const Eigen::VectorXd& x) = 0;
  virtual double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) = 0;
  virtual double value_grad_hess(const Eigen::VectorXd& x, Eigen::VectorXd& grad,
                                 Eigen::MatrixXd& hess) {
    (void)x;
    (void)grad;
    (void)hess;
    throw std::logic_error("objective does not provide Hessians");
  }
};

// KS assimilation objective over the real control coordinates.
class KsObjective : public Objective {
 public:
  KsObjective(const SolverConfig& config, ObservationSet obs)
      : problem_(config, std::move(obs)) {}

  int dim() const override { return problem_.dim(); }
  double value(const Eigen::VectorXd& x) override { return problem_.loss(x); }
  double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& g) override {
    return problem_.loss_grad(x, g);
  }
  double value_grad_hess(const Eigen::VectorXd& x, Eigen::VectorXd& g,
                         Eigen::MatrixXd& h) override {
    return problem_.loss_grad_hess(x, g, h);
  }
  Eigen::VectorXd project(const Eigen::VectorXd& x, int steps) {
    return problem_.project(x, steps);
  }
  AssimilationProblem& problem() { return problem_; }

 private:
  AssimilationProblem problem_;
};

struct LineSearchResult {
  double eta = 0.0;  // 0 on failure
  double new_value = 0.0;
  bool success = false;
};

// Backtracking line search enforcing the Armijo sufficient-decrease rule.
LineSearchResult armijo_search(Objective& objective, const Eigen::VectorXd& x, double value,
                               const Eigen::VectorXd& grad, const Eigen::VectorXd& step,
                               const LineSearchConfig& config);

struct NcnDiagnostics {
  double quad_form = 0.0;  // g^T |H|^{-1} g
  double delta = 0.0;
  double lambda_max = 0.0;
  int clipped = 0;  // eigenvalues raised to delta
  bool fallback = false;
};

// step = -|H|^{-1} g with |H|^{-1} = Q diag(1/max(|lambda|, delta)) Q^T and
// delta = lambda_1 / kappa. Falls back to the normalized gradient direction
// when the spectrum is unusable.
Eigen::VectorXd ncn_step(const Eigen::VectorXd& grad, const Eigen::MatrixXd& hess, double kappa,
                         NcnDiagnostics* diag = nullptr);

// Same cutoff as NCN but signs preserved: s_i = 1/lambda_i if |lambda_i| >= delta else 0.
Eigen::VectorXd modified_newton_step(const Eigen::VectorXd& grad, const Eigen::MatrixXd& hess,
                                     double delta);

struct OptimizeResult {
  Eigen::VectorXd theta;  // best-loss iterate
  double loss = 0.0;
  IterationTrace trace;
};

// eta > 0 takes fixed steps of that size; eta <= 0 uses the Armijo search.
OptimizeResult gradient_descent(Objective& objective, const Eigen::VectorXd& theta0, double eta,
                                int iters, const LineSearchConfig& ls = {});

OptimizeResult bfgs(Objective& objective, const Eigen::VectorXd& theta0, int iters,
                    const LineSearchConfig& ls = {});

// BFGS inverse update; returns false (and resets to identity) when the
// curvature condition s^T y > 0 fails.
bool bfgs_update(Eigen::MatrixXd& inv_hessian, const Eigen::VectorXd& s, const Eigen::VectorXd& y);

OptimizeResult modified_newton(Objective& objective, const Eigen::VectorXd& theta0, double kappa,
                               int iters, const LineSearchConfig& ls = {});

// Plain NCN loop (fixed kappa, no projections); building block and baseline.
OptimizeResult ncn_minimize(Objective& objective, const Eigen::VectorXd& theta0, double kappa,
                            int iters, const LineSearchConfig& ls = {});

// Standalone pseudo-projection of a control vector.
ControlVector pseudo_projection(const ControlVector& theta, int j_steps, int horizon_steps);

// Full reconstruction protocol: NCN with the adaptive kappa schedule and
// pseudo-projection at the scheduled iterations; returns the best iterate.
OptimizeResult run_reconstruction(KsObjective& objective, const Eigen::VectorXd& theta0,
                                  const NcnConfig& ncn, const LineSearchConfig& ls,
                                  bool with_projection = true);

}  // namespace ksr
