#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>

#include "ksrecon/control.hpp"
#include "ksrecon/observations.hpp"
#include "ksrecon/stepper.hpp"

namespace ksr {

struct LossReport {
  double loss = 0.0;
  Eigen::MatrixXd residuals;  // h_i(u_theta) - y_i, sensor x time
  // optional per-time-index gradient contributions g_k (control space)
  std::map<int, Eigen::VectorXd> sub_gradients;
};

struct HessianReport {
  Eigen::MatrixXd hessian;
  Eigen::MatrixXd gauss_newton;
  Eigen::MatrixXd curvature_part;
  Eigen::VectorXd eigenvalues;  // descending
};

struct HessianRankProfile {
  int effective_rank = 0;     // eigenvalues of H above 1e-12 * |lambda|_max
  int gn_effective_rank = 0;  // same count for the Gauss-Newton part
  double condition_number = 0.0;  // over the non-null part of H
  double min_eigenvalue = 0.0;
};

// Loss, gradient and Hessian of the assimilation objective
//   J(theta) = (1/m) sum_i [h_i(u_theta) - y_i]^2
// with gradients from the backward adjoint recursion and the Hessian from
// the second-order adjoint: the Gauss-Newton part accumulates masked
// sensitivity Grams, the curvature part contracts the step's second
// derivative against the adjoint states, with forward sensitivities
// propagated incrementally along the rollout.
//
// One instance owns the forward/backward storage; not thread-safe.
class AssimilationProblem {
 public:
  AssimilationProblem(const SolverConfig& config, ObservationSet obs);

  int dim() const { return basis_ ? static_cast<int>(basis_->cols()) : 0; }
  const SolverConfig& config() const { return config_; }
  const ObservationSet& observations() const { return obs_; }

  double loss(const Eigen::VectorXd& theta);
  double loss_grad(const Eigen::VectorXd& theta, Eigen::VectorXd& grad);
  double loss_grad_hess(const Eigen::VectorXd& theta, Eigen::VectorXd& grad, Eigen::MatrixXd& hess,
                        Eigen::MatrixXd* gauss_newton = nullptr,
                        Eigen::MatrixXd* curvature = nullptr);

  Eigen::MatrixXd residuals_at(const Eigen::VectorXd& theta);
  std::map<int, Eigen::VectorXd> sub_gradients(const Eigen::VectorXd& theta);

  // Pseudo-projection: decode, integrate j steps, re-encode through the
  // p-mode truncation. Guarded to at most 10% of the assimilation horizon.
  Eigen::VectorXd project(const Eigen::VectorXd& theta, int j_steps);

 private:
  void forward(const Eigen::VectorXd& theta, bool with_stages);
  double loss_from_states() const;
  void fill_weight(int time_index, Eigen::ArrayXd& w) const;

  SolverConfig config_;
  ObservationSet obs_;
  EtdCoefficients coeffs_;
  std::unique_ptr<EtdStepper> stepper_;
  std::unique_ptr<Eigen::MatrixXd> basis_;
  std::vector<int> obs_col_of_time_;  // -1 where unobserved
  std::vector<Eigen::ArrayXd> states_;
  std::vector<EtdStepper::Stages> stages_;
  std::vector<Eigen::ArrayXd> nu_;  // adjoint states
};

LossReport evaluate_loss(const ControlVector& theta, const ObservationSet& obs);
Eigen::VectorXd gradient(const ControlVector& theta, const ObservationSet& obs,
                         LossReport* report = nullptr);
HessianReport hessian(const ControlVector& theta, const ObservationSet& obs);
HessianRankProfile hessian_rank_profile(const HessianReport& report, const ObservationSet& obs);

}  // namespace ksr
