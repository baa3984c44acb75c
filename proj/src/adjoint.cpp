#include "ksrecon/adjoint.hpp"

#include <Eigen/Eigenvalues>

namespace ksr {

AssimilationProblem::AssimilationProblem(const SolverConfig& config, ObservationSet obs)
    : config_(config), obs_(std::move(obs)), coeffs_(precompute_coefficients(config)) {
  obs_.validate(config.grid.n);
  stepper_ = std::make_unique<EtdStepper>(coeffs_);
  basis_ = std::make_unique<Eigen::MatrixXd>(control_basis(config));
  const int K = obs_.horizon_steps;
  obs_col_of_time_.assign(K + 1, -1);
  for (int j = 0; j < obs_.m_t(); ++j) obs_col_of_time_[obs_.time_indices[j]] = j;
  states_.resize(K + 1);
  stages_.resize(K);
  nu_.resize(K + 1);
}

void AssimilationProblem::forward(const Eigen::VectorXd& theta, bool with_stages) {
  const int K = obs_.horizon_steps;
  // decode through the same transform path as decode(), so a control vector
  // whose decoded state seeded the reference reproduces it bit-exactly
  states_[0] = decode(ControlVector{theta, config_}).values;
  for (int k = 0; k < K; ++k)
    stepper_->step(states_[k], states_[k + 1], with_stages ? &stages_[k] : nullptr);
}

double AssimilationProblem::loss_from_states() const {
  double acc = 0.0;
  for (int j = 0; j < obs_.m_t(); ++j) {
    const Eigen::ArrayXd& state = states_[obs_.time_indices[j]];
    for (int i = 0; i < obs_.m_x(); ++i) {
      const double r = state[obs_.sensor_nodes[i]] - obs_.values(i, j);
      acc += r * r;
    }
  }
  return acc / obs_.m();
}

void AssimilationProblem::fill_weight(int time_index, Eigen::ArrayXd& w) const {
  w.setZero();
  const int col = obs_col_of_time_[time_index];
  if (col < 0) return;
  const double scale = 2.0 / obs_.m();
  const Eigen::ArrayXd& state = states_[time_index];
  for (int i = 0; i < obs_.m_x(); ++i) {
    const int node = obs_.sensor_nodes[i];
    w[node] = scale * (state[node] - obs_.values(i, col));
  }
}

double AssimilationProblem::loss(const Eigen::VectorXd& theta) {
  forward(theta, false);
  return loss_from_states();
}

double AssimilationProblem::loss_grad(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
  const int K = obs_.horizon_steps;
  const int n = config_.grid.n;
  forward(theta, true);

  Eigen::ArrayXd w(n);
  nu_[K].resize(n);
  fill_weight(K, nu_[K]);
  for (int k = K - 1; k >= 0; --k) {
    stepper_->tangent_transpose(stages_[k], nu_[k + 1], nu_[k]);
    fill_weight(k, w);
    nu_[k] += w;
  }
  grad = basis_->transpose() * nu_[0].matrix();
  return loss_from_states();
}

double AssimilationProblem::loss_grad_hess(const Eigen::VectorXd& theta, Eigen::VectorXd& grad,
                                           Eigen::MatrixXd& hess, Eigen::MatrixXd* gauss_newton,
                                           Eigen::MatrixXd* curvature) {
  const int K = obs_.horizon_steps;
  const int n = config_.grid.n;
  const int d = dim();
  const double value = loss_grad(theta, grad);  // fills states_, stages_, nu_

  Eigen::MatrixXd h_gn = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd h_c = Eigen::MatrixXd::Zero(d, d);

  // Forward sensitivity columns S_k = d u_k / d theta, propagated alongside
  // the curvature contraction <nu_{k+1}, D2f(S_k e_a, S_k e_b)>.
  Eigen::MatrixXd sens = *basis_;
  Eigen::MatrixXd next(n, d);
  EtdStepper::StageTangents tangents;
  tangents.v.resize(n, d);
  tangents.da.resize(n, d);
  tangents.db.resize(n, d);
  tangents.dc.resize(n, d);
  Eigen::ArrayXd wP(n), wA(n), wB(n), wC(n);
  Eigen::MatrixXd scaled(n, d);
  Eigen::ArrayXd col_in(n), col_out(n);

  const double gn_scale = 2.0 / obs_.m();
  auto accumulate_gn = [&](int time_index, const Eigen::MatrixXd& s) {
    const int col = obs_col_of_time_[time_index];
    if (col < 0) return;
    for (int i = 0; i < obs_.m_x(); ++i) {
      const auto row = s.row(obs_.sensor_nodes[i]);
      h_gn.noalias() += gn_scale * row.transpose() * row;
    }
  };

  for (int k = 0; k < K; ++k) {
    accumulate_gn(k, sens);
    for (int c = 0; c < d; ++c) {
      col_in = sens.col(c).array();
      stepper_->tangent(stages_[k], col_in, col_out, &tangents, c);
      next.col(c) = col_out.matrix();
    }
    stepper_->curvature_weights(stages_[k], nu_[k + 1], wP, wA, wB, wC);
    scaled.noalias() = wP.matrix().asDiagonal() * tangents.v;
    h_c.noalias() += tangents.v.transpose() * scaled;
    scaled.noalias() = wA.matrix().asDiagonal() * tangents.da;
    h_c.noalias() += tangents.da.transpose() * scaled;
    scaled.noalias() = wB.matrix().asDiagonal() * tangents.db;
    h_c.noalias() += tangents.db.transpose() * scaled;
    scaled.noalias() = wC.matrix().asDiagonal() * tangents.dc;
    h_c.noalias() += tangents.dc.transpose() * scaled;
    sens.swap(next);
  }
  accumulate_gn(K, sens);

  hess = h_gn + h_c;
  if (gauss_newton) *gauss_newton = std::move(h_gn);
  if (curvature) *curvature = std::move(h_c);
  return value;
}

Eigen::MatrixXd AssimilationProblem::residuals_at(const Eigen::VectorXd& theta) {
  forward(theta, false);
  Eigen::MatrixXd res(obs_.m_x(), obs_.m_t());
  for (int j = 0; j < obs_.m_t(); ++j) {
    const Eigen::ArrayXd& state = states_[obs_.time_indices[j]];
    for (int i = 0; i < obs_.m_x(); ++i)
      res(i, j) = state[obs_.sensor_nodes[i]] - obs_.values(i, j);
  }
  return res;
}

std::map<int, Eigen::VectorXd> AssimilationProblem::sub_gradients(const Eigen::VectorXd& theta) {
  const int n = config_.grid.n;
  forward(theta, true);
  std::map<int, Eigen::VectorXd> out;
  Eigen::ArrayXd nu(n), next(n);
  for (int t : obs_.time_indices) {
    fill_weight(t, nu);
    for (int k = t - 1; k >= 0; --k) {
      stepper_->tangent_transpose(stages_[k], nu, next);
      nu.swap(next);
    }
    out[t] = basis_->transpose() * nu.matrix();
  }
  return out;
}

Eigen::VectorXd AssimilationProblem::project(const Eigen::VectorXd& theta, int j_steps) {
  if (j_steps < 0) throw std::invalid_argument("project: negative step count");
  if (10 * j_steps > obs_.horizon_steps)
    throw std::invalid_argument("project: rollout exceeds 10% of the assimilation horizon");
  Eigen::ArrayXd u = (*basis_ * theta).array();
  Eigen::ArrayXd next(config_.grid.n);
  for (int k = 0; k < j_steps; ++k) {
    stepper_->step(u, next);
    u.swap(next);
  }
  Eigen::ArrayXcd hat;
  detail::fft_real(u, hat);
  return control_from_spectrum(hat, config_);
}

LossReport evaluate_loss(const ControlVector& theta, const ObservationSet& obs) {
  AssimilationProblem problem(theta.config, obs);
  LossReport report;
  report.residuals = problem.residuals_at(theta.real_coeffs);
  report.loss = report.residuals.array().square().sum() / obs.m();
  return report;
}

Eigen::VectorXd gradient(const ControlVector& theta, const ObservationSet& obs,
                         LossReport* report) {
  AssimilationProblem problem(theta.config, obs);
  Eigen::VectorXd grad;
  const double loss = problem.loss_grad(theta.real_coeffs, grad);
  if (report) {
    report->loss = loss;
    report->residuals = problem.residuals_at(theta.real_coeffs);
    report->sub_gradients = problem.sub_gradients(theta.real_coeffs);
  }
  return grad;
}

HessianReport hessian(const ControlVector& theta, const ObservationSet& obs) {
  if (theta.dim() > 64)
    throw std::invalid_argument("hessian: dense control dimension limited to 2p-1 <= 64");
  AssimilationProblem problem(theta.config, obs);
  HessianReport report;
  Eigen::VectorXd grad;
  problem.loss_grad_hess(theta.real_coeffs, grad, report.hessian, &report.gauss_newton,
                         &report.curvature_part);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(report.hessian);
  report.eigenvalues = eig.eigenvalues().reverse();
  return report;
}

HessianRankProfile hessian_rank_profile(const HessianReport& report, const ObservationSet& obs) {
  (void)obs;
  HessianRankProfile profile;
  const Eigen::VectorXd& ev = report.eigenvalues;
  if (ev.size() == 0) return profile;
  const double scale = ev.array().abs().maxCoeff();
  const double cutoff = 1e-12 * scale;
  double min_kept = std::numeric_limits<double>::infinity();
  for (int i = 0; i < ev.size(); ++i) {
    if (std::abs(ev[i]) > cutoff) {
      ++profile.effective_rank;
      min_kept = std::min(min_kept, std::abs(ev[i]));
    }
  }
  profile.condition_number =
      profile.effective_rank > 0 ? scale / min_kept : 0.0;
  profile.min_eigenvalue = ev.size() ? ev.minCoeff() : 0.0;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gn(report.gauss_newton,
                                                    Eigen::EigenvaluesOnly);
  const double gn_scale = gn.eigenvalues().array().abs().maxCoeff();
  for (int i = 0; i < gn.eigenvalues().size(); ++i)
    if (std::abs(gn.eigenvalues()[i]) > 1e-12 * gn_scale) ++profile.gn_effective_rank;
  return profile;
}

}  // namespace ksr
