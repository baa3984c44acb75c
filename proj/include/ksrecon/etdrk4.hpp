#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ksrecon/field.hpp"
#include "ksrecon/fourier.hpp"
#include "ksrecon/grid.hpp"

namespace ksr {

enum class Preset { L22, L44, L66 };

struct SolverConfig {
  Grid grid;
  double dt = 0.0;
  int modes_control = 0;  // p: retained Fourier modes for the control vector
  DealiasMask dealias;

  static SolverConfig custom(double length, int n, double dt, int modes_control);
  static SolverConfig preset(Preset which);

  int control_dim() const { return 2 * modes_control - 1; }
};

// Precomputed per-mode ETDRK4 tables: the half/full-step exponentials and
// the Cox--Matthews quadrature weights. Removable singularities at c -> 0
// are evaluated by averaging over a unit circle of 32 contour points; the
// direct formulas take over for |c dt| > 0.5.
struct EtdCoefficients {
  SolverConfig config;
  Eigen::ArrayXd symbol;  // c_j = k^2 - k^4
  Eigen::ArrayXd e_full;  // e^{c dt}
  Eigen::ArrayXd e_half;  // e^{c dt/2}
  Eigen::ArrayXd q;       // (e^{c dt/2} - 1)/c
  Eigen::ArrayXd f1, f2, f3;
};

EtdCoefficients precompute_coefficients(const SolverConfig& config);

// Dealiased spectral tendency of the advection term, N(u) = -1/2 D1 F(u^2).
SpectralField nonlinear_term(const SpectralField& u_hat, const SolverConfig& config);

// One ETDRK4 step in spectral space.
SpectralField step(const SpectralField& u_hat, const EtdCoefficients& coeffs);

struct Trajectory {
  std::vector<PhysicalField> states;  // length steps+1, times 0, dt, ..., steps*dt
  SolverConfig config;

  int steps() const { return static_cast<int>(states.size()) - 1; }
};

// Forward integration storing every state. The chain is a pure iteration of
// the physical-space step map, so rollout(u0, a+b) continues bit-exactly
// from rollout(u0, a).states.back().
Trajectory rollout(const PhysicalField& u0, int steps, const SolverConfig& config);

// Exact directional derivative of one step at u_hat in direction v.
SpectralField step_jacobian_apply(const SpectralField& u_hat, const SpectralField& v,
                                  const EtdCoefficients& coeffs);

// Dense one-step Jacobian in the real physical-space basis (columns are the
// images of the standard basis vectors). Guarded to n <= 256.
Eigen::MatrixXd step_jacobian_matrix(const SpectralField& u_hat, const EtdCoefficients& coeffs);

}  // namespace ksr
