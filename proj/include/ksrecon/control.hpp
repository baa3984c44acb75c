#pragma once

#include <Eigen/Dense>

#include "ksrecon/etdrk4.hpp"

namespace ksr {

// Real encoding of the p complex control modes: [Re c0, Re c1, Im c1, ...,
// Re c_{p-1}, Im c_{p-1}], 2p-1 reals total. Conjugate symmetry is implied,
// so decoded fields are real and the eigen machinery works over R^{2p-1}.
struct ControlVector {
  Eigen::VectorXd real_coeffs;
  SolverConfig config;

  int dim() const { return static_cast<int>(real_coeffs.size()); }
};

ControlVector encode(const PhysicalField& field, const SolverConfig& config);
PhysicalField decode(const ControlVector& theta);
SpectralField decode_spectral(const ControlVector& theta);

// d u_theta / d theta: constant n x (2p-1) matrix mapping the real control
// coordinates to the decoded physical field.
Eigen::MatrixXd control_basis(const SolverConfig& config);

// Spectral coefficients -> real control coordinates (truncation to p modes).
Eigen::VectorXd control_from_spectrum(const Eigen::ArrayXcd& coeffs, const SolverConfig& config);

}  // namespace ksr
