#include "ksrecon/control.hpp"

#include "ksrecon/fourier.hpp"

namespace ksr {

Eigen::VectorXd control_from_spectrum(const Eigen::ArrayXcd& coeffs, const SolverConfig& config) {
  const int p = config.modes_control;
  Eigen::VectorXd theta(2 * p - 1);
  theta[0] = coeffs[0].real();
  for (int j = 1; j < p; ++j) {
    theta[2 * j - 1] = coeffs[j].real();
    theta[2 * j] = coeffs[j].imag();
  }
  return theta;
}

ControlVector encode(const PhysicalField& field, const SolverConfig& config) {
  if (field.grid.n != config.grid.n) throw std::invalid_argument("encode: grid mismatch");
  SpectralField hat = forward_transform(field);
  return {control_from_spectrum(hat.coeffs, config), config};
}

SpectralField decode_spectral(const ControlVector& theta) {
  const SolverConfig& cfg = theta.config;
  const int n = cfg.grid.n;
  const int p = cfg.modes_control;
  if (theta.dim() != 2 * p - 1) throw std::invalid_argument("decode: control size mismatch");
  SpectralField hat = SpectralField::zero(cfg.grid);
  hat.coeffs[0] = theta.real_coeffs[0];
  for (int j = 1; j < p; ++j) {
    const std::complex<double> c(theta.real_coeffs[2 * j - 1], theta.real_coeffs[2 * j]);
    hat.coeffs[j] = c;
    hat.coeffs[n - j] = std::conj(c);
  }
  return hat;
}

PhysicalField decode(const ControlVector& theta) {
  SpectralField hat = decode_spectral(theta);
  PhysicalField out;
  out.grid = hat.grid;
  detail::ifft_real(hat.coeffs, out.values);
  return out;
}

Eigen::MatrixXd control_basis(const SolverConfig& config) {
  const int n = config.grid.n;
  const int p = config.modes_control;
  const int d = 2 * p - 1;
  Eigen::MatrixXd basis(n, d);
  // Inverse-DFT columns in index phase 2 pi j m / n: the Re c_j column is
  // (2/n) cos, the Im c_j column -(2/n) sin, DC is 1/n.
  basis.col(0) = Eigen::VectorXd::Constant(n, 1.0 / n);
  for (int j = 1; j < p; ++j) {
    for (int m = 0; m < n; ++m) {
      const double phase = 2.0 * M_PI * j * m / n;
      basis(m, 2 * j - 1) = (2.0 / n) * std::cos(phase);
      basis(m, 2 * j) = (-2.0 / n) * std::sin(phase);
    }
  }
  return basis;
}

}  // namespace ksr
