#include "ksrecon/etdrk4.hpp"

#include <complex>

#include "ksrecon/errors.hpp"
#include "ksrecon/stepper.hpp"

namespace ksr {

SolverConfig SolverConfig::custom(double length, int n, double dt, int modes_control) {
  if (dt <= 0.0) throw std::invalid_argument("SolverConfig: dt must be positive");
  SolverConfig cfg;
  cfg.grid = Grid::make(length, n);
  cfg.dt = dt;
  cfg.modes_control = modes_control;
  if (modes_control < 1 || modes_control > n / 2)
    throw std::invalid_argument("SolverConfig: modes_control must be in [1, n/2]");
  cfg.dealias = DealiasMask::one_third(cfg.grid);
  return cfg;
}

SolverConfig SolverConfig::preset(Preset which) {
  switch (which) {
    case Preset::L22: return custom(22.0, 64, 0.1, 15);
    case Preset::L44: return custom(44.0, 64, 0.1, 20);
    case Preset::L66: return custom(66.0, 72, 0.05, 25);
  }
  throw std::invalid_argument("SolverConfig: unknown preset");
}

namespace {

using cplx = std::complex<double>;

// The four ETDRK4 weight kernels as functions of z = c*dt (without the dt
// prefactor). All have removable singularities at z = 0.
cplx kernel_q(cplx z) { return (std::exp(0.5 * z) - 1.0) / z; }
cplx kernel_f1(cplx z) {
  return (-4.0 - z + std::exp(z) * (4.0 - 3.0 * z + z * z)) / (z * z * z);
}
cplx kernel_f2(cplx z) { return (2.0 + z + std::exp(z) * (-2.0 + z)) / (z * z * z); }
cplx kernel_f3(cplx z) {
  return (-4.0 - 3.0 * z - z * z + std::exp(z) * (4.0 - z)) / (z * z * z);
}

// Mean over a unit circle around z; exact for entire functions up to the
// (spectrally small) trapezoid error, and free of cancellation.
template <typename F>
double contour_mean(F f, double z, int points = 32) {
  cplx acc(0.0, 0.0);
  for (int m = 0; m < points; ++m) {
    const double angle = 2.0 * M_PI * (m + 0.5) / points;
    acc += f(cplx(z, 0.0) + std::polar(1.0, angle));
  }
  return acc.real() / points;
}

template <typename F>
double weight(F f, double z) {
  if (std::abs(z) > 0.5) return f(cplx(z, 0.0)).real();
  return contour_mean(f, z);
}

}  // namespace

EtdCoefficients precompute_coefficients(const SolverConfig& config) {
  EtdCoefficients c;
  c.config = config;
  c.symbol = linear_symbol(config.grid);
  const int n = config.grid.n;
  const double dt = config.dt;
  c.e_full.resize(n);
  c.e_half.resize(n);
  c.q.resize(n);
  c.f1.resize(n);
  c.f2.resize(n);
  c.f3.resize(n);
  for (int j = 0; j < n; ++j) {
    const double z = c.symbol[j] * dt;
    c.e_full[j] = std::exp(z);
    c.e_half[j] = std::exp(0.5 * z);
    c.q[j] = dt * weight(kernel_q, z);
    c.f1[j] = dt * weight(kernel_f1, z);
    c.f2[j] = dt * weight(kernel_f2, z);
    c.f3[j] = dt * weight(kernel_f3, z);
  }
  if (!(c.e_full.allFinite() && c.q.allFinite() && c.f1.allFinite() && c.f2.allFinite() &&
        c.f3.allFinite()))
    throw std::runtime_error("precompute_coefficients: non-finite weight");
  return c;
}

SpectralField nonlinear_term(const SpectralField& u_hat, const SolverConfig& config) {
  Eigen::ArrayXd u;
  detail::ifft_real(u_hat.coeffs, u);
  Eigen::ArrayXcd prod_hat;
  detail::fft_real(Eigen::ArrayXd(u * u), prod_hat);
  const Grid& g = config.grid;
  SpectralField out;
  out.grid = g;
  out.coeffs.resize(g.n);
  const cplx iunit(0.0, 1.0);
  for (int j = 0; j < g.n; ++j) {
    cplx d1 = iunit * g.wavenumbers[j];
    if (j == g.n / 2) d1 = 0.0;
    out.coeffs[j] = -0.5 * d1 * config.dealias.factor[j] * prod_hat[j];
  }
  return out;
}

SpectralField step(const SpectralField& u_hat, const EtdCoefficients& coeffs) {
  EtdStepper stepper(coeffs);
  SpectralField out;
  out.grid = u_hat.grid;
  stepper.step_spectral(u_hat.coeffs, out.coeffs);
  return out;
}

Trajectory rollout(const PhysicalField& u0, int steps, const SolverConfig& config) {
  if (steps < 0) throw std::invalid_argument("rollout: steps must be >= 0");
  if (u0.grid.n != config.grid.n) throw std::invalid_argument("rollout: grid mismatch");
  Trajectory traj;
  traj.config = config;
  traj.states.reserve(steps + 1);
  traj.states.push_back(u0);
  if (steps == 0) return traj;
  EtdStepper stepper(precompute_coefficients(config));
  Eigen::ArrayXd cur = u0.values;
  Eigen::ArrayXd next(config.grid.n);
  for (int k = 0; k < steps; ++k) {
    try {
      stepper.step(cur, next);
    } catch (const BlowUpError& e) {
      throw BlowUpError(std::string(e.what()) + " at step " + std::to_string(k + 1), k + 1);
    }
    traj.states.emplace_back(config.grid, next);
    cur.swap(next);
  }
  return traj;
}

SpectralField step_jacobian_apply(const SpectralField& u_hat, const SpectralField& v,
                                  const EtdCoefficients& coeffs) {
  EtdStepper stepper(coeffs);
  EtdStepper::Stages stages;
  Eigen::ArrayXcd unused;
  stepper.step_spectral(u_hat.coeffs, unused, &stages);
  SpectralField out;
  out.grid = u_hat.grid;
  stepper.tangent_spectral(stages, v.coeffs, out.coeffs);
  return out;
}

Eigen::MatrixXd step_jacobian_matrix(const SpectralField& u_hat, const EtdCoefficients& coeffs) {
  const int n = u_hat.grid.n;
  if (n > 256) throw std::invalid_argument("step_jacobian_matrix: dense assembly limited to n <= 256");
  EtdStepper stepper(coeffs);
  EtdStepper::Stages stages;
  Eigen::ArrayXd u;
  detail::ifft_real(u_hat.coeffs, u);
  Eigen::ArrayXd unused(n);
  stepper.step(u, unused, &stages);
  Eigen::MatrixXd jac(n, n);
  Eigen::ArrayXd e = Eigen::ArrayXd::Zero(n);
  Eigen::ArrayXd col(n);
  for (int i = 0; i < n; ++i) {
    e[i] = 1.0;
    stepper.tangent(stages, e, col);
    jac.col(i) = col.matrix();
    e[i] = 0.0;
  }
  return jac;
}

}  // namespace ksr
