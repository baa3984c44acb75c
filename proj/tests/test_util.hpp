#pragma once

#include <Eigen/Dense>
#include <complex>

#include "ksrecon/field.hpp"
#include "ksrecon/rng.hpp"

namespace ksr::testing {

// O(n^2) DFT-sum oracles, independent of the FFT path under test.
inline Eigen::ArrayXcd naive_dft(const Eigen::ArrayXd& u) {
  const int n = static_cast<int>(u.size());
  Eigen::ArrayXcd out(n);
  for (int j = 0; j < n; ++j) {
    std::complex<double> acc(0.0, 0.0);
    for (int m = 0; m < n; ++m)
      acc += u[m] * std::polar(1.0, -2.0 * M_PI * j * m / n);
    out[j] = acc;
  }
  return out;
}

inline Eigen::ArrayXd naive_idft_real(const Eigen::ArrayXcd& c) {
  const int n = static_cast<int>(c.size());
  Eigen::ArrayXd out(n);
  for (int m = 0; m < n; ++m) {
    std::complex<double> acc(0.0, 0.0);
    for (int j = 0; j < n; ++j) acc += c[j] * std::polar(1.0, 2.0 * M_PI * j * m / n);
    out[m] = acc.real() / n;
  }
  return out;
}

inline Eigen::ArrayXd random_field(const Grid& grid, SplitMix64& rng, double amp = 1.0) {
  Eigen::ArrayXd u(grid.n);
  for (int i = 0; i < grid.n; ++i) u[i] = amp * rng.normal();
  return u;
}

// random conjugate-symmetric spectrum (real inverse transform)
inline Eigen::ArrayXcd random_symmetric_spectrum(const Grid& grid, SplitMix64& rng,
                                                 double amp = 1.0) {
  const int n = grid.n;
  Eigen::ArrayXcd c = Eigen::ArrayXcd::Zero(n);
  c[0] = amp * rng.normal();
  c[n / 2] = amp * rng.normal();
  for (int j = 1; j < n / 2; ++j) {
    const std::complex<double> z(amp * rng.normal(), amp * rng.normal());
    c[j] = z;
    c[n - j] = std::conj(z);
  }
  return c;
}

inline double rel_err(double got, double want, double floor_scale = 1e-300) {
  return std::abs(got - want) / std::max(std::abs(want), floor_scale);
}

// Component-wise relative error with the denominator floored at `floor_frac`
// of the largest reference component: below the floor the comparison is
// effectively absolute, which is where central differences bottom out in
// round-off (the FD values themselves carry ~1e-10 absolute noise at
// eps = 1e-6 on O(1) losses).
inline double max_rel_component_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want,
                                      double floor_frac = 1e-2) {
  const double scale = want.array().abs().maxCoeff();
  double worst = 0.0;
  for (int i = 0; i < got.size(); ++i) {
    const double denom = std::max(std::abs(want[i]), floor_frac * scale);
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

inline double max_rel_matrix_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want,
                                   double floor_frac = 1e-3) {
  const double scale = want.array().abs().maxCoeff();
  double worst = 0.0;
  for (int i = 0; i < got.rows(); ++i)
    for (int j = 0; j < got.cols(); ++j) {
      const double denom = std::max(std::abs(want(i, j)), floor_frac * scale);
      worst = std::max(worst, std::abs(got(i, j) - want(i, j)) / denom);
    }
  return worst;
}

}  // namespace ksr::testing
