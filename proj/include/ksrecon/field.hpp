#pragma once

#include <Eigen/Dense>
#include <complex>

#include "ksrecon/grid.hpp"

namespace ksr {

// Real periodic field sampled at the grid nodes. Immutable value type.
struct PhysicalField {
  Grid grid;
  Eigen::ArrayXd values;

  PhysicalField() = default;
  PhysicalField(Grid g, Eigen::ArrayXd v) : grid(std::move(g)), values(std::move(v)) {}

  static PhysicalField zero(const Grid& g) { return {g, Eigen::ArrayXd::Zero(g.n)}; }
  static PhysicalField constant(const Grid& g, double c) {
    return {g, Eigen::ArrayXd::Constant(g.n, c)};
  }
};

// Complex Fourier coefficients of a real field; must stay conjugate
// symmetric (coeffs[n-j] = conj(coeffs[j])) so the inverse is real.
struct SpectralField {
  Grid grid;
  Eigen::ArrayXcd coeffs;

  SpectralField() = default;
  SpectralField(Grid g, Eigen::ArrayXcd c) : grid(std::move(g)), coeffs(std::move(c)) {}

  static SpectralField zero(const Grid& g) { return {g, Eigen::ArrayXcd::Zero(g.n)}; }

  // Max violation of the conjugate-symmetry layout, relative to the
  // largest coefficient magnitude.
  double symmetry_defect() const {
    const int n = grid.n;
    const double scale = std::max(coeffs.abs().maxCoeff(), 1.0);
    double worst = std::abs(coeffs[0].imag());
    worst = std::max(worst, std::abs(coeffs[n / 2].imag()));
    for (int j = 1; j < n / 2; ++j)
      worst = std::max(worst, std::abs(coeffs[j] - std::conj(coeffs[n - j])));
    return worst / scale;
  }

  bool is_conjugate_symmetric(double tol = 1e-12) const { return symmetry_defect() < tol; }
};

}  // namespace ksr
