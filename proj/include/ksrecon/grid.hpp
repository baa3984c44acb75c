#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace ksr {

// Uniform periodic grid on [-L/2, L/2) with n nodes and the signed-index
// wavenumber layout k_j = 2*pi*j'/L, j' = j for j <= n/2 and j - n above.
struct Grid {
  double length = 0.0;
  int n = 0;
  double dx = 0.0;
  Eigen::ArrayXd wavenumbers;

  static Grid make(double length, int n) {
    if (length <= 0.0) throw std::invalid_argument("Grid: length must be positive");
    if (n < 4 || n % 2 != 0) throw std::invalid_argument("Grid: n must be even and >= 4");
    Grid g;
    g.length = length;
    g.n = n;
    g.dx = length / n;
    g.wavenumbers.resize(n);
    const double k0 = 2.0 * M_PI / length;
    for (int j = 0; j < n; ++j) g.wavenumbers[j] = k0 * g.signed_index(j, n);
    return g;
  }

  static int signed_index(int j, int n) { return j <= n / 2 ? j : j - n; }
  int signed_index(int j) const { return signed_index(j, n); }

  // node positions x_m = -L/2 + m*dx
  Eigen::ArrayXd nodes() const {
    Eigen::ArrayXd x(n);
    for (int m = 0; m < n; ++m) x[m] = -0.5 * length + m * dx;
    return x;
  }

  bool same_as(const Grid& other) const { return n == other.n && length == other.length; }
};

// One-third dealiasing: keep |j'| <= n/3, zero everything above.
struct DealiasMask {
  int n = 0;
  Eigen::ArrayXd factor;  // 1.0 kept, 0.0 masked

  static DealiasMask one_third(const Grid& grid) {
    DealiasMask m;
    m.n = grid.n;
    m.factor.resize(grid.n);
    for (int j = 0; j < grid.n; ++j) {
      const int jp = std::abs(Grid::signed_index(j, grid.n));
      m.factor[j] = (3 * jp <= grid.n) ? 1.0 : 0.0;
    }
    return m;
  }

  bool keeps(int j) const { return factor[j] != 0.0; }
};

}  // namespace ksr
