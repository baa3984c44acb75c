#pragma once

#include <Eigen/Dense>

#include "ksrecon/etdrk4.hpp"

namespace ksr {

// Engine room for the ETDRK4 map and its derivatives, all expressed as maps
// between real physical-space vectors (spectral work is internal). One
// instance owns scratch buffers and is not thread-safe; use one per thread.
//
// Derivative conventions: with f the one-step map on R^n,
//   tangent:            v  -> (Df) v
//   tangent_transpose:  w  -> (Df)^T w          (real transpose)
//   curvature weights:  nu -> omega fields with
//       <nu, D2f(v, w)> = sum_x [ wP v w + wA da(v) da(w)
//                               + wB db(v) db(w) + wC dc(v) dc(w) ](x)
// where da, db, dc are the stage tangents that tangent() can emit.
class EtdStepper {
 public:
  explicit EtdStepper(const EtdCoefficients& coeffs);

  struct Stages {
    // Physical base-point fields of the four stage states.
    Eigen::ArrayXd u, a, b, c;
  };

  struct StageTangents {
    // Physical tangents of input and stages; sized n x cols.
    Eigen::MatrixXd v, da, db, dc;
  };

  int n() const { return n_; }
  const EtdCoefficients& coeffs() const { return coef_; }

  // One step u -> f(u); optionally captures stage fields for derivative use.
  void step(const Eigen::ArrayXd& u, Eigen::ArrayXd& out, Stages* cache = nullptr) const;

  // Directional derivative at the cached base point. When tangents is given,
  // column `col` of each member receives the physical stage tangents.
  void tangent(const Stages& s, const Eigen::ArrayXd& v, Eigen::ArrayXd& out,
               StageTangents* tangents = nullptr, int col = 0) const;

  void tangent_transpose(const Stages& s, const Eigen::ArrayXd& w, Eigen::ArrayXd& out) const;

  void curvature_weights(const Stages& s, const Eigen::ArrayXd& nu, Eigen::ArrayXd& wP,
                         Eigen::ArrayXd& wA, Eigen::ArrayXd& wB, Eigen::ArrayXd& wC) const;

  // Spectral-space step used by the public ks-solver ops.
  void step_spectral(const Eigen::ArrayXcd& u_hat, Eigen::ArrayXcd& out,
                     Stages* cache = nullptr) const;
  void tangent_spectral(const Stages& s, const Eigen::ArrayXcd& v_hat,
                        Eigen::ArrayXcd& out) const;

 private:
  // N'(x)v for spectral v with x the physical stage field
  void nprime(const Eigen::ArrayXd& x_phys, const Eigen::ArrayXcd& v_hat,
              Eigen::ArrayXcd& out) const;
  // adjoint (L_x)^H v = F(x .* F^{-1}(Z D1 v))
  void nprime_adjoint(const Eigen::ArrayXd& x_phys, const Eigen::ArrayXcd& v_hat,
                      Eigen::ArrayXcd& out) const;
  void run_stages(const Eigen::ArrayXd& u_phys, const Eigen::ArrayXcd& u_hat,
                  Eigen::ArrayXcd& out, Stages* cache) const;

  EtdCoefficients coef_;
  int n_;
  Eigen::ArrayXcd deriv1_;   // i k, Nyquist zeroed
  Eigen::ArrayXcd nsym_;     // -1/2 i k Z (symbol of the nonlinear term)
  Eigen::ArrayXcd nsym2_;    // -i k Z (symbol of N', absorbs the product-rule 2)
  Eigen::ArrayXd zmask_;     // dealias factors
  // scratch
  mutable Eigen::ArrayXcd s1_, s2_, s3_, s4_, s5_, s6_, s7_, s8_;
  mutable Eigen::ArrayXd p1_, p2_, p3_;
};

}  // namespace ksr
