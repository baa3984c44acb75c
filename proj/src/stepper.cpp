#include "ksrecon/stepper.hpp"

#include "ksrecon/errors.hpp"

namespace ksr {

namespace {
constexpr double kBlowUpLimit = 1e6;
using cplx = std::complex<double>;
}  // namespace

EtdStepper::EtdStepper(const EtdCoefficients& coeffs) : coef_(coeffs), n_(coeffs.config.grid.n) {
  const Grid& g = coef_.config.grid;
  zmask_ = coef_.config.dealias.factor;
  deriv1_.resize(n_);
  nsym_.resize(n_);
  nsym2_.resize(n_);
  const cplx iunit(0.0, 1.0);
  for (int j = 0; j < n_; ++j) {
    cplx d1 = iunit * g.wavenumbers[j];
    if (j == n_ / 2) d1 = 0.0;
    deriv1_[j] = d1;
    nsym_[j] = -0.5 * d1 * zmask_[j];
    nsym2_[j] = -d1 * zmask_[j];
  }
  s1_.resize(n_); s2_.resize(n_); s3_.resize(n_); s4_.resize(n_);
  s5_.resize(n_); s6_.resize(n_); s7_.resize(n_); s8_.resize(n_);
  p1_.resize(n_); p2_.resize(n_); p3_.resize(n_);
}

void EtdStepper::run_stages(const Eigen::ArrayXd& u_phys, const Eigen::ArrayXcd& u_hat,
                            Eigen::ArrayXcd& out, Stages* cache) const {
  // n1..n4 are the nonlinear tendencies at the four stage states.
  Eigen::ArrayXcd& n1 = s1_;
  Eigen::ArrayXcd& n2 = s2_;
  Eigen::ArrayXcd& n3 = s3_;
  Eigen::ArrayXcd& a_hat = s4_;
  Eigen::ArrayXcd& b_hat = s5_;
  Eigen::ArrayXcd& c_hat = s6_;
  Eigen::ArrayXcd& tmp = s7_;

  p1_ = u_phys * u_phys;
  detail::fft_real(p1_, tmp);
  n1 = nsym_ * tmp;

  a_hat = coef_.e_half * u_hat + coef_.q * n1;
  detail::ifft_real(a_hat, p1_);
  Eigen::ArrayXd a_phys = p1_;
  p2_ = a_phys * a_phys;
  detail::fft_real(p2_, tmp);
  n2 = nsym_ * tmp;

  b_hat = coef_.e_half * u_hat + coef_.q * n2;
  detail::ifft_real(b_hat, p2_);
  Eigen::ArrayXd b_phys = p2_;
  p3_ = b_phys * b_phys;
  detail::fft_real(p3_, tmp);
  n3 = nsym_ * tmp;

  c_hat = coef_.e_half * a_hat + coef_.q * (2.0 * n3 - n1);
  detail::ifft_real(c_hat, p3_);
  Eigen::ArrayXd c_phys = p3_;
  p3_ = c_phys * c_phys;
  detail::fft_real(p3_, tmp);
  // n4 reuses tmp through nsym_ directly in the update below.

  out = coef_.e_full * u_hat + coef_.f1 * n1 + 2.0 * coef_.f2 * (n2 + n3) +
        coef_.f3 * (nsym_ * tmp);
  if (!out.allFinite()) throw BlowUpError("ETDRK4 step produced non-finite state");

  if (cache) {
    cache->u = u_phys;
    cache->a = std::move(a_phys);
    cache->b = std::move(b_phys);
    cache->c = std::move(c_phys);
  }
}

void EtdStepper::step(const Eigen::ArrayXd& u, Eigen::ArrayXd& out, Stages* cache) const {
  Eigen::ArrayXcd& u_hat = s8_;
  detail::fft_real(u, u_hat);
  Eigen::ArrayXcd out_hat(n_);
  run_stages(u, u_hat, out_hat, cache);
  detail::ifft_real(out_hat, out);
  if (out.abs().maxCoeff() > kBlowUpLimit)
    throw BlowUpError("ETDRK4 step exceeded the blow-up threshold");
}

void EtdStepper::step_spectral(const Eigen::ArrayXcd& u_hat, Eigen::ArrayXcd& out,
                               Stages* cache) const {
  Eigen::ArrayXd u(n_);
  detail::ifft_real(u_hat, u);
  out.resize(n_);
  run_stages(u, u_hat, out, cache);
}

void EtdStepper::nprime(const Eigen::ArrayXd& x_phys, const Eigen::ArrayXcd& v_hat,
                        Eigen::ArrayXcd& out) const {
  Eigen::ArrayXd v(n_);
  detail::ifft_real(v_hat, v);
  p1_ = x_phys * v;
  detail::fft_real(p1_, out);
  out *= nsym2_;
}

void EtdStepper::nprime_adjoint(const Eigen::ArrayXd& x_phys, const Eigen::ArrayXcd& v_hat,
                                Eigen::ArrayXcd& out) const {
  // (L_x)^H v = F( x .* F^{-1}( conj(nsym2) .* v ) )
  Eigen::ArrayXcd scaled = nsym2_.conjugate() * v_hat;
  Eigen::ArrayXd w(n_);
  detail::ifft_real(scaled, w);
  p1_ = x_phys * w;
  detail::fft_real(p1_, out);
}

void EtdStepper::tangent_spectral(const Stages& s, const Eigen::ArrayXcd& v_hat,
                                  Eigen::ArrayXcd& out) const {
  // Differentiates each stage; the nonlinear term is quadratic so
  // N'(x) v = -D1 Z F(x .* v).
  Eigen::ArrayXcd m1(n_), m2(n_), m3(n_), m4(n_), da_hat(n_), db_hat(n_), dc_hat(n_);
  nprime(s.u, v_hat, m1);
  da_hat = coef_.e_half * v_hat + coef_.q * m1;
  nprime(s.a, da_hat, m2);
  db_hat = coef_.e_half * v_hat + coef_.q * m2;
  nprime(s.b, db_hat, m3);
  dc_hat = coef_.e_half * da_hat + coef_.q * (2.0 * m3 - m1);
  nprime(s.c, dc_hat, m4);
  out = coef_.e_full * v_hat + coef_.f1 * m1 + 2.0 * coef_.f2 * (m2 + m3) + coef_.f3 * m4;
}

void EtdStepper::tangent(const Stages& s, const Eigen::ArrayXd& v, Eigen::ArrayXd& out,
                         StageTangents* tangents, int col) const {
  Eigen::ArrayXcd v_hat(n_);
  detail::fft_real(v, v_hat);
  Eigen::ArrayXcd m1(n_), m2(n_), m3(n_), m4(n_), da_hat(n_), db_hat(n_), dc_hat(n_);
  Eigen::ArrayXd da(n_), db(n_), dc(n_);

  // inline nprime with the physical stage tangents kept
  auto nprime_keep = [&](const Eigen::ArrayXd& x, const Eigen::ArrayXcd& in_hat,
                         Eigen::ArrayXd& in_phys, Eigen::ArrayXcd& res) {
    detail::ifft_real(in_hat, in_phys);
    p1_ = x * in_phys;
    detail::fft_real(p1_, res);
    res *= nsym2_;
  };

  p2_ = s.u * v;
  detail::fft_real(p2_, m1);
  m1 *= nsym2_;
  da_hat = coef_.e_half * v_hat + coef_.q * m1;
  nprime_keep(s.a, da_hat, da, m2);
  db_hat = coef_.e_half * v_hat + coef_.q * m2;
  nprime_keep(s.b, db_hat, db, m3);
  dc_hat = coef_.e_half * da_hat + coef_.q * (2.0 * m3 - m1);
  nprime_keep(s.c, dc_hat, dc, m4);
  s8_ = coef_.e_full * v_hat + coef_.f1 * m1 + 2.0 * coef_.f2 * (m2 + m3) + coef_.f3 * m4;
  detail::ifft_real(s8_, out);

  if (tangents) {
    tangents->v.col(col) = v.matrix();
    tangents->da.col(col) = da.matrix();
    tangents->db.col(col) = db.matrix();
    tangents->dc.col(col) = dc.matrix();
  }
}

void EtdStepper::tangent_transpose(const Stages& s, const Eigen::ArrayXd& w,
                                   Eigen::ArrayXd& out) const {
  // Reverse-mode sweep of tangent(); diagonal spectral factors are real and
  // self-adjoint, N'(x) transposes to F(x .* F^{-1}(conj(nsym2) .*)).
  Eigen::ArrayXcd w_hat(n_);
  detail::fft_real(w, w_hat);

  Eigen::ArrayXcd m4_bar = coef_.f3 * w_hat;
  Eigen::ArrayXcd dc_bar(n_);
  nprime_adjoint(s.c, m4_bar, dc_bar);

  Eigen::ArrayXcd m3_bar = 2.0 * coef_.f2 * w_hat + 2.0 * coef_.q * dc_bar;
  Eigen::ArrayXcd m1_bar = coef_.f1 * w_hat - coef_.q * dc_bar;
  Eigen::ArrayXcd da_bar = coef_.e_half * dc_bar;

  Eigen::ArrayXcd db_bar(n_);
  nprime_adjoint(s.b, m3_bar, db_bar);
  Eigen::ArrayXcd m2_bar = 2.0 * coef_.f2 * w_hat + coef_.q * db_bar;

  Eigen::ArrayXcd tmp(n_);
  nprime_adjoint(s.a, m2_bar, tmp);
  da_bar += tmp;
  m1_bar += coef_.q * da_bar;

  nprime_adjoint(s.u, m1_bar, tmp);
  s8_ = coef_.e_full * w_hat + coef_.e_half * (da_bar + db_bar) + tmp;
  detail::ifft_real(s8_, out);
}

void EtdStepper::curvature_weights(const Stages& s, const Eigen::ArrayXd& nu, Eigen::ArrayXd& wP,
                                   Eigen::ArrayXd& wA, Eigen::ArrayXd& wB,
                                   Eigen::ArrayXd& wC) const {
  // For the quadratic nonlinearity the second derivative of the step
  // contracts against nu as four diagonal forms over the physical stage
  // tangents:  <nu, D2f(v,w)> = sum_x wP v w + wA da da + wB db db + wC dc dc.
  Eigen::ArrayXcd nu_hat(n_);
  detail::fft_real(nu, nu_hat);

  Eigen::ArrayXcd t_c(n_), t_b(n_), t_a(n_);
  nprime_adjoint(s.c, Eigen::ArrayXcd(coef_.f3 * nu_hat), t_c);
  Eigen::ArrayXcd beta = coef_.f2 * nu_hat + coef_.q * t_c;
  nprime_adjoint(s.b, beta, t_b);
  Eigen::ArrayXcd alpha = coef_.f2 * nu_hat + coef_.q * t_b;
  nprime_adjoint(s.a, alpha, t_a);

  const Eigen::ArrayXcd pull = nsym2_.conjugate();
  Eigen::ArrayXcd gP =
      pull * (coef_.f1 * nu_hat + 2.0 * coef_.q * t_a + coef_.q * (coef_.e_half - 1.0) * t_c);
  detail::ifft_real(gP, wP);
  Eigen::ArrayXcd gA = pull * (2.0 * alpha);
  detail::ifft_real(gA, wA);
  Eigen::ArrayXcd gB = pull * (2.0 * beta);
  detail::ifft_real(gB, wB);
  Eigen::ArrayXcd gC = pull * (coef_.f3 * nu_hat);
  detail::ifft_real(gC, wC);
}

}  // namespace ksr
