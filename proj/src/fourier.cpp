#include "ksrecon/fourier.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace ksr {
namespace detail {
namespace {

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

// FFTW planning is not thread-safe; execution via fftw_execute_dft on
// distinct buffers is. Plans use ESTIMATE so the chosen algorithm (and the
// bit pattern of every result) is reproducible across runs.
const PlanPair& plans_for(int n) {
  static std::mutex mu;
  static std::map<int, PlanPair>* cache = new std::map<int, PlanPair>();
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache->find(n);
  if (it == cache->end()) {
    PlanPair p;
    fftw_complex* a = fftw_alloc_complex(n);
    fftw_complex* b = fftw_alloc_complex(n);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    p.forward = fftw_plan_dft_1d(n, a, b, FFTW_FORWARD, flags);
    p.backward = fftw_plan_dft_1d(n, a, b, FFTW_BACKWARD, flags);
    fftw_free(a);
    fftw_free(b);
    it = cache->emplace(n, p).first;
  }
  return it->second;
}

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

void fft(int n, const std::complex<double>* in, std::complex<double>* out) {
  const PlanPair& p = plans_for(n);
  fftw_execute_dft(p.forward, as_fftw(const_cast<std::complex<double>*>(in)), as_fftw(out));
}

void ifft_unscaled(int n, const std::complex<double>* in, std::complex<double>* out) {
  const PlanPair& p = plans_for(n);
  fftw_execute_dft(p.backward, as_fftw(const_cast<std::complex<double>*>(in)), as_fftw(out));
}

void fft(const Eigen::ArrayXcd& in, Eigen::ArrayXcd& out) {
  out.resize(in.size());
  fft(static_cast<int>(in.size()), in.data(), out.data());
}

void ifft(const Eigen::ArrayXcd& in, Eigen::ArrayXcd& out) {
  out.resize(in.size());
  ifft_unscaled(static_cast<int>(in.size()), in.data(), out.data());
  out /= static_cast<double>(in.size());
}

void fft_real(const Eigen::ArrayXd& in, Eigen::ArrayXcd& out) {
  const int n = static_cast<int>(in.size());
  Eigen::ArrayXcd tmp(n);
  for (int i = 0; i < n; ++i) tmp[i] = std::complex<double>(in[i], 0.0);
  out.resize(n);
  fft(n, tmp.data(), out.data());
}

void ifft_real(const Eigen::ArrayXcd& in, Eigen::ArrayXd& out) {
  const int n = static_cast<int>(in.size());
  Eigen::ArrayXcd tmp(n);
  ifft_unscaled(n, in.data(), tmp.data());
  out.resize(n);
  const double inv_n = 1.0 / n;
  for (int i = 0; i < n; ++i) out[i] = tmp[i].real() * inv_n;
}

}  // namespace detail

SpectralField forward_transform(const PhysicalField& field) {
  if (field.values.size() != field.grid.n)
    throw InvalidFieldError("forward_transform: field length does not match grid");
  if (!field.values.allFinite())
    throw InvalidFieldError("forward_transform: non-finite values in field");
  SpectralField out;
  out.grid = field.grid;
  detail::fft_real(field.values, out.coeffs);
  return out;
}

PhysicalField inverse_transform(const SpectralField& coeffs) {
  const int n = coeffs.grid.n;
  if (coeffs.coeffs.size() != n)
    throw InvalidFieldError("inverse_transform: coefficient length does not match grid");
  if (!coeffs.coeffs.allFinite())
    throw InvalidFieldError("inverse_transform: non-finite coefficients");
  if (!coeffs.is_conjugate_symmetric(1e-12))
    throw SymmetryError("inverse_transform: coefficients are not conjugate symmetric");
  Eigen::ArrayXcd tmp(n);
  detail::ifft_unscaled(n, coeffs.coeffs.data(), tmp.data());
  tmp /= static_cast<double>(n);
  const double imag_resid = tmp.imag().abs().maxCoeff();
  if (imag_resid >= 1e-10)
    throw SymmetryError("inverse_transform: imaginary residue " + std::to_string(imag_resid));
  PhysicalField out;
  out.grid = coeffs.grid;
  out.values = tmp.real();
  return out;
}

SpectralField spectral_derivative(const SpectralField& coeffs, int order) {
  if (order != 1 && order != 2 && order != 4)
    throw std::invalid_argument("spectral_derivative: order must be 1, 2 or 4");
  const Grid& g = coeffs.grid;
  SpectralField out;
  out.grid = g;
  out.coeffs.resize(g.n);
  const std::complex<double> iunit(0.0, 1.0);
  for (int j = 0; j < g.n; ++j) {
    std::complex<double> sym = std::pow(iunit * g.wavenumbers[j], order);
    if (order % 2 == 1 && j == g.n / 2) sym = 0.0;  // Nyquist: keep output real
    out.coeffs[j] = sym * coeffs.coeffs[j];
  }
  return out;
}

Eigen::ArrayXd linear_symbol(const Grid& grid) {
  const Eigen::ArrayXd k2 = grid.wavenumbers.square();
  return k2 - k2.square();
}

SpectralField apply_dealias(const DealiasMask& mask, const SpectralField& coeffs) {
  if (mask.n != coeffs.grid.n)
    throw std::invalid_argument("apply_dealias: mask size does not match grid");
  SpectralField out = coeffs;
  out.coeffs *= mask.factor.cast<std::complex<double>>();
  return out;
}

}  // namespace ksr
