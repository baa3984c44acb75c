#pragma once

#include <Eigen/Dense>

#include "ksrecon/errors.hpp"
#include "ksrecon/field.hpp"
#include "ksrecon/grid.hpp"

namespace ksr {

// Convention: forward transform is the plain unnormalized DFT
// (u_hat_j = sum_m u_m e^{-2 pi i j m / n}); the inverse carries 1/n, so
// inverse(forward(u)) == u and Parseval reads sum(u^2) dx = (dx/n) sum |u_hat|^2.
SpectralField forward_transform(const PhysicalField& field);
PhysicalField inverse_transform(const SpectralField& coeffs);

// Multiply by (i k_j)^order; order in {1, 2, 4}. The Nyquist mode is zeroed
// for odd orders so real fields map to real fields.
SpectralField spectral_derivative(const SpectralField& coeffs, int order);

// Per-mode symbol of the KS linear operator, c_j = k_j^2 - k_j^4.
Eigen::ArrayXd linear_symbol(const Grid& grid);

SpectralField apply_dealias(const DealiasMask& mask, const SpectralField& coeffs);

namespace detail {

// Raw unnormalized FFTW transforms on length-n complex buffers. Plans are
// cached per n and safe to execute concurrently on distinct buffers.
void fft(int n, const std::complex<double>* in, std::complex<double>* out);
void ifft_unscaled(int n, const std::complex<double>* in, std::complex<double>* out);

void fft(const Eigen::ArrayXcd& in, Eigen::ArrayXcd& out);
// inverse including the 1/n factor
void ifft(const Eigen::ArrayXcd& in, Eigen::ArrayXcd& out);

// real field -> spectrum and spectrum -> real part, no validity checks
void fft_real(const Eigen::ArrayXd& in, Eigen::ArrayXcd& out);
void ifft_real(const Eigen::ArrayXcd& in, Eigen::ArrayXd& out);

}  // namespace detail

}  // namespace ksr
