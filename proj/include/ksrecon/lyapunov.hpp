#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "ksrecon/etdrk4.hpp"
#include "ksrecon/rng.hpp"
#include "ksrecon/stepper.hpp"

namespace ksr {

struct LyapunovSpectrum {
  Eigen::VectorXd exponents;  // descending
  double horizon = 0.0;
  double reorth_interval = 0.0;
  double d_ky = 0.0;
  double t_lyap = 0.0;  // 1 / exponents[0]
};

struct AttractorStats {
  PhysicalField center;
  double radius = 0.0;
  int sample_count = 0;
  double burn_in = 0.0;
};

// Discrete dynamical system with tangent propagation, the interface the
// Benettin driver walks. Columns of the tangent block are advanced jointly
// with the state.
struct TangentSystem {
  int dim = 0;
  double dt = 0.0;
  std::function<void(Eigen::ArrayXd&)> advance_state;
  std::function<void(const Eigen::ArrayXd&, Eigen::MatrixXd&)> advance_tangents;
};

TangentSystem ks_tangent_system(const EtdCoefficients& coeffs, EtdStepper& stepper);

// Collapse handling for metastable chaos: in the dealiased truncation the
// chaotic set of the longer domains is a saddle, and orbits eventually lock
// onto a relative equilibrium (leading rate -> 0). The guard watches the
// windowed leading rate, discards windows that fall below min_rate, reseeds
// the orbit, and keeps accumulating until the requested chaotic horizon is
// reached, so the reported exponents are those of the chaotic set itself.
struct ChaosGuard {
  double window_time = 500.0;
  double min_rate = 0.005;
  int max_reseeds = 50;
  std::function<Eigen::ArrayXd(int attempt)> reseed;
};

// Benettin QR iteration over an arbitrary tangent system. The default
// initial tangent block is the leading Fourier directions orthonormalized
// once; tests with known eigenstructure can pass an aligned basis instead.
LyapunovSpectrum benettin_spectrum(const TangentSystem& system, Eigen::ArrayXd state,
                                   int num_exponents, double horizon, double reorth_interval,
                                   const Eigen::MatrixXd* initial_basis = nullptr,
                                   const ChaosGuard* guard = nullptr);

// KS spectrum: burn-in toward the attractor, then Benettin with tangents
// seeded from the leading Fourier directions. The longer domains carry
// long-lived weakly-chaotic transients and coexisting invariant structures,
// hence the generous default burn-in; exponents are only meaningful for
// orbits on the main chaotic attractor.
LyapunovSpectrum lyapunov_spectrum(const SolverConfig& config, int num_exponents, double horizon,
                                   double reorth_interval, std::uint64_t seed = 512,
                                   double burn_in = 2000.0);

// Kaplan-Yorke interpolation d_KY = j + sum_{i<=j} l_i / |l_{j+1}| with j the
// largest index keeping the partial sum nonnegative.
double kaplan_yorke(const Eigen::VectorXd& exponents_sorted_desc);

// Smooth random low-mode field for seeding rollouts.
PhysicalField random_smooth_field(const Grid& grid, SplitMix64& rng, int modes = 4,
                                  double amplitude = 0.6);

// Long-run samples on the attractor at fixed intervals (burn-in discarded).
std::vector<PhysicalField> attractor_samples(const SolverConfig& config, double total_time,
                                             double burn_in, double sample_interval,
                                             std::uint64_t seed);

AttractorStats stats_from_samples(const std::vector<PhysicalField>& samples, double burn_in);

AttractorStats attractor_stats(const SolverConfig& config, double total_time = 10000.0,
                               double burn_in = 1000.0, double sample_interval = 1.0,
                               std::uint64_t seed = 7041);

}  // namespace ksr
