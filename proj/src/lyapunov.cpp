#include "ksrecon/lyapunov.hpp"

#include <Eigen/QR>
#include <cmath>
#include <memory>

#include "ksrecon/errors.hpp"
#include "ksrecon/stepper.hpp"

namespace ksr {

TangentSystem ks_tangent_system(const EtdCoefficients& coeffs, EtdStepper& stepper) {
  TangentSystem sys;
  sys.dim = coeffs.config.grid.n;
  sys.dt = coeffs.config.dt;
  auto stages = std::make_shared<EtdStepper::Stages>();
  sys.advance_state = [&stepper, stages](Eigen::ArrayXd& u) {
    Eigen::ArrayXd next(u.size());
    stepper.step(u, next, stages.get());
    u.swap(next);
  };
  // uses the stage cache of the advance_state call made at the same state
  sys.advance_tangents = [&stepper, stages](const Eigen::ArrayXd&, Eigen::MatrixXd& tangents) {
    Eigen::ArrayXd col(tangents.rows()), out(tangents.rows());
    for (int c = 0; c < tangents.cols(); ++c) {
      col = tangents.col(c).array();
      stepper.tangent(*stages, col, out);
      tangents.col(c) = out.matrix();
    }
  };
  return sys;
}

namespace {

Eigen::MatrixXd default_tangent_basis(int dim, int num_exponents) {
  // leading Fourier directions orthonormalized once
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(dim, num_exponents);
  for (int c = 0; c < num_exponents; ++c) {
    for (int m = 0; m < dim; ++m) {
      const double phase = 2.0 * M_PI * ((c + 2) / 2) * m / dim;
      q(m, c) = (c % 2 == 0) ? std::cos(phase) : std::sin(phase);
    }
  }
  q.col(0).setConstant(1.0);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(q);
  return qr.householderQ() * Eigen::MatrixXd::Identity(dim, num_exponents);
}

}  // namespace

LyapunovSpectrum benettin_spectrum(const TangentSystem& system, Eigen::ArrayXd state,
                                   int num_exponents, double horizon, double reorth_interval,
                                   const Eigen::MatrixXd* initial_basis,
                                   const ChaosGuard* guard) {
  if (num_exponents < 1 || num_exponents > system.dim)
    throw std::invalid_argument("benettin_spectrum: num_exponents out of range");
  if (!(horizon >= 10.0 * reorth_interval))
    throw std::invalid_argument("benettin_spectrum: horizon must dominate the reorth interval");
  const int sub_steps = std::max(1, static_cast<int>(std::lround(reorth_interval / system.dt)));
  const double cycle_time = sub_steps * system.dt;
  const int cycles = static_cast<int>(std::lround(horizon / cycle_time));
  if (cycles < 2) throw std::invalid_argument("benettin_spectrum: horizon too short");

  Eigen::MatrixXd q;
  if (initial_basis) {
    if (initial_basis->rows() != system.dim || initial_basis->cols() != num_exponents)
      throw std::invalid_argument("benettin_spectrum: initial basis shape mismatch");
    q = *initial_basis;
  } else {
    q = default_tangent_basis(system.dim, num_exponents);
  }

  const int window_cycles =
      guard ? std::max(2, static_cast<int>(std::lround(guard->window_time / cycle_time))) : cycles;

  Eigen::VectorXd log_sum = Eigen::VectorXd::Zero(num_exponents);
  Eigen::VectorXd window_sum = Eigen::VectorXd::Zero(num_exponents);
  int committed_cycles = 0;
  int cycles_in_window = 0;
  int reseeds = 0;
  bool settling = false;  // discard the first window after a reseed
  while (committed_cycles < cycles) {
    for (int s = 0; s < sub_steps; ++s) {
      system.advance_state(state);
      system.advance_tangents(state, q);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(q);
    Eigen::MatrixXd thin_q =
        qr.householderQ() * Eigen::MatrixXd::Identity(system.dim, num_exponents);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(num_exponents).triangularView<Eigen::Upper>();
    for (int i = 0; i < num_exponents; ++i) {
      const double rii = r(i, i);
      if (rii == 0.0 || !std::isfinite(rii))
        throw std::runtime_error("benettin_spectrum: degenerate R diagonal");
      if (rii < 0.0) thin_q.col(i) = -thin_q.col(i);  // keep log|R_ii| and Q consistent
      window_sum[i] += std::log(std::abs(rii));
    }
    q = thin_q;
    ++cycles_in_window;
    if (cycles_in_window < window_cycles) continue;  // full windows only

    const double window_rate = window_sum[0] / (cycles_in_window * cycle_time);
    if (guard && window_rate < guard->min_rate) {
      // the orbit left the chaotic set; drop the window and start over
      if (!guard->reseed || ++reseeds > guard->max_reseeds)
        throw std::runtime_error(
            "benettin_spectrum: orbit collapsed off the chaotic set and reseeding is exhausted");
      state = guard->reseed(reseeds);
      q = initial_basis ? *initial_basis : default_tangent_basis(system.dim, num_exponents);
      window_sum.setZero();
      cycles_in_window = 0;
      settling = true;
      continue;
    }
    if (settling) {
      settling = false;  // alignment window after a reseed is never committed
    } else {
      log_sum += window_sum;
      committed_cycles += cycles_in_window;
    }
    window_sum.setZero();
    cycles_in_window = 0;
  }

  LyapunovSpectrum spec;
  const double total_time = static_cast<double>(committed_cycles) * cycle_time;
  spec.exponents = log_sum / total_time;
  std::sort(spec.exponents.data(), spec.exponents.data() + spec.exponents.size(),
            std::greater<double>());
  spec.horizon = total_time;
  spec.reorth_interval = sub_steps * system.dt;
  spec.t_lyap = spec.exponents[0] != 0.0 ? 1.0 / spec.exponents[0] : 0.0;
  // d_KY only when the retained spectrum supports the interpolation
  spec.d_ky = std::numeric_limits<double>::quiet_NaN();
  if (spec.exponents.size() > 1 && spec.exponents.minCoeff() < 0.0) {
    try {
      spec.d_ky = kaplan_yorke(spec.exponents);
    } catch (const std::invalid_argument&) {
    }
  }
  return spec;
}

LyapunovSpectrum lyapunov_spectrum(const SolverConfig& config, int num_exponents, double horizon,
                                   double reorth_interval, std::uint64_t seed, double burn_in) {
  EtdCoefficients coeffs = precompute_coefficients(config);
  EtdStepper stepper(coeffs);
  SplitMix64 rng(seed);
  const int burn_steps = static_cast<int>(std::lround(burn_in / config.dt));
  auto fresh_state = [&]() {
    Eigen::ArrayXd state = random_smooth_field(config.grid, rng).values;
    Eigen::ArrayXd next(config.grid.n);
    for (int k = 0; k < burn_steps; ++k) {
      stepper.step(state, next);
      state.swap(next);
    }
    return state;
  };
  Eigen::ArrayXd state = fresh_state();
  TangentSystem sys = ks_tangent_system(coeffs, stepper);
  ChaosGuard guard;
  guard.reseed = [&fresh_state](int) { return fresh_state(); };
  return benettin_spectrum(sys, state, num_exponents, horizon, reorth_interval, nullptr, &guard);
}

double kaplan_yorke(const Eigen::VectorXd& exponents) {
  const int count = static_cast<int>(exponents.size());
  for (int i = 1; i < count; ++i)
    if (exponents[i] > exponents[i - 1])
      throw std::invalid_argument("kaplan_yorke: exponents must be sorted descending");
  if (count == 0 || exponents.minCoeff() >= 0.0)
    throw std::invalid_argument("kaplan_yorke: need at least one negative exponent");
  if (exponents[0] < 0.0) return 0.0;  // empty positive sum
  double partial = 0.0;
  int j = 0;
  while (j < count && partial + exponents[j] >= 0.0) {
    partial += exponents[j];
    ++j;
  }
  if (j >= count)
    throw std::invalid_argument("kaplan_yorke: spectrum truncated before the partial sum crosses zero");
  return j + partial / std::abs(exponents[j]);
}

PhysicalField random_smooth_field(const Grid& grid, SplitMix64& rng, int modes, double amplitude) {
  Eigen::ArrayXd u = Eigen::ArrayXd::Zero(grid.n);
  for (int j = 1; j <= modes; ++j) {
    const double a = amplitude * rng.normal() / std::sqrt(j);
    const double b = amplitude * rng.normal() / std::sqrt(j);
    for (int m = 0; m < grid.n; ++m) {
      const double phase = 2.0 * M_PI * j * m / grid.n;
      u[m] += a * std::cos(phase) + b * std::sin(phase);
    }
  }
  return {grid, u};
}

std::vector<PhysicalField> attractor_samples(const SolverConfig& config, double total_time,
                                             double burn_in, double sample_interval,
                                             std::uint64_t seed) {
  if (!(total_time > burn_in)) throw std::invalid_argument("attractor_samples: total_time <= burn_in");
  EtdStepper stepper(precompute_coefficients(config));
  SplitMix64 rng(seed);
  Eigen::ArrayXd state = random_smooth_field(config.grid, rng).values;
  Eigen::ArrayXd next(config.grid.n);
  const int stride = std::max(1, static_cast<int>(std::lround(sample_interval / config.dt)));
  const int total_steps = static_cast<int>(std::lround(total_time / config.dt));
  const int burn_steps = static_cast<int>(std::lround(burn_in / config.dt));
  std::vector<PhysicalField> samples;
  samples.reserve((total_steps - burn_steps) / stride + 1);
  for (int k = 1; k <= total_steps; ++k) {
    stepper.step(state, next);
    state.swap(next);
    if (k > burn_steps && (k - burn_steps) % stride == 0)
      samples.emplace_back(config.grid, state);
  }
  return samples;
}

AttractorStats stats_from_samples(const std::vector<PhysicalField>& samples, double burn_in) {
  if (samples.empty()) throw std::invalid_argument("stats_from_samples: no samples");
  const Grid& grid = samples.front().grid;
  Eigen::ArrayXd mean = Eigen::ArrayXd::Zero(grid.n);
  for (const PhysicalField& s : samples) mean += s.values;
  mean /= static_cast<double>(samples.size());
  double radius = 0.0;
  for (const PhysicalField& s : samples) radius += std::sqrt((s.values - mean).square().sum());
  radius /= static_cast<double>(samples.size());
  AttractorStats stats;
  stats.center = {grid, mean};
  stats.radius = radius;
  stats.sample_count = static_cast<int>(samples.size());
  stats.burn_in = burn_in;
  return stats;
}

AttractorStats attractor_stats(const SolverConfig& config, double total_time, double burn_in,
                               double sample_interval, std::uint64_t seed) {
  return stats_from_samples(attractor_samples(config, total_time, burn_in, sample_interval, seed),
                            burn_in);
}

}  // namespace ksr
