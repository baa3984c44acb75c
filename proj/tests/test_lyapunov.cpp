#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ksrecon/lyapunov.hpp"
#include "test_util.hpp"

using namespace ksr;
using namespace ksr::testing;

namespace {

// diagonal linear system u <- diag(e^{r dt}) u: exponents are exactly r
TangentSystem linear_system(const Eigen::VectorXd& rates, double dt) {
  TangentSystem sys;
  sys.dim = static_cast<int>(rates.size());
  sys.dt = dt;
  Eigen::ArrayXd factor = (rates.array() * dt).exp();
  sys.advance_state = [factor](Eigen::ArrayXd& u) { u *= factor; };
  sys.advance_tangents = [factor](const Eigen::ArrayXd&, Eigen::MatrixXd& q) {
    for (int c = 0; c < q.cols(); ++c) q.col(c).array() *= factor;
  };
  return sys;
}

}  // namespace

TEST_CASE("benettin recovers analytic rates of a diagonal linear system") {
  Eigen::VectorXd rates(4);
  rates << 0.3, 0.1, -0.2, -0.9;
  TangentSystem sys = linear_system(rates, 0.1);
  Eigen::ArrayXd state = Eigen::ArrayXd::Ones(4);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(4, 4);
  LyapunovSpectrum spec = benettin_spectrum(sys, state, 4, 500.0, 2.0, &eye);
  for (int i = 0; i < 4; ++i)
    CHECK(std::abs(spec.exponents[i] - rates[i]) < 1e-8);
  CHECK(spec.t_lyap == doctest::Approx(1.0 / 0.3));
  // d_KY: j = 2 (0.3 + 0.1 >= 0, adding -0.2 keeps 0.2 >= 0 -> j = 3), then
  // 3 + 0.2/0.9
  CHECK(spec.d_ky == doctest::Approx(3.0 + 0.2 / 0.9).epsilon(1e-6));
}

TEST_CASE("benettin guards") {
  Eigen::VectorXd rates(3);
  rates << 0.1, -0.1, -0.5;
  TangentSystem sys = linear_system(rates, 0.1);
  Eigen::ArrayXd state = Eigen::ArrayXd::Ones(3);
  // horizon must dominate the reorthogonalization interval
  CHECK_THROWS(benettin_spectrum(sys, state, 3, 5.0, 2.0));
  CHECK_THROWS(benettin_spectrum(sys, state, 9, 100.0, 2.0));  // too many exponents

  // a singular propagator degenerates the R diagonal
  TangentSystem dead;
  dead.dim = 3;
  dead.dt = 0.1;
  dead.advance_state = [](Eigen::ArrayXd&) {};
  dead.advance_tangents = [](const Eigen::ArrayXd&, Eigen::MatrixXd& q) { q.setZero(); };
  CHECK_THROWS(benettin_spectrum(dead, state, 3, 100.0, 2.0));
}

TEST_CASE("kaplan-yorke interpolation") {
  Eigen::VectorXd two(2);
  two << 0.1, -0.2;
  CHECK(kaplan_yorke(two) == doctest::Approx(1.5));

  Eigen::VectorXd all_neg(2);
  all_neg << -1.0, -2.0;
  CHECK(kaplan_yorke(all_neg) == 0.0);

  Eigen::VectorXd all_pos(2);
  all_pos << 2.0, 1.0;
  CHECK_THROWS(kaplan_yorke(all_pos));

  Eigen::VectorXd truncated(2);
  truncated << 1.0, -0.5;  // partial sums never cross zero
  CHECK_THROWS(kaplan_yorke(truncated));

  Eigen::VectorXd unsorted(3);
  unsorted << 0.1, 0.3, -1.0;
  CHECK_THROWS(kaplan_yorke(unsorted));
}

TEST_CASE("short-horizon KS spectrum sums to a strongly negative rate") {
  // 20 exponents: deep enough that hyper-diffusive contraction dominates,
  // shallow enough that none of the R diagonals underflow between QRs
  SolverConfig cfg = SolverConfig::preset(Preset::L22);
  LyapunovSpectrum spec = lyapunov_spectrum(cfg, 20, 200.0, 2.0, 71, 200.0);
  CHECK(spec.exponents.sum() < -100.0);
  CHECK(spec.exponents[0] > 0.0);  // and the system is still chaotic
}

TEST_CASE("kaplan-yorke dimension grows with the domain length") {
  // desk-scale horizons; the ordering is far outside the exponent noise
  LyapunovSpectrum l22 =
      lyapunov_spectrum(SolverConfig::preset(Preset::L22), 10, 2000.0, 2.0, 72);
  LyapunovSpectrum l44 =
      lyapunov_spectrum(SolverConfig::preset(Preset::L44), 14, 2000.0, 2.0, 73);
  LyapunovSpectrum l66 =
      lyapunov_spectrum(SolverConfig::preset(Preset::L66), 20, 2000.0, 2.0, 74);
  INFO("d_ky: ", l22.d_ky, " ", l44.d_ky, " ", l66.d_ky);
  CHECK(l22.d_ky > 2.0);
  CHECK(l22.d_ky < l44.d_ky);
  CHECK(l44.d_ky < l66.d_ky);
}

TEST_CASE("attractor statistics") {
  SolverConfig cfg = SolverConfig::preset(Preset::L22);

  SUBCASE("constant samples give the constant center and zero radius") {
    std::vector<PhysicalField> samples(7, PhysicalField::constant(cfg.grid, 2.5));
    AttractorStats stats = stats_from_samples(samples, 0.0);
    CHECK((stats.center.values == 2.5).all());
    CHECK(stats.radius == 0.0);
    CHECK(stats.sample_count == 7);
  }

  SUBCASE("radius is invariant under sample permutation") {
    SplitMix64 rng(51);
    std::vector<PhysicalField> samples;
    for (int i = 0; i < 20; ++i) samples.push_back({cfg.grid, random_field(cfg.grid, rng)});
    AttractorStats a = stats_from_samples(samples, 0.0);
    std::reverse(samples.begin(), samples.end());
    std::swap(samples[3], samples[11]);
    AttractorStats b = stats_from_samples(samples, 0.0);
    CHECK(a.radius == doctest::Approx(b.radius).epsilon(1e-14));
  }

  SUBCASE("independent seeds agree on the radius within 5%") {
    AttractorStats a = attractor_stats(cfg, 10000.0, 1000.0, 1.0, 101);
    AttractorStats b = attractor_stats(cfg, 10000.0, 1000.0, 1.0, 202);
    CHECK(a.sample_count == 9000);
    CHECK(std::abs(a.radius - b.radius) / a.radius < 0.05);
  }
}
