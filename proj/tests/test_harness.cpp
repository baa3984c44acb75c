#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "ksrecon/campaign_io.hpp"
#include "ksrecon/harness.hpp"
#include "test_util.hpp"

using namespace ksr;
using namespace ksr::testing;

namespace {

TrialResult synthetic_trial(long id, double loss, double cs, double min_eig = 1.0,
                            double grad_norm = 1e-3) {
  TrialResult t;
  t.trial_id = id;
  t.final_loss = loss;
  t.cs_full = cs;
  t.cs_last75 = cs;
  t.hessian_min_eig = min_eig;
  t.grad_norm = grad_norm;
  t.m_x = 4;
  t.m_t = 4;
  return t;
}

const CaseSet& small_case_set() {
  static CaseSet cases =
      generate_case_set(preset_info(Preset::L22), 601, 2, 4, 3000.0, 500.0);
  return cases;
}

}  // namespace

TEST_CASE("preset horizons track the Lyapunov time within one step") {
  for (Preset p : {Preset::L22, Preset::L44, Preset::L66}) {
    const PresetInfo& info = preset_info(p);
    const double t_ell = 1.0 / info.ell1_nominal;
    CHECK(std::abs(info.horizon_steps() * info.solver.dt - t_ell) <= info.solver.dt);
  }
  CHECK(preset_info(Preset::L22).horizon_steps() == 200);
  CHECK(preset_info(Preset::L22).horizon_time() == doctest::Approx(20.0));
  CHECK(preset_info(Preset::L22).manifold_dim == 8);
  CHECK(preset_info(Preset::L44).manifold_dim == 18);
  CHECK(preset_info(Preset::L66).manifold_dim == 28);
}

TEST_CASE("sensor layouts satisfy their invariants across the paper ranges") {
  for (Preset p : {Preset::L22, Preset::L44, Preset::L66}) {
    const PresetInfo& info = preset_info(p);
    const int K = info.horizon_steps();
    const int n = info.solver.grid.n;
    for (int m_x = 2; m_x <= 16; ++m_x) {
      for (int m_t = 2; m_t <= 8; ++m_t) {
        SensorLayout layout = SensorLayout::uniform(info.solver, m_x, m_t, K);
        // sensors distinct and on-grid
        std::set<int> nodes(layout.sensor_nodes.begin(), layout.sensor_nodes.end());
        CHECK(static_cast<int>(nodes.size()) == m_x);
        for (int node : layout.sensor_nodes) CHECK((node >= 0 && node < n));
        // nearest-node snapping of the centered uniform arrangement
        for (int i = 0; i < m_x; ++i) {
          const double exact = (i + 0.5) * n / m_x;
          CHECK(std::abs(layout.sensor_nodes[i] - exact) <= 0.5 + 1e-12);
        }
        // times: inside (0, K], strictly increasing, K included, 0 excluded
        CHECK(layout.time_indices.front() > 0);
        CHECK(layout.time_indices.back() == K);
        for (std::size_t j = 1; j < layout.time_indices.size(); ++j)
          CHECK(layout.time_indices[j] > layout.time_indices[j - 1]);
      }
    }
  }
}

TEST_CASE("metric_e_u") {
  const PresetInfo& info = preset_info(Preset::L22);
  AttractorStats stats;
  stats.center = PhysicalField::zero(info.solver.grid);
  stats.radius = 2.0;
  SplitMix64 rng(61);
  PhysicalField a{info.solver.grid, random_field(info.solver.grid, rng)};

  CHECK(metric_e_u(a, a, stats) == 0.0);

  // displacement by radius * unit vector gives exactly 1
  Eigen::ArrayXd e = random_field(info.solver.grid, rng);
  e /= std::sqrt(e.square().sum());
  PhysicalField b{info.solver.grid, a.values + stats.radius * e};
  CHECK(metric_e_u(a, b, stats) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(metric_e_u(a, b, stats) == doctest::Approx(metric_e_u(b, a, stats)));
}

TEST_CASE("metric_cs") {
  const SolverConfig& cfg = preset_info(Preset::L22).solver;
  SplitMix64 rng(62);
  Trajectory a;
  a.config = cfg;
  for (int k = 0; k <= 20; ++k) a.states.push_back({cfg.grid, random_field(cfg.grid, rng)});

  Trajectory b = a;
  CHECK(metric_cs(a, b) == doctest::Approx(1.0).epsilon(1e-14));

  for (auto& s : b.states) s.values = -s.values;
  CHECK(metric_cs(a, b) == doctest::Approx(-1.0).epsilon(1e-14));

  for (auto& s : b.states) s.values = -2.0 * s.values;  // back to +2x
  CHECK(metric_cs(a, b) == doctest::Approx(1.0).epsilon(1e-14));

  // the tail fraction really drops the head of the window
  Trajectory c = a;
  for (int k = 0; k < 5; ++k) c.states[k].values += 10.0;
  CHECK(metric_cs(a, c, 0.75) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(metric_cs(a, c, 1.0) < 1.0 - 1e-6);

  Trajectory zero = a;
  for (auto& s : zero.states) s.values.setZero();
  CHECK_THROWS(metric_cs(a, zero));
  CHECK_THROWS(metric_cs(a, b, 0.0));
}

TEST_CASE("normalized measurement count") {
  CHECK(normalized_measurement_count(4, 8) == 0.0);
  CHECK(normalized_measurement_count(17, 8) == 1.0);
  CHECK(normalized_measurement_count(13, 8) == doctest::Approx(0.6));
  CHECK(normalized_measurement_count(100, 8) == 1.0);
  CHECK_THROWS(normalized_measurement_count(4, 0));
}

TEST_CASE("epsilon star estimation") {
  SUBCASE("uniformly accurate ensembles rail at the top of the search range") {
    std::vector<TrialResult> trials;
    SplitMix64 rng(63);
    for (long i = 0; i < 200; ++i)
      trials.push_back(synthetic_trial(i, std::pow(10.0, rng.uniform(-9.0, -3.1)), 0.99));
    EpsilonStarEstimate est = estimate_epsilon_star(trials);
    CHECK(est.exists);
    CHECK(est.epsilon_star == doctest::Approx(1e-3).epsilon(1e-9));
  }

  SUBCASE("accuracy independent of loss at 50% success: DNE") {
    std::vector<TrialResult> trials;
    SplitMix64 rng(64);
    for (long i = 0; i < 400; ++i)
      trials.push_back(
          synthetic_trial(i, std::pow(10.0, rng.uniform(-9.0, -3.1)), (i % 2) ? 0.99 : 0.1));
    EpsilonStarEstimate est = estimate_epsilon_star(trials);
    CHECK(!est.exists);
  }

  SUBCASE("hard threshold at 1e-5 is located on the grid") {
    std::vector<TrialResult> trials;
    SplitMix64 rng(65);
    for (long i = 0; i < 600; ++i) {
      const double loss = std::pow(10.0, rng.uniform(-8.0, -3.1));
      trials.push_back(synthetic_trial(i, loss, loss < 1e-5 ? 0.99 : 0.2));
    }
    EpsilonStarEstimate est = estimate_epsilon_star(trials);
    REQUIRE(est.exists);
    CHECK(est.epsilon_star <= 1e-5 * (1.0 + 1e-12));
    // largest grid point <= 1e-5: the next grid point up must overshoot
    CHECK(est.epsilon_star * std::pow(10.0, 1.0 / 64.0) > 1e-5);
  }

  SUBCASE("defining conditional probability holds on held-out trials") {
    std::vector<TrialResult> trials;
    SplitMix64 rng(66);
    for (long i = 0; i < 1000; ++i) {
      const double loss = std::pow(10.0, rng.uniform(-8.0, -3.1));
      trials.push_back(synthetic_trial(i, loss, loss < 3e-5 ? 0.99 : 0.3));
    }
    std::vector<TrialResult> fit(trials.begin(), trials.begin() + 500);
    std::vector<TrialResult> holdout(trials.begin() + 500, trials.end());
    EpsilonStarEstimate est = estimate_epsilon_star(fit);
    REQUIRE(est.exists);
    int cond = 0, good = 0;
    for (const TrialResult& t : holdout) {
      if (t.final_loss < est.epsilon_star) {
        ++cond;
        if (t.cs_full >= est.tau) ++good;
      }
    }
    REQUIRE(cond > 0);
    CHECK(static_cast<double>(good) / cond >= 1.0 - 2.0 * est.delta);
  }

  SUBCASE("guards") {
    std::vector<TrialResult> few(50, synthetic_trial(0, 1e-5, 0.99));
    CHECK_THROWS(estimate_epsilon_star(few));
    std::vector<TrialResult> narrow(200, synthetic_trial(0, 1e-5, 0.99));
    CHECK_THROWS(estimate_epsilon_star(narrow));  // no loss spread
  }
}

TEST_CASE("case set generation" * doctest::timeout(600)) {
  const PresetInfo& info = preset_info(Preset::L22);

  SUBCASE("deterministic for a fixed seed") {
    CaseSet a = generate_case_set(info, 777, 2, 6, 2000.0, 500.0);
    CaseSet b = generate_case_set(info, 777, 2, 6, 2000.0, 500.0);
    CHECK(a.reference_indices == b.reference_indices);
    CHECK(a.guess_indices == b.guess_indices);
    CHECK((a.distances - b.distances).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t i = 0; i < a.samples.size(); ++i)
      CHECK((a.samples[i].values == b.samples[i].values).all());
  }

  SUBCASE("distances live in [0.01 R_A, R_A] and guesses are unique") {
    const CaseSet& cases = small_case_set();
    for (int r = 0; r < cases.num_refs(); ++r) {
      std::set<int> seen;
      for (int g = 0; g < cases.num_guesses(); ++g) {
        const double d = cases.distances(r, g);
        CHECK(d >= 0.01 * cases.stats.radius);
        CHECK(d <= cases.stats.radius);
        CHECK(seen.insert(cases.guess_indices[r][g]).second);
        // distances are recomputed values on the truncated states
        const double again =
            std::sqrt((cases.truncated_sample(cases.guess_indices[r][g]).values -
                       cases.truncated_sample(cases.reference_indices[r]).values)
                          .square()
                          .sum());
        CHECK(d == doctest::Approx(again).epsilon(1e-12));
      }
    }
  }

  SUBCASE("guesses mix near and far starts across the whole band") {
    // Inter-state distances on the attractor concentrate near sqrt(2) R_A,
    // so the in-band candidate density is far from uniform; the scheme's
    // guarantee is coverage of the band, not uniformity (see the decisions
    // notes). Close returns come from temporal neighbors in the rollout.
    CaseSet cases = generate_case_set(info, 8812, 1, 400, 10000.0, 1000.0);
    double lo = 1e300, hi = 0.0;
    int below_half = 0;
    for (int g = 0; g < 400; ++g) {
      const double ratio = cases.distances(0, g) / cases.stats.radius;
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
      if (ratio < 0.5) ++below_half;
    }
    INFO("band coverage [", lo, ", ", hi, "], ", below_half, " below 0.5 R_A");
    CHECK(lo < 0.2);  // temporal neighbors supply the close returns
    CHECK(hi > 0.9);
    CHECK(below_half >= 10);
  }

  SUBCASE("insufficient candidate pool names the reference") {
    try {
      generate_case_set(info, 11, 1, 400, 1050.0, 1000.0);
      FAIL("expected failure");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("reference 0") != std::string::npos);
    }
  }

  SUBCASE("save and load round trip") {
    const CaseSet& cases = small_case_set();
    const std::string dir = "/tmp/ksr_case_set_test";
    std::filesystem::remove_all(dir);
    save_case_set(cases, dir);
    CaseSet back = load_case_set(dir);
    CHECK(back.preset_name == cases.preset_name);
    CHECK(back.seed == cases.seed);
    CHECK(back.reference_indices == cases.reference_indices);
    CHECK(back.guess_indices == cases.guess_indices);
    CHECK((back.distances - cases.distances).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.stats.radius == doctest::Approx(cases.stats.radius).epsilon(1e-14));
    for (std::size_t i = 0; i < cases.samples.size(); ++i)
      CHECK((back.samples[i].values == cases.samples[i].values).all());
  }
}

TEST_CASE("curvature statistics") {
  SUBCASE("all-SPD inputs give zero probability everywhere") {
    std::vector<TrialResult> trials;
    for (long i = 0; i < 50; ++i)
      trials.push_back(synthetic_trial(i, std::pow(10.0, -(i % 10)), 0.9, 1e-4));
    for (const CurvatureBin& bin : curvature_statistics(trials))
      if (!bin.empty()) CHECK(bin.probability() == 0.0);
  }

  SUBCASE("bins with no trials are marked empty, not zero") {
    std::vector<TrialResult> trials = {synthetic_trial(0, 1e-5, 0.9, -1.0)};
    auto bins = curvature_statistics(trials);
    int populated = 0;
    for (const CurvatureBin& bin : bins) {
      if (bin.loss_lo <= 1e-5 && 1e-5 < bin.loss_hi) {
        CHECK(!bin.empty());
        CHECK(bin.probability() == 1.0);
        ++populated;
      } else {
        CHECK(bin.empty());
      }
    }
    CHECK(populated == 1);
  }
}

TEST_CASE("sub-gradient cancellation") {
  SUBCASE("a single observation time cannot conflict") {
    const CaseSet& cases = small_case_set();
    const PresetInfo& info = preset_info(Preset::L22);
    Trajectory truth = rollout(cases.truncated_sample(cases.reference_indices[0]), 50,
                               cases.solver);
    ObservationSet obs =
        sample_observations(truth, SensorLayout::uniform(cases.solver, 4, 1, 50));
    ControlVector guess = encode(cases.truncated_sample(cases.guess_indices[0][0]), cases.solver);
    SubgradientReport report = subgradient_conflict_report(guess, obs);
    REQUIRE(report.norms.size() == 1);
    CHECK(report.cancellation_ratio == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("two opposite parts cancel exactly") {
    Eigen::VectorXd g(3);
    g << 1.0, -2.0, 0.5;
    CHECK(cancellation_ratio({g, -g}) == 0.0);
    CHECK(cancellation_ratio({g, g}) == doctest::Approx(1.0));
  }
}

TEST_CASE("campaign driver" * doctest::timeout(600)) {
  const PresetInfo& info = preset_info(Preset::L22);
  const CaseSet& cases = small_case_set();
  TrialConfig config = default_trial_config(info);
  config.ncn.max_iters = 30;
  config.ncn.pp_schedule = {10, 20};

  SUBCASE("empty layout list gives empty results") {
    CampaignSelection empty;
    CampaignResult out = run_campaign(cases, info, empty, config);
    CHECK(out.trials.empty());
    CHECK(out.summaries.empty());
  }

  SUBCASE("parallel and serial runs produce identical tables") {
    CampaignSelection sel;
    sel.layouts = {{4, 2}};
    sel.num_refs = 2;
    sel.num_guesses = 3;
    sel.jobs = 1;
    CampaignResult serial = run_campaign(cases, info, sel, config);
    sel.jobs = 2;
    CampaignResult parallel = run_campaign(cases, info, sel, config);
    REQUIRE(serial.trials.size() == parallel.trials.size());
    REQUIRE(serial.trials.size() == 6);
    for (std::size_t i = 0; i < serial.trials.size(); ++i) {
      CHECK(serial.trials[i].trial_id == parallel.trials[i].trial_id);
      CHECK(serial.trials[i].final_loss == parallel.trials[i].final_loss);
      CHECK(serial.trials[i].cs_full == parallel.trials[i].cs_full);
      CHECK(serial.trials[i].hessian_min_eig == parallel.trials[i].hessian_min_eig);
    }

    // summary counters match the trial rows
    const LayoutSummary& s = serial.summaries.at(0);
    CHECK(s.trials == 6);
    int low = 0;
    for (const TrialResult& t : serial.trials)
      if (t.final_loss < serial.loss_cut) ++low;
    CHECK(s.low_loss == low);

    // resuming from the previous results recomputes nothing and changes nothing
    CampaignResult resumed = run_campaign(cases, info, sel, config, 0.95, 1e-3, &serial.trials);
    for (std::size_t i = 0; i < serial.trials.size(); ++i)
      CHECK(resumed.trials[i].final_loss == serial.trials[i].final_loss);

    // d-band filter drops every out-of-band trial
    CampaignSelection banded = sel;
    banded.d_band_lo = 0.8;
    banded.d_band_hi = 1.0;
    CampaignResult filtered = run_campaign(cases, info, banded, config);
    for (const TrialResult& t : filtered.trials) {
      CHECK(t.d_over_ra >= 0.8 - 1e-9);
      CHECK(t.d_over_ra <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("stalled reconstructions show sub-gradient cancellation" * doctest::timeout(600)) {
  // far guesses at (4,4) routinely plateau at moderate loss with a gradient
  // norm far below it; the sub-gradients then nearly cancel in aggregate
  const PresetInfo& info = preset_info(Preset::L22);
  CaseSet cases = generate_case_set(info, 4242, 1, 8, 4000.0, 1000.0);
  const int K = info.horizon_steps();
  SensorLayout layout = SensorLayout::uniform(cases.solver, 4, 4, K);
  TrialConfig config = default_trial_config(info);
  config.ncn.max_iters = 150;
  config.ncn.pp_schedule = {50, 100};

  // pick the farthest guess; fall back to the next if it happens to converge
  std::vector<int> order(cases.num_guesses());
  for (int g = 0; g < cases.num_guesses(); ++g) order[g] = g;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return cases.distances(0, a) > cases.distances(0, b); });
  bool found = false;
  for (int attempt = 0; attempt < 3 && !found; ++attempt) {
    ReconstructOutcome outcome =
        reconstruct_case(cases, info, 0, order[attempt], layout, "ncn", config);
    if (outcome.result.final_loss < 1e-4) continue;  // converged, not a stall
    found = true;
    // gradient norm far below the loss marks the vanishing-gradient regime
    CHECK(outcome.result.grad_norm < 0.1 * outcome.result.final_loss);
    Trajectory truth = rollout(cases.truncated_sample(cases.reference_indices[0]), K,
                               cases.solver);
    ObservationSet obs = sample_observations(truth, layout);
    SubgradientReport report =
        subgradient_conflict_report(ControlVector{outcome.theta, cases.solver}, obs);
    INFO("cancellation ratio ", report.cancellation_ratio);
    CHECK(report.cancellation_ratio < 0.1);
  }
  CHECK(found);
}

TEST_CASE("trial CSV round trip") {
  std::vector<TrialResult> trials;
  SplitMix64 rng(67);
  for (long i = 0; i < 10; ++i) {
    TrialResult t = synthetic_trial(i, std::pow(10.0, rng.uniform(-9, 0)), rng.uniform(-1, 1),
                                    rng.normal(), std::abs(rng.normal()));
    t.ref = static_cast<int>(i % 3);
    t.guess = static_cast<int>(i % 5);
    t.d_over_ra = rng.next_double();
    t.e_u = rng.next_double();
    t.iterations = 351;
    t.kappa_switches = static_cast<int>(i % 4);
    t.projections = 3;
    t.pp_enabled = i % 2 == 0;
    t.blew_up = i == 7;
    trials.push_back(t);
  }
  const std::string path = "/tmp/ksr_trials_test.csv";
  write_trials_csv(path, trials);
  std::vector<TrialResult> back = read_trials_csv(path);
  REQUIRE(back.size() == trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    CHECK(back[i].trial_id == trials[i].trial_id);
    CHECK(back[i].final_loss == trials[i].final_loss);
    CHECK(back[i].cs_full == trials[i].cs_full);
    CHECK(back[i].cs_last75 == trials[i].cs_last75);
    CHECK(back[i].grad_norm == trials[i].grad_norm);
    CHECK(back[i].hessian_min_eig == trials[i].hessian_min_eig);
    CHECK(back[i].pp_enabled == trials[i].pp_enabled);
    CHECK(back[i].blew_up == trials[i].blew_up);
  }
}

TEST_CASE("gradient-loss correlation on a synthetic power law") {
  std::vector<TrialResult> trials;
  SplitMix64 rng(68);
  for (long i = 0; i < 300; ++i) {
    const double loss = std::pow(10.0, rng.uniform(-10.0, 0.0));
    TrialResult t = synthetic_trial(i, loss, 0.5);
    t.grad_norm = std::pow(loss, 0.7) * std::pow(10.0, 0.3 * rng.normal());
    trials.push_back(t);
  }
  CHECK(gradient_loss_correlation(trials) > 0.9);
}
