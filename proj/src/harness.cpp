#include "ksrecon/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <set>
#include <thread>

namespace ksr {

const PresetInfo& preset_info(Preset which) {
  static const PresetInfo l22{Preset::L22, "L22", SolverConfig::preset(Preset::L22), 0.05, 8};
  static const PresetInfo l44{Preset::L44, "L44", SolverConfig::preset(Preset::L44), 0.083, 18};
  static const PresetInfo l66{Preset::L66, "L66", SolverConfig::preset(Preset::L66), 0.087, 28};
  switch (which) {
    case Preset::L22: return l22;
    case Preset::L44: return l44;
    case Preset::L66: return l66;
  }
  throw std::invalid_argument("preset_info: unknown preset");
}

std::optional<Preset> preset_by_name(const std::string& name) {
  if (name == "L22" || name == "l22") return Preset::L22;
  if (name == "L44" || name == "l44") return Preset::L44;
  if (name == "L66" || name == "l66") return Preset::L66;
  return std::nullopt;
}

PhysicalField CaseSet::truncated_sample(int index) const {
  const PhysicalField& raw = samples.at(index);
  return decode(encode(raw, solver));
}

CaseSet generate_case_set(const PresetInfo& preset, std::uint64_t seed, int num_refs,
                          int num_guesses, double total_time, double burn_in) {
  CaseSet cases;
  cases.preset_name = preset.name;
  cases.seed = seed;
  cases.solver = preset.solver;
  cases.samples = attractor_samples(preset.solver, total_time, burn_in, 1.0, seed);
  cases.stats = stats_from_samples(cases.samples, burn_in);
  const int pool = static_cast<int>(cases.samples.size());
  if (pool < num_refs)
    throw std::runtime_error("generate_case_set: sample pool smaller than the reference count");

  SplitMix64 rng = SplitMix64(seed).fork(0x5eed);
  std::set<int> ref_seen;
  for (int r = 0; r < num_refs; ++r) {
    int idx;
    do {
      idx = static_cast<int>(rng.next_index(pool));
    } while (!ref_seen.insert(idx).second);
    cases.reference_indices.push_back(idx);
  }

  // Distances are evaluated on the p-mode truncations actually assimilated.
  std::vector<Eigen::ArrayXd> trunc(pool);
  for (int i = 0; i < pool; ++i) trunc[i] = cases.truncated_sample(i).values;

  const double r_lo = 0.01 * cases.stats.radius;
  const double r_hi = cases.stats.radius;
  cases.guess_indices.assign(num_refs, {});
  cases.distances.resize(num_refs, num_guesses);
  for (int r = 0; r < num_refs; ++r) {
    const int ref_idx = cases.reference_indices[r];
    const Eigen::ArrayXd& ref = trunc[ref_idx];
    // candidate distances within [0.01 R_A, R_A]
    std::vector<std::pair<double, int>> band;
    band.reserve(pool);
    for (int i = 0; i < pool; ++i) {
      if (i == ref_idx) continue;
      const double dist = std::sqrt((trunc[i] - ref).square().sum());
      if (dist >= r_lo && dist <= r_hi) band.emplace_back(dist, i);
    }
    std::sort(band.begin(), band.end());
    if (static_cast<int>(band.size()) < num_guesses)
      throw std::runtime_error("generate_case_set: insufficient unique candidates for reference " +
                               std::to_string(r));
    std::set<int> used;
    for (int g = 0; g < num_guesses; ++g) {
      const double target = rng.uniform(r_lo, r_hi);
      // nearest |D - target| among the candidates not yet used (a used
      // nearest match counts as a duplicate and the next-closest is taken)
      auto it = std::lower_bound(band.begin(), band.end(), std::make_pair(target, -1));
      auto right = it;
      while (right != band.end() && used.count(right->second)) ++right;
      auto left = band.end();
      for (auto probe = it; probe != band.begin();) {
        --probe;
        if (!used.count(probe->second)) {
          left = probe;
          break;
        }
      }
      auto best = band.end();
      if (right == band.end())
        best = left;
      else if (left == band.end())
        best = right;
      else
        best = (std::abs(left->first - target) <= std::abs(right->first - target)) ? left : right;
      if (best == band.end())
        throw std::runtime_error("generate_case_set: could not draw a unique guess for reference " +
                                 std::to_string(r));
      used.insert(best->second);
      cases.guess_indices[r].push_back(best->second);
      cases.distances(r, g) = best->first;
    }
  }
  return cases;
}

double metric_e_u(const PhysicalField& u_truth, const PhysicalField& u_est,
                  const AttractorStats& stats) {
  if (u_truth.grid.n != u_est.grid.n) throw std::invalid_argument("metric_e_u: grid mismatch");
  return std::sqrt((u_truth.values - u_est.values).square().sum()) / stats.radius;
}

double metric_cs(const Trajectory& truth, const Trajectory& est, double fraction_tail) {
  if (truth.states.size() != est.states.size())
    throw std::invalid_argument("metric_cs: trajectory length mismatch");
  if (!(fraction_tail > 0.0 && fraction_tail <= 1.0))
    throw std::invalid_argument("metric_cs: fraction_tail in (0, 1]");
  const int total = static_cast<int>(truth.states.size());
  const int tail = std::min<int>(total, static_cast<int>(std::ceil(fraction_tail * total)));
  const int start = total - tail;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int k = start; k < total; ++k) {
    dot += (truth.states[k].values * est.states[k].values).sum();
    na += truth.states[k].values.square().sum();
    nb += est.states[k].values.square().sum();
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("metric_cs: zero-norm trajectory");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double normalized_measurement_count(int m, int manifold_dim) {
  if (manifold_dim < 1) throw std::invalid_argument("normalized_measurement_count: d_M >= 1");
  if (m < manifold_dim) return 0.0;
  if (m >= 2 * manifold_dim + 1) return 1.0;
  return static_cast<double>(m - (manifold_dim - 1)) /
         static_cast<double>((2 * manifold_dim + 1) - (manifold_dim - 1));
}

TrialConfig default_trial_config(const PresetInfo& preset) {
  TrialConfig cfg;
  cfg.ncn.pp_steps = preset.projection_steps();
  return cfg;
}

ReconstructOutcome reconstruct_case(const CaseSet& cases, const PresetInfo& preset, int ref,
                                    int guess, const SensorLayout& layout,
                                    const std::string& optimizer, const TrialConfig& config,
                                    int iters, long trial_id) {
  ReconstructOutcome out;
  TrialResult& result = out.result;
  result.trial_id = trial_id;
  result.ref = ref;
  result.guess = guess;
  result.m_x = layout.m_x;
  result.m_t = layout.m_t;
  result.pp_enabled = config.with_projection && optimizer == "ncn";

  const int K = layout.horizon_steps;
  const ControlVector theta_truth =
      encode(cases.samples.at(cases.reference_indices.at(ref)), cases.solver);
  const PhysicalField truth0 = decode(theta_truth);
  const Trajectory truth_traj = rollout(truth0, K, cases.solver);
  const ObservationSet obs = sample_observations(truth_traj, layout);

  ControlVector theta0 = theta_truth;
  if (guess >= 0) theta0 = encode(cases.samples.at(cases.guess_indices.at(ref).at(guess)),
                                  cases.solver);
  result.d_over_ra =
      std::sqrt((truth0.values - decode(theta0).values).square().sum()) / cases.stats.radius;

  KsObjective objective(cases.solver, obs);
  OptimizeResult opt;
  if (optimizer == "ncn") {
    NcnConfig ncn = config.ncn;
    if (iters > 0) {
      ncn.max_iters = iters;
      std::erase_if(ncn.pp_schedule, [iters](int s) { return s >= iters; });
    }
    opt = run_reconstruction(objective, theta0.real_coeffs, ncn, config.ls,
                             config.with_projection);
  } else if (optimizer == "gd") {
    opt = gradient_descent(objective, theta0.real_coeffs, 0.0, iters > 0 ? iters : 5000,
                           config.ls);
  } else if (optimizer == "bfgs") {
    opt = bfgs(objective, theta0.real_coeffs, iters > 0 ? iters : config.ncn.max_iters,
               config.ls);
  } else if (optimizer == "newton-mod") {
    opt = modified_newton(objective, theta0.real_coeffs, config.ncn.kappa_low,
                          iters > 0 ? iters : config.ncn.max_iters, config.ls);
  } else {
    throw std::invalid_argument("reconstruct_case: unknown optimizer " + optimizer);
  }
  out.trace = opt.trace;
  out.theta = opt.theta;
  result.final_loss = opt.loss;
  result.iterations = static_cast<int>(opt.trace.records.size());
  result.kappa_switches = opt.trace.count_events(kEventKappaSwitch);
  result.projections = opt.trace.count_events(kEventPseudoProjection);
  result.blew_up = opt.trace.count_events(kEventBlowUpAbort) > 0;

  const ControlVector theta_hat{opt.theta, cases.solver};
  try {
    const Trajectory est_traj = rollout(decode(theta_hat), K, cases.solver);
    result.e_u = metric_e_u(truth0, est_traj.states.front(), cases.stats);
    result.cs_full = metric_cs(truth_traj, est_traj, 1.0);
    result.cs_last75 = metric_cs(truth_traj, est_traj, 0.75);
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    objective.problem().loss_grad_hess(theta_hat.real_coeffs, grad, hess);
    result.grad_norm = grad.norm();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess, Eigen::EigenvaluesOnly);
    result.hessian_min_eig = eig.eigenvalues().minCoeff();
  } catch (const BlowUpError&) {
    result.blew_up = true;
    result.e_u = metric_e_u(truth0, decode(theta_hat), cases.stats);
    result.cs_full = 0.0;
    result.cs_last75 = 0.0;
  }
  return out;
}

TrialResult run_trial(const CaseSet& cases, const PresetInfo& preset, int ref, int guess,
                      const SensorLayout& layout, const TrialConfig& config, long trial_id) {
  return reconstruct_case(cases, preset, ref, guess, layout, "ncn", config, -1, trial_id).result;
}

CampaignResult run_campaign(const CaseSet& cases, const PresetInfo& preset,
                            const CampaignSelection& selection, const TrialConfig& config,
                            double tau, double loss_cut,
                            const std::vector<TrialResult>* already_done,
                            const TrialCallback& on_trial) {
  CampaignResult out;
  out.tau = tau;
  out.loss_cut = loss_cut;
  const int refs = selection.num_refs < 0 ? cases.num_refs()
                                          : std::min(selection.num_refs, cases.num_refs());
  const int guesses = selection.num_guesses < 0
                          ? cases.num_guesses()
                          : std::min(selection.num_guesses, cases.num_guesses());

  struct Task {
    long id;
    int layout_idx, ref, guess;
  };
  std::vector<Task> tasks;
  std::vector<SensorLayout> layouts;
  const int K = preset.horizon_steps();
  long next_id = 0;
  for (int li = 0; li < static_cast<int>(selection.layouts.size()); ++li) {
    layouts.push_back(SensorLayout::uniform(cases.solver, selection.layouts[li].first,
                                            selection.layouts[li].second, K));
    for (int r = 0; r < refs; ++r)
      for (int g = 0; g < guesses; ++g) {
        const double d_ratio = cases.distances(r, g) / cases.stats.radius;
        const long id = next_id++;
        if (d_ratio < selection.d_band_lo || d_ratio > selection.d_band_hi) continue;
        tasks.push_back({id, li, r, g});
      }
  }

  std::map<long, TrialResult> done;
  if (already_done)
    for (const TrialResult& t : *already_done) done[t.trial_id] = t;

  std::vector<TrialResult> results(tasks.size());
  std::vector<char> fresh(tasks.size(), 0);
  std::atomic<std::size_t> cursor{0};
  const int jobs = selection.jobs > 0
                       ? selection.jobs
                       : std::max(1u, std::thread::hardware_concurrency());
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& t = tasks[i];
      auto hit = done.find(t.id);
      if (hit != done.end()) {
        results[i] = hit->second;
        continue;
      }
      results[i] = run_trial(cases, preset, t.ref, t.guess, layouts[t.layout_idx], config, t.id);
      fresh[i] = 1;
    }
  };
  if (jobs <= 1 || tasks.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  // deterministic order by trial id, regardless of scheduling
  out.trials = std::move(results);
  std::sort(out.trials.begin(), out.trials.end(),
            [](const TrialResult& a, const TrialResult& b) { return a.trial_id < b.trial_id; });
  if (on_trial)
    for (std::size_t i = 0; i < out.trials.size(); ++i) on_trial(out.trials[i]);

  for (int li = 0; li < static_cast<int>(layouts.size()); ++li) {
    LayoutSummary s;
    s.m_x = layouts[li].m_x;
    s.m_t = layouts[li].m_t;
    s.m = s.m_x * s.m_t;
    s.m_tilde = normalized_measurement_count(s.m, preset.manifold_dim);
    for (const TrialResult& t : out.trials) {
      if (t.m_x != s.m_x || t.m_t != s.m_t) continue;
      ++s.trials;
      const bool low = t.final_loss < loss_cut;
      const bool acc = t.cs_full >= tau;
      if (low) ++s.low_loss;
      if (acc) ++s.accurate;
      if (low && acc) ++s.accurate_low_loss;
    }
    if (s.trials > 0) {
      s.p_low_loss = static_cast<double>(s.low_loss) / s.trials;
      s.p_accurate = static_cast<double>(s.accurate) / s.trials;
      s.p_accurate_given_low_loss =
          s.low_loss > 0 ? static_cast<double>(s.accurate_low_loss) / s.low_loss : 0.0;
    }
    out.summaries.push_back(s);
  }
  return out;
}

EpsilonStarEstimate estimate_epsilon_star(const std::vector<TrialResult>& results, double tau,
                                          double delta, double search_lo, double search_hi,
                                          int min_conditioning) {
  EpsilonStarEstimate est;
  est.tau = tau;
  est.delta = delta;
  est.search_lo = search_lo;
  est.search_hi = search_hi;
  est.trial_count = static_cast<int>(results.size());
  if (est.trial_count < 100)
    throw std::invalid_argument("estimate_epsilon_star: need at least 100 trials");
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const TrialResult& t : results) {
    lo = std::min(lo, std::max(t.final_loss, 1e-300));
    hi = std::max(hi, t.final_loss);
  }
  if (!(hi > 0.0) || std::log10(hi) - std::log10(lo) < 2.0)
    throw std::invalid_argument("estimate_epsilon_star: trials must span several loss decades");

  // descending log grid, 64 points per decade
  const int decades = static_cast<int>(std::lround(std::log10(search_hi / search_lo)));
  const int points = 64 * decades;
  for (int i = points; i >= 0; --i) {
    const double eps = search_lo * std::pow(10.0, static_cast<double>(i) / 64.0);
    int conditioning = 0, good = 0;
    for (const TrialResult& t : results) {
      if (t.final_loss < eps) {
        ++conditioning;
        if (t.cs_full >= tau) ++good;
      }
    }
    if (conditioning < min_conditioning) continue;
    if (static_cast<double>(good) / conditioning >= 1.0 - delta) {
      est.exists = true;
      est.epsilon_star = eps;
      est.conditioning_count = conditioning;
      break;
    }
  }
  return est;
}

std::vector<CurvatureBin> curvature_statistics(const std::vector<TrialResult>& results,
                                               double eig_cut, int decade_lo, int decade_hi) {
  std::vector<CurvatureBin> bins;
  for (int d = decade_lo; d < decade_hi; ++d) {
    CurvatureBin bin;
    bin.loss_lo = std::pow(10.0, d);
    bin.loss_hi = std::pow(10.0, d + 1);
    for (const TrialResult& t : results) {
      if (t.final_loss >= bin.loss_lo && t.final_loss < bin.loss_hi) {
        ++bin.trials;
        if (t.hessian_min_eig < eig_cut) ++bin.negative;
      }
    }
    bins.push_back(bin);
  }
  return bins;
}

double cancellation_ratio(const std::vector<Eigen::VectorXd>& parts) {
  if (parts.empty()) throw std::invalid_argument("cancellation_ratio: no sub-gradients");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(parts.front().size());
  double norm_sum = 0.0;
  for (const Eigen::VectorXd& p : parts) {
    sum += p;
    norm_sum += p.norm();
  }
  return norm_sum > 0.0 ? sum.norm() / norm_sum : 0.0;
}

SubgradientReport subgradient_conflict_report(const ControlVector& theta,
                                              const ObservationSet& obs) {
  AssimilationProblem problem(theta.config, obs);
  const std::map<int, Eigen::VectorXd> subs = problem.sub_gradients(theta.real_coeffs);
  SubgradientReport report;
  std::vector<Eigen::VectorXd> parts;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(theta.dim());
  for (const auto& [k, g] : subs) {
    report.time_indices.push_back(k);
    report.norms.push_back(g.norm());
    parts.push_back(g);
    sum += g;
  }
  report.sum_norm = sum.norm();
  report.cancellation_ratio = cancellation_ratio(parts);
  return report;
}

double gradient_loss_correlation(const std::vector<TrialResult>& results) {
  std::vector<double> xs, ys;
  for (const TrialResult& t : results) {
    if (t.blew_up || t.final_loss <= 0.0 || t.grad_norm <= 0.0) continue;
    xs.push_back(std::log10(t.final_loss));
    ys.push_back(std::log10(t.grad_norm));
  }
  const int n = static_cast<int>(xs.size());
  if (n < 3) throw std::invalid_argument("gradient_loss_correlation: too few usable trials");
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ksr
