#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ksrecon/lyapunov.hpp"
#include "ksrecon/optimize.hpp"

namespace ksr {

// Per-domain constants: solver preset plus the reference invariants used by
// the harness (leading exponent for the assimilation window, manifold
// dimension for the measurement-count classification).
struct PresetInfo {
  Preset id = Preset::L22;
  std::string name;
  SolverConfig solver;
  double ell1_nominal = 0.0;
  int manifold_dim = 0;

  double horizon_time() const { return 1.0 / ell1_nominal; }
  int horizon_steps() const {
    return static_cast<int>(std::lround(horizon_time() / solver.dt));
  }
  int projection_steps() const {  // j dt = 1.0 time unit
    return static_cast<int>(std::lround(1.0 / solver.dt));
  }
};

const PresetInfo& preset_info(Preset which);
std::optional<Preset> preset_by_name(const std::string& name);

struct CaseSet {
  std::string preset_name;
  std::uint64_t seed = 0;
  SolverConfig solver;
  std::vector<PhysicalField> samples;  // long-time rollout, 1 per time unit
  AttractorStats stats;
  std::vector<int> reference_indices;
  std::vector<std::vector<int>> guess_indices;  // per reference
  Eigen::MatrixXd distances;                    // refs x guesses, on truncated states

  int num_refs() const { return static_cast<int>(reference_indices.size()); }
  int num_guesses() const {
    return guess_indices.empty() ? 0 : static_cast<int>(guess_indices.front().size());
  }
  // p-mode truncation of a stored sample; reconstruction targets live in
  // the control subspace so the global minimum is exactly representable.
  PhysicalField truncated_sample(int index) const;
};

CaseSet generate_case_set(const PresetInfo& preset, std::uint64_t seed, int num_refs = 20,
                          int num_guesses = 400, double total_time = 10000.0,
                          double burn_in = 1000.0);

void save_case_set(const CaseSet& cases, const std::string& dir);
CaseSet load_case_set(const std::string& dir);

double metric_e_u(const PhysicalField& u_truth, const PhysicalField& u_est,
                  const AttractorStats& stats);
// Cosine similarity over the flattened last ceil(fraction_tail*(K+1)) states.
double metric_cs(const Trajectory& truth, const Trajectory& est, double fraction_tail = 1.0);

double normalized_measurement_count(int m, int manifold_dim);

struct TrialResult {
  long trial_id = 0;
  int ref = 0;
  int guess = 0;
  int m_x = 0;
  int m_t = 0;
  double d_over_ra = 0.0;
  double final_loss = 0.0;
  double e_u = 0.0;
  double cs_full = 0.0;
  double cs_last75 = 0.0;
  double grad_norm = 0.0;
  double hessian_min_eig = 0.0;
  int iterations = 0;
  int kappa_switches = 0;
  int projections = 0;
  bool pp_enabled = true;
  bool blew_up = false;
};

struct TrialConfig {
  NcnConfig ncn;
  LineSearchConfig ls;
  bool with_projection = true;
};

TrialConfig default_trial_config(const PresetInfo& preset);

TrialResult run_trial(const CaseSet& cases, const PresetInfo& preset, int ref, int guess,
                      const SensorLayout& layout, const TrialConfig& config, long trial_id = 0);

struct ReconstructOutcome {
  TrialResult result;
  IterationTrace trace;
  Eigen::VectorXd theta;  // returned (best-loss) control vector
};

// One reconstruction with a chosen minimizer ("ncn", "gd", "bfgs",
// "newton-mod"); guess < 0 starts from the encoded truth. iters <= 0 picks
// the protocol default (350; 5000 for gd).
ReconstructOutcome reconstruct_case(const CaseSet& cases, const PresetInfo& preset, int ref,
                                    int guess, const SensorLayout& layout,
                                    const std::string& optimizer, const TrialConfig& config,
                                    int iters = -1, long trial_id = 0);

struct CampaignSelection {
  std::vector<std::pair<int, int>> layouts;  // (m_x, m_t)
  int num_refs = -1;                         // -1: all in the case set
  int num_guesses = -1;
  double d_band_lo = 0.0;  // filter on D/R_A
  double d_band_hi = 1.0;
  int jobs = 0;  // 0: hardware concurrency
};

struct LayoutSummary {
  int m_x = 0;
  int m_t = 0;
  int m = 0;
  double m_tilde = 0.0;
  int trials = 0;
  int low_loss = 0;           // J < loss_cut
  int accurate = 0;           // CS >= tau
  int accurate_low_loss = 0;  // both
  double p_low_loss = 0.0;
  double p_accurate = 0.0;
  double p_accurate_given_low_loss = 0.0;
};

struct CampaignResult {
  std::vector<TrialResult> trials;
  std::vector<LayoutSummary> summaries;
  double tau = 0.95;
  double loss_cut = 1e-3;
};

using TrialCallback = std::function<void(const TrialResult&)>;

CampaignResult run_campaign(const CaseSet& cases, const PresetInfo& preset,
                            const CampaignSelection& selection, const TrialConfig& config,
                            double tau = 0.95, double loss_cut = 1e-3,
                            const std::vector<TrialResult>* already_done = nullptr,
                            const TrialCallback& on_trial = nullptr);

struct EpsilonStarEstimate {
  double tau = 0.95;
  double delta = 0.001;
  bool exists = false;
  double epsilon_star = 0.0;  // valid when exists
  double search_lo = 1e-10;
  double search_hi = 1e-3;
  int trial_count = 0;
  int conditioning_count = 0;  // samples below the reported threshold
};

EpsilonStarEstimate estimate_epsilon_star(const std::vector<TrialResult>& results,
                                          double tau = 0.95, double delta = 0.001,
                                          double search_lo = 1e-10, double search_hi = 1e-3,
                                          int min_conditioning = 20);

struct CurvatureBin {
  double loss_lo = 0.0;
  double loss_hi = 0.0;
  int trials = 0;
  int negative = 0;  // min eigenvalue < -1e-8
  bool empty() const { return trials == 0; }
  double probability() const { return trials > 0 ? static_cast<double>(negative) / trials : 0.0; }
};

// Probability of a negative Hessian eigenvalue binned by terminal-loss decade.
std::vector<CurvatureBin> curvature_statistics(const std::vector<TrialResult>& results,
                                               double eig_cut = -1e-8, int decade_lo = -12,
                                               int decade_hi = 2);

struct SubgradientReport {
  std::vector<int> time_indices;
  std::vector<double> norms;  // per-time ||g_k||
  double sum_norm = 0.0;      // ||sum_k g_k||
  double cancellation_ratio = 0.0;
};

double cancellation_ratio(const std::vector<Eigen::VectorXd>& parts);
SubgradientReport subgradient_conflict_report(const ControlVector& theta,
                                              const ObservationSet& obs);

// Pearson correlation of log(grad_norm) vs log(loss) over terminated trials.
double gradient_loss_correlation(const std::vector<TrialResult>& results);

}  // namespace ksr
