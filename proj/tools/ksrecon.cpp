// Command-line front end: simulation, chaos diagnostics, case generation,
// reconstruction, observability campaigns, and figure-data export. All the
// heavy lifting lives in the library; this file parses flags and writes
// files.
#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>

#include "ksrecon/campaign_io.hpp"
#include "ksrecon/harness.hpp"
#include "ksrecon/trajectory.hpp"

using namespace ksr;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string preset = "L22";
  std::string custom;  // "L,n,dt,p"
  std::uint64_t seed = 7041;
  std::string out = ".";
  int jobs = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_jobs = false) {
  cmd->add_option("--preset", opts.preset, "domain preset: L22, L44 or L66");
  cmd->add_option("--custom", opts.custom, "custom domain as L,n,dt,p (overrides --preset)");
  cmd->add_option("--seed", opts.seed, "RNG seed (splitmix64)");
  cmd->add_option("--out", opts.out, "output directory");
  if (with_jobs) cmd->add_option("--jobs", opts.jobs, "parallel trials (0 = all cores)");
}

// Flat key=value config support: keys become --key arguments appended after
// the explicit ones, skipping any flag already given, so flags always win.
std::vector<std::string> inject_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--config") {
      config_path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
  if (config_path.empty()) return args;
  std::ifstream is(config_path);
  if (!is) throw std::invalid_argument("cannot open config file " + config_path);
  std::set<std::string> given(args.begin(), args.end());
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = "--" + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "--" || given.count(key)) continue;
    args.push_back(key);
    if (!value.empty() && value != "true") args.push_back(value);
  }
  return args;
}

SolverConfig parse_custom(const std::string& text) {
  double length, dt;
  int n, p;
  if (std::sscanf(text.c_str(), "%lf,%d,%lf,%d", &length, &n, &dt, &p) != 4)
    throw std::invalid_argument("--custom expects L,n,dt,p");
  return SolverConfig::custom(length, n, dt, p);
}

// preset info for named presets; custom domains get a synthetic entry with
// the assimilation window defaulting to 20 time units
PresetInfo resolve_preset(const CommonOpts& opts) {
  if (!opts.custom.empty()) {
    PresetInfo info;
    info.name = "custom";
    info.solver = parse_custom(opts.custom);
    info.ell1_nominal = 0.05;
    info.manifold_dim = 8;
    return info;
  }
  auto preset = preset_by_name(opts.preset);
  if (!preset) throw std::invalid_argument("unknown preset " + opts.preset);
  return preset_info(*preset);
}

void write_sidecar(const std::string& path, const SolverConfig& cfg, std::uint64_t seed,
                   const json& extra) {
  json meta;
  meta["L"] = cfg.grid.length;
  meta["n"] = cfg.grid.n;
  meta["dt"] = cfg.dt;
  meta["modes_control"] = cfg.modes_control;
  meta["seed"] = seed;
  meta["rng"] = SplitMix64::name();
  meta.update(extra);
  std::ofstream os(path);
  os << meta.dump(2) << '\n';
  if (!os) throw std::runtime_error("cannot write " + path);
}

std::vector<std::pair<int, int>> parse_layouts(const std::vector<std::string>& specs) {
  std::vector<std::pair<int, int>> out;
  for (const std::string& token : specs) {
    int mx, mt;
    if (std::sscanf(token.c_str(), "%dx%d", &mx, &mt) != 2)
      throw std::invalid_argument("layout must look like MXxMT, e.g. 4x4");
    out.emplace_back(mx, mt);
  }
  return out;
}

int cmd_simulate(const CommonOpts& opts, const std::string& u0_source, double time, int steps) {
  PresetInfo info = resolve_preset(opts);
  const SolverConfig& cfg = info.solver;
  if (steps <= 0) steps = static_cast<int>(std::lround(time / cfg.dt));
  if (steps < 0) throw std::invalid_argument("simulate: negative step count");

  PhysicalField u0 = PhysicalField::zero(cfg.grid);
  if (u0_source == "zero") {
  } else if (u0_source == "attractor") {
    auto samples = attractor_samples(cfg, 1010.0, 1000.0, 1.0, opts.seed);
    u0 = samples.front();
  } else if (u0_source == "random") {
    SplitMix64 rng(opts.seed);
    u0 = random_smooth_field(cfg.grid, rng);
  } else {
    Trajectory prior = read_trajectory(u0_source, cfg.modes_control);
    if (prior.config.grid.n != cfg.grid.n)
      throw std::invalid_argument("simulate: u0 file grid does not match configuration");
    u0 = prior.states.back();
  }

  Trajectory traj = rollout(u0, steps, cfg);
  fs::create_directories(opts.out);
  write_trajectory(opts.out + "/trajectory.bin", traj);
  write_sidecar(opts.out + "/trajectory.json", cfg, opts.seed,
                {{"command", "simulate"}, {"steps", steps}, {"u0", u0_source}});
  std::cout << "wrote " << opts.out << "/trajectory.bin (" << traj.states.size() << " states)\n";
  return 0;
}

int cmd_lyapunov(const CommonOpts& opts, int exponents, double horizon, double reorth) {
  fs::create_directories(opts.out);
  if (opts.preset == "linear-test" && opts.custom.empty()) {
    // hidden diagnostic preset: diagonal linear system with known rates
    Eigen::VectorXd rates(4);
    rates << 0.3, 0.1, -0.2, -0.9;
    TangentSystem sys;
    sys.dim = 4;
    sys.dt = 0.1;
    Eigen::ArrayXd factor = (rates.array() * sys.dt).exp();
    sys.advance_state = [factor](Eigen::ArrayXd& u) { u *= factor; };
    sys.advance_tangents = [factor](const Eigen::ArrayXd&, Eigen::MatrixXd& q) {
      for (int c = 0; c < q.cols(); ++c) q.col(c).array() *= factor;
    };
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(4, 4);
    LyapunovSpectrum spec =
        benettin_spectrum(sys, Eigen::ArrayXd::Ones(4), 4, horizon > 0 ? horizon : 500.0, 2.0,
                          &eye);
    SolverConfig fake = SolverConfig::custom(1.0, 4, sys.dt, 1);
    write_spectrum_json(opts.out + "/lyapunov.json", fake, spec);
    std::cout << "l1 = " << spec.exponents[0] << "  d_ky = " << spec.d_ky << '\n';
    return 0;
  }
  PresetInfo info = resolve_preset(opts);
  if (exponents <= 0) {
    if (info.name == "L44") exponents = 14;
    else if (info.name == "L66") exponents = 20;
    else exponents = 10;
  }
  LyapunovSpectrum spec =
      lyapunov_spectrum(info.solver, exponents, horizon, reorth, opts.seed);
  write_spectrum_json(opts.out + "/lyapunov.json", info.solver, spec, opts.seed);
  std::cout << "l1 = " << spec.exponents[0] << "  t_lyap = " << spec.t_lyap
            << "  d_ky = " << spec.d_ky << '\n';
  return 0;
}

int cmd_attractor(const CommonOpts& opts, double total_time, double burn_in, double interval) {
  PresetInfo info = resolve_preset(opts);
  AttractorStats stats = attractor_stats(info.solver, total_time, burn_in, interval, opts.seed);
  fs::create_directories(opts.out);
  write_attractor_json(opts.out + "/attractor.json", info.solver, stats, opts.seed);
  std::cout << "R_A = " << stats.radius << " over " << stats.sample_count << " samples\n";
  return 0;
}

int cmd_gen_cases(const CommonOpts& opts, int refs, int guesses, double total_time,
                  double burn_in) {
  PresetInfo info = resolve_preset(opts);
  if (info.name == "custom")
    throw std::invalid_argument("gen-cases requires a named preset");
  CaseSet cases = generate_case_set(info, opts.seed, refs, guesses, total_time, burn_in);
  save_case_set(cases, opts.out);
  std::cout << "wrote case set: " << refs << " references x " << guesses << " guesses, R_A = "
            << cases.stats.radius << '\n';
  return 0;
}

int cmd_reconstruct(const CommonOpts& opts, const std::string& cases_dir, int ref, int guess,
                    bool truth_start, int m_x, int m_t, const std::string& optimizer,
                    bool no_pp, int iters) {
  CaseSet cases = load_case_set(cases_dir);
  auto preset = preset_by_name(cases.preset_name);
  if (!preset) throw std::invalid_argument("case set has unknown preset");
  const PresetInfo& info = preset_info(*preset);
  TrialConfig config = default_trial_config(info);
  config.with_projection = !no_pp;
  SensorLayout layout = SensorLayout::uniform(cases.solver, m_x, m_t, info.horizon_steps());
  ReconstructOutcome outcome = reconstruct_case(cases, info, ref, truth_start ? -1 : guess,
                                                layout, optimizer, config, iters);
  fs::create_directories(opts.out);
  write_trials_csv(opts.out + "/result.csv", {outcome.result});
  std::ofstream trace_os(opts.out + "/trace.csv");
  outcome.trace.to_csv(trace_os);
  std::cout.precision(12);
  std::cout << "final_loss = " << outcome.result.final_loss << "  e_u = " << outcome.result.e_u
            << "  cs = " << outcome.result.cs_full << '\n';
  return 0;
}

int cmd_campaign(const CommonOpts& opts, const std::string& cases_dir,
                 const std::vector<std::string>& layout_specs, int refs, int guesses,
                 const std::string& dband, bool no_pp, double tau, double loss_cut,
                 bool resume) {
  CaseSet cases = load_case_set(cases_dir);
  auto preset = preset_by_name(cases.preset_name);
  if (!preset) throw std::invalid_argument("case set has unknown preset");
  const PresetInfo& info = preset_info(*preset);

  CampaignSelection sel;
  sel.layouts = parse_layouts(layout_specs);
  sel.num_refs = refs;
  sel.num_guesses = guesses;
  sel.jobs = opts.jobs;
  if (!dband.empty()) {
    if (std::sscanf(dband.c_str(), "%lf:%lf", &sel.d_band_lo, &sel.d_band_hi) != 2)
      throw std::invalid_argument("--dband expects LO:HI");
  }
  TrialConfig config = default_trial_config(info);
  config.with_projection = !no_pp;

  fs::create_directories(opts.out);
  const std::string trials_path = opts.out + "/trials.csv";
  std::vector<TrialResult> prior;
  if (resume && fs::exists(trials_path)) {
    prior = read_trials_csv(trials_path);
    std::cout << "resuming: " << prior.size() << " trials already on disk\n";
  }
  CampaignResult out =
      run_campaign(cases, info, sel, config, tau, loss_cut, prior.empty() ? nullptr : &prior);

  write_trials_csv(trials_path, out.trials);
  write_summary_json(opts.out + "/summary.json", cases.preset_name, out, cases.seed);
  write_probability_grid_csv(opts.out + "/probability_grid.csv", cases.preset_name,
                             info.manifold_dim, out.summaries);
  write_curvature_csv(opts.out + "/curvature.csv", curvature_statistics(out.trials));
  write_gradient_loss_csv(opts.out + "/gradient_loss.csv", out.trials);

  // per-layout epsilon-star table keyed by the normalized measurement count
  std::ofstream eps_os(opts.out + "/epsilon_star.csv");
  eps_os << "m_x,m_t,m,m_tilde,epsilon_star,conditioning\n";
  for (const LayoutSummary& s : out.summaries) {
    std::vector<TrialResult> sub;
    for (const TrialResult& t : out.trials)
      if (t.m_x == s.m_x && t.m_t == s.m_t) sub.push_back(t);
    eps_os << s.m_x << ',' << s.m_t << ',' << s.m << ',' << s.m_tilde << ',';
    try {
      EpsilonStarEstimate est = estimate_epsilon_star(sub, tau);
      if (est.exists)
        eps_os << est.epsilon_star << ',' << est.conditioning_count << '\n';
      else
        eps_os << "DNE,0\n";
    } catch (const std::invalid_argument&) {
      eps_os << "NA,0\n";  // too few trials to evaluate
    }
  }
  std::cout << "campaign complete: " << out.trials.size() << " trials\n";
  for (const LayoutSummary& s : out.summaries)
    std::cout << "  " << s.m_x << "x" << s.m_t << ": p(low loss) = " << s.p_low_loss
              << ", p(acc | low loss) = " << s.p_accurate_given_low_loss << '\n';
  return 0;
}

int cmd_epsilon_star(const std::string& results_path, double tau, double delta, int m_x, int m_t,
                     const std::string& out_path) {
  std::vector<TrialResult> trials = read_trials_csv(results_path);
  if (m_x > 0 || m_t > 0) {
    std::vector<TrialResult> filtered;
    for (const TrialResult& t : trials)
      if ((m_x <= 0 || t.m_x == m_x) && (m_t <= 0 || t.m_t == m_t)) filtered.push_back(t);
    trials = std::move(filtered);
  }
  EpsilonStarEstimate est = estimate_epsilon_star(trials, tau, delta);
  write_epsilon_star_json(out_path, est);
  if (est.exists)
    std::cout << "epsilon_star = " << est.epsilon_star << '\n';
  else
    std::cout << "epsilon_star = DNE\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory reconstruction for the Kuramoto-Sivashinsky equation"};
  app.require_subcommand(1);

  CommonOpts sim_opts, lyap_opts, attr_opts, gen_opts, rec_opts, camp_opts;

  auto* sim = app.add_subcommand("simulate", "integrate forward and write a trajectory file");
  add_common(sim, sim_opts);
  std::string u0_source = "zero";
  double sim_time = 0.0;
  int sim_steps = 0;
  sim->add_option("--u0", u0_source, "zero | random | attractor | <trajectory file>");
  sim->add_option("--time", sim_time, "integration time (time units)");
  sim->add_option("--steps", sim_steps, "integration steps (overrides --time)");

  auto* lyap = app.add_subcommand("lyapunov", "Lyapunov spectrum via Benettin QR");
  add_common(lyap, lyap_opts);
  int exponents = 0;
  double horizon = 1e5, reorth = 2.0;
  lyap->add_option("--exponents", exponents, "number of exponents (0 = preset default)");
  lyap->add_option("--horizon", horizon, "integration horizon (time units)");
  lyap->add_option("--reorth", reorth, "QR interval (time units)");

  auto* attr = app.add_subcommand("attractor", "attractor center/radius statistics");
  add_common(attr, attr_opts);
  double total_time = 10000.0, burn_in = 1000.0, interval = 1.0;
  attr->add_option("--total-time", total_time);
  attr->add_option("--burn-in", burn_in);
  attr->add_option("--interval", interval);

  auto* gen = app.add_subcommand("gen-cases", "generate a reference/guess case set");
  add_common(gen, gen_opts);
  int refs = 20, guesses = 400;
  double gen_total = 10000.0, gen_burn = 1000.0;
  gen->add_option("--refs", refs);
  gen->add_option("--guesses", guesses);
  gen->add_option("--total-time", gen_total);
  gen->add_option("--burn-in", gen_burn);

  auto* rec = app.add_subcommand("reconstruct", "reconstruct one case");
  add_common(rec, rec_opts);
  std::string cases_dir, optimizer = "ncn";
  int ref = 0, guess = 0, m_x = 4, m_t = 4, iters = -1;
  bool truth_start = false, no_pp = false;
  rec->add_option("--cases", cases_dir, "case set directory")->required();
  rec->add_option("--ref", ref);
  rec->add_option("--guess", guess);
  rec->add_flag("--truth-start", truth_start, "start from the encoded truth");
  rec->add_option("--mx", m_x);
  rec->add_option("--mt", m_t);
  rec->add_option("--optimizer", optimizer)
      ->check(CLI::IsMember({"ncn", "gd", "bfgs", "newton-mod"}));
  rec->add_flag("--no-pp", no_pp, "disable pseudo-projection");
  rec->add_option("--iters", iters, "iteration override");

  auto* camp = app.add_subcommand("campaign", "ensemble reconstruction sweep");
  add_common(camp, camp_opts, true);
  std::string camp_cases, dband;
  std::vector<std::string> layouts;
  int camp_refs = -1, camp_guesses = -1;
  double tau = 0.95, loss_cut = 1e-3;
  bool camp_no_pp = false, resume = false;
  camp->add_option("--cases", camp_cases, "case set directory")->required();
  camp->add_option("--layout", layouts, "sensor layout MXxMT (repeatable)");
  camp->add_option("--refs", camp_refs, "references to use (-1 = all)");
  camp->add_option("--guesses", camp_guesses, "guesses per reference (-1 = all)");
  camp->add_option("--dband", dband, "initial-distance band LO:HI on D/R_A");
  camp->add_option("--tau", tau);
  camp->add_option("--loss-cut", loss_cut);
  camp->add_flag("--no-pp", camp_no_pp);
  camp->add_flag("--resume", resume, "skip trials already present in trials.csv");

  auto* eps = app.add_subcommand("epsilon-star", "sup-loss threshold from a trials CSV");
  std::string results_path, eps_out = "epsilon_star.json";
  double eps_tau = 0.95, eps_delta = 0.001;
  int eps_mx = 0, eps_mt = 0;
  eps->add_option("--results", results_path, "trials.csv")->required();
  eps->add_option("--tau", eps_tau);
  eps->add_option("--delta", eps_delta);
  eps->add_option("--mx", eps_mx, "filter on m_x (0 = all)");
  eps->add_option("--mt", eps_mt, "filter on m_t (0 = all)");
  eps->add_option("--out", eps_out);

  for (CLI::App* sub : app.get_subcommands({}))
    sub->footer("--config FILE reads flat key=value defaults; explicit flags win");

  try {
    std::vector<std::string> args = inject_config(argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_opts, u0_source, sim_time, sim_steps);
    if (lyap->parsed()) return cmd_lyapunov(lyap_opts, exponents, horizon, reorth);
    if (attr->parsed()) return cmd_attractor(attr_opts, total_time, burn_in, interval);
    if (gen->parsed()) return cmd_gen_cases(gen_opts, refs, guesses, gen_total, gen_burn);
    if (rec->parsed())
      return cmd_reconstruct(rec_opts, cases_dir, ref, guess, truth_start, m_x, m_t, optimizer,
                             no_pp, iters);
    if (camp->parsed())
      return cmd_campaign(camp_opts, camp_cases, layouts, camp_refs, camp_guesses, dband,
                          camp_no_pp, tau, loss_cut, resume);
    if (eps->parsed()) return cmd_epsilon_star(results_path, eps_tau, eps_delta, eps_mx, eps_mt,
                                               eps_out);
  } catch (const BlowUpError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
