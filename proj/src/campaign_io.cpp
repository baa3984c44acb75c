#include "ksrecon/campaign_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ksrecon/trajectory.hpp"

namespace ksr {

using nlohmann::json;

void save_case_set(const CaseSet& cases, const std::string& dir) {
  std::filesystem::create_directories(dir);
  Trajectory samples;
  samples.config = cases.solver;
  samples.states = cases.samples;
  write_trajectory(dir + "/samples.bin", samples);

  json manifest;
  manifest["preset"] = cases.preset_name;
  manifest["seed"] = cases.seed;
  manifest["rng"] = SplitMix64::name();
  manifest["modes_control"] = cases.solver.modes_control;
  manifest["burn_in"] = cases.stats.burn_in;
  manifest["radius"] = cases.stats.radius;
  manifest["sample_count"] = cases.stats.sample_count;
  manifest["reference_indices"] = cases.reference_indices;
  manifest["guess_indices"] = cases.guess_indices;
  std::vector<std::vector<double>> dist(cases.num_refs());
  for (int r = 0; r < cases.num_refs(); ++r)
    for (int g = 0; g < cases.num_guesses(); ++g) dist[r].push_back(cases.distances(r, g));
  manifest["distances"] = dist;
  std::ofstream os(dir + "/manifest.json");
  os << manifest.dump(2) << '\n';
  if (!os) throw std::runtime_error("save_case_set: cannot write manifest");
}

CaseSet load_case_set(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw std::runtime_error("load_case_set: cannot open manifest in " + dir);
  json manifest = json::parse(is);

  CaseSet cases;
  cases.preset_name = manifest.at("preset").get<std::string>();
  cases.seed = manifest.at("seed").get<std::uint64_t>();
  const auto preset = preset_by_name(cases.preset_name);
  if (!preset) throw std::runtime_error("load_case_set: unknown preset " + cases.preset_name);
  cases.solver = preset_info(*preset).solver;

  Trajectory samples = read_trajectory(dir + "/samples.bin", cases.solver.modes_control);
  if (samples.config.grid.n != cases.solver.grid.n)
    throw std::runtime_error("load_case_set: sample grid does not match preset");
  cases.samples = std::move(samples.states);
  cases.stats = stats_from_samples(cases.samples, manifest.at("burn_in").get<double>());
  cases.reference_indices = manifest.at("reference_indices").get<std::vector<int>>();
  cases.guess_indices = manifest.at("guess_indices").get<std::vector<std::vector<int>>>();
  const auto dist = manifest.at("distances").get<std::vector<std::vector<double>>>();
  cases.distances.resize(cases.num_refs(), cases.num_guesses());
  for (int r = 0; r < cases.num_refs(); ++r)
    for (int g = 0; g < cases.num_guesses(); ++g) cases.distances(r, g) = dist[r][g];
  return cases;
}

const char* kTrialCsvHeader =
    "trial_id,ref,guess,m_x,m_t,d_over_ra,final_loss,e_u,cs_full,cs_last75,grad_norm,"
    "hessian_min_eig,iterations,kappa_switches,projections,pp_enabled,blew_up";

void write_trials_csv(const std::string& path, const std::vector<TrialResult>& trials) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_trials_csv: cannot open " + path);
  os << kTrialCsvHeader << '\n';
  os.precision(17);
  for (const TrialResult& t : trials)
    os << t.trial_id << ',' << t.ref << ',' << t.guess << ',' << t.m_x << ',' << t.m_t << ','
       << t.d_over_ra << ',' << t.final_loss << ',' << t.e_u << ',' << t.cs_full << ','
       << t.cs_last75 << ',' << t.grad_norm << ',' << t.hessian_min_eig << ',' << t.iterations
       << ',' << t.kappa_switches << ',' << t.projections << ',' << (t.pp_enabled ? 1 : 0) << ','
       << (t.blew_up ? 1 : 0) << '\n';
}

std::vector<TrialResult> read_trials_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_trials_csv: cannot open " + path);
  std::string line;
  std::getline(is, line);  // header
  std::vector<TrialResult> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    if (cols.size() != 17) throw std::runtime_error("read_trials_csv: malformed row");
    TrialResult t;
    t.trial_id = std::stol(cols[0]);
    t.ref = std::stoi(cols[1]);
    t.guess = std::stoi(cols[2]);
    t.m_x = std::stoi(cols[3]);
    t.m_t = std::stoi(cols[4]);
    t.d_over_ra = std::stod(cols[5]);
    t.final_loss = std::stod(cols[6]);
    t.e_u = std::stod(cols[7]);
    t.cs_full = std::stod(cols[8]);
    t.cs_last75 = std::stod(cols[9]);
    t.grad_norm = std::stod(cols[10]);
    t.hessian_min_eig = std::stod(cols[11]);
    t.iterations = std::stoi(cols[12]);
    t.kappa_switches = std::stoi(cols[13]);
    t.projections = std::stoi(cols[14]);
    t.pp_enabled = cols[15] == "1";
    t.blew_up = cols[16] == "1";
    out.push_back(t);
  }
  return out;
}

void write_summary_json(const std::string& path, const std::string& preset_name,
                        const CampaignResult& campaign, std::uint64_t seed) {
  json root;
  root["preset"] = preset_name;
  root["seed"] = seed;
  root["rng"] = SplitMix64::name();
  root["tau"] = campaign.tau;
  root["loss_cut"] = campaign.loss_cut;
  json cells = json::array();
  for (const LayoutSummary& s : campaign.summaries) {
    json cell;
    cell["m_x"] = s.m_x;
    cell["m_t"] = s.m_t;
    cell["m"] = s.m;
    cell["m_tilde"] = s.m_tilde;
    cell["trials"] = s.trials;
    cell["p_low_loss"] = s.p_low_loss;
    cell["p_accurate"] = s.p_accurate;
    cell["p_accurate_given_low_loss"] = s.p_accurate_given_low_loss;
    cell["low_loss"] = s.low_loss;
    cell["accurate_low_loss"] = s.accurate_low_loss;
    cells.push_back(cell);
  }
  root["layouts"] = cells;
  std::ofstream os(path);
  os << root.dump(2) << '\n';
  if (!os) throw std::runtime_error("write_summary_json: cannot write " + path);
}

void write_spectrum_json(const std::string& path, const SolverConfig& config,
                         const LyapunovSpectrum& spectrum, std::uint64_t seed) {
  json root;
  root["L"] = config.grid.length;
  root["n"] = config.grid.n;
  root["dt"] = config.dt;
  root["seed"] = seed;
  root["rng"] = SplitMix64::name();
  root["horizon"] = spectrum.horizon;
  root["reorth_interval"] = spectrum.reorth_interval;
  std::vector<double> exps(spectrum.exponents.data(),
                           spectrum.exponents.data() + spectrum.exponents.size());
  root["exponents"] = exps;
  if (std::isfinite(spectrum.d_ky))
    root["d_ky"] = spectrum.d_ky;
  else
    root["d_ky"] = nullptr;
  root["t_lyap"] = spectrum.t_lyap;
  std::ofstream os(path);
  os << root.dump(2) << '\n';
  if (!os) throw std::runtime_error("write_spectrum_json: cannot write " + path);
}

void write_attractor_json(const std::string& path, const SolverConfig& config,
                          const AttractorStats& stats, std::uint64_t seed) {
  json root;
  root["L"] = config.grid.length;
  root["n"] = config.grid.n;
  root["dt"] = config.dt;
  root["seed"] = seed;
  root["rng"] = SplitMix64::name();
  root["radius"] = stats.radius;
  root["sample_count"] = stats.sample_count;
  root["burn_in"] = stats.burn_in;
  std::vector<double> center(stats.center.values.data(),
                             stats.center.values.data() + stats.center.values.size());
  root["center"] = center;
  std::ofstream os(path);
  os << root.dump(2) << '\n';
  if (!os) throw std::runtime_error("write_attractor_json: cannot write " + path);
}

void write_epsilon_star_json(const std::string& path, const EpsilonStarEstimate& est) {
  json root;
  root["tau"] = est.tau;
  root["delta"] = est.delta;
  root["search_range"] = {est.search_lo, est.search_hi};
  root["trial_count"] = est.trial_count;
  if (est.exists) {
    root["epsilon_star"] = est.epsilon_star;
    root["conditioning_count"] = est.conditioning_count;
  } else {
    root["epsilon_star"] = "DNE";
  }
  std::ofstream os(path);
  os << root.dump(2) << '\n';
  if (!os) throw std::runtime_error("write_epsilon_star_json: cannot write " + path);
}

void write_probability_grid_csv(const std::string& path, const std::string& preset_name,
                                int manifold_dim, const std::vector<LayoutSummary>& summaries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_probability_grid_csv: cannot open " + path);
  // m_minus_embedding = m - (2 d_M + 1) aligns the embedding threshold at 0
  os << "preset,d_m,m_x,m_t,m,m_tilde,m_minus_embedding,trials,p_low_loss,p_accurate,"
        "p_accurate_given_low_loss\n";
  os.precision(10);
  for (const LayoutSummary& s : summaries)
    os << preset_name << ',' << manifold_dim << ',' << s.m_x << ',' << s.m_t << ',' << s.m << ','
       << s.m_tilde << ',' << (s.m - (2 * manifold_dim + 1)) << ',' << s.trials << ','
       << s.p_low_loss << ',' << s.p_accurate << ',' << s.p_accurate_given_low_loss << '\n';
}

void write_curvature_csv(const std::string& path, const std::vector<CurvatureBin>& bins) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_curvature_csv: cannot open " + path);
  os << "loss_lo,loss_hi,trials,negative,probability,empty\n";
  os.precision(10);
  for (const CurvatureBin& b : bins)
    os << b.loss_lo << ',' << b.loss_hi << ',' << b.trials << ',' << b.negative << ','
       << (b.empty() ? 0.0 : b.probability()) << ',' << (b.empty() ? 1 : 0) << '\n';
}

void write_gradient_loss_csv(const std::string& path, const std::vector<TrialResult>& trials) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_gradient_loss_csv: cannot open " + path);
  os << "trial_id,final_loss,grad_norm,cs_full\n";
  os.precision(17);
  for (const TrialResult& t : trials)
    os << t.trial_id << ',' << t.final_loss << ',' << t.grad_norm << ',' << t.cs_full << '\n';
}

}  // namespace ksr
