#pragma once

#include <string>
#include <vector>

#include "ksrecon/harness.hpp"

namespace ksr {

// results CSV: one row per trial, schema documented in the README
void write_trials_csv(const std::string& path, const std::vector<TrialResult>& trials);
std::vector<TrialResult> read_trials_csv(const std::string& path);
extern const char* kTrialCsvHeader;

void write_summary_json(const std::string& path, const std::string& preset_name,
                        const CampaignResult& campaign, std::uint64_t seed = 0);

void write_spectrum_json(const std::string& path, const SolverConfig& config,
                         const LyapunovSpectrum& spectrum, std::uint64_t seed = 0);

void write_attractor_json(const std::string& path, const SolverConfig& config,
                          const AttractorStats& stats, std::uint64_t seed);

void write_epsilon_star_json(const std::string& path, const EpsilonStarEstimate& est);

// figure-ready exports
void write_probability_grid_csv(const std::string& path, const std::string& preset_name,
                                int manifold_dim, const std::vector<LayoutSummary>& summaries);
void write_curvature_csv(const std::string& path, const std::vector<CurvatureBin>& bins);
void write_gradient_loss_csv(const std::string& path, const std::vector<TrialResult>& trials);

}  // namespace ksr
