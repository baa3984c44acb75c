#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ksrecon/trajectory.hpp"

namespace ksr {

// Uniform sensor network: m_x sensors spaced L/m_x apart and centered in
// the domain (snapped to the nearest grid nodes), sampled at m_t times
// round(j*K/m_t) for j = 1..m_t. Time 0 is never observed; K always is.
struct SensorLayout {
  int m_x = 0;
  int m_t = 0;
  int horizon_steps = 0;  // K
  std::vector<int> sensor_nodes;
  std::vector<int> time_indices;

  static SensorLayout uniform(const SolverConfig& config, int m_x, int m_t, int horizon_steps);

  int m() const { return m_x * m_t; }
};

// Recorded measurement values y over the sensor grid: values(i, j) belongs
// to sensor_nodes[i] at time_indices[j].
struct ObservationSet {
  std::vector<int> sensor_nodes;
  std::vector<int> time_indices;
  Eigen::MatrixXd values;
  int horizon_steps = 0;

  int m_x() const { return static_cast<int>(sensor_nodes.size()); }
  int m_t() const { return static_cast<int>(time_indices.size()); }
  int m() const { return m_x() * m_t(); }

  void validate(int n) const;
};

// Exact pointwise reads of a reference trajectory; no noise model.
ObservationSet sample_observations(const Trajectory& truth, const SensorLayout& layout);

}  // namespace ksr
