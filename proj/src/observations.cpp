#include "ksrecon/observations.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ksr {

SensorLayout SensorLayout::uniform(const SolverConfig& config, int m_x, int m_t,
                                   int horizon_steps) {
  const int n = config.grid.n;
  if (m_x < 1 || m_x > n) throw std::invalid_argument("SensorLayout: m_x out of range");
  if (m_t < 1 || m_t > horizon_steps)
    throw std::invalid_argument("SensorLayout: m_t out of range");
  SensorLayout layout;
  layout.m_x = m_x;
  layout.m_t = m_t;
  layout.horizon_steps = horizon_steps;

  // Sensor i sits at -L/2 + (i + 1/2) L/m_x, i.e. offset (i + 1/2) n/m_x
  // nodes from the left boundary, rounded to the nearest node.
  std::set<int> seen;
  for (int i = 0; i < m_x; ++i) {
    const int node = static_cast<int>(std::lround((i + 0.5) * n / m_x)) % n;
    if (!seen.insert(node).second)
      throw std::invalid_argument("SensorLayout: sensors collide after node snapping");
    layout.sensor_nodes.push_back(node);
  }

  for (int j = 1; j <= m_t; ++j) {
    const int idx = static_cast<int>(std::lround(static_cast<double>(j) * horizon_steps / m_t));
    layout.time_indices.push_back(idx);
  }
  if (layout.time_indices.front() <= 0 || layout.time_indices.back() != horizon_steps ||
      std::adjacent_find(layout.time_indices.begin(), layout.time_indices.end()) !=
          layout.time_indices.end())
    throw std::invalid_argument("SensorLayout: degenerate time indices");
  return layout;
}

void ObservationSet::validate(int n) const {
  if (values.rows() != m_x() || values.cols() != m_t())
    throw std::invalid_argument("ObservationSet: value matrix shape mismatch");
  for (int node : sensor_nodes)
    if (node < 0 || node >= n) throw std::invalid_argument("ObservationSet: sensor node out of range");
  for (int t : time_indices)
    if (t <= 0 || t > horizon_steps)
      throw std::invalid_argument("ObservationSet: time index out of (0, K]");
  if (time_indices.empty() || time_indices.back() != horizon_steps)
    throw std::invalid_argument("ObservationSet: final time index K must be observed");
}

ObservationSet sample_observations(const Trajectory& truth, const SensorLayout& layout) {
  if (layout.horizon_steps != truth.steps())
    throw std::invalid_argument("sample_observations: layout horizon does not match trajectory");
  ObservationSet obs;
  obs.sensor_nodes = layout.sensor_nodes;
  obs.time_indices = layout.time_indices;
  obs.horizon_steps = layout.horizon_steps;
  obs.values.resize(layout.m_x, layout.m_t);
  for (int j = 0; j < layout.m_t; ++j) {
    const int t = layout.time_indices[j];
    if (t < 0 || t > truth.steps())
      throw std::invalid_argument("sample_observations: time index out of trajectory bounds");
    const PhysicalField& state = truth.states[t];
    for (int i = 0; i < layout.m_x; ++i) {
      const int node = layout.sensor_nodes[i];
      if (node < 0 || node >= truth.config.grid.n)
        throw std::invalid_argument("sample_observations: sensor node out of bounds");
      obs.values(i, j) = state.values[node];
    }
  }
  obs.validate(truth.config.grid.n);
  return obs;
}

}  // namespace ksr
