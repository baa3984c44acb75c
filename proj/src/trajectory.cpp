#include "ksrecon/trajectory.hpp"

#include <cstring>
#include <fstream>

namespace ksr {

namespace {
constexpr char kMagic[8] = {'K', 'S', 'T', 'R', 'A', 'J', '0', '1'};

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

std::size_t trajectory_file_size(int n, int num_states) {
  return sizeof(kMagic) + 2 * sizeof(std::uint64_t) + 2 * sizeof(double) +
         static_cast<std::size_t>(n) * num_states * sizeof(double);
}

void write_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_trajectory: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(os, traj.config.grid.n);
  put<std::uint64_t>(os, traj.states.size());
  put<double>(os, traj.config.grid.length);
  put<double>(os, traj.config.dt);
  for (const PhysicalField& s : traj.states)
    os.write(reinterpret_cast<const char*>(s.values.data()), traj.config.grid.n * sizeof(double));
  if (!os) throw std::runtime_error("write_trajectory: write failed for " + path);
}

Trajectory read_trajectory(const std::string& path, int modes_control) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_trajectory: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("read_trajectory: bad magic in " + path);
  const auto n = static_cast<int>(get<std::uint64_t>(is));
  const auto count = static_cast<int>(get<std::uint64_t>(is));
  const double length = get<double>(is);
  const double dt = get<double>(is);
  Trajectory traj;
  traj.config = SolverConfig::custom(length, n, dt, modes_control > 0 ? modes_control : n / 4);
  traj.states.reserve(count);
  for (int k = 0; k < count; ++k) {
    Eigen::ArrayXd v(n);
    is.read(reinterpret_cast<char*>(v.data()), n * sizeof(double));
    if (!is) throw std::runtime_error("read_trajectory: truncated file " + path);
    traj.states.emplace_back(traj.config.grid, std::move(v));
  }
  return traj;
}

}  // namespace ksr
