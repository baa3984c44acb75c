#pragma once

#include <string>

#include "ksrecon/etdrk4.hpp"

namespace ksr {

// Binary trajectory format KSTRAJ01 (little endian):
//   bytes 0..7   magic "KSTRAJ01"
//   u64          n
//   u64          number of states (K+1)
//   f64          L
//   f64          dt
//   (K+1)*n f64  states, row major by time
void write_trajectory(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory(const std::string& path, int modes_control = 0);

std::size_t trajectory_file_size(int n, int num_states);

}  // namespace ksr
