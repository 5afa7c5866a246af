#ifndef VLN_METRICS_HPP
#define VLN_METRICS_HPP

#include <cstddef>
#include <vector>

#include "vln/world.hpp"

namespace vln {

struct Trajectory {
  std::vector<std::size_t> viewpoints;  // visited viewpoints, including start
  bool stopped = false;
};

struct EpisodeMetrics {
  double tl = 0.0;
  double success = 0.0;
  double oracle_success = 0.0;
  double spl = 0.0;
  double cls = 0.0;
  double ndtw = 0.0;
  double sdtw = 0.0;
};

struct SplitMetrics {
  std::size_t count = 0;
  double sr = 0.0;
  double osr = 0.0;
  double tl = 0.0;
  double spl = 0.0;
  double cls = 0.0;
  double ndtw = 0.0;
  double sdtw = 0.0;
};

// Sum of traversed edge lengths; repeated viewpoints (STOP) add nothing.
double traj_length(const Trajectory& traj, const WorldGraph& world);

// Success: final viewpoint within the success radius of the goal.
double success(const Trajectory& traj, const Episode& episode, const WorldGraph& world);
// Oracle success: any visited viewpoint within the radius.
double oracle_success(const Trajectory& traj, const Episode& episode, const WorldGraph& world);

// success * l / max(p, l) with l the start-goal geodesic and p the trajectory
// length; defined as plain success when start == goal.
double spl(const Trajectory& traj, const Episode& episode, const WorldGraph& world);

// Coverage weighted by length score with decay threshold d_th.
double cls(const Trajectory& traj, const Episode& episode, const WorldGraph& world, double d_th);

// Dynamic time warping over geodesic node distances, anchored at both
// sequence starts and ends, moves {advance-a, advance-b, advance-both}.
double dtw(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
           const WorldGraph& world);
double ndtw(const Trajectory& traj, const Episode& episode, const WorldGraph& world, double d_th);
double sdtw(const Trajectory& traj, const Episode& episode, const WorldGraph& world, double d_th);

// Decay threshold: the success radius when positive, else the world's mean
// edge length (scale-relative stand-in for the 3m convention).
double default_decay_threshold(const WorldGraph& world, const Episode& episode);

EpisodeMetrics evaluate_episode(const Trajectory& traj, const Episode& episode,
                                const WorldGraph& world);

SplitMetrics aggregate(const std::vector<EpisodeMetrics>& reports);

}  // namespace vln

#endif  // VLN_METRICS_HPP
