#ifndef VLN_WORLD_HPP
#define VLN_WORLD_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "vln/rng.hpp"

#include <json.hpp>

namespace vln {

// 12 headings x 3 elevation bands, matching a 36-view panorama.
inline constexpr std::size_t kPanoHeadings = 12;
inline constexpr std::size_t kPanoElevations = 3;
inline constexpr std::size_t kPanoSlots = kPanoHeadings * kPanoElevations;
inline constexpr std::size_t kOrientationDim = 4;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

double wrap_two_pi(double angle);  // -> [0, 2*pi)
double wrap_pi(double angle);      // -> (-pi, pi]

// Heading sector of width 30 degrees, centered on multiples of 30.
std::size_t heading_sector(double heading);
std::size_t elevation_band(double elevation);
std::size_t pano_sector(double heading, double elevation);

struct ObjectPlacement {
  std::size_t viewpoint = 0;
  std::size_t sector = 0;
  int label = 0;

  bool operator<(const ObjectPlacement& o) const {
    return std::tie(viewpoint, sector, label) < std::tie(o.viewpoint, o.sector, o.label);
  }
};

struct WorldConfig {
  std::size_t viewpoint_count = 25;
  double connect_radius = 2.6;
  double grid_spacing = 2.0;
  double position_jitter = 0.15;
  double height_jitter = 0.25;
  double edge_drop_rate = 0.15;
  std::size_t object_vocab = 16;
  double distractor_rate = 0.5;
  std::size_t visual_dim = 32;
  double noise_sigma = 0.1;
};

struct AgentState {
  std::size_t viewpoint = 0;
  double heading = 0.0;    // radians, [0, 2*pi)
  double elevation = 0.0;  // radians
};

struct Candidate {
  std::size_t viewpoint = 0;                        // current viewpoint for STOP
  std::vector<double> visual;                       // d_v, all-zero for STOP
  std::array<double, kOrientationDim> orientation;  // (cos dth, sin dth, cos dph, sin dph)
};

struct Observation {
  std::vector<double> pano;           // kPanoSlots * d_v, row-major by slot
  std::vector<Candidate> candidates;  // index 0 is STOP
};

// Fixed global per-label feature vector; independent of any world so object
// identity transfers to unseen environments.
std::vector<double> label_embedding(int label, std::size_t visual_dim);

// Connected navigation graph on a jittered grid with per-sector object
// placements and precomputed pano features / all-pairs geodesics.
class WorldGraph {
 public:
  static WorldGraph generate(const WorldConfig& cfg, std::uint64_t seed, std::string id);
  static WorldGraph from_json(const nlohmann::json& j, std::string id,
                              std::size_t visual_dim, double noise_sigma);
  nlohmann::json to_json() const;

  const std::string& id() const { return id_; }
  std::size_t size() const { return positions_.size(); }
  const Vec3& position(std::size_t v) const { return positions_[v]; }
  const std::vector<std::size_t>& neighbors(std::size_t v) const { return neighbors_[v]; }
  bool adjacent(std::size_t a, std::size_t b) const;
  double edge_length(std::size_t a, std::size_t b) const;
  double mean_edge_length() const { return mean_edge_length_; }
  std::size_t edge_count() const { return edge_count_; }

  // Exact geodesic distance over the weighted graph (all-pairs Dijkstra,
  // precomputed).
  double shortest_dist(std::size_t a, std::size_t b) const;
  // One geodesic realizing shortest_dist; deterministic tie-breaking by
  // lowest viewpoint id.
  std::vector<std::size_t> shortest_path(std::size_t a, std::size_t b) const;

  double heading_of(std::size_t from, std::size_t to) const;
  double elevation_of(std::size_t from, std::size_t to) const;
  std::size_t sector_of(std::size_t from, std::size_t to) const;

  const std::vector<ObjectPlacement>& objects() const { return objects_; }
  const std::vector<int>& sector_labels(std::size_t v, std::size_t sector) const;
  const double* pano_feature(std::size_t v, std::size_t sector) const;
  std::size_t visual_dim() const { return visual_dim_; }

 private:
  void finalize();
  void validate() const;

  std::string id_;
  std::vector<Vec3> positions_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::vector<ObjectPlacement> objects_;
  std::size_t visual_dim_ = 32;
  double noise_sigma_ = 0.1;

  std::vector<std::vector<std::vector<int>>> sector_labels_;  // [v][sector]
  std::vector<double> pano_features_;                         // [v][sector][d_v]
  std::vector<double> dist_;                                  // all-pairs, row-major
  double mean_edge_length_ = 0.0;
  std::size_t edge_count_ = 0;
};

Observation observe(const WorldGraph& world, const AgentState& state);

// STOP (action 0) leaves the state unchanged and finishes the episode;
// otherwise moves to the chosen candidate, facing along the traversal.
std::pair<AgentState, bool> step(const WorldGraph& world, const AgentState& state,
                                 std::size_t action);

// ---------------------------------------------------------------------------
// Episodes and instruction templates

struct Episode {
  std::string world_id;
  std::size_t start = 0;
  double heading = 0.0;
  std::vector<std::size_t> path;  // ground-truth viewpoint sequence, path[0] == start
  std::vector<int> instruction;   // token ids, BOS ... EOS
  double radius = 0.0;
  std::size_t max_steps = 0;

  std::size_t goal() const { return path.back(); }

  nlohmann::json to_json() const;
  static Episode from_json(const nlohmann::json& j);
};

struct TemplateConfig {
  std::size_t min_path = 5;  // bounds on |Q| in viewpoints
  std::size_t max_path = 7;
  double p_action = 0.4;
  double p_object = 0.4;  // remainder is BOTH
  bool prefer_unambiguous = true;
  double success_radius = 0.0;
};

// Token ids 0-3 are reserved (PAD, BOS, EOS, UNK).
inline constexpr int kPadToken = 0;
inline constexpr int kBosToken = 1;
inline constexpr int kEosToken = 2;
inline constexpr int kUnkToken = 3;

struct Vocabulary {
  std::vector<std::string> words;
  std::map<std::string, int> index;

  static Vocabulary build(std::size_t object_vocab);
  static Vocabulary from_lines(const std::vector<std::string>& lines);

  std::size_t size() const { return words.size(); }
  int id(const std::string& word) const;
  int object_token(int label) const;
  const std::string& word(int id) const { return words[static_cast<std::size_t>(id)]; }
};

std::string object_noun(int label);

// Relative-motion phrase buckets (90-degree quadrants, ties toward straight,
// elevation overrides beyond +/-30 degrees).
enum class MotionBucket { kStraight, kLeft, kRight, kBack, kUp, kDown };
MotionBucket motion_bucket(double rel_heading, double rel_elevation);

// Samples endpoints whose geodesic satisfies the path bounds, then renders
// the instruction step by step. Every OBJECT mention is visible from its
// step's viewpoint toward the correct next candidate by construction.
Episode generate_episode(const WorldGraph& world, Rng& rng, const TemplateConfig& cfg,
                         const Vocabulary& vocab);

}  // namespace vln

#endif  // VLN_WORLD_HPP
