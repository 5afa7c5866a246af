#include "vln/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <stdexcept>

namespace vln {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
constexpr std::uint64_t kLabelEmbedSeed = 0x7ab1e05eedf00dULL;
constexpr std::uint64_t kPanoNoiseSeed = 0x9a0c0ffee5a1adULL;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double euclid(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Edge lengths are quantized to 2^-32 world units (well inside the 1e-9
// tolerance on Euclidean agreement). Path sums over such lengths are exact
// in double arithmetic, independent of summation order.
constexpr double kLengthQuantum = 0x1.0p-32;

double quantize_length(double v) { return std::round(v / kLengthQuantum) * kLengthQuantum; }

bool connected(const std::vector<std::set<std::size_t>>& adj) {
  if (adj.empty()) return false;
  std::vector<char> seen(adj.size(), 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t u : adj[v]) {
      if (!seen[u]) {
        seen[u] = 1;
        ++count;
        stack.push_back(u);
      }
    }
  }
  return count == adj.size();
}

}  // namespace

double wrap_two_pi(double angle) {
  double a = std::fmod(angle, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a;
}

double wrap_pi(double angle) {
  double a = wrap_two_pi(angle);
  if (a > kPi) a -= kTwoPi;
  return a;
}

std::size_t heading_sector(double heading) {
  const double width = kTwoPi / static_cast<double>(kPanoHeadings);
  // Sectors centered on multiples of 30 degrees.
  return static_cast<std::size_t>(std::floor(wrap_two_pi(heading + width / 2.0) / width)) %
         kPanoHeadings;
}

std::size_t elevation_band(double elevation) {
  const double edge = kPi / 12.0;  // 15 degrees
  if (elevation < -edge) return 0;
  if (elevation > edge) return 2;
  return 1;
}

std::size_t pano_sector(double heading, double elevation) {
  return elevation_band(elevation) * kPanoHeadings + heading_sector(heading);
}

std::vector<double> label_embedding(int label, std::size_t visual_dim) {
  Rng rng(hash_mix(kLabelEmbedSeed, static_cast<std::uint64_t>(label)));
  std::vector<double> e(visual_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(visual_dim));
  for (double& v : e) v = scale * rng.normal();
  return e;
}

// ---------------------------------------------------------------------------
// WorldGraph

WorldGraph WorldGraph::generate(const WorldConfig& cfg, std::uint64_t seed, std::string id) {
  if (cfg.viewpoint_count < 2)
    throw std::invalid_argument("generate_world: need at least 2 viewpoints, got " +
                                std::to_string(cfg.viewpoint_count));
  const std::size_t n = cfg.viewpoint_count;
  Rng rng(seed);

  WorldGraph w;
  w.id_ = std::move(id);
  w.visual_dim_ = cfg.visual_dim;
  w.noise_sigma_ = cfg.noise_sigma;

  // Viewpoints on a jittered grid, ids shuffled so indices carry no layout.
  const std::size_t side =
      static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);

  w.positions_.resize(n);
  for (std::size_t cell = 0; cell < n; ++cell) {
    const double cx = static_cast<double>(cell % side) * cfg.grid_spacing;
    const double cy = static_cast<double>(cell / side) * cfg.grid_spacing;
    Vec3 p;
    p.x = cx + rng.uniform(-cfg.position_jitter, cfg.position_jitter);
    p.y = cy + rng.uniform(-cfg.position_jitter, cfg.position_jitter);
    p.z = rng.uniform(-cfg.height_jitter, cfg.height_jitter);
    w.positions_[perm[cell]] = p;
  }

  // Radius graph; grow the radius until connected.
  double radius = cfg.connect_radius;
  std::vector<std::set<std::size_t>> adj(n);
  for (int attempt = 0;; ++attempt) {
    for (auto& s : adj) s.clear();
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (euclid(w.positions_[a], w.positions_[b]) <= radius) {
          adj[a].insert(b);
          adj[b].insert(a);
        }
    if (connected(adj)) break;
    if (attempt >= 32)
      throw std::runtime_error("generate_world: could not connect graph");
    radius *= 1.25;
  }

  // Drop a random subset of edges for variety, never breaking connectivity.
  if (cfg.edge_drop_rate > 0.0) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b : adj[a])
        if (a < b) edges.emplace_back(a, b);
    for (std::size_t i = edges.size(); i > 1; --i) std::swap(edges[i - 1], edges[rng.index(i)]);
    for (const auto& [a, b] : edges) {
      if (!rng.bernoulli(cfg.edge_drop_rate)) continue;
      adj[a].erase(b);
      adj[b].erase(a);
      if (!connected(adj)) {
        adj[a].insert(b);
        adj[b].insert(a);
      }
    }
  }

  w.neighbors_.resize(n);
  for (std::size_t v = 0; v < n; ++v) w.neighbors_[v].assign(adj[v].begin(), adj[v].end());

  // One object toward every outgoing direction.
  std::vector<std::map<std::size_t, std::vector<int>>> placed(n);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t u : w.neighbors_[v]) {
      const std::size_t s = w.sector_of(v, u);
      auto& labels = placed[v][s];
      if (labels.empty()) labels.push_back(static_cast<int>(rng.index(cfg.object_vocab)));
    }
  }
  // Distractors: duplicate a label so it is visible toward two candidates.
  for (std::size_t v = 0; v < n; ++v) {
    const auto& nb = w.neighbors_[v];
    if (nb.size() < 2 || !rng.bernoulli(cfg.distractor_rate)) continue;
    const std::size_t ai = rng.index(nb.size());
    std::size_t bi = rng.index(nb.size() - 1);
    if (bi >= ai) ++bi;
    const std::size_t sa = w.sector_of(v, nb[ai]);
    const std::size_t sb = w.sector_of(v, nb[bi]);
    if (sa == sb) continue;
    const int label = placed[v][sa].front();
    auto& target = placed[v][sb];
    if (std::find(target.begin(), target.end(), label) == target.end()) target.push_back(label);
  }
  for (std::size_t v = 0; v < n; ++v)
    for (const auto& [sector, labels] : placed[v])
      for (int label : labels) w.objects_.push_back({v, sector, label});
  std::sort(w.objects_.begin(), w.objects_.end());

  w.finalize();
  return w;
}

void WorldGraph::finalize() {
  const std::size_t n = positions_.size();

  sector_labels_.assign(n, std::vector<std::vector<int>>(kPanoSlots));
  for (const ObjectPlacement& o : objects_)
    sector_labels_[o.viewpoint][o.sector].push_back(o.label);

  // Pano features: label-embedding sums plus deterministic per-slot noise
  // keyed off the world id, so a world loaded from file reproduces the
  // features of the generated one.
  pano_features_.assign(n * kPanoSlots * visual_dim_, 0.0);
  const std::uint64_t world_noise = hash_mix(kPanoNoiseSeed, fnv1a(id_));
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t s = 0; s < kPanoSlots; ++s) {
      double* slot = pano_features_.data() + (v * kPanoSlots + s) * visual_dim_;
      for (int label : sector_labels_[v][s]) {
        const std::vector<double> e = label_embedding(label, visual_dim_);
        for (std::size_t c = 0; c < visual_dim_; ++c) slot[c] += e[c];
      }
      if (noise_sigma_ > 0.0) {
        Rng noise(hash_mix(world_noise, v * kPanoSlots + s));
        for (std::size_t c = 0; c < visual_dim_; ++c) slot[c] += noise_sigma_ * noise.normal();
      }
    }
  }

  // All-pairs Dijkstra.
  dist_.assign(n * n, std::numeric_limits<double>::infinity());
  for (std::size_t src = 0; src < n; ++src) {
    double* d = dist_.data() + src * n;
    d[src] = 0.0;
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> queue;
    queue.emplace(0.0, src);
    while (!queue.empty()) {
      const auto [dist, v] = queue.top();
      queue.pop();
      if (dist > d[v]) continue;
      for (std::size_t u : neighbors_[v]) {
        const double cand = dist + edge_length(v, u);
        if (cand < d[u]) {
          d[u] = cand;
          queue.emplace(cand, u);
        }
      }
    }
  }

  mean_edge_length_ = 0.0;
  edge_count_ = 0;
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t u : neighbors_[v])
      if (v < u) {
        mean_edge_length_ += edge_length(v, u);
        ++edge_count_;
      }
  if (edge_count_ > 0) mean_edge_length_ /= static_cast<double>(edge_count_);

  validate();
}

void WorldGraph::validate() const {
  const std::size_t n = positions_.size();
  if (n < 2) throw std::invalid_argument("world: need at least 2 viewpoints");
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t u : neighbors_[v]) {
      if (u >= n) throw std::invalid_argument("world: edge endpoint out of range");
      const auto& back = neighbors_[u];
      if (!std::binary_search(back.begin(), back.end(), v))
        throw std::invalid_argument("world: adjacency not symmetric");
      if (edge_length(v, u) <= 0.0)
        throw std::invalid_argument("world: non-positive edge length between " +
                                    std::to_string(v) + " and " + std::to_string(u));
    }
  }
  for (std::size_t v = 0; v < n; ++v)
    if (!std::isfinite(dist_[v]))  // row 0 reaches everything iff connected
      throw std::invalid_argument("world: graph is not connected");
  for (const ObjectPlacement& o : objects_) {
    if (o.viewpoint >= n || o.sector >= kPanoSlots)
      throw std::invalid_argument("world: object placement out of range");
  }
}

bool WorldGraph::adjacent(std::size_t a, std::size_t b) const {
  const auto& nb = neighbors_[a];
  return std::binary_search(nb.begin(), nb.end(), b);
}

double WorldGraph::edge_length(std::size_t a, std::size_t b) const {
  return quantize_length(euclid(positions_[a], positions_[b]));
}

double WorldGraph::shortest_dist(std::size_t a, std::size_t b) const {
  if (a >= size() || b >= size())
    throw std::out_of_range("shortest_dist: viewpoint out of range");
  return dist_[a * size() + b];
}

std::vector<std::size_t> WorldGraph::shortest_path(std::size_t a, std::size_t b) const {
  std::vector<std::size_t> path{a};
  std::size_t cur = a;
  while (cur != b) {
    const double remaining = shortest_dist(cur, b);
    std::size_t next = size();
    for (std::size_t u : neighbors_[cur]) {
      // Exact comparison is sound: quantized lengths make path sums exact.
      if (edge_length(cur, u) + shortest_dist(u, b) == remaining) {
        next = u;
        break;  // neighbors ascending: lowest id wins ties
      }
    }
    if (next == size()) throw std::runtime_error("shortest_path: no descent step found");
    path.push_back(next);
    cur = next;
  }
  return path;
}

double WorldGraph::heading_of(std::size_t from, std::size_t to) const {
  const Vec3& a = positions_[from];
  const Vec3& b = positions_[to];
  return wrap_two_pi(std::atan2(b.y - a.y, b.x - a.x));
}

double WorldGraph::elevation_of(std::size_t from, std::size_t to) const {
  const Vec3& a = positions_[from];
  const Vec3& b = positions_[to];
  const double ground = std::hypot(b.x - a.x, b.y - a.y);
  return std::atan2(b.z - a.z, ground);
}

std::size_t WorldGraph::sector_of(std::size_t from, std::size_t to) const {
  return pano_sector(heading_of(from, to), elevation_of(from, to));
}

const std::vector<int>& WorldGraph::sector_labels(std::size_t v, std::size_t sector) const {
  return sector_labels_[v][sector];
}

const double* WorldGraph::pano_feature(std::size_t v, std::size_t sector) const {
  return pano_features_.data() + (v * kPanoSlots + sector) * visual_dim_;
}

nlohmann::json WorldGraph::to_json() const {
  nlohmann::json j;
  j["viewpoints"] = nlohmann::json::array();
  for (std::size_t v = 0; v < size(); ++v) {
    j["viewpoints"].push_back(
        {{"id", v}, {"pos", {positions_[v].x, positions_[v].y, positions_[v].z}}});
  }
  j["edges"] = nlohmann::json::array();
  for (std::size_t v = 0; v < size(); ++v)
    for (std::size_t u : neighbors_[v])
      if (v < u) j["edges"].push_back({v, u});
  j["objects"] = nlohmann::json::array();
  for (const ObjectPlacement& o : objects_)
    j["objects"].push_back({{"viewpoint", o.viewpoint}, {"sector", o.sector}, {"label", o.label}});
  return j;
}

WorldGraph WorldGraph::from_json(const nlohmann::json& j, std::string id,
                                 std::size_t visual_dim, double noise_sigma) {
  WorldGraph w;
  w.id_ = std::move(id);
  w.visual_dim_ = visual_dim;
  w.noise_sigma_ = noise_sigma;

  const auto& vps = j.at("viewpoints");
  w.positions_.resize(vps.size());
  std::vector<char> seen(vps.size(), 0);
  for (const auto& vp : vps) {
    const std::size_t id_num = vp.at("id").get<std::size_t>();
    if (id_num >= w.positions_.size() || seen[id_num])
      throw std::invalid_argument("world json: viewpoint ids must be 0..N-1, unique");
    seen[id_num] = 1;
    const auto& pos = vp.at("pos");
    w.positions_[id_num] = {pos.at(0).get<double>(), pos.at(1).get<double>(),
                            pos.at(2).get<double>()};
  }

  std::vector<std::set<std::size_t>> adj(w.positions_.size());
  for (const auto& e : j.at("edges")) {
    const std::size_t a = e.at(0).get<std::size_t>();
    const std::size_t b = e.at(1).get<std::size_t>();
    if (a >= adj.size() || b >= adj.size() || a == b)
      throw std::invalid_argument("world json: bad edge");
    adj[a].insert(b);
    adj[b].insert(a);
  }
  w.neighbors_.resize(adj.size());
  for (std::size_t v = 0; v < adj.size(); ++v)
    w.neighbors_[v].assign(adj[v].begin(), adj[v].end());

  for (const auto& o : j.at("objects"))
    w.objects_.push_back({o.at("viewpoint").get<std::size_t>(), o.at("sector").get<std::size_t>(),
                          o.at("label").get<int>()});
  std::sort(w.objects_.begin(), w.objects_.end());

  w.finalize();
  return w;
}

// ---------------------------------------------------------------------------
// Observation and stepping

Observation observe(const WorldGraph& world, const AgentState& state) {
  if (state.viewpoint >= world.size())
    throw std::out_of_range("observe: viewpoint out of range");
  const std::size_t d = world.visual_dim();
  Observation obs;
  obs.pano.resize(kPanoSlots * d);
  for (std::size_t s = 0; s < kPanoSlots; ++s) {
    const double* slot = world.pano_feature(state.viewpoint, s);
    std::copy(slot, slot + d, obs.pano.begin() + s * d);
  }

  Candidate stop;
  stop.viewpoint = state.viewpoint;
  stop.visual.assign(d, 0.0);
  stop.orientation = {0.0, 0.0, 0.0, 0.0};
  obs.candidates.push_back(std::move(stop));

  for (std::size_t u : world.neighbors(state.viewpoint)) {
    Candidate c;
    c.viewpoint = u;
    const std::size_t sector = world.sector_of(state.viewpoint, u);
    const double* slot = world.pano_feature(state.viewpoint, sector);
    c.visual.assign(slot, slot + d);
    const double rel_h = wrap_pi(world.heading_of(state.viewpoint, u) - state.heading);
    const double rel_e = world.elevation_of(state.viewpoint, u) - state.elevation;
    c.orientation = {std::cos(rel_h), std::sin(rel_h), std::cos(rel_e), std::sin(rel_e)};
    obs.candidates.push_back(std::move(c));
  }
  return obs;
}

std::pair<AgentState, bool> step(const WorldGraph& world, const AgentState& state,
                                 std::size_t action) {
  const auto& nb = world.neighbors(state.viewpoint);
  if (action > nb.size())
    throw std::out_of_range("step: action " + std::to_string(action) + " out of range (" +
                            std::to_string(nb.size() + 1) + " candidates)");
  if (action == 0) return {state, true};
  const std::size_t target = nb[action - 1];
  AgentState next;
  next.viewpoint = target;
  next.heading = world.heading_of(state.viewpoint, target);
  next.elevation = world.elevation_of(state.viewpoint, target);
  return {next, false};
}

// ---------------------------------------------------------------------------
// Vocabulary

namespace {

const std::vector<std::string>& glue_words() {
  static const std::vector<std::string> kWords = {
      "then", "and", "stop", "turn", "left", "right", "go",
      "straight", "back", "up", "down", "walk", "to", "the"};
  return kWords;
}

const std::vector<std::string>& object_nouns() {
  static const std::vector<std::string> kNouns = {
      "table", "door", "chair",  "lamp",    "sofa",   "sink",   "bed",     "desk",
      "shelf", "plant", "mirror", "stove",   "rug",    "couch",  "vase",    "clock",
      "piano", "fridge", "oven",  "toilet",  "shower", "window", "cabinet", "stairs",
      "picture", "towel", "basket", "pillow", "curtain", "bench"};
  return kNouns;
}

}  // namespace

std::string object_noun(int label) {
  const auto& nouns = object_nouns();
  if (label >= 0 && static_cast<std::size_t>(label) < nouns.size())
    return nouns[static_cast<std::size_t>(label)];
  return "obj" + std::to_string(label);
}

Vocabulary Vocabulary::build(std::size_t object_vocab) {
  std::vector<std::string> lines = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const std::string& w : glue_words()) lines.push_back(w);
  for (std::size_t l = 0; l < object_vocab; ++l) lines.push_back(object_noun(static_cast<int>(l)));
  return from_lines(lines);
}

Vocabulary Vocabulary::from_lines(const std::vector<std::string>& lines) {
  Vocabulary v;
  v.words = lines;
  for (std::size_t i = 0; i < lines.size(); ++i) v.index[lines[i]] = static_cast<int>(i);
  return v;
}

int Vocabulary::id(const std::string& word) const {
  auto it = index.find(word);
  return it == index.end() ? kUnkToken : it->second;
}

int Vocabulary::object_token(int label) const { return id(object_noun(label)); }

// ---------------------------------------------------------------------------
// Episodes

nlohmann::json Episode::to_json() const {
  return {{"world", world_id},   {"start", start},           {"heading", heading},
          {"path", path},        {"instruction", instruction}, {"radius", radius},
          {"max_steps", max_steps}};
}

Episode Episode::from_json(const nlohmann::json& j) {
  Episode e;
  e.world_id = j.at("world").get<std::string>();
  e.start = j.at("start").get<std::size_t>();
  e.heading = j.at("heading").get<double>();
  e.path = j.at("path").get<std::vector<std::size_t>>();
  e.instruction = j.at("instruction").get<std::vector<int>>();
  e.radius = j.at("radius").get<double>();
  e.max_steps = j.at("max_steps").get<std::size_t>();
  if (e.path.empty() || e.path.front() != e.start)
    throw std::invalid_argument("episode json: path must begin at start");
  if (e.instruction.empty()) throw std::invalid_argument("episode json: empty instruction");
  return e;
}

MotionBucket motion_bucket(double rel_heading, double rel_elevation) {
  if (rel_elevation > kPi / 6.0) return MotionBucket::kUp;
  if (rel_elevation < -kPi / 6.0) return MotionBucket::kDown;
  const double h = wrap_pi(rel_heading);
  if (std::abs(h) <= kPi / 4.0) return MotionBucket::kStraight;  // ties toward straight
  if (h > kPi / 4.0 && h < 3.0 * kPi / 4.0) return MotionBucket::kLeft;
  if (h < -kPi / 4.0 && h > -3.0 * kPi / 4.0) return MotionBucket::kRight;
  return MotionBucket::kBack;
}

namespace {

std::vector<std::string> bucket_words(MotionBucket b) {
  switch (b) {
    case MotionBucket::kStraight: return {"go", "straight"};
    case MotionBucket::kLeft: return {"turn", "left"};
    case MotionBucket::kRight: return {"turn", "right"};
    case MotionBucket::kBack: return {"go", "back"};
    case MotionBucket::kUp: return {"go", "up"};
    case MotionBucket::kDown: return {"go", "down"};
  }
  return {};
}

enum class PhraseKind { kAction, kObject, kBoth };

}  // namespace

Episode generate_episode(const WorldGraph& world, Rng& rng, const TemplateConfig& cfg,
                         const Vocabulary& vocab) {
  if (cfg.min_path < 2 || cfg.max_path < cfg.min_path)
    throw std::invalid_argument("generate_episode: bad path bounds");

  std::vector<std::size_t> q;
  for (int attempt = 0; attempt < 200 && q.empty(); ++attempt) {
    const std::size_t start = rng.index(world.size());
    std::vector<std::size_t> goals;
    for (std::size_t g = 0; g < world.size(); ++g) {
      if (g == start) continue;
      const std::vector<std::size_t> path = world.shortest_path(start, g);
      if (path.size() >= cfg.min_path && path.size() <= cfg.max_path) goals.push_back(g);
    }
    if (!goals.empty()) q = world.shortest_path(start, goals[rng.index(goals.size())]);
  }
  if (q.empty())
    throw std::runtime_error("generate_episode: no endpoint pair within path bounds");

  Episode e;
  e.world_id = world.id();
  e.start = q.front();
  e.path = q;
  e.heading = rng.uniform(0.0, kTwoPi);
  e.radius = cfg.success_radius;
  e.max_steps = 2 * q.size() + 5;

  std::vector<int> tokens{kBosToken};
  double heading = e.heading;
  double elevation = 0.0;
  for (std::size_t i = 0; i + 1 < q.size(); ++i) {
    const std::size_t at = q[i];
    const std::size_t next = q[i + 1];
    const MotionBucket bucket =
        motion_bucket(world.heading_of(at, next) - heading, world.elevation_of(at, next) - elevation);

    bool action_ambiguous = false;
    for (std::size_t u : world.neighbors(at)) {
      if (u == next) continue;
      if (motion_bucket(world.heading_of(at, u) - heading,
                        world.elevation_of(at, u) - elevation) == bucket) {
        action_ambiguous = true;
        break;
      }
    }

    const std::size_t target_sector = world.sector_of(at, next);
    const std::vector<int>& sector = world.sector_labels(at, target_sector);
    std::vector<int> unambiguous;
    for (int label : sector) {
      bool elsewhere = false;
      for (std::size_t u : world.neighbors(at)) {
        if (u == next) continue;
        const std::size_t s = world.sector_of(at, u);
        if (s == target_sector) continue;
        const auto& other = world.sector_labels(at, s);
        if (std::find(other.begin(), other.end(), label) != other.end()) {
          elsewhere = true;
          break;
        }
      }
      if (!elsewhere) unambiguous.push_back(label);
    }

    const double draw = rng.uniform();
    PhraseKind kind = draw < cfg.p_action                ? PhraseKind::kAction
                      : draw < cfg.p_action + cfg.p_object ? PhraseKind::kObject
                                                           : PhraseKind::kBoth;
    if (cfg.prefer_unambiguous) {
      if (kind == PhraseKind::kAction && action_ambiguous)
        kind = unambiguous.empty() ? PhraseKind::kBoth : PhraseKind::kObject;
      else if (kind == PhraseKind::kObject && unambiguous.empty())
        kind = action_ambiguous ? PhraseKind::kBoth : PhraseKind::kAction;
    }

    int label = 0;
    if (!sector.empty()) {
      label = unambiguous.empty() ? sector[rng.index(sector.size())]
                                  : unambiguous[rng.index(unambiguous.size())];
    }

    std::vector<std::string> words;
    if (kind == PhraseKind::kAction) {
      words = bucket_words(bucket);
    } else if (kind == PhraseKind::kObject) {
      words = {"walk", "to", "the", object_noun(label)};
    } else {
      words = bucket_words(bucket);
      words.push_back("to");
      words.push_back("the");
      words.push_back(object_noun(label));
    }
    for (const std::string& w : words) tokens.push_back(vocab.id(w));
    if (i + 2 < q.size()) tokens.push_back(vocab.id("then"));

    heading = world.heading_of(at, next);
    elevation = world.elevation_of(at, next);
  }
  tokens.push_back(vocab.id("and"));
  tokens.push_back(vocab.id("stop"));
  tokens.push_back(kEosToken);
  e.instruction = std::move(tokens);
  return e;
}

}  // namespace vln
