#include "tranclr/skeleton.hpp"

#include "tranclr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace tranclr {

JointGraph JointGraph::from_edges(int joints, const std::vector<std::pair<int, int>>& edges, int root) {
  if (joints <= 0) throw std::invalid_argument("joint graph needs at least one joint");
  if (root < 0 || root >= joints) throw std::invalid_argument("joint graph root out of range");
  if (static_cast<int>(edges.size()) != joints - 1)
    throw std::invalid_argument("joint graph must have exactly V-1 edges to be a tree");
  std::vector<std::vector<int>> adjacency(joints);
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= joints || b >= joints || a == b)
      throw std::invalid_argument("joint graph edge out of range");
    adjacency[a].push_back(b);
    adjacency[b].push_back(a);
  }
  JointGraph g;
  g.root_ = root;
  g.parent_.assign(joints, -2);
  g.parent_[root] = -1;
  std::queue<int> frontier;
  frontier.push(root);
  int seen = 1;
  while (!frontier.empty()) {
    int u = frontier.front();
    frontier.pop();
    for (int w : adjacency[u]) {
      if (g.parent_[w] != -2) continue;
      g.parent_[w] = u;
      ++seen;
      frontier.push(w);
    }
  }
  if (seen != joints) throw std::invalid_argument("joint graph is not connected");
  return g;
}

std::vector<std::pair<int, int>> JointGraph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int v = 0; v < joints(); ++v)
    if (parent_[v] >= 0) out.emplace_back(v, parent_[v]);
  return out;
}

Eigen::MatrixXd JointGraph::normalized_adjacency() const {
  const int n = joints();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  for (auto [c, p] : edges()) {
    a(c, p) = 1.0;
    a(p, c) = 1.0;
  }
  Eigen::VectorXd inv_sqrt_deg = a.rowwise().sum().array().rsqrt();
  return inv_sqrt_deg.asDiagonal() * a * inv_sqrt_deg.asDiagonal();
}

SkeletonSequence::SkeletonSequence(Eigen::MatrixXd data, int frames, int joints, int persons,
                                   int valid_frames, JointGraph graph)
    : data_(std::move(data)),
      frames_(frames),
      joints_(joints),
      persons_(persons),
      valid_frames_(valid_frames),
      graph_(std::move(graph)) {
  if (frames <= 0 || joints <= 0 || persons <= 0 || data_.rows() <= 0)
    throw std::invalid_argument("skeleton sequence dimensions must be positive");
  if (data_.cols() != static_cast<Eigen::Index>(frames) * joints * persons)
    throw std::invalid_argument("skeleton data does not match C x (P*T*V)");
  if (valid_frames < 0 || valid_frames > frames)
    throw std::invalid_argument("valid_frames out of range");
  if (graph_.joints() != joints) throw std::invalid_argument("joint graph size differs from V");
  if (!data_.allFinite()) throw std::invalid_argument("skeleton data contains non-finite values");
  for (int p = 0; p < persons; ++p)
    for (int t = valid_frames; t < frames; ++t)
      if (!data_.middleCols(column(t, 0, p), joints).isZero(0.0))
        throw std::invalid_argument("frames beyond valid_frames must be zero");
}

SkeletonSequence SkeletonSequence::zeros(int channels, int frames, int joints, int persons, JointGraph graph) {
  return SkeletonSequence(Eigen::MatrixXd::Zero(channels, static_cast<Eigen::Index>(frames) * joints * persons),
                          frames, joints, persons, frames, std::move(graph));
}

BodyPartition::BodyPartition(std::array<std::vector<int>, kParts> parts, int joints)
    : parts_(std::move(parts)), joints_(joints) {
  std::vector<int> owner(joints, -1);
  for (int p = 0; p < kParts; ++p) {
    if (parts_[p].empty()) throw std::invalid_argument("body part has no joints");
    for (int v : parts_[p]) {
      if (v < 0 || v >= joints) throw std::invalid_argument("body part joint out of range");
      if (owner[v] != -1) throw std::invalid_argument("body parts overlap");
      owner[v] = p;
    }
  }
  if (std::find(owner.begin(), owner.end(), -1) != owner.end())
    throw std::invalid_argument("body parts do not cover every joint");
}

StreamKind parse_stream_kind(const std::string& name) {
  if (name == "joint") return StreamKind::joint;
  if (name == "motion") return StreamKind::motion;
  if (name == "bone") return StreamKind::bone;
  throw std::invalid_argument("unknown stream kind '" + name + "'");
}

std::string to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::joint: return "joint";
    case StreamKind::motion: return "motion";
    case StreamKind::bone: return "bone";
  }
  return "?";
}

SkeletonSequence derive_stream(const SkeletonSequence& seq, StreamKind kind) {
  const int T = seq.frames(), V = seq.joints(), P = seq.persons();
  const int valid = seq.valid_frames();
  switch (kind) {
    case StreamKind::joint:
      return seq;
    case StreamKind::motion: {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(seq.channels(), seq.data().cols());
      for (int p = 0; p < P; ++p)
        for (int t = 0; t + 1 < valid; ++t)
          out.middleCols(seq.column(t, 0, p), V) =
              seq.data().middleCols(seq.column(t + 1, 0, p), V) - seq.data().middleCols(seq.column(t, 0, p), V);
      return SkeletonSequence(std::move(out), T, V, P, valid, seq.graph());
    }
    case StreamKind::bone: {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(seq.channels(), seq.data().cols());
      for (int p = 0; p < P; ++p)
        for (int t = 0; t < valid; ++t)
          for (auto [child, parent] : seq.graph().edges())
            out.col(seq.column(t, child, p)) = seq.data().col(seq.column(t, child, p)) - seq.data().col(seq.column(t, parent, p));
      return SkeletonSequence(std::move(out), T, V, P, valid, seq.graph());
    }
  }
  throw std::invalid_argument("unknown stream kind");
}

SkeletonSequence resize_window(const SkeletonSequence& seq, int start, int length, int target_frames) {
  if (target_frames <= 0) throw std::invalid_argument("target frame count must be positive");
  if (length <= 0 || start < 0 || start + length > seq.valid_frames())
    throw std::invalid_argument("resize window outside the valid range");
  const int V = seq.joints(), P = seq.persons();
  Eigen::MatrixXd out(seq.channels(), static_cast<Eigen::Index>(target_frames) * V * P);
  auto out_col = [&](int t, int p) { return (static_cast<Eigen::Index>(p) * target_frames + t) * V; };
  for (int p = 0; p < P; ++p) {
    for (int t = 0; t < target_frames; ++t) {
      if (target_frames == 1) {
        out.middleCols(out_col(t, p), V) = seq.data().middleCols(seq.column(start, 0, p), V);
        continue;
      }
      // Exact rational position (t * (length-1)) / (target-1); integer part and remainder.
      const long long num = static_cast<long long>(t) * (length - 1);
      const long long den = target_frames - 1;
      const int lo = static_cast<int>(num / den);
      const long long rem = num % den;
      if (rem == 0) {
        out.middleCols(out_col(t, p), V) = seq.data().middleCols(seq.column(start + lo, 0, p), V);
      } else {
        const double w = static_cast<double>(rem) / static_cast<double>(den);
        out.middleCols(out_col(t, p), V) = (1.0 - w) * seq.data().middleCols(seq.column(start + lo, 0, p), V) +
                                           w * seq.data().middleCols(seq.column(start + lo + 1, 0, p), V);
      }
    }
  }
  return SkeletonSequence(std::move(out), target_frames, V, P, target_frames, seq.graph());
}

SkeletonSequence temporal_resize(const SkeletonSequence& seq, int target_frames) {
  if (target_frames <= 0) throw std::invalid_argument("target frame count must be positive");
  if (seq.valid_frames() == 0) throw std::invalid_argument("cannot resize an empty sequence");
  if (seq.valid_frames() < 2 && target_frames != seq.valid_frames())
    throw std::invalid_argument("resizing needs at least two valid frames");
  return resize_window(seq, 0, seq.valid_frames(), target_frames);
}

namespace {

void require_synthetic_joints(int joints) {
  if (joints < 5 || joints % 5 != 0)
    throw ConfigError("synthetic layout needs a positive multiple of 5 joints, got " + std::to_string(joints));
}

// NTU RGB+D 25-joint Kinect v2 skeleton (0-based).
const std::vector<std::pair<int, int>>& ntu_edges() {
  static const std::vector<std::pair<int, int>> edges = {
      {0, 1},   {1, 20},  {2, 20},  {3, 2},   {4, 20},  {5, 4},   {6, 5},  {7, 6},
      {8, 20},  {9, 8},   {10, 9},  {11, 10}, {12, 0},  {13, 12}, {14, 13}, {15, 14},
      {16, 0},  {17, 16}, {18, 17}, {19, 18}, {21, 22}, {22, 7},  {23, 24}, {24, 11}};
  return edges;
}

}  // namespace

JointGraph layout_graph(const std::string& layout, int joints) {
  if (layout == kLayoutNtu25) {
    if (joints != 25) throw ConfigError("ntu25 layout requires 25 joints");
    return JointGraph::from_edges(25, ntu_edges(), 20);
  }
  if (layout == kLayoutSynthetic) {
    require_synthetic_joints(joints);
    const int m = joints / 5;
    // Trunk chain 0..m-1 rooted at 0; arms hang from the top of the trunk, legs from the root.
    std::vector<std::pair<int, int>> edges;
    for (int k = 1; k < m; ++k) edges.emplace_back(k, k - 1);
    const int top = m - 1;
    const std::array<int, 4> anchor{top, top, 0, 0};
    for (int limb = 0; limb < 4; ++limb) {
      const int first = m * (limb + 1);
      edges.emplace_back(first, anchor[limb]);
      for (int k = 1; k < m; ++k) edges.emplace_back(first + k, first + k - 1);
    }
    return JointGraph::from_edges(joints, edges, 0);
  }
  throw ConfigError("unknown skeleton layout '" + layout + "'");
}

BodyPartition default_partition(int joints, const std::string& layout) {
  if (layout == kLayoutNtu25) {
    if (joints != 25) throw ConfigError("ntu25 layout requires 25 joints");
    return BodyPartition({std::vector<int>{4, 5, 6, 7, 21, 22}, std::vector<int>{8, 9, 10, 11, 23, 24},
                          std::vector<int>{12, 13, 14, 15}, std::vector<int>{16, 17, 18, 19},
                          std::vector<int>{0, 1, 2, 3, 20}},
                         25);
  }
  if (layout == kLayoutSynthetic) {
    require_synthetic_joints(joints);
    const int m = joints / 5;
    std::array<std::vector<int>, BodyPartition::kParts> parts;
    // Joint blocks are trunk, left-arm, right-arm, left-leg, right-leg; parts are ordered arms, legs, trunk.
    for (int k = 0; k < m; ++k) {
      parts[4].push_back(k);
      for (int limb = 0; limb < 4; ++limb) parts[limb].push_back(m * (limb + 1) + k);
    }
    return BodyPartition(parts, joints);
  }
  throw ConfigError("unknown skeleton layout '" + layout + "'");
}

Eigen::MatrixXd synthetic_rest_pose(int joints) {
  require_synthetic_joints(joints);
  const int m = joints / 5;
  Eigen::MatrixXd pose = Eigen::MatrixXd::Zero(3, joints);
  for (int k = 0; k < m; ++k) {
    const double s = static_cast<double>(k + 1) / m;
    pose.col(k) << 0.0, 0.6 * static_cast<double>(k) / std::max(1, m - 1), 0.0;
    pose.col(m + k) << -0.2 - 0.3 * s, 0.6 - 0.35 * s, 0.0;
    pose.col(2 * m + k) << 0.2 + 0.3 * s, 0.6 - 0.35 * s, 0.0;
    pose.col(3 * m + k) << -0.15, -0.9 * s, 0.0;
    pose.col(4 * m + k) << 0.15, -0.9 * s, 0.0;
  }
  return pose;
}

}  // namespace tranclr
