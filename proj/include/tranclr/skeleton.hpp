#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace tranclr {

/// Rooted tree over the joints of a skeleton. parent[root] == -1.
class JointGraph {
 public:
  JointGraph() = default;

  /// Builds the tree from an undirected edge list; throws std::invalid_argument
  /// unless the edges form a spanning tree over `joints` vertices.
  static JointGraph from_edges(int joints, const std::vector<std::pair<int, int>>& edges, int root);

  int joints() const { return static_cast<int>(parent_.size()); }
  int root() const { return root_; }
  int parent(int v) const { return parent_[v]; }
  const std::vector<int>& parents() const { return parent_; }
  /// (child, parent) pairs, one per non-root joint.
  std::vector<std::pair<int, int>> edges() const;

  /// Symmetric-normalised adjacency D^-1/2 (A + I) D^-1/2.
  Eigen::MatrixXd normalized_adjacency() const;

  bool operator==(const JointGraph&) const = default;

 private:
  std::vector<int> parent_;
  int root_ = 0;
};

/// Motion array of shape C x T x V x P with validity metadata.
///
/// Storage is a (C, P*T*V) matrix; column ((p*T + t)*V + v) holds the
/// coordinates of joint v at frame t for person p. Frames at or beyond
/// valid_frames() are zero. Instances are immutable; operations return new
/// sequences.
class SkeletonSequence {
 public:
  SkeletonSequence() = default;
  SkeletonSequence(Eigen::MatrixXd data, int frames, int joints, int persons, int valid_frames,
                   JointGraph graph);

  /// All-zero sequence of the given shape, fully valid.
  static SkeletonSequence zeros(int channels, int frames, int joints, int persons, JointGraph graph);

  int channels() const { return static_cast<int>(data_.rows()); }
  int frames() const { return frames_; }
  int joints() const { return joints_; }
  int persons() const { return persons_; }
  int valid_frames() const { return valid_frames_; }
  const JointGraph& graph() const { return graph_; }
  const Eigen::MatrixXd& data() const { return data_; }

  Eigen::Index column(int t, int v, int p = 0) const {
    return (static_cast<Eigen::Index>(p) * frames_ + t) * joints_ + v;
  }
  double at(int c, int t, int v, int p = 0) const { return data_(c, column(t, v, p)); }

  bool same_shape(const SkeletonSequence& other) const {
    return channels() == other.channels() && frames_ == other.frames_ && joints_ == other.joints_ &&
           persons_ == other.persons_;
  }

 private:
  Eigen::MatrixXd data_;
  int frames_ = 0;
  int joints_ = 0;
  int persons_ = 0;
  int valid_frames_ = 0;
  JointGraph graph_;
};

/// Five named body parts; index order is left-arm, right-arm, left-leg, right-leg, trunk.
class BodyPartition {
 public:
  static constexpr int kParts = 5;
  static constexpr std::array<const char*, kParts> kNames{"left-arm", "right-arm", "left-leg",
                                                           "right-leg", "trunk"};

  BodyPartition() = default;
  /// Throws std::invalid_argument unless the lists are disjoint and cover 0..joints-1.
  BodyPartition(std::array<std::vector<int>, kParts> parts, int joints);

  int joints() const { return joints_; }
  const std::vector<int>& part(int p) const { return parts_[p]; }
  const std::array<std::vector<int>, kParts>& parts() const { return parts_; }

 private:
  std::array<std::vector<int>, kParts> parts_;
  int joints_ = 0;
};

enum class StreamKind { joint, motion, bone };

StreamKind parse_stream_kind(const std::string& name);
std::string to_string(StreamKind kind);

/// joint: copy; motion: forward difference with zero last valid frame;
/// bone: child minus parent with a zero root.
SkeletonSequence derive_stream(const SkeletonSequence& seq, StreamKind kind);

/// Linear interpolation of the valid range onto `target_frames` frames.
/// Endpoints are reproduced exactly; the result is fully valid.
SkeletonSequence temporal_resize(const SkeletonSequence& seq, int target_frames);

/// Same as temporal_resize but over the window [start, start + length) only.
SkeletonSequence resize_window(const SkeletonSequence& seq, int start, int length, int target_frames);

// Named layouts.
inline constexpr const char* kLayoutNtu25 = "ntu25";
inline constexpr const char* kLayoutSynthetic = "synthetic";

/// Joint tree for a layout ("ntu25" requires 25 joints; "synthetic" requires a multiple of 5).
JointGraph layout_graph(const std::string& layout, int joints);

/// Throws ConfigError for unknown layouts or incompatible joint counts.
BodyPartition default_partition(int joints, const std::string& layout);

/// Rest pose for the synthetic layout, 3 x V.
Eigen::MatrixXd synthetic_rest_pose(int joints);

}  // namespace tranclr
