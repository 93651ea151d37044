#pragma once

#include "tranclr/atac.hpp"
#include "tranclr/encoder.hpp"

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace tranclr {

enum class Level { intra, inter, cross };
std::string to_string(Level level);

enum class InterPairing { derangement, reverse };
InterPairing parse_inter_pairing(const std::string& name);
std::string to_string(InterPairing pairing);

/// Where a target key comes from. All keys are momentum-branch embeddings:
/// of the online-side view X^_i, the momentum-side view X~_i, or the i-th
/// momentum-side cross anchor.
struct KeyRef {
  enum class Source { online_view, momentum_view, momentum_anchor };
  Source source = Source::momentum_view;
  int index = 0;
  bool operator==(const KeyRef&) const = default;
};

struct AlignmentPair {
  SkeletonSequence query_seq;
  MixCoefficient query_lam;   // lambda recorded by the anchor fed to the online branch
  MixCoefficient target_lam;  // weight on target_keys[0]
  std::array<KeyRef, 2> target_keys;
  Level level = Level::intra;
  std::pair<int, int> parents{-1, -1};  // batch indices of the query anchor's parents
};

struct CompositionalScores {
  double k_h = 0;
  double k_c = 0;
  double lam_cross = 0;
};

/// Min-sum overlap of two anchors that share both parents, in same order (k_h)
/// and reversed order (k_c); lam_cross = k_h / (k_h + k_c).
CompositionalScores compositional_similarity(MixCoefficient lam1, MixCoefficient lam2);

/// Two augmented views per batch sample.
struct ViewBatch {
  std::vector<SkeletonSequence> online_views;    // X^
  std::vector<SkeletonSequence> momentum_views;  // X~
  int size() const { return static_cast<int>(online_views.size()); }
};

struct AnchorContext {
  const AtacParams& atac;
  const BodyPartition& partition;
};

std::vector<AlignmentPair> build_intra(const ViewBatch& views, Rng& rng, const AnchorContext& ctx);

/// Uniform random permutation without fixed points (rejection sampling); n >= 2.
std::vector<int> sample_derangement(int n, Rng& rng);

std::vector<AlignmentPair> build_inter(const ViewBatch& views, Rng& rng, InterPairing pairing,
                                       const AnchorContext& ctx);

struct CrossLevel {
  std::vector<AlignmentPair> pairs;
  /// A~(2)_i anchors fed to the momentum branch; KeyRef::momentum_anchor indexes this list.
  std::vector<TransitionalAnchor> momentum_anchors;
};

/// Pairs sample i with N-1-i (0-based). An odd batch's centre is skipped.
CrossLevel build_cross(const ViewBatch& views, Rng& rng, const AnchorContext& ctx);

/// Momentum-branch embeddings every KeyRef may point at, one column each.
template <typename Scalar>
struct KeyBank {
  Matrix<Scalar> online_view_keys;
  Matrix<Scalar> momentum_view_keys;
  Matrix<Scalar> anchor_keys;
  Vector<Scalar> momentum_view_stats;  // batch statistics of the momentum-view forward

  auto key(const KeyRef& ref) const {
    switch (ref.source) {
      case KeyRef::Source::online_view: return online_view_keys.col(ref.index);
      case KeyRef::Source::momentum_view: return momentum_view_keys.col(ref.index);
      case KeyRef::Source::momentum_anchor: break;
    }
    return anchor_keys.col(ref.index);
  }
};

/// lam * k_a + (1 - lam) * k_b renormalised to unit length.
template <typename Scalar>
Vector<Scalar> mix_target(const AlignmentPair& pair, const KeyBank<Scalar>& bank) {
  const Scalar lam = static_cast<Scalar>(pair.target_lam.value());
  Vector<Scalar> t = lam * bank.key(pair.target_keys[0]) + (Scalar(1) - lam) * bank.key(pair.target_keys[1]);
  const Scalar norm = t.norm();
  if (norm == Scalar(0)) return bank.key(pair.target_keys[0]);
  return t / norm;
}

/// Builds the key bank for a view batch (and optional cross anchors) with the
/// momentum branch in training mode: each group is normalised with its own batch statistics.
template <typename Scalar>
KeyBank<Scalar> momentum_keys(const ModelPair<Scalar>& model, const ViewBatch& views,
                              const std::vector<TransitionalAnchor>& anchors) {
  KeyBank<Scalar> bank;
  bank.online_view_keys = encode(model, Branch::momentum, views.online_views, NormMode::batch);
  auto keys = run_branch(model, Branch::momentum, pack_batch<Scalar>(views.momentum_views), NormMode::batch);
  bank.momentum_view_keys = std::move(keys.embeddings);
  bank.momentum_view_stats = std::move(keys.batch_stats);
  if (!anchors.empty()) {
    std::vector<SkeletonSequence> seqs;
    for (const auto& a : anchors) seqs.push_back(a.seq);
    bank.anchor_keys = encode(model, Branch::momentum, seqs, NormMode::batch);
  }
  return bank;
}

/// (query embedding, target embedding) per pair. Queries use the online branch;
/// targets are momentum-branch mixtures and carry no gradient.
template <typename Scalar>
std::vector<std::pair<Vector<Scalar>, Vector<Scalar>>> mgmc_targets(
    const std::vector<AlignmentPair>& pairs, const ModelPair<Scalar>& model, const ViewBatch& views,
    const std::vector<TransitionalAnchor>& anchors = {}) {
  std::vector<std::pair<Vector<Scalar>, Vector<Scalar>>> out;
  if (pairs.empty()) return out;
  const KeyBank<Scalar> bank = momentum_keys(model, views, anchors);
  std::vector<SkeletonSequence> queries;
  for (const auto& p : pairs) queries.push_back(p.query_seq);
  const Matrix<Scalar> q = encode(model, Branch::online, queries, NormMode::batch);
  for (std::size_t i = 0; i < pairs.size(); ++i) out.emplace_back(q.col(i), mix_target(pairs[i], bank));
  return out;
}

}  // namespace tranclr
