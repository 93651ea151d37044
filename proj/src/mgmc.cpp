#include "tranclr/mgmc.hpp"

#include "tranclr/errors.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>
#include <stdexcept>

namespace tranclr {

std::string to_string(Level level) {
  switch (level) {
    case Level::intra: return "intra";
    case Level::inter: return "inter";
    case Level::cross: return "cross";
  }
  return "?";
}

InterPairing parse_inter_pairing(const std::string& name) {
  if (name == "derangement") return InterPairing::derangement;
  if (name == "reverse") return InterPairing::reverse;
  throw ConfigError("unknown inter-sample pairing '" + name + "'");
}

std::string to_string(InterPairing pairing) {
  return pairing == InterPairing::derangement ? "derangement" : "reverse";
}

CompositionalScores compositional_similarity(MixCoefficient lam1, MixCoefficient lam2) {
  const double a = lam1.value(), b = lam2.value();
  CompositionalScores s;
  s.k_h = std::min(a, b) + std::min(1.0 - a, 1.0 - b);
  s.k_c = std::min(a, 1.0 - b) + std::min(1.0 - a, b);
  assert(s.k_h + s.k_c >= 1.0 - 1e-12);
  s.lam_cross = s.k_h / (s.k_h + s.k_c);
  return s;
}

namespace {

void check_views(const ViewBatch& views) {
  if (views.online_views.size() != views.momentum_views.size())
    throw std::invalid_argument("online and momentum view batches differ in size");
}

KeyRef key(KeyRef::Source source, int index) { return KeyRef{source, index}; }

}  // namespace

std::vector<AlignmentPair> build_intra(const ViewBatch& views, Rng& rng, const AnchorContext& ctx) {
  check_views(views);
  std::vector<AlignmentPair> pairs;
  pairs.reserve(views.size());
  for (int i = 0; i < views.size(); ++i) {
    TransitionalAnchor a = atac(views.online_views[i], views.momentum_views[i], rng, ctx.atac, ctx.partition);
    pairs.push_back({std::move(a.seq), a.lam, a.lam,
                     {key(KeyRef::Source::online_view, i), key(KeyRef::Source::momentum_view, i)},
                     Level::intra, {i, i}});
  }
  return pairs;
}

std::vector<int> sample_derangement(int n, Rng& rng) {
  if (n < 2) throw ConfigError("a derangement needs at least two elements");
  std::vector<int> perm(n);
  for (;;) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int k = n - 1; k > 0; --k) std::swap(perm[k], perm[uniform_int(rng, 0, k)]);
    bool fixed = false;
    for (int k = 0; k < n && !fixed; ++k) fixed = perm[k] == k;
    if (!fixed) return perm;
  }
}

std::vector<AlignmentPair> build_inter(const ViewBatch& views, Rng& rng, InterPairing pairing,
                                       const AnchorContext& ctx) {
  check_views(views);
  const int n = views.size();
  if (n < 2) throw ConfigError("inter-sample alignment needs a batch of at least two");
  std::vector<int> partner(n);
  if (pairing == InterPairing::derangement) {
    partner = sample_derangement(n, rng);
  } else {
    for (int i = 0; i < n; ++i) partner[i] = n - 1 - i;
    if (n % 2 == 1) partner[n / 2] = (n / 2 + 1) % n;
  }
  std::vector<AlignmentPair> pairs;
  pairs.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int j = partner[i];
    TransitionalAnchor a = atac(views.online_views[i], views.online_views[j], rng, ctx.atac, ctx.partition);
    pairs.push_back({std::move(a.seq), a.lam, a.lam,
                     {key(KeyRef::Source::momentum_view, i), key(KeyRef::Source::momentum_view, j)},
                     Level::inter, {i, j}});
  }
  return pairs;
}

CrossLevel build_cross(const ViewBatch& views, Rng& rng, const AnchorContext& ctx) {
  check_views(views);
  const int n = views.size();
  if (n < 2) throw ConfigError("cross-anchor alignment needs a batch of at least two");
  constexpr int kMaxRedraws = 32;

  CrossLevel level;
  std::vector<int> position(n, -1);
  std::vector<TransitionalAnchor> online_anchors;
  std::vector<int> owner;
  for (int i = 0; i < n; ++i) {
    const int j = n - 1 - i;
    if (i == j) continue;
    TransitionalAnchor a1 = atac(views.online_views[i], views.online_views[j], rng, ctx.atac, ctx.partition);
    TransitionalAnchor a2 = atac(views.momentum_views[i], views.momentum_views[j], rng, ctx.atac, ctx.partition);
    for (int redraw = 0; redraw < kMaxRedraws && a2.lam == a1.lam; ++redraw)
      a2 = atac(views.momentum_views[i], views.momentum_views[j], rng, ctx.atac, ctx.partition);
    a1.parents = {i, j};
    a2.parents = {i, j};
    position[i] = static_cast<int>(level.momentum_anchors.size());
    level.momentum_anchors.push_back(std::move(a2));
    online_anchors.push_back(std::move(a1));
    owner.push_back(i);
  }
  for (std::size_t k = 0; k < online_anchors.size(); ++k) {
    const int i = owner[k], j = n - 1 - i;
    const TransitionalAnchor& a1 = online_anchors[k];
    const CompositionalScores s = compositional_similarity(a1.lam, level.momentum_anchors[position[i]].lam);
    level.pairs.push_back({a1.seq, a1.lam, MixCoefficient(s.lam_cross),
                           {key(KeyRef::Source::momentum_anchor, position[i]),
                            key(KeyRef::Source::momentum_anchor, position[j])},
                           Level::cross, a1.parents});
  }
  return level;
}

}  // namespace tranclr
