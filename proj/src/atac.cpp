#include "tranclr/atac.hpp"

#include "tranclr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tranclr {

MixCoefficient::MixCoefficient(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) throw std::invalid_argument("mixing coefficient outside [0, 1]");
}

double SubstitutionMask::mean() const {
  if (grid.size() == 0) return 0.0;
  return static_cast<double>(grid.cast<long long>().sum()) / static_cast<double>(grid.size());
}

TransitionalAnchor global_interpolate(const SkeletonSequence& xi, const SkeletonSequence& xj, MixCoefficient lam) {
  if (!xi.same_shape(xj)) throw std::invalid_argument("global interpolation needs equally shaped sequences");
  const double a = lam.value();
  const int valid = std::min(xi.valid_frames(), xj.valid_frames());
  Eigen::MatrixXd out = a * xi.data() + (1.0 - a) * xj.data();
  for (int p = 0; p < xi.persons(); ++p)
    for (int t = valid; t < xi.frames(); ++t) out.middleCols(xi.column(t, 0, p), xi.joints()).setZero();
  return {SkeletonSequence(std::move(out), xi.frames(), xi.joints(), xi.persons(), valid, xi.graph()), lam,
          AnchorMode::global};
}

SubstitutionMask sample_substitution(Rng& rng, const SubstitutionParams& params, int total_frames, int n_parts,
                                     int grid_frames) {
  if (grid_frames < 0) grid_frames = total_frames;
  if (params.s_min < 1 || params.s_min > params.s_max || params.s_max > n_parts)
    throw ConfigError("part count range [" + std::to_string(params.s_min) + ", " + std::to_string(params.s_max) +
                      "] infeasible for " + std::to_string(n_parts) + " parts");
  if (params.t_min < 1 || params.t_min > params.t_max || params.t_max > total_frames)
    throw ConfigError("window length range [" + std::to_string(params.t_min) + ", " + std::to_string(params.t_max) +
                      "] infeasible for " + std::to_string(total_frames) + " frames");
  if (!(params.kappa_l > 0.0) || params.kappa_l > params.kappa_r)
    throw ConfigError("source scaling range [kappa_l, kappa_r] is empty");
  if (grid_frames < total_frames) throw ConfigError("mask grid narrower than the sampling range");

  SubstitutionMask mask;
  const int count = uniform_int(rng, params.s_min, params.s_max);
  std::vector<int> order(n_parts);
  std::iota(order.begin(), order.end(), 0);
  for (int k = 0; k < count; ++k) std::swap(order[k], order[uniform_int(rng, k, n_parts - 1)]);
  mask.parts.assign(order.begin(), order.begin() + count);
  std::sort(mask.parts.begin(), mask.parts.end());

  mask.window_length = uniform_int(rng, params.t_min, params.t_max);
  mask.window_start = uniform_int(rng, 0, total_frames - mask.window_length);

  const int lo = std::max(1, static_cast<int>(std::ceil(params.kappa_l * mask.window_length)));
  const int hi = std::min(total_frames, static_cast<int>(std::floor(params.kappa_r * mask.window_length)));
  if (lo > hi) throw ConfigError("source window length range is empty after clipping");
  mask.source_length = uniform_int(rng, lo, hi);
  mask.source_start = uniform_int(rng, 0, total_frames - mask.source_length);

  mask.grid.setZero(n_parts, grid_frames);
  for (int p : mask.parts) mask.grid.row(p).segment(mask.window_start, mask.window_length).setOnes();
  return mask;
}

TransitionalAnchor local_substitute(const SkeletonSequence& xi, const SkeletonSequence& xj,
                                    const SubstitutionMask& mask, const BodyPartition& partition) {
  if (!xi.same_shape(xj)) throw std::invalid_argument("local substitution needs equally shaped sequences");
  if (partition.joints() != xj.joints()) throw std::invalid_argument("partition does not match joint count");
  if (mask.grid.rows() != BodyPartition::kParts || mask.grid.cols() != xj.frames())
    throw std::invalid_argument("mask grid must be parts x frames");

  Eigen::MatrixXd out = xj.data();
  if (!mask.parts.empty() && mask.window_length > 0) {
    if (mask.window_start < 0 || mask.window_start + mask.window_length > xj.valid_frames())
      throw std::invalid_argument("mask window outside the base sequence's valid range");
    if (mask.source_length <= 0 || mask.source_start < 0 ||
        mask.source_start + mask.source_length > xi.valid_frames())
      throw std::invalid_argument("mask source window outside the donor sequence's valid range");
    for (int p : mask.parts)
      if (p < 0 || p >= BodyPartition::kParts || mask.grid.row(p).sum() != mask.window_length)
        throw std::invalid_argument("mask grid disagrees with its part list");

    const SkeletonSequence source =
        resize_window(xi, mask.source_start, mask.source_length, mask.window_length);
    for (int person = 0; person < xj.persons(); ++person)
      for (int k = 0; k < mask.window_length; ++k)
        for (int p : mask.parts)
          for (int v : partition.part(p))
            out.col(xj.column(mask.window_start + k, v, person)) = source.data().col(source.column(k, v, person));
  }
  return {SkeletonSequence(std::move(out), xj.frames(), xj.joints(), xj.persons(), xj.valid_frames(), xj.graph()),
          MixCoefficient(mask.mean()), AnchorMode::local};
}

TransitionalAnchor atac_with_draw(const SkeletonSequence& xi, const SkeletonSequence& xj, double p, Rng& rng,
                                  const AtacParams& params, const BodyPartition& partition) {
  if (!params.enable_global && !params.enable_local) throw ConfigError("both anchor branches are disabled");
  bool global = p < params.global_prob;
  if (!params.enable_local) global = true;
  if (!params.enable_global) global = false;
  if (global) return global_interpolate(xi, xj, MixCoefficient(uniform01(rng)));

  // Windows never leave either parent's valid range; long windows shrink to fit.
  const int usable = std::min(xi.valid_frames(), xj.valid_frames());
  SubstitutionParams local = params.local;
  local.t_max = std::min(local.t_max, usable);
  local.t_min = std::min(local.t_min, local.t_max);
  const SubstitutionMask mask = sample_substitution(rng, local, usable, BodyPartition::kParts, xj.frames());
  return local_substitute(xi, xj, mask, partition);
}

TransitionalAnchor atac(const SkeletonSequence& xi, const SkeletonSequence& xj, Rng& rng, const AtacParams& params,
                        const BodyPartition& partition) {
  const double p = uniform01(rng);
  return atac_with_draw(xi, xj, p, rng, params, partition);
}

}  // namespace tranclr
