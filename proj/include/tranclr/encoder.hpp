#pragma once

#include "tranclr/random.hpp"
#include "tranclr/skeleton.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tranclr {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Spatio-temporal graph-convolutional backbone plus a 2-layer projector.
///
/// The input is batch-normalised per (channel, joint). Each graph block is a
/// 1x1 channel mix, a joint mix with the normalised adjacency, BatchNorm, ReLU,
/// a strided temporal convolution, BatchNorm, an identity residual when shapes
/// allow, and ReLU. The backbone ends with global average pooling over
/// persons, frames and joints followed by a linear layer to feature_dim.
struct EncoderConfig {
  int in_channels = 3;
  std::vector<int> stage_channels{16, 16, 16, 16, 32, 32, 32, 64, 64, 64};
  std::vector<int> stage_strides{1, 1, 1, 1, 2, 1, 1, 2, 1, 1};
  int temporal_kernel = 9;
  int feature_dim = 256;
  int projection_dim = 128;

  /// Quarter-width ST-GCN stack with 16 hidden channels.
  static EncoderConfig paper() { return {}; }
  /// Two blocks, hidden 8, 64-d features, 32-d projections.
  static EncoderConfig desk() {
    EncoderConfig c;
    c.stage_channels = {8, 16};
    c.stage_strides = {2, 2};
    c.feature_dim = 64;
    c.projection_dim = 32;
    return c;
  }

  void validate() const {
    if (in_channels <= 0 || feature_dim <= 0 || projection_dim <= 0)
      throw std::invalid_argument("encoder dimensions must be positive");
    if (stage_channels.empty() || stage_channels.size() != stage_strides.size())
      throw std::invalid_argument("encoder needs one stride per stage");
    for (std::size_t b = 0; b < stage_channels.size(); ++b)
      if (stage_channels[b] <= 0 || stage_strides[b] <= 0)
        throw std::invalid_argument("encoder stage channels and strides must be positive");
    if (temporal_kernel <= 0 || temporal_kernel % 2 == 0)
      throw std::invalid_argument("temporal kernel must be a positive odd size");
  }

  bool operator==(const EncoderConfig&) const = default;
};

/// How BatchNorm layers normalise: with the statistics of the current batch
/// (training) or with stored running statistics (inference).
enum class NormMode { batch, running };

/// Offsets of every trainable tensor inside the flat parameter vector, and of
/// the BatchNorm running statistics inside the separate buffer vector.
struct ParameterLayout {
  struct Slot {
    Eigen::Index offset = 0, rows = 0, cols = 0;
    Eigen::Index size() const { return rows * cols; }
  };
  /// gamma/beta are (rows, groups); column j of the activation belongs to
  /// group j % groups. Buffers hold the running mean then the running variance.
  struct Norm {
    Slot gamma, beta;
    Eigen::Index stat_offset = 0;
    Eigen::Index stat_size() const { return gamma.size(); }
  };
  struct Block {
    Slot spatial_w, temporal_w;
    Norm spatial_norm, temporal_norm;
    int in_channels = 0, out_channels = 0, stride = 1;
    bool residual = false;
  };
  Norm input_norm;
  std::vector<Block> blocks;
  Slot fc_w, fc_b, proj1_w, proj1_b, proj2_w, proj2_b;
  Eigen::Index size = 0;
  Eigen::Index buffer_size = 0;

  ParameterLayout() = default;
  ParameterLayout(const EncoderConfig& cfg, int joints) {
    auto take = [this](Eigen::Index rows, Eigen::Index cols) {
      Slot s{size, rows, cols};
      size += rows * cols;
      return s;
    };
    auto norm = [&](Eigen::Index rows, Eigen::Index groups) {
      Norm n{take(rows, groups), take(rows, groups), buffer_size};
      buffer_size += 2 * rows * groups;
      return n;
    };
    input_norm = norm(cfg.in_channels, joints);
    int channels = cfg.in_channels;
    for (std::size_t b = 0; b < cfg.stage_channels.size(); ++b) {
      Block blk;
      blk.in_channels = channels;
      blk.out_channels = cfg.stage_channels[b];
      blk.stride = cfg.stage_strides[b];
      blk.residual = blk.in_channels == blk.out_channels && blk.stride == 1;
      blk.spatial_w = take(blk.out_channels, blk.in_channels);
      blk.spatial_norm = norm(blk.out_channels, 1);
      blk.temporal_w = take(blk.out_channels, static_cast<Eigen::Index>(cfg.temporal_kernel) * blk.out_channels);
      blk.temporal_norm = norm(blk.out_channels, 1);
      blocks.push_back(blk);
      channels = blk.out_channels;
    }
    fc_w = take(cfg.feature_dim, channels);
    fc_b = take(cfg.feature_dim, 1);
    proj1_w = take(cfg.feature_dim, cfg.feature_dim);
    proj1_b = take(cfg.feature_dim, 1);
    proj2_w = take(cfg.projection_dim, cfg.feature_dim);
    proj2_b = take(cfg.projection_dim, 1);
  }
};

/// Input batch: `samples` sequences of `persons` bodies, laid out as
/// (C, N*P*T*V) with each sample's columns contiguous.
template <typename Scalar>
struct EncoderBatch {
  Matrix<Scalar> data;
  int samples = 0;
  int persons = 1;
  int frames = 0;
  int joints = 0;
};

template <typename Scalar>
EncoderBatch<Scalar> pack_batch(std::span<const SkeletonSequence* const> sequences) {
  if (sequences.empty()) throw std::invalid_argument("cannot pack an empty batch");
  const SkeletonSequence& first = *sequences.front();
  EncoderBatch<Scalar> batch;
  batch.samples = static_cast<int>(sequences.size());
  batch.persons = first.persons();
  batch.frames = first.frames();
  batch.joints = first.joints();
  const Eigen::Index width = first.data().cols();
  batch.data.resize(first.channels(), width * batch.samples);
  for (int n = 0; n < batch.samples; ++n) {
    if (!sequences[n]->same_shape(first)) throw std::invalid_argument("batch sequences differ in shape");
    batch.data.middleCols(n * width, width) = sequences[n]->data().template cast<Scalar>();
  }
  return batch;
}

template <typename Scalar>
EncoderBatch<Scalar> pack_batch(const std::vector<SkeletonSequence>& sequences) {
  std::vector<const SkeletonSequence*> ptrs;
  ptrs.reserve(sequences.size());
  for (const auto& s : sequences) ptrs.push_back(&s);
  return pack_batch<Scalar>(std::span<const SkeletonSequence* const>(ptrs));
}

template <typename Scalar>
class GraphEncoder {
 public:
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;

  static constexpr double kNormEps = 1e-5;
  static constexpr double kNormMomentum = 0.1;

  struct NormCache {
    Mat normalized;  // x_hat viewed as (rows*groups, M)
    Vec inv_std;     // (rows*groups)
  };
  struct BlockCache {
    Mat input;    // (Cin, I*Tin*V)
    Mat spatial;  // ReLU(norm(joint-mixed channel mix)), (Cout, I*Tin*V)
    Mat columns;  // im2col of `spatial`, (K*Cout, I*Tout*V)
    Mat output;   // (Cout, I*Tout*V)
    NormCache spatial_norm, temporal_norm;
    int frames_in = 0, frames_out = 0;
  };
  struct Cache {
    NormCache input_norm;
    std::vector<BlockCache> blocks;
    Mat pooled;     // (C_last, N)
    Mat features;   // (feature_dim, N)
    Mat hidden;     // (feature_dim, N) after ReLU
    Mat projected;  // (projection_dim, N) before normalisation
    NormMode mode = NormMode::batch;
    int samples = 0, persons = 1, joints = 0;
  };
  struct Output {
    Mat features;     // backbone features, one column per sample
    Mat embeddings;   // unit-norm projections, one column per sample
    Vec batch_stats;  // batch mean / unbiased variance per norm (batch mode only)
    Cache cache;      // populated only when requested
  };

  GraphEncoder() = default;
  GraphEncoder(EncoderConfig config, Mat adjacency)
      : config_(std::move(config)),
        layout_(validated(config_), static_cast<int>(adjacency.rows())),
        adjacency_(std::move(adjacency)) {
    if (adjacency_.rows() != adjacency_.cols()) throw std::invalid_argument("adjacency must be square");
  }

  const EncoderConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  const Mat& adjacency() const { return adjacency_; }
  Eigen::Index parameter_count() const { return layout_.size; }
  Eigen::Index buffer_count() const { return layout_.buffer_size; }
  int joints() const { return static_cast<int>(adjacency_.rows()); }

  /// He-normal weights, zero biases, unit gamma and zero beta.
  Vec initial_parameters(Rng& rng) const {
    Vec params = Vec::Zero(layout_.size);
    auto fill = [&](const ParameterLayout::Slot& s, double fan_in) {
      std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / fan_in));
      for (Eigen::Index k = 0; k < s.size(); ++k) params(s.offset + k) = static_cast<Scalar>(gauss(rng));
    };
    auto unit = [&](const ParameterLayout::Norm& n) { params.segment(n.gamma.offset, n.gamma.size()).setOnes(); };
    unit(layout_.input_norm);
    for (const auto& blk : layout_.blocks) {
      fill(blk.spatial_w, blk.in_channels);
      fill(blk.temporal_w, static_cast<double>(config_.temporal_kernel) * blk.out_channels);
      unit(blk.spatial_norm);
      unit(blk.temporal_norm);
    }
    fill(layout_.fc_w, layout_.fc_w.cols);
    fill(layout_.proj1_w, layout_.proj1_w.cols);
    fill(layout_.proj2_w, layout_.proj2_w.cols);
    return params;
  }

  /// Running means 0, running variances 1.
  Vec initial_buffers() const {
    Vec buffers = Vec::Zero(layout_.buffer_size);
    auto unit_var = [&](const ParameterLayout::Norm& n) {
      buffers.segment(n.stat_offset + n.stat_size(), n.stat_size()).setOnes();
    };
    unit_var(layout_.input_norm);
    for (const auto& blk : layout_.blocks) {
      unit_var(blk.spatial_norm);
      unit_var(blk.temporal_norm);
    }
    return buffers;
  }

  /// running <- (1 - momentum) * running + momentum * batch_stats.
  static void update_running(Vec& running, const Vec& batch_stats, Scalar momentum = Scalar(kNormMomentum)) {
    if (running.size() != batch_stats.size()) throw std::invalid_argument("running statistics are misaligned");
    running = (Scalar(1) - momentum) * running + momentum * batch_stats;
  }

  /// `running` is required in running mode and ignored in batch mode.
  Output forward(const Vec& params, const EncoderBatch<Scalar>& batch, NormMode mode, const Vec* running = nullptr,
                 bool keep_cache = false) const {
    check_batch(params, batch);
    if (mode == NormMode::running && (running == nullptr || running->size() != layout_.buffer_size))
      throw std::invalid_argument("running-statistics forward needs a matching buffer vector");
    const int V = batch.joints;
    const int instances = batch.samples * batch.persons;
    const int K = config_.temporal_kernel, pad = (K - 1) / 2;

    Output result;
    if (mode == NormMode::batch) result.batch_stats = Vec::Zero(layout_.buffer_size);
    Cache cache;
    cache.mode = mode;
    cache.samples = batch.samples;
    cache.persons = batch.persons;
    cache.joints = V;
    Mat x = batch.data;
    normalize(params, layout_.input_norm, x, mode, running, result.batch_stats, cache.input_norm);
    int frames = batch.frames;
    for (const auto& blk : layout_.blocks) {
      BlockCache bc;
      bc.frames_in = frames;
      const int frames_out = (frames + 2 * pad - K) / blk.stride + 1;
      if (frames_out <= 0) throw std::invalid_argument("sequence too short for the temporal strides");
      bc.frames_out = frames_out;

      const Mat mixed = slot(params, blk.spatial_w) * x;
      Mat spatial(mixed.rows(), mixed.cols());
      const Eigen::Index groups = mixed.cols() / V;
      for (Eigen::Index g = 0; g < groups; ++g)
        spatial.middleCols(g * V, V) = mixed.middleCols(g * V, V).lazyProduct(adjacency_);
      normalize(params, blk.spatial_norm, spatial, mode, running, result.batch_stats, bc.spatial_norm);
      spatial = spatial.cwiseMax(Scalar(0));

      Mat columns = im2col(spatial, instances, frames, frames_out, V, blk.stride);
      Mat out = slot(params, blk.temporal_w) * columns;
      normalize(params, blk.temporal_norm, out, mode, running, result.batch_stats, bc.temporal_norm);
      if (blk.residual) out += x;
      out = out.cwiseMax(Scalar(0));

      if (keep_cache) {
        bc.input = std::move(x);
        bc.spatial = std::move(spatial);
        bc.columns = std::move(columns);
        bc.output = out;
        cache.blocks.push_back(std::move(bc));
      }
      x = std::move(out);
      frames = frames_out;
    }

    const Eigen::Index per_sample = static_cast<Eigen::Index>(batch.persons) * frames * V;
    Mat pooled(x.rows(), batch.samples);
    for (int n = 0; n < batch.samples; ++n) pooled.col(n) = x.middleCols(n * per_sample, per_sample).rowwise().mean();

    result.features = slot(params, layout_.fc_w) * pooled;
    result.features.colwise() += slot(params, layout_.fc_b).col(0);
    Mat hidden = slot(params, layout_.proj1_w) * result.features;
    hidden.colwise() += slot(params, layout_.proj1_b).col(0);
    hidden = hidden.cwiseMax(Scalar(0));
    Mat projected = slot(params, layout_.proj2_w) * hidden;
    projected.colwise() += slot(params, layout_.proj2_b).col(0);
    result.embeddings = projected.colwise().normalized();
    if (keep_cache) {
      cache.pooled = std::move(pooled);
      cache.features = result.features;
      cache.hidden = std::move(hidden);
      cache.projected = std::move(projected);
      result.cache = std::move(cache);
    }
    return result;
  }

  /// Back-propagates d(loss)/d(embeddings) and accumulates into `grad`.
  void backward(const Vec& params, const Cache& cache, const Mat& d_embeddings, Vec& grad) const {
    if (grad.size() != layout_.size) grad = Vec::Zero(layout_.size);
    if (cache.blocks.size() != layout_.blocks.size()) throw std::invalid_argument("backward needs a forward cache");
    const int V = cache.joints;
    const int instances = cache.samples * cache.persons;

    // Through the column-wise L2 normalisation.
    Mat d_proj(d_embeddings.rows(), d_embeddings.cols());
    for (Eigen::Index n = 0; n < d_embeddings.cols(); ++n) {
      const Scalar norm = cache.projected.col(n).norm();
      const Vec z = cache.projected.col(n) / norm;
      d_proj.col(n) = (d_embeddings.col(n) - z * z.dot(d_embeddings.col(n))) / norm;
    }
    accumulate_linear(grad, layout_.proj2_w, &layout_.proj2_b, d_proj, cache.hidden);
    Mat d_hidden = slot(params, layout_.proj2_w).transpose() * d_proj;
    d_hidden = (cache.hidden.array() > Scalar(0)).select(d_hidden, Scalar(0));
    accumulate_linear(grad, layout_.proj1_w, &layout_.proj1_b, d_hidden, cache.features);
    Mat d_features = slot(params, layout_.proj1_w).transpose() * d_hidden;
    accumulate_linear(grad, layout_.fc_w, &layout_.fc_b, d_features, cache.pooled);
    const Mat d_pooled = slot(params, layout_.fc_w).transpose() * d_features;

    const BlockCache& last = cache.blocks.back();
    const Eigen::Index per_sample = static_cast<Eigen::Index>(cache.persons) * last.frames_out * V;
    Mat d_x(last.output.rows(), last.output.cols());
    for (int n = 0; n < cache.samples; ++n)
      d_x.middleCols(n * per_sample, per_sample) =
          (d_pooled.col(n) / static_cast<Scalar>(per_sample)).replicate(1, per_sample);

    const Mat adjacency_t = adjacency_.transpose();
    for (std::size_t b = layout_.blocks.size(); b-- > 0;) {
      const auto& blk = layout_.blocks[b];
      const BlockCache& bc = cache.blocks[b];
      Mat d_out = (bc.output.array() > Scalar(0)).select(d_x, Scalar(0));
      Mat d_temporal = d_out;
      normalize_backward(params, blk.temporal_norm, bc.temporal_norm, cache.mode, d_temporal, grad);
      accumulate_linear(grad, blk.temporal_w, nullptr, d_temporal, bc.columns);
      const Mat d_columns = slot(params, blk.temporal_w).transpose() * d_temporal;
      Mat d_spatial = col2im(d_columns, instances, bc.frames_in, bc.frames_out, V, blk.stride, blk.out_channels);
      d_spatial = (bc.spatial.array() > Scalar(0)).select(d_spatial, Scalar(0));
      normalize_backward(params, blk.spatial_norm, bc.spatial_norm, cache.mode, d_spatial, grad);
      Mat d_mixed(d_spatial.rows(), d_spatial.cols());
      const Eigen::Index groups = d_spatial.cols() / V;
      for (Eigen::Index g = 0; g < groups; ++g)
        d_mixed.middleCols(g * V, V) = d_spatial.middleCols(g * V, V).lazyProduct(adjacency_t);
      accumulate_linear(grad, blk.spatial_w, nullptr, d_mixed, bc.input);
      Mat d_in = slot(params, blk.spatial_w).transpose() * d_mixed;
      if (blk.residual) d_in += d_out;
      d_x = std::move(d_in);
    }
    normalize_backward(params, layout_.input_norm, cache.input_norm, cache.mode, d_x, grad);
  }

 private:
  static const EncoderConfig& validated(const EncoderConfig& c) {
    c.validate();
    return c;
  }

  void check_batch(const Vec& params, const EncoderBatch<Scalar>& batch) const {
    if (params.size() != layout_.size) throw std::invalid_argument("parameter vector has the wrong size");
    if (batch.data.rows() != config_.in_channels) throw std::invalid_argument("input channel count mismatch");
    if (batch.joints != joints()) throw std::invalid_argument("input joint count differs from the adjacency");
    if (batch.data.cols() != static_cast<Eigen::Index>(batch.samples) * batch.persons * batch.frames * batch.joints)
      throw std::invalid_argument("batch data does not match its declared shape");
  }

  static Eigen::Map<const Mat> slot(const Vec& params, const ParameterLayout::Slot& s) {
    return Eigen::Map<const Mat>(params.data() + s.offset, s.rows, s.cols);
  }

  // A column-major (R, B*G) activation whose column j belongs to group j % G
  // is, memory-wise, an (R*G, B) matrix with one row per (channel, group).
  static Eigen::Map<Mat> grouped(Mat& x, Eigen::Index rows_x_groups) {
    return Eigen::Map<Mat>(x.data(), rows_x_groups, x.size() / rows_x_groups);
  }

  static void normalize(const Vec& params, const ParameterLayout::Norm& n, Mat& x, NormMode mode, const Vec* running,
                        Vec& batch_stats, NormCache& nc) {
    const Eigen::Index S = n.stat_size();
    auto view = grouped(x, S);
    const Eigen::Index M = view.cols();
    Vec mean, var;
    if (mode == NormMode::batch) {
      if (M < 2) throw std::invalid_argument("batch normalisation needs at least two values per channel");
      mean = view.rowwise().mean();
      view.colwise() -= mean;
      var = view.rowwise().squaredNorm() / static_cast<Scalar>(M);
      batch_stats.segment(n.stat_offset, S) = mean;
      batch_stats.segment(n.stat_offset + S, S) = var * (static_cast<Scalar>(M) / static_cast<Scalar>(M - 1));
    } else {
      mean = running->segment(n.stat_offset, S);
      var = running->segment(n.stat_offset + S, S);
      view.colwise() -= mean;
    }
    nc.inv_std = (var.array() + Scalar(kNormEps)).rsqrt().matrix();
    view = view.array().colwise() * nc.inv_std.array();
    nc.normalized = view;
    const auto gamma = params.segment(n.gamma.offset, S).array();
    const auto beta = params.segment(n.beta.offset, S);
    view = view.array().colwise() * gamma;
    view.colwise() += beta;
  }

  static void normalize_backward(const Vec& params, const ParameterLayout::Norm& n, const NormCache& nc,
                                 NormMode mode, Mat& d, Vec& grad) {
    const Eigen::Index S = n.stat_size();
    auto dy = grouped(d, S);
    const Mat& xh = nc.normalized;
    const Vec d_beta = dy.rowwise().sum();
    const Vec d_gamma = (dy.array() * xh.array()).rowwise().sum().matrix();
    grad.segment(n.gamma.offset, S) += d_gamma;
    grad.segment(n.beta.offset, S) += d_beta;
    const Vec scale = (params.segment(n.gamma.offset, S).array() * nc.inv_std.array()).matrix();
    if (mode == NormMode::batch) {
      // dx = gamma * inv_std * (dy - mean(dy) - x_hat * mean(dy * x_hat)).
      const Scalar M = static_cast<Scalar>(dy.cols());
      const Vec mean_dy = d_beta / M, mean_dyx = d_gamma / M;
      dy.colwise() -= mean_dy;
      dy -= (xh.array().colwise() * mean_dyx.array()).matrix();
    }
    dy = dy.array().colwise() * scale.array();
  }

  static void accumulate_linear(Vec& grad, const ParameterLayout::Slot& w, const ParameterLayout::Slot* b,
                                const Mat& d_out, const Mat& input) {
    Eigen::Map<Mat>(grad.data() + w.offset, w.rows, w.cols).noalias() += d_out * input.transpose();
    if (b != nullptr) Eigen::Map<Mat>(grad.data() + b->offset, b->rows, 1) += d_out.rowwise().sum();
  }

  Mat im2col(const Mat& x, int instances, int frames_in, int frames_out, int V, int stride) const {
    const int K = config_.temporal_kernel, pad = (K - 1) / 2;
    const Eigen::Index C = x.rows();
    Mat cols = Mat::Zero(K * C, static_cast<Eigen::Index>(instances) * frames_out * V);
    for (int i = 0; i < instances; ++i)
      for (int to = 0; to < frames_out; ++to)
        for (int k = 0; k < K; ++k) {
          const int src = to * stride + k - pad;
          if (src < 0 || src >= frames_in) continue;
          cols.block(k * C, (static_cast<Eigen::Index>(i) * frames_out + to) * V, C, V) =
              x.middleCols((static_cast<Eigen::Index>(i) * frames_in + src) * V, V);
        }
    return cols;
  }

  Mat col2im(const Mat& cols, int instances, int frames_in, int frames_out, int V, int stride, Eigen::Index C) const {
    const int K = config_.temporal_kernel, pad = (K - 1) / 2;
    Mat x = Mat::Zero(C, static_cast<Eigen::Index>(instances) * frames_in * V);
    for (int i = 0; i < instances; ++i)
      for (int to = 0; to < frames_out; ++to)
        for (int k = 0; k < K; ++k) {
          const int src = to * stride + k - pad;
          if (src < 0 || src >= frames_in) continue;
          x.middleCols((static_cast<Eigen::Index>(i) * frames_in + src) * V, V) +=
              cols.block(k * C, (static_cast<Eigen::Index>(i) * frames_out + to) * V, C, V);
        }
    return x;
  }

  EncoderConfig config_;
  ParameterLayout layout_;
  Mat adjacency_;
};

enum class Branch { online, momentum };

/// Online and momentum parameter sets over one shared architecture, each with
/// its own BatchNorm running statistics.
template <typename Scalar>
struct ModelPair {
  GraphEncoder<Scalar> encoder;
  Vector<Scalar> online;
  Vector<Scalar> momentum;
  Scalar m = Scalar(0.999);
  Vector<Scalar> online_stats;
  Vector<Scalar> momentum_stats;

  /// Fresh pair; the momentum copy starts bitwise equal to the online one.
  static ModelPair create(const EncoderConfig& config, const JointGraph& graph, Rng& rng, Scalar m) {
    GraphEncoder<Scalar> enc(config, graph.normalized_adjacency().cast<Scalar>());
    Vector<Scalar> params = enc.initial_parameters(rng);
    Vector<Scalar> stats = enc.initial_buffers();
    return ModelPair{std::move(enc), params, params, m, stats, stats};
  }

  const Vector<Scalar>& parameters(Branch b) const { return b == Branch::online ? online : momentum; }
  const Vector<Scalar>& stats(Branch b) const { return b == Branch::online ? online_stats : momentum_stats; }
  Vector<Scalar>& stats(Branch b) { return b == Branch::online ? online_stats : momentum_stats; }
};

/// One branch over a sequence batch. Running mode reads the branch's stored statistics.
template <typename Scalar>
typename GraphEncoder<Scalar>::Output run_branch(const ModelPair<Scalar>& pair, Branch branch,
                                                 const EncoderBatch<Scalar>& batch, NormMode mode,
                                                 bool keep_cache = false) {
  return pair.encoder.forward(pair.parameters(branch), batch, mode, &pair.stats(branch), keep_cache);
}

/// Unit-norm embeddings, one column per sequence.
template <typename Scalar>
Matrix<Scalar> encode(const ModelPair<Scalar>& pair, Branch branch, const std::vector<SkeletonSequence>& batch,
                      NormMode mode = NormMode::running) {
  return run_branch(pair, branch, pack_batch<Scalar>(batch), mode).embeddings;
}

/// Backbone features (pre-projection), one column per sequence.
template <typename Scalar>
Matrix<Scalar> backbone_features(const ModelPair<Scalar>& pair, Branch branch,
                                 const std::vector<SkeletonSequence>& batch, NormMode mode = NormMode::running) {
  return run_branch(pair, branch, pack_batch<Scalar>(batch), mode).features;
}

/// theta_k <- m * theta_k + (1 - m) * theta_q. Running statistics are not mixed.
template <typename Scalar>
void momentum_update(ModelPair<Scalar>& pair) {
  if (pair.online.size() != pair.momentum.size()) throw std::invalid_argument("parameter sets are misaligned");
  pair.momentum = pair.m * pair.momentum + (Scalar(1) - pair.m) * pair.online;
}

}  // namespace tranclr
