#pragma once

#include "tranclr/encoder.hpp"
#include "tranclr/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace tranclr {

/// Fixed-capacity FIFO of unit-norm key embeddings (one column per key).
/// Logical position 0 is the oldest surviving key.
template <typename Scalar>
class MemoryQueue {
 public:
  static constexpr double kNormTolerance = 1e-6;

  MemoryQueue() = default;
  MemoryQueue(int capacity, int dim)
      : storage_(Matrix<Scalar>::Zero(dim, capacity)), norms_(Vector<Scalar>::Ones(capacity)) {
    if (capacity <= 0 || dim <= 0) throw std::invalid_argument("queue capacity and dimension must be positive");
  }

  int capacity() const { return static_cast<int>(storage_.cols()); }
  int dim() const { return static_cast<int>(storage_.rows()); }
  int fill() const { return fill_; }
  int head() const { return head_; }
  bool empty() const { return fill_ == 0; }

  int slot(int position) const { return (head_ - fill_ + position + capacity()) % capacity(); }
  auto entry(int position) const { return storage_.col(slot(position)); }
  Scalar entry_norm(int position) const { return norms_(slot(position)); }

  /// Keys in logical order, (dim, fill).
  Matrix<Scalar> entries() const {
    Matrix<Scalar> out(dim(), fill_);
    for (int j = 0; j < fill_; ++j) out.col(j) = entry(j);
    return out;
  }

  /// Appends keys (columns) in order, evicting the oldest once full.
  void enqueue(const Matrix<Scalar>& keys) {
    if (keys.rows() != dim()) throw std::invalid_argument("key dimension differs from queue dimension");
    for (Eigen::Index j = 0; j < keys.cols(); ++j)
      if (std::abs(static_cast<double>(keys.col(j).norm()) - 1.0) > kNormTolerance)
        throw ContractViolation("queue keys must have unit L2 norm");
    for (Eigen::Index j = 0; j < keys.cols(); ++j) {
      storage_.col(head_) = keys.col(j);
      norms_(head_) = keys.col(j).norm();
      head_ = (head_ + 1) % capacity();
      fill_ = std::min(fill_ + 1, capacity());
    }
  }

  // Raw state access for checkpoints.
  const Matrix<Scalar>& storage() const { return storage_; }
  void restore(Matrix<Scalar> storage, int head, int fill) {
    if (head < 0 || fill < 0 || fill > storage.cols() || head >= std::max<Eigen::Index>(storage.cols(), 1))
      throw std::invalid_argument("queue state out of range");
    storage_ = std::move(storage);
    norms_ = storage_.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < norms_.size(); ++j)
      if (norms_(j) == Scalar(0)) norms_(j) = Scalar(1);
    head_ = head;
    fill_ = fill;
  }

  bool operator==(const MemoryQueue& other) const {
    return head_ == other.head_ && fill_ == other.fill_ && storage_ == other.storage_;
  }

 private:
  Matrix<Scalar> storage_;
  Vector<Scalar> norms_;
  int head_ = 0;
  int fill_ = 0;
};

/// Logical queue positions of the selected neighbours, most similar first.
struct NeighborSet {
  std::vector<int> indices;
  int size() const { return static_cast<int>(indices.size()); }
};

template <typename Scalar>
Vector<Scalar> cosine_to_queue(const Vector<Scalar>& x, const MemoryQueue<Scalar>& queue) {
  const Vector<Scalar> raw = queue.storage().transpose() * x;
  Vector<Scalar> sims(queue.fill());
  const Scalar norm = x.norm();
  for (int j = 0; j < queue.fill(); ++j) sims(j) = raw(queue.slot(j)) / (norm * queue.entry_norm(j));
  return sims;
}

/// min(K, fill) positions with the largest cosine similarity to `target`;
/// ties go to the smaller position.
template <typename Scalar>
NeighborSet top_k(const Vector<Scalar>& target, const MemoryQueue<Scalar>& queue, int k) {
  if (queue.empty()) throw StateError("top-k on an empty memory queue");
  if (k <= 0) throw ConfigError("neighbour count K must be positive");
  const Vector<Scalar> sims = cosine_to_queue(target, queue);
  std::vector<int> order(queue.fill());
  std::iota(order.begin(), order.end(), 0);
  const int keep = std::min(k, queue.fill());
  std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                    [&](int a, int b) { return sims(a) > sims(b) || (sims(a) == sims(b) && a < b); });
  order.resize(keep);
  return {std::move(order)};
}

/// Loss value with gradients under the stop-gradient contract: targets and
/// queue entries are constants, so their gradients are identically zero.
template <typename Scalar>
struct LossGradient {
  Scalar value = 0;
  Vector<Scalar> d_query;
  Vector<Scalar> d_target;
  NeighborSet neighbors;
};

namespace detail {

// Cosine similarity of x to each selected key.
template <typename Scalar>
Vector<Scalar> selected_cosines(const Vector<Scalar>& x, const MemoryQueue<Scalar>& queue, const NeighborSet& set) {
  Vector<Scalar> s(set.size());
  const Scalar norm = x.norm();
  for (int j = 0; j < set.size(); ++j) {
    const auto m = queue.entry(set.indices[j]);
    s(j) = m.dot(x) / (norm * queue.entry_norm(set.indices[j]));
  }
  return s;
}

// d/dx of sum_j w_j * cos(x, m_j).
template <typename Scalar>
Vector<Scalar> cosine_pullback(const Vector<Scalar>& x, const MemoryQueue<Scalar>& queue, const NeighborSet& set,
                               const Vector<Scalar>& weights, const Vector<Scalar>& cosines) {
  const Scalar norm = x.norm();
  const Vector<Scalar> unit = x / norm;
  Vector<Scalar> g = Vector<Scalar>::Zero(x.size());
  Scalar radial = 0;
  for (int j = 0; j < set.size(); ++j) {
    const auto m = queue.entry(set.indices[j]);
    g += (weights(j) / queue.entry_norm(set.indices[j])) * m;
    radial += weights(j) * cosines(j);
  }
  return (g - radial * unit) / norm;
}

template <typename Scalar>
Vector<Scalar> log_softmax(const Vector<Scalar>& logits) {
  const Scalar top = logits.maxCoeff();
  const Scalar lse = top + std::log((logits.array() - top).exp().sum());
  return (logits.array() - lse).matrix();
}

}  // namespace detail

/// KL(softmax(p_k / tau_k) || softmax(p_q / tau_q)) over a given neighbour set.
template <typename Scalar>
LossGradient<Scalar> soft_align_loss(const Vector<Scalar>& query, const Vector<Scalar>& target,
                                     const MemoryQueue<Scalar>& queue, const NeighborSet& neighbors, Scalar tau_q,
                                     Scalar tau_k) {
  if (!(tau_q > 0) || !(tau_k > 0)) throw ConfigError("soft alignment temperatures must be positive");
  if (neighbors.size() == 0) throw ConfigError("soft alignment needs at least one neighbour");
  const Vector<Scalar> p_k = detail::selected_cosines(target, queue, neighbors);
  const Vector<Scalar> p_q = detail::selected_cosines(query, queue, neighbors);
  const Vector<Scalar> log_target = detail::log_softmax<Scalar>(p_k / tau_k);
  const Vector<Scalar> log_query = detail::log_softmax<Scalar>(p_q / tau_q);
  const Vector<Scalar> target_prob = log_target.array().exp();
  const Vector<Scalar> query_prob = log_query.array().exp();

  LossGradient<Scalar> out;
  // Rounding can leave a tiny negative value when the distributions coincide.
  out.value = std::max(Scalar(0), (target_prob.array() * (log_target - log_query).array()).sum());
  // dKL/dp_q = (softmax_q - softmax_k) / tau_q
  const Vector<Scalar> d_logits = (query_prob - target_prob) / tau_q;
  out.d_query = detail::cosine_pullback(query, queue, neighbors, d_logits, p_q);
  out.d_target = Vector<Scalar>::Zero(target.size());
  out.neighbors = neighbors;
  return out;
}

/// Selects the K neighbours of the target, then evaluates the KL alignment.
template <typename Scalar>
LossGradient<Scalar> soft_align_loss(const Vector<Scalar>& query, const Vector<Scalar>& target,
                                     const MemoryQueue<Scalar>& queue, int k, Scalar tau_q, Scalar tau_k) {
  if (k <= 0) throw ConfigError("neighbour count K must be positive");
  return soft_align_loss(query, target, queue, top_k(target, queue, k), tau_q, tau_k);
}

/// -log(exp(s+/tau) / (exp(s+/tau) + sum_j exp(s_j/tau))) against the whole queue.
template <typename Scalar>
LossGradient<Scalar> infonce_loss(const Vector<Scalar>& query, const Vector<Scalar>& key,
                                  const MemoryQueue<Scalar>& queue, Scalar tau) {
  if (!(tau > 0)) throw ConfigError("InfoNCE temperature must be positive");
  NeighborSet all;
  all.indices.resize(queue.fill());
  std::iota(all.indices.begin(), all.indices.end(), 0);
  const Vector<Scalar> negatives = detail::selected_cosines(query, queue, all);
  const Scalar qn = query.norm(), kn = key.norm();
  const Scalar positive = query.dot(key) / (qn * kn);

  Vector<Scalar> logits(negatives.size() + 1);
  logits(0) = positive / tau;
  logits.tail(negatives.size()) = negatives / tau;
  const Vector<Scalar> log_prob = detail::log_softmax<Scalar>(logits);
  const Vector<Scalar> prob = log_prob.array().exp();

  LossGradient<Scalar> out;
  out.value = -log_prob(0);
  // d/dlogit_0 = p_0 - 1, d/dlogit_j = p_j; chain through 1/tau and the cosines.
  const Vector<Scalar> unit = query / qn;
  const Vector<Scalar> key_unit = key / kn;
  Vector<Scalar> grad = ((prob(0) - Scalar(1)) / tau) * (key_unit - positive * unit) / qn;
  if (negatives.size() > 0)
    grad += detail::cosine_pullback(query, queue, all, Vector<Scalar>(prob.tail(negatives.size()) / tau), negatives);
  out.d_query = std::move(grad);
  out.d_target = Vector<Scalar>::Zero(key.size());
  return out;
}

}  // namespace tranclr
