#include "tranclr/trainer.hpp"

#include "tranclr/augment.hpp"
#include "tranclr/checkpoint.hpp"
#include "tranclr/errors.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace tranclr {

using nlohmann::json;

TrainState initial_state(const RunConfig& config, const JointGraph& graph) {
  Rng init = make_stream(config.train.seed, {0});
  TrainState state{ModelPair<double>::create(config.encoder, graph, init, config.ema), {}, {}, 0, 0};
  state.velocity = Vector<double>::Zero(state.model.online.size());
  state.queue = MemoryQueue<double>(config.queue_capacity, config.encoder.projection_dim);
  return state;
}

StepPlan plan_step(const std::vector<SkeletonSequence>& batch, Rng& rng, const RunConfig& config,
                   const BodyPartition& partition) {
  if (batch.size() < 2) throw ConfigError("a training batch needs at least two samples");
  StepPlan plan;
  for (const auto& seq : batch) {
    plan.views.online_views.push_back(augment_view(seq, config.augment, rng));
    plan.views.momentum_views.push_back(augment_view(seq, config.augment, rng));
  }
  if (config.train.objective == Objective::infonce) return plan;
  const AnchorContext ctx{config.atac, partition};
  if (config.train.enable_intra) plan.intra = build_intra(plan.views, rng, ctx);
  if (config.train.enable_inter) plan.inter = build_inter(plan.views, rng, config.train.inter_pairing, ctx);
  if (config.train.enable_cross) plan.cross = build_cross(plan.views, rng, ctx);
  return plan;
}

namespace {

ObjectiveResult infonce_objective(const ModelPair<double>& model, const MemoryQueue<double>& queue,
                                  const StepPlan& plan, const RunConfig& config) {
  ObjectiveResult res;
  res.online_grad = Vector<double>::Zero(model.online.size());
  res.momentum_grad = Vector<double>::Zero(model.momentum.size());
  auto keys = run_branch(model, Branch::momentum, pack_batch<double>(plan.views.momentum_views), NormMode::batch);
  res.keys = std::move(keys.embeddings);
  res.momentum_stats = std::move(keys.batch_stats);
  res.report.queue_fill = queue.fill();

  const auto out =
      run_branch(model, Branch::online, pack_batch<double>(plan.views.online_views), NormMode::batch, true);
  res.online_stats = out.batch_stats;
  const int n = plan.views.size();
  Matrix<double> d_emb(out.embeddings.rows(), n);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const auto lg = infonce_loss<double>(out.embeddings.col(i), res.keys.col(i), queue, config.infonce_tau);
    total += lg.value;
    d_emb.col(i) = lg.d_query / n;
  }
  model.encoder.backward(model.online, out.cache, d_emb, res.online_grad);
  res.report.total = total / n;
  res.report.aligned = true;
  return res;
}

}  // namespace

ObjectiveResult evaluate_objective(const ModelPair<double>& model, const MemoryQueue<double>& queue,
                                   const StepPlan& plan, const RunConfig& config) {
  if (config.train.objective == Objective::infonce) return infonce_objective(model, queue, plan, config);

  ObjectiveResult res;
  res.online_grad = Vector<double>::Zero(model.online.size());
  res.momentum_grad = Vector<double>::Zero(model.momentum.size());
  res.report.queue_fill = queue.fill();

  const std::array<const std::vector<AlignmentPair>*, 3> levels{&plan.intra, &plan.inter, &plan.cross.pairs};
  const bool any = !plan.intra.empty() || !plan.inter.empty() || !plan.cross.pairs.empty();
  const KeyBank<double> bank = momentum_keys(model, plan.views, plan.cross.momentum_anchors);
  res.keys = bank.momentum_view_keys;
  res.momentum_stats = bank.momentum_view_stats;
  // Soft alignment needs a full neighbourhood; until then the step only fills the queue.
  if (!any || queue.fill() < config.softalign_k) return res;

  std::vector<const SkeletonSequence*> queries;
  for (const auto* level : levels)
    for (const auto& p : *level) queries.push_back(&p.query_seq);
  const auto out = run_branch(model, Branch::online, pack_batch<double>(std::span(queries)), NormMode::batch, true);
  res.online_stats = out.batch_stats;

  Matrix<double> d_emb = Matrix<double>::Zero(out.embeddings.rows(), out.embeddings.cols());
  std::array<double, 3> loss{0, 0, 0};
  int col = 0;
  for (int l = 0; l < 3; ++l) {
    const auto& pairs = *levels[l];
    if (pairs.empty()) continue;
    const double weight = 1.0 / static_cast<double>(pairs.size());
    for (const auto& p : pairs) {
      const Vector<double> target = mix_target(p, bank);
      const auto lg = soft_align_loss<double>(out.embeddings.col(col), target, queue, config.softalign_k,
                                              config.tau_q, config.tau_k);
      loss[l] += lg.value * weight;
      d_emb.col(col) = lg.d_query * weight;
      ++col;
    }
  }
  model.encoder.backward(model.online, out.cache, d_emb, res.online_grad);
  res.report.loss_intra = loss[0];
  res.report.loss_inter = loss[1];
  res.report.loss_cross = loss[2];
  res.report.total = loss[0] + loss[1] + loss[2];
  res.report.aligned = true;
  return res;
}

StepReport train_step(const std::vector<SkeletonSequence>& batch, const std::vector<std::string>& ids,
                       TrainState& state, const RunConfig& config, const BodyPartition& partition, Rng& rng,
                       double lr) {
  const std::string rng_before = serialize_rng(rng);
  const StepPlan plan = plan_step(batch, rng, config, partition);
  ObjectiveResult res = evaluate_objective(state.model, state.queue, plan, config);

  if (!std::isfinite(res.report.total) || !res.online_grad.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << state.step << " (epoch " << state.epoch << "): intra="
        << res.report.loss_intra << " inter=" << res.report.loss_inter << " cross=" << res.report.loss_cross
        << "; batch ids:";
    for (const auto& id : ids) msg << ' ' << id;
    msg << "; rng state fingerprint " << fnv1a_hex(rng_before) << "; rng state " << rng_before;
    throw TrainingDiverged(msg.str());
  }

  if (res.report.aligned) {
    const TrainConfig& t = config.train;
    Vector<double>& theta = state.model.online;
    state.velocity = t.momentum * state.velocity + res.online_grad + t.weight_decay * theta;
    theta -= lr * state.velocity;
  }
  momentum_update(state.model);
  using Encoder = GraphEncoder<double>;
  if (res.online_stats.size() > 0) Encoder::update_running(state.model.online_stats, res.online_stats);
  if (res.momentum_stats.size() > 0) Encoder::update_running(state.model.momentum_stats, res.momentum_stats);
  state.queue.enqueue(res.keys);
  ++state.step;
  res.report.queue_fill = state.queue.fill();
  return res.report;
}

namespace {

json report_row(const char* kind, int epoch, long long step, const StepReport& r, double lr, double wall_ms) {
  return json{{"kind", kind},
              {"epoch", epoch},
              {"step", step},
              {"loss_intra", r.loss_intra},
              {"loss_inter", r.loss_inter},
              {"loss_cross", r.loss_cross},
              {"total", r.total},
              {"lr", lr},
              {"queue_fill", r.queue_fill},
              {"wall_ms", wall_ms}};
}

// Keeps rows from epochs before `epoch` so a resumed run continues the same log.
void truncate_metrics(const std::filesystem::path& file, int epoch) {
  std::vector<std::string> keep;
  {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      const json row = json::parse(line, nullptr, false);
      if (!row.is_discarded() && row.value("epoch", 0) < epoch) keep.push_back(line);
    }
  }
  std::ofstream out(file, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

std::filesystem::path checkpoint_name(const std::filesystem::path& dir, int epoch) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoint_e%04d.trck", epoch);
  return dir / buf;
}

}  // namespace

PretrainResult pretrain(const std::vector<LabeledSequence>& train, const RunConfig& config,
                        const PretrainOptions& options) {
  if (train.empty()) throw ConfigError("pretraining needs a nonempty dataset");
  const TrainConfig& tc = config.train;
  const JointGraph graph = train.front().sequence.graph();
  const BodyPartition partition = default_partition(graph.joints(), options.layout);

  std::vector<SkeletonSequence> data;
  std::vector<std::string> ids;
  data.reserve(train.size());
  for (const auto& item : train) {
    data.push_back(derive_stream(item.sequence, config.stream));
    ids.push_back(item.id);
  }
  const int n = static_cast<int>(data.size());
  const int steps = n / tc.batch_size;
  if (steps == 0)
    throw ConfigError("dataset of " + std::to_string(n) + " sequences is smaller than one batch of " +
                      std::to_string(tc.batch_size));

  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + options.out_dir.string() + ": " + ec.message());

  PretrainResult result;
  result.metrics = options.out_dir / "metrics.jsonl";
  std::optional<Rng> resumed_shuffle;
  if (options.resume_from) {
    Checkpoint ck = load_checkpoint(*options.resume_from);
    if (ck.config.hash != config.hash)
      throw ConfigError("checkpoint " + options.resume_from->string() + " was written with config " +
                        ck.config.hash + ", not " + config.hash);
    if (ck.joints != graph.joints()) throw ConfigError("checkpoint joint count differs from the dataset");
    result.state = std::move(ck.state);
    resumed_shuffle = deserialize_rng(ck.rng_state);
    truncate_metrics(result.metrics, result.state.epoch);
  } else {
    result.state = initial_state(config, graph);
    std::ofstream(result.metrics, std::ios::trunc);
  }
  std::ofstream log(result.metrics, std::ios::app);
  if (!log) throw std::runtime_error("cannot write metrics log " + result.metrics.string());

  TrainState& state = result.state;
  using clock = std::chrono::steady_clock;
  auto elapsed_ms = [&](clock::time_point since) {
    if (config.deterministic_log) return 0.0;
    return std::chrono::duration<double, std::milli>(clock::now() - since).count();
  };

  while (state.epoch < tc.epochs && (options.stop_after_epoch < 0 || state.epoch < options.stop_after_epoch)) {
    const int e = state.epoch;
    const auto epoch_start = clock::now();
    Rng shuffle = resumed_shuffle ? *resumed_shuffle : make_stream(tc.seed, {1, static_cast<std::uint64_t>(e)});
    resumed_shuffle.reset();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int k = n - 1; k > 0; --k) std::swap(order[k], order[uniform_int(shuffle, 0, k)]);

    const double lr = tc.lr_at(e);
    StepReport mean;
    for (int s = 0; s < steps; ++s) {
      const auto step_start = clock::now();
      std::vector<SkeletonSequence> batch;
      std::vector<std::string> batch_ids;
      for (int b = 0; b < tc.batch_size; ++b) {
        batch.push_back(data[order[s * tc.batch_size + b]]);
        batch_ids.push_back(ids[order[s * tc.batch_size + b]]);
      }
      Rng rng = make_stream(tc.seed, {2, static_cast<std::uint64_t>(e), static_cast<std::uint64_t>(s)});
      const StepReport r = train_step(batch, batch_ids, state, config, partition, rng, lr);
      log << report_row("step", e, state.step, r, lr, elapsed_ms(step_start)).dump() << '\n';
      mean.loss_intra += r.loss_intra / steps;
      mean.loss_inter += r.loss_inter / steps;
      mean.loss_cross += r.loss_cross / steps;
      mean.total += r.total / steps;
      mean.queue_fill = r.queue_fill;
    }
    log << report_row("epoch", e, state.step, mean, lr, elapsed_ms(epoch_start)).dump() << '\n';
    log.flush();
    if (!log) throw std::runtime_error("failed writing metrics log " + result.metrics.string());
    state.epoch = e + 1;
    if (options.verbose)
      std::cerr << "epoch " << state.epoch << "/" << tc.epochs << " total " << mean.total << " queue "
                << mean.queue_fill << '\n';

    const bool last = state.epoch == tc.epochs || state.epoch == options.stop_after_epoch;
    if (state.epoch % tc.checkpoint_every == 0 || last) {
      const std::string next_shuffle =
          serialize_rng(make_stream(tc.seed, {1, static_cast<std::uint64_t>(state.epoch)}));
      result.checkpoint = checkpoint_name(options.out_dir, state.epoch);
      save_checkpoint(result.checkpoint, config, options.layout, graph, state, next_shuffle);
      std::filesystem::copy_file(result.checkpoint, options.out_dir / "last.trck",
                                 std::filesystem::copy_options::overwrite_existing);
    }
  }
  if (result.checkpoint.empty() && std::filesystem::exists(options.out_dir / "last.trck"))
    result.checkpoint = options.out_dir / "last.trck";
  return result;
}

}  // namespace tranclr
