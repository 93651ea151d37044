// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Criteria 6-8 share twelve desk-profile pretraining runs (4 objectives x 3 seeds).

#include "support/fixtures.hpp"
#include "tranclr/atac.hpp"
#include "tranclr/checkpoint.hpp"
#include "tranclr/config.hpp"
#include "tranclr/errors.hpp"
#include "tranclr/eval.hpp"
#include "tranclr/mgmc.hpp"
#include "tranclr/softalign.hpp"
#include "tranclr/synth.hpp"
#include "tranclr/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

using namespace tranclr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

std::string pct(double v) { return fmt(100.0 * v, 4) + "%"; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Vector<double> unit_vector(Rng& rng, int dim) {
  std::normal_distribution<double> g;
  Vector<double> v(dim);
  for (int i = 0; i < dim; ++i) v(i) = g(rng);
  return v / v.norm();
}

double rel_err(double fd, double an) { return std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an)); }

// ---- 1 ---------------------------------------------------------------------

Outcome formula_oracles() {
  int mismatches = 0, identity_failures = 0;
  double worst_rational = 0;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; j <= 100; ++j) {
      const double a = i / 100.0, b = j / 100.0;
      const auto s = compositional_similarity(MixCoefficient(a), MixCoefficient(b));
      // Brute force: enumerate the two overlaps term by term.
      const double terms_h[2] = {a < b ? a : b, (1.0 - a) < (1.0 - b) ? 1.0 - a : 1.0 - b};
      const double terms_c[2] = {a < 1.0 - b ? a : 1.0 - b, 1.0 - a < b ? 1.0 - a : b};
      const double kh = terms_h[0] + terms_h[1], kc = terms_c[0] + terms_c[1];
      if (s.k_h != kh || s.k_c != kc || s.lam_cross != kh / (kh + kc)) ++mismatches;
      // Rational oracle in hundredths.
      const int nh = std::min(i, j) + std::min(100 - i, 100 - j);
      const int nc = std::min(i, 100 - j) + std::min(100 - i, j);
      worst_rational = std::max({worst_rational, std::abs(s.k_h - nh / 100.0), std::abs(s.k_c - nc / 100.0),
                                 std::abs(s.lam_cross - static_cast<double>(nh) / (nh + nc))});
      const auto swapped = compositional_similarity(MixCoefficient(b), MixCoefficient(a));
      const auto reflected = compositional_similarity(MixCoefficient(a), MixCoefficient(1.0 - b));
      const bool ok = s.k_h >= 0 && s.k_h <= 1 && s.k_c >= 0 && s.k_c <= 1 && s.k_h + s.k_c >= 1 &&
                      (s.k_h > 1 - 1e-15) == (i == j) && (s.k_c > 1 - 1e-15) == (i + j == 100) &&
                      s.k_h == swapped.k_h && std::abs(s.k_c - reflected.k_h) <= 1e-15 &&
                      (i != j || i == 0 || i == 100 || i == 50 || s.lam_cross > 0.5);
      if (!ok) ++identity_failures;
    }
  const double mid = compositional_similarity(MixCoefficient(0.3), MixCoefficient(0.7)).lam_cross;
  const bool pass = mismatches == 0 && identity_failures == 0 && worst_rational <= 1e-15 && std::abs(mid - 0.375) <= 1e-15;
  return {pass, "101x101 grid: " + std::to_string(mismatches) + " brute-force mismatches, " +
                    std::to_string(identity_failures) + " identity failures, worst rational gap " +
                    fmt(worst_rational, 3) + ", (0.3,0.7) -> " + fmt(mid, 17)};
}

// ---- 2 ---------------------------------------------------------------------

PredictionLog random_log(Rng& rng, int n, int classes) {
  PredictionLog log;
  log.classes = classes;
  for (int i = 0; i < n; ++i) {
    Prediction p;
    p.id = std::to_string(i);
    p.confidence = uniform01(rng) < 0.1 ? uniform_int(rng, 1, 15) / 15.0 : 1.0 - uniform01(rng) * (1.0 - 1.0 / classes);
    p.truth = uniform_int(rng, 0, classes - 1);
    p.predicted = uniform01(rng) < p.confidence ? p.truth : uniform_int(rng, 0, classes - 1);
    log.entries.push_back(p);
  }
  return log;
}

// Pass one assigns bins by scanning edges; pass two sums the gaps.
long double two_pass_ece(const PredictionLog& log, int n_bins) {
  std::vector<int> bin(log.size(), -1);
  for (int k = 0; k < log.size(); ++k)
    for (int b = 0; b < n_bins; ++b)
      if (log.entries[k].confidence > static_cast<double>(b) / n_bins &&
          log.entries[k].confidence <= static_cast<double>(b + 1) / n_bins) {
        bin[k] = b;
        break;
      }
  long double total = 0;
  for (int b = 0; b < n_bins; ++b) {
    long double conf = 0, hit = 0, count = 0;
    for (int k = 0; k < log.size(); ++k)
      if (bin[k] == b) {
        conf += log.entries[k].confidence;
        hit += log.entries[k].predicted == log.entries[k].truth;
        count += 1;
      }
    if (count > 0) total += count / log.size() * std::abs(hit / count - conf / count);
  }
  return total;
}

long double two_pass_aece(const PredictionLog& log, int n_bins) {
  std::vector<int> order(log.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return log.entries[x].confidence < log.entries[y].confidence; });
  const int n = log.size();
  long double total = 0;
  int start = 0;
  for (int b = 0; b < n_bins; ++b) {
    const int size = n / n_bins + (b < n % n_bins ? 1 : 0);
    long double conf = 0, hit = 0;
    for (int k = start; k < start + size; ++k) {
      conf += log.entries[order[k]].confidence;
      hit += log.entries[order[k]].predicted == log.entries[order[k]].truth;
    }
    total += static_cast<long double>(size) / n * std::abs(hit / size - conf / size);
    start += size;
  }
  return total;
}

Outcome calibration_oracles() {
  Rng rng = make_stream(2024, {2});
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto log = random_log(rng, uniform_int(rng, 20, 2000), uniform_int(rng, 2, 20));
    worst = std::max(worst, std::abs(ece(log, 15) - static_cast<double>(two_pass_ece(log, 15))));
    worst = std::max(worst, std::abs(aece(log, 15) - static_cast<double>(two_pass_aece(log, 15))));
  }
  const PredictionLog hand{{{"a", 0.9, 1, 1}, {"b", 0.8, 0, 1}, {"c", 0.3, 1, 1}}, 2};
  const double three = ece(hand, 2);
  const bool pass = worst <= 1e-12 && std::abs(three - 0.4667) < 5e-5;
  return {pass, "1000 random logs, worst |ece/aece - reference| " + fmt(worst, 3) + "; 3-sample ECE " + fmt(three, 6)};
}

// ---- 3 ---------------------------------------------------------------------

MemoryQueue<double> random_queue(Rng& rng, int capacity, int dim) {
  MemoryQueue<double> q(capacity, dim);
  Matrix<double> keys(dim, capacity);
  for (int j = 0; j < capacity; ++j) keys.col(j) = unit_vector(rng, dim);
  q.enqueue(keys);
  return q;
}

double loss_fd_worst(const std::function<LossGradient<double>(const Vector<double>&)>& loss, const Vector<double>& x) {
  const auto at = loss(x);
  double worst = 0;
  for (int i = 0; i < x.size(); ++i) {
    Vector<double> p = x, m = x;
    p(i) += 1e-6;
    m(i) -= 1e-6;
    worst = std::max(worst, rel_err((loss(p).value - loss(m).value) / 2e-6, at.d_query(i)));
  }
  return worst;
}

Outcome gradient_checks() {
  Rng rng = make_stream(3, {3});
  const int dim = EncoderConfig::desk().projection_dim;
  const MemoryQueue<double> queue = random_queue(rng, 64, dim);
  double worst_pointwise = 0;
  bool target_zero = true;
  for (int trial = 0; trial < 5; ++trial) {
    const Vector<double> q = unit_vector(rng, dim) * 1.3, t = unit_vector(rng, dim), k = unit_vector(rng, dim);
    worst_pointwise = std::max(worst_pointwise, loss_fd_worst([&](const Vector<double>& x) {
      return soft_align_loss<double>(x, t, queue, 8, 0.1, 0.05);
    }, q));
    worst_pointwise = std::max(worst_pointwise, loss_fd_worst([&](const Vector<double>& x) {
      return infonce_loss<double>(x, k, queue, 0.07);
    }, q));
    target_zero = target_zero && (soft_align_loss<double>(q, t, queue, 8, 0.1, 0.05).d_target.array() == 0).all();
  }

  // Composed per-level losses through the desk encoder, batch 4, K = 8.
  const JointGraph graph = layout_graph(kLayoutSynthetic, 10);
  const BodyPartition partition = default_partition(10, kLayoutSynthetic);
  std::vector<SkeletonSequence> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(testing::random_sequence(rng, 32));
  const std::map<std::string, Overrides> levels{
      {"intra", {{"mgmc.enable_inter", "false"}, {"mgmc.enable_cross", "false"}}},
      {"inter", {{"mgmc.enable_intra", "false"}, {"mgmc.enable_cross", "false"}}},
      {"cross", {{"mgmc.enable_intra", "false"}, {"mgmc.enable_inter", "false"}}},
      {"infonce", {{"loss.objective", "infonce"}}}};
  double worst_level = 0;
  bool momentum_zero = true, queue_untouched = true;
  std::string per_level;
  for (const auto& [name, extra] : levels) {
    Overrides o{{"train.batch_size", "4"}, {"queue.capacity", "16"}, {"softalign.k", "8"},
                {"atac.t_min", "8"},       {"atac.t_max", "12"}};
    o.insert(o.end(), extra.begin(), extra.end());
    const RunConfig config = resolve_config(Profile::desk, {}, o);
    TrainState state = initial_state(config, graph);
    Rng keys_rng = make_stream(4, {3});
    state.queue = random_queue(keys_rng, 16, config.encoder.projection_dim);
    const Matrix<double> before = state.queue.storage();
    Rng plan_rng = make_stream(5, {3});
    const StepPlan plan = plan_step(batch, plan_rng, config, partition);
    const auto res = evaluate_objective(state.model, state.queue, plan, config);
    momentum_zero = momentum_zero && (res.momentum_grad.array() == 0).all();
    Rng pick = make_stream(6, {3});
    double level_worst = 0;
    for (int trial = 0; trial < 30; ++trial) {
      const int i = uniform_int(pick, 0, static_cast<int>(state.model.online.size()) - 1);
      ModelPair<double> plus = state.model, minus = state.model;
      plus.online(i) += 1e-6;
      minus.online(i) -= 1e-6;
      const double fd = (evaluate_objective(plus, state.queue, plan, config).report.total -
                         evaluate_objective(minus, state.queue, plan, config).report.total) /
                        2e-6;
      level_worst = std::max(level_worst, rel_err(fd, res.online_grad(i)));
    }
    // A training step may only append to the queue; stored keys receive no update.
    Rng step_rng = make_stream(5, {3});
    TrainState stepped = state;
    train_step(batch, {}, stepped, config, partition, step_rng, 0.1);
    for (int slot = 0; slot < 16; ++slot) {
      const bool overwritten = (slot - state.queue.head() + 16) % 16 < static_cast<int>(batch.size());
      if (!overwritten) queue_untouched = queue_untouched && stepped.queue.storage().col(slot) == before.col(slot);
    }
    worst_level = std::max(worst_level, level_worst);
    per_level += " " + name + "=" + fmt(level_worst, 2);
  }
  const bool pass = worst_pointwise <= 1e-3 && worst_level <= 1e-3 && target_zero && momentum_zero && queue_untouched;
  return {pass, "loss-level worst rel err " + fmt(worst_pointwise, 2) + "; composed" + per_level +
                    "; momentum grad zero " + (momentum_zero ? "yes" : "no") + ", target grad zero " +
                    (target_zero ? "yes" : "no") + ", queue keys untouched " + (queue_untouched ? "yes" : "no")};
}

// ---- 4 ---------------------------------------------------------------------

Outcome atac_algebra() {
  Rng rng = make_stream(7, {4});
  const BodyPartition partition = default_partition(10, kLayoutSynthetic);
  const int frames = 64;
  int failures = 0;
  double worst_swap = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto xi = testing::random_sequence(rng, frames), xj = testing::random_sequence(rng, frames);
    if (!(global_interpolate(xi, xj, MixCoefficient(1.0)).seq.data() == xi.data())) ++failures;
    if (!(global_interpolate(xi, xj, MixCoefficient(0.0)).seq.data() == xj.data())) ++failures;
    const double lam = uniform01(rng);
    const auto a = global_interpolate(xi, xj, MixCoefficient(lam));
    const auto b = global_interpolate(xj, xi, MixCoefficient(1.0 - lam));
    worst_swap = std::max(worst_swap, (a.seq.data() - b.seq.data()).cwiseAbs().maxCoeff() /
                                          std::max(1.0, a.seq.data().cwiseAbs().maxCoeff()));
    if (a.lam.value() != lam) ++failures;
  }
  int lambda_mismatch = 0, cell_mismatch = 0;
  const SubstitutionParams params;
  for (int trial = 0; trial < 500; ++trial) {
    const auto xi = testing::random_sequence(rng, frames), xj = testing::random_sequence(rng, frames);
    const SubstitutionMask mask = sample_substitution(rng, params, frames, BodyPartition::kParts);
    const auto anchor = local_substitute(xi, xj, mask, partition);
    const double expected = static_cast<double>(mask.parts.size() * mask.window_length) /
                            static_cast<double>(BodyPartition::kParts * frames);
    if (anchor.lam.value() != expected) ++lambda_mismatch;
    for (int p = 0; p < BodyPartition::kParts; ++p)
      for (int t = 0; t < frames; ++t) {
        if (mask.grid(p, t)) continue;
        for (int v : partition.part(p)) {
          const auto col = xj.column(t, v, 0);
          if (!(anchor.seq.data().col(col) == xj.data().col(col))) ++cell_mismatch;
        }
      }
  }
  const AtacParams defaults;
  const auto xi = testing::random_sequence(rng, frames), xj = testing::random_sequence(rng, frames);
  int global = 0;
  for (int k = 0; k < 10000; ++k) global += atac(xi, xj, rng, defaults, partition).mode == AnchorMode::global;
  const double freq = global / 10000.0;
  const bool pass = failures == 0 && worst_swap <= 1e-15 && lambda_mismatch == 0 && cell_mismatch == 0 &&
                    std::abs(freq - 0.5) <= 0.02;
  return {pass, "endpoint failures " + std::to_string(failures) + ", swap gap " + fmt(worst_swap, 2) +
                    ", mask-mean mismatches " + std::to_string(lambda_mismatch) + "/500, unmasked cell mismatches " +
                    std::to_string(cell_mismatch) + ", global branch frequency " + fmt(freq, 4)};
}

// ---- 5 ---------------------------------------------------------------------

struct Benchmark {
  std::vector<LabeledSequence> train, test;
};

Benchmark make_benchmark() {
  // Same corpus as `tranclr synth` with its defaults.
  const std::uint64_t seed = 1;
  auto wrap = [](const SyntheticCorpus& c, const std::string& prefix) {
    std::vector<LabeledSequence> out;
    for (std::size_t k = 0; k < c.sequences.size(); ++k) {
      char id[32];
      std::snprintf(id, sizeof id, "%s%05zu", prefix.c_str(), k);
      out.push_back({id, c.sequences[k], c.labels[k]});
    }
    return out;
  };
  return {wrap(synth_generate(6, 100, 10, 64, seed), "train_"),
          wrap(synth_generate(6, 50, 10, 64, seed + 0x9e3779b97f4a7c15ULL), "test_")};
}

Outcome state_machine(const Benchmark& bench, const fs::path& work) {
  // FIFO replay against a deque oracle, pushing batches of varying size.
  Rng rng = make_stream(8, {5});
  MemoryQueue<double> queue(50, 8);
  std::deque<Vector<double>> oracle;
  bool fifo = true;
  for (int step = 0; step < 40; ++step) {
    const int n = uniform_int(rng, 1, 17);
    Matrix<double> keys(8, n);
    for (int j = 0; j < n; ++j) {
      keys.col(j) = unit_vector(rng, 8);
      oracle.push_back(keys.col(j));
      if (oracle.size() > 50) oracle.pop_front();
    }
    queue.enqueue(keys);
    const Matrix<double> entries = queue.entries();
    fifo = fifo && entries.cols() == static_cast<Eigen::Index>(oracle.size());
    for (std::size_t j = 0; fifo && j < oracle.size(); ++j) fifo = entries.col(static_cast<Eigen::Index>(j)) == oracle[j];
  }

  // EMA probe: momentum 1, online 0, m = 0.9.
  Rng init = make_stream(9, {5});
  auto pair = ModelPair<double>::create(EncoderConfig::desk(), layout_graph(kLayoutSynthetic, 10), init, 0.9);
  pair.momentum.setOnes();
  pair.online.setZero();
  momentum_update(pair);
  const bool ema = (pair.momentum.array() == 0.9).all();

  // 3-epoch desk run: uninterrupted, repeated, and split at epoch 1.
  const RunConfig config = resolve_config(
      Profile::desk, {}, {{"train.epochs", "3"}, {"train.lr_drop_epoch", "2"}, {"log.deterministic", "true"}});
  auto run = [&](const std::string& name, int stop, std::optional<fs::path> resume) {
    PretrainOptions o;
    o.out_dir = work / name;
    if (!resume) fs::remove_all(o.out_dir);
    o.stop_after_epoch = stop;
    o.resume_from = resume;
    return pretrain(bench.train, config, o);
  };
  const auto full = run("sm_full", -1, std::nullopt);
  const auto again = run("sm_again", -1, std::nullopt);
  const auto first = run("sm_split", 1, std::nullopt);
  const auto resumed = run("sm_split", -1, first.checkpoint);
  const std::string log = read_file(full.metrics);
  const bool reproducible = !log.empty() && log == read_file(again.metrics) &&
                            full.state.model.online == again.state.model.online;
  const bool resume = resumed.state.model.online == full.state.model.online &&
                      resumed.state.model.momentum == full.state.model.momentum &&
                      resumed.state.model.online_stats == full.state.model.online_stats &&
                      resumed.state.model.momentum_stats == full.state.model.momentum_stats &&
                      resumed.state.velocity == full.state.velocity &&
                      resumed.state.queue.entries() == full.state.queue.entries() &&
                      read_file(resumed.metrics) == log;
  const bool pass = fifo && ema && reproducible && resume;
  auto yn = [](bool b) { return b ? "yes" : "no"; };
  return {pass, std::string("FIFO replay ") + yn(fifo) + ", EMA probe exact " + yn(ema) + ", resume equivalent " +
                    yn(resume) + ", metrics log bitwise reproducible " + yn(reproducible) + " (" +
                    std::to_string(full.state.step) + " steps)"};
}

// ---- 6-8 -------------------------------------------------------------------

struct RunScore {
  double linear = 0;
  double retrieval = 0;
  double ece = 0;
  double seconds = 0;
};

struct Variant {
  std::string name;
  Overrides overrides;
};

const std::vector<Variant> kVariants{
    {"infonce", {{"loss.objective", "infonce"}}},
    {"intra", {{"mgmc.enable_inter", "false"}, {"mgmc.enable_cross", "false"}}},
    {"intra+inter", {{"mgmc.enable_cross", "false"}}},
    {"all", {}}};

RunScore score_model(const ModelPair<double>& model, const Benchmark& bench, const RunConfig& config) {
  const auto lin = linear_eval(model, bench.train, bench.test, config.stream, config.eval.probe);
  const auto ret = retrieve(model, bench.train, bench.test, config.stream, config.eval.retrieval_space);
  return {lin.accuracy, ret.accuracy, ece(lin.log, config.eval.n_bins), 0};
}

std::map<std::string, std::vector<RunScore>> run_benchmark(const Benchmark& bench, const fs::path& work) {
  std::map<std::string, std::vector<RunScore>> scores;
  for (int seed = 1; seed <= 3; ++seed)
    for (const auto& v : kVariants) {
      Overrides o = v.overrides;
      o.emplace_back("seed", std::to_string(seed));
      o.emplace_back("log.deterministic", "true");
      const RunConfig config = resolve_config(Profile::desk, {}, o);
      PretrainOptions opt;
      opt.out_dir = work / ("bench_" + v.name + "_s" + std::to_string(seed));
      fs::remove_all(opt.out_dir);
      const auto start = std::chrono::steady_clock::now();
      const auto result = pretrain(bench.train, config, opt);
      RunScore s = score_model(result.state.model, bench, config);
      s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cerr << "  " << v.name << " seed " << seed << ": linear " << pct(s.linear) << ", retrieval "
                << pct(s.retrieval) << ", ECE " << fmt(s.ece) << " (" << fmt(s.seconds, 3) << " s)\n";
      scores[v.name].push_back(s);
    }
  return scores;
}

double mean_linear(const std::vector<RunScore>& s) {
  double m = 0;
  for (const auto& r : s) m += r.linear / static_cast<double>(s.size());
  return m;
}

Outcome representation_quality(const std::vector<RunScore>& full) {
  bool pass = true;
  std::string detail;
  double slowest = 0;
  for (std::size_t k = 0; k < full.size(); ++k) {
    pass = pass && full[k].linear >= 0.40 && full[k].retrieval >= 0.35;
    slowest = std::max(slowest, full[k].seconds);
    detail += "seed " + std::to_string(k + 1) + " linear " + pct(full[k].linear) + " retrieval " +
              pct(full[k].retrieval) + "; ";
  }
  pass = pass && slowest <= 1800;
  return {pass, detail + "slowest run " + fmt(slowest, 3) + " s"};
}

Outcome calibration_direction(const std::vector<RunScore>& full, const std::vector<RunScore>& baseline) {
  int wins = 0;
  std::string detail;
  for (std::size_t k = 0; k < full.size(); ++k) {
    wins += full[k].ece <= baseline[k].ece;
    detail += "seed " + std::to_string(k + 1) + " ECE " + fmt(full[k].ece) + " vs " + fmt(baseline[k].ece) + "; ";
  }
  return {wins >= 2, detail + std::to_string(wins) + "/3 seeds at or below the InfoNCE baseline"};
}

Outcome ablation_direction(const std::map<std::string, std::vector<RunScore>>& scores) {
  std::vector<double> means;
  std::string detail;
  for (const auto& v : kVariants) {
    means.push_back(mean_linear(scores.at(v.name)));
    detail += v.name + " " + pct(means.back()) + "; ";
  }
  bool pass = true;
  for (std::size_t k = 1; k < means.size(); ++k) pass = pass && means[k] >= means[k - 1] - 0.01;
  return {pass, detail + "allowance -1%"};
}

std::string random_init_note(const Benchmark& bench) {
  const RunConfig config = resolve_config(Profile::desk, {}, {});
  std::string detail;
  int inside = 0;
  for (int seed = 1; seed <= 3; ++seed) {
    RunConfig c = config;
    c.train.seed = static_cast<std::uint64_t>(seed);
    const TrainState state = initial_state(c, bench.train.front().sequence.graph());
    const double acc = linear_eval(state.model, bench.train, bench.test, c.stream, c.eval.probe).accuracy;
    inside += acc >= 1.0 / 6 - 0.05 && acc <= 1.0 / 6 + 0.15;
    detail += " " + pct(acc);
  }
  return "random-init linear accuracy" + detail + " (" + std::to_string(inside) + "/3 inside [11.7%, 31.7%])";
}

void report(int id, const std::string& name, const Outcome& o, int& failures) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << std::endl;
  failures += !o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "tranclr_acceptance";
  bool skip_benchmark = false;
  app.add_option("--work-dir", work, "Scratch directory for training runs");
  app.add_flag("--skip-benchmark", skip_benchmark, "Report criteria 6-8 as FAIL without training");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  int failures = 0;
  auto guarded = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(id, name, o, failures);
  };

  guarded(1, "formula oracles", formula_oracles);
  guarded(2, "calibration oracles", calibration_oracles);
  guarded(3, "gradient checks", gradient_checks);
  guarded(4, "ATAC algebra", atac_algebra);
  const Benchmark bench = make_benchmark();
  guarded(5, "state-machine invariants", [&] { return state_machine(bench, work); });

  std::map<std::string, std::vector<RunScore>> scores;
  if (!skip_benchmark) {
    try {
      scores = run_benchmark(bench, work);
    } catch (const std::exception& e) {
      std::cerr << "benchmark aborted: " << e.what() << '\n';
    }
  }
  const bool have = scores.size() == kVariants.size();
  auto need = [&](const std::function<Outcome()>& fn) {
    return have ? fn() : Outcome{false, skip_benchmark ? "skipped" : "benchmark runs unavailable"};
  };
  guarded(6, "desk-scale representation quality", [&] { return need([&] { return representation_quality(scores.at("all")); }); });
  guarded(7, "calibration direction", [&] {
    return need([&] { return calibration_direction(scores.at("all"), scores.at("infonce")); });
  });
  guarded(8, "ablation direction", [&] { return need([&] { return ablation_direction(scores); }); });

  if (!skip_benchmark) {
    try {
      std::cout << "NOTE " << random_init_note(bench) << std::endl;
    } catch (const std::exception& e) {
      std::cout << "NOTE random-init probe failed: " << e.what() << std::endl;
    }
  }
  std::cout << (8 - failures) << "/8 criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
