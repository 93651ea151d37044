#include "tranclr/eval.hpp"

#include "tranclr/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tranclr {

using nlohmann::json;

double PredictionLog::accuracy() const {
  if (entries.empty()) return 0.0;
  int hits = 0;
  for (const auto& e : entries) hits += e.predicted == e.truth;
  return static_cast<double>(hits) / static_cast<double>(entries.size());
}

void PredictionLog::validate() const {
  for (const auto& e : entries) {
    if (!(e.confidence > 0.0 && e.confidence <= 1.0))
      throw std::invalid_argument("prediction confidence outside (0, 1] for sample '" + e.id + "'");
    if (classes > 0 && (e.predicted < 0 || e.predicted >= classes || e.truth < 0 || e.truth >= classes))
      throw std::invalid_argument("prediction label outside the class range for sample '" + e.id + "'");
  }
}

namespace {

CalibrationBin summarize(const PredictionLog& log, const std::vector<int>& members, double lower, double upper) {
  CalibrationBin bin{lower, upper, static_cast<int>(members.size()), 0, 0};
  if (members.empty()) return bin;
  double conf = 0, hits = 0;
  for (int i : members) {
    conf += log.entries[i].confidence;
    hits += log.entries[i].predicted == log.entries[i].truth;
  }
  bin.mean_confidence = conf / bin.count;
  bin.accuracy = hits / bin.count;
  return bin;
}

double weighted_gap(const std::vector<CalibrationBin>& bins, int n) {
  double total = 0;
  for (const auto& b : bins)
    if (b.count > 0) total += static_cast<double>(b.count) / n * std::abs(b.accuracy - b.mean_confidence);
  return total;
}

// Index b with b/n < c <= (b+1)/n.
int width_bin(double c, int n_bins) {
  int b = static_cast<int>(std::ceil(c * n_bins)) - 1;
  b = std::clamp(b, 0, n_bins - 1);
  while (b > 0 && c <= static_cast<double>(b) / n_bins) --b;
  while (b < n_bins - 1 && c > static_cast<double>(b + 1) / n_bins) ++b;
  return b;
}

}  // namespace

std::vector<CalibrationBin> ece_bins(const PredictionLog& log, int n_bins) {
  if (n_bins < 1) throw ConfigError("calibration needs at least one bin");
  if (log.entries.empty()) throw std::invalid_argument("calibration of an empty prediction log");
  log.validate();
  std::vector<std::vector<int>> members(n_bins);
  for (int i = 0; i < log.size(); ++i) members[width_bin(log.entries[i].confidence, n_bins)].push_back(i);
  std::vector<CalibrationBin> bins;
  for (int b = 0; b < n_bins; ++b)
    bins.push_back(summarize(log, members[b], static_cast<double>(b) / n_bins, static_cast<double>(b + 1) / n_bins));
  return bins;
}

std::vector<CalibrationBin> aece_bins(const PredictionLog& log, int n_bins) {
  if (n_bins < 1) throw ConfigError("calibration needs at least one bin");
  if (log.entries.empty()) throw std::invalid_argument("calibration of an empty prediction log");
  if (log.size() < n_bins)
    throw ConfigError("adaptive calibration needs at least " + std::to_string(n_bins) + " samples, got " +
                      std::to_string(log.size()));
  log.validate();
  std::vector<int> order(log.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return log.entries[a].confidence < log.entries[b].confidence; });
  const int base = log.size() / n_bins, extra = log.size() % n_bins;
  std::vector<CalibrationBin> bins;
  int start = 0;
  for (int b = 0; b < n_bins; ++b) {
    const int len = base + (b < extra ? 1 : 0);
    std::vector<int> members(order.begin() + start, order.begin() + start + len);
    bins.push_back(summarize(log, members, log.entries[members.front()].confidence,
                             log.entries[members.back()].confidence));
    start += len;
  }
  return bins;
}

double ece(const PredictionLog& log, int n_bins) { return weighted_gap(ece_bins(log, n_bins), log.size()); }

double aece(const PredictionLog& log, int n_bins) { return weighted_gap(aece_bins(log, n_bins), log.size()); }

CalibrationReport calibration_report(const PredictionLog& log, int n_bins) {
  CalibrationReport r;
  r.bins = ece_bins(log, n_bins);
  r.ece = weighted_gap(r.bins, log.size());
  r.adaptive_bins = aece_bins(log, n_bins);
  r.aece = weighted_gap(r.adaptive_bins, log.size());
  return r;
}

PredictionLog predictions_from_logits(const Matrix<double>& logits, const std::vector<int>& labels,
                                      const std::vector<std::string>& ids) {
  if (static_cast<std::size_t>(logits.cols()) != labels.size() || labels.size() != ids.size())
    throw std::invalid_argument("logits, labels and ids must align");
  PredictionLog log;
  log.classes = static_cast<int>(logits.rows());
  for (Eigen::Index n = 0; n < logits.cols(); ++n) {
    Eigen::Index arg = 0;
    const double top = logits.col(n).maxCoeff(&arg);
    const double z = (logits.col(n).array() - top).exp().sum();
    log.entries.push_back({ids[n], 1.0 / z, static_cast<int>(arg), labels[n]});
  }
  return log;
}

Matrix<double> LinearProbe::logits(const Matrix<double>& features) const {
  const Matrix<double> z = (features.colwise() - mean).array().colwise() / scale.array();
  Matrix<double> out = weight * z;
  out.colwise() += bias;
  return out;
}

LinearProbe train_probe(const Matrix<double>& features, const std::vector<int>& labels, int classes,
                        const ProbeConfig& config) {
  const int n = static_cast<int>(features.cols());
  if (n == 0 || static_cast<int>(labels.size()) != n) throw std::invalid_argument("probe needs aligned features");
  if (classes < 2) throw ConfigError("probe needs at least two classes");
  for (int y : labels)
    if (y < 0 || y >= classes) throw ConfigError("probe label outside the class range");

  LinearProbe probe;
  const Eigen::Index dim = features.rows();
  probe.mean = features.rowwise().mean();
  const Matrix<double> centred = features.colwise() - probe.mean;
  probe.scale = (centred.array().square().rowwise().sum() / n).sqrt().matrix();
  for (Eigen::Index d = 0; d < dim; ++d)
    if (!(probe.scale(d) > 1e-12)) probe.scale(d) = 1.0;
  const Matrix<double> x = centred.array().colwise() / probe.scale.array();

  probe.weight = Matrix<double>::Zero(classes, dim);
  probe.bias = Vector<double>::Zero(classes);
  Matrix<double> vel_w = Matrix<double>::Zero(classes, dim);
  Vector<double> vel_b = Vector<double>::Zero(classes);
  const int batch = std::min(config.batch_size, n);

  std::vector<int> order(n);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = epoch >= config.lr_drop_epoch ? config.lr * config.lr_drop_factor : config.lr;
    Rng rng = make_stream(config.seed, {static_cast<std::uint64_t>(epoch)});
    std::iota(order.begin(), order.end(), 0);
    for (int k = n - 1; k > 0; --k) std::swap(order[k], order[uniform_int(rng, 0, k)]);
    for (int start = 0; start < n; start += batch) {
      const int len = std::min(batch, n - start);
      Matrix<double> xb(dim, len);
      Matrix<double> target = Matrix<double>::Zero(classes, len);
      for (int k = 0; k < len; ++k) {
        xb.col(k) = x.col(order[start + k]);
        target(labels[order[start + k]], k) = 1.0;
      }
      Matrix<double> logits = probe.weight * xb;
      logits.colwise() += probe.bias;
      Matrix<double> prob = (logits.rowwise() - logits.colwise().maxCoeff()).array().exp();
      prob.array().rowwise() /= prob.colwise().sum().array();
      const Matrix<double> d = (prob - target) / len;
      const Matrix<double> gw = d * xb.transpose() + config.weight_decay * probe.weight;
      const Vector<double> gb = d.rowwise().sum();
      vel_w = config.momentum * vel_w + gw;
      vel_b = config.momentum * vel_b + gb;
      probe.weight -= lr * vel_w;
      probe.bias -= lr * vel_b;
    }
  }
  return probe;
}

FeatureSet extract_features(const ModelPair<double>& model, const std::vector<LabeledSequence>& data,
                            StreamKind stream, FeatureKind kind) {
  FeatureSet out;
  const int dim = kind == FeatureKind::backbone ? model.encoder.config().feature_dim
                                                : model.encoder.config().projection_dim;
  out.features.resize(dim, static_cast<Eigen::Index>(data.size()));
  constexpr int kChunk = 64;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    std::vector<SkeletonSequence> chunk;
    for (std::size_t k = start; k < std::min(data.size(), start + kChunk); ++k) {
      if (data[k].sequence.joints() != model.encoder.joints())
        throw ConfigError("sequence '" + data[k].id + "' has " + std::to_string(data[k].sequence.joints()) +
                          " joints; the encoder expects " + std::to_string(model.encoder.joints()));
      chunk.push_back(derive_stream(data[k].sequence, stream));
    }
    const auto res = run_branch(model, Branch::online, pack_batch<double>(chunk), NormMode::running);
    out.features.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(chunk.size())) =
        kind == FeatureKind::backbone ? res.features : res.embeddings;
  }
  for (const auto& item : data) {
    out.labels.push_back(item.label);
    out.ids.push_back(item.id);
  }
  return out;
}

LinearEvalResult linear_eval(const ModelPair<double>& model, const std::vector<LabeledSequence>& train,
                             const std::vector<LabeledSequence>& test, StreamKind stream,
                             const ProbeConfig& probe_config) {
  if (train.empty() || test.empty()) throw ConfigError("linear evaluation needs nonempty train and test splits");
  const FeatureSet tr = extract_features(model, train, stream, FeatureKind::backbone);
  const FeatureSet te = extract_features(model, test, stream, FeatureKind::backbone);
  const int classes = *std::max_element(tr.labels.begin(), tr.labels.end()) + 1;
  for (int y : te.labels)
    if (y < 0 || y >= classes)
      throw ConfigError("test label " + std::to_string(y) + " does not occur among the " + std::to_string(classes) +
                        " training classes");
  const LinearProbe probe = train_probe(tr.features, tr.labels, classes, probe_config);
  LinearEvalResult result;
  result.test_logits = probe.logits(te.features);
  result.log = predictions_from_logits(result.test_logits, te.labels, te.ids);
  result.accuracy = result.log.accuracy();
  return result;
}

RetrievalResult retrieve(const Matrix<double>& gallery, const std::vector<int>& gallery_labels,
                         const Matrix<double>& queries, const std::vector<int>& query_labels) {
  if (gallery.cols() == 0) throw std::invalid_argument("retrieval needs a nonempty gallery");
  if (gallery.rows() != queries.rows()) throw std::invalid_argument("gallery and query dimensions differ");
  if (static_cast<std::size_t>(gallery.cols()) != gallery_labels.size() ||
      static_cast<std::size_t>(queries.cols()) != query_labels.size())
    throw std::invalid_argument("retrieval labels must align with features");
  Vector<double> gnorm = gallery.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < gnorm.size(); ++j)
    if (gnorm(j) == 0) gnorm(j) = 1;
  const Matrix<double> sims = queries.transpose() * gallery;
  RetrievalResult out;
  int hits = 0;
  for (Eigen::Index q = 0; q < queries.cols(); ++q) {
    // The query norm is a common positive factor and does not change the argmax.
    int best = 0;
    double best_sim = sims(q, 0) / gnorm(0);
    for (Eigen::Index j = 1; j < gallery.cols(); ++j) {
      const double s = sims(q, j) / gnorm(j);
      if (s > best_sim) {
        best_sim = s;
        best = static_cast<int>(j);
      }
    }
    out.neighbor.push_back(best);
    hits += gallery_labels[best] == query_labels[q];
  }
  out.accuracy = queries.cols() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(queries.cols());
  return out;
}

RetrievalResult retrieve(const ModelPair<double>& model, const std::vector<LabeledSequence>& gallery,
                         const std::vector<LabeledSequence>& queries, StreamKind stream, RetrievalSpace space) {
  const FeatureKind kind = space == RetrievalSpace::backbone ? FeatureKind::backbone : FeatureKind::embedding;
  const FeatureSet g = extract_features(model, gallery, stream, kind);
  const FeatureSet q = extract_features(model, queries, stream, kind);
  return retrieve(g.features, g.labels, q.features, q.labels);
}

LinearEvalResult transfer_eval(const ModelPair<double>& model, const std::vector<LabeledSequence>& target_train,
                               const std::vector<LabeledSequence>& target_test, StreamKind stream,
                               const ProbeConfig& probe) {
  for (const auto* split : {&target_train, &target_test})
    for (const auto& item : *split)
      if (item.sequence.joints() != model.encoder.joints())
        throw ConfigError("transfer target has " + std::to_string(item.sequence.joints()) +
                          " joints but the source model was pretrained on " + std::to_string(model.encoder.joints()));
  return linear_eval(model, target_train, target_test, stream, probe);
}

PredictionLog ensemble_scores(const std::vector<StreamLogits>& streams) {
  if (streams.empty()) throw std::invalid_argument("ensemble needs at least one stream");
  const StreamLogits& first = streams.front();
  Matrix<double> sum = Matrix<double>::Zero(first.logits.rows(), first.logits.cols());
  for (const auto& s : streams) {
    if (s.ids != first.ids || s.labels != first.labels || s.logits.rows() != first.logits.rows() ||
        s.logits.cols() != first.logits.cols())
      throw std::invalid_argument("stream logits are not aligned by sample id");
    sum += s.logits;
  }
  return predictions_from_logits(sum / static_cast<double>(streams.size()), first.labels, first.ids);
}

void write_prediction_log(const std::filesystem::path& file, const PredictionLog& log) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write prediction log " + file.string());
  for (const auto& e : log.entries)
    out << json{{"sample_id", e.id}, {"confidence", e.confidence}, {"predicted", e.predicted}, {"true", e.truth}}.dump()
        << '\n';
  if (!out) throw std::runtime_error("failed writing prediction log " + file.string());
}

PredictionLog read_prediction_log(const std::filesystem::path& file, int classes) {
  std::ifstream in(file);
  if (!in) throw IngestionError("cannot open prediction log " + file.string());
  PredictionLog log;
  log.classes = classes;
  std::string line;
  long long offset = 0;
  while (std::getline(in, line)) {
    const long long line_start = offset;
    offset += static_cast<long long>(line.size()) + 1;
    if (line.empty()) continue;
    const json row = json::parse(line, nullptr, false);
    try {
      if (row.is_discarded()) throw std::runtime_error("not JSON");
      log.entries.push_back({row.at("sample_id").get<std::string>(), row.at("confidence").get<double>(),
                             row.at("predicted").get<int>(), row.at("true").get<int>()});
    } catch (const std::exception& e) {
      throw ParseError("prediction log " + file.string() + ": " + e.what(), line_start);
    }
  }
  log.validate();
  return log;
}

namespace {

json bins_json(const std::vector<CalibrationBin>& bins) {
  json arr = json::array();
  for (const auto& b : bins)
    arr.push_back({{"lower", b.lower},
                   {"upper", b.upper},
                   {"count", b.count},
                   {"mean_confidence", b.mean_confidence},
                   {"accuracy", b.accuracy}});
  return arr;
}

}  // namespace

std::string calibration_json(const CalibrationReport& report) {
  return json{{"ece", report.ece},
              {"aece", report.aece},
              {"bins", bins_json(report.bins)},
              {"adaptive_bins", bins_json(report.adaptive_bins)}}
      .dump(2);
}

std::string reliability_svg(const CalibrationReport& report, const std::string& title) {
  constexpr double W = 420, H = 420, L = 60, T = 40, S = 320;  // plot square of side S at (L, T)
  std::ostringstream svg;
  svg.setf(std::ios::fixed);
  svg.precision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::string safe;
  for (char c : title) {
    if (c == '<') safe += "&lt;";
    else if (c == '>') safe += "&gt;";
    else if (c == '&') safe += "&amp;";
    else safe += c;
  }
  svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << safe << "</text>\n";
  for (const auto& b : report.bins) {
    if (b.count == 0) continue;
    const double x = L + b.lower * S, w = (b.upper - b.lower) * S, h = b.accuracy * S;
    svg << "<rect x=\"" << x << "\" y=\"" << T + S - h << "\" width=\"" << w << "\" height=\"" << h
        << "\" fill=\"#4c78a8\" stroke=\"#1f3b5a\" stroke-width=\"0.5\"/>\n";
  }
  svg << "<line x1=\"" << L << "\" y1=\"" << T + S << "\" x2=\"" << L + S << "\" y2=\"" << T
      << "\" stroke=\"#d62728\" stroke-dasharray=\"4 3\" stroke-width=\"1.5\"/>\n";
  svg << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << S << "\" height=\"" << S
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = k / 5.0;
    svg << "<text x=\"" << L + v * S << "\" y=\"" << T + S + 16 << "\" text-anchor=\"middle\" font-family=\"sans-serif\""
        << " font-size=\"10\">" << v << "</text>\n";
    svg << "<text x=\"" << L - 6 << "\" y=\"" << T + S - v * S + 3 << "\" text-anchor=\"end\" font-family=\"sans-serif\""
        << " font-size=\"10\">" << v << "</text>\n";
  }
  svg << "<text x=\"" << L + S / 2 << "\" y=\"" << T + S + 34
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">confidence</text>\n";
  svg << "<text x=\"16\" y=\"" << T + S / 2 << "\" transform=\"rotate(-90 16 " << T + S / 2
      << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">accuracy</text>\n";
  svg.precision(4);
  svg << "<text x=\"" << L + 8 << "\" y=\"" << T + 16 << "\" font-family=\"sans-serif\" font-size=\"11\">ECE "
      << report.ece << "  AECE " << report.aece << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace tranclr
