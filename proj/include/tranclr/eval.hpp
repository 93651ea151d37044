#pragma once

#include "tranclr/config.hpp"
#include "tranclr/dataset.hpp"
#include "tranclr/encoder.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace tranclr {

struct Prediction {
  std::string id;
  double confidence = 1.0;  // max softmax probability, in (0, 1]
  int predicted = 0;
  int truth = 0;
};

struct PredictionLog {
  std::vector<Prediction> entries;
  int classes = 0;

  int size() const { return static_cast<int>(entries.size()); }
  double accuracy() const;
  /// Throws std::invalid_argument if a confidence leaves (0, 1] or a label leaves [0, classes).
  void validate() const;
};

struct CalibrationBin {
  double lower = 0;
  double upper = 0;
  int count = 0;
  double mean_confidence = 0;
  double accuracy = 0;
};

struct CalibrationReport {
  double ece = 0;
  double aece = 0;
  std::vector<CalibrationBin> bins;           // equal-width
  std::vector<CalibrationBin> adaptive_bins;  // equal-mass
};

/// Equal-width bins (b/n, (b+1)/n]; the first bin also owns nothing at 0 since confidences are positive.
std::vector<CalibrationBin> ece_bins(const PredictionLog& log, int n_bins = 15);
/// Confidence-rank bins whose sizes differ by at most one (larger bins first).
std::vector<CalibrationBin> aece_bins(const PredictionLog& log, int n_bins = 15);

/// sum_b count_b / N * |acc_b - conf_b|. Empty log -> std::invalid_argument.
double ece(const PredictionLog& log, int n_bins = 15);
/// Equal-mass variant; N < n_bins -> ConfigError.
double aece(const PredictionLog& log, int n_bins = 15);

CalibrationReport calibration_report(const PredictionLog& log, int n_bins = 15);

/// Softmax confidences and argmax predictions (first maximum wins) of a
/// (classes, N) logit matrix.
PredictionLog predictions_from_logits(const Matrix<double>& logits, const std::vector<int>& labels,
                                      const std::vector<std::string>& ids);

/// Multinomial logistic regression on standardised features.
struct LinearProbe {
  Matrix<double> weight;  // (classes, dim)
  Vector<double> bias;
  Vector<double> mean;    // feature standardisation, fitted on the training set
  Vector<double> scale;

  Matrix<double> logits(const Matrix<double>& features) const;
};

LinearProbe train_probe(const Matrix<double>& features, const std::vector<int>& labels, int classes,
                        const ProbeConfig& config);

struct FeatureSet {
  Matrix<double> features;  // one column per sample
  std::vector<int> labels;
  std::vector<std::string> ids;
};

enum class FeatureKind { backbone, embedding };

/// Frozen features of the online branch, computed in fixed-size chunks.
FeatureSet extract_features(const ModelPair<double>& model, const std::vector<LabeledSequence>& data,
                            StreamKind stream, FeatureKind kind);

struct LinearEvalResult {
  double accuracy = 0;
  PredictionLog log;
  Matrix<double> test_logits;  // (classes, N_test)
};

/// Trains a probe on frozen backbone features of `train` and scores `test`.
/// Throws ConfigError when test labels fall outside the training classes.
LinearEvalResult linear_eval(const ModelPair<double>& model, const std::vector<LabeledSequence>& train,
                             const std::vector<LabeledSequence>& test, StreamKind stream, const ProbeConfig& probe);

struct RetrievalResult {
  double accuracy = 0;
  std::vector<int> neighbor;  // gallery index chosen for each query
};

/// Cosine 1-nearest-neighbour label transfer; ties go to the smaller gallery index.
RetrievalResult retrieve(const Matrix<double>& gallery, const std::vector<int>& gallery_labels,
                         const Matrix<double>& queries, const std::vector<int>& query_labels);

RetrievalResult retrieve(const ModelPair<double>& model, const std::vector<LabeledSequence>& gallery,
                         const std::vector<LabeledSequence>& queries, StreamKind stream, RetrievalSpace space);

/// Linear evaluation of a source-pretrained model on a target dataset's splits.
/// Throws ConfigError if the target's joint count differs from the model's.
LinearEvalResult transfer_eval(const ModelPair<double>& model, const std::vector<LabeledSequence>& target_train,
                               const std::vector<LabeledSequence>& target_test, StreamKind stream,
                               const ProbeConfig& probe);

struct StreamLogits {
  std::vector<std::string> ids;
  std::vector<int> labels;
  Matrix<double> logits;  // (classes, N)
};

/// Unweighted mean of per-stream logits, then softmax. Streams must list the
/// same ids in the same order.
PredictionLog ensemble_scores(const std::vector<StreamLogits>& streams);

/// One JSON record per line: sample_id, confidence, predicted, true.
void write_prediction_log(const std::filesystem::path& file, const PredictionLog& log);
PredictionLog read_prediction_log(const std::filesystem::path& file, int classes);

std::string calibration_json(const CalibrationReport& report);

/// Static SVG reliability diagram: per-bin accuracy bars over the identity diagonal.
std::string reliability_svg(const CalibrationReport& report, const std::string& title);

}  // namespace tranclr
