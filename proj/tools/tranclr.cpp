// tranclr: synthetic data, pretraining, evaluation and reports.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "tranclr/checkpoint.hpp"
#include "tranclr/config.hpp"
#include "tranclr/dataset.hpp"
#include "tranclr/errors.hpp"
#include "tranclr/eval.hpp"
#include "tranclr/synth.hpp"
#include "tranclr/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#ifndef TRANCLR_VERSION
#define TRANCLR_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tranclr;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

// "--a.b value" and "--a.b=value" pairs left over after option parsing.
Overrides parse_overrides(const std::vector<std::string>& extras) {
  Overrides out;
  for (std::size_t k = 0; k < extras.size(); ++k) {
    const std::string& tok = extras[k];
    if (tok.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + tok + "'");
    const std::string body = tok.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else {
      if (k + 1 >= extras.size() || extras[k + 1].rfind("--", 0) == 0)
        throw UsageError("option '" + tok + "' needs a value");
      out.emplace_back(body, extras[++k]);
    }
  }
  return out;
}

// Creates `dir` by renaming a fully created sibling into place, so a partially
// created output directory is never observed.
void ensure_out_dir(const fs::path& dir) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError("output path " + dir.string() + " exists and is not a directory");
    return;
  }
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const fs::path tmp = parent / (dir.filename().string() + ".partial");
  fs::remove_all(tmp);
  fs::create_directory(tmp);
  fs::rename(tmp, dir);
}

void write_text(const fs::path& file, const std::string& text) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, file);
}

void write_run_manifest(const fs::path& dir, const std::string& command, const std::string& config_hash,
                        std::uint64_t seed, const json& extra) {
  json m{{"command", command}, {"config_hash", config_hash}, {"seed", seed}, {"code_version", TRANCLR_VERSION}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = *it;
  write_text(dir / "run.json", m.dump(2) + "\n");
}

DatasetManifest open_manifest(const fs::path& file) {
  if (!fs::exists(file)) throw UsageError("dataset manifest not found: " + file.string());
  DatasetManifest m = DatasetManifest::load(file);
  m.validate();
  return m;
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  int classes = 6;
  int per_class = 100;
  int test_per_class = 50;
  int joints = 10;
  int frames = 64;
  std::uint64_t seed = 1;
  std::uint64_t family_seed = SynthOptions{}.family_seed;
  double frequency_shift = 0.0;
  double amplitude_scale = 1.0;
  double noise = SynthOptions{}.noise;
  fs::path out_dir = "synth";
};

int run_synth(const SynthArgs& a) {
  if (a.classes < 1 || a.per_class < 1 || a.test_per_class < 0 || a.joints < 5 || a.frames < 2)
    throw UsageError("synth needs positive class and per-class counts, at least 5 joints and 2 frames");
  ensure_out_dir(a.out_dir);
  SynthOptions opt;
  opt.family_seed = a.family_seed;
  opt.frequency_shift = a.frequency_shift;
  opt.amplitude_scale = a.amplitude_scale;
  opt.noise = a.noise;

  std::vector<LabeledSequence> items;
  std::vector<int> subjects;
  auto add = [&](const SyntheticCorpus& c, const std::string& prefix, int subject) {
    for (std::size_t k = 0; k < c.sequences.size(); ++k) {
      char id[32];
      std::snprintf(id, sizeof id, "%s%05zu", prefix.c_str(), k);
      items.push_back({id, c.sequences[k], c.labels[k]});
      subjects.push_back(subject);
    }
  };
  add(synth_generate(a.classes, a.per_class, a.joints, a.frames, a.seed, opt), "train_", 1);
  if (a.test_per_class > 0)
    add(synth_generate(a.classes, a.test_per_class, a.joints, a.frames, a.seed + 0x9e3779b97f4a7c15ULL, opt), "test_",
        2);

  DatasetManifest m = write_cached_dataset(a.out_dir, "data.trcl", items, subjects, kLayoutSynthetic);
  m.splits["train"] = SplitRule{std::vector<int>{1}, std::nullopt, std::nullopt};
  m.splits["test"] = SplitRule{std::vector<int>{2}, std::nullopt, std::nullopt};
  m.splits["all"] = SplitRule{};
  m.save(a.out_dir / "manifest.json");
  const std::string text = m.to_json_string();
  write_run_manifest(a.out_dir, "synth", fnv1a_hex(text), a.seed,
                     {{"classes", a.classes}, {"per_class", a.per_class}, {"test_per_class", a.test_per_class},
                      {"joints", a.joints}, {"frames", a.frames}, {"manifest_checksum", fnv1a_hex(text)}});
  std::cout << "wrote " << items.size() << " sequences to " << (a.out_dir / "manifest.json").string() << '\n';
  return 0;
}

// ---- pretrain ------------------------------------------------------------

struct PretrainArgs {
  fs::path manifest;
  std::string split = "train";
  std::string profile = "desk";
  fs::path config;
  std::optional<std::uint64_t> seed;
  fs::path out_dir = "run";
  fs::path resume;
  int stop_after = -1;
  bool quiet = false;
};

int run_pretrain(const PretrainArgs& a, Overrides overrides) {
  if (a.seed) overrides.emplace_back("seed", std::to_string(*a.seed));
  const RunConfig config = resolve_config(parse_profile(a.profile), a.config, overrides);
  const DatasetManifest manifest = open_manifest(a.manifest);
  const auto train = load_dataset(manifest, a.split);
  if (train.empty()) throw UsageError("split '" + a.split + "' of " + a.manifest.string() + " is empty");
  ensure_out_dir(a.out_dir);
  write_text(a.out_dir / "config.json", json::parse(config.json).dump(2) + "\n");

  PretrainOptions opt;
  opt.out_dir = a.out_dir;
  if (!a.resume.empty()) opt.resume_from = a.resume;
  opt.stop_after_epoch = a.stop_after;
  opt.layout = manifest.layout;
  opt.verbose = !a.quiet;
  const PretrainResult res = pretrain(train, config, opt);
  write_run_manifest(a.out_dir, "pretrain", config.hash, config.train.seed,
                     {{"manifest", fs::absolute(a.manifest).string()},
                      {"split", a.split},
                      {"checkpoint", res.checkpoint.filename().string()},
                      {"metrics", res.metrics.filename().string()},
                      {"epochs_completed", res.state.epoch}});
  std::cout << "checkpoint " << res.checkpoint.string() << '\n';
  return 0;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::vector<fs::path> checkpoints;
  fs::path manifest;
  std::string train_split = "train";
  std::string test_split = "test";
  fs::path target_manifest;
  std::string protocol = "all";
  std::optional<std::uint64_t> seed;
  fs::path out_dir = "eval";
};

struct LoadedModel {
  Checkpoint ck;
  RunConfig config;  // checkpoint config with eval overrides applied
};

int run_eval(const EvalArgs& a, Overrides overrides) {
  static const std::vector<std::string> kProtocols{"linear", "transfer", "retrieval", "calibration", "all"};
  if (std::find(kProtocols.begin(), kProtocols.end(), a.protocol) == kProtocols.end())
    throw UsageError("unknown protocol '" + a.protocol + "' (expected linear, transfer, retrieval, calibration or all)");
  if (a.checkpoints.empty()) throw UsageError("eval needs at least one --checkpoint");
  for (const auto& [key, value] : overrides)
    if (key.rfind("eval.", 0) != 0) throw UsageError("eval accepts only eval.* overrides, got '" + key + "'");
  if (a.seed) overrides.emplace_back("eval.probe_seed", std::to_string(*a.seed));
  const bool all = a.protocol == "all";
  if (a.protocol == "transfer" && a.target_manifest.empty())
    throw UsageError("the transfer protocol needs --target-manifest");

  std::vector<LoadedModel> models;
  for (const auto& path : a.checkpoints) {
    if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path.string());
    Checkpoint ck = load_checkpoint(path);
    RunConfig cfg = config_from_json(ck.config.json, overrides);
    models.push_back({std::move(ck), std::move(cfg)});
  }
  const DatasetManifest manifest = open_manifest(a.manifest);
  const auto train = load_dataset(manifest, a.train_split);
  const auto test = load_dataset(manifest, a.test_split);
  const EvalConfig& ec = models.front().config.eval;
  ensure_out_dir(a.out_dir);

  json report;
  std::vector<std::string> hashes;
  for (const auto& m : models) hashes.push_back(m.ck.config.hash);
  report["checkpoints"] = hashes;

  std::optional<PredictionLog> linear_log;
  auto run_linear = [&]() {
    std::vector<StreamLogits> streams;
    json per_stream = json::array();
    for (const auto& m : models) {
      const LinearEvalResult r = linear_eval(m.ck.state.model, train, test, m.config.stream, m.config.eval.probe);
      per_stream.push_back({{"stream", to_string(m.config.stream)}, {"accuracy", r.accuracy}});
      std::vector<std::string> ids;
      std::vector<int> labels;
      for (const auto& e : r.log.entries) {
        ids.push_back(e.id);
        labels.push_back(e.truth);
      }
      streams.push_back({ids, labels, r.test_logits});
    }
    PredictionLog fused = ensemble_scores(streams);
    write_prediction_log(a.out_dir / "predictions_linear.jsonl", fused);
    report["linear"] = {{"accuracy", fused.accuracy()}, {"streams", per_stream}, {"samples", fused.size()}};
    linear_log = std::move(fused);
  };

  if (all || a.protocol == "linear" || a.protocol == "calibration") run_linear();
  if (all || a.protocol == "calibration") {
    const CalibrationReport cal = calibration_report(*linear_log, ec.n_bins);
    report["calibration"] = json::parse(calibration_json(cal));
    write_text(a.out_dir / "reliability.svg", reliability_svg(cal, "reliability (linear probe)"));
  }
  if (all || a.protocol == "retrieval") {
    const auto& m = models.front();
    const RetrievalResult r = retrieve(m.ck.state.model, train, test, m.config.stream, m.config.eval.retrieval_space);
    report["retrieval"] = {{"accuracy", r.accuracy},
                           {"space", m.config.eval.retrieval_space == RetrievalSpace::backbone ? "backbone"
                                                                                               : "projection"},
                           {"queries", r.neighbor.size()}};
  }
  if (all || a.protocol == "transfer") {
    if (a.target_manifest.empty()) {
      report["transfer"] = {{"skipped", "no --target-manifest given"}};
    } else {
      const DatasetManifest target = open_manifest(a.target_manifest);
      const auto ttrain = load_dataset(target, a.train_split);
      const auto ttest = load_dataset(target, a.test_split);
      const auto& m = models.front();
      const LinearEvalResult r = transfer_eval(m.ck.state.model, ttrain, ttest, m.config.stream, m.config.eval.probe);
      write_prediction_log(a.out_dir / "predictions_transfer.jsonl", r.log);
      report["transfer"] = {{"accuracy", r.accuracy}, {"target", fs::absolute(a.target_manifest).string()}};
    }
  }

  write_text(a.out_dir / "report.json", report.dump(2) + "\n");
  write_run_manifest(a.out_dir, "eval", models.front().config.hash, models.front().config.eval.probe.seed,
                     {{"protocol", a.protocol}, {"manifest", fs::absolute(a.manifest).string()}});
  std::cout << report.dump(2) << '\n';
  return 0;
}

// ---- report --------------------------------------------------------------

std::string loss_curve_svg(const std::vector<json>& epochs) {
  constexpr double W = 480, H = 320, L = 60, T = 30, PW = 390, PH = 240;
  double top = 1e-12;
  for (const auto& e : epochs) top = std::max(top, e.value("total", 0.0));
  std::ostringstream svg;
  svg.setf(std::ios::fixed);
  svg.precision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << PW << "\" height=\"" << PH
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  const std::array<std::pair<const char*, const char*>, 4> series{
      {{"total", "#000000"}, {"loss_intra", "#4c78a8"}, {"loss_inter", "#f58518"}, {"loss_cross", "#54a24b"}}};
  const double n = std::max<std::size_t>(epochs.size(), 2) - 1;
  for (const auto& [key, colour] : series) {
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < epochs.size(); ++k)
      svg << L + PW * k / n << ',' << T + PH - PH * epochs[k].value(key, 0.0) / top << ' ';
    svg << "\"/>\n";
  }
  int row = 0;
  for (const auto& [key, colour] : series)
    svg << "<text x=\"" << L + PW - 90 << "\" y=\"" << T + 16 + 14 * row++ << "\" font-family=\"sans-serif\""
        << " font-size=\"11\" fill=\"" << colour << "\">" << key << "</text>\n";
  svg << "<text x=\"" << L + PW / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">epoch</text>\n</svg>\n";
  return svg.str();
}

int run_report(const fs::path& run_dir, fs::path out_dir) {
  if (!fs::is_directory(run_dir)) throw UsageError("run directory not found: " + run_dir.string());
  if (out_dir.empty()) out_dir = run_dir;
  ensure_out_dir(out_dir);
  std::ostringstream md;
  md << "# Run report\n\n";
  bool found = false;

  const fs::path metrics = run_dir / "metrics.jsonl";
  if (fs::exists(metrics)) {
    found = true;
    std::ifstream in(metrics);
    std::vector<json> epochs;
    std::string line;
    while (std::getline(in, line)) {
      json row = json::parse(line, nullptr, false);
      if (!row.is_discarded() && row.value("kind", "") == "epoch") epochs.push_back(std::move(row));
    }
    write_text(out_dir / "loss_curve.svg", loss_curve_svg(epochs));
    md << "## Pretraining\n\n| epoch | intra | inter | cross | total | lr | queue |\n|---|---|---|---|---|---|---|\n";
    for (const auto& e : epochs)
      md << "| " << e.value("epoch", 0) + 1 << " | " << e.value("loss_intra", 0.0) << " | "
         << e.value("loss_inter", 0.0) << " | " << e.value("loss_cross", 0.0) << " | " << e.value("total", 0.0)
         << " | " << e.value("lr", 0.0) << " | " << e.value("queue_fill", 0) << " |\n";
    md << '\n';
  }

  const fs::path report_file = run_dir / "report.json";
  if (fs::exists(report_file)) {
    found = true;
    std::ifstream in(report_file);
    json report = json::parse(in, nullptr, false);
    if (report.is_discarded()) throw ParseError("malformed report " + report_file.string(), 0);
    md << "## Evaluation\n\n";
    for (const char* section : {"linear", "transfer", "retrieval"})
      if (report.contains(section) && report[section].contains("accuracy"))
        md << "- " << section << " accuracy: " << report[section]["accuracy"].get<double>() << '\n';
    if (report.contains("calibration")) {
      const json& c = report["calibration"];
      md << "- ECE: " << c["ece"].get<double>() << "\n- AECE: " << c["aece"].get<double>() << '\n';
      CalibrationReport cal;
      cal.ece = c["ece"].get<double>();
      cal.aece = c["aece"].get<double>();
      for (const auto& b : c["bins"])
        cal.bins.push_back({b["lower"].get<double>(), b["upper"].get<double>(), b["count"].get<int>(),
                            b["mean_confidence"].get<double>(), b["accuracy"].get<double>()});
      write_text(out_dir / "reliability.svg", reliability_svg(cal, "reliability (linear probe)"));
    }
  }
  if (!found) throw UsageError("no metrics.jsonl or report.json in " + run_dir.string());
  write_text(out_dir / "report.md", md.str());
  std::cout << md.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transitional-anchor contrastive pretraining for skeleton sequences"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TRANCLR_VERSION);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic skeleton-action dataset");
  synth->add_option("--classes", sa.classes, "Number of action classes");
  synth->add_option("--per-class", sa.per_class, "Training sequences per class");
  synth->add_option("--test-per-class", sa.test_per_class, "Test sequences per class");
  synth->add_option("--joints", sa.joints, "Joint count (multiple of 5)");
  synth->add_option("--frames", sa.frames, "Frames per sequence");
  synth->add_option("--seed", sa.seed, "Sample seed");
  synth->add_option("--family-seed", sa.family_seed, "Seed of the class templates");
  synth->add_option("--frequency-shift", sa.frequency_shift, "Added to every class frequency");
  synth->add_option("--amplitude-scale", sa.amplitude_scale, "Scales every class amplitude");
  synth->add_option("--noise", sa.noise, "Coordinate noise standard deviation");
  synth->add_option("--out-dir", sa.out_dir, "Output directory");

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
  pre->add_option("--manifest", pa.manifest, "Dataset manifest")->required();
  pre->add_option("--split", pa.split, "Split to pretrain on");
  pre->add_option("--profile", pa.profile, "Default profile: desk or paper");
  pre->add_option("--config", pa.config, "JSON config file layered over the profile");
  pre->add_option("--seed", pa.seed, "Run seed");
  pre->add_option("--out-dir", pa.out_dir, "Output directory");
  pre->add_option("--resume", pa.resume, "Checkpoint to resume from");
  pre->add_option("--stop-after", pa.stop_after, "Stop once this many epochs are complete");
  pre->add_flag("--quiet", pa.quiet, "No per-epoch progress on stderr");
  pre->allow_extras();
  pre->footer("Any config key can be overridden as --section.key value, e.g. --mgmc.enable_cross false");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate pretrained checkpoints");
  ev->add_option("--checkpoint", ea.checkpoints, "Checkpoint(s); several are ensembled")->required();
  ev->add_option("--manifest", ea.manifest, "Dataset manifest")->required();
  ev->add_option("--train-split", ea.train_split, "Probe training / retrieval gallery split");
  ev->add_option("--test-split", ea.test_split, "Probe test / retrieval query split");
  ev->add_option("--target-manifest", ea.target_manifest, "Transfer target dataset manifest");
  ev->add_option("--protocol", ea.protocol, "linear, transfer, retrieval, calibration or all");
  ev->add_option("--seed", ea.seed, "Probe seed");
  ev->add_option("--out-dir", ea.out_dir, "Output directory");
  ev->allow_extras();

  fs::path report_dir, report_out;
  auto* rep = app.add_subcommand("report", "Render plots and a summary for a run or eval directory");
  rep->add_option("--run-dir", report_dir, "Directory with metrics.jsonl and/or report.json")->required();
  rep->add_option("--out-dir", report_out, "Output directory (defaults to the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return run_synth(sa);
    if (pre->parsed()) return run_pretrain(pa, parse_overrides(pre->remaining()));
    if (ev->parsed()) return run_eval(ea, parse_overrides(ev->remaining()));
    if (rep->parsed()) return run_report(report_dir, report_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IngestionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
