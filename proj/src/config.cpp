#include "tranclr/config.hpp"

#include "tranclr/errors.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace tranclr {

using nlohmann::json;

Profile parse_profile(const std::string& name) {
  if (name == "paper") return Profile::paper;
  if (name == "desk") return Profile::desk;
  throw ConfigError("unknown profile '" + name + "' (expected paper or desk)");
}

std::string to_string(Profile profile) { return profile == Profile::paper ? "paper" : "desk"; }

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::rotate: return "rotate";
    case TransformKind::shear: return "shear";
    case TransformKind::crop_resize: return "crop_resize";
    case TransformKind::jitter: return "jitter";
  }
  return "?";
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

json defaults(Profile profile) {
  const bool desk = profile == Profile::desk;
  const EncoderConfig enc = desk ? EncoderConfig::desk() : EncoderConfig::paper();
  json j;
  j["profile"] = to_string(profile);
  j["seed"] = 1;
  j["train"] = {{"epochs", desk ? 50 : 300},
                {"lr", 0.1},
                {"lr_drop_epoch", desk ? 42 : 250},
                {"lr_drop_factor", 0.1},
                {"momentum", 0.9},
                {"weight_decay", 1e-4},
                {"batch_size", desk ? 32 : 128},
                {"checkpoint_every", desk ? 10 : 50}};
  j["loss"] = {{"objective", "tranclr"}};
  j["encoder"] = {{"stage_channels", enc.stage_channels},
                  {"stage_strides", enc.stage_strides},
                  {"temporal_kernel", enc.temporal_kernel},
                  {"feature_dim", enc.feature_dim},
                  {"projection_dim", enc.projection_dim},
                  {"ema", 0.999}};
  j["atac"] = {{"global_prob", 0.5}, {"enable_global", true}, {"enable_local", true},
               {"s_min", 2},         {"s_max", 3},            {"t_min", 16},
               {"t_max", 24},        {"kappa_l", 0.5},        {"kappa_r", 2.0}};
  j["mgmc"] = {{"enable_intra", true}, {"enable_inter", true}, {"enable_cross", true},
               {"inter_pairing", "derangement"}};
  j["queue"] = {{"capacity", desk ? 4096 : 65536}};
  j["softalign"] = {{"k", desk ? 256 : 8192}, {"tau_q", 0.1}, {"tau_k", 0.05}};
  j["infonce"] = {{"tau", 0.07}};
  j["augment"] = {{"rotate_prob", 1.0}, {"rotate_deg", 30.0},  {"shear_prob", 1.0},
                  {"shear", 0.3},       {"crop_prob", 1.0},    {"crop_min", 0.5},
                  {"crop_max", 1.0},    {"jitter_prob", 1.0},  {"jitter_sigma", 0.01}};
  j["eval"] = {{"n_bins", 15},
               {"retrieval_space", "backbone"},
               {"probe_epochs", 100},
               {"probe_lr", 0.1},
               {"probe_lr_drop_epoch", 80},
               {"probe_lr_drop_factor", 0.1},
               {"probe_momentum", 0.9},
               {"probe_weight_decay", 0.0},
               {"probe_batch", 128},
               {"probe_seed", 1}};
  j["data"] = {{"stream", "joint"}};
  j["log"] = {{"deterministic", false}};
  return j;
}

bool same_kind(const json& expected, const json& value) {
  if (expected.is_boolean()) return value.is_boolean();
  if (expected.is_number_integer()) return value.is_number_integer();
  if (expected.is_number()) return value.is_number();
  if (expected.is_string()) return value.is_string();
  if (expected.is_array()) {
    if (!value.is_array()) return false;
    for (const auto& v : value)
      if (!v.is_number_integer()) return false;
    return true;
  }
  return expected.type() == value.type();
}

const char* kind_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "integer list";
  return "object";
}

// Merges `layer` into `base`, rejecting keys that base does not have.
void merge(json& base, const json& layer, const std::string& prefix, std::vector<std::string>& errors) {
  for (auto it = layer.begin(); it != layer.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) {
      errors.push_back("unknown config key '" + key + "'");
      continue;
    }
    json& slot = base[it.key()];
    if (slot.is_object()) {
      if (!it->is_object())
        errors.push_back("config key '" + key + "' is a section, not a value");
      else
        merge(slot, *it, key, errors);
    } else if (!same_kind(slot, *it)) {
      errors.push_back("config key '" + key + "' expects a " + kind_name(slot));
    } else {
      slot = *it;
    }
  }
}

json parse_override_value(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded()) return json(text);
  return v;
}

void apply_override(json& base, const std::string& key, const std::string& text, std::vector<std::string>& errors) {
  json* node = &base;
  std::string rest = key;
  std::size_t dot;
  while ((dot = rest.find('.')) != std::string::npos) {
    const std::string head = rest.substr(0, dot);
    if (!node->is_object() || !node->contains(head) || !(*node)[head].is_object()) {
      errors.push_back("unknown config key '" + key + "'");
      return;
    }
    node = &(*node)[head];
    rest = rest.substr(dot + 1);
  }
  if (!node->contains(rest) || (*node)[rest].is_object()) {
    errors.push_back("unknown config key '" + key + "'");
    return;
  }
  json& slot = (*node)[rest];
  json value = parse_override_value(text);
  if (slot.is_string() && !value.is_string()) value = json(text);
  // Integral text such as "1" is acceptable for real-valued keys.
  if (slot.is_number_float() && value.is_number_integer()) value = json(value.get<double>());
  if (!same_kind(slot, value)) {
    errors.push_back("config key '" + key + "' expects a " + kind_name(slot) + ", got '" + text + "'");
    return;
  }
  slot = value;
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  return j.at(section).at(key).get<T>();
}

RunConfig build(const json& j) {
  std::vector<std::string> errors;
  auto check = [&errors](bool ok, const std::string& message) {
    if (!ok) errors.push_back(message);
  };

  RunConfig c;
  TrainConfig& t = c.train;
  try {
    t.profile = parse_profile(j.at("profile").get<std::string>());
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  const long long seed = j.at("seed").get<long long>();
  check(seed >= 0, "seed must be non-negative");
  t.seed = static_cast<std::uint64_t>(seed);
  t.epochs = get<int>(j, "train", "epochs");
  t.lr = get<double>(j, "train", "lr");
  t.lr_drop_epoch = get<int>(j, "train", "lr_drop_epoch");
  t.lr_drop_factor = get<double>(j, "train", "lr_drop_factor");
  t.momentum = get<double>(j, "train", "momentum");
  t.weight_decay = get<double>(j, "train", "weight_decay");
  t.batch_size = get<int>(j, "train", "batch_size");
  t.checkpoint_every = get<int>(j, "train", "checkpoint_every");
  check(t.epochs >= 1, "train.epochs must be at least 1");
  check(t.lr > 0, "train.lr must be positive");
  check(t.lr_drop_epoch < t.epochs, "train.lr_drop_epoch must be below train.epochs");
  check(t.lr_drop_factor > 0, "train.lr_drop_factor must be positive");
  check(t.momentum >= 0 && t.momentum < 1, "train.momentum must lie in [0, 1)");
  check(t.weight_decay >= 0, "train.weight_decay must be non-negative");
  check(t.batch_size >= 2, "train.batch_size must be at least 2");
  check(t.checkpoint_every >= 1, "train.checkpoint_every must be at least 1");

  const std::string objective = get<std::string>(j, "loss", "objective");
  if (objective == "tranclr")
    t.objective = Objective::tranclr;
  else if (objective == "infonce")
    t.objective = Objective::infonce;
  else
    errors.push_back("loss.objective must be tranclr or infonce, got '" + objective + "'");

  t.enable_intra = get<bool>(j, "mgmc", "enable_intra");
  t.enable_inter = get<bool>(j, "mgmc", "enable_inter");
  t.enable_cross = get<bool>(j, "mgmc", "enable_cross");
  try {
    t.inter_pairing = parse_inter_pairing(get<std::string>(j, "mgmc", "inter_pairing"));
  } catch (const ConfigError& e) {
    errors.push_back(std::string("mgmc.inter_pairing: ") + e.what());
  }

  EncoderConfig& enc = c.encoder;
  enc.stage_channels = get<std::vector<int>>(j, "encoder", "stage_channels");
  enc.stage_strides = get<std::vector<int>>(j, "encoder", "stage_strides");
  enc.temporal_kernel = get<int>(j, "encoder", "temporal_kernel");
  enc.feature_dim = get<int>(j, "encoder", "feature_dim");
  enc.projection_dim = get<int>(j, "encoder", "projection_dim");
  try {
    enc.validate();
  } catch (const std::invalid_argument& e) {
    errors.push_back(std::string("encoder: ") + e.what());
  }
  c.ema = get<double>(j, "encoder", "ema");
  check(c.ema >= 0 && c.ema <= 1, "encoder.ema must lie in [0, 1]");

  AtacParams& a = c.atac;
  a.global_prob = get<double>(j, "atac", "global_prob");
  a.enable_global = get<bool>(j, "atac", "enable_global");
  a.enable_local = get<bool>(j, "atac", "enable_local");
  a.local.s_min = get<int>(j, "atac", "s_min");
  a.local.s_max = get<int>(j, "atac", "s_max");
  a.local.t_min = get<int>(j, "atac", "t_min");
  a.local.t_max = get<int>(j, "atac", "t_max");
  a.local.kappa_l = get<double>(j, "atac", "kappa_l");
  a.local.kappa_r = get<double>(j, "atac", "kappa_r");
  check(a.global_prob >= 0 && a.global_prob <= 1, "atac.global_prob must lie in [0, 1]");
  check(a.enable_global || a.enable_local, "atac needs at least one enabled branch");
  check(a.local.s_min >= 1 && a.local.s_min <= a.local.s_max && a.local.s_max <= BodyPartition::kParts,
        "atac part range must satisfy 1 <= s_min <= s_max <= 5");
  check(a.local.t_min >= 1 && a.local.t_min <= a.local.t_max, "atac window range must satisfy 1 <= t_min <= t_max");
  check(a.local.kappa_l > 0 && a.local.kappa_l <= a.local.kappa_r,
        "atac scaling range must satisfy 0 < kappa_l <= kappa_r");

  c.queue_capacity = get<int>(j, "queue", "capacity");
  c.softalign_k = get<int>(j, "softalign", "k");
  c.tau_q = get<double>(j, "softalign", "tau_q");
  c.tau_k = get<double>(j, "softalign", "tau_k");
  c.infonce_tau = get<double>(j, "infonce", "tau");
  check(c.queue_capacity >= 1, "queue.capacity must be positive");
  check(c.softalign_k >= 1, "softalign.k must be positive");
  check(c.softalign_k <= c.queue_capacity, "softalign.k must not exceed queue.capacity");
  check(c.tau_q > 0 && c.tau_k > 0, "softalign temperatures must be positive");
  check(c.infonce_tau > 0, "infonce.tau must be positive");

  auto prob = [&](const char* key) {
    const double p = get<double>(j, "augment", key);
    check(p >= 0 && p <= 1, std::string("augment.") + key + " must lie in [0, 1]");
    return p;
  };
  const double rotate_deg = get<double>(j, "augment", "rotate_deg");
  const double shear = get<double>(j, "augment", "shear");
  const double crop_min = get<double>(j, "augment", "crop_min");
  const double crop_max = get<double>(j, "augment", "crop_max");
  const double sigma = get<double>(j, "augment", "jitter_sigma");
  check(rotate_deg >= 0 && shear >= 0 && sigma >= 0, "augment magnitudes must be non-negative");
  check(crop_min > 0 && crop_min <= crop_max && crop_max <= 1, "augment crop range must satisfy 0 < min <= max <= 1");
  c.augment.transforms = {{TransformKind::rotate, prob("rotate_prob"), rotate_deg, 0, 0},
                          {TransformKind::shear, prob("shear_prob"), shear, 0, 0},
                          {TransformKind::crop_resize, prob("crop_prob"), 0, crop_min, crop_max},
                          {TransformKind::jitter, prob("jitter_prob"), sigma, 0, 0}};

  EvalConfig& e = c.eval;
  e.n_bins = get<int>(j, "eval", "n_bins");
  const std::string space = get<std::string>(j, "eval", "retrieval_space");
  if (space == "backbone")
    e.retrieval_space = RetrievalSpace::backbone;
  else if (space == "projection")
    e.retrieval_space = RetrievalSpace::projection;
  else
    errors.push_back("eval.retrieval_space must be backbone or projection, got '" + space + "'");
  e.probe.epochs = get<int>(j, "eval", "probe_epochs");
  e.probe.lr = get<double>(j, "eval", "probe_lr");
  e.probe.lr_drop_epoch = get<int>(j, "eval", "probe_lr_drop_epoch");
  e.probe.lr_drop_factor = get<double>(j, "eval", "probe_lr_drop_factor");
  e.probe.momentum = get<double>(j, "eval", "probe_momentum");
  e.probe.weight_decay = get<double>(j, "eval", "probe_weight_decay");
  e.probe.batch_size = get<int>(j, "eval", "probe_batch");
  e.probe.seed = get<std::uint64_t>(j, "eval", "probe_seed");
  check(e.n_bins >= 1, "eval.n_bins must be at least 1");
  check(e.probe.epochs >= 1 && e.probe.batch_size >= 1 && e.probe.lr > 0, "eval probe recipe must be positive");

  try {
    c.stream = parse_stream_kind(get<std::string>(j, "data", "stream"));
  } catch (const std::invalid_argument& ex) {
    errors.push_back(std::string("data.stream: ") + ex.what());
  }
  c.deterministic_log = get<bool>(j, "log", "deterministic");

  if (!errors.empty()) {
    std::string message = "invalid configuration:";
    for (const auto& err : errors) message += "\n  - " + err;
    throw ConfigError(message);
  }
  c.json = j.dump();
  c.hash = fnv1a_hex(c.json);
  return c;
}

}  // namespace

std::string default_config_json(Profile profile) { return defaults(profile).dump(2); }

RunConfig resolve_config(Profile profile, const std::filesystem::path& config_file,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  json tree = defaults(profile);
  std::vector<std::string> errors;
  if (!config_file.empty()) {
    std::ifstream in(config_file);
    if (!in) throw ConfigError("cannot open config file " + config_file.string());
    std::stringstream text;
    text << in.rdbuf();
    json layer;
    try {
      layer = json::parse(text.str());
    } catch (const json::parse_error& e) {
      throw ParseError("config file " + config_file.string() + ": " + e.what(), static_cast<long long>(e.byte));
    }
    if (!layer.is_object()) throw ConfigError("config file " + config_file.string() + " must hold an object");
    // The profile in a file selects the base layer it is merged onto.
    if (layer.contains("profile") && layer["profile"].is_string()) {
      tree = defaults(parse_profile(layer["profile"].get<std::string>()));
    }
    merge(tree, layer, "", errors);
  }
  for (const auto& [key, value] : overrides) {
    if (key == "profile") {
      errors.push_back("profile cannot be overridden by key; select it with the profile option");
      continue;
    }
    apply_override(tree, key, value, errors);
  }
  if (errors.empty()) return build(tree);
  // Report invariant violations of the accepted keys alongside the key errors.
  std::string message = "invalid configuration:";
  for (const auto& err : errors) message += "\n  - " + err;
  try {
    build(tree);
  } catch (const ConfigError& e) {
    const std::string more = e.what();
    const auto first = more.find('\n');
    if (first != std::string::npos) message += more.substr(first);
  }
  throw ConfigError(message);
}

RunConfig config_from_json(const std::string& text,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  json tree = json::parse(text, nullptr, false);
  if (tree.is_discarded() || !tree.is_object()) throw ConfigError("stored configuration is not a JSON object");
  json base = defaults(parse_profile(tree.value("profile", std::string("desk"))));
  std::vector<std::string> errors;
  merge(base, tree, "", errors);
  for (const auto& [key, value] : overrides) apply_override(base, key, value, errors);
  if (!errors.empty()) {
    std::string message = "invalid configuration:";
    for (const auto& err : errors) message += "\n  - " + err;
    throw ConfigError(message);
  }
  return build(base);
}

}  // namespace tranclr
