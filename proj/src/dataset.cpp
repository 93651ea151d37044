#include "tranclr/dataset.hpp"

#include "tranclr/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace tranclr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  std::array<char, sizeof(T)> bytes;
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, long long offset) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw ParseError("truncated cache record", offset);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<T>(v);
}

template <typename T>
std::optional<std::vector<T>> optional_list(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  return j.at(key).get<std::vector<T>>();
}

}  // namespace

bool SplitRule::matches(const ManifestEntry& e) const {
  auto contains = [](const auto& list, const auto& value) {
    return std::find(list.begin(), list.end(), value) != list.end();
  };
  if (subjects && !contains(*subjects, e.subject)) return false;
  if (cameras && !contains(*cameras, e.camera)) return false;
  if (ids && !contains(*ids, e.id)) return false;
  return true;
}

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.id).second) throw ConfigError("duplicate manifest id '" + e.id + "'");
    if (!fs::exists(root / e.path))
      throw IngestionError("manifest entry '" + e.id + "' refers to missing file " + (root / e.path).string());
  }
}

DatasetManifest DatasetManifest::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IngestionError("cannot open manifest " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& err) {
    throw ParseError("malformed manifest " + file.string() + ": " + err.what(), static_cast<long long>(err.byte));
  }
  DatasetManifest m;
  m.root = file.parent_path();
  try {
    m.layout = j.value("layout", std::string(kLayoutSynthetic));
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.id = je.at("id").get<std::string>();
      e.path = je.at("path").get<std::string>();
      e.offset = je.value("offset", std::int64_t{0});
      e.label = je.at("label").get<int>();
      e.subject = je.value("subject", 0);
      e.camera = je.value("camera", 0);
      m.entries.push_back(std::move(e));
    }
    if (j.contains("splits")) {
      for (const auto& [name, js] : j.at("splits").items()) {
        SplitRule rule;
        rule.subjects = optional_list<int>(js, "subjects");
        rule.cameras = optional_list<int>(js, "cameras");
        rule.ids = optional_list<std::string>(js, "ids");
        m.splits.emplace(name, std::move(rule));
      }
    }
  } catch (const json::exception& err) {
    throw ConfigError("invalid manifest " + file.string() + ": " + err.what());
  }
  m.validate();
  return m;
}

std::string DatasetManifest::to_json_string() const {
  json j;
  j["layout"] = layout;
  j["entries"] = json::array();
  for (const auto& e : entries)
    j["entries"].push_back({{"id", e.id}, {"path", e.path}, {"offset", e.offset}, {"label", e.label},
                            {"subject", e.subject}, {"camera", e.camera}});
  j["splits"] = json::object();
  for (const auto& [name, rule] : splits) {
    json js = json::object();
    if (rule.subjects) js["subjects"] = *rule.subjects;
    if (rule.cameras) js["cameras"] = *rule.cameras;
    if (rule.ids) js["ids"] = *rule.ids;
    j["splits"][name] = js;
  }
  return j.dump(1);
}

void DatasetManifest::save(const fs::path& file) const {
  std::ofstream out(file);
  if (!out) throw IngestionError("cannot write manifest " + file.string());
  out << to_json_string() << '\n';
}

std::vector<LabeledSequence> load_dataset(const DatasetManifest& manifest, const std::string& split) {
  auto it = manifest.splits.find(split);
  if (it == manifest.splits.end()) throw ConfigError("manifest has no split named '" + split + "'");
  std::vector<LabeledSequence> out;
  std::optional<JointGraph> graph;
  std::map<std::string, std::ifstream> open_files;
  for (const auto& e : manifest.entries) {
    if (!it->second.matches(e)) continue;
    const fs::path file = manifest.root / e.path;
    SkeletonSequence seq;
    if (file.extension() == ".skeleton") {
      try {
        seq = read_ntu_skeleton_file(file);
      } catch (const ParseError& err) {
        throw ParseError("entry '" + e.id + "': " + err.what(), err.offset());
      }
    } else {
      auto [pos, inserted] = open_files.try_emplace(file.string());
      if (inserted) pos->second.open(file, std::ios::binary);
      if (!pos->second) throw IngestionError("entry '" + e.id + "': cannot open " + file.string());
      pos->second.clear();
      pos->second.seekg(e.offset);
      if (!graph) {
        // Peek V from the header to build the layout graph once.
        const auto start = pos->second.tellg();
        char magic[4];
        pos->second.read(magic, 4);
        get_le<std::uint16_t>(pos->second, e.offset);
        get_le<std::uint32_t>(pos->second, e.offset);
        get_le<std::uint32_t>(pos->second, e.offset);
        const auto joints = get_le<std::uint32_t>(pos->second, e.offset);
        graph = layout_graph(manifest.layout, static_cast<int>(joints));
        pos->second.seekg(start);
      }
      try {
        seq = read_cache_record(pos->second, *graph);
      } catch (const ParseError& err) {
        throw ParseError("entry '" + e.id + "': " + err.what(), e.offset);
      }
    }
    out.push_back({e.id, std::move(seq), e.label});
  }
  return out;
}

void write_cache_record(std::ostream& out, const SkeletonSequence& seq) {
  out.write("TRCL", 4);
  put_le<std::uint16_t>(out, kCacheVersion);
  const int C = seq.channels(), T = seq.frames(), V = seq.joints(), P = seq.persons();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(C));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(T));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(V));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(P));
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < T; ++t)
      for (int v = 0; v < V; ++v)
        for (int p = 0; p < P; ++p)
          put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(seq.at(c, t, v, p))));
}

SkeletonSequence read_cache_record(std::istream& in, const JointGraph& graph) {
  const long long start = static_cast<long long>(in.tellg());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "TRCL", 4) != 0) throw ParseError("bad cache magic", start);
  const auto version = get_le<std::uint16_t>(in, start);
  if (version != kCacheVersion) throw ParseError("unsupported cache version " + std::to_string(version), start + 4);
  const auto C = get_le<std::uint32_t>(in, start), T = get_le<std::uint32_t>(in, start);
  const auto V = get_le<std::uint32_t>(in, start), P = get_le<std::uint32_t>(in, start);
  if (C == 0 || T == 0 || V == 0 || P == 0 || static_cast<int>(V) != graph.joints())
    throw ParseError("cache record has inconsistent dimensions", start + 6);
  Eigen::MatrixXd data(C, static_cast<Eigen::Index>(T) * V * P);
  const long long payload = start + 22;
  int valid = 0;
  for (std::uint32_t c = 0; c < C; ++c)
    for (std::uint32_t t = 0; t < T; ++t)
      for (std::uint32_t v = 0; v < V; ++v)
        for (std::uint32_t p = 0; p < P; ++p) {
          const float value = std::bit_cast<float>(get_le<std::uint32_t>(in, payload));
          data(c, (static_cast<Eigen::Index>(p) * T + t) * V + v) = value;
          if (value != 0.0f) valid = std::max(valid, static_cast<int>(t) + 1);
        }
  if (!data.allFinite()) throw ParseError("cache record holds non-finite values", payload);
  return SkeletonSequence(std::move(data), static_cast<int>(T), static_cast<int>(V), static_cast<int>(P), valid, graph);
}

SkeletonSequence read_ntu_skeleton(std::istream& in, int max_bodies) {
  std::string line;
  long long offset = 0;
  auto next_line = [&](const char* what) {
    const long long at = offset;
    if (!std::getline(in, line)) throw ParseError(std::string("unexpected end of file reading ") + what, at);
    offset += static_cast<long long>(line.size()) + 1;
    return at;
  };
  auto parse_int = [&](const char* what) {
    const long long at = next_line(what);
    std::istringstream is(line);
    long long v;
    if (!(is >> v) || v < 0) throw ParseError(std::string("expected non-negative integer ") + what, at);
    return static_cast<int>(v);
  };

  const int frames = parse_int("frame count");
  if (frames == 0) throw ParseError("skeleton file has zero frames", 0);
  constexpr int kJoints = 25;
  std::vector<std::vector<Eigen::Matrix3Xd>> bodies(frames);
  int persons = 1;
  for (int t = 0; t < frames; ++t) {
    const int body_count = parse_int("body count");
    for (int b = 0; b < body_count; ++b) {
      next_line("body info");
      const int joint_count = parse_int("joint count");
      if (joint_count != kJoints) throw ParseError("expected 25 joints, got " + std::to_string(joint_count), offset);
      Eigen::Matrix3Xd joints(3, kJoints);
      for (int v = 0; v < kJoints; ++v) {
        const long long at = next_line("joint");
        std::istringstream is(line);
        double x, y, z;
        if (!(is >> x >> y >> z)) throw ParseError("malformed joint record", at);
        joints.col(v) << x, y, z;
      }
      if (b < max_bodies) bodies[t].push_back(std::move(joints));
    }
    persons = std::max(persons, static_cast<int>(bodies[t].size()));
  }
  JointGraph graph = layout_graph(kLayoutNtu25, kJoints);
  Eigen::MatrixXd data = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(frames) * kJoints * persons);
  for (int t = 0; t < frames; ++t)
    for (std::size_t p = 0; p < bodies[t].size(); ++p)
      data.middleCols((static_cast<Eigen::Index>(p) * frames + t) * kJoints, kJoints) = bodies[t][p];
  return SkeletonSequence(std::move(data), frames, kJoints, persons, frames, std::move(graph));
}

SkeletonSequence read_ntu_skeleton_file(const fs::path& file, int max_bodies) {
  std::ifstream in(file);
  if (!in) throw IngestionError("cannot open skeleton file " + file.string());
  return read_ntu_skeleton(in, max_bodies);
}

DatasetManifest write_cached_dataset(const fs::path& dir, const std::string& cache_name,
                                     const std::vector<LabeledSequence>& items, const std::vector<int>& subjects,
                                     const std::string& layout) {
  fs::create_directories(dir);
  std::ofstream out(dir / cache_name, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write cache file " + (dir / cache_name).string());
  DatasetManifest m;
  m.layout = layout;
  m.root = dir;
  for (std::size_t k = 0; k < items.size(); ++k) {
    ManifestEntry e;
    e.id = items[k].id;
    e.path = cache_name;
    e.offset = static_cast<std::int64_t>(out.tellp());
    e.label = items[k].label;
    e.subject = k < subjects.size() ? subjects[k] : 0;
    write_cache_record(out, items[k].sequence);
    m.entries.push_back(std::move(e));
  }
  if (!out) throw IngestionError("failed writing cache file " + (dir / cache_name).string());
  return m;
}

}  // namespace tranclr
