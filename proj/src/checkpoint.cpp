#include "tranclr/checkpoint.hpp"

#include "tranclr/errors.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace tranclr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_doubles(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

class Reader {
 public:
  Reader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}

  template <typename T>
  T get(const char* what) {
    T value;
    bytes(reinterpret_cast<char*>(&value), sizeof(T), what);
    return value;
  }

  void bytes(char* dst, std::size_t count, const char* what) {
    const long long offset = static_cast<long long>(in_.tellg());
    if (!in_.read(dst, static_cast<std::streamsize>(count)))
      throw ParseError("checkpoint " + file_ + ": truncated " + what, offset);
  }

  Vector<double> doubles(std::size_t count, const char* what) {
    Vector<double> v(static_cast<Eigen::Index>(count));
    bytes(reinterpret_cast<char*>(v.data()), count * sizeof(double), what);
    return v;
  }

  long long offset() { return static_cast<long long>(in_.tellg()); }

 private:
  std::istream& in_;
  std::string file_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const RunConfig& config, const std::string& layout,
                     const JointGraph& graph, const TrainState& state, const std::string& rng_state) {
  nlohmann::json meta{{"config", nlohmann::json::parse(config.json)},
                      {"config_hash", config.hash},
                      {"epoch", state.epoch},
                      {"step", state.step},
                      {"layout", layout},
                      {"joints", graph.joints()},
                      {"stream", to_string(config.stream)},
                      {"ema", state.model.m},
                      {"rng", rng_state}};
  const std::string text = meta.dump();

  // Write to a sibling and rename so a crash never leaves a torn checkpoint.
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write("TRCK", 4);
    put<std::uint16_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(state.model.online.size()));
    put_doubles(out, state.model.online.data(), state.model.online.size());
    put_doubles(out, state.model.momentum.data(), state.model.momentum.size());
    put_doubles(out, state.velocity.data(), state.velocity.size());
    put<std::uint64_t>(out, static_cast<std::uint64_t>(state.model.online_stats.size()));
    put_doubles(out, state.model.online_stats.data(), state.model.online_stats.size());
    put_doubles(out, state.model.momentum_stats.data(), state.model.momentum_stats.size());
    const auto& q = state.queue;
    put<std::uint32_t>(out, q.capacity());
    put<std::uint32_t>(out, q.dim());
    put<std::uint32_t>(out, q.head());
    put<std::uint32_t>(out, q.fill());
    put_doubles(out, q.storage().data(), q.storage().size());
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint " + file.string());
  Reader r(in, file.string());
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "TRCK", 4) != 0) throw ParseError("checkpoint " + file.string() + ": bad magic", 0);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint " + file.string() + ": unsupported version " + std::to_string(version), 4);
  const auto meta_len = r.get<std::uint64_t>("meta length");
  if (meta_len > (1u << 26)) throw ParseError("checkpoint " + file.string() + ": implausible meta length", 6);
  const long long meta_offset = r.offset();
  std::string text(meta_len, '\0');
  r.bytes(text.data(), meta_len, "meta");
  const nlohmann::json meta = nlohmann::json::parse(text, nullptr, false);
  if (meta.is_discarded() || !meta.is_object())
    throw ParseError("checkpoint " + file.string() + ": malformed meta", meta_offset);

  Checkpoint ck;
  try {
    ck.config = config_from_json(meta.at("config").dump());
    ck.layout = meta.at("layout").get<std::string>();
    ck.joints = meta.at("joints").get<int>();
    ck.rng_state = meta.at("rng").get<std::string>();
    ck.state.epoch = meta.at("epoch").get<int>();
    ck.state.step = meta.at("step").get<long long>();
    if (meta.at("config_hash").get<std::string>() != ck.config.hash)
      throw ParseError("checkpoint " + file.string() + ": config hash mismatch", meta_offset);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + file.string() + ": " + e.what(), meta_offset);
  }

  const JointGraph graph = layout_graph(ck.layout, ck.joints);
  Rng unused = make_stream(0);
  ck.state.model = ModelPair<double>::create(ck.config.encoder, graph, unused, meta.value("ema", ck.config.ema));
  const auto count = r.get<std::uint64_t>("parameter count");
  if (count != static_cast<std::uint64_t>(ck.state.model.online.size()))
    throw ParseError("checkpoint " + file.string() + ": parameter count does not match its encoder config",
                     r.offset() - 8);
  ck.state.model.online = r.doubles(count, "online parameters");
  ck.state.model.momentum = r.doubles(count, "momentum parameters");
  ck.state.velocity = r.doubles(count, "optimizer state");
  const auto stats = r.get<std::uint64_t>("statistics count");
  if (stats != static_cast<std::uint64_t>(ck.state.model.online_stats.size()))
    throw ParseError("checkpoint " + file.string() + ": normalisation statistics do not match its encoder config",
                     r.offset() - 8);
  ck.state.model.online_stats = r.doubles(stats, "online statistics");
  ck.state.model.momentum_stats = r.doubles(stats, "momentum statistics");

  const auto capacity = r.get<std::uint32_t>("queue capacity");
  const auto dim = r.get<std::uint32_t>("queue dim");
  const auto head = r.get<std::uint32_t>("queue head");
  const auto fill = r.get<std::uint32_t>("queue fill");
  if (capacity == 0 || dim == 0 || static_cast<std::uint64_t>(capacity) * dim > (1ull << 32))
    throw ParseError("checkpoint " + file.string() + ": implausible queue shape", r.offset() - 16);
  Matrix<double> storage(dim, capacity);
  r.bytes(reinterpret_cast<char*>(storage.data()), storage.size() * sizeof(double), "queue storage");
  ck.state.queue = MemoryQueue<double>(static_cast<int>(capacity), static_cast<int>(dim));
  ck.state.queue.restore(std::move(storage), static_cast<int>(head), static_cast<int>(fill));
  return ck;
}

}  // namespace tranclr
