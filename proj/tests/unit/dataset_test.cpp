#include "support/fixtures.hpp"
#include "tranclr/dataset.hpp"
#include "tranclr/errors.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

using namespace tranclr;
using tranclr::testing::random_sequence;
using tranclr::testing::scratch_dir;

namespace {

std::vector<LabeledSequence> three_items() {
  Rng rng = make_stream(21);
  std::vector<LabeledSequence> items;
  for (int k = 0; k < 3; ++k) items.push_back({"s" + std::to_string(k), random_sequence(rng, 6, 10, 1, 4 + k), k});
  return items;
}

std::string ntu_record() {
  // 2 frames, 1 body, 25 joints; joint v at frame t is (t, v, 10 + v) plus ignored trailing fields.
  std::ostringstream os;
  os << "2\n";
  for (int t = 0; t < 2; ++t) {
    os << "1\n72057594037931101 0 1 1 1 1 0 0.02 -0.1 2\n25\n";
    for (int v = 0; v < 25; ++v) os << t << ' ' << v << ' ' << 10 + v << " 0.5 0.5 100 200 0 0 0 1 2\n";
  }
  return os.str();
}

}  // namespace

TEST(CacheRecord, RoundTripsAsFloat32) {
  Rng rng = make_stream(1);
  const auto seq = random_sequence(rng, 7, 10, 2, 5);
  std::stringstream buf;
  write_cache_record(buf, seq);
  const auto back = read_cache_record(buf, seq.graph());
  EXPECT_EQ(back.valid_frames(), 5);
  EXPECT_TRUE(back.data().isApprox(seq.data().cast<float>().cast<double>(), 0.0));
}

TEST(CacheRecord, HeaderLayout) {
  const auto seq = tranclr::testing::constant_sequence(1.5, 2, 5);
  std::stringstream buf;
  write_cache_record(buf, seq);
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 4u + 2 + 4 * 4 + 3 * 2 * 5 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "TRCL");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);  // version, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 3);  // C
  EXPECT_EQ(static_cast<unsigned char>(bytes[10]), 2);  // T
}

TEST(CacheRecord, BadMagicIsParseErrorAtOffset) {
  std::stringstream buf("XXXX0000000000000000000");
  try {
    read_cache_record(buf, layout_graph(kLayoutSynthetic, 5));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0);
  }
}

TEST(NtuReader, TwoFrameRecordMapsFields) {
  std::istringstream in(ntu_record());
  const auto seq = read_ntu_skeleton(in);
  ASSERT_EQ(seq.channels(), 3);
  ASSERT_EQ(seq.frames(), 2);
  ASSERT_EQ(seq.joints(), 25);
  ASSERT_EQ(seq.persons(), 1);
  for (int t = 0; t < 2; ++t)
    for (int v = 0; v < 25; ++v) {
      EXPECT_EQ(seq.at(0, t, v), t);
      EXPECT_EQ(seq.at(1, t, v), v);
      EXPECT_EQ(seq.at(2, t, v), 10 + v);
    }
}

TEST(NtuReader, TruncatedRecordIsParseError) {
  std::string text = ntu_record();
  text.resize(text.size() / 2);
  std::istringstream in(text);
  EXPECT_THROW(read_ntu_skeleton(in), ParseError);
}

TEST(LoadDataset, SplitSelectsEntriesInManifestOrder) {
  const auto dir = scratch_dir("split_order");
  auto manifest = write_cached_dataset(dir, "data.trcl", three_items(), {1, 2, 1}, kLayoutSynthetic);
  manifest.splits["odd"] = SplitRule{std::vector<int>{1}, std::nullopt, std::nullopt};
  manifest.splits["none"] = SplitRule{std::vector<int>{}, std::nullopt, std::nullopt};
  manifest.save(dir / "manifest.json");
  const auto loaded = DatasetManifest::load(dir / "manifest.json");

  const auto odd = load_dataset(loaded, "odd");
  ASSERT_EQ(odd.size(), 2u);
  EXPECT_EQ(odd[0].id, "s0");
  EXPECT_EQ(odd[1].id, "s2");
  EXPECT_EQ(odd[1].label, 2);
  EXPECT_EQ(odd[1].sequence.valid_frames(), 6);
  EXPECT_TRUE(load_dataset(loaded, "none").empty());
}

TEST(LoadDataset, MissingFileNamesTheEntry) {
  const auto dir = scratch_dir("missing_file");
  nlohmann::json j;
  j["layout"] = kLayoutSynthetic;
  j["entries"] = {{{"id", "walk_07"}, {"path", "absent.trcl"}, {"label", 0}}};
  j["splits"] = {{"all", nlohmann::json::object()}};
  std::ofstream(dir / "manifest.json") << j.dump();
  try {
    DatasetManifest::load(dir / "manifest.json");
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("walk_07"), std::string::npos);
  }
}

TEST(LoadDataset, CorruptRecordIsParseErrorWithOffset) {
  const auto dir = scratch_dir("corrupt");
  auto manifest = write_cached_dataset(dir, "data.trcl", three_items(), {}, kLayoutSynthetic);
  manifest.splits["all"] = SplitRule{};
  {
    std::fstream f(dir / "data.trcl", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(manifest.entries[1].offset);
    f.write("BAD!", 4);
  }
  try {
    load_dataset(manifest, "all");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), manifest.entries[1].offset);
    EXPECT_NE(std::string(e.what()).find("s1"), std::string::npos);
  }
}

TEST(LoadDataset, DuplicateIdsAndUnknownSplitAreConfigErrors) {
  const auto dir = scratch_dir("dupes");
  auto manifest = write_cached_dataset(dir, "data.trcl", three_items(), {}, kLayoutSynthetic);
  EXPECT_THROW(load_dataset(manifest, "nope"), ConfigError);
  manifest.entries[2].id = "s0";
  EXPECT_THROW(manifest.validate(), ConfigError);
}

TEST(LoadDataset, MalformedManifestIsParseError) {
  const auto dir = scratch_dir("bad_json");
  std::ofstream(dir / "manifest.json") << "{\"entries\": [";
  EXPECT_THROW(DatasetManifest::load(dir / "manifest.json"), ParseError);
}

TEST(LoadDataset, SkeletonTextEntriesAreRead) {
  const auto dir = scratch_dir("ntu_entry");
  std::ofstream(dir / "S001C001P001R001A001.skeleton") << ntu_record();
  DatasetManifest m;
  m.layout = kLayoutNtu25;
  m.root = dir;
  m.entries.push_back({"S001C001P001R001A001", "S001C001P001R001A001.skeleton", 0, 0, 1, 1});
  m.splits["xsub"] = SplitRule{std::vector<int>{1}, std::nullopt, std::nullopt};
  const auto items = load_dataset(m, "xsub");
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].sequence.joints(), 25);
}
