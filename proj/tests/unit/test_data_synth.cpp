#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "a2j/data_synth.hpp"
#include "property.hpp"

using namespace a2j;
using a2j::testing::for_all;
using a2j::testing::Gen;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "a2j_test_data_synth";
  fs::create_directories(dir);
  return dir / name;
}

struct Box {
  double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
};

Box hand_box(const SampleRecord& r, std::size_t h) {
  Box b;
  for (std::size_t j = 0; j < kJointsPerHand; ++j) {
    const auto& c = r.targets.joints[h * kJointsPerHand + j];
    b.x0 = std::min(b.x0, c.x);
    b.y0 = std::min(b.y0, c.y);
    b.x1 = std::max(b.x1, c.x);
    b.y1 = std::max(b.y1, c.y);
  }
  return b;
}

}  // namespace

TEST(Synth, SameSeedGivesBitIdenticalRecords) {
  SyntheticHandConfig cfg;
  EXPECT_EQ(generate_sample(cfg, 42), generate_sample(cfg, 42));
  EXPECT_NE(generate_sample(cfg, 42).image, generate_sample(cfg, 43).image);
  EXPECT_EQ(make_dataset(cfg, 5, 9), make_dataset(cfg, 5, 9));
}

TEST(Synth, RecordInvariantsHold) {
  SyntheticHandConfig cfg;
  for_all(60, 1, [&](Gen& g) {
    const auto r = generate_sample(cfg, g.size(0, 1u << 30));
    ASSERT_EQ(r.image.size(), 3 * 64 * 64u);
    ASSERT_EQ(r.targets.size(), kHands * kJointsPerHand);
    EXPECT_EQ(r.targets.hand_roots, (std::vector<std::size_t>{0, kJointsPerHand}));
    for (float v : r.image) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
      // Stored at 8-bit precision.
      EXPECT_EQ(v, float(std::lround(v * 255.0f)) / 255.0f);
    }
    EXPECT_TRUE(r.hand_count == 1 || r.hand_count == 2);
    for (std::size_t h = 0; h < kHands; ++h) {
      const auto& root = r.targets.joints[h * kJointsPerHand];
      for (std::size_t j = 0; j < kJointsPerHand; ++j) {
        const auto& c = r.targets.joints[h * kJointsPerHand + j];
        if (!c.valid) continue;
        EXPECT_GE(c.x, 0.0);
        EXPECT_LT(c.x, 64.0);
        EXPECT_GE(c.y, 0.0);
        EXPECT_LT(c.y, 64.0);
        EXPECT_LE(std::abs(c.depth - root.depth), kDefaultValidRadiusMm);
      }
    }
    std::size_t present = 0;
    for (std::size_t h = 0; h < kHands; ++h) present += r.targets.joints[h * kJointsPerHand].valid;
    EXPECT_EQ(present, r.hand_count);
  });
}

TEST(Synth, NoOverlapProbabilityKeepsHandBoxesDisjoint) {
  SyntheticHandConfig cfg;
  cfg.overlap_probability = 0;
  cfg.single_hand_probability = 0;
  for (std::uint64_t s = 0; s < 80; ++s) {
    const auto r = generate_sample(cfg, s);
    ASSERT_EQ(r.hand_count, 2);
    EXPECT_FALSE(r.overlap);
    const Box a = hand_box(r, 0), b = hand_box(r, 1);
    const bool disjoint = a.x1 < b.x0 || b.x1 < a.x0 || a.y1 < b.y0 || b.y1 < a.y0;
    EXPECT_TRUE(disjoint) << "seed " << s;
  }
}

TEST(Synth, OverlapIsCommonWhenRequested) {
  SyntheticHandConfig cfg;
  cfg.overlap_probability = 1;
  cfg.single_hand_probability = 0;
  std::size_t overlapping = 0;
  for (std::uint64_t s = 0; s < 40; ++s) overlapping += generate_sample(cfg, s).overlap;
  EXPECT_GT(overlapping, 30u);
}

TEST(Synth, BlobPeakLiesWithinHalfAPixelOfItsCentre) {
  for_all(50, 2, [](Gen& g) {
    const std::size_t size = 32;
    const double x = g.real(4, 28), y = g.real(4, 28);
    std::vector<float> img(3 * size * size, 0.0f);
    const float color[3] = {1.0f, 0.5f, 0.25f};
    render_blob(img, size, x, y, g.real(0.6, 2.0), color);
    const auto peak = std::size_t(std::max_element(img.begin(), img.begin() + size * size) - img.begin());
    const double px = double(peak % size) + 0.5, py = double(peak / size) + 0.5;
    EXPECT_LE(std::abs(px - x), 0.5 + 1e-12);
    EXPECT_LE(std::abs(py - y), 0.5 + 1e-12);
  });
}

TEST(Synth, JointPixelsAreBrighterThanBackground) {
  SyntheticHandConfig cfg;
  const auto r = generate_sample(cfg, 5);
  for (const auto& c : r.targets.joints) {
    if (!c.valid) continue;
    const std::size_t i = std::size_t(c.y) * 64 + std::size_t(c.x);
    const float brightest = std::max({r.image[i], r.image[4096 + i], r.image[8192 + i]});
    EXPECT_GT(brightest, 0.3f);
  }
}

TEST(Synth, DepthsSpanTheAnchorDepthRange) {
  const auto d = make_dataset(SyntheticHandConfig{}, 1000, 17);
  double lo = 0, hi = 0;
  for (const auto& r : d.records)
    for (std::size_t h = 0; h < kHands; ++h) {
      const auto& root = r.targets.joints[h * kJointsPerHand];
      for (std::size_t j = 0; j < kJointsPerHand; ++j) {
        const auto& c = r.targets.joints[h * kJointsPerHand + j];
        if (!c.valid) continue;
        lo = std::min(lo, c.depth - root.depth);
        hi = std::max(hi, c.depth - root.depth);
      }
    }
  EXPECT_LT(lo, -50.0);
  EXPECT_GT(hi, 50.0);
}

TEST(Synth, InvalidConfigNamesTheField) {
  SyntheticHandConfig cfg;
  cfg.overlap_probability = 1.5;
  try {
    generate_sample(cfg, 1);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("overlap"), std::string::npos);
  }
}

TEST(DatasetFile, RoundTripIsExact) {
  const auto d = make_dataset(SyntheticHandConfig{}, 6, 3);
  const auto path = temp_file("round_trip.bin");
  write_dataset(d, path);
  EXPECT_EQ(read_dataset(path), d);
}

TEST(DatasetFile, EmptyDatasetIsAValidFile) {
  Dataset d;
  const auto path = temp_file("empty.bin");
  write_dataset(d, path);
  const auto back = read_dataset(path);
  EXPECT_TRUE(back.records.empty());
  EXPECT_EQ(back.image_size, d.image_size);
}

TEST(DatasetFile, TruncationNamesTheFailingRecord) {
  const auto d = make_dataset(SyntheticHandConfig{}, 3, 4);
  const auto path = temp_file("truncated.bin");
  write_dataset(d, path);
  const auto full = fs::file_size(path);
  fs::resize_file(path, full - 10);
  try {
    read_dataset(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos) << e.what();
  }
}

TEST(DatasetFile, BadMagicAndMissingFileAreIoErrors) {
  const auto path = temp_file("garbage.bin");
  std::ofstream(path) << "definitely not a dataset";
  EXPECT_THROW(read_dataset(path), IoError);
  EXPECT_THROW(read_dataset(temp_file("missing.bin")), IoError);
}
