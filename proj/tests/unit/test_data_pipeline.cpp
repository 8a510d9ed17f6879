#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "oodp/data_pipeline.hpp"

using namespace oodp;
using namespace oodp::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("oodp_test_" + name);
  fs::remove_all(dir);
  return dir;
}

TransitionRecord fake_record(bool changed, int tag) {
  TransitionRecord r;
  r.frame_t = env::Image(2, 2);
  r.frame_t1 = env::Image(2, 2);
  r.frame_t.rgb[0] = static_cast<std::uint8_t>(tag);
  r.pos_t = {10, static_cast<std::int16_t>(tag)};
  r.pos_t1 = changed ? std::array<std::int16_t, 2>{12, static_cast<std::int16_t>(tag)} : r.pos_t;
  r.env_id = tag;
  return r;
}

std::multiset<std::int32_t> tags(const std::vector<TransitionRecord>& rs) {
  std::multiset<std::int32_t> out;
  for (const auto& r : rs) out.insert(r.env_id);
  return out;
}

env::EnvLayout test_layout() { return env::generate_env_suite(1, 1, 13).train[0]; }

}  // namespace

TEST(Collect, Deterministic) {
  const auto l = test_layout();
  EXPECT_EQ(collect(l, 100, 5), collect(l, 100, 5));
  EXPECT_NE(collect(l, 100, 5), collect(l, 100, 6));
}

TEST(Collect, SingleConnectedRollout) {
  const auto l = test_layout();
  const auto rs = collect(l, 300, 2, 4);
  for (std::size_t i = 0; i + 1 < rs.size(); ++i) {
    EXPECT_EQ(rs[i].pos_t1, rs[i + 1].pos_t);
    EXPECT_EQ(rs[i].frame_t1, rs[i + 1].frame_t);
  }
  for (const auto& r : rs) EXPECT_EQ(r.env_id, 4);
}

TEST(Collect, ActionHistogramWithinFiveStandardErrors) {
  // 3x3 cells of one pixel keep 10^5 records small.
  const auto l = env::make_empty_layout(env::Variant::Platform, 3, 3, 1);
  const int n = 100000;
  const auto rs = collect(l, n, 17);
  std::array<int, env::kNumActions> hist{};
  for (const auto& r : rs) ++hist[static_cast<std::size_t>(r.action)];
  const double p = 1.0 / env::kNumActions;
  const double se = std::sqrt(p * (1 - p) / n);
  for (int a = 0; a < env::kNumActions; ++a) EXPECT_LT(std::abs(hist[a] / double(n) - p), 5 * se) << a;
}

TEST(Collect, FramesMatchReRenderedStates) {
  const auto l = test_layout();
  for (const auto& r : collect(l, 200, 3)) {
    EXPECT_EQ(r.frame_t, env::render(l, env::make_state(l, r.pos_t[0], r.pos_t[1])));
    EXPECT_EQ(r.frame_t1, env::render(l, env::make_state(l, r.pos_t1[0], r.pos_t1[1])));
    const auto m = r.motion();
    EXPECT_LE(std::abs(m[0]), 3);
    EXPECT_LE(std::abs(m[1]), 3);
  }
}

TEST(Collect, RejectsZeroSteps) { EXPECT_THROW(collect(test_layout(), 0, 1), std::invalid_argument); }

TEST(Balance, DownsamplesMajority) {
  std::vector<TransitionRecord> rs;
  for (int i = 0; i < 80; ++i) rs.push_back(fake_record(true, i));
  for (int i = 80; i < 100; ++i) rs.push_back(fake_record(false, i));
  const auto out = balance(rs, 9);
  ASSERT_EQ(out.size(), 40u);
  int changed = 0;
  for (const auto& r : out) changed += r.changed();
  EXPECT_EQ(changed, 20);
  // Output is a sub-multiset of the input.
  const auto in_tags = tags(rs);
  for (auto t : tags(out)) EXPECT_TRUE(in_tags.count(t));
  EXPECT_EQ(out, balance(rs, 9));
}

TEST(Balance, BalancedInputKeepsMultiset) {
  std::vector<TransitionRecord> rs;
  for (int i = 0; i < 30; ++i) rs.push_back(fake_record(i % 2 == 0, i));
  EXPECT_EQ(tags(balance(rs, 1)), tags(rs));
}

TEST(Balance, MissingClassIsNamed) {
  std::vector<TransitionRecord> still, moving;
  for (int i = 0; i < 5; ++i) {
    still.push_back(fake_record(false, i));
    moving.push_back(fake_record(true, i));
  }
  try {
    balance(still, 1);
    FAIL() << "expected BalanceError";
  } catch (const BalanceError& e) {
    EXPECT_NE(std::string(e.what()).find("no changed"), std::string::npos);
  }
  try {
    balance(moving, 1);
    FAIL() << "expected BalanceError";
  } catch (const BalanceError& e) {
    EXPECT_NE(std::string(e.what()).find("no changeless"), std::string::npos);
  }
}

TEST(Proposal, IdenticalFramesGiveEmptyMask) {
  const auto l = test_layout();
  const auto f = env::render(l, env::spawn_state(l, 0));
  EXPECT_EQ(compute_proposal_mask(f, f).count(), 0u);
}

TEST(Proposal, MovedSpriteCoversDilatedUnion) {
  const auto l = env::make_empty_layout(env::Variant::Platform, 10, 10);
  const env::AgentState a{40, 40, env::Mode::Airborne}, b{42, 40, env::Mode::Airborne};
  const auto mask = compute_proposal_mask(env::render(l, a), env::render(l, b));
  const int d = ProposalOptions{}.radius;
  // Every footprint pixel is marked, and nothing beyond the footprints
  // dilated by d. Where both sprites paint the same edge colour the raw
  // difference vanishes, so the dilated corners need not be full.
  auto inside = [](const env::AgentState& s, int y, int x, int pad) {
    return y >= s.u - pad && y < s.u + 8 + pad && x >= s.v - pad && x < s.v + 8 + pad;
  };
  for (int y = 0; y < 80; ++y) {
    for (int x = 0; x < 80; ++x) {
      const bool bit = mask.bits[static_cast<std::size_t>(y * 80 + x)] != 0;
      if (inside(a, y, x, 0) || inside(b, y, x, 0)) EXPECT_TRUE(bit) << y << "," << x;
      if (!inside(a, y, x, d) && !inside(b, y, x, d)) EXPECT_FALSE(bit) << y << "," << x;
    }
  }
  // The dilation reaches d pixels past the moving edges.
  EXPECT_TRUE(mask.bits[static_cast<std::size_t>((a.u - d) * 80 + 42)]);
  EXPECT_TRUE(mask.bits[static_cast<std::size_t>((b.u + 7 + d) * 80 + 42)]);
}

TEST(Proposal, ThresholdAboveRangeGivesEmptyMask) {
  const auto l = env::make_empty_layout(env::Variant::Platform, 10, 10);
  const auto fa = env::render(l, {40, 40, env::Mode::Airborne});
  const auto fb = env::render(l, {42, 40, env::Mode::Airborne});
  EXPECT_EQ(compute_proposal_mask(fa, fb, {2.01, 2}).count(), 0u);
}

TEST(Proposal, MonotoneInTau) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> byte(0, 255);
  env::Image a(16, 16), b(16, 16);
  for (auto& v : a.rgb) v = static_cast<std::uint8_t>(byte(rng));
  for (auto& v : b.rgb) v = static_cast<std::uint8_t>(byte(rng));
  for (std::size_t i = 0; i < b.rgb.size(); i += 3) b.rgb[i] = a.rgb[i];
  ProposalMask prev = compute_proposal_mask(a, b, {-1.0, 0});
  for (double tau = -0.9; tau <= 2.0; tau += 0.1) {
    const auto cur = compute_proposal_mask(a, b, {tau, 0});
    for (std::size_t i = 0; i < cur.bits.size(); ++i) ASSERT_LE(cur.bits[i], prev.bits[i]) << tau;
    prev = cur;
  }
}

TEST(Proposal, ShapeMismatchThrows) {
  EXPECT_THROW(compute_proposal_mask(env::Image(4, 4), env::Image(4, 5)), ShapeError);
}

TEST(FrameConversion, RoundTripsBytes) {
  const auto l = test_layout();
  const auto img = env::render(l, env::spawn_state(l, 1));
  EXPECT_EQ(frame_to_image(image_to_frame<float>(img)), img);
  EXPECT_EQ(frame_to_image(image_to_frame<double>(img)), img);
  const auto t = image_to_frame<double>(img);
  for (double v : t.span()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Dataset, RoundTripThousandRecords) {
  const auto l = test_layout();
  auto rs = collect(l, 600, 1, 0);
  const auto more = collect(l, 400, 2, 3);
  rs.insert(rs.end(), more.begin(), more.end());
  const auto dir = scratch_dir("roundtrip");
  write_dataset(rs, dir, {1, 2});
  const auto ds = read_dataset(dir);
  EXPECT_EQ(ds.records, rs);
  EXPECT_EQ(ds.info.count, 1000u);
  EXPECT_EQ(ds.info.height, 80);
  EXPECT_EQ(ds.info.width, 80);
  EXPECT_EQ(ds.info.num_actions, 5);
  EXPECT_EQ(ds.info.env_ids, (std::vector<std::int32_t>{0, 3}));
  EXPECT_EQ(ds.info.seeds, (std::vector<std::uint64_t>{1, 2}));
  fs::remove_all(dir);
}

TEST(Dataset, RandomRecordsRoundTrip) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> byte(0, 255), pos(-300, 300), act(0, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 1 + trial % 5, w = 1 + (trial * 3) % 7, n = trial * 3;
    std::vector<TransitionRecord> rs(static_cast<std::size_t>(n));
    for (auto& r : rs) {
      r.frame_t = env::Image(h, w);
      r.frame_t1 = env::Image(h, w);
      for (auto& v : r.frame_t.rgb) v = static_cast<std::uint8_t>(byte(rng));
      for (auto& v : r.frame_t1.rgb) v = static_cast<std::uint8_t>(byte(rng));
      r.action = static_cast<env::Action>(act(rng));
      r.pos_t = {static_cast<std::int16_t>(pos(rng)), static_cast<std::int16_t>(pos(rng))};
      r.pos_t1 = {static_cast<std::int16_t>(pos(rng)), static_cast<std::int16_t>(pos(rng))};
      r.env_id = pos(rng);
    }
    const auto dir = scratch_dir("random");
    write_dataset(rs, dir);
    ASSERT_EQ(read_dataset(dir).records, rs) << trial;
    fs::remove_all(dir);
  }
}

TEST(Dataset, CorruptedByteFailsChecksum) {
  const auto dir = scratch_dir("corrupt");
  write_dataset(collect(test_layout(), 20, 1), dir);
  {
    std::fstream f(dir / "records.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(1234);
    char c = 0;
    f.read(&c, 1);
    f.seekp(1234);
    c = static_cast<char>(c ^ 0x5a);
    f.write(&c, 1);
  }
  EXPECT_THROW(read_dataset(dir), DatasetChecksumError);
  fs::remove_all(dir);
}

TEST(Dataset, TruncatedFileIsDistinctError) {
  const auto dir = scratch_dir("truncated");
  write_dataset(collect(test_layout(), 20, 1), dir);
  fs::resize_file(dir / "records.bin", fs::file_size(dir / "records.bin") - 7);
  EXPECT_THROW(read_dataset(dir), DatasetTruncatedError);
  fs::remove_all(dir);
}

TEST(Dataset, VersionMismatchIsDistinctError) {
  const auto dir = scratch_dir("version");
  write_dataset(collect(test_layout(), 5, 1), dir);
  std::ifstream in(dir / "manifest.txt");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  text.replace(text.find("oodp-dataset 1"), 14, "oodp-dataset 9");
  std::ofstream(dir / "manifest.txt") << text;
  EXPECT_THROW(read_dataset(dir), DatasetVersionError);
  fs::remove_all(dir);
}

TEST(Dataset, EmptyListIsValid) {
  const auto dir = scratch_dir("empty");
  write_dataset({}, dir);
  EXPECT_TRUE(fs::exists(dir / "manifest.txt"));
  const auto ds = read_dataset(dir);
  EXPECT_TRUE(ds.records.empty());
  EXPECT_EQ(ds.info.count, 0u);
  fs::remove_all(dir);
}

TEST(Dataset, Crc32KnownValue) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()), 0xCBF43926u);
}
