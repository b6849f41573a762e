// Copyright 2026 The glyphemb Authors. Apache 2.0 License.

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <thread>

#include "test_support.hpp"

namespace ge = glyphemb;
using ge::GlyphBitmap;
using ge::JitterSpec;

namespace {

const ge::TrueTypeFont& test_font() {
  static const auto font = ge::TrueTypeFont::load(ge::testing::data_path("NotoSansSC-subset.ttf"));
  return font;
}

GlyphBitmap single_pixel(std::size_t x, std::size_t y, float v = 1.0f) {
  GlyphBitmap b(36);
  b.set(x, y, v);
  return b;
}

}  // namespace

TEST(TrueType, ReadsTheFixtureFont) {
  const auto& font = test_font();
  EXPECT_EQ(font.units_per_em(), 1000);
  EXPECT_TRUE(font.has_glyph(U'雨'));
  EXPECT_TRUE(font.has_glyph(U'。'));
  EXPECT_FALSE(font.has_glyph(U'A'));
}

TEST(TrueType, UnreadableFontThrows) {
  EXPECT_THROW(ge::TrueTypeFont::load("/nonexistent/font.ttf"), ge::FontError);
  EXPECT_THROW(ge::TrueTypeFont(std::vector<std::uint8_t>(64, 0)), ge::FontError);
}

TEST(GlyphBitmap, RejectsOutOfRangePixels) {
  EXPECT_THROW(GlyphBitmap(2, {0.0f, 0.5f, 1.0f, 1.5f}), std::invalid_argument);
  EXPECT_THROW(GlyphBitmap(2, {0.0f, -0.1f, 1.0f, 0.5f}), std::invalid_argument);
  EXPECT_THROW(GlyphBitmap(2, {0.0f, 0.5f}), std::invalid_argument);
}

TEST(BuildAtlas, HorizontalStrokeLightsTheCenterRow) {
  const std::vector<char32_t> cs = {U'一'};
  auto built = ge::build_atlas(cs, test_font(), 36);
  ASSERT_EQ(built.atlas.size(), 1u);
  EXPECT_TRUE(built.missing.empty());
  const auto& g = built.atlas.get(U'一');
  // Some row within two pixels of the vertical center carries ink across
  // the middle of the glyph.
  float best = 0;
  for (std::size_t y = 16; y <= 20; ++y) best = std::max(best, g.at(18, y));
  EXPECT_GT(best, 0.5f);
  // And the top/bottom quarters are empty: it is a single horizontal stroke.
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 36; ++x) EXPECT_EQ(g.at(x, y), 0.0f);
}

TEST(BuildAtlas, EveryGlyphKeepsATwoPixelMargin) {
  const auto text = std::string("一雨雪雹雷这是句话。口喊员含向昌明晶土士人入打提抓乙亿忆共同创造美好中国，的了在有和大");
  const auto cs = ge::charset_from_text(text);
  auto built = ge::build_atlas(cs, test_font(), 36);
  EXPECT_EQ(built.atlas.size(), cs.size());
  EXPECT_TRUE(built.missing.empty());
  for (char32_t c : cs) {
    const auto& g = built.atlas.get(c);
    EXPECT_EQ(g.resolution(), 36u);
    EXPECT_FALSE(g.is_blank()) << ge::utf8_encode(c);
    EXPECT_GE(g.content_margin(), 2u) << ge::utf8_encode(c);
    for (float v : g.pixels()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(BuildAtlas, MissingCharacterBecomesBlankWithWarning) {
  const std::vector<char32_t> cs = {U'雨', U'A'};
  auto built = ge::build_atlas(cs, test_font(), 36);
  ASSERT_EQ(built.missing.size(), 1u);
  EXPECT_EQ(built.missing[0], U'A');
  EXPECT_TRUE(built.atlas.get(U'A').is_blank());
  EXPECT_FALSE(built.atlas.get(U'雨').is_blank());
}

TEST(BuildAtlas, DeterministicBytes) {
  const auto cs = ge::charset_from_text("雨雪雹雷口喊");
  const auto a = ge::build_atlas(cs, test_font(), 36).atlas.serialize();
  const auto b = ge::build_atlas(cs, test_font(), 36).atlas.serialize();
  EXPECT_EQ(a, b);
}

TEST(BuildAtlas, RejectsBadArguments) {
  const std::vector<char32_t> none;
  EXPECT_THROW(ge::build_atlas(none, test_font(), 36), std::invalid_argument);
  const std::vector<char32_t> one = {U'一'};
  EXPECT_THROW(ge::build_atlas(one, test_font(), 15), std::invalid_argument);
}

TEST(BuildAtlas, SharedComponentsShareInk) {
  // 口 appears as the left component of 喊: the left third of 喊 overlaps
  // the left third of 口 far more than a character without it does.
  const auto cs = ge::charset_from_text("口喊一");
  auto atlas = ge::build_atlas(cs, test_font(), 36).atlas;
  auto left_ink = [&](char32_t c) {
    double s = 0;
    for (std::size_t y = 0; y < 36; ++y)
      for (std::size_t x = 0; x < 12; ++x) s += atlas.get(c).at(x, y);
    return s;
  };
  EXPECT_GT(left_ink(U'喊'), 3 * left_ink(U'一'));
}

TEST(Atlas, RoundTripIsByteExact) {
  const auto cs = ge::charset_from_text("一雨雪雹雷这是句话。");
  auto atlas = ge::build_atlas(cs, test_font(), 36).atlas;
  const auto dir = ge::testing::fresh_temp_dir("atlas-rt");
  atlas.save(dir / "a.atlas");
  auto back = ge::GlyphAtlas::load(dir / "a.atlas");
  EXPECT_EQ(back.serialize(), atlas.serialize());
  EXPECT_EQ(back.font_name(), atlas.font_name());
  for (char32_t c : cs) EXPECT_EQ(back.get(c), atlas.get(c));
}

TEST(Atlas, RejectsCorruptFiles) {
  ge::GlyphAtlas atlas(36, "x");
  atlas.insert(U'一', GlyphBitmap(36));
  auto bytes = atlas.serialize();
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(ge::GlyphAtlas::deserialize(bad), ge::FormatError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(ge::GlyphAtlas::deserialize(bad), ge::FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(ge::GlyphAtlas::deserialize(bad), ge::FormatError);
}

TEST(Atlas, IntensitiesQuantizeToEightBits) {
  ge::GlyphAtlas atlas(16, "x");
  GlyphBitmap g(16);
  g.set(3, 4, 0.5f);
  atlas.insert(U'一', g);
  EXPECT_FLOAT_EQ(atlas.get(U'一').at(3, 4), 128.0f / 255.0f);
}

TEST(GetGlyph, MemoizesDecodes) {
  const auto cs = ge::charset_from_text("雨雪");
  auto atlas = ge::build_atlas(cs, test_font(), 36).atlas;
  const GlyphBitmap first = atlas.get(U'雨');
  const GlyphBitmap second = atlas.get(U'雨');
  EXPECT_EQ(first, second);
  EXPECT_EQ(atlas.decode_count(), 1u);
  for (int i = 0; i < 1000; ++i) atlas.get(U'雨');
  EXPECT_EQ(atlas.decode_count(), 1u);
  atlas.get(U'雪');
  EXPECT_EQ(atlas.decode_count(), 2u);
}

TEST(GetGlyph, UnknownCharacterIsBlankWithoutDecoding) {
  ge::GlyphAtlas atlas(36, "x");
  EXPECT_TRUE(atlas.get(U'雨').is_blank());
  EXPECT_EQ(atlas.decode_count(), 0u);
}

TEST(GetGlyph, ConcurrentFirstAccessDecodesOnce) {
  const auto cs = ge::charset_from_text("雨雪雹雷");
  auto atlas = ge::build_atlas(cs, test_font(), 36).atlas;
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 200; ++i)
        for (char32_t c : cs) atlas.get(c);
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(atlas.decode_count(), cs.size());
}

TEST(Jitter, ZeroOffsetIsIdentity) {
  ge::Rng rng(1);
  const auto b = ge::testing::random_bitmap(36, rng);
  EXPECT_EQ(ge::jitter(b, {0, 0}), b);
}

TEST(Jitter, TranslatesASinglePixel) {
  const auto out = ge::jitter(single_pixel(5, 5), {2, -1});
  for (std::size_t y = 0; y < 36; ++y)
    for (std::size_t x = 0; x < 36; ++x) EXPECT_EQ(out.at(x, y), (x == 7 && y == 4) ? 1.0f : 0.0f);
}

TEST(Jitter, VacatedPixelsAreZero) {
  GlyphBitmap full(36, std::vector<float>(36 * 36, 1.0f));
  const auto out = ge::jitter(full, {1, 2});
  for (std::size_t y = 0; y < 36; ++y)
    for (std::size_t x = 0; x < 36; ++x) EXPECT_EQ(out.at(x, y), (x >= 1 && y >= 2) ? 1.0f : 0.0f);
}

TEST(Jitter, InverseRestoresInteriorContent) {
  ge::Rng rng(2);
  for (const auto& s : ge::jitter_support()) {
    GlyphBitmap b(36);
    for (std::size_t y = 2; y < 34; ++y)
      for (std::size_t x = 2; x < 34; ++x) b.set(x, y, static_cast<float>(rng.uniform_index(4)) / 3.0f);
    EXPECT_EQ(ge::jitter(ge::jitter(b, s), {-s.dx, -s.dy}), b);
  }
}

TEST(Jitter, PreservesPixelMultisetWithMargin) {
  ge::Rng rng(3);
  GlyphBitmap b(36);
  for (std::size_t y = 2; y < 34; ++y)
    for (std::size_t x = 2; x < 34; ++x) b.set(x, y, static_cast<float>(rng.uniform_index(5)) / 4.0f);
  auto nonzero = [](const GlyphBitmap& g) {
    std::vector<float> v;
    for (float p : g.pixels())
      if (p != 0) v.push_back(p);
    std::sort(v.begin(), v.end());
    return v;
  };
  for (const auto& s : ge::jitter_support()) EXPECT_EQ(nonzero(ge::jitter(b, s)), nonzero(b));
}

TEST(Jitter, OffsetOutsideTheSetIsAnError) {
  EXPECT_THROW(ge::jitter(GlyphBitmap(36), {3, 0}), std::invalid_argument);
  EXPECT_THROW(ge::jitter(GlyphBitmap(36), {0, -3}), std::invalid_argument);
}

TEST(SampleJitter, SupportHasTwentyFiveElements) {
  const auto s = ge::jitter_support();
  std::set<std::pair<int, int>> distinct;
  for (const auto& j : s) {
    EXPECT_LE(std::abs(j.dx), 2);
    EXPECT_LE(std::abs(j.dy), 2);
    distinct.insert({j.dx, j.dy});
  }
  EXPECT_EQ(distinct.size(), 25u);
}

TEST(SampleJitter, FixedSeedIsReproducible) {
  ge::Rng a(77), b(77);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(ge::sample_jitter(a), ge::sample_jitter(b));
}

TEST(SampleJitter, EmpiricallyUniform) {
  ge::Rng rng(2024);
  std::map<std::pair<int, int>, int> counts;
  for (int i = 0; i < 25000; ++i) {
    const auto j = ge::sample_jitter(rng);
    ++counts[{j.dx, j.dy}];
  }
  EXPECT_EQ(counts.size(), 25u);
  for (const auto& [k, n] : counts) {
    EXPECT_GE(n, 880);
    EXPECT_LE(n, 1120);
  }
}
