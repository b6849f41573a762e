// Copyright 2026 The glyphemb Authors. Apache 2.0 License.

#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

namespace ge = glyphemb;
using ge::BoundaryLabeling;
using ge::SegmentedSentence;
using ge::Vocab;

namespace {

std::vector<SegmentedSentence> parse(const std::string& text, ge::CorpusStats* st = nullptr) {
  std::istringstream in(text);
  return ge::parse_bakeoff(in, st);
}

SegmentedSentence seg(std::initializer_list<const char*> words) {
  SegmentedSentence s;
  for (const char* w : words) s.words.push_back(ge::utf8_decode(w));
  return s;
}

}  // namespace

TEST(ParseBakeoff, SplitsOnWhitespace) {
  const auto c = parse("共同  创造  美好\n");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], seg({"共同", "创造", "美好"}));
}

TEST(ParseBakeoff, SkipsEmptyLines) {
  ge::CorpusStats st;
  const auto c = parse("共同  创造\n\n   \n美好\n", &st);
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(st.sentences, 2u);
  EXPECT_EQ(st.empty_lines, 2u);
  EXPECT_EQ(st.lines, 4u);
}

TEST(ParseBakeoff, WordCountsSum) {
  ge::CorpusStats st;
  const auto c = parse("中国  的  人口\r\n大  雨\n", &st);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].words.size() + c[1].words.size(), 5u);
  EXPECT_EQ(st.words, 5u);
  // The carriage return is whitespace, not part of the last word.
  EXPECT_EQ(c[0].words.back(), U"人口");
}

TEST(ParseBakeoff, FullWidthSpaceSeparatesWords) {
  const auto c = parse("共同　创造\n");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].words.size(), 2u);
}

TEST(ParseBakeoff, InvalidUtf8ReportsTheLine) {
  try {
    parse("共同\n\xff\xfe\n");
    FAIL() << "expected Utf8Error";
  } catch (const ge::Utf8Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Utf8, RejectsOverlongAndSurrogates) {
  EXPECT_THROW(ge::utf8_decode("\xc0\xaf"), ge::Utf8Error);
  EXPECT_THROW(ge::utf8_decode("\xed\xa0\x80"), ge::Utf8Error);
  EXPECT_THROW(ge::utf8_decode("\xe4\xb8"), ge::Utf8Error);
  EXPECT_EQ(ge::utf8_decode("a雨\U0001F600"), (std::u32string{U'a', U'雨', U'\U0001F600'}));
  EXPECT_EQ(ge::utf8_encode(std::u32string(U"雨雪")), "雨雪");
}

TEST(BuildVocab, CountsDistinctCharacters) {
  const auto c = parse("大大  雨\n雪  大\n雷  雨\n");
  const auto v = Vocab::build(c);
  EXPECT_EQ(v.content_size(), 4u);
  EXPECT_EQ(v.size(), 4u + Vocab::kReserved);
  // Ranked by frequency, ties by code point: 大(3) 雨(2) then 雪 < 雷.
  EXPECT_EQ(v.character(4), U'大');
  EXPECT_EQ(v.character(5), U'雨');
  EXPECT_LT(v.character(6), v.character(7));
  EXPECT_EQ(v.frequency(4), 3u);
}

TEST(BuildVocab, FiveDistinctCharacters) {
  const auto v = Vocab::build(parse("一  雨  雪  雹  雷\n"));
  EXPECT_EQ(v.content_size(), 5u);
  for (int id = 0; id < Vocab::kReserved; ++id) EXPECT_FALSE(v.is_content(id));
}

TEST(BuildVocab, CapsAtFourThousand) {
  std::vector<ge::Sentence> corpus;
  ge::Sentence s;
  for (char32_t c = 0x4E00; c < 0x4E00 + 5000; ++c) {
    s.push_back(c);
    if (s.size() == 50) {
      corpus.push_back(s);
      s.clear();
    }
  }
  // Make the first 4000 characters strictly more frequent.
  ge::Sentence extra;
  for (char32_t c = 0x4E00; c < 0x4E00 + 4000; ++c) extra.push_back(c);
  corpus.push_back(extra);
  const auto v = Vocab::build(corpus);
  EXPECT_EQ(v.content_size(), 4000u);
  EXPECT_EQ(v.encode(static_cast<char32_t>(0x4E00 + 3999)), 4 + 3999);
  EXPECT_EQ(v.encode(static_cast<char32_t>(0x4E00 + 4000)), Vocab::kUnk);
}

TEST(BuildVocab, UnseenCharacterIsUnk) {
  const auto v = Vocab::build(parse("一  雨\n"));
  EXPECT_EQ(v.encode(U'雪'), Vocab::kUnk);
  EXPECT_NE(v.encode(U'雨'), Vocab::kUnk);
}

TEST(BuildVocab, EmptyCorpusIsAnError) {
  EXPECT_THROW(Vocab::build(std::vector<ge::Sentence>{}), std::invalid_argument);
  EXPECT_THROW(Vocab::build(std::vector<ge::Sentence>{ge::Sentence{}}), std::invalid_argument);
}

TEST(BuildVocab, DeterministicFileBytesAndRoundTrip) {
  ge::Rng rng(4);
  const auto corpus = ge::testing::random_segmented(300, rng);
  const auto a = Vocab::build(corpus, 50);
  const auto b = Vocab::build(corpus, 50);
  EXPECT_EQ(a.serialize(), b.serialize());
  const auto dir = ge::testing::fresh_temp_dir("vocab");
  a.save(dir / "v.tsv");
  const auto back = Vocab::load(dir / "v.tsv");
  EXPECT_EQ(back, a);
  EXPECT_EQ(back.serialize(), a.serialize());
  EXPECT_EQ(a.serialize().rfind("#glyphemb-vocab\tv1\tPAD=0\tUNK=1\tBOS=2\tEOS=3\tcontent=50\n", 0), 0u);
}

TEST(BuildVocab, UnkRate) {
  const auto v = Vocab::build(parse("一  雨\n"));
  EXPECT_DOUBLE_EQ(ge::unk_rate(v, {U"一雨雪雷"}), 0.5);
}

TEST(LabelBoundaries, WorkedExample) {
  const auto labels = ge::label_boundaries(seg({"这", "是", "一句", "话", "。"}));
  EXPECT_EQ(labels, (BoundaryLabeling{1, 1, 0, 1, 1, 1}));
}

TEST(LabelBoundaries, OneThreeCharacterWord) {
  EXPECT_EQ(ge::label_boundaries(seg({"共同体"})), (BoundaryLabeling{0, 0, 1}));
}

TEST(LabelBoundaries, SingleCharacterWordsAreAllOnes) {
  EXPECT_EQ(ge::label_boundaries(seg({"大", "雨", "了"})), (BoundaryLabeling{1, 1, 1}));
}

TEST(LabelBoundaries, EmptyWordIsAnError) {
  SegmentedSentence s;
  s.words = {U"大", U""};
  EXPECT_THROW(ge::label_boundaries(s), std::invalid_argument);
}

TEST(DecodeWords, SplitsAfterOnes) {
  const auto s = ge::decode_words(U"ABCDE", {0, 1, 0, 0, 1});
  EXPECT_EQ(s.words, (std::vector<std::u32string>{U"AB", U"CDE"}));
}

TEST(DecodeWords, AllOnesGiveSingleCharacters) {
  EXPECT_EQ(ge::decode_words(U"ABC", {1, 1, 1}).words, (std::vector<std::u32string>{U"A", U"B", U"C"}));
}

TEST(DecodeWords, TrailingZeroIsForcedToOne) {
  EXPECT_EQ(ge::decode_words(U"ABC", {0, 1, 0}).words, (std::vector<std::u32string>{U"AB", U"C"}));
}

TEST(DecodeWords, LengthMismatchIsAnError) {
  EXPECT_THROW(ge::decode_words(U"ABC", {1, 1}), std::invalid_argument);
}

TEST(DecodeWords, InvertsLabelBoundaries) {
  ge::Rng rng(8);
  for (const auto& g : ge::testing::random_segmented(2000, rng)) {
    const auto labels = ge::label_boundaries(g);
    ASSERT_EQ(labels.size(), g.text().size());
    ASSERT_EQ(labels.back(), 1);
    ASSERT_EQ(ge::decode_words(g.text(), labels), g);
  }
}

TEST(SplitDev, HoldsOutTheLastTenPercent) {
  std::vector<int> data(50);
  for (int i = 0; i < 50; ++i) data[i] = i;
  const auto [train, dev] = ge::split_dev(data, 0.1);
  EXPECT_EQ(train.size(), 45u);
  ASSERT_EQ(dev.size(), 5u);
  EXPECT_EQ(dev.front(), 45);
  EXPECT_THROW(ge::split_dev(data, 1.0), std::invalid_argument);
  EXPECT_EQ(ge::split_dev(data, 0.0).second.size(), 0u);
}

TEST(ReadRawLines, KeepsEmptyLinesAndDropsSpaces) {
  std::istringstream in("共同  创造\n\n美好\n");
  const auto lines = ge::read_raw_lines(in);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], U"共同创造");
  EXPECT_TRUE(lines[1].empty());
}
