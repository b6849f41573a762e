// Copyright 2026 The glyphemb Authors. Apache 2.0 License.

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace ge = glyphemb;
using ge::Backbone;
using ge::EmbedderKind;
using ge::GlyphBitmap;
using ge::SegmentedSentence;
using ge::Sentence;

namespace {

SegmentedSentence words(std::initializer_list<const char32_t*> ws) {
  SegmentedSentence s;
  for (const auto* w : ws) s.words.emplace_back(w);
  return s;
}

template <typename T>
ge::SegModel<T> small_seg(const std::vector<Sentence>& corpus, Backbone backbone, EmbedderKind kind,
                          std::uint64_t seed = 2, std::size_t resolution = 16) {
  const auto vocab = ge::Vocab::build(corpus);
  ge::SegConfig cfg;
  cfg.backbone = backbone;
  cfg.embedder.kind = kind;
  cfg.embedder.dim = 8;
  cfg.embedder.resolution = resolution;
  cfg.embedder.cnn = ge::parse_cnn_spec("4x3s2");
  cfg.hidden_dim = 10;
  ge::Rng grng(seed + 100);
  std::vector<GlyphBitmap> by_id;
  for (std::size_t i = 0; i < vocab.size(); ++i)
    by_id.push_back(i < ge::Vocab::kReserved ? GlyphBitmap(resolution)
                                             : ge::testing::random_bitmap(resolution, grng));
  ge::Rng rng(seed);
  return ge::SegModel<T>(cfg, vocab, ge::GlyphTable(resolution, std::move(by_id)), rng);
}

ge::TrainOptions quick_options(std::size_t steps) {
  ge::TrainOptions o;
  o.batch_size = 16;
  o.epochs = 1000;
  o.max_steps = steps;
  o.adam.lr = 1e-2;
  o.seed = 4;
  return o;
}

}  // namespace

TEST(Score, WorkedExample) {
  const auto s = ge::score_segmentation({words({U"A", U"B", U"C", U"DE"})}, {words({U"AB", U"C", U"DE"})});
  EXPECT_EQ(s.tp, 2u);
  EXPECT_EQ(s.pred_count, 4u);
  EXPECT_EQ(s.gold_count, 3u);
  EXPECT_NEAR(s.precision, 50.0, 1e-9);
  EXPECT_NEAR(s.recall, 200.0 / 3.0, 1e-9);
  EXPECT_NEAR(s.f1, 400.0 / 7.0, 1e-9);
  EXPECT_EQ(ge::format_seg_score(s), "P=50.00 R=66.67 F1=57.14");
}

TEST(Score, PerfectSegmentationScoresOneHundred) {
  ge::Rng rng(1);
  const auto gold = ge::testing::random_segmented(50, rng);
  const auto s = ge::score_segmentation(gold, gold);
  EXPECT_DOUBLE_EQ(s.f1, 100.0);
}

TEST(Score, MatchesBruteForceSpanCounting) {
  ge::Rng rng(2);
  const auto gold = ge::testing::random_segmented(300, rng, 20);
  std::vector<SegmentedSentence> pred;
  std::size_t tp = 0, np = 0, ng = 0;
  for (const auto& g : gold) {
    const auto text = g.text();
    ge::BoundaryLabeling l(text.size());
    for (auto& b : l) b = rng.uniform_index(2);
    pred.push_back(ge::decode_words(text, l));
    tp += ge::testing::brute_force_matches(pred.back(), g);
    np += pred.back().words.size();
    ng += g.words.size();
  }
  const auto s = ge::score_segmentation(pred, gold);
  EXPECT_EQ(s.tp, tp);
  EXPECT_EQ(s.pred_count, np);
  EXPECT_EQ(s.gold_count, ng);
  EXPECT_NEAR(s.f1, 2.0 * 100 * tp / static_cast<double>(np + ng), 1e-9);
}

TEST(Score, IsSymmetricInF1) {
  ge::Rng rng(3);
  const auto a = ge::testing::random_segmented(40, rng);
  std::vector<SegmentedSentence> b;
  for (const auto& s : a) b.push_back(ge::decode_words(s.text(), ge::BoundaryLabeling(s.text().size(), 1)));
  EXPECT_NEAR(ge::score_segmentation(a, b).f1, ge::score_segmentation(b, a).f1, 1e-12);
}

TEST(Score, RejectsMisalignedInput) {
  const auto a = words({U"AB"});
  EXPECT_THROW(ge::score_segmentation({a}, {a, a}), std::invalid_argument);
  EXPECT_THROW(ge::score_segmentation({words({U"AC"})}, {a}), std::invalid_argument);
}

TEST(PredictLabels, ThresholdsAndForcesTheLastBoundary) {
  const std::vector<double> p = {0.4, 0.6, 0.5};
  EXPECT_EQ(ge::predict_labels(p), (ge::BoundaryLabeling{0, 1, 1}));
  const std::vector<double> q = {0.9, 0.1};
  EXPECT_EQ(ge::predict_labels(q), (ge::BoundaryLabeling{1, 1}));
  EXPECT_EQ(ge::predict_labels(q, 0.95), (ge::BoundaryLabeling{0, 1}));
}

TEST(SegForward, GruIsCausal) {
  const std::vector<Sentence> corpus = {U"共同创造美好", U"共同中国的"};
  auto m = small_seg<double>(corpus, Backbone::gru, EmbedderKind::mixed);
  const auto a = ge::seg_forward(m, corpus[0]);
  const auto b = ge::seg_forward(m, corpus[1]);
  EXPECT_NEAR(a[0], b[0], 1e-12);
  EXPECT_NEAR(a[1], b[1], 1e-12);
  EXPECT_NE(a[2], b[2]);
}

TEST(SegForward, BiLstmSeesTheFuture) {
  const std::vector<Sentence> corpus = {U"共同创造美好", U"共同中国的"};
  auto m = small_seg<double>(corpus, Backbone::bilstm, EmbedderKind::id);
  const auto a = ge::seg_forward(m, corpus[0]);
  const auto b = ge::seg_forward(m, corpus[1]);
  EXPECT_GT(std::abs(a[0] - b[0]), 1e-9);
}

TEST(SegForward, PaddingDoesNotChangeOutputs) {
  ge::Rng rng(4);
  std::vector<Sentence> corpus;
  for (const auto& s : ge::testing::random_segmented(12, rng, 30)) corpus.push_back(s.text());
  for (auto backbone : {Backbone::gru, Backbone::bilstm}) {
    auto m = small_seg<double>(corpus, backbone, EmbedderKind::cnn);
    const auto batched = ge::seg_forward_batch(m, std::span<const Sentence>(corpus));
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto single = ge::seg_forward(m, corpus[i]);
      ASSERT_EQ(single.size(), batched[i].size());
      for (std::size_t t = 0; t < single.size(); ++t) EXPECT_NEAR(single[t], batched[i][t], 1e-12);
    }
  }
}

TEST(SegGradients, MatchFiniteDifferences) {
  ge::Rng rng(5);
  const auto gold = ge::testing::random_segmented(3, rng, 15);
  std::vector<Sentence> sents;
  std::vector<ge::BoundaryLabeling> labels;
  for (const auto& g : gold) {
    sents.push_back(g.text());
    labels.push_back(ge::label_boundaries(g));
  }
  for (auto backbone : {Backbone::gru, Backbone::bilstm})
    for (auto kind : {EmbedderKind::id, EmbedderKind::mixed}) {
      auto m = small_seg<double>(sents, backbone, kind);
      if (kind == EmbedderKind::mixed)
        for (auto& v : m.embedder().conv_bias(0).value.data()) v = 0.1;  // off the ReLU kink
      auto params = m.parameters();
      const double err = ge::testing::parameter_gradient_check(
          params, [&](ge::Tape<double>& tape) { return m.batch_loss(tape, sents, labels); }, rng, 6);
      EXPECT_LT(err, 1e-6) << ge::to_string(backbone) << "/" << ge::to_string(kind);
    }
}

TEST(TrainSeg, LearnsTheToyLexicon) {
  ge::Rng rng(6);
  const auto train = ge::testing::toy_segmentation_corpus(200, rng);
  const auto test = ge::testing::toy_segmentation_corpus(50, rng);
  auto m = small_seg<float>(ge::sentences_of(train), Backbone::bilstm, EmbedderKind::id);
  const double before = ge::evaluate_seg(m, test).f1;
  ge::train_seg(m, train, {}, quick_options(150));
  const double after = ge::evaluate_seg(m, test).f1;
  EXPECT_GE(after, 95.0) << "before " << before;
}

TEST(TrainSeg, FixedSeedIsDeterministic) {
  ge::Rng rng(7);
  const auto train = ge::testing::toy_segmentation_corpus(40, rng);
  auto a = small_seg<float>(ge::sentences_of(train), Backbone::gru, EmbedderKind::mixed);
  auto b = small_seg<float>(ge::sentences_of(train), Backbone::gru, EmbedderKind::mixed);
  auto opts = quick_options(20);
  opts.jitter = true;
  EXPECT_EQ(ge::train_seg(a, train, {}, opts).step_losses, ge::train_seg(b, train, {}, opts).step_losses);
}

TEST(SegmentText, KeepsEmptyLinesAndRawText) {
  ge::Rng rng(8);
  const auto gold = ge::testing::toy_segmentation_corpus(5, rng);
  auto lines = ge::sentences_of(gold);
  lines.insert(lines.begin() + 2, Sentence{});
  auto m = small_seg<float>(lines, Backbone::bilstm, EmbedderKind::id);
  const auto out = ge::segment_text(m, lines, 2);
  ASSERT_EQ(out.size(), lines.size());
  EXPECT_TRUE(out[2].words.empty());
  for (std::size_t i = 0; i < lines.size(); ++i) EXPECT_EQ(out[i].text(), lines[i]);
}

TEST(SegCheckpoint, RoundTripPreservesPredictions) {
  ge::Rng rng(9);
  const auto train = ge::testing::toy_segmentation_corpus(30, rng);
  auto m = small_seg<float>(ge::sentences_of(train), Backbone::gru, EmbedderKind::cnn);
  ge::train_seg(m, train, {}, quick_options(10));
  const auto dir = ge::testing::fresh_temp_dir("seg-ckpt");
  ge::save_seg(m, dir / "seg.ckpt");
  auto back = ge::load_seg(dir / "seg.ckpt");
  EXPECT_EQ(back.config().backbone, Backbone::gru);
  for (const auto& s : ge::sentences_of(train)) EXPECT_EQ(ge::seg_forward(back, s), ge::seg_forward(m, s));
  EXPECT_THROW(ge::load_lm(dir / "seg.ckpt"), ge::FormatError);
}

TEST(SegModel, RejectsBadThresholdAndLabels) {
  const std::vector<Sentence> corpus = {U"ab"};
  ge::SegConfig cfg;
  cfg.threshold = 1.0;
  ge::Rng rng(1);
  EXPECT_THROW(ge::SegModel<float>(cfg, ge::Vocab::build(corpus), ge::GlyphTable(), rng),
               std::invalid_argument);
  auto m = small_seg<float>(corpus, Backbone::gru, EmbedderKind::id);
  ge::Tape<float> tape;
  const std::vector<ge::BoundaryLabeling> wrong = {{1}};
  EXPECT_THROW(m.batch_loss(tape, corpus, wrong), std::invalid_argument);
}
