// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Word segmentation as per-character boundary prediction, and word-level
// precision/recall/F1 scoring by exact span match.

#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "glyphemb/embedder.hpp"
#include "glyphemb/recurrent.hpp"
#include "glyphemb/training.hpp"

namespace glyphemb {

enum class Backbone { gru, bilstm };

inline std::string to_string(Backbone b) { return b == Backbone::gru ? "gru" : "bilstm"; }

inline Backbone parse_backbone(const std::string& s) {
  if (s == "gru") return Backbone::gru;
  if (s == "bilstm") return Backbone::bilstm;
  throw std::invalid_argument("unknown backbone '" + s + "' (gru|bilstm)");
}

struct SegConfig {
  Backbone backbone = Backbone::bilstm;
  EmbedderConfig embedder{EmbedderKind::id, 100, kDefaultResolution, seg_cnn_spec()};
  std::size_t hidden_dim = 100;
  bool oov_glyphs = false;
  double threshold = 0.5;

  void validate() const {
    embedder.validate();
    if (hidden_dim == 0) throw std::invalid_argument("seg: hidden_dim must be positive");
    if (!(threshold > 0.0 && threshold < 1.0))
      throw std::invalid_argument("seg: threshold must lie in (0, 1)");
  }
};

template <typename T>
class SegModel {
 public:
  SegModel(SegConfig config, Vocab vocab, GlyphTable glyphs, Rng& rng)
      : config_(std::move(config)), vocab_(std::move(vocab)), glyphs_(std::move(glyphs)) {
    config_.validate();
    if (config_.embedder.uses_glyphs() && glyphs_.size() != vocab_.size())
      throw std::invalid_argument("seg: glyph table does not cover the vocabulary");
    if (config_.embedder.uses_glyphs() && glyphs_.resolution() != config_.embedder.resolution)
      throw std::invalid_argument("seg: glyph table resolution differs from embedder config");
    const std::size_t k = config_.embedder.dim, h = config_.hidden_dim;
    embedder_ = EmbedderModel<T>(config_.embedder, vocab_.size(), rng);
    if (config_.backbone == Backbone::gru) {
      gru_ = GruWeights<T>("gru", k, h, rng);
    } else {
      lstm_fw_ = LstmWeights<T>("lstm_fw", k, h, rng);
      lstm_bw_ = LstmWeights<T>("lstm_bw", k, h, rng);
    }
    head_w_ = uniform_parameter<T>("head/W", {head_width(), 1}, head_width(), 1, rng);
    head_b_ = zero_parameter<T>("head/b", {1});
  }

  const SegConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  const GlyphTable& glyphs() const { return glyphs_; }
  EmbedderModel<T>& embedder() { return embedder_; }
  GruWeights<T>& gru() { return gru_; }
  LstmWeights<T>& lstm_forward() { return lstm_fw_; }
  LstmWeights<T>& lstm_backward() { return lstm_bw_; }
  Parameter<T>& head_w() { return head_w_; }
  Parameter<T>& head_b() { return head_b_; }

  /// Width of the state the head reads: H, or 2H for the bidirectional LSTM.
  std::size_t head_width() const {
    return config_.backbone == Backbone::bilstm ? 2 * config_.hidden_dim : config_.hidden_dim;
  }

  std::vector<Parameter<T>*> parameters() {
    auto out = embedder_.parameters();
    if (config_.backbone == Backbone::gru) {
      for (auto* p : gru_.parameters()) out.push_back(p);
    } else {
      for (auto* p : lstm_fw_.parameters()) out.push_back(p);
      for (auto* p : lstm_bw_.parameters()) out.push_back(p);
    }
    out.push_back(&head_w_);
    out.push_back(&head_b_);
    return out;
  }

  struct Layout {
    std::size_t rows = 0;
    std::size_t steps = 0;
    std::vector<std::size_t> lengths;
    std::vector<std::uint8_t> mask;  // step-major
  };

  /// Boundary logits [(steps * rows) x 1], step-major.
  Var batch_logits(Tape<T>& tape, std::span<const Sentence> sentences, Layout& layout,
                   Rng* jitter_rng = nullptr, const GlyphProbe& probe = {}) {
    if (sentences.empty()) throw std::invalid_argument("seg: empty batch");
    std::vector<std::vector<int>> ids;
    std::vector<std::u32string> chars;
    for (const auto& s : sentences) {
      if (s.empty()) throw std::invalid_argument("seg: empty sentence");
      ids.push_back(vocab_.encode(s));
      chars.push_back(s);
    }
    const TokenBatch batch = make_token_batch(ids, chars, &glyphs_);
    layout.rows = batch.rows();
    layout.steps = batch.steps;
    layout.lengths = batch.lengths;
    layout.mask.assign(layout.rows * layout.steps, 0);
    for (std::size_t r = 0; r < layout.rows; ++r)
      for (std::size_t t = 0; t < layout.lengths[r]; ++t) layout.mask[t * layout.rows + r] = 1;

    auto embedded = embed_token_batch(tape, embedder_, batch,
                                      config_.embedder.uses_glyphs() ? &glyphs_ : nullptr,
                                      jitter_rng, probe);
    std::span<const Var> xs(embedded);
    std::span<const std::size_t> lens(batch.lengths);
    std::vector<Var> states;
    if (config_.backbone == Backbone::gru) {
      states = run_gru(tape, xs, gru_.bind(tape), lens);
    } else {
      auto fw = run_lstm(tape, xs, lstm_fw_.bind(tape), lens, false);
      auto bw = run_lstm(tape, xs, lstm_bw_.bind(tape), lens, true);
      for (std::size_t t = 0; t < fw.size(); ++t) states.push_back(concat_cols(tape, fw[t], bw[t]));
    }
    Var stacked = concat_rows(tape, std::span<const Var>(states));
    return dense(tape, stacked, tape.parameter(head_w_), tape.parameter(head_b_));
  }

  /// Mean binary cross-entropy over real (unpadded) positions.
  Var batch_loss(Tape<T>& tape, std::span<const Sentence> sentences,
                 std::span<const BoundaryLabeling> labels, Rng* jitter_rng = nullptr,
                 const GlyphProbe& probe = {}) {
    if (labels.size() != sentences.size())
      throw std::invalid_argument("seg: label count differs from sentence count");
    Layout layout;
    Var logits = batch_logits(tape, sentences, layout, jitter_rng, probe);
    std::vector<std::uint8_t> targets(layout.mask.size(), 0);
    for (std::size_t r = 0; r < layout.rows; ++r) {
      if (labels[r].size() != layout.lengths[r])
        throw std::invalid_argument("seg: label length differs from sentence length");
      for (std::size_t t = 0; t < layout.lengths[r]; ++t)
        targets[t * layout.rows + r] = labels[r][t];
    }
    return sigmoid_binary_cross_entropy(tape, logits, std::span<const std::uint8_t>(targets),
                                        std::span<const std::uint8_t>(layout.mask));
  }

  void set_oov_atlas(const GlyphAtlas* atlas) {
    oov_atlas_ = atlas;
    glyphs_.set_oov_atlas(config_.oov_glyphs ? atlas : nullptr);
  }

 private:
  SegConfig config_;
  Vocab vocab_;
  GlyphTable glyphs_;
  const GlyphAtlas* oov_atlas_ = nullptr;
  EmbedderModel<T> embedder_;
  GruWeights<T> gru_;
  LstmWeights<T> lstm_fw_;
  LstmWeights<T> lstm_bw_;
  Parameter<T> head_w_;
  Parameter<T> head_b_;
};

/// Boundary probabilities for each sentence of a batch (no jitter).
template <typename T>
std::vector<std::vector<double>> seg_forward_batch(SegModel<T>& model,
                                                   std::span<const Sentence> sentences) {
  Tape<T> tape(false);
  typename SegModel<T>::Layout layout;
  Var logits = model.batch_logits(tape, sentences, layout);
  const auto& lv = tape.value(logits);
  std::vector<std::vector<double>> out(layout.rows);
  for (std::size_t r = 0; r < layout.rows; ++r) {
    out[r].resize(layout.lengths[r]);
    for (std::size_t t = 0; t < layout.lengths[r]; ++t)
      out[r][t] = detail::stable_sigmoid(static_cast<double>(lv[t * layout.rows + r]));
  }
  return out;
}

/// Boundary probability after each character of one sentence.
template <typename T>
std::vector<double> seg_forward(SegModel<T>& model, const Sentence& sentence) {
  if (sentence.empty()) throw std::invalid_argument("seg_forward: empty sentence");
  return seg_forward_batch(model, std::span<const Sentence>(&sentence, 1)).front();
}

/// 1 iff prob >= threshold; the final label is always 1.
inline BoundaryLabeling predict_labels(std::span<const double> probs, double threshold = 0.5) {
  BoundaryLabeling out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= threshold;
  if (!out.empty()) out.back() = 1;
  return out;
}

struct SegScore {
  double precision = 0;  // percent
  double recall = 0;
  double f1 = 0;
  std::size_t tp = 0;
  std::size_t pred_count = 0;
  std::size_t gold_count = 0;
};

/// Harmonic mean of two percentages; 0 when both are 0.
inline double f1_from(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

/// Word spans [start, end) of a segmentation.
inline std::vector<std::pair<std::size_t, std::size_t>> word_spans(const SegmentedSentence& s) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t pos = 0;
  for (const auto& w : s.words) {
    out.emplace_back(pos, pos + w.size());
    pos += w.size();
  }
  return out;
}

/// Micro-averaged word P/R/F1. A predicted word counts iff a gold word has
/// the same (start, end) span.
inline SegScore score_segmentation(const std::vector<SegmentedSentence>& pred,
                                   const std::vector<SegmentedSentence>& gold) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("score_segmentation: " + std::to_string(pred.size()) +
                                " predicted vs " + std::to_string(gold.size()) + " gold sentences");
  SegScore s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].text() != gold[i].text())
      throw std::invalid_argument("score_segmentation: raw text differs at sentence " +
                                  std::to_string(i + 1));
    const auto ps = word_spans(pred[i]);
    const auto gs = word_spans(gold[i]);
    s.pred_count += ps.size();
    s.gold_count += gs.size();
    // Both span lists are sorted by start and partition the same text.
    std::size_t a = 0, b = 0;
    while (a < ps.size() && b < gs.size()) {
      if (ps[a] == gs[b]) {
        ++s.tp;
        ++a;
        ++b;
      } else if (ps[a].second < gs[b].second) {
        ++a;
      } else if (gs[b].second < ps[a].second) {
        ++b;
      } else {
        ++a;
        ++b;
      }
    }
  }
  s.precision = s.pred_count ? 100.0 * static_cast<double>(s.tp) / static_cast<double>(s.pred_count) : 0.0;
  s.recall = s.gold_count ? 100.0 * static_cast<double>(s.tp) / static_cast<double>(s.gold_count) : 0.0;
  s.f1 = f1_from(s.precision, s.recall);
  return s;
}

/// Segments raw lines; empty lines stay empty.
template <typename T>
std::vector<SegmentedSentence> segment_text(SegModel<T>& model, const std::vector<Sentence>& lines,
                                            std::size_t batch_size = 64) {
  std::vector<SegmentedSentence> out(lines.size());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (!lines[i].empty()) idx.push_back(i);
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t end = std::min(idx.size(), start + batch_size);
    std::vector<Sentence> chunk;
    for (std::size_t k = start; k < end; ++k) chunk.push_back(lines[idx[k]]);
    const auto probs = seg_forward_batch(model, std::span<const Sentence>(chunk));
    for (std::size_t k = 0; k < chunk.size(); ++k)
      out[idx[start + k]] = decode_words(chunk[k], predict_labels(probs[k], model.config().threshold));
  }
  return out;
}

template <typename T>
SegScore evaluate_seg(SegModel<T>& model, const std::vector<SegmentedSentence>& gold) {
  return score_segmentation(segment_text(model, sentences_of(gold)), gold);
}

struct SegTrainHooks {
  GlyphProbe glyph_probe;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Trains in place; keeps the parameters of the best dev-F1 epoch when a dev
/// set is given.
template <typename T>
TrainLog train_seg(SegModel<T>& model, const std::vector<SegmentedSentence>& train,
                   const std::vector<SegmentedSentence>& dev, const TrainOptions& opts,
                   const SegTrainHooks& hooks = {}) {
  std::vector<Sentence> sents;
  std::vector<BoundaryLabeling> labels;
  for (const auto& s : train) {
    if (s.words.empty()) continue;
    sents.push_back(s.text());
    labels.push_back(label_boundaries(s));
  }
  Rng root(opts.seed ^ 0x5e9ULL);
  Rng shuffle_rng = root.split();
  Rng jitter_rng = root.split();
  auto params = model.parameters();
  auto step = [&](std::span<const std::size_t> idx) {
    std::vector<Sentence> bs;
    std::vector<BoundaryLabeling> bl;
    for (auto i : idx) {
      bs.push_back(sents[i]);
      bl.push_back(labels[i]);
    }
    Tape<T> tape;
    Var loss = model.batch_loss(tape, bs, bl, opts.jitter ? &jitter_rng : nullptr,
                                hooks.glyph_probe);
    tape.backward(loss);
    return static_cast<double>(tape.value(loss)[0]);
  };
  std::function<double()> dev_fn;
  if (!dev.empty()) dev_fn = [&] { return evaluate_seg(model, dev).f1; };
  return run_training<T>(params, sents.size(), opts, shuffle_rng, step, dev_fn, true,
                         hooks.on_epoch);
}

}  // namespace glyphemb
