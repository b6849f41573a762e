// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Character-level GRU language model.
//
// A sentence c_1..c_n is scored as p(c_1) * prod_i p(c_i | c_<i) * p(EOS | c_1..n):
// the GRU reads BOS, c_1, ..., c_n and predicts c_1, ..., c_n, EOS, so a
// length-n sentence has n + 1 prediction positions. The hidden state is
// reset for every sentence.

#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "glyphemb/embedder.hpp"
#include "glyphemb/recurrent.hpp"
#include "glyphemb/training.hpp"

namespace glyphemb {

struct LmConfig {
  EmbedderConfig embedder{EmbedderKind::id, 300, kDefaultResolution, lm_cnn_spec()};
  std::size_t hidden_dim = 128;
  bool oov_glyphs = false;

  void validate() const {
    embedder.validate();
    if (hidden_dim == 0) throw std::invalid_argument("lm: hidden_dim must be positive");
  }
};

template <typename T>
class LmModel {
 public:
  LmModel(LmConfig config, Vocab vocab, GlyphTable glyphs, Rng& rng)
      : config_(std::move(config)), vocab_(std::move(vocab)), glyphs_(std::move(glyphs)) {
    config_.validate();
    if (config_.embedder.uses_glyphs() && glyphs_.size() != vocab_.size())
      throw std::invalid_argument("lm: glyph table does not cover the vocabulary");
    if (config_.embedder.uses_glyphs() && glyphs_.resolution() != config_.embedder.resolution)
      throw std::invalid_argument("lm: glyph table resolution differs from embedder config");
    const std::size_t v = vocab_.size(), h = config_.hidden_dim;
    embedder_ = EmbedderModel<T>(config_.embedder, v, rng);
    gru_ = GruWeights<T>("gru", config_.embedder.dim, h, rng);
    out_w_ = uniform_parameter<T>("output/W", {h, v}, h, v, rng);
    out_b_ = zero_parameter<T>("output/b", {v});
  }

  const LmConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  const GlyphTable& glyphs() const { return glyphs_; }
  GlyphTable& glyphs() { return glyphs_; }
  EmbedderModel<T>& embedder() { return embedder_; }
  GruWeights<T>& gru() { return gru_; }
  Parameter<T>& output_w() { return out_w_; }
  Parameter<T>& output_b() { return out_b_; }
  std::size_t vocab_size() const { return vocab_.size(); }

  std::vector<Parameter<T>*> parameters() {
    auto out = embedder_.parameters();
    for (auto* p : gru_.parameters()) out.push_back(p);
    out.push_back(&out_w_);
    out.push_back(&out_b_);
    return out;
  }

  struct Targets {
    std::vector<std::size_t> ids;     // row-major over (step, row)
    std::vector<std::uint8_t> mask;
    std::size_t rows = 0;
    std::size_t steps = 0;
  };

  /// Logits [(steps * rows) x V], step-major, for a batch of sentences.
  Var batch_logits(Tape<T>& tape, std::span<const Sentence> sentences, Targets& targets,
                   Rng* jitter_rng = nullptr, const GlyphProbe& probe = {}) {
    if (sentences.empty()) throw std::invalid_argument("lm: empty batch");
    std::vector<std::vector<int>> inputs;
    std::vector<std::u32string> chars;
    for (const auto& s : sentences) {
      if (s.empty()) throw std::invalid_argument("lm: empty sentence");
      std::vector<int> in{Vocab::kBos};
      std::u32string cs(1, U'\0');
      for (char32_t c : s) {
        in.push_back(vocab_.encode(c));
        cs.push_back(c);
      }
      inputs.push_back(std::move(in));
      chars.push_back(std::move(cs));
    }
    const TokenBatch batch = make_token_batch(inputs, chars, &glyphs_);
    const std::size_t rows = batch.rows(), steps = batch.steps;
    targets = Targets{std::vector<std::size_t>(rows * steps, Vocab::kPad),
                      std::vector<std::uint8_t>(rows * steps, 0), rows, steps};
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t len = inputs[r].size();
      for (std::size_t t = 0; t < len; ++t) {
        const int next = t + 1 < len ? inputs[r][t + 1] : Vocab::kEos;
        targets.ids[t * rows + r] = static_cast<std::size_t>(next);
        targets.mask[t * rows + r] = 1;
      }
    }
    auto embedded = embed_token_batch(tape, embedder_, batch,
                                      config_.embedder.uses_glyphs() ? &glyphs_ : nullptr,
                                      jitter_rng, probe);
    auto bound = gru_.bind(tape);
    auto hidden = run_gru(tape, std::span<const Var>(embedded), bound,
                          std::span<const std::size_t>(batch.lengths));
    Var stacked = concat_rows(tape, std::span<const Var>(hidden));
    return dense(tape, stacked, tape.parameter(out_w_), tape.parameter(out_b_));
  }

  /// Mean negative log-likelihood over all prediction positions of the batch.
  Var batch_loss(Tape<T>& tape, std::span<const Sentence> sentences,
                 Rng* jitter_rng = nullptr, const GlyphProbe& probe = {}) {
    Targets tg;
    Var logits = batch_logits(tape, sentences, tg, jitter_rng, probe);
    return softmax_cross_entropy(tape, logits, std::span<const std::size_t>(tg.ids),
                                 std::span<const std::uint8_t>(tg.mask));
  }

  /// Atlas consulted for UNK characters when config().oov_glyphs is set.
  void set_oov_atlas(const GlyphAtlas* atlas) {
    oov_atlas_ = atlas;
    glyphs_.set_oov_atlas(config_.oov_glyphs ? atlas : nullptr);
  }

 private:
  LmConfig config_;
  Vocab vocab_;
  GlyphTable glyphs_;
  const GlyphAtlas* oov_atlas_ = nullptr;
  EmbedderModel<T> embedder_;
  GruWeights<T> gru_;
  Parameter<T> out_w_;
  Parameter<T> out_b_;
};

/// Per-position log-probabilities [(n + 1) x V] for one sentence.
template <typename T>
Tensor<T> lm_forward(LmModel<T>& model, const Sentence& sentence) {
  if (sentence.empty()) throw std::invalid_argument("lm_forward: empty sentence");
  Tape<T> tape(false);
  typename LmModel<T>::Targets tg;
  Var logits = model.batch_logits(tape, std::span<const Sentence>(&sentence, 1), tg);
  return log_softmax_rows(tape.value(logits));
}

struct LmEvaluation {
  std::vector<double> sentence_log_probs;  // natural log, one per sentence
  std::size_t positions = 0;               // prediction positions, EOS included
  double total_log_prob = 0;
  double perplexity = 0;
};

/// exp(-(sum of log p) / positions).
inline double corpus_perplexity(double total_log_prob, std::size_t positions) {
  if (positions == 0) throw std::invalid_argument("perplexity: no prediction positions");
  return std::exp(-total_log_prob / static_cast<double>(positions));
}

/// Scores every sentence without jitter. Each sentence's value is independent
/// of batch composition, so sentence order does not change the result beyond
/// floating-point summation order.
template <typename T>
LmEvaluation evaluate_lm(LmModel<T>& model, const std::vector<Sentence>& corpus,
                         std::size_t batch_size = 64) {
  LmEvaluation ev;
  std::vector<Sentence> nonempty;
  for (const auto& s : corpus)
    if (!s.empty()) nonempty.push_back(s);
  if (nonempty.empty()) throw std::invalid_argument("perplexity: empty corpus");
  for (std::size_t start = 0; start < nonempty.size(); start += batch_size) {
    const std::size_t end = std::min(nonempty.size(), start + batch_size);
    std::span<const Sentence> chunk(nonempty.data() + start, end - start);
    Tape<T> tape(false);
    typename LmModel<T>::Targets tg;
    Var logits = model.batch_logits(tape, chunk, tg);
    const auto& lv = tape.value(logits);
    const std::size_t v = lv.dim(1);
    std::vector<double> lp(tg.rows, 0.0);
    for (std::size_t i = 0; i < tg.ids.size(); ++i) {
      if (!tg.mask[i]) continue;
      const auto row = lv.row(i);
      double mx = row[0];
      for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double z = 0;
      for (std::size_t j = 0; j < v; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
      lp[i % tg.rows] += static_cast<double>(row[tg.ids[i]]) - mx - std::log(z);
      ++ev.positions;
    }
    for (double x : lp) ev.sentence_log_probs.push_back(x);
  }
  for (double x : ev.sentence_log_probs) ev.total_log_prob += x;
  ev.perplexity = corpus_perplexity(ev.total_log_prob, ev.positions);
  return ev;
}

template <typename T>
double perplexity(LmModel<T>& model, const std::vector<Sentence>& corpus) {
  return evaluate_lm(model, corpus).perplexity;
}

struct LmTrainHooks {
  GlyphProbe glyph_probe;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Trains in place; keeps the parameters of the best dev-perplexity epoch
/// when a dev set is given.
template <typename T>
TrainLog train_lm(LmModel<T>& model, const std::vector<Sentence>& train,
                  const std::vector<Sentence>& dev, const TrainOptions& opts,
                  const LmTrainHooks& hooks = {}) {
  std::vector<Sentence> data;
  for (const auto& s : train)
    if (!s.empty()) data.push_back(s);
  Rng root(opts.seed ^ 0x5eedULL);
  Rng shuffle_rng = root.split();
  Rng jitter_rng = root.split();
  auto params = model.parameters();
  auto step = [&](std::span<const std::size_t> idx) {
    std::vector<Sentence> batch;
    for (auto i : idx) batch.push_back(data[i]);
    Tape<T> tape;
    Var loss = model.batch_loss(tape, batch, opts.jitter ? &jitter_rng : nullptr,
                                hooks.glyph_probe);
    tape.backward(loss);
    return static_cast<double>(tape.value(loss)[0]);
  };
  std::function<double()> dev_fn;
  if (!dev.empty()) dev_fn = [&] { return perplexity(model, dev); };
  return run_training<T>(params, data.size(), opts, shuffle_rng, step, dev_fn, false,
                         hooks.on_epoch);
}

}  // namespace glyphemb
