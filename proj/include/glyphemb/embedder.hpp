// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Character embedders behind one interface:
//
//   id      trainable N x K lookup table
//   linear  one fully connected layer over the R*R glyph pixels
//   cnn     conv(+bias, ReLU) stack with same padding, flatten, dense to K
//   mixed   id + cnn, summed elementwise
//
// Glyph-based kinds never index weights by character id, so their trainable
// size is independent of the vocabulary.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "glyphemb/autodiff.hpp"
#include "glyphemb/corpus.hpp"
#include "glyphemb/glyph.hpp"
#include "glyphemb/random.hpp"

namespace glyphemb {

enum class EmbedderKind { id, linear, cnn, mixed };

inline std::string to_string(EmbedderKind k) {
  switch (k) {
    case EmbedderKind::id: return "id";
    case EmbedderKind::linear: return "linear";
    case EmbedderKind::cnn: return "cnn";
    case EmbedderKind::mixed: return "mixed";
  }
  return "?";
}

inline EmbedderKind parse_embedder_kind(const std::string& s) {
  if (s == "id") return EmbedderKind::id;
  if (s == "linear") return EmbedderKind::linear;
  if (s == "cnn") return EmbedderKind::cnn;
  if (s == "mixed") return EmbedderKind::mixed;
  throw std::invalid_argument("unknown embedder kind '" + s + "' (id|linear|cnn|mixed)");
}

struct ConvLayerSpec {
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Two conv layers: 32 7x7 filters then 16 5x5 filters, both stride 2.
inline std::vector<ConvLayerSpec> lm_cnn_spec() { return {{32, 7, 2}, {16, 5, 2}}; }
/// One conv layer: 16 5x5 filters, stride 2.
inline std::vector<ConvLayerSpec> seg_cnn_spec() { return {{16, 5, 2}}; }

/// "32x7s2,16x5s2" <-> layer list.
inline std::string format_cnn_spec(const std::vector<ConvLayerSpec>& spec) {
  std::ostringstream os;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (i) os << ',';
    os << spec[i].filters << 'x' << spec[i].kernel << 's' << spec[i].stride;
  }
  return os.str();
}

inline std::vector<ConvLayerSpec> parse_cnn_spec(const std::string& text) {
  std::vector<ConvLayerSpec> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    ConvLayerSpec l;
    char x = 0, s = 0;
    std::istringstream is(item);
    if (!(is >> l.filters >> x >> l.kernel >> s >> l.stride) || x != 'x' || s != 's' ||
        !is.eof() || l.filters == 0 || l.kernel == 0 || l.stride == 0)
      throw std::invalid_argument("bad conv layer '" + item + "' (expected e.g. 32x7s2)");
    out.push_back(l);
  }
  return out;
}

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::id;
  std::size_t dim = 300;
  std::size_t resolution = kDefaultResolution;
  std::vector<ConvLayerSpec> cnn = lm_cnn_spec();

  bool uses_ids() const { return kind == EmbedderKind::id || kind == EmbedderKind::mixed; }
  bool uses_glyphs() const { return kind != EmbedderKind::id; }
  bool uses_cnn() const { return kind == EmbedderKind::cnn || kind == EmbedderKind::mixed; }

  void validate() const {
    if (dim == 0) throw std::invalid_argument("embedder: embedding dim must be positive");
    if (uses_glyphs() && resolution == 0)
      throw std::invalid_argument("embedder: glyph resolution must be positive");
    if (uses_cnn() && cnn.empty())
      throw std::invalid_argument("embedder: cnn spec must be nonempty for cnn/mixed");
  }
};

struct ParamCount {
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
  friend bool operator==(const ParamCount&, const ParamCount&) = default;
};

template <typename T>
class EmbedderModel {
 public:
  EmbedderModel() = default;

  EmbedderModel(EmbedderConfig config, std::size_t vocab_size, Rng& rng)
      : config_(std::move(config)), vocab_size_(vocab_size) {
    config_.validate();
    if (vocab_size_ == 0) throw std::invalid_argument("embedder: vocab size must be positive");
    const std::size_t k = config_.dim, r = config_.resolution;
    if (config_.uses_ids()) {
      id_table_ = uniform_parameter<T>("embedder/id_table", {vocab_size_, k}, vocab_size_, k, rng);
    }
    if (config_.kind == EmbedderKind::linear) {
      dense_w_ = uniform_parameter<T>("embedder/dense/W", {r * r, k}, r * r, k, rng);
      dense_b_ = zero_parameter<T>("embedder/dense/b", {k});
    }
    if (config_.uses_cnn()) {
      std::size_t cin = 1, side = r;
      for (std::size_t i = 0; i < config_.cnn.size(); ++i) {
        const auto& l = config_.cnn[i];
        const std::string prefix = "embedder/conv" + std::to_string(i + 1);
        conv_filters_.push_back(uniform_parameter<T>(
            prefix + "/filters", {l.kernel, l.kernel, cin, l.filters},
            l.kernel * l.kernel * cin, l.kernel * l.kernel * l.filters, rng));
        conv_bias_.push_back(zero_parameter<T>(prefix + "/bias", {l.filters}));
        side = conv_geometry(side, l.kernel, l.stride, Padding::same).out;
        cin = l.filters;
      }
      flat_ = side * side * cin;
      dense_w_ = uniform_parameter<T>("embedder/dense/W", {flat_, k}, flat_, k, rng);
      dense_b_ = zero_parameter<T>("embedder/dense/b", {k});
    }
  }

  const EmbedderConfig& config() const { return config_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t dim() const { return config_.dim; }
  /// Width of the flattened final feature map (cnn kinds only).
  std::size_t cnn_flat_size() const { return flat_; }

  Parameter<T>& id_table() { return id_table_; }
  Parameter<T>& dense_w() { return dense_w_; }
  Parameter<T>& dense_b() { return dense_b_; }
  Parameter<T>& conv_filters(std::size_t i) { return conv_filters_.at(i); }
  Parameter<T>& conv_bias(std::size_t i) { return conv_bias_.at(i); }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    if (config_.uses_ids()) out.push_back(&id_table_);
    for (std::size_t i = 0; i < conv_filters_.size(); ++i) {
      out.push_back(&conv_filters_[i]);
      out.push_back(&conv_bias_[i]);
    }
    if (config_.uses_glyphs()) {
      out.push_back(&dense_w_);
      out.push_back(&dense_b_);
    }
    return out;
  }

  /// Trainable weights, plus the glyph pixels the glyph-based kinds read
  /// (one R x R bitmap per vocabulary entry) as non-trainable.
  ParamCount param_count() {
    ParamCount c;
    for (auto* p : parameters()) c.trainable += p->size();
    if (config_.uses_glyphs())
      c.non_trainable = vocab_size_ * config_.resolution * config_.resolution;
    return c;
  }

  /// ID branch for a list of ids: [U x K].
  Var id_branch(Tape<T>& tape, std::span<const std::size_t> ids) {
    require_kind(config_.uses_ids(), "id_branch");
    for (auto id : ids)
      if (id >= vocab_size_)
        throw std::out_of_range("id_embed: id " + std::to_string(id) +
                                " outside vocabulary of " + std::to_string(vocab_size_));
    return gather_rows(tape, tape.parameter(id_table_), ids);
  }

  /// Glyph branch (linear or cnn) for a batch glyph tensor [U x R x R x 1].
  Var glyph_branch(Tape<T>& tape, Var glyphs) {
    require_kind(config_.uses_glyphs(), "glyph_branch");
    const auto& shape = tape.shape(glyphs);
    const std::size_t r = config_.resolution;
    if (shape.size() != 4 || shape[1] != r || shape[2] != r || shape[3] != 1)
      throw ShapeError("embedder: glyph batch " + shape_string(shape) +
                       " does not match resolution " + std::to_string(r));
    const std::size_t u = shape[0];
    if (config_.kind == EmbedderKind::linear) {
      Var flat = reshape(tape, glyphs, {u, r * r});
      return dense(tape, flat, tape.parameter(dense_w_), tape.parameter(dense_b_));
    }
    Var x = glyphs;
    for (std::size_t i = 0; i < conv_filters_.size(); ++i) {
      const auto& l = config_.cnn[i];
      x = conv2d(tape, x, tape.parameter(conv_filters_[i]), l.stride, l.stride, Padding::same);
      x = relu(tape, add_bias(tape, x, tape.parameter(conv_bias_[i])));
    }
    Var flat = reshape(tape, x, {u, flat_});
    return dense(tape, flat, tape.parameter(dense_w_), tape.parameter(dense_b_));
  }

  /// Embeddings [U x K] for U tokens; `glyphs` is ignored by the id kind.
  Var embed(Tape<T>& tape, std::span<const std::size_t> ids,
            std::span<const GlyphBitmap> glyphs) {
    switch (config_.kind) {
      case EmbedderKind::id:
        return id_branch(tape, ids);
      case EmbedderKind::linear:
      case EmbedderKind::cnn:
        return glyph_branch(tape, glyph_batch(tape, glyphs));
      case EmbedderKind::mixed: {
        if (ids.size() != glyphs.size())
          throw ShapeError("mixed embed: id and glyph counts differ");
        Var a = id_branch(tape, ids);
        Var b = glyph_branch(tape, glyph_batch(tape, glyphs));
        return add(tape, a, b);
      }
    }
    throw std::logic_error("unreachable");
  }

  Var glyph_batch(Tape<T>& tape, std::span<const GlyphBitmap> glyphs) const {
    if (glyphs.empty()) throw ShapeError("embedder: empty glyph batch");
    const std::size_t r = config_.resolution;
    Tensor<T> t({glyphs.size(), r, r, 1});
    for (std::size_t i = 0; i < glyphs.size(); ++i) {
      if (glyphs[i].resolution() != r)
        throw ShapeError("embedder: glyph resolution " + std::to_string(glyphs[i].resolution()) +
                         " does not match configured " + std::to_string(r));
      const auto px = glyphs[i].pixels();
      for (std::size_t k = 0; k < px.size(); ++k) t[i * r * r + k] = static_cast<T>(px[k]);
    }
    return tape.constant(std::move(t));
  }

  // Single-character conveniences returning a length-K vector.

  Tensor<T> id_embed(std::size_t id) {
    Tape<T> tape;
    const std::size_t ids[] = {id};
    return row_vector(tape, id_branch(tape, ids));
  }

  Tensor<T> linear_embed(const GlyphBitmap& glyph) {
    require_kind(config_.kind == EmbedderKind::linear, "linear_embed");
    return glyph_only(glyph);
  }

  Tensor<T> cnn_embed(const GlyphBitmap& glyph) {
    require_kind(config_.uses_cnn(), "cnn_embed");
    return glyph_only(glyph);
  }

  Tensor<T> mixed_embed(std::size_t id, const GlyphBitmap& glyph) {
    require_kind(config_.kind == EmbedderKind::mixed, "mixed_embed");
    Tape<T> tape;
    const std::size_t ids[] = {id};
    return row_vector(tape, embed(tape, ids, std::span<const GlyphBitmap>(&glyph, 1)));
  }

 private:
  Tensor<T> glyph_only(const GlyphBitmap& glyph) {
    Tape<T> tape;
    return row_vector(tape, glyph_branch(tape, glyph_batch(tape, std::span<const GlyphBitmap>(&glyph, 1))));
  }

  static Tensor<T> row_vector(Tape<T>& tape, Var v) {
    const auto& t = tape.value(v);
    return Tensor<T>({t.dim(1)}, std::vector<T>(t.data().begin(), t.data().end()));
  }

  void require_kind(bool ok, const char* op) const {
    if (!ok)
      throw std::logic_error(std::string(op) + " is not available for the " +
                             to_string(config_.kind) + " embedder");
  }

  EmbedderConfig config_;
  std::size_t vocab_size_ = 0;
  std::size_t flat_ = 0;
  Parameter<T> id_table_;
  std::vector<Parameter<T>> conv_filters_;
  std::vector<Parameter<T>> conv_bias_;
  Parameter<T> dense_w_;
  Parameter<T> dense_b_;
};

// ---------------------------------------------------------------------------
// Glyph supply for a vocabulary
// ---------------------------------------------------------------------------

/// One bitmap per vocabulary id. Reserved ids and characters missing from
/// the atlas get the blank bitmap. With `oov_glyphs`, characters that
/// encode to UNK are looked up in `oov_atlas` by character instead.
class GlyphTable {
 public:
  GlyphTable() = default;
  GlyphTable(std::size_t resolution, std::vector<GlyphBitmap> by_id)
      : resolution_(resolution), by_id_(std::move(by_id)) {}

  static GlyphTable from_atlas(const Vocab& vocab, const GlyphAtlas& atlas,
                               std::size_t* missing = nullptr) {
    std::vector<GlyphBitmap> by_id(vocab.size(), atlas.blank());
    std::size_t miss = 0;
    for (int id = Vocab::kReserved; id < static_cast<int>(vocab.size()); ++id) {
      const char32_t c = vocab.character(id);
      if (!atlas.contains(c)) {
        ++miss;
        continue;
      }
      by_id[static_cast<std::size_t>(id)] = atlas.get(c);
    }
    if (missing) *missing = miss;
    return GlyphTable(atlas.resolution(), std::move(by_id));
  }

  std::size_t resolution() const { return resolution_; }
  std::size_t size() const { return by_id_.size(); }
  const GlyphBitmap& glyph(int id) const { return by_id_.at(static_cast<std::size_t>(id)); }

  void set_oov_atlas(const GlyphAtlas* atlas) { oov_atlas_ = atlas; }
  const GlyphAtlas* oov_atlas() const { return oov_atlas_; }

  /// Bitmap the model sees for a token.
  const GlyphBitmap& lookup(int id, char32_t c) const {
    if (id == Vocab::kUnk && oov_atlas_ != nullptr && oov_atlas_->contains(c))
      return oov_atlas_->get(c);
    return glyph(id);
  }

  /// [N x R x R] tensor, for checkpoints.
  Tensor<float> as_tensor() const {
    Tensor<float> t({by_id_.size(), resolution_, resolution_});
    for (std::size_t i = 0; i < by_id_.size(); ++i) {
      const auto px = by_id_[i].pixels();
      std::copy(px.begin(), px.end(), t.data().begin() + static_cast<std::ptrdiff_t>(i * px.size()));
    }
    return t;
  }

  static GlyphTable from_tensor(const Tensor<float>& t) {
    if (t.rank() != 3 || t.dim(1) != t.dim(2)) throw FormatError("glyph table tensor must be N x R x R");
    const std::size_t n = t.dim(0), r = t.dim(1);
    std::vector<GlyphBitmap> by_id;
    by_id.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto begin = t.data().begin() + static_cast<std::ptrdiff_t>(i * r * r);
      by_id.emplace_back(r, std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(r * r)));
    }
    return GlyphTable(r, std::move(by_id));
  }

 private:
  std::size_t resolution_ = 0;
  std::vector<GlyphBitmap> by_id_;
  const GlyphAtlas* oov_atlas_ = nullptr;
};

/// Observer for glyphs handed to the embedder: (atlas bitmap, bitmap fed).
using GlyphProbe = std::function<void(const GlyphBitmap&, const GlyphBitmap&)>;

/// Token sequences of a right-padded batch, embedded once per distinct token.
struct TokenBatch {
  struct Key {
    int id = 0;
    char32_t oov_char = 0;  // set only when the glyph comes from the OOV atlas
    auto operator<=>(const Key&) const = default;
  };

  std::size_t steps = 0;
  std::vector<std::size_t> lengths;                // per row
  std::vector<std::vector<std::size_t>> position;  // [step][row] -> index into keys
  std::vector<Key> keys;

  std::size_t rows() const { return lengths.size(); }
};

/// Builds a TokenBatch from per-row (ids, chars) sequences.
inline TokenBatch make_token_batch(const std::vector<std::vector<int>>& ids,
                                   const std::vector<std::u32string>& chars,
                                   const GlyphTable* glyphs) {
  TokenBatch b;
  for (const auto& row : ids) {
    b.lengths.push_back(row.size());
    b.steps = std::max(b.steps, row.size());
  }
  std::map<TokenBatch::Key, std::size_t> index;
  auto key_index = [&](TokenBatch::Key k) {
    auto [it, fresh] = index.emplace(k, b.keys.size());
    if (fresh) b.keys.push_back(k);
    return it->second;
  };
  const std::size_t pad = key_index({Vocab::kPad, 0});
  b.position.assign(b.steps, std::vector<std::size_t>(ids.size(), pad));
  for (std::size_t r = 0; r < ids.size(); ++r) {
    for (std::size_t t = 0; t < ids[r].size(); ++t) {
      TokenBatch::Key k{ids[r][t], 0};
      if (k.id == Vocab::kUnk && glyphs && glyphs->oov_atlas() && r < chars.size() &&
          t < chars[r].size() && glyphs->oov_atlas()->contains(chars[r][t]))
        k.oov_char = chars[r][t];
      b.position[t][r] = key_index(k);
    }
  }
  return b;
}

/// Embeds a TokenBatch and returns one [rows x K] Var per step. A non-null
/// `jitter_rng` translates each distinct glyph by a random offset (training
/// only); `probe` sees every glyph handed to the embedder.
template <typename T>
std::vector<Var> embed_token_batch(Tape<T>& tape, EmbedderModel<T>& embedder,
                                   const TokenBatch& batch, const GlyphTable* glyphs,
                                   Rng* jitter_rng, const GlyphProbe& probe = {}) {
  std::vector<std::size_t> ids;
  std::vector<GlyphBitmap> bitmaps;
  ids.reserve(batch.keys.size());
  for (const auto& k : batch.keys) ids.push_back(static_cast<std::size_t>(k.id));
  if (embedder.config().uses_glyphs()) {
    if (!glyphs) throw std::invalid_argument("glyph-based embedder needs a glyph table");
    bitmaps.reserve(batch.keys.size());
    for (const auto& k : batch.keys) {
      const GlyphBitmap& original =
          k.oov_char ? glyphs->lookup(Vocab::kUnk, k.oov_char) : glyphs->glyph(k.id);
      bitmaps.push_back(jitter_rng ? jitter(original, sample_jitter(*jitter_rng)) : original);
      if (probe) probe(original, bitmaps.back());
    }
  }
  Var table = embedder.embed(tape, ids, bitmaps);
  std::vector<Var> steps;
  steps.reserve(batch.steps);
  for (std::size_t t = 0; t < batch.steps; ++t)
    steps.push_back(gather_rows(tape, table, std::span<const std::size_t>(batch.position[t])));
  return steps;
}

}  // namespace glyphemb
