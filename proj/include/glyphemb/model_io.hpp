// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Model checkpoints. A checkpoint is self-contained: blob "config" holds the
// echoed experiment config, blob "vocab" the vocabulary, tensor
// "embedder/glyphs" the per-id glyph table (glyph kinds only), and every
// parameter is stored under its own name.

#pragma once

#include <filesystem>
#include <string>

#include "glyphemb/checkpoint.hpp"
#include "glyphemb/config.hpp"

namespace glyphemb {

inline ExperimentConfig config_from(const LmConfig& m) {
  ExperimentConfig c = ExperimentConfig::defaults_for(Task::lm);
  c.embedder = m.embedder.kind;
  c.embedding_dim = m.embedder.dim;
  c.resolution = m.embedder.resolution;
  c.cnn_spec = format_cnn_spec(m.embedder.cnn);
  c.hidden_dim = m.hidden_dim;
  c.oov_glyphs = m.oov_glyphs;
  return c;
}

inline ExperimentConfig config_from(const SegConfig& m) {
  ExperimentConfig c = ExperimentConfig::defaults_for(Task::seg);
  c.backbone = m.backbone;
  c.embedder = m.embedder.kind;
  c.embedding_dim = m.embedder.dim;
  c.resolution = m.embedder.resolution;
  c.cnn_spec = format_cnn_spec(m.embedder.cnn);
  c.hidden_dim = m.hidden_dim;
  c.oov_glyphs = m.oov_glyphs;
  c.threshold = m.threshold;
  return c;
}

namespace detail {

/// Overwrites the model fields of `base` with those of the model's config.
inline ExperimentConfig merged_config(const ExperimentConfig* base, ExperimentConfig model) {
  if (!base) return model;
  ExperimentConfig c = *base;
  c.task = model.task;
  c.embedder = model.embedder;
  c.backbone = model.backbone;
  c.embedding_dim = model.embedding_dim;
  c.resolution = model.resolution;
  c.cnn_spec = model.cnn_spec;
  c.hidden_dim = model.hidden_dim;
  c.oov_glyphs = model.oov_glyphs;
  c.threshold = model.threshold;
  return c;
}

template <typename Model>
Checkpoint model_checkpoint(Model& model, const ExperimentConfig& cfg) {
  Checkpoint ck;
  ck.set_blob("config", echo_config(cfg));
  ck.set_blob("vocab", model.vocab().serialize());
  for (auto* p : model.parameters()) ck.set_tensor(p->name, p->value);
  if (model.config().embedder.uses_glyphs()) ck.set_tensor("embedder/glyphs", model.glyphs().as_tensor());
  return ck;
}

template <typename Model>
void restore_parameters(Model& model, const Checkpoint& ck) {
  for (auto* p : model.parameters()) ck.load_into(p->name, p->value);
}

inline GlyphTable stored_glyphs(const Checkpoint& ck, const EmbedderConfig& e) {
  if (!e.uses_glyphs()) return {};
  return GlyphTable::from_tensor(ck.tensor("embedder/glyphs"));
}

}  // namespace detail

/// Task recorded in a checkpoint ("lm" or "seg").
inline Task checkpoint_task(const Checkpoint& ck) {
  return parse_config(ck.blob("config")).task;
}

inline ExperimentConfig checkpoint_config(const Checkpoint& ck) {
  return parse_config(ck.blob("config"));
}

template <typename T>
Checkpoint lm_checkpoint(LmModel<T>& model, const ExperimentConfig* run_config = nullptr) {
  return detail::model_checkpoint(model, detail::merged_config(run_config, config_from(model.config())));
}

template <typename T>
Checkpoint seg_checkpoint(SegModel<T>& model, const ExperimentConfig* run_config = nullptr) {
  return detail::model_checkpoint(model, detail::merged_config(run_config, config_from(model.config())));
}

template <typename T>
void save_lm(LmModel<T>& model, const std::filesystem::path& path,
             const ExperimentConfig* run_config = nullptr) {
  lm_checkpoint(model, run_config).save(path);
}

template <typename T>
void save_seg(SegModel<T>& model, const std::filesystem::path& path,
              const ExperimentConfig* run_config = nullptr) {
  seg_checkpoint(model, run_config).save(path);
}

template <typename T = float>
LmModel<T> lm_from_checkpoint(const Checkpoint& ck) {
  const ExperimentConfig cfg = checkpoint_config(ck);
  if (cfg.task != Task::lm) throw FormatError("checkpoint holds a '" + to_string(cfg.task) + "' model, not lm");
  const LmConfig mc = cfg.lm_config();
  Rng rng(0);
  LmModel<T> model(mc, Vocab::parse(ck.blob("vocab")), detail::stored_glyphs(ck, mc.embedder), rng);
  detail::restore_parameters(model, ck);
  return model;
}

template <typename T = float>
SegModel<T> seg_from_checkpoint(const Checkpoint& ck) {
  const ExperimentConfig cfg = checkpoint_config(ck);
  if (cfg.task != Task::seg) throw FormatError("checkpoint holds a '" + to_string(cfg.task) + "' model, not seg");
  const SegConfig mc = cfg.seg_config();
  Rng rng(0);
  SegModel<T> model(mc, Vocab::parse(ck.blob("vocab")), detail::stored_glyphs(ck, mc.embedder), rng);
  detail::restore_parameters(model, ck);
  return model;
}

template <typename T = float>
LmModel<T> load_lm(const std::filesystem::path& path) {
  return lm_from_checkpoint<T>(Checkpoint::load(path));
}

template <typename T = float>
SegModel<T> load_seg(const std::filesystem::path& path) {
  return seg_from_checkpoint<T>(Checkpoint::load(path));
}

}  // namespace glyphemb
