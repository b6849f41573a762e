// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// End-to-end runs: config -> corpus -> vocab -> atlas -> train -> evaluate,
// with everything written to runs/<timestamp>-<tag>/.

#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "glyphemb/analysis.hpp"
#include "glyphemb/model_io.hpp"

namespace glyphemb {

/// Failure of one pipeline stage; what() reads "[stage] message".
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Runs `fn`, rethrowing any exception as a StageError tagged `stage`.
template <typename F>
auto in_stage(const std::string& stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline std::string json_line(const nlohmann::json& j) { return j.dump() + "\n"; }

inline nlohmann::json lm_metrics_json(const LmEvaluation& ev) {
  return {{"metric", "perplexity"},
          {"perplexity", ev.perplexity},
          {"positions", ev.positions},
          {"sentences", ev.sentence_log_probs.size()},
          {"total_log_prob", ev.total_log_prob}};
}

inline nlohmann::json seg_metrics_json(const SegScore& s) {
  return {{"metric", "segmentation"}, {"P", s.precision}, {"R", s.recall},   {"F1", s.f1},
          {"tp", s.tp},               {"pred", s.pred_count}, {"gold", s.gold_count}};
}

inline std::string format_perplexity(double ppl) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "perplexity=%.6f", ppl);
  return buf;
}

inline std::string format_seg_score(const SegScore& s) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "P=%.2f R=%.2f F1=%.2f", s.precision, s.recall, s.f1);
  return buf;
}

struct RunResult {
  std::filesystem::path run_dir;
  std::string summary;       // "perplexity=..." or "P=.. R=.. F1=.."
  nlohmann::json metrics;    // final test record
  TrainLog log;
  std::optional<NormSummary> norms;
};

inline std::string timestamp_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

/// Creates a fresh run directory; a numeric suffix avoids collisions.
inline std::filesystem::path make_run_dir(const ExperimentConfig& cfg, const std::string& stamp) {
  namespace fs = std::filesystem;
  const std::string tag = cfg.tag.empty() ? to_string(cfg.task) + "-" + to_string(cfg.embedder) : cfg.tag;
  const fs::path base = fs::path(cfg.runs_root) / (stamp + "-" + tag);
  fs::path dir = base;
  for (int i = 2; fs::exists(dir); ++i) dir = base.string() + "-" + std::to_string(i);
  fs::create_directories(dir);
  return dir;
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

template <typename Model>
std::optional<NormSummary> write_norms(Model& model, const std::filesystem::path& dir, std::size_t bins) {
  if (model.config().embedder.kind != EmbedderKind::mixed) return std::nullopt;
  const auto records = embedding_norms(model.embedder(), model.vocab(), model.glyphs());
  write_text(dir / "norms.csv", export_norm_histogram(records, bins));
  return summarize_norms(records);
}

}  // namespace detail

/// Runs one experiment. The model is trained in 32-bit floats with a single
/// thread, so a fixed config and seed reproduce the metric exactly.
/// `stamp` overrides the timestamp part of the run directory name.
inline RunResult run_experiment(const ExperimentConfig& cfg, const std::string& stamp = timestamp_now()) {
  using nlohmann::json;
  in_stage("config", [&] {
    cfg.validate();
    cfg.validate_inputs();
  });
  RunResult result;
  const auto segmented = in_stage("corpus", [&] { return parse_bakeoff_file(cfg.train); });
  if (segmented.empty()) throw StageError("corpus", "training corpus is empty: " + cfg.train);
  const auto split = in_stage("corpus", [&] { return split_dev(segmented, cfg.dev_fraction); });
  const std::vector<SegmentedSentence>& train_part = split.first;
  const std::vector<SegmentedSentence>& dev_part = split.second;
  const auto test_part = in_stage("corpus", [&] {
    return cfg.test.empty() ? std::vector<SegmentedSentence>{} : parse_bakeoff_file(cfg.test);
  });
  const Vocab vocab = in_stage("vocab", [&] { return Vocab::build(train_part, cfg.max_vocab); });

  const EmbedderConfig ec = cfg.embedder_config();
  std::optional<GlyphAtlas> atlas;
  GlyphTable glyphs;
  std::size_t missing = 0;
  if (ec.uses_glyphs() || cfg.oov_glyphs) {
    in_stage("atlas", [&] {
      atlas = GlyphAtlas::load(cfg.atlas);
      if (atlas->resolution() != cfg.resolution)
        throw std::invalid_argument("atlas resolution " + std::to_string(atlas->resolution()) +
                                    " differs from config resolution " + std::to_string(cfg.resolution));
      glyphs = GlyphTable::from_atlas(vocab, *atlas, &missing);
    });
  }

  result.run_dir = in_stage("write", [&] { return make_run_dir(cfg, stamp); });
  const auto dir = result.run_dir;
  in_stage("write", [&] { detail::write_text(dir / "config.echo", echo_config(cfg)); });
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
  if (!metrics) throw StageError("write", "cannot write " + (dir / "metrics.jsonl").string());
  metrics << json_line({{"event", "setup"},
                        {"train_sentences", train_part.size()},
                        {"dev_sentences", dev_part.size()},
                        {"test_sentences", test_part.size()},
                        {"vocab_size", vocab.size()},
                        {"unk_rate_test", test_part.empty() ? 0.0 : unk_rate(vocab, sentences_of(test_part))},
                        {"glyphs_missing", missing}});
  auto on_epoch = [&](const EpochLog& e) {
    metrics << json_line({{"event", "epoch"},
                          {"epoch", e.epoch},
                          {"steps", e.steps},
                          {"train_loss", e.train_loss},
                          {"dev_metric", std::isnan(e.dev_metric) ? json(nullptr) : json(e.dev_metric)}});
    metrics.flush();
  };
  const TrainOptions opts = cfg.train_options();
  Rng init_rng(cfg.seed);

  if (cfg.task == Task::lm) {
    auto model = in_stage("model", [&] { return LmModel<float>(cfg.lm_config(), vocab, glyphs, init_rng); });
    if (cfg.oov_glyphs) model.set_oov_atlas(&*atlas);
    result.log = in_stage("train", [&] {
      return train_lm(model, sentences_of(train_part), sentences_of(dev_part), opts, {{}, on_epoch});
    });
    const auto& eval_set = test_part.empty() ? dev_part : test_part;
    if (eval_set.empty()) throw StageError("eval", "no test file and no dev split to evaluate on");
    const LmEvaluation ev = in_stage("eval", [&] { return evaluate_lm(model, sentences_of(eval_set)); });
    result.metrics = lm_metrics_json(ev);
    result.summary = format_perplexity(ev.perplexity);
    in_stage("write", [&] { save_lm(model, dir / "ckpt", &cfg); });
    result.norms = in_stage("analysis", [&] { return detail::write_norms(model, dir, cfg.bins); });
  } else {
    auto model = in_stage("model", [&] { return SegModel<float>(cfg.seg_config(), vocab, glyphs, init_rng); });
    if (cfg.oov_glyphs) model.set_oov_atlas(&*atlas);
    result.log = in_stage("train", [&] { return train_seg(model, train_part, dev_part, opts, {{}, on_epoch}); });
    const auto& eval_set = test_part.empty() ? dev_part : test_part;
    if (eval_set.empty()) throw StageError("eval", "no test file and no dev split to evaluate on");
    const SegScore s = in_stage("eval", [&] { return evaluate_seg(model, eval_set); });
    result.metrics = seg_metrics_json(s);
    result.summary = format_seg_score(s);
    in_stage("write", [&] { save_seg(model, dir / "ckpt", &cfg); });
    result.norms = in_stage("analysis", [&] { return detail::write_norms(model, dir, cfg.bins); });
  }

  result.metrics["event"] = "test";
  result.metrics["split"] = test_part.empty() ? "dev" : "test";
  if (result.norms) {
    metrics << json_line({{"event", "norms"},
                          {"median_id_norm", result.norms->median_id},
                          {"median_glyph_norm", result.norms->median_glyph},
                          {"ordering", result.norms->ordering}});
  }
  metrics << json_line(result.metrics);
  if (!metrics) throw StageError("write", "write failed: " + (dir / "metrics.jsonl").string());
  in_stage("write", [&] { detail::write_text(dir / "result.txt", result.summary + "\n"); });
  return result;
}

}  // namespace glyphemb
