// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Command-line front end. Every subcommand prints its metrics as a JSON line
// on stdout; failures print "error: [stage] message" on stderr and exit 1.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "glyphemb/glyphemb.hpp"

namespace ge = glyphemb;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const json& j) {
  std::cout << j.dump() << '\n';
  std::cout.flush();
}

struct BuildAtlasArgs {
  std::string font, charset, out;
  std::size_t resolution = ge::kDefaultResolution;
};

void build_atlas_cmd(const BuildAtlasArgs& a) {
  const auto font = ge::in_stage("font", [&] { return ge::TrueTypeFont::load(a.font); });
  const auto chars = ge::in_stage("charset", [&] { return ge::charset_from_text(read_text(a.charset)); });
  auto built = ge::in_stage("render", [&] { return ge::build_atlas(chars, font, a.resolution); });
  ge::in_stage("write", [&] { built.atlas.save(a.out); });
  for (char32_t c : built.missing)
    std::cerr << "warning: no glyph for U+" << std::hex << std::uppercase
              << static_cast<std::uint32_t>(c) << std::dec << " '" << ge::utf8_encode(c)
              << "', stored blank\n";
  emit({{"event", "atlas"},
        {"entries", built.atlas.size()},
        {"missing", built.missing.size()},
        {"resolution", a.resolution},
        {"font", font.name()}});
}

struct BuildVocabArgs {
  std::string corpus, out;
  std::size_t max_size = ge::Vocab::kDefaultMaxSize;
};

void build_vocab_cmd(const BuildVocabArgs& a) {
  ge::CorpusStats stats;
  const auto corpus = ge::in_stage("corpus", [&] { return ge::parse_bakeoff_file(a.corpus, &stats); });
  const auto vocab = ge::in_stage("vocab", [&] { return ge::Vocab::build(corpus, a.max_size); });
  ge::in_stage("write", [&] { vocab.save(a.out); });
  emit({{"event", "vocab"},
        {"size", vocab.size()},
        {"content_size", vocab.content_size()},
        {"sentences", stats.sentences},
        {"unk_rate_train", ge::unk_rate(vocab, ge::sentences_of(corpus))}});
}

struct TrainArgs {
  std::string config, train, atlas, out;
  std::vector<std::string> overrides;
};

ge::ExperimentConfig resolve_config(const std::string& path, ge::Task task,
                                    const std::vector<std::string>& overrides) {
  return ge::in_stage("config", [&] {
    std::string text = path.empty() ? std::string() : read_text(path);
    for (const auto& o : overrides) text += "\n" + o;
    auto cfg = ge::parse_config(text, task);
    if (cfg.task != task)
      throw ge::ConfigError("config says task=" + ge::to_string(cfg.task) + " but the command trains " +
                            ge::to_string(task));
    return cfg;
  });
}

void train_cmd(ge::Task task, TrainArgs a) {
  auto cfg = resolve_config(a.config, task, a.overrides);
  if (!a.train.empty()) cfg.train = a.train;
  if (!a.atlas.empty()) cfg.atlas = a.atlas;
  ge::in_stage("config", [&] { cfg.validate_inputs(); });

  const auto corpus = ge::in_stage("corpus", [&] { return ge::parse_bakeoff_file(cfg.train); });
  const auto split = ge::in_stage("corpus", [&] { return ge::split_dev(corpus, cfg.dev_fraction); });
  const auto vocab = ge::in_stage("vocab", [&] { return ge::Vocab::build(split.first, cfg.max_vocab); });
  std::optional<ge::GlyphAtlas> atlas;
  ge::GlyphTable glyphs;
  if (cfg.embedder != ge::EmbedderKind::id || cfg.oov_glyphs) {
    ge::in_stage("atlas", [&] {
      atlas = ge::GlyphAtlas::load(cfg.atlas);
      if (atlas->resolution() != cfg.resolution)
        throw std::invalid_argument("atlas resolution differs from config resolution");
      std::size_t missing = 0;
      glyphs = ge::GlyphTable::from_atlas(vocab, *atlas, &missing);
      if (missing) std::cerr << "warning: " << missing << " vocabulary characters have no glyph\n";
    });
  }
  auto on_epoch = [](const ge::EpochLog& e) {
    emit({{"event", "epoch"},
          {"epoch", e.epoch},
          {"steps", e.steps},
          {"train_loss", e.train_loss},
          {"dev_metric", std::isnan(e.dev_metric) ? json(nullptr) : json(e.dev_metric)}});
  };
  ge::Rng rng(cfg.seed);
  const auto opts = cfg.train_options();
  if (task == ge::Task::lm) {
    auto model = ge::in_stage("model", [&] { return ge::LmModel<float>(cfg.lm_config(), vocab, glyphs, rng); });
    if (atlas) model.set_oov_atlas(&*atlas);
    ge::in_stage("train", [&] {
      return ge::train_lm(model, ge::sentences_of(split.first), ge::sentences_of(split.second), opts,
                          {{}, on_epoch});
    });
    ge::in_stage("write", [&] { ge::save_lm(model, a.out, &cfg); });
  } else {
    auto model = ge::in_stage("model", [&] { return ge::SegModel<float>(cfg.seg_config(), vocab, glyphs, rng); });
    if (atlas) model.set_oov_atlas(&*atlas);
    ge::in_stage("train", [&] { return ge::train_seg(model, split.first, split.second, opts, {{}, on_epoch}); });
    ge::in_stage("write", [&] { ge::save_seg(model, a.out, &cfg); });
  }
  emit({{"event", "saved"}, {"ckpt", a.out}, {"vocab_size", vocab.size()}});
}

std::optional<ge::GlyphAtlas> maybe_atlas(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return ge::in_stage("atlas", [&] { return ge::GlyphAtlas::load(path); });
}

void eval_lm_cmd(const std::string& ckpt, const std::string& test, const std::string& atlas_path) {
  auto model = ge::in_stage("checkpoint", [&] { return ge::load_lm<float>(ckpt); });
  const auto atlas = maybe_atlas(atlas_path);
  if (atlas) model.set_oov_atlas(&*atlas);
  const auto corpus = ge::in_stage("corpus", [&] { return ge::parse_bakeoff_file(test); });
  const auto ev = ge::in_stage("eval", [&] { return ge::evaluate_lm(model, ge::sentences_of(corpus)); });
  std::cout << ge::format_perplexity(ev.perplexity) << '\n';
  auto j = ge::lm_metrics_json(ev);
  j["event"] = "test";
  j["unk_rate"] = ge::unk_rate(model.vocab(), ge::sentences_of(corpus));
  emit(j);
}

void segment_cmd(const std::string& ckpt, const std::string& in_path, const std::string& out_path,
                 const std::string& atlas_path) {
  auto model = ge::in_stage("checkpoint", [&] { return ge::load_seg<float>(ckpt); });
  const auto atlas = maybe_atlas(atlas_path);
  if (atlas) model.set_oov_atlas(&*atlas);
  const auto lines = ge::in_stage("corpus", [&] {
    std::ifstream in(in_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + in_path);
    return ge::read_raw_lines(in);
  });
  const auto segmented = ge::in_stage("segment", [&] { return ge::segment_text(model, lines); });
  ge::in_stage("write", [&] {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    for (const auto& s : segmented) out << ge::join_words(s) << '\n';
    if (!out) throw std::runtime_error("write failed: " + out_path);
  });
  emit({{"event", "segment"}, {"lines", lines.size()}, {"out", out_path}});
}

void eval_seg_cmd(const std::string& pred_path, const std::string& gold_path) {
  // Blank lines are kept so that sentence i of each file lines up.
  auto read_all = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<ge::SegmentedSentence> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      try {
        out.push_back(ge::split_words(ge::utf8_decode(line)));
      } catch (const ge::Utf8Error& e) {
        throw ge::Utf8Error(path + " line " + std::to_string(n) + ": " + e.what());
      }
    }
    return out;
  };
  const auto pred = ge::in_stage("corpus", [&] { return read_all(pred_path); });
  const auto gold = ge::in_stage("corpus", [&] { return read_all(gold_path); });
  const auto s = ge::in_stage("score", [&] { return ge::score_segmentation(pred, gold); });
  std::cout << ge::format_seg_score(s) << '\n';
  auto j = ge::seg_metrics_json(s);
  j["event"] = "test";
  emit(j);
}

void analyze_norms_cmd(const std::string& ckpt_path, std::size_t bins, const std::string& out,
                       const std::string& records_out) {
  const auto ck = ge::in_stage("checkpoint", [&] { return ge::Checkpoint::load(ckpt_path); });
  const auto task = ge::in_stage("checkpoint", [&] { return ge::checkpoint_task(ck); });
  const auto records = ge::in_stage("analysis", [&] {
    if (task == ge::Task::lm) {
      auto m = ge::lm_from_checkpoint<float>(ck);
      return ge::embedding_norms(m.embedder(), m.vocab(), m.glyphs());
    }
    auto m = ge::seg_from_checkpoint<float>(ck);
    return ge::embedding_norms(m.embedder(), m.vocab(), m.glyphs());
  });
  const std::string csv = ge::in_stage("analysis", [&] { return ge::export_norm_histogram(records, bins); });
  ge::in_stage("write", [&] {
    if (out.empty()) {
      std::cout << csv;
    } else {
      ge::detail::write_text(out, csv);
    }
    if (!records_out.empty()) ge::detail::write_text(records_out, ge::norm_records_csv(records));
  });
  const auto summary = ge::summarize_norms(records);
  emit({{"event", "norms"},
        {"task", ge::to_string(task)},
        {"records", records.size()},
        {"median_id_norm", summary.median_id},
        {"median_glyph_norm", summary.median_glyph},
        {"ordering", summary.ordering}});
}

void run_cmd(const std::string& config, const std::vector<std::string>& overrides) {
  ge::ExperimentConfig cfg = ge::in_stage("config", [&] {
    auto text = read_text(config);
    for (const auto& o : overrides) text += "\n" + o;
    // A `task` key is required for `run`.
    bool has_task = false;
    for (const auto& kv : ge::parse_key_values(text)) has_task |= kv.first == "task";
    if (!has_task) throw ge::ConfigError("config must set task = lm|seg");
    return ge::parse_config(text);
  });
  const auto r = ge::run_experiment(cfg);
  std::cout << r.summary << '\n';
  auto j = r.metrics;
  j["run_dir"] = r.run_dir.string();
  emit(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Glyph-aware Chinese character embeddings"};
  app.require_subcommand(1);

  BuildAtlasArgs atlas_args;
  auto* ba = app.add_subcommand("build-atlas", "Render a charset into a glyph atlas");
  ba->add_option("--font", atlas_args.font, "TrueType font (.ttf/.otf with glyf outlines, .ttc)")->required();
  ba->add_option("--charset", atlas_args.charset, "UTF-8 text file; every distinct character is rendered")
      ->required();
  ba->add_option("--resolution", atlas_args.resolution, "Bitmap side in pixels")->capture_default_str();
  ba->add_option("--out", atlas_args.out, "Atlas output path")->required();

  BuildVocabArgs vocab_args;
  auto* bv = app.add_subcommand("build-vocab", "Build a character vocabulary from a corpus");
  bv->add_option("--corpus", vocab_args.corpus, "Segmented or raw UTF-8 corpus")->required();
  bv->add_option("--max-size", vocab_args.max_size, "Content characters kept")->capture_default_str();
  bv->add_option("--out", vocab_args.out, "Vocabulary output path")->required();

  TrainArgs lm_args, seg_args;
  auto add_train = [&](const char* name, const char* help, TrainArgs& a) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--config", a.config, "key=value config file");
    c->add_option("--train", a.train, "Training corpus (overrides config)");
    c->add_option("--atlas", a.atlas, "Glyph atlas (overrides config)");
    c->add_option("--set", a.overrides, "Extra key=value settings, applied after the config file");
    c->add_option("--out", a.out, "Checkpoint output path")->required();
    return c;
  };
  auto* tl = add_train("train-lm", "Train the character language model", lm_args);
  auto* ts = add_train("train-seg", "Train the word segmentor", seg_args);

  std::string ckpt, test, atlas, in_path, out_path, pred, gold, records_out, config;
  std::size_t bins = 50;
  std::vector<std::string> overrides;
  auto* el = app.add_subcommand("eval-lm", "Test perplexity of a language model");
  el->add_option("--ckpt", ckpt)->required();
  el->add_option("--test", test)->required();
  el->add_option("--atlas", atlas, "Atlas for out-of-vocabulary glyphs (oov_glyphs models)");

  auto* sg = app.add_subcommand("segment", "Segment raw text, one sentence per line");
  sg->add_option("--ckpt", ckpt)->required();
  sg->add_option("--in", in_path)->required();
  sg->add_option("--out", out_path)->required();
  sg->add_option("--atlas", atlas, "Atlas for out-of-vocabulary glyphs (oov_glyphs models)");

  auto* es = app.add_subcommand("eval-seg", "Word precision/recall/F1 of a segmentation");
  es->add_option("--pred", pred)->required();
  es->add_option("--gold", gold)->required();

  auto* an = app.add_subcommand("analyze-norms", "Histogram of ID vs glyph embedding norms (mixed models)");
  an->add_option("--ckpt", ckpt)->required();
  an->add_option("--bins", bins)->capture_default_str()->check(CLI::PositiveNumber);
  an->add_option("--out", out_path, "Histogram CSV (stdout if omitted)");
  an->add_option("--records", records_out, "Per-character norms CSV");

  auto* rn = app.add_subcommand("run", "Full experiment into runs/<timestamp>-<tag>/");
  rn->add_option("--config", config)->required();
  rn->add_option("--set", overrides, "Extra key=value settings, applied after the config file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ba) build_atlas_cmd(atlas_args);
    else if (*bv) build_vocab_cmd(vocab_args);
    else if (*tl) train_cmd(ge::Task::lm, lm_args);
    else if (*ts) train_cmd(ge::Task::seg, seg_args);
    else if (*el) eval_lm_cmd(ckpt, test, atlas);
    else if (*sg) segment_cmd(ckpt, in_path, out_path, atlas);
    else if (*es) eval_seg_cmd(pred, gold);
    else if (*an) analyze_norms_cmd(ckpt, bins, out_path, records_out);
    else if (*rn) run_cmd(config, overrides);
  } catch (const ge::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: [internal] " << e.what() << '\n';
    return 1;
  }
  return 0;
}
