// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Norms of the two branches of a mixed embedder, and their histograms.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <string>
#include <vector>

#include "glyphemb/embedder.hpp"

namespace glyphemb {

struct NormRecord {
  char32_t character = 0;
  double id_norm = 0;
  double glyph_norm = 0;
};

/// One record per content character of the vocabulary.
template <typename T>
std::vector<NormRecord> embedding_norms(EmbedderModel<T>& embedder, const Vocab& vocab,
                                        const GlyphTable& glyphs, std::size_t chunk = 256) {
  if (embedder.config().kind != EmbedderKind::mixed)
    throw std::invalid_argument("embedding_norms requires a mixed embedder, got " +
                                to_string(embedder.config().kind));
  std::vector<NormRecord> out;
  const int first = Vocab::kReserved, last = static_cast<int>(vocab.size());
  for (int start = first; start < last; start += static_cast<int>(chunk)) {
    const int end = std::min(last, start + static_cast<int>(chunk));
    std::vector<std::size_t> ids;
    std::vector<GlyphBitmap> bmps;
    for (int id = start; id < end; ++id) {
      ids.push_back(static_cast<std::size_t>(id));
      bmps.push_back(glyphs.glyph(id));
    }
    Tape<T> tape(false);
    Var idv = embedder.id_branch(tape, ids);
    Var gv = embedder.glyph_branch(tape, embedder.glyph_batch(tape, bmps));
    for (std::size_t r = 0; r < ids.size(); ++r) {
      NormRecord rec;
      rec.character = vocab.character(static_cast<int>(ids[r]));
      rec.id_norm = static_cast<double>(l2_norm(tape.value(idv).row(r)));
      rec.glyph_norm = static_cast<double>(l2_norm(tape.value(gv).row(r)));
      out.push_back(rec);
    }
  }
  return out;
}

struct HistogramRow {
  double bin_lo = 0;
  double bin_hi = 0;
  std::size_t id_count = 0;
  std::size_t glyph_count = 0;
};

/// Equal-width bins over [lo, hi]; by default lo = 0 and hi = the largest
/// norm. Values on or past the upper edge land in the last bin.
inline std::vector<HistogramRow> norm_histogram(std::span<const NormRecord> records,
                                                std::size_t bins,
                                                std::optional<std::pair<double, double>> range = {}) {
  if (bins == 0) throw std::invalid_argument("histogram: bins must be >= 1");
  double lo = 0, hi = 0;
  if (range) {
    std::tie(lo, hi) = *range;
  } else {
    for (const auto& r : records) hi = std::max({hi, r.id_norm, r.glyph_norm});
    if (hi <= lo) hi = lo + 1;
  }
  if (!(hi > lo)) throw std::invalid_argument("histogram: empty range");
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<HistogramRow> rows(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    rows[b].bin_lo = lo + width * static_cast<double>(b);
    rows[b].bin_hi = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
  }
  auto bin_of = [&](double v) {
    const double k = std::floor((v - lo) / width);
    if (k < 0) return std::size_t{0};
    return std::min(bins - 1, static_cast<std::size_t>(k));
  };
  for (const auto& r : records) {
    ++rows[bin_of(r.id_norm)].id_count;
    ++rows[bin_of(r.glyph_norm)].glyph_count;
  }
  return rows;
}

inline std::string histogram_csv(std::span<const HistogramRow> rows) {
  std::ostringstream os;
  os << "bin_lo,bin_hi,id_count,glyph_count\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%zu,%zu\n", r.bin_lo, r.bin_hi, r.id_count,
                  r.glyph_count);
    os << buf;
  }
  return os.str();
}

inline std::string export_norm_histogram(std::span<const NormRecord> records, std::size_t bins,
                                         std::optional<std::pair<double, double>> range = {}) {
  const auto rows = norm_histogram(records, bins, range);
  return histogram_csv(rows);
}

/// Per-character CSV: character,id_norm,glyph_norm.
inline std::string norm_records_csv(std::span<const NormRecord> records) {
  std::ostringstream os;
  os << "character,id_norm,glyph_norm\n";
  char buf[96];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", r.id_norm, r.glyph_norm);
    os << utf8_encode(r.character) << buf;
  }
  return os.str();
}

struct NormSummary {
  double median_id = 0;
  double median_glyph = 0;
  /// "glyph<id", "glyph>id" or "glyph=id" by median.
  std::string ordering;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline NormSummary summarize_norms(std::span<const NormRecord> records) {
  std::vector<double> a, b;
  for (const auto& r : records) {
    a.push_back(r.id_norm);
    b.push_back(r.glyph_norm);
  }
  NormSummary s{median(a), median(b), ""};
  s.ordering = s.median_glyph < s.median_id ? "glyph<id" : s.median_glyph > s.median_id ? "glyph>id" : "glyph=id";
  return s;
}

}  // namespace glyphemb
