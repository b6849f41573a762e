// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Bakeoff-format corpora, the frequency-capped vocabulary, and the
// conversion between word segmentations and per-character boundary labels.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "glyphemb/utf8.hpp"

namespace glyphemb {

/// Characters of one sentence, no whitespace.
using Sentence = std::u32string;

/// 1 at i iff a word boundary follows character i.
using BoundaryLabeling = std::vector<std::uint8_t>;

struct SegmentedSentence {
  std::vector<std::u32string> words;

  Sentence text() const {
    Sentence s;
    for (const auto& w : words) s += w;
    return s;
  }

  friend bool operator==(const SegmentedSentence&, const SegmentedSentence&) = default;
};

struct CorpusStats {
  std::size_t lines = 0;
  std::size_t empty_lines = 0;
  std::size_t sentences = 0;
  std::size_t words = 0;
  std::size_t characters = 0;
};

/// Splits a line on whitespace into words.
inline SegmentedSentence split_words(std::u32string_view line) {
  SegmentedSentence s;
  std::u32string cur;
  for (char32_t c : line) {
    if (is_space(c)) {
      if (!cur.empty()) s.words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) s.words.push_back(std::move(cur));
  return s;
}

/// One sentence per line, words separated by whitespace; blank lines are
/// skipped. Throws Utf8Error (with the line number) on invalid UTF-8.
inline std::vector<SegmentedSentence> parse_bakeoff(std::istream& in,
                                                    CorpusStats* stats = nullptr) {
  std::vector<SegmentedSentence> out;
  CorpusStats st;
  std::string line;
  while (std::getline(in, line)) {
    ++st.lines;
    std::u32string decoded;
    try {
      decoded = utf8_decode(line);
    } catch (const Utf8Error& e) {
      throw Utf8Error("line " + std::to_string(st.lines) + ": " + e.what());
    }
    SegmentedSentence s = split_words(decoded);
    if (s.words.empty()) {
      ++st.empty_lines;
      continue;
    }
    st.words += s.words.size();
    for (const auto& w : s.words) st.characters += w.size();
    out.push_back(std::move(s));
  }
  st.sentences = out.size();
  if (stats) *stats = st;
  return out;
}

inline std::vector<SegmentedSentence> parse_bakeoff_file(const std::filesystem::path& path,
                                                         CorpusStats* stats = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  return parse_bakeoff(in, stats);
}

/// Raw text lines (segmentation whitespace, if any, removed). Empty lines are
/// kept as empty sentences so that outputs stay line-aligned.
inline std::vector<Sentence> read_raw_lines(std::istream& in) {
  std::vector<Sentence> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::u32string decoded;
    try {
      decoded = utf8_decode(line);
    } catch (const Utf8Error& e) {
      throw Utf8Error("line " + std::to_string(n) + ": " + e.what());
    }
    Sentence s;
    for (char32_t c : decoded)
      if (!is_space(c)) s.push_back(c);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<Sentence> sentences_of(const std::vector<SegmentedSentence>& corpus) {
  std::vector<Sentence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(s.text());
  return out;
}

/// The trailing `fraction` of the corpus becomes the dev split.
template <typename S>
std::pair<std::vector<S>, std::vector<S>> split_dev(const std::vector<S>& corpus,
                                                    double fraction) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw std::invalid_argument("dev fraction must lie in [0, 1)");
  auto dev_n = static_cast<std::size_t>(static_cast<double>(corpus.size()) * fraction);
  if (fraction > 0.0 && dev_n == 0 && corpus.size() > 1) dev_n = 1;
  const auto cut = corpus.begin() + static_cast<std::ptrdiff_t>(corpus.size() - dev_n);
  return {std::vector<S>(corpus.begin(), cut), std::vector<S>(cut, corpus.end())};
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Character -> id map with reserved ids PAD=0, UNK=1, BOS=2, EOS=3 and
/// content characters from 4 on, ranked by descending frequency (ties by
/// code point). size() counts all ids, reserved ones included.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;
  static constexpr std::size_t kDefaultMaxSize = 4000;

  Vocab() = default;

  static Vocab build(const std::vector<Sentence>& corpus,
                     std::size_t max_size = kDefaultMaxSize) {
    if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    std::map<char32_t, std::uint64_t> freq;
    for (const auto& s : corpus)
      for (char32_t c : s) ++freq[c];
    if (freq.empty()) throw std::invalid_argument("build_vocab: corpus has no characters");
    std::vector<std::pair<char32_t, std::uint64_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > max_size) ranked.resize(max_size);
    Vocab v;
    for (const auto& [c, f] : ranked) v.add(c, f);
    return v;
  }

  static Vocab build(const std::vector<SegmentedSentence>& corpus,
                     std::size_t max_size = kDefaultMaxSize) {
    return build(sentences_of(corpus), max_size);
  }

  std::size_t size() const { return kReserved + chars_.size(); }
  std::size_t content_size() const { return chars_.size(); }

  int encode(char32_t c) const {
    const auto it = ids_.find(c);
    return it == ids_.end() ? kUnk : it->second;
  }

  std::vector<int> encode(const Sentence& s) const {
    std::vector<int> out;
    out.reserve(s.size());
    for (char32_t c : s) out.push_back(encode(c));
    return out;
  }

  bool is_content(int id) const {
    return id >= kReserved && static_cast<std::size_t>(id) < size();
  }

  /// Character of a content id; throws for reserved or out-of-range ids.
  char32_t character(int id) const {
    if (!is_content(id)) throw std::out_of_range("vocab id " + std::to_string(id) + " has no character");
    return chars_[static_cast<std::size_t>(id - kReserved)];
  }

  std::uint64_t frequency(int id) const {
    return is_content(id) ? freqs_[static_cast<std::size_t>(id - kReserved)] : 0;
  }

  /// Vocab file: a reserved-id header, then one `char<TAB>id<TAB>freq` line
  /// per content character in id order.
  std::string serialize() const {
    std::ostringstream os;
    os << "#glyphemb-vocab\tv1\tPAD=" << kPad << "\tUNK=" << kUnk << "\tBOS=" << kBos
       << "\tEOS=" << kEos << "\tcontent=" << chars_.size() << '\n';
    for (std::size_t i = 0; i < chars_.size(); ++i)
      os << utf8_encode(chars_[i]) << '\t' << (i + kReserved) << '\t' << freqs_[i] << '\n';
    return os.str();
  }

  static Vocab parse(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("#glyphemb-vocab\tv1\t", 0) != 0)
      throw std::runtime_error("vocab: missing or unsupported header");
    Vocab v;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string::npos)
        throw std::runtime_error("vocab: malformed line " + std::to_string(lineno));
      const std::u32string ch = utf8_decode(line.substr(0, t1));
      const long id = std::stol(line.substr(t1 + 1, t2 - t1 - 1));
      const auto freq = std::stoull(line.substr(t2 + 1));
      if (ch.size() != 1 || id != static_cast<long>(v.size()))
        throw std::runtime_error("vocab: bad entry on line " + std::to_string(lineno));
      v.add(ch[0], freq);
    }
    return v;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << serialize();
  }
  static Vocab load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open vocab " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.chars_ == b.chars_ && a.freqs_ == b.freqs_;
  }

 private:
  void add(char32_t c, std::uint64_t freq) {
    if (ids_.count(c)) throw std::runtime_error("vocab: duplicate character");
    ids_[c] = static_cast<int>(size());
    chars_.push_back(c);
    freqs_.push_back(freq);
  }

  std::vector<char32_t> chars_;
  std::vector<std::uint64_t> freqs_;
  std::unordered_map<char32_t, int> ids_;
};

/// Fraction of character tokens that encode to UNK.
inline double unk_rate(const Vocab& vocab, const std::vector<Sentence>& corpus) {
  std::size_t total = 0, unk = 0;
  for (const auto& s : corpus)
    for (char32_t c : s) {
      ++total;
      unk += vocab.encode(c) == Vocab::kUnk;
    }
  return total ? static_cast<double>(unk) / static_cast<double>(total) : 0.0;
}

// ---------------------------------------------------------------------------
// Boundary labels
// ---------------------------------------------------------------------------

inline BoundaryLabeling label_boundaries(const SegmentedSentence& s) {
  BoundaryLabeling labels;
  for (const auto& w : s.words) {
    if (w.empty()) throw std::invalid_argument("label_boundaries: empty word");
    labels.insert(labels.end(), w.size() - 1, 0);
    labels.push_back(1);
  }
  return labels;
}

/// Splits after every 1; a trailing 0 is treated as 1.
inline SegmentedSentence decode_words(const Sentence& s, const BoundaryLabeling& labels) {
  if (s.size() != labels.size())
    throw std::invalid_argument("decode_words: " + std::to_string(s.size()) +
                                " characters but " + std::to_string(labels.size()) +
                                " labels");
  SegmentedSentence out;
  std::u32string cur;
  for (std::size_t i = 0; i < s.size(); ++i) {
    cur.push_back(s[i]);
    if (labels[i] || i + 1 == s.size()) {
      out.words.push_back(std::move(cur));
      cur.clear();
    }
  }
  return out;
}

inline std::string join_words(const SegmentedSentence& s, std::string_view sep = "  ") {
  std::string out;
  for (std::size_t i = 0; i < s.words.size(); ++i) {
    if (i) out += sep;
    out += utf8_encode(s.words[i]);
  }
  return out;
}

}  // namespace glyphemb
