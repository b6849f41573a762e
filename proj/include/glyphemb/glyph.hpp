// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Glyph bitmaps, translation jitter, and the persisted glyph atlas.
//
// Atlas file, version 1 (little-endian):
//
//   magic        8 bytes  "GLYATLAS"
//   version      u32      1
//   resolution   u32      R
//   entry_count  u32
//   font name    u32 len + UTF-8 bytes
//   entry_count x { u8 len + UTF-8 bytes of one character,
//                   R*R bytes of 8-bit intensity, row-major }
//
// Entries are sorted by code point. Intensities map to [0, 1] by /255.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "glyphemb/binary_io.hpp"
#include "glyphemb/random.hpp"
#include "glyphemb/truetype.hpp"
#include "glyphemb/utf8.hpp"

namespace glyphemb {

inline constexpr std::size_t kDefaultResolution = 36;
inline constexpr int kMaxJitter = 2;
inline constexpr std::size_t kGlyphMargin = 2;

/// Square grayscale raster with intensities in [0, 1], row-major.
class GlyphBitmap {
 public:
  GlyphBitmap() = default;

  explicit GlyphBitmap(std::size_t resolution)
      : resolution_(resolution), pixels_(resolution * resolution, 0.0f) {}

  GlyphBitmap(std::size_t resolution, std::vector<float> pixels)
      : resolution_(resolution), pixels_(std::move(pixels)) {
    if (pixels_.size() != resolution_ * resolution_)
      throw std::invalid_argument("glyph bitmap: pixel count does not match resolution");
    for (float p : pixels_)
      if (!(p >= 0.0f && p <= 1.0f))
        throw std::invalid_argument("glyph bitmap: intensity outside [0, 1]");
  }

  static GlyphBitmap blank(std::size_t resolution) { return GlyphBitmap(resolution); }

  std::size_t resolution() const { return resolution_; }
  std::size_t width() const { return resolution_; }
  std::size_t height() const { return resolution_; }
  std::span<const float> pixels() const { return pixels_; }

  float at(std::size_t x, std::size_t y) const { return pixels_[y * resolution_ + x]; }
  void set(std::size_t x, std::size_t y, float v) { pixels_[y * resolution_ + x] = v; }

  bool is_blank() const {
    return std::all_of(pixels_.begin(), pixels_.end(), [](float p) { return p == 0.0f; });
  }

  /// Smallest distance from lit content to any border; R when blank.
  std::size_t content_margin() const {
    std::size_t m = resolution_;
    for (std::size_t y = 0; y < resolution_; ++y)
      for (std::size_t x = 0; x < resolution_; ++x)
        if (at(x, y) != 0.0f)
          m = std::min({m, x, y, resolution_ - 1 - x, resolution_ - 1 - y});
    return m;
  }

  friend bool operator==(const GlyphBitmap&, const GlyphBitmap&) = default;

 private:
  std::size_t resolution_ = 0;
  std::vector<float> pixels_;
};

/// Integer translation with both offsets in [-2, 2].
struct JitterSpec {
  int dx = 0;
  int dy = 0;

  void validate() const {
    if (std::abs(dx) > kMaxJitter || std::abs(dy) > kMaxJitter)
      throw std::invalid_argument("jitter offset (" + std::to_string(dx) + ", " +
                                  std::to_string(dy) + ") outside [-2, 2]");
  }
  friend bool operator==(const JitterSpec&, const JitterSpec&) = default;
};

/// Translates content by (dx, dy); vacated pixels become 0.
inline GlyphBitmap jitter(const GlyphBitmap& in, JitterSpec spec) {
  spec.validate();
  const auto r = static_cast<std::ptrdiff_t>(in.resolution());
  GlyphBitmap out(in.resolution());
  for (std::ptrdiff_t y = 0; y < r; ++y) {
    const std::ptrdiff_t sy = y - spec.dy;
    if (sy < 0 || sy >= r) continue;
    for (std::ptrdiff_t x = 0; x < r; ++x) {
      const std::ptrdiff_t sx = x - spec.dx;
      if (sx < 0 || sx >= r) continue;
      out.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
              in.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy)));
    }
  }
  return out;
}

/// All 25 offset pairs, in the order sample_jitter indexes them.
inline std::array<JitterSpec, 25> jitter_support() {
  std::array<JitterSpec, 25> all{};
  std::size_t i = 0;
  for (int dy = -kMaxJitter; dy <= kMaxJitter; ++dy)
    for (int dx = -kMaxJitter; dx <= kMaxJitter; ++dx) all[i++] = {dx, dy};
  return all;
}

/// Uniform draw over the 25 offset pairs.
inline JitterSpec sample_jitter(Rng& rng) {
  static const auto support = jitter_support();
  return support[rng.uniform_index(support.size())];
}

/// Immutable character -> bitmap map. Lookups decode the stored bytes on
/// first use and memoize; decode_count() reports how many decodes ran.
class GlyphAtlas {
 public:
  GlyphAtlas() = default;
  GlyphAtlas(std::size_t resolution, std::string font_name)
      : resolution_(resolution), font_name_(std::move(font_name)),
        blank_(resolution) {}

  GlyphAtlas(const GlyphAtlas& other)
      : resolution_(other.resolution_), font_name_(other.font_name_),
        entries_(other.entries_), blank_(other.blank_) {}
  GlyphAtlas& operator=(const GlyphAtlas& other) {
    if (this != &other) {
      std::scoped_lock lock(cache_mutex_);
      resolution_ = other.resolution_;
      font_name_ = other.font_name_;
      entries_ = other.entries_;
      blank_ = other.blank_;
      cache_.clear();
      decode_count_ = 0;
    }
    return *this;
  }
  GlyphAtlas(GlyphAtlas&& other) noexcept : GlyphAtlas() { swap(other); }
  GlyphAtlas& operator=(GlyphAtlas&& other) noexcept {
    GlyphAtlas tmp(std::move(other));
    swap(tmp);
    return *this;
  }

  std::size_t resolution() const { return resolution_; }
  const std::string& font_name() const { return font_name_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(char32_t c) const { return entries_.count(c) != 0; }
  const GlyphBitmap& blank() const { return blank_; }

  std::vector<char32_t> characters() const {
    std::vector<char32_t> out;
    out.reserve(entries_.size());
    for (const auto& [c, _] : entries_) out.push_back(c);
    return out;
  }

  /// Stores a bitmap; intensities are quantized to 8 bits.
  void insert(char32_t c, const GlyphBitmap& bmp) {
    if (bmp.resolution() != resolution_)
      throw std::invalid_argument("atlas insert: resolution mismatch");
    std::vector<std::uint8_t> bytes(bmp.pixels().size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
      bytes[i] = static_cast<std::uint8_t>(std::lround(bmp.pixels()[i] * 255.0f));
    std::scoped_lock lock(cache_mutex_);
    entries_[c] = std::move(bytes);
    cache_.erase(c);
  }

  /// Bitmap for c; the blank bitmap when c is not in the atlas.
  /// The returned reference stays valid for the atlas' lifetime.
  const GlyphBitmap& get(char32_t c) const {
    const auto it = entries_.find(c);
    if (it == entries_.end()) return blank_;
    std::scoped_lock lock(cache_mutex_);
    auto cached = cache_.find(c);
    if (cached != cache_.end()) return cached->second;
    ++decode_count_;
    std::vector<float> px(it->second.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = it->second[i] / 255.0f;
    return cache_.emplace(c, GlyphBitmap(resolution_, std::move(px))).first->second;
  }

  std::size_t decode_count() const { return decode_count_.load(); }

  std::vector<std::uint8_t> serialize() const {
    ByteWriter w;
    w.bytes("GLYATLAS");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(resolution_));
    w.u32(static_cast<std::uint32_t>(entries_.size()));
    w.str(font_name_);
    for (const auto& [c, bytes] : entries_) {
      const std::string u = utf8_encode(c);
      w.u8(static_cast<std::uint8_t>(u.size()));
      w.bytes(u);
      w.bytes(bytes.data(), bytes.size());
    }
    return w.buffer();
  }

  static GlyphAtlas deserialize(const std::vector<std::uint8_t>& data) {
    ByteReader r(data);
    if (r.bytes(8) != "GLYATLAS") throw FormatError("not a glyph atlas (bad magic)");
    if (const auto v = r.u32(); v != 1)
      throw FormatError("unsupported atlas version " + std::to_string(v));
    const std::size_t res = r.u32();
    if (res == 0) throw FormatError("atlas resolution is zero");
    const std::uint32_t count = r.u32();
    GlyphAtlas atlas(res, r.str());
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::u32string ch = utf8_decode(r.bytes(r.u8()));
      if (ch.size() != 1) throw FormatError("atlas entry is not a single character");
      const auto* px = r.raw(res * res);
      atlas.entries_[ch[0]] = std::vector<std::uint8_t>(px, px + res * res);
    }
    if (!r.at_end()) throw FormatError("trailing bytes after atlas");
    return atlas;
  }

  void save(const std::filesystem::path& path) const { write_file_bytes(path, serialize()); }
  static GlyphAtlas load(const std::filesystem::path& path) {
    return deserialize(read_file_bytes(path));
  }

 private:
  void swap(GlyphAtlas& o) noexcept {
    std::swap(resolution_, o.resolution_);
    std::swap(font_name_, o.font_name_);
    std::swap(entries_, o.entries_);
    std::swap(blank_, o.blank_);
    std::swap(cache_, o.cache_);
    const auto n = decode_count_.load();
    decode_count_ = o.decode_count_.load();
    o.decode_count_ = n;
  }

  std::size_t resolution_ = 0;
  std::string font_name_;
  std::map<char32_t, std::vector<std::uint8_t>> entries_;
  GlyphBitmap blank_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<char32_t, GlyphBitmap> cache_;
  mutable std::atomic<std::size_t> decode_count_{0};
};

struct AtlasBuildResult {
  GlyphAtlas atlas;
  std::vector<char32_t> missing;  // stored as blank bitmaps
};

/// Renders every distinct character of `charset` with `font`.
inline AtlasBuildResult build_atlas(std::span<const char32_t> charset,
                                    const TrueTypeFont& font,
                                    std::size_t resolution = kDefaultResolution) {
  if (charset.empty()) throw std::invalid_argument("build_atlas: empty charset");
  if (resolution < 16) throw std::invalid_argument("build_atlas: resolution must be >= 16");
  std::set<char32_t> distinct(charset.begin(), charset.end());
  AtlasBuildResult result{GlyphAtlas(resolution, font.name()), {}};
  for (char32_t c : distinct) {
    auto raster = render_glyph(font, c, resolution, static_cast<double>(kGlyphMargin));
    if (!raster) {
      result.missing.push_back(c);
      result.atlas.insert(c, GlyphBitmap::blank(resolution));
      continue;
    }
    result.atlas.insert(c, GlyphBitmap(resolution, std::move(*raster)));
  }
  return result;
}

/// Distinct non-whitespace characters of a UTF-8 text, in code point order.
inline std::vector<char32_t> charset_from_text(std::string_view utf8) {
  std::set<char32_t> s;
  for (char32_t c : utf8_decode(utf8))
    if (!is_space(c)) s.insert(c);
  return {s.begin(), s.end()};
}

}  // namespace glyphemb
