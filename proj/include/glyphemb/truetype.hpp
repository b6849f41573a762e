// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Minimal TrueType reader and anti-aliased rasterizer.
//
// Supports sfnt files with quadratic `glyf` outlines (simple and composite
// glyphs), cmap formats 4 and 12, and the first face of a collection.
// CFF-flavoured OpenType ('OTTO') is rejected. Hinting is ignored; the
// rasterizer computes exact horizontal span coverage on 16 sub-scanlines
// per pixel row with the nonzero winding rule, so output is deterministic.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "glyphemb/binary_io.hpp"
#include "glyphemb/utf8.hpp"

namespace glyphemb {

class FontError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Point2 {
  double x = 0;
  double y = 0;
};

/// Closed polylines; the last point connects back to the first.
using Outline = std::vector<std::vector<Point2>>;

class TrueTypeFont {
 public:
  static TrueTypeFont load(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
      bytes = read_file_bytes(path);
    } catch (const std::exception& e) {
      throw FontError(std::string("unreadable font: ") + e.what());
    }
    TrueTypeFont f(std::move(bytes));
    if (f.family_.empty()) f.family_ = path.stem().string();
    return f;
  }

  explicit TrueTypeFont(std::vector<std::uint8_t> bytes) : data_(std::move(bytes)) {
    parse();
  }

  /// Full font name from the `name` table, if any.
  const std::string& name() const { return family_; }
  unsigned units_per_em() const { return units_per_em_; }
  std::size_t glyph_count() const { return num_glyphs_; }

  /// Glyph index for a code point; 0 (.notdef) means the font lacks it.
  std::uint32_t glyph_index(char32_t cp) const {
    if (cmap_format_ == 12) return lookup_format12(cp);
    if (cmap_format_ == 4) return cp > 0xFFFF ? 0 : lookup_format4(cp);
    return 0;
  }

  bool has_glyph(char32_t cp) const { return glyph_index(cp) != 0; }

  int advance_width(std::uint32_t glyph) const {
    if (hmtx_ == 0 || num_hmetrics_ == 0) return static_cast<int>(units_per_em_);
    const std::uint32_t i = std::min<std::uint32_t>(glyph, num_hmetrics_ - 1);
    return u16(hmtx_ + 4 * i);
  }

  /// Vertical extent of the em box (typographic ascender/descender).
  int em_top() const { return em_top_; }
  int em_bottom() const { return em_bottom_; }

  /// Flattened outline of a glyph in font units (y up).
  Outline outline(std::uint32_t glyph) const {
    Outline out;
    append_glyph(glyph, 1, 0, 0, 1, 0, 0, out, 0);
    return out;
  }

 private:
  std::uint16_t u16(std::size_t off) const {
    check(off, 2);
    return static_cast<std::uint16_t>((data_[off] << 8) | data_[off + 1]);
  }
  std::int16_t i16(std::size_t off) const { return static_cast<std::int16_t>(u16(off)); }
  std::uint32_t u32(std::size_t off) const {
    check(off, 4);
    return (std::uint32_t{data_[off]} << 24) | (std::uint32_t{data_[off + 1]} << 16) |
           (std::uint32_t{data_[off + 2]} << 8) | std::uint32_t{data_[off + 3]};
  }
  void check(std::size_t off, std::size_t n) const {
    if (off > data_.size() || data_.size() - off < n)
      throw FontError("font data truncated");
  }

  void parse() {
    std::size_t base = 0;
    const std::uint32_t tag = u32(0);
    if (tag == 0x74746366) base = u32(12);  // 'ttcf': first face
    const std::uint32_t version = u32(base);
    if (version == 0x4F54544F)
      throw FontError("CFF-based OpenType fonts are not supported; use a TrueType (glyf) font");
    if (version != 0x00010000 && version != 0x74727565)
      throw FontError("not a TrueType font");
    const std::uint16_t ntables = u16(base + 4);
    for (std::uint16_t i = 0; i < ntables; ++i) {
      const std::size_t rec = base + 12 + 16 * std::size_t{i};
      const std::uint32_t t = u32(rec);
      const std::uint32_t off = u32(rec + 8);
      switch (t) {
        case 0x68656164: head_ = off; break;  // head
        case 0x6D617870: maxp_ = off; break;  // maxp
        case 0x636D6170: cmap_ = off; break;  // cmap
        case 0x6C6F6361: loca_ = off; break;  // loca
        case 0x676C7966: glyf_ = off; break;  // glyf
        case 0x68686561: hhea_ = off; break;  // hhea
        case 0x686D7478: hmtx_ = off; break;  // hmtx
        case 0x4F532F32: os2_ = off; break;   // OS/2
        case 0x6E616D65: name_ = off; break;  // name
        default: break;
      }
    }
    if (!head_ || !maxp_ || !cmap_ || !loca_ || !glyf_)
      throw FontError("font lacks a required table (head/maxp/cmap/loca/glyf)");
    units_per_em_ = u16(head_ + 18);
    if (units_per_em_ == 0) throw FontError("font has zero unitsPerEm");
    long_loca_ = i16(head_ + 50) != 0;
    num_glyphs_ = u16(maxp_ + 4);
    if (hhea_) num_hmetrics_ = u16(hhea_ + 34);
    em_top_ = static_cast<int>(units_per_em_) * 88 / 100;
    em_bottom_ = em_top_ - static_cast<int>(units_per_em_);
    if (os2_) {
      const int asc = i16(os2_ + 68), desc = i16(os2_ + 70);
      if (asc > desc) {
        em_top_ = asc;
        em_bottom_ = desc;
      }
    }
    pick_cmap();
    read_name();
  }

  void pick_cmap() {
    const std::uint16_t n = u16(cmap_ + 2);
    int best = -1;
    for (std::uint16_t i = 0; i < n; ++i) {
      const std::size_t rec = cmap_ + 4 + 8 * std::size_t{i};
      const std::uint16_t platform = u16(rec), encoding = u16(rec + 2);
      const std::size_t off = cmap_ + u32(rec + 4);
      const std::uint16_t format = u16(off);
      const bool unicode = platform == 0 || (platform == 3 && (encoding == 1 || encoding == 10));
      if (!unicode) continue;
      const int score = format == 12 ? 2 : format == 4 ? 1 : -1;
      if (score > best) {
        best = score;
        cmap_sub_ = off;
        cmap_format_ = format;
      }
    }
    if (best < 0) throw FontError("font has no Unicode cmap (format 4 or 12)");
  }

  std::uint32_t lookup_format4(char32_t cp) const {
    const std::size_t t = cmap_sub_;
    const std::uint16_t segx2 = u16(t + 6);
    const std::size_t ends = t + 14, starts = ends + segx2 + 2,
                      deltas = starts + segx2, ranges = deltas + segx2;
    for (std::size_t s = 0; s < segx2; s += 2) {
      const std::uint16_t end = u16(ends + s);
      if (cp > end) continue;
      const std::uint16_t start = u16(starts + s);
      if (cp < start) return 0;
      const std::uint16_t delta = u16(deltas + s);
      const std::uint16_t range = u16(ranges + s);
      if (range == 0) return (cp + delta) & 0xFFFF;
      const std::size_t addr = ranges + s + range + 2 * (cp - start);
      const std::uint16_t g = u16(addr);
      return g == 0 ? 0 : (g + delta) & 0xFFFF;
    }
    return 0;
  }

  std::uint32_t lookup_format12(char32_t cp) const {
    const std::uint32_t groups = u32(cmap_sub_ + 12);
    std::uint32_t lo = 0, hi = groups;
    while (lo < hi) {
      const std::uint32_t mid = (lo + hi) / 2;
      const std::size_t g = cmap_sub_ + 16 + 12 * std::size_t{mid};
      const std::uint32_t start = u32(g), end = u32(g + 4);
      if (cp < start) {
        hi = mid;
      } else if (cp > end) {
        lo = mid + 1;
      } else {
        return u32(g + 8) + (cp - start);
      }
    }
    return 0;
  }

  void read_name() {
    if (!name_) return;
    const std::uint16_t count = u16(name_ + 2);
    const std::size_t strings = name_ + u16(name_ + 4);
    int best = -1;
    for (std::uint16_t i = 0; i < count; ++i) {
      const std::size_t rec = name_ + 6 + 12 * std::size_t{i};
      const std::uint16_t platform = u16(rec), name_id = u16(rec + 6);
      const std::uint16_t len = u16(rec + 8), off = u16(rec + 10);
      if (name_id != 4 && name_id != 1) continue;
      const int score = (name_id == 4 ? 2 : 0) + (platform == 3 ? 1 : 0);
      if (platform != 3 && platform != 1) continue;
      if (score <= best) continue;
      std::string s;
      const std::size_t p = strings + off;
      check(p, len);
      if (platform == 3) {
        for (std::size_t k = 0; k + 1 < len; k += 2) {
          const char32_t c = u16(p + k);
          if (c < 0xD800 || c > 0xDFFF) utf8_append(s, c);
        }
      } else {
        for (std::size_t k = 0; k < len; ++k)
          if (data_[p + k] < 0x80) s.push_back(static_cast<char>(data_[p + k]));
      }
      best = score;
      family_ = s;
    }
  }

  std::pair<std::size_t, std::size_t> glyph_range(std::uint32_t glyph) const {
    if (glyph >= num_glyphs_) return {0, 0};
    if (long_loca_) return {u32(loca_ + 4 * glyph), u32(loca_ + 4 * glyph + 4)};
    return {std::size_t{u16(loca_ + 2 * glyph)} * 2,
            std::size_t{u16(loca_ + 2 * glyph + 2)} * 2};
  }

  // Appends the glyph transformed by [a c; b d] + (dx, dy).
  void append_glyph(std::uint32_t glyph, double a, double b, double c, double d,
                    double dx, double dy, Outline& out, int depth) const {
    if (depth > 8) throw FontError("composite glyph nesting too deep");
    const auto [start, end] = glyph_range(glyph);
    if (end <= start) return;  // empty glyph such as a space
    const std::size_t g = glyf_ + start;
    const std::int16_t ncontours = i16(g);
    if (ncontours >= 0) {
      append_simple(g, static_cast<std::size_t>(ncontours), a, b, c, d, dx, dy, out);
      return;
    }
    std::size_t p = g + 10;
    for (;;) {
      const std::uint16_t flags = u16(p);
      const std::uint16_t child = u16(p + 2);
      p += 4;
      double ox = 0, oy = 0;
      if (flags & 0x0001) {
        if (flags & 0x0002) {
          ox = i16(p);
          oy = i16(p + 2);
        }
        p += 4;
      } else {
        if (flags & 0x0002) {
          check(p, 2);
          ox = static_cast<std::int8_t>(data_[p]);
          oy = static_cast<std::int8_t>(data_[p + 1]);
        }
        p += 2;
      }
      double ca = 1, cb = 0, cc = 0, cd = 1;
      auto f2dot14 = [&](std::size_t off) { return i16(off) / 16384.0; };
      if (flags & 0x0008) {
        ca = cd = f2dot14(p);
        p += 2;
      } else if (flags & 0x0040) {
        ca = f2dot14(p);
        cd = f2dot14(p + 2);
        p += 4;
      } else if (flags & 0x0080) {
        ca = f2dot14(p);
        cb = f2dot14(p + 2);
        cc = f2dot14(p + 4);
        cd = f2dot14(p + 6);
        p += 8;
      }
      // Compose parent * child.
      const double na = a * ca + c * cb, nb = b * ca + d * cb;
      const double nc = a * cc + c * cd, nd = b * cc + d * cd;
      const double ndx = a * ox + c * oy + dx, ndy = b * ox + d * oy + dy;
      append_glyph(child, na, nb, nc, nd, ndx, ndy, out, depth + 1);
      if (!(flags & 0x0020)) break;
    }
  }

  void append_simple(std::size_t g, std::size_t ncontours, double a, double b,
                     double c, double d, double dx, double dy, Outline& out) const {
    if (ncontours == 0) return;
    std::vector<std::uint16_t> end_pts(ncontours);
    for (std::size_t i = 0; i < ncontours; ++i) end_pts[i] = u16(g + 10 + 2 * i);
    const std::size_t npts = std::size_t{end_pts.back()} + 1;
    std::size_t p = g + 10 + 2 * ncontours;
    p += 2 + u16(p);  // skip instructions
    std::vector<std::uint8_t> flags;
    flags.reserve(npts);
    while (flags.size() < npts) {
      check(p, 1);
      const std::uint8_t f = data_[p++];
      flags.push_back(f);
      if (f & 0x08) {
        check(p, 1);
        std::uint8_t rep = data_[p++];
        while (rep-- > 0 && flags.size() < npts) flags.push_back(f);
      }
    }
    std::vector<double> xs(npts), ys(npts);
    auto read_coords = [&](std::vector<double>& dst, std::uint8_t short_bit,
                           std::uint8_t same_bit) {
      int v = 0;
      for (std::size_t i = 0; i < npts; ++i) {
        const std::uint8_t f = flags[i];
        if (f & short_bit) {
          check(p, 1);
          const int delta = data_[p++];
          v += (f & same_bit) ? delta : -delta;
        } else if (!(f & same_bit)) {
          v += i16(p);
          p += 2;
        }
        dst[i] = v;
      }
    };
    read_coords(xs, 0x02, 0x10);
    read_coords(ys, 0x04, 0x20);

    std::size_t first = 0;
    for (std::size_t ci = 0; ci < ncontours; ++ci) {
      const std::size_t last = end_pts[ci];
      if (last < first || last >= npts) throw FontError("corrupt glyph contour");
      std::vector<Point2> pts;
      std::vector<bool> on;
      for (std::size_t i = first; i <= last; ++i) {
        pts.push_back({a * xs[i] + c * ys[i] + dx, b * xs[i] + d * ys[i] + dy});
        on.push_back(flags[i] & 0x01);
      }
      first = last + 1;
      if (pts.size() < 2) continue;
      out.push_back(flatten_contour(pts, on));
    }
  }

  static std::vector<Point2> flatten_contour(const std::vector<Point2>& pts,
                                             const std::vector<bool>& on) {
    constexpr int kCurveSteps = 8;
    const std::size_t n = pts.size();
    auto mid = [](Point2 p, Point2 q) { return Point2{(p.x + q.x) / 2, (p.y + q.y) / 2}; };
    // Rotate so that we start on an on-curve point (or an implied one).
    std::size_t s = 0;
    while (s < n && !on[s]) ++s;
    Point2 start;
    std::size_t begin;
    if (s == n) {
      start = mid(pts[n - 1], pts[0]);
      begin = 0;
    } else {
      start = pts[s];
      begin = s + 1;
    }
    std::vector<Point2> poly{start};
    Point2 cur = start;
    std::optional<Point2> ctrl;
    auto emit_quad = [&](Point2 c0, Point2 to) {
      for (int k = 1; k <= kCurveSteps; ++k) {
        const double t = static_cast<double>(k) / kCurveSteps, u = 1 - t;
        poly.push_back({u * u * cur.x + 2 * u * t * c0.x + t * t * to.x,
                        u * u * cur.y + 2 * u * t * c0.y + t * t * to.y});
      }
      cur = to;
    };
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = (begin + k) % n;
      if (on[i]) {
        if (ctrl) {
          emit_quad(*ctrl, pts[i]);
          ctrl.reset();
        } else {
          poly.push_back(pts[i]);
          cur = pts[i];
        }
      } else {
        if (ctrl) emit_quad(*ctrl, mid(*ctrl, pts[i]));
        ctrl = pts[i];
      }
    }
    if (ctrl) emit_quad(*ctrl, start);
    if (poly.size() > 1 && poly.back().x == poly.front().x &&
        poly.back().y == poly.front().y)
      poly.pop_back();
    return poly;
  }

  std::vector<std::uint8_t> data_;
  std::size_t head_ = 0, maxp_ = 0, cmap_ = 0, loca_ = 0, glyf_ = 0, hhea_ = 0,
              hmtx_ = 0, os2_ = 0, name_ = 0;
  std::size_t cmap_sub_ = 0;
  std::uint16_t cmap_format_ = 0;
  unsigned units_per_em_ = 0;
  bool long_loca_ = false;
  std::uint32_t num_glyphs_ = 0;
  std::uint32_t num_hmetrics_ = 0;
  int em_top_ = 0, em_bottom_ = 0;
  std::string family_;
};

/// Fills polygons (in pixel coordinates, y down) into a width x height
/// coverage raster with values in [0, 1].
inline std::vector<float> rasterize_outline(const Outline& outline,
                                            std::size_t width,
                                            std::size_t height) {
  constexpr int kSub = 16;
  struct Edge {
    double x0, y0, x1, y1;
    int dir;
  };
  std::vector<Edge> edges;
  for (const auto& poly : outline) {
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point2 p = poly[i], q = poly[(i + 1) % poly.size()];
      if (p.y == q.y) continue;
      if (p.y < q.y) {
        edges.push_back({p.x, p.y, q.x, q.y, 1});
      } else {
        edges.push_back({q.x, q.y, p.x, p.y, -1});
      }
    }
  }
  std::vector<double> acc(width * height, 0.0);
  std::vector<std::pair<double, int>> xings;
  for (std::size_t row = 0; row < height; ++row) {
    for (int s = 0; s < kSub; ++s) {
      const double y = static_cast<double>(row) + (s + 0.5) / kSub;
      xings.clear();
      for (const auto& e : edges) {
        if (y < e.y0 || y >= e.y1) continue;
        const double x = e.x0 + (y - e.y0) * (e.x1 - e.x0) / (e.y1 - e.y0);
        xings.emplace_back(x, e.dir);
      }
      std::sort(xings.begin(), xings.end());
      int winding = 0;
      double span_start = 0;
      for (const auto& [x, dir] : xings) {
        const int before = winding;
        winding += dir;
        if (before == 0 && winding != 0) {
          span_start = x;
        } else if (before != 0 && winding == 0) {
          const double x0 = std::clamp(span_start, 0.0, static_cast<double>(width));
          const double x1 = std::clamp(x, 0.0, static_cast<double>(width));
          if (x1 <= x0) continue;
          const auto c0 = static_cast<std::size_t>(std::floor(x0));
          const auto c1 = std::min(width, static_cast<std::size_t>(std::ceil(x1)));
          for (std::size_t col = c0; col < c1; ++col) {
            const double lo = std::max(x0, static_cast<double>(col));
            const double hi = std::min(x1, static_cast<double>(col + 1));
            if (hi > lo) acc[row * width + col] += (hi - lo) / kSub;
          }
        }
      }
    }
  }
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i)
    out[i] = static_cast<float>(std::clamp(acc[i], 0.0, 1.0));
  return out;
}

/// Renders a character into a resolution x resolution raster. The em box
/// (advance width by typographic height) is scaled to the area inside
/// `margin` and centered; ink that would still cross the margin is scaled
/// down and shifted back inside. Returns nullopt when the font lacks the
/// character.
inline std::optional<std::vector<float>> render_glyph(const TrueTypeFont& font,
                                                      char32_t cp,
                                                      std::size_t resolution,
                                                      double margin) {
  const std::uint32_t gid = font.glyph_index(cp);
  if (gid == 0) return std::nullopt;
  Outline outline = font.outline(gid);
  const double r = static_cast<double>(resolution);
  const double fit = r - 2 * margin - 1e-6;
  if (fit <= 0) throw FontError("resolution too small for the glyph margin");
  if (outline.empty()) return std::vector<float>(resolution * resolution, 0.0f);

  const double box_w = std::max(1, font.advance_width(gid));
  const double box_h = font.em_top() - font.em_bottom();
  double scale = fit / std::max(box_w, box_h);
  double cx = box_w / 2, cy = font.em_bottom() + box_h / 2;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& poly : outline)
    for (const auto& p : poly) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  const double ink_w = xmax - xmin, ink_h = ymax - ymin;
  if (ink_w * scale > fit || ink_h * scale > fit) {
    scale = fit / std::max(ink_w, ink_h);
  }
  // Pixel position of a font-space point.
  auto to_px = [&](double x, double y) {
    return Point2{(x - cx) * scale + r / 2, r / 2 - (y - cy) * scale};
  };
  const Point2 lo = to_px(xmin, ymax), hi = to_px(xmax, ymin);
  double shift_x = 0, shift_y = 0;
  if (lo.x < margin) shift_x = margin - lo.x;
  if (hi.x > r - margin) shift_x = (r - margin) - hi.x;
  if (lo.y < margin) shift_y = margin - lo.y;
  if (hi.y > r - margin) shift_y = (r - margin) - hi.y;

  for (auto& poly : outline)
    for (auto& p : poly) {
      const Point2 q = to_px(p.x, p.y);
      p = {q.x + shift_x, q.y + shift_y};
    }
  return rasterize_outline(outline, resolution, resolution);
}

}  // namespace glyphemb
