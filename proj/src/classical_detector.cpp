#include "kiwi/classical_detector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>

#include "kiwi/config_file.hpp"

namespace kiwi {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::config, what); }

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void ColorFilterConfig::validate() const {
  if (!in_unit(white_sat_max) || !in_unit(white_val_min) || !in_unit(yellow_sat_min) || !in_unit(yellow_val_min)) {
    config_error("color thresholds must lie in [0,1]");
  }
  if (!(yellow_hue_min >= 0.0 && yellow_hue_min <= yellow_hue_max && yellow_hue_max < 360.0)) {
    config_error("yellow hue range must satisfy 0 <= min <= max < 360");
  }
}

void SaliencyConfig::validate() const {
  if (scales.empty() || scales.front() != 1) config_error("saliency scales must start at 1");
  for (std::size_t i = 1; i < scales.size(); ++i) {
    if (scales[i] <= scales[i - 1]) config_error("saliency scales must be strictly increasing");
  }
  if (scales.back() > 64) config_error("saliency scale above 64");
  if (surround_radius < 1 || surround_radius > 512) config_error("surround_radius must be in [1,512]");
  if (blur_passes < 1 || blur_passes > 3) config_error("blur_passes must be in [1,3]");
}

void BlobConfig::validate() const {
  if (!(min_area > 0.0 && min_area < max_area)) config_error("blob area bounds must satisfy 0 < min < max");
  if (!(min_convexity > 0.0 && min_convexity <= 1.0)) config_error("min_convexity must lie in (0,1]");
  if (!in_unit(merge_threshold)) config_error("merge_threshold must lie in [0,1]");
}

void DetectorConfig::validate() const {
  color.validate();
  saliency.validate();
  blob.validate();
  if (!(stigma_scale > 0.0 && stigma_scale <= 1.0)) config_error("stigma_scale must lie in (0,1]");
}

namespace {

DetectorConfig from_config(const ConfigFile& f) {
  DetectorConfig cfg;
  auto& c = cfg.color;
  c.white_sat_max = f.get_double("color", "white_sat_max", c.white_sat_max);
  c.white_val_min = f.get_double("color", "white_val_min", c.white_val_min);
  auto hue = f.get_doubles("color", "yellow_hue_range", {c.yellow_hue_min, c.yellow_hue_max});
  if (hue.size() != 2) config_error("yellow_hue_range needs two values");
  c.yellow_hue_min = hue[0];
  c.yellow_hue_max = hue[1];
  c.yellow_sat_min = f.get_double("color", "yellow_sat_min", c.yellow_sat_min);
  c.yellow_val_min = f.get_double("color", "yellow_val_min", c.yellow_val_min);

  auto& s = cfg.saliency;
  std::vector<double> default_scales(s.scales.begin(), s.scales.end());
  auto scales = f.get_doubles("saliency", "scales", default_scales);
  s.scales.clear();
  for (double v : scales) {
    if (v != std::floor(v)) config_error("saliency scales must be integers");
    s.scales.push_back(static_cast<int>(v));
  }
  s.surround_radius = static_cast<int>(f.get_int("saliency", "surround_radius", s.surround_radius));
  s.blur_passes = static_cast<int>(f.get_int("saliency", "blur_passes", s.blur_passes));
  s.normalize = f.get_bool("saliency", "normalize", s.normalize);

  auto& b = cfg.blob;
  b.min_area = f.get_double("blob", "min_area", b.min_area);
  b.max_area = f.get_double("blob", "max_area", b.max_area);
  b.min_convexity = f.get_double("blob", "min_convexity", b.min_convexity);
  b.merge_threshold = f.get_double("blob", "merge_threshold", b.merge_threshold);

  cfg.stigma_scale = f.get_double("output", "stigma_scale", cfg.stigma_scale);
  cfg.validate();
  return cfg;
}

}  // namespace

DetectorConfig load_detector_config(const std::filesystem::path& path) {
  return from_config(ConfigFile::load(path));
}

DetectorConfig parse_detector_config(std::string_view text) { return from_config(ConfigFile::parse(text)); }

// ---------------------------------------------------------------------------
// Stage 1: color

namespace {

class ColorRule {
 public:
  explicit ColorRule(const ColorFilterConfig& cfg)
      : white_sat_(static_cast<float>(cfg.white_sat_max)),
        white_val_(static_cast<float>(cfg.white_val_min * 255.0)),
        yellow_sat_(static_cast<float>(cfg.yellow_sat_min)),
        yellow_val_(static_cast<float>(cfg.yellow_val_min * 255.0)),
        hue_lo_(static_cast<float>(cfg.yellow_hue_min)),
        hue_hi_(static_cast<float>(cfg.yellow_hue_max)),
        dimmest_(std::min(white_val_, yellow_val_)) {}

  bool operator()(int r, int g, int b) const {
    const int mx = std::max(r, std::max(g, b));
    const float v = static_cast<float>(mx);
    if (v < dimmest_) return false;
    const int mn = std::min(r, std::min(g, b));
    const float delta = static_cast<float>(mx - mn);
    if (v >= white_val_ && delta <= white_sat_ * v) return true;
    if (mx == 0 || v < yellow_val_ || delta < yellow_sat_ * v || delta == 0.0f) return false;
    float hue;
    if (mx == r) {
      hue = 60.0f * static_cast<float>(g - b) / delta;
      if (hue < 0.0f) hue += 360.0f;
    } else if (mx == g) {
      hue = 60.0f * (static_cast<float>(b - r) / delta + 2.0f);
    } else {
      hue = 60.0f * (static_cast<float>(r - g) / delta + 4.0f);
    }
    return hue >= hue_lo_ && hue <= hue_hi_;
  }

  // No pixel whose brightest channel is below this passes either rule.
  int min_channel_max() const { return static_cast<int>(std::ceil(dimmest_)); }

 private:
  float white_sat_, white_val_, yellow_sat_, yellow_val_, hue_lo_, hue_hi_, dimmest_;
};

// Q8 luminance; weights sum to 256.
inline std::int32_t luminance(int r, int g, int b) { return 77 * r + 150 * g + 29 * b; }

#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define KIWI_HOT __attribute__((target_clones("avx2", "default")))
#else
#define KIWI_HOT
#endif

// Luminance plus a flag for pixels bright enough to pass a color rule.
KIWI_HOT void luminance_and_bright(const std::uint8_t* px, std::int32_t* lum, std::uint8_t* bright, std::size_t n,
                                   int min_max) {
  for (std::size_t i = 0; i < n; ++i, px += 3) {
    const int r = px[0], g = px[1], b = px[2];
    lum[i] = luminance(r, g, b);
    bright[i] = std::max(r, std::max(g, b)) >= min_max ? 1 : 0;
  }
}

}  // namespace

Mask hsv_filter(const ImageFrame& frame, const ColorFilterConfig& cfg) {
  Mask mask(frame.width, frame.height, 0);
  const ColorRule rule(cfg);
  const std::uint8_t* px = frame.pixels.data();
  const std::size_t n = frame.pixel_count();
  for (std::size_t i = 0; i < n; ++i, px += 3) mask.data[i] = rule(px[0], px[1], px[2]) ? 1 : 0;
  return mask;
}

// ---------------------------------------------------------------------------
// Stage 2: saliency
//
// Values are kept as Q8 fixed-point integers and every box sum is computed
// exactly before rounding, so the response at a pixel depends only on its
// neighbourhood and not on where the sliding window started.

namespace {

inline std::int32_t round_scaled(std::int32_t sum, float inv) {
  return static_cast<std::int32_t>(static_cast<float>(sum) * inv + 0.5f);
}

// Box sum over [x-r, x+r] with edge replication, from a padded prefix sum.
// Unsigned wraparound keeps differences exact for any row length.
KIWI_HOT void box_row(const std::int32_t* row, std::int32_t* dst, int w, int r, std::uint32_t* prefix) {
  const float inv = 1.0f / static_cast<float>(2 * r + 1);
  std::uint32_t acc = 0;
  prefix[0] = 0;
  int i = 0;
  for (int j = -r; j < 0; ++j) prefix[++i] = acc += static_cast<std::uint32_t>(row[0]);
  for (int j = 0; j < w; ++j) prefix[++i] = acc += static_cast<std::uint32_t>(row[j]);
  for (int j = 0; j < r; ++j) prefix[++i] = acc += static_cast<std::uint32_t>(row[w - 1]);
  const int span = 2 * r + 1;
  for (int x = 0; x < w; ++x) {
    dst[x] = round_scaled(static_cast<std::int32_t>(prefix[x + span] - prefix[x]), inv);
  }
}

// Emits the window sum in `cs` scaled by `inv`, then slides it one row.
KIWI_HOT void vertical_step(std::int32_t* cs, std::int32_t* dst, const std::int32_t* add, const std::int32_t* sub,
                            int w, float inv) {
  for (int x = 0; x < w; ++x) {
    dst[x] = round_scaled(cs[x], inv);
    cs[x] += add[x] - sub[x];
  }
}

// dst = |c - b| + total, tracking the range.
KIWI_HOT void contrast_row(const std::int32_t* c, const std::int32_t* b, const std::int32_t* total, std::int32_t* dst,
                           int w, std::int32_t& lo_io, std::int32_t& hi_io) {
  std::int32_t lo = lo_io, hi = hi_io;
  for (int x = 0; x < w; ++x) {
    const std::int32_t v = std::abs(c[x] - b[x]) + total[x];
    dst[x] = v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  lo_io = lo;
  hi_io = hi;
}

// Separable box blur repeated `passes` times, produced one row at a time, in
// order. Stage 0 runs the horizontal passes on a row; the following stages
// are vertical passes, each keeping a ring of its most recent 2r+2 output
// rows, so the working set stays in cache instead of streaming whole frames.
class SurroundStream {
 public:
  SurroundStream(const std::int32_t* center, int w, int h, int r, int passes)
      : center_(center), w_(w), h_(h), r_(r), passes_(passes) {
    ring_rows_ = std::min(2 * r + 2, h);
    for (int k = 0; k <= passes_; ++k) {
      stages_[k].ring.resize(static_cast<std::size_t>(ring_rows_) * w);
      stages_[k].colsum.resize(static_cast<std::size_t>(w));
    }
    row_a_.resize(static_cast<std::size_t>(w));
    row_b_.resize(static_cast<std::size_t>(w));
    prefix_.resize(static_cast<std::size_t>(w + 2 * r + 1));
  }

  const std::int32_t* row(int y) { return get(passes_, y); }

 private:
  static constexpr int kMaxStages = 4;

  struct Stage {
    std::vector<std::int32_t> ring;
    std::vector<std::int32_t> colsum;
    int next = 0;
  };

  const std::int32_t* get(int k, int y) {
    Stage& st = stages_[k];
    while (st.next <= y) produce(k);
    return st.ring.data() + static_cast<std::size_t>(y % ring_rows_) * w_;
  }

  void produce(int k) {
    Stage& st = stages_[k];
    const int y = st.next;
    const int w = w_, h = h_, r = r_;  // locals: stores through int32_t* could alias members
    std::int32_t* dst = st.ring.data() + static_cast<std::size_t>(y % ring_rows_) * w;
    if (k == 0) {
      const std::int32_t* src = center_ + static_cast<std::size_t>(y) * w;
      std::int32_t* bufs[2] = {row_a_.data(), row_b_.data()};
      for (int p = 0; p < passes_; ++p) {
        std::int32_t* out = p == passes_ - 1 ? dst : bufs[p & 1];
        box_row(src, out, w, r, prefix_.data());
        src = out;
      }
    } else {
      std::int32_t* cs = st.colsum.data();
      if (y == 0) {
        const std::int32_t* first = get(k - 1, 0);
        for (int x = 0; x < w; ++x) cs[x] = first[x] * (r + 1);
        for (int j = 1; j <= r; ++j) {
          const std::int32_t* src = get(k - 1, std::min(j, h - 1));
          for (int x = 0; x < w; ++x) cs[x] += src[x];
        }
      }
      const std::int32_t* add = get(k - 1, std::min(y + r + 1, h - 1));
      const std::int32_t* sub = get(k - 1, std::max(y - r, 0));
      vertical_step(cs, dst, add, sub, w, 1.0f / static_cast<float>(2 * r + 1));
    }
    ++st.next;
  }

  const std::int32_t* center_;
  int w_, h_, r_, passes_;
  int ring_rows_ = 0;
  std::array<Stage, kMaxStages> stages_;
  std::vector<std::int32_t> row_a_, row_b_;
  std::vector<std::uint32_t> prefix_;
};

struct Scratch {
  std::vector<std::int32_t> lum, base, acc;
  std::vector<std::vector<std::int32_t>> contrast;  // per coarse scale
  std::vector<std::int32_t> colsum, coarse_total;
  std::vector<std::vector<int>> xmap;  // full-res column -> coarse column, per scale
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

// Block means of the Q8 luminance; edge blocks replicate the last row/column.
void downsample(const std::vector<std::int32_t>& lum, int w, int h, int scale, std::int32_t* out, Scratch& s) {
  const int ws = (w + scale - 1) / scale;
  const int hs = (h + scale - 1) / scale;
  const int full_blocks = w / scale;
  const float inv = 1.0f / static_cast<float>(scale * scale);
  s.colsum.resize(static_cast<std::size_t>(w));
  std::int32_t* cs = s.colsum.data();
  for (int by = 0; by < hs; ++by) {
    std::fill(cs, cs + w, 0);
    for (int dy = 0; dy < scale; ++dy) {
      const std::int32_t* row = lum.data() + static_cast<std::size_t>(std::min(by * scale + dy, h - 1)) * w;
      for (int x = 0; x < w; ++x) cs[x] += row[x];
    }
    std::int32_t* dst = out + static_cast<std::size_t>(by) * ws;
    for (int bx = 0; bx < full_blocks; ++bx) {
      const std::int32_t* c = cs + bx * scale;
      std::int32_t sum = 0;
      for (int dx = 0; dx < scale; ++dx) sum += c[dx];
      dst[bx] = round_scaled(sum, inv);
    }
    for (int bx = full_blocks; bx < ws; ++bx) {
      std::int32_t sum = 0;
      for (int dx = 0; dx < scale; ++dx) sum += cs[std::min(bx * scale + dx, w - 1)];
      dst[bx] = round_scaled(sum, inv);
    }
  }
}

// Sum over scales of |center - surround|, nearest-neighbour upsampled to full
// resolution, in Q8 units. Leaves the result in s.acc and returns its (min, max).
// When `lum_ready` is set, s.lum already holds the frame's luminance.
std::pair<std::int32_t, std::int32_t> contrast_sum(const ImageFrame& frame, const SaliencyConfig& cfg, Scratch& s,
                                                   bool lum_ready = false) {
  const int w = frame.width;
  const int h = frame.height;
  const std::size_t n = frame.pixel_count();
  s.acc.resize(n);
  if (!lum_ready) {
    s.lum.resize(n);
    const std::uint8_t* px = frame.pixels.data();
    std::int32_t* lum = s.lum.data();
    for (std::size_t i = 0; i < n; ++i, px += 3) lum[i] = luminance(px[0], px[1], px[2]);
  }

  // Coarse scales first, into their own grids.
  const int r = cfg.surround_radius;
  const std::size_t n_scales = cfg.scales.size();
  s.contrast.resize(n_scales);
  for (std::size_t k = 1; k < n_scales; ++k) {
    const int scale = cfg.scales[k];
    const int ws = (w + scale - 1) / scale;
    const int hs = (h + scale - 1) / scale;
    s.base.resize(static_cast<std::size_t>(ws) * hs);
    downsample(s.lum, w, h, scale, s.base.data(), s);
    auto& d = s.contrast[k];
    d.resize(s.base.size());
    SurroundStream blur(s.base.data(), ws, hs, r, cfg.blur_passes);
    for (int y = 0; y < hs; ++y) {
      const std::int32_t* b = blur.row(y);
      const std::int32_t* c = s.base.data() + static_cast<std::size_t>(y) * ws;
      std::int32_t* dst = d.data() + static_cast<std::size_t>(y) * ws;
      for (int x = 0; x < ws; ++x) dst[x] = std::abs(c[x] - b[x]);
    }
  }

  // Full resolution, adding the expanded coarse rows as it goes.
  std::int32_t lo = std::numeric_limits<std::int32_t>::max();
  std::int32_t hi = std::numeric_limits<std::int32_t>::min();
  s.coarse_total.assign(static_cast<std::size_t>(w), 0);
  s.xmap.resize(n_scales);
  for (std::size_t k = 1; k < n_scales; ++k) {
    s.xmap[k].resize(static_cast<std::size_t>(w));
    for (int x = 0; x < w; ++x) s.xmap[k][x] = x / cfg.scales[k];
  }
  std::int32_t* total = s.coarse_total.data();
  SurroundStream blur(s.lum.data(), w, h, r, cfg.blur_passes);
  for (int y = 0; y < h; ++y) {
    const bool new_row = std::any_of(cfg.scales.begin() + 1, cfg.scales.end(), [y](int sc) { return y % sc == 0; });
    if (new_row) {
      std::fill(total, total + w, 0);
      for (std::size_t k = 1; k < n_scales; ++k) {
        const int scale = cfg.scales[k];
        const int ws = (w + scale - 1) / scale;
        const std::int32_t* crow = s.contrast[k].data() + static_cast<std::size_t>(y / scale) * ws;
        const int* xm = s.xmap[k].data();
        for (int x = 0; x < w; ++x) total[x] += crow[xm[x]];
      }
    }
    const std::int32_t* b = blur.row(y);
    const std::int32_t* c = s.lum.data() + static_cast<std::size_t>(y) * w;
    std::int32_t* dst = s.acc.data() + static_cast<std::size_t>(y) * w;
    contrast_row(c, b, total, dst, w, lo, hi);
  }
  return {lo, hi};
}

// Maps contrast sums to [0,1]: min-max when normalizing (all-equal input maps
// to zero), otherwise the mean contrast as a fraction of full scale.
class SaliencyScale {
 public:
  SaliencyScale(const SaliencyConfig& cfg, std::int32_t lo, std::int32_t hi) {
    if (cfg.normalize) {
      offset_ = lo;
      gain_ = hi > lo ? 1.0f / static_cast<float>(hi - lo) : 0.0f;
    } else {
      gain_ = 1.0f / (static_cast<float>(cfg.scales.size()) * 256.0f * 255.0f);
    }
  }
  float operator()(std::int32_t v) const { return std::clamp(static_cast<float>(v - offset_) * gain_, 0.0f, 1.0f); }

 private:
  std::int32_t offset_ = 0;
  float gain_ = 0.0f;
};

}  // namespace

FloatMap saliency_map(const ImageFrame& frame, const SaliencyConfig& cfg) {
  FloatMap out(frame.width, frame.height, 0.0f);
  if (frame.width == 0 || frame.height == 0) return out;
  auto& s = scratch();
  const auto [lo, hi] = contrast_sum(frame, cfg, s);
  const SaliencyScale scale(cfg, lo, hi);
  std::transform(s.acc.begin(), s.acc.end(), out.data.begin(), scale);
  return out;
}

// ---------------------------------------------------------------------------
// Stage 3: merge

Mask merge_masks(const Mask& color_mask, const FloatMap& saliency, double threshold) {
  if (!color_mask.same_shape(saliency)) {
    throw Error(ErrorCode::invalid_input, "merge_masks: color mask and saliency map differ in size");
  }
  Mask out(color_mask.width, color_mask.height, 0);
  const float t = static_cast<float>(threshold);
  const std::size_t n = out.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.data[i] = (color_mask.data[i] != 0 && saliency.data[i] >= t) ? 1 : 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage 4: blobs

namespace {

struct Point {
  std::int64_t x, y;
};

std::int64_t cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Area of the convex hull of the pixel squares covered by `runs`.
double hull_area(const std::vector<PixelRun>& runs) {
  std::vector<Point> pts;
  pts.reserve(runs.size() * 4);
  for (const auto& run : runs) {
    pts.push_back({run.x0, run.y});
    pts.push_back({run.x1 + 1, run.y});
    pts.push_back({run.x0, run.y + 1});
    pts.push_back({run.x1 + 1, run.y + 1});
  }
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  pts.erase(std::unique(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  if (pts.size() < 3) return 0.0;

  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);

  std::int64_t twice = 0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return static_cast<double>(std::llabs(twice)) * 0.5;
}

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0u); }
  std::uint32_t find(std::uint32_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::uint32_t> parent_;
};

// 8-connected components as lists of runs, in raster order of first run.
std::vector<std::vector<PixelRun>> label_components(const Mask& mask) {
  std::vector<PixelRun> runs;
  std::vector<std::size_t> row_begin(static_cast<std::size_t>(mask.height) + 1, 0);
  for (int y = 0; y < mask.height; ++y) {
    row_begin[y] = runs.size();
    const std::uint8_t* row = mask.data.data() + static_cast<std::size_t>(y) * mask.width;
    int x = 0;
    while (x < mask.width) {
      const auto* hit = static_cast<const std::uint8_t*>(std::memchr(row + x, 1, static_cast<std::size_t>(mask.width - x)));
      if (hit == nullptr) break;
      const int x0 = static_cast<int>(hit - row);
      int x1 = x0;
      while (x1 + 1 < mask.width && row[x1 + 1] != 0) ++x1;
      runs.push_back({y, x0, x1});
      x = x1 + 1;
    }
  }
  row_begin[mask.height] = runs.size();

  DisjointSet sets(runs.size());
  for (int y = 1; y < mask.height; ++y) {
    std::size_t p = row_begin[y - 1];
    const std::size_t p_end = row_begin[y];
    for (std::size_t c = row_begin[y]; c < row_begin[y + 1]; ++c) {
      const auto& cur = runs[c];
      while (p < p_end && runs[p].x1 < cur.x0 - 1) ++p;
      for (std::size_t q = p; q < p_end && runs[q].x0 <= cur.x1 + 1; ++q) {
        sets.unite(static_cast<std::uint32_t>(q), static_cast<std::uint32_t>(c));
      }
    }
  }

  std::vector<std::vector<PixelRun>> components;
  std::vector<std::int64_t> slot(runs.size(), -1);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto root = sets.find(static_cast<std::uint32_t>(i));
    if (slot[root] < 0) {
      slot[root] = static_cast<std::int64_t>(components.size());
      components.emplace_back();
    }
    components[static_cast<std::size_t>(slot[root])].push_back(runs[i]);
  }
  return components;
}

}  // namespace

std::vector<Blob> blob_detect(const Mask& mask, const BlobConfig& cfg) {
  std::vector<Blob> blobs;
  for (auto& runs : label_components(mask)) {
    double area = 0.0, sx = 0.0, sy = 0.0;
    int x_min = mask.width, x_max = -1, y_min = mask.height, y_max = -1;
    for (const auto& run : runs) {
      const double len = run.x1 - run.x0 + 1;
      area += len;
      sx += len * (run.x0 + run.x1 + 1) * 0.5;
      sy += len * (run.y + 0.5);
      x_min = std::min(x_min, run.x0);
      x_max = std::max(x_max, run.x1);
      y_min = std::min(y_min, run.y);
      y_max = std::max(y_max, run.y);
    }
    if (area < cfg.min_area || area > cfg.max_area) continue;
    const double hull = hull_area(runs);
    const double convexity = hull > 0.0 ? std::min(1.0, area / hull) : 0.0;
    if (convexity < cfg.min_convexity) continue;

    Blob b;
    b.area = area;
    b.centroid_x = sx / area;
    b.centroid_y = sy / area;
    b.convexity = convexity;
    b.bbox = {static_cast<double>(x_min), static_cast<double>(y_min), static_cast<double>(x_max - x_min + 1),
              static_cast<double>(y_max - y_min + 1)};
    b.runs = std::move(runs);
    blobs.push_back(std::move(b));
  }
  std::sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) {
    if (a.area != b.area) return a.area > b.area;
    if (a.centroid_y != b.centroid_y) return a.centroid_y < b.centroid_y;
    return a.centroid_x < b.centroid_x;
  });
  return blobs;
}

std::vector<Detection> detect(const ImageFrame& frame, const DetectorConfig& cfg) {
  if (frame.width == 0 || frame.height == 0) return {};
  // Same composition as merge_masks(hsv_filter, saliency_map), reading the
  // saliency only where the color mask is set.
  Mask merged(frame.width, frame.height, 0);
  auto& s = scratch();
  {
    const ColorRule rule(cfg.color);
    const std::size_t n = frame.pixel_count();
    s.lum.resize(n);
    const std::uint8_t* px = frame.pixels.data();
    luminance_and_bright(px, s.lum.data(), merged.data.data(), n, rule.min_channel_max());
    for (std::size_t i = 0; i < n; ++i) {
      if (merged.data[i] != 0 && !rule(px[3 * i], px[3 * i + 1], px[3 * i + 2])) merged.data[i] = 0;
    }
  }
  const auto [lo, hi] = contrast_sum(frame, cfg.saliency, s, true);
  const SaliencyScale saliency(cfg.saliency, lo, hi);
  const float t = static_cast<float>(cfg.blob.merge_threshold);
  const std::size_t n = merged.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (merged.data[i] != 0 && !(saliency(s.acc[i]) >= t)) merged.data[i] = 0;
  }

  std::vector<Detection> out;
  for (const auto& blob : blob_detect(merged, cfg.blob)) {
    double sum = 0.0;
    for (const auto& run : blob.runs) {
      const std::int32_t* row = s.acc.data() + static_cast<std::size_t>(run.y) * frame.width;
      for (int x = run.x0; x <= run.x1; ++x) sum += saliency(row[x]);
    }
    Detection d;
    d.image_id = frame.image_id;
    d.camera = frame.camera;
    d.bbox = blob.bbox;
    d.score = std::clamp(sum / blob.area, 0.0, 1.0);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Detection> crop_to_stigma(std::vector<Detection> detections, double scale, int width, int height) {
  for (auto& d : detections) {
    const double cx = d.bbox.center_x();
    const double cy = d.bbox.center_y();
    const double w = d.bbox.w * scale;
    const double h = d.bbox.h * scale;
    d.bbox = clipped({cx - 0.5 * w, cy - 0.5 * h, w, h}, width, height);
  }
  return detections;
}

std::vector<Detection> detect_stigmas(const ImageFrame& frame, const DetectorConfig& cfg) {
  return crop_to_stigma(detect(frame, cfg), cfg.stigma_scale, frame.width, frame.height);
}

}  // namespace kiwi
