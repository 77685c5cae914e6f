#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "geoshift/errors.hpp"
#include "geoshift/rng.hpp"
#include "geoshift/tensor.hpp"

namespace geoshift {

// Pipeline kinds in fixed application order. Default probabilities:
// 0.5, 0.5, 0.5, 0.1, 0.2, 0.5, 0.5, 0.5, 0.15, 0.5.
enum class TransformKind {
  rotate90,
  flip,
  transpose,
  gauss_noise,
  median_blur,
  shift,
  rotate,
  scale,
  brightness,
  hsv,
};
inline constexpr size_t kNumTransformKinds = 10;

inline const char* transform_kind_name(TransformKind k) {
  switch (k) {
    case TransformKind::rotate90: return "rotate90";
    case TransformKind::flip: return "flip";
    case TransformKind::transpose: return "transpose";
    case TransformKind::gauss_noise: return "gauss_noise";
    case TransformKind::median_blur: return "median_blur";
    case TransformKind::shift: return "shift";
    case TransformKind::rotate: return "rotate";
    case TransformKind::scale: return "scale";
    case TransformKind::brightness: return "brightness";
    case TransformKind::hsv: return "hsv";
  }
  return "?";
}

/// Parameter range for one kind. Meaning of [a,b] per kind:
///   gauss_noise: noise sigma range          rotate: angle range, degrees CCW
///   scale:       factor range               brightness: additive delta range
///   shift:       a = max translation as a fraction of each dimension
///   hsv:         a = jitter magnitude; each of dH/dS/dV drawn from [-a, a]
///   rotate90 / flip / transpose / median_blur: no numeric parameters
struct TransformSpec {
  TransformKind kind = TransformKind::rotate90;
  double a = 0.0;
  double b = 0.0;

  static TransformSpec defaults(TransformKind k) {
    switch (k) {
      case TransformKind::gauss_noise: return {k, 0.01, 0.05};
      case TransformKind::shift: return {k, 0.10, 0.0};
      case TransformKind::rotate: return {k, 0.0, 45.0};
      case TransformKind::scale: return {k, 0.8, 1.2};
      case TransformKind::brightness: return {k, -0.2, 0.2};
      case TransformKind::hsv: return {k, 0.1, 0.0};
      default: return {k, 0.0, 0.0};
    }
  }

  void validate() const {
    switch (kind) {
      case TransformKind::shift:
        if (a < 0.0 || a > 0.10) throw config_error("shift fraction outside [0, 0.1]");
        break;
      case TransformKind::rotate:
        if (a < 0.0 || b > 45.0 || a > b) throw config_error("rotate range outside [0, 45]");
        break;
      case TransformKind::scale:
        if (a < 0.8 || b > 1.2 || a > b) throw config_error("scale range outside [0.8, 1.2]");
        break;
      case TransformKind::gauss_noise:
        if (a < 0.0 || a > b) throw config_error("bad gauss_noise sigma range");
        break;
      default:
        break;
    }
  }
};

namespace detail {

/// Mirror index into [0, n) without repeating the edge pixel (-1 -> 1).
inline long reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

}  // namespace detail

/// k quarter-turns counter-clockwise. Output is W x H per turn (equal for
/// square inputs).
inline ImageTensor rotate90(const ImageTensor& img, int k) {
  k = ((k % 4) + 4) % 4;
  ImageTensor cur = img;
  for (int t = 0; t < k; ++t) {
    ImageTensor out(cur.width, cur.height, cur.channels);
    for (size_t y = 0; y < out.height; ++y)
      for (size_t x = 0; x < out.width; ++x)
        for (size_t ch = 0; ch < out.channels; ++ch)
          out.at(y, x, ch) = cur.at(x, cur.width - 1 - y, ch);
    cur = std::move(out);
  }
  return cur;
}

enum class FlipMode { horizontal, vertical, both };

inline ImageTensor flip(const ImageTensor& img, FlipMode mode) {
  ImageTensor out(img.height, img.width, img.channels);
  const bool fh = mode != FlipMode::vertical;
  const bool fv = mode != FlipMode::horizontal;
  for (size_t y = 0; y < img.height; ++y)
    for (size_t x = 0; x < img.width; ++x)
      for (size_t ch = 0; ch < img.channels; ++ch)
        out.at(y, x, ch) = img.at(fv ? img.height - 1 - y : y, fh ? img.width - 1 - x : x, ch);
  return out;
}

inline ImageTensor transpose_image(const ImageTensor& img) {
  ImageTensor out(img.width, img.height, img.channels);
  for (size_t y = 0; y < out.height; ++y)
    for (size_t x = 0; x < out.width; ++x)
      for (size_t ch = 0; ch < out.channels; ++ch) out.at(y, x, ch) = img.at(x, y, ch);
  return out;
}

inline ImageTensor gauss_noise(const ImageTensor& img, double sigma, Rng& rng) {
  ImageTensor out = img;
  for (double& v : out.data) v = std::clamp(v + rng.normal(0.0, sigma), 0.0, 1.0);
  return out;
}

/// 3x3 median filter per channel, reflect padding.
inline ImageTensor median_blur3(const ImageTensor& img) {
  if (img.height < 3 || img.width < 3)
    throw config_error("median_blur: image smaller than 3x3 kernel");
  ImageTensor out(img.height, img.width, img.channels);
  const long h = static_cast<long>(img.height);
  const long w = static_cast<long>(img.width);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (size_t ch = 0; ch < img.channels; ++ch) {
        std::array<double, 9> window;
        size_t n = 0;
        for (long dy = -1; dy <= 1; ++dy)
          for (long dx = -1; dx <= 1; ++dx)
            window[n++] = img.at(static_cast<size_t>(detail::reflect_index(y + dy, h)),
                                 static_cast<size_t>(detail::reflect_index(x + dx, w)), ch);
        std::nth_element(window.begin(), window.begin() + 4, window.end());
        out.at(static_cast<size_t>(y), static_cast<size_t>(x), ch) = window[4];
      }
  return out;
}

/// Integer translation; dx > 0 moves content right, dy > 0 moves it down.
/// Vacated pixels are filled by reflection.
inline ImageTensor shift(const ImageTensor& img, long dx, long dy) {
  ImageTensor out(img.height, img.width, img.channels);
  const long h = static_cast<long>(img.height);
  const long w = static_cast<long>(img.width);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const size_t sy = static_cast<size_t>(detail::reflect_index(y - dy, h));
      const size_t sx = static_cast<size_t>(detail::reflect_index(x - dx, w));
      for (size_t ch = 0; ch < img.channels; ++ch)
        out.at(static_cast<size_t>(y), static_cast<size_t>(x), ch) = img.at(sy, sx, ch);
    }
  return out;
}

/// Rotation about the image center, nearest-neighbor sampling, reflect
/// padding, output same size.
inline ImageTensor rotate(const ImageTensor& img, double degrees) {
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  ImageTensor out(img.height, img.width, img.channels);
  const long h = static_cast<long>(img.height);
  const long w = static_cast<long>(img.width);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const long sx = detail::reflect_index(std::llround(c * dx + s * dy + cx), w);
      const long sy = detail::reflect_index(std::llround(-s * dx + c * dy + cy), h);
      for (size_t ch = 0; ch < img.channels; ++ch)
        out.at(static_cast<size_t>(y), static_cast<size_t>(x), ch) =
            img.at(static_cast<size_t>(sy), static_cast<size_t>(sx), ch);
    }
  return out;
}

/// Scaling about the image center, nearest-neighbor, reflect padding.
inline ImageTensor scale(const ImageTensor& img, double factor) {
  if (factor <= 0.0) throw config_error("scale: factor must be positive");
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  ImageTensor out(img.height, img.width, img.channels);
  const long h = static_cast<long>(img.height);
  const long w = static_cast<long>(img.width);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const long sx = detail::reflect_index(std::llround((static_cast<double>(x) - cx) / factor + cx), w);
      const long sy = detail::reflect_index(std::llround((static_cast<double>(y) - cy) / factor + cy), h);
      for (size_t ch = 0; ch < img.channels; ++ch)
        out.at(static_cast<size_t>(y), static_cast<size_t>(x), ch) =
            img.at(static_cast<size_t>(sy), static_cast<size_t>(sx), ch);
    }
  return out;
}

inline ImageTensor brightness(const ImageTensor& img, double delta) {
  ImageTensor out = img;
  for (double& v : out.data) v = std::clamp(v + delta, 0.0, 1.0);
  return out;
}

/// Hexcone RGB -> HSV with every channel in [0,1]; achromatic pixels get
/// H = 0 by convention.
inline ImageTensor rgb_to_hsv(const ImageTensor& img) {
  if (img.channels != 3) throw shape_error("rgb_to_hsv: needs 3 channels");
  ImageTensor out(img.height, img.width, 3);
  for (size_t i = 0; i < img.size(); i += 3) {
    const double r = img.data[i], g = img.data[i + 1], b = img.data[i + 2];
    const double v = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = v - mn;
    double hdeg = 0.0;
    if (d > 0.0) {
      if (v == r)
        hdeg = 60.0 * std::fmod((g - b) / d, 6.0);
      else if (v == g)
        hdeg = 60.0 * ((b - r) / d + 2.0);
      else
        hdeg = 60.0 * ((r - g) / d + 4.0);
      if (hdeg < 0.0) hdeg += 360.0;
    }
    out.data[i] = hdeg / 360.0;
    out.data[i + 1] = v > 0.0 ? d / v : 0.0;
    out.data[i + 2] = v;
  }
  return out;
}

inline ImageTensor hsv_to_rgb(const ImageTensor& img) {
  if (img.channels != 3) throw shape_error("hsv_to_rgb: needs 3 channels");
  ImageTensor out(img.height, img.width, 3);
  for (size_t i = 0; i < img.size(); i += 3) {
    const double h6 = img.data[i] * 6.0;
    const double s = img.data[i + 1], v = img.data[i + 2];
    const int sector = static_cast<int>(std::floor(h6)) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double r, g, b;
    switch (sector) {
      case 0: r = v; g = t; b = p; break;
      case 1: r = q; g = v; b = p; break;
      case 2: r = p; g = v; b = t; break;
      case 3: r = p; g = q; b = v; break;
      case 4: r = t; g = p; b = v; break;
      default: r = v; g = p; b = q; break;
    }
    out.data[i] = r;
    out.data[i + 1] = g;
    out.data[i + 2] = b;
  }
  return out;
}

inline ImageTensor hsv_jitter(const ImageTensor& img, double dh, double ds, double dv) {
  ImageTensor hsv = rgb_to_hsv(img);
  for (size_t i = 0; i < hsv.size(); i += 3) {
    double h = hsv.data[i] + dh;
    h -= std::floor(h);  // hue wraps
    hsv.data[i] = h;
    hsv.data[i + 1] = std::clamp(hsv.data[i + 1] + ds, 0.0, 1.0);
    hsv.data[i + 2] = std::clamp(hsv.data[i + 2] + dv, 0.0, 1.0);
  }
  ImageTensor rgb = hsv_to_rgb(hsv);
  rgb.clamp01();
  return rgb;
}

/// Draws the kind's parameters from `rng` and applies the transform.
/// Draw order per kind is fixed (documented in the switch below).
inline ImageTensor apply_transform(const ImageTensor& img, const TransformSpec& spec, Rng& rng) {
  spec.validate();
  switch (spec.kind) {
    case TransformKind::rotate90:
      return rotate90(img, 1 + static_cast<int>(rng.int_below(3)));
    case TransformKind::flip:
      return flip(img, static_cast<FlipMode>(rng.int_below(3)));
    case TransformKind::transpose:
      return transpose_image(img);
    case TransformKind::gauss_noise:
      return gauss_noise(img, rng.uniform(spec.a, spec.b), rng);
    case TransformKind::median_blur:
      return median_blur3(img);
    case TransformKind::shift: {
      const long mx = static_cast<long>(spec.a * static_cast<double>(img.width));
      const long my = static_cast<long>(spec.a * static_cast<double>(img.height));
      const long dx = static_cast<long>(rng.int_below(static_cast<uint64_t>(2 * mx + 1))) - mx;
      const long dy = static_cast<long>(rng.int_below(static_cast<uint64_t>(2 * my + 1))) - my;
      return shift(img, dx, dy);
    }
    case TransformKind::rotate:
      return rotate(img, rng.uniform(spec.a, spec.b));
    case TransformKind::scale:
      return scale(img, rng.uniform(spec.a, spec.b));
    case TransformKind::brightness:
      return brightness(img, rng.uniform(spec.a, spec.b));
    case TransformKind::hsv: {
      const double dh = rng.uniform(-spec.a, spec.a);
      const double ds = rng.uniform(-spec.a, spec.a);
      const double dv = rng.uniform(-spec.a, spec.a);
      return hsv_jitter(img, dh, ds, dv);
    }
  }
  throw config_error("unknown transform kind");
}

struct AugmentConfig {
  std::array<double, kNumTransformKinds> probs = {0.5, 0.5, 0.5, 0.1, 0.2,
                                                  0.5, 0.5, 0.5, 0.15, 0.5};
  std::array<TransformSpec, kNumTransformKinds> specs = [] {
    std::array<TransformSpec, kNumTransformKinds> s{};
    for (size_t i = 0; i < kNumTransformKinds; ++i)
      s[i] = TransformSpec::defaults(static_cast<TransformKind>(i));
    return s;
  }();

  double& prob(TransformKind k) { return probs[static_cast<size_t>(k)]; }
  double prob(TransformKind k) const { return probs[static_cast<size_t>(k)]; }

  void validate() const {
    for (double p : probs)
      if (p < 0.0 || p > 1.0) throw config_error("augment probability outside [0,1]");
    for (const auto& s : specs) s.validate();
  }

  static AugmentConfig none() {
    AugmentConfig cfg;
    cfg.probs.fill(0.0);
    return cfg;
  }
};

struct PipelineResult {
  ImageTensor image;
  std::array<bool, kNumTransformKinds> applied{};
};

/// Walks the kinds in fixed order; each one fires with its configured
/// probability and draws fresh parameters. One bernoulli is consumed per
/// kind whether or not it fires. The hsv stage is skipped (after its
/// bernoulli) for non-3-channel images.
inline PipelineResult apply_pipeline_traced(const ImageTensor& img, const AugmentConfig& cfg,
                                            Rng& rng) {
  cfg.validate();
  PipelineResult res;
  res.image = img;
  for (size_t i = 0; i < kNumTransformKinds; ++i) {
    const auto kind = static_cast<TransformKind>(i);
    if (!rng.bernoulli(cfg.probs[i])) continue;
    if (kind == TransformKind::hsv && res.image.channels != 3) continue;
    res.image = apply_transform(res.image, cfg.specs[i], rng);
    res.applied[i] = true;
  }
  return res;
}

inline ImageTensor apply_pipeline(const ImageTensor& img, const AugmentConfig& cfg, Rng& rng) {
  return apply_pipeline_traced(img, cfg, rng).image;
}

}  // namespace geoshift
