// Procedural motion sequences with exact flow, and a seeded flicker simulator
// that plays the role of an unstable per-frame image algorithm.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vtc/flow.hpp"
#include "vtc/rng.hpp"
#include "vtc/video_data.hpp"
#include "vtc/warping.hpp"

namespace vtc {

enum class TextureKind { checkerboard, noise, user_image };

inline TextureKind parse_texture(const std::string& s) {
  if (s == "checkerboard") return TextureKind::checkerboard;
  if (s == "noise" || s == "noise-texture") return TextureKind::noise;
  if (s == "user-image" || s == "image") return TextureKind::user_image;
  throw std::invalid_argument("unknown texture: " + s);
}

struct MotionSpec {
  TextureKind texture = TextureKind::noise;
  std::optional<Tensor<float>> user_image;  // for TextureKind::user_image
  std::uint64_t seed = 0;
  int frames = 10;
  int height = 48;
  int width = 48;
  int checker_cell = 6;
  // Constant per-frame motion, unless per_frame is non-empty (frames - 1 entries).
  double dx = 0.0;
  double dy = 0.0;
  std::vector<std::pair<double, double>> per_frame;
  double rotation = 0.0;  // radians per frame, about the frame centre
  double scale = 1.0;     // per frame, about the frame centre

  void validate() const {
    if (frames < 2) throw std::invalid_argument("MotionSpec: need at least 2 frames");
    if (height < kMinFrameSide || width < kMinFrameSide) throw std::invalid_argument("MotionSpec: frames must be >= 8x8");
    if (!per_frame.empty() && static_cast<int>(per_frame.size()) != frames - 1) {
      throw std::invalid_argument("MotionSpec: per_frame needs frames-1 entries");
    }
    for (double v : {dx, dy, rotation, scale})
      if (!std::isfinite(v)) throw std::invalid_argument("MotionSpec: non-finite motion");
    for (const auto& [a, b] : per_frame)
      if (!std::isfinite(a) || !std::isfinite(b)) throw std::invalid_argument("MotionSpec: non-finite motion");
    if (!(scale > 0.0)) throw std::invalid_argument("MotionSpec: scale must be positive");
    if (texture == TextureKind::user_image && !user_image) throw std::invalid_argument("MotionSpec: user image missing");
    if (texture == TextureKind::checkerboard && checker_cell < 1) throw std::invalid_argument("MotionSpec: bad cell size");
  }
};

using FramePair = std::pair<int, int>;  // (t, ref)

struct SyntheticSequence {
  FrameSequence<float> frames;
  AnalyticMotion motion;
  std::map<FramePair, FlowField<float>> flows;  // (t, t-1) and (t, 1)
  std::map<FramePair, Mask<float>> occlusion;
};

namespace detail {

inline Tensor<float> checkerboard(int h, int w, int cell) {
  static constexpr std::array<std::array<float, 3>, 2> colors{{{0.2f, 0.3f, 0.6f}, {0.75f, 0.6f, 0.25f}}};
  Tensor<float> img(Shape{3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto& col = colors[((y / cell) + (x / cell)) % 2];
      for (int c = 0; c < 3; ++c) img(c, y, x) = col[c];
    }
  return img;
}

// Multi-octave value noise, values in [0.1, 0.8].
inline Tensor<float> noise_texture(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> img(Shape{3, h, w});
  const std::array<std::pair<int, double>, 4> octaves{{{16, 0.4}, {8, 0.3}, {4, 0.2}, {2, 0.1}}};
  for (int c = 0; c < 3; ++c) {
    for (const auto& [cell, weight] : octaves) {
      const int gh = h / cell + 2, gw = w / cell + 2;
      std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
      for (auto& g : grid) g = rng.uniform();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double fy = static_cast<double>(y) / cell, fx = static_cast<double>(x) / cell;
          const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
          auto smooth = [](double t) { return t * t * (3 - 2 * t); };
          const double ay = smooth(fy - y0), ax = smooth(fx - x0);
          auto at = [&](int yy, int xx) { return grid[static_cast<std::size_t>(yy) * gw + xx]; };
          const double v = (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
                           ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
          img(c, y, x) += static_cast<float>(weight * v);
        }
    }
  }
  for (auto& v : img.values()) v = 0.1f + 0.7f * v;
  return img;
}

inline std::vector<Affine2> cumulative_transforms(const MotionSpec& spec) {
  const double cx = (spec.width - 1) / 2.0, cy = (spec.height - 1) / 2.0;
  const double cr = std::cos(spec.rotation) * spec.scale, sr = std::sin(spec.rotation) * spec.scale;
  // Rotation/scale about the centre.
  const Affine2 linear{cr, -sr, sr, cr, cx - (cr * cx - sr * cy), cy - (sr * cx + cr * cy)};
  std::vector<Affine2> ts{Affine2{}};
  for (int t = 1; t < spec.frames; ++t) {
    const auto [dx, dy] = spec.per_frame.empty() ? std::pair{spec.dx, spec.dy} : spec.per_frame[t - 1];
    ts.push_back(Affine2::translation(dx, dy).compose(linear).compose(ts.back()));
  }
  return ts;
}

}  // namespace detail

// Renders frames by resampling a base image under the cumulative motion and
// returns the exact backward flows and validity masks for (t, t-1) and (t, 1).
inline SyntheticSequence generate_sequence(const MotionSpec& spec) {
  spec.validate();
  const int H = spec.height, W = spec.width;
  const auto transforms = detail::cumulative_transforms(spec);

  // Margin large enough that every frame samples inside the base image.
  double reach = 0.0;
  for (const auto& tr : transforms) {
    const Affine2 inv = tr.inverse();
    for (auto [x, y] : {std::pair{0.0, 0.0}, {W - 1.0, 0.0}, {0.0, H - 1.0}, {W - 1.0, H - 1.0}}) {
      const auto [bx, by] = inv.apply(x, y);
      reach = std::max({reach, -bx, -by, bx - (W - 1), by - (H - 1)});
    }
  }
  const int margin = static_cast<int>(std::ceil(reach)) + 2;
  const int bh = H + 2 * margin, bw = W + 2 * margin;

  Tensor<float> base;
  switch (spec.texture) {
    case TextureKind::checkerboard: base = detail::checkerboard(bh, bw, spec.checker_cell); break;
    case TextureKind::noise: base = detail::noise_texture(bh, bw, spec.seed); break;
    case TextureKind::user_image: base = *spec.user_image; break;
  }
  // Base coordinates coincide with frame-1 coordinates; offset centres the base.
  const double ox = (base.width() - W) / 2.0, oy = (base.height() - H) / 2.0;

  SyntheticSequence out;
  out.motion = AnalyticMotion{H, W, transforms};
  for (int t = 1; t <= spec.frames; ++t) {
    const Affine2 inv = transforms[t - 1].inverse();
    Tensor<float> frame(Shape{3, H, W});
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const auto [bx, by] = inv.apply(x, y);
        const double sx = std::clamp(bx + ox, 0.0, base.width() - 1.0);
        const double sy = std::clamp(by + oy, 0.0, base.height() - 1.0);
        const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, base.width() - 1), y1 = std::min(y0 + 1, base.height() - 1);
        const double ax = sx - x0, ay = sy - y0;
        for (int c = 0; c < 3; ++c) {
          if (ax == 0.0 && ay == 0.0) {
            frame(c, y, x) = base(c, y0, x0);
          } else {
            frame(c, y, x) = static_cast<float>((1 - ay) * ((1 - ax) * base(c, y0, x0) + ax * base(c, y0, x1)) +
                                                ay * ((1 - ax) * base(c, y1, x0) + ax * base(c, y1, x1)));
          }
        }
      }
    out.frames.push_back(std::move(frame));
  }

  for (int t = 2; t <= spec.frames; ++t) {
    for (int ref : {t - 1, 1}) {
      out.flows.emplace(FramePair{t, ref}, out.motion.flow(t, ref));
      auto valid = out.motion.valid(t, ref);
      if (valid.values.sum() == 0.0f) {
        throw std::invalid_argument("generate_sequence: motion too large, frames " + std::to_string(t) + " and " +
                                    std::to_string(ref) + " share no content");
      }
      out.occlusion.emplace(FramePair{t, ref}, std::move(valid));
    }
  }
  return out;
}

enum class FlickerMode { brightness_sinusoid, color_jitter, gamma };

inline FlickerMode parse_flicker_mode(const std::string& s) {
  if (s == "brightness-sinusoid") return FlickerMode::brightness_sinusoid;
  if (s == "color-jitter") return FlickerMode::color_jitter;
  if (s == "gamma") return FlickerMode::gamma;
  throw std::invalid_argument("unknown flicker mode: " + s);
}

inline std::string to_string(FlickerMode m) {
  switch (m) {
    case FlickerMode::brightness_sinusoid: return "brightness-sinusoid";
    case FlickerMode::color_jitter: return "color-jitter";
    case FlickerMode::gamma: return "gamma";
  }
  return "?";
}

struct FlickerSpec {
  FlickerMode mode = FlickerMode::brightness_sinusoid;
  double amplitude = 0.2;
  double period = 4.0;
  double phase = 0.0;  // radians, sinusoid only
  std::uint64_t seed = 0;

  void validate() const {
    if (!std::isfinite(amplitude) || amplitude < 0.0 || amplitude >= 1.0) {
      throw std::invalid_argument("FlickerSpec: amplitude must be in [0, 1)");
    }
    if (mode == FlickerMode::brightness_sinusoid && !(period > 0.0)) {
      throw std::invalid_argument("FlickerSpec: period must be positive");
    }
  }
};

// Photometric change applied to one frame: P = clamp(gain * I^gamma + bias).
struct FrameFlicker {
  std::array<double, 3> gain{1, 1, 1};
  std::array<double, 3> bias{0, 0, 0};
  double gamma = 1.0;

  Tensor<float> apply(const Tensor<float>& frame) const {
    Tensor<float> out(frame.shape());
    for (int c = 0; c < 3; ++c) {
      auto src = frame.channel(c);
      auto dst = out.channel(c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        const double v = gamma == 1.0 ? src[i] : std::pow(static_cast<double>(src[i]), gamma);
        dst[i] = static_cast<float>(std::clamp(gain[c] * v + bias[c], 0.0, 1.0));
      }
    }
    return out;
  }
};

inline std::vector<FrameFlicker> flicker_schedule(const FlickerSpec& spec, int frames) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<FrameFlicker> schedule;
  for (int t = 1; t <= frames; ++t) {
    FrameFlicker f;
    switch (spec.mode) {
      case FlickerMode::brightness_sinusoid: {
        const double g = 1.0 + spec.amplitude * std::sin(2.0 * std::numbers::pi * t / spec.period + spec.phase);
        f.gain = {g, g, g};
        break;
      }
      case FlickerMode::color_jitter:
        for (int c = 0; c < 3; ++c) {
          f.gain[c] = 1.0 + spec.amplitude * rng.uniform(-1.0, 1.0);
          f.bias[c] = 0.5 * spec.amplitude * rng.uniform(-1.0, 1.0);
        }
        break;
      case FlickerMode::gamma: f.gamma = 1.0 + spec.amplitude * rng.uniform(-1.0, 1.0); break;
    }
    schedule.push_back(f);
  }
  return schedule;
}

struct FlickerResult {
  FrameSequence<float> processed;
  std::vector<FrameFlicker> schedule;  // schedule[t-1] belongs to frame t
};

inline FlickerResult apply_flicker(const FrameSequence<float>& seq, const FlickerSpec& spec) {
  FlickerResult r;
  r.schedule = flicker_schedule(spec, seq.length());
  if (spec.amplitude == 0.0) {
    r.processed = seq;
    return r;
  }
  for (int t = 1; t <= seq.length(); ++t) r.processed.push_back(r.schedule[t - 1].apply(seq.at(t)));
  return r;
}

// Temporally consistent target: every frame gets frame 1's photometric change,
// so O_1 = P_1 and motion-compensated frames agree.
inline FrameSequence<float> ideal_output(const FrameSequence<float>& original, const std::vector<FrameFlicker>& schedule) {
  if (schedule.empty()) throw std::invalid_argument("ideal_output: empty schedule");
  FrameSequence<float> out;
  for (int t = 1; t <= original.length(); ++t) out.push_back(schedule.front().apply(original.at(t)));
  return out;
}

inline nlohmann::json to_json(const FrameFlicker& f) {
  return {{"gain", f.gain}, {"bias", f.bias}, {"gamma", f.gamma}};
}

inline FrameFlicker frame_flicker_from_json(const nlohmann::json& j) {
  FrameFlicker f;
  f.gain = j.at("gain").get<std::array<double, 3>>();
  f.bias = j.at("bias").get<std::array<double, 3>>();
  f.gamma = j.at("gamma").get<double>();
  return f;
}

inline nlohmann::json to_json(const Affine2& a) { return {a.a11, a.a12, a.a21, a.a22, a.tx, a.ty}; }

inline Affine2 affine_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 6) throw std::invalid_argument("affine transform needs 6 numbers");
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

}  // namespace vtc
