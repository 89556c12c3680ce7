#include "vsseg/synthetic.hpp"

#include <algorithm>
#include <string>

#include "vsseg/errors.hpp"
#include "vsseg/rng.hpp"

namespace vsseg {

namespace {

bool in_mask(int kind, int radius, int dx, int dy) {
  switch (kind) {
    case 0:
      return std::abs(dx) <= radius && std::abs(dy) <= radius;
    case 1:
      return dx * dx + dy * dy <= radius * radius;
    default:
      return std::abs(dx) + std::abs(dy) <= radius;
  }
}

struct Box {
  int x_lo, x_hi, y_lo, y_hi;
  bool overlaps(const Box& o) const {
    return x_lo <= o.x_hi && o.x_lo <= x_hi && y_lo <= o.y_hi && o.y_lo <= y_hi;
  }
};

// Bounding box of the whole trajectory, padded by one pixel so shapes
// never touch.
Box trajectory_box(const ShapeTrack& s, int len) {
  const int travel_x = s.vx * (len - 1);
  const int travel_y = s.vy * (len - 1);
  Box b;
  b.x_lo = s.x0 - s.radius + std::min(0, travel_x) - 1;
  b.x_hi = s.x0 + s.radius + std::max(0, travel_x) + 1;
  b.y_lo = s.y0 - s.radius + std::min(0, travel_y) - 1;
  b.y_hi = s.y0 + s.radius + std::max(0, travel_y) + 1;
  return b;
}

std::vector<ShapeTrack> place_shapes(const SyntheticConfig& cfg, std::mt19937_64& g) {
  const int len = cfg.clip_length;
  const int max_speed = std::min(cfg.max_speed, 2);
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::vector<ShapeTrack> shapes;
    std::vector<Box> boxes;
    bool ok = true;
    for (int cls = 1; cls < cfg.classes && ok; ++cls) {
      bool placed = false;
      for (int trial = 0; trial < 500 && !placed; ++trial) {
        ShapeTrack s;
        s.cls = cls;
        s.kind = (cls - 1) % 3;
        s.radius = draw_int(g, cfg.min_radius, cfg.max_radius);
        s.vx = draw_int(g, -max_speed, max_speed);
        s.vy = draw_int(g, -max_speed, max_speed);
        if (s.vx == 0 && s.vy == 0) s.vx = 1;
        // keep the full mask inside the frame at every timestep
        const int x_lo = s.radius + std::max(0, -s.vx * (len - 1));
        const int x_hi = cfg.width - 1 - s.radius - std::max(0, s.vx * (len - 1));
        const int y_lo = s.radius + std::max(0, -s.vy * (len - 1));
        const int y_hi = cfg.height - 1 - s.radius - std::max(0, s.vy * (len - 1));
        if (x_lo > x_hi || y_lo > y_hi) continue;
        s.x0 = draw_int(g, x_lo, x_hi);
        s.y0 = draw_int(g, y_lo, y_hi);
        const Box b = trajectory_box(s, len);
        bool clear = true;
        for (const Box& other : boxes) {
          if (b.overlaps(other)) {
            clear = false;
            break;
          }
        }
        if (!clear) continue;
        shapes.push_back(s);
        boxes.push_back(b);
        placed = true;
      }
      ok = placed;
    }
    if (ok) return shapes;
  }
  throw ConfigError("synthetic: cannot place " + std::to_string(cfg.classes - 1) +
                    " disjoint shape trajectories in a " + std::to_string(cfg.height) + "x" +
                    std::to_string(cfg.width) + " frame");
}

SyntheticClip make_clip(const SyntheticConfig& cfg, const SeedBank& sb, int clip_index) {
  const std::string tag = "clip" + std::to_string(clip_index);
  auto place_rng = sb.stream(tag + "/shapes");
  SyntheticClip clip;
  clip.H = cfg.height;
  clip.W = cfg.width;
  clip.C = cfg.classes;
  clip.shapes = place_shapes(cfg, place_rng);

  const int n = cfg.height * cfg.width;
  auto tex_rng = sb.stream(tag + "/background");
  std::vector<double> bg(static_cast<std::size_t>(n));
  for (double& v : bg) {
    v = cfg.background_base + draw_uniform(tex_rng, -cfg.texture_amplitude, cfg.texture_amplitude);
  }
  // each shape carries its own rigid texture, indexed in shape-local pixels
  std::vector<std::vector<double>> shape_tex;
  for (const ShapeTrack& s : clip.shapes) {
    auto srng = sb.stream(tag + "/shape" + std::to_string(s.cls));
    const int side = 2 * s.radius + 1;
    std::vector<double> tex(static_cast<std::size_t>(side) * side);
    const double base = cfg.background_base + s.cls * cfg.class_contrast;
    for (double& v : tex) {
      v = base + draw_uniform(srng, -cfg.texture_amplitude, cfg.texture_amplitude);
    }
    shape_tex.push_back(std::move(tex));
  }

  for (int t = 0; t < cfg.clip_length; ++t) {
    std::vector<double> clean = bg;
    SegmentationMap label = SegmentationMap::filled(cfg.height, cfg.width, 0);
    for (std::size_t si = 0; si < clip.shapes.size(); ++si) {
      const ShapeTrack& s = clip.shapes[si];
      const int cx = s.x0 + s.vx * t;
      const int cy = s.y0 + s.vy * t;
      const int side = 2 * s.radius + 1;
      for (int dy = -s.radius; dy <= s.radius; ++dy) {
        for (int dx = -s.radius; dx <= s.radius; ++dx) {
          if (!in_mask(s.kind, s.radius, dx, dy)) continue;
          const int x = cx + dx, y = cy + dy;
          const std::size_t at = static_cast<std::size_t>(y) * cfg.width + x;
          clean[at] = shape_tex[si][static_cast<std::size_t>(dy + s.radius) * side + (dx + s.radius)];
          label.labels[at] = s.cls;
        }
      }
    }
    auto noise_rng = sb.stream(tag + "/frame" + std::to_string(t) + "/noise");
    Tensor frame = Tensor::zeros({cfg.height, cfg.width});
    for (int i = 0; i < n; ++i) {
      const double v = clean[static_cast<std::size_t>(i)] +
                       draw_normal(noise_rng, 0.0, cfg.noise_stddev);
      frame.data[static_cast<std::size_t>(i)] = std::clamp(v, 0.0, 1.0);
    }
    clip.frames.push_back(std::move(frame));
    clip.labels.push_back(std::move(label));
  }
  return clip;
}

}  // namespace

SyntheticSet generate_synthetic(std::uint64_t seed, const SyntheticConfig& cfg) {
  if (cfg.classes < 2) {
    throw ConfigError("synthetic: need at least 2 classes (background plus one shape)");
  }
  if (cfg.height < 16 || cfg.width < 16) {
    throw ConfigError("synthetic: frame must be at least 16x16");
  }
  if (cfg.clip_length < 1 || cfg.train_clips < 0 || cfg.val_clips < 0) {
    throw ConfigError("synthetic: clip length/count must be positive");
  }
  if (cfg.min_radius < 1 || cfg.max_radius < cfg.min_radius) {
    throw ConfigError("synthetic: invalid shape radius range");
  }
  SeedBank sb(seed);
  SyntheticSet set;
  for (int i = 0; i < cfg.train_clips; ++i) set.train.push_back(make_clip(cfg, sb, i));
  for (int i = 0; i < cfg.val_clips; ++i) {
    set.val.push_back(make_clip(cfg, sb, cfg.train_clips + i));
  }
  return set;
}

}  // namespace vsseg
