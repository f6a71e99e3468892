#include "a2j/data_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "a2j/nn.hpp"

namespace a2j {

namespace {

struct Finger {
  double base_x, base_y;  // knuckle position relative to the wrist, mm
  double angle;           // in-plane direction, radians from +y towards -x
  double lengths[3];      // mm
  double radius;          // blob radius multiplier at the knuckle
};

// Right hand, palm towards the camera, fingers along +y.
constexpr std::array<Finger, 5> kFingers = {{
    {-22.0, 24.0, 0.85, {38.0, 30.0, 25.0}, 1.1},
    {-22.0, 86.0, 0.12, {42.0, 25.0, 20.0}, 1.1},
    {-6.0, 91.0, 0.0, {46.0, 28.0, 22.0}, 1.1},
    {10.0, 86.0, -0.12, {42.0, 27.0, 21.0}, 1.1},
    {24.0, 76.0, -0.3, {33.0, 20.0, 18.0}, 1.0},
}};

using Vec3 = std::array<double, 3>;

struct HandPose {
  std::array<Vec3, kJointsPerHand> local;  // mm, wrist at the origin
};

// Forward kinematics for one hand; `mirror` flips it into a left hand.
HandPose pose_hand(const SyntheticHandConfig& cfg, Rng& rng, bool mirror) {
  HandPose pose;
  const double scale = rng.uniform(cfg.hand_scale_min, cfg.hand_scale_max);
  pose.local[0] = {0, 0, 0};
  for (std::size_t f = 0; f < kFingers.size(); ++f) {
    const Finger& fg = kFingers[f];
    const double spread = fg.angle + rng.uniform(-cfg.max_spread, cfg.max_spread);
    const double curl = rng.uniform(0.0, cfg.max_curl);
    const double ux = -std::sin(spread), uy = std::cos(spread);
    Vec3 p = {fg.base_x, fg.base_y, 0.0};
    pose.local[1 + f * 4] = p;
    double pitch = 0.0;
    static constexpr double kCurlShare[3] = {1.0, 0.9, 0.7};
    for (int s = 0; s < 3; ++s) {
      pitch += curl * kCurlShare[s] * rng.uniform(0.7, 1.0);
      const double len = fg.lengths[s];
      // Curling moves the finger towards the camera (negative depth).
      p = {p[0] + len * std::cos(pitch) * ux, p[1] + len * std::cos(pitch) * uy,
           p[2] - len * std::sin(pitch)};
      pose.local[1 + f * 4 + 1 + std::size_t(s)] = p;
    }
  }
  const double roll = rng.uniform(-std::numbers::pi / 3, std::numbers::pi / 3);
  const double tilt_x = rng.uniform(-cfg.max_tilt, cfg.max_tilt);
  const double tilt_y = rng.uniform(-cfg.max_tilt, cfg.max_tilt);
  const double cr = std::cos(roll), sr = std::sin(roll);
  const double cx = std::cos(tilt_x), sx = std::sin(tilt_x);
  const double cy = std::cos(tilt_y), sy = std::sin(tilt_y);
  for (auto& v : pose.local) {
    double x = v[0] * scale, y = v[1] * scale, z = v[2] * scale;
    if (mirror) x = -x;
    // Rx, then Ry, then in-plane roll.
    double y1 = cx * y - sx * z, z1 = sx * y + cx * z;
    double x2 = cy * x + sy * z1, z2 = -sy * x + cy * z1;
    v = {cr * x2 - sr * y1, sr * x2 + cr * y1, z2};
  }
  return pose;
}

struct Box {
  double x0, y0, x1, y1;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool intersects(const Box& o) const {
    return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
  }
};

// Projected joint offsets from the wrist in pixels (image y grows downwards).
std::array<std::array<double, 2>, kJointsPerHand> project(const HandPose& pose, double mmpp) {
  std::array<std::array<double, 2>, kJointsPerHand> out;
  for (std::size_t j = 0; j < kJointsPerHand; ++j)
    out[j] = {pose.local[j][0] / mmpp, -pose.local[j][1] / mmpp};
  return out;
}

Box extent(const std::array<std::array<double, 2>, kJointsPerHand>& pts, double wx, double wy) {
  Box b{1e300, 1e300, -1e300, -1e300};
  for (const auto& p : pts) {
    b.x0 = std::min(b.x0, wx + p[0]);
    b.y0 = std::min(b.y0, wy + p[1]);
    b.x1 = std::max(b.x1, wx + p[0]);
    b.y1 = std::max(b.y1, wy + p[1]);
  }
  return b;
}

// Uniform wrist position keeping the hand inside [lo, hi] on each axis
// (region given per axis). Returns false when the hand does not fit.
bool place_in(const std::array<std::array<double, 2>, kJointsPerHand>& pts, const Box& region,
              Rng& rng, double& wx, double& wy) {
  const Box rel = extent(pts, 0, 0);
  const double min_x = region.x0 - rel.x0, max_x = region.x1 - rel.x1;
  const double min_y = region.y0 - rel.y0, max_y = region.y1 - rel.y1;
  if (min_x > max_x || min_y > max_y) return false;
  wx = rng.uniform(min_x, max_x);
  wy = rng.uniform(min_y, max_y);
  return true;
}

void scale_pose(HandPose& pose, double factor) {
  for (auto& v : pose.local)
    for (auto& c : v) c *= factor;
}

// Rounds to the precision the dataset file stores. Kept out of line: GCC 11
// at -O3 -march=native dropped the narrowing in the vectorized loop tail.
[[gnu::noinline]] double stored_precision(double v) { return double(float(v)); }

float quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return float(std::lround(c * 255.0)) / 255.0f;
}

// Parent of each joint inside a hand.
std::size_t parent_of(std::size_t j) {
  if (j == 0) return 0;
  return (j - 1) % 4 == 0 ? 0 : j - 1;
}

}  // namespace

void SyntheticHandConfig::validate() const {
  if (image_size < 16) throw ConfigError("image_size must be at least 16");
  auto prob = [](const char* name, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0,1]");
  };
  prob("overlap_probability", overlap_probability);
  prob("single_hand_probability", single_hand_probability);
  if (!(hand_scale_min > 0 && hand_scale_max >= hand_scale_min))
    throw ConfigError("hand_scale_min/max must satisfy 0 < min <= max");
  if (!(blob_radius > 0)) throw ConfigError("blob_radius must be positive");
  if (mm_per_pixel < 0) throw ConfigError("mm_per_pixel must be non-negative");
}

void render_blob(std::vector<float>& image, std::size_t size, double x, double y, double radius,
                 const float color[3]) {
  const double reach = 3.0 * radius;
  const long lo_x = std::max(0L, long(std::floor(x - reach)));
  const long hi_x = std::min(long(size) - 1, long(std::ceil(x + reach)));
  const long lo_y = std::max(0L, long(std::floor(y - reach)));
  const long hi_y = std::min(long(size) - 1, long(std::ceil(y + reach)));
  const double inv = 1.0 / (2.0 * radius * radius);
  const std::size_t plane = size * size;
  for (long py = lo_y; py <= hi_y; ++py) {
    for (long px = lo_x; px <= hi_x; ++px) {
      const double dx = double(px) + 0.5 - x, dy = double(py) + 0.5 - y;
      const double g = std::exp(-(dx * dx + dy * dy) * inv);
      const std::size_t i = std::size_t(py) * size + std::size_t(px);
      for (std::size_t c = 0; c < 3; ++c)
        image[c * plane + i] = std::max(image[c * plane + i], float(g * color[c]));
    }
  }
}

SampleRecord generate_sample(const SyntheticHandConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t size = cfg.image_size;
  const double mmpp = cfg.resolved_mm_per_pixel();
  const double margin = 2.0;
  const Box frame{margin, margin, double(size) - margin, double(size) - margin};

  SampleRecord rec;
  rec.image_size = size;
  rec.seed = seed;
  rec.targets.joints_per_hand = kJointsPerHand;
  rec.targets.joints.assign(kHands * kJointsPerHand, JointCoord{0, 0, 0, false});
  rec.targets.hand_roots = {0, kJointsPerHand};

  std::array<bool, kHands> present = {true, true};
  if (rng.uniform() < cfg.single_hand_probability) present[rng.below(2)] = false;
  rec.hand_count = std::uint8_t(present[0] + present[1]);
  const bool want_overlap = rng.uniform() < cfg.overlap_probability;

  std::array<HandPose, kHands> poses;
  for (std::size_t h = 0; h < kHands; ++h) poses[h] = pose_hand(cfg, rng, h == 1);
  std::array<double, kHands> wx{}, wy{};

  auto fit = [&](std::size_t h, const Box& region) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      if (place_in(project(poses[h], mmpp), region, rng, wx[h], wy[h])) return;
      const Box e = extent(project(poses[h], mmpp), 0, 0);
      const double shrink = std::min(region.width() / e.width(), region.height() / e.height());
      scale_pose(poses[h], std::min(0.9, 0.97 * shrink));
    }
    throw NumericError("synthetic hand does not fit the image");
  };

  if (rec.hand_count == 1) {
    fit(present[0] ? 0 : 1, frame);
  } else if (want_overlap) {
    fit(0, frame);
    fit(1, frame);
    const Box a = extent(project(poses[0], mmpp), wx[0], wy[0]);
    const Box rel = extent(project(poses[1], mmpp), 0, 0);
    // Centre the second hand near the first, then clamp it into the frame.
    const double cx = 0.5 * (a.x0 + a.x1) + rng.uniform(-0.5, 0.5) * a.width();
    const double cy = 0.5 * (a.y0 + a.y1) + rng.uniform(-0.5, 0.5) * a.height();
    double x = cx - 0.5 * (rel.x0 + rel.x1), y = cy - 0.5 * (rel.y0 + rel.y1);
    x = std::clamp(x, frame.x0 - rel.x0, frame.x1 - rel.x1);
    y = std::clamp(y, frame.y0 - rel.y0, frame.y1 - rel.y1);
    wx[1] = x;
    wy[1] = y;
  } else {
    // Split the frame in two along a random axis and give each hand a side.
    const bool vertical_cut = rng.uniform() < 0.5;
    const double cut = rng.uniform(0.42, 0.58) * double(size);
    const double gap = 1.0;
    Box first = frame, second = frame;
    if (vertical_cut) {
      first.x1 = cut - gap;
      second.x0 = cut + gap;
    } else {
      first.y1 = cut - gap;
      second.y0 = cut + gap;
    }
    const bool swap = rng.uniform() < 0.5;
    fit(0, swap ? second : first);
    fit(1, swap ? first : second);
  }

  std::array<Box, kHands> boxes;
  for (std::size_t h = 0; h < kHands; ++h) {
    if (!present[h]) continue;
    const auto pts = project(poses[h], mmpp);
    boxes[h] = extent(pts, wx[h], wy[h]);
    for (std::size_t j = 0; j < kJointsPerHand; ++j) {
      JointCoord& jc = rec.targets.joints[h * kJointsPerHand + j];
      jc.x = stored_precision(wx[h] + pts[j][0]);
      jc.y = stored_precision(wy[h] + pts[j][1]);
      jc.depth = stored_precision(poses[h].local[j][2]);
      jc.valid = true;
    }
  }
  rec.overlap = rec.hand_count == 2 && boxes[0].intersects(boxes[1]);
  rec.targets = mark_valid_joints(rec.targets);
  for (std::size_t h = 0; h < kHands; ++h)
    if (!present[h])
      for (std::size_t j = 0; j < kJointsPerHand; ++j)
        rec.targets.joints[h * kJointsPerHand + j].valid = false;

  std::vector<float> image(3 * size * size);
  for (auto& v : image) v = float(rng.uniform(0.0, cfg.noise));
  for (std::size_t h = 0; h < kHands; ++h) {
    if (!present[h]) continue;
    const double base[3] = {h == 0 ? 1.0 : 0.25, 0.0, h == 0 ? 0.25 : 1.0};
    for (std::size_t j = 0; j < kJointsPerHand; ++j) {
      const JointCoord& jc = rec.targets.joints[h * kJointsPerHand + j];
      const std::size_t finger = j == 0 ? 0 : (j - 1) / 4 + 1;
      const double bright = 0.55 + 0.45 * std::clamp((100.0 - jc.depth) / 200.0, 0.0, 1.0);
      const float color[3] = {float(base[0] * bright), float((0.1 + 0.15 * double(finger)) * bright),
                              float(base[2] * bright)};
      if (j != 0) {
        const JointCoord& pc = rec.targets.joints[h * kJointsPerHand + parent_of(j)];
        const double len = std::hypot(jc.x - pc.x, jc.y - pc.y);
        const int steps = std::max(1, int(len / 0.5));
        const float bone[3] = {float(color[0] * cfg.bone_intensity),
                               float(color[1] * cfg.bone_intensity),
                               float(color[2] * cfg.bone_intensity)};
        for (int s = 1; s < steps; ++s) {
          const double t = double(s) / steps;
          render_blob(image, size, pc.x + t * (jc.x - pc.x), pc.y + t * (jc.y - pc.y),
                      0.6 * cfg.blob_radius, bone);
        }
      }
      double radius = cfg.blob_radius;
      if (j == 0) {
        radius *= 1.6;
      } else if ((j - 1) % 4 == 0) {
        radius *= kFingers[finger - 1].radius;
      } else if ((j - 1) % 4 == 3) {
        radius *= 0.9;
      }
      render_blob(image, size, jc.x, jc.y, radius, color);
    }
  }
  for (auto& v : image) v = quantize(v);
  rec.image = std::move(image);
  return rec;
}

std::vector<SampleRecord> generate_samples(const SyntheticHandConfig& cfg, std::size_t count,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SampleRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_sample(cfg, rng.next_u64()));
  return out;
}

Dataset make_dataset(const SyntheticHandConfig& cfg, std::size_t count, std::uint64_t seed) {
  Dataset d;
  d.image_size = cfg.image_size;
  d.mm_per_pixel = cfg.resolved_mm_per_pixel();
  d.records = generate_samples(cfg, count, seed);
  return d;
}

}  // namespace a2j
