#include "bitconv/synth.hpp"

#include <algorithm>

#include "bitconv/error.hpp"

namespace bitconv::synth {

namespace {

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::uint8_t clamp8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

// Palette of clearly non-green colours; per-pixel jitter stays well inside the
// green rule's margin.
constexpr Rgb kPalette[] = {
    {235, 235, 235}, {200, 200, 205}, {120, 120, 125}, {30, 30, 35},
    {210, 40, 40},   {40, 60, 200},   {230, 140, 30},  {160, 60, 160},
};

}  // namespace

Image green_field(int width, int height, std::mt19937_64& rng) {
  Image img(width, height);
  const int base_r = uniform(rng, 30, 60), base_g = uniform(rng, 130, 170), base_b = uniform(rng, 30, 60);
  const double gx = std::uniform_real_distribution<double>(-0.15, 0.15)(rng);
  const double gy = std::uniform_real_distribution<double>(-0.15, 0.15)(rng);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int shade = static_cast<int>(gx * (x - width / 2) + gy * (y - height / 2));
      const int n = uniform(rng, -18, 18);
      img.at(x, y) = {clamp8(base_r + uniform(rng, -12, 12)), clamp8(base_g + shade + n),
                      clamp8(base_b + uniform(rng, -12, 12))};
    }
  }
  return img;
}

Proposal draw_object(Image& image, ObjectShape shape, int x, int y, int size, std::mt19937_64& rng) {
  const Rgb base = kPalette[uniform(rng, 0, static_cast<int>(std::size(kPalette)) - 1)];
  const double r = size / 2.0;
  const double cx = x + r - 0.5, cy = y + r - 0.5;
  Proposal box{image.width, image.height, -1, -1};
  for (int yy = y; yy < y + size; ++yy) {
    for (int xx = x; xx < x + size; ++xx) {
      if (xx < 0 || yy < 0 || xx >= image.width || yy >= image.height) continue;
      if (shape == ObjectShape::Disk && (xx - cx) * (xx - cx) + (yy - cy) * (yy - cy) > r * r) continue;
      const int j = uniform(rng, -4, 4);
      image.at(xx, yy) = {clamp8(base.r + j), clamp8(base.g + j), clamp8(base.b + j)};
      box = {std::min(box.x0, xx), std::min(box.y0, yy), std::max(box.x1, xx), std::max(box.y1, yy)};
    }
  }
  return box;
}

Scene make_scene(const SceneConfig& cfg, std::mt19937_64& rng) {
  if (cfg.max_size + 2 * cfg.gap > std::min(cfg.width, cfg.height)) {
    throw ArgumentError("scene too small for the requested object sizes");
  }
  Scene scene{green_field(cfg.width, cfg.height, rng), {}};
  const int wanted = uniform(rng, cfg.min_objects, cfg.max_objects);
  std::bernoulli_distribution is_square(cfg.square_fraction);
  for (int attempt = 0; attempt < 200 && static_cast<int>(scene.objects.size()) < wanted; ++attempt) {
    const int size = uniform(rng, cfg.min_size, cfg.max_size);
    const int x = uniform(rng, 2, cfg.width - size - 2);
    const int y = uniform(rng, 2, cfg.height - size - 2);
    const Proposal footprint{x - cfg.gap, y - cfg.gap, x + size - 1 + cfg.gap, y + size - 1 + cfg.gap};
    const bool clear = std::none_of(scene.objects.begin(), scene.objects.end(),
                                    [&](const PlantedObject& o) { return intersects(o.box, footprint); });
    if (!clear) continue;
    const ObjectShape shape = is_square(rng) ? ObjectShape::Square : ObjectShape::Disk;
    scene.objects.push_back({draw_object(scene.image, shape, x, y, size, rng), shape});
  }
  return scene;
}

Dataset make_patch_dataset(std::size_t count, std::uint64_t seed, int side) {
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.class_names = {"disk", "square"};
  ds.image_shape = {3, side, side};
  constexpr int kCanvas = 48;
  for (std::size_t i = 0; i < count; ++i) {
    const ObjectShape shape = i % 2 == 0 ? ObjectShape::Disk : ObjectShape::Square;
    Image canvas = green_field(kCanvas, kCanvas, rng);
    const int size = uniform(rng, 10, 22);
    const int x = uniform(rng, 4, kCanvas - size - 4);
    const int y = uniform(rng, 4, kCanvas - size - 4);
    const Proposal tight = draw_object(canvas, shape, x, y, size, rng);
    // Mimic scanline boxes: the default margin plus a little slack either way.
    Proposal box{tight.x0 - 2 + uniform(rng, -2, 2), tight.y0 - 2 + uniform(rng, -2, 2),
                 tight.x1 + 2 + uniform(rng, -2, 2), tight.y1 + 2 + uniform(rng, -2, 2)};
    box = {std::max(0, box.x0), std::max(0, box.y0), std::min(kCanvas - 1, box.x1), std::min(kCanvas - 1, box.y1)};
    ds.items.push_back({crop_resize(canvas, box, side), shape == ObjectShape::Square ? 1 : 0});
  }
  return ds;
}

}  // namespace bitconv::synth
