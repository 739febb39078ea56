#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "bitconv/proposals.hpp"
#include "bitconv/training.hpp"

namespace bitconv::synth {

enum class ObjectShape { Disk, Square };

struct PlantedObject {
  Proposal box;  // tight bounds of the drawn pixels
  ObjectShape shape = ObjectShape::Square;
};

struct Scene {
  Image image;
  std::vector<PlantedObject> objects;
};

struct SceneConfig {
  int width = 160;
  int height = 120;
  int min_objects = 1;
  int max_objects = 3;
  int min_size = 10;
  int max_size = 22;
  int gap = 18;  // minimum free pixels between objects
  double square_fraction = 0.5;
};

/// Textured green field, values always satisfy the default green rule.
Image green_field(int width, int height, std::mt19937_64& rng);

/// Draws a disk or square of the given size with its top-left corner at
/// (x, y) in a random non-green colour. Returns the tight bounds.
Proposal draw_object(Image& image, ObjectShape shape, int x, int y, int size, std::mt19937_64& rng);

/// Green field with non-overlapping planted objects.
Scene make_scene(const SceneConfig& cfg, std::mt19937_64& rng);

/// Two-class 3x`side`x`side` patch set (class 0 "disk", class 1 "square"),
/// each patch a jittered proposal-style crop around one planted object.
Dataset make_patch_dataset(std::size_t count, std::uint64_t seed, int side = 24);

}  // namespace bitconv::synth
