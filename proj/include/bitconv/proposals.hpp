#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bitconv/network.hpp"
#include "bitconv/pnm.hpp"
#include "bitconv/tensor.hpp"

namespace bitconv {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// RGB8 camera frame, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  Image() = default;
  Image(int w, int h, Rgb fill = {});
  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Requires a P6 file.
Image read_ppm(const std::string& path);
void write_ppm(const Image& image, const std::string& path);
Image from_pnm(const PnmImage& pnm);
PnmImage to_pnm(const Image& image);

struct GreenRule {
  int margin = 10;
  int min_brightness = 30;
};

/// g > r + margin, g > b + margin and g > min_brightness.
bool is_green(Rgb pixel, const GreenRule& rule = {});

struct ProposalConfig {
  int spacing = 8;    // columns between vertical scanlines
  int min_run = 4;    // a spot needs a non-green run longer than this
  int margin_px = 2;  // box growth before clipping
  int min_box = 8;    // smaller boxes are dropped
  GreenRule green;

  void validate() const;
};

/// Inclusive pixel bounds.
struct Proposal {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool operator==(const Proposal&) const = default;
};

double iou(const Proposal& a, const Proposal& b);
bool intersects(const Proposal& a, const Proposal& b);

/// Non-green runs on vertical scanlines, merged across neighbouring
/// scanlines into boxes.
std::vector<Proposal> scan_proposals(const Image& image, const ProposalConfig& cfg = {});

/// Bilinear crop to [3, side, side] with values in [0,1].
Tensor crop_resize(const Image& image, const Proposal& box, int side = 24);

struct Detection {
  Proposal box;
  float confidence = 0.0f;
  int label = 0;
};

struct DetectConfig {
  ProposalConfig proposals;
  int side = 24;
  float threshold = 0.5f;
  int positive_label = 1;
  bool use_binary = true;
};

struct DetectTiming {
  double t_prop_ms = 0.0;
  double mean_t_inf_ms = 0.0;
  double total_ms = 0.0;
  std::size_t n_proposals = 0;
};

struct DetectResult {
  std::vector<Proposal> proposals;
  std::vector<Detection> detections;
  DetectTiming timing;
};

/// Maps a crop (and the box it came from) to class probabilities.
using Classifier = std::function<Tensor(const Tensor& crop, const Proposal& box)>;

DetectResult detect(const Image& image, const Classifier& classify, const DetectConfig& cfg = {});
DetectResult detect(const Image& image, const InferenceModel& model, const DetectConfig& cfg = {});

/// One `x0 y0 x1 y1 label confidence` line per detection.
std::string detections_text(const DetectResult& result);
/// {"t_prop_ms":..,"mean_t_inf_ms":..,"n_proposals":..,"total_ms":..}
std::string timing_json(const DetectTiming& timing);

struct TimingModel {
  double t_prop_ms = 0.0;
  double t_inf_ms = 0.0;
  double avg_proposals = 0.0;
};

/// Expected per-frame cost: proposal time plus one inference per proposal.
double total_time(const TimingModel& m);

}  // namespace bitconv
