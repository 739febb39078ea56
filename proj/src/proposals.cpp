#include "bitconv/proposals.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "bitconv/error.hpp"
#include "bitconv/kernels.hpp"

namespace bitconv {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct Spot {
  int scanline;
  int x;
  int y0, y1;
};

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent_[i] != i) i = parent_[i] = parent_[parent_[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

Image::Image(int w, int h, Rgb fill) : width(w), height(h) {
  if (w < 1 || h < 1) throw ShapeError("image dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

Image from_pnm(const PnmImage& pnm) {
  if (pnm.channels != 3) throw FormatError("expected a color (P6) image");
  Image img(pnm.width, pnm.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = {pnm.pixels[3 * i], pnm.pixels[3 * i + 1], pnm.pixels[3 * i + 2]};
  }
  return img;
}

PnmImage to_pnm(const Image& image) {
  PnmImage pnm;
  pnm.width = image.width;
  pnm.height = image.height;
  pnm.channels = 3;
  pnm.pixels.reserve(image.pixels.size() * 3);
  for (const Rgb& p : image.pixels) {
    pnm.pixels.push_back(p.r);
    pnm.pixels.push_back(p.g);
    pnm.pixels.push_back(p.b);
  }
  return pnm;
}

Image read_ppm(const std::string& path) {
  PnmImage pnm = read_pnm(path);
  if (pnm.channels != 3) throw FormatError(path + ": expected a P6 color image");
  return from_pnm(pnm);
}

void write_ppm(const Image& image, const std::string& path) { write_pnm(to_pnm(image), path); }

bool is_green(Rgb p, const GreenRule& rule) {
  const int r = p.r, g = p.g, b = p.b;
  return g > r + rule.margin && g > b + rule.margin && g > rule.min_brightness;
}

void ProposalConfig::validate() const {
  if (spacing < 1) throw ArgumentError("scanline spacing must be >= 1");
  if (min_run < 0 || margin_px < 0 || min_box < 0) throw ArgumentError("proposal thresholds must be >= 0");
}

double iou(const Proposal& a, const Proposal& b) {
  const int ix = std::min(a.x1, b.x1) - std::max(a.x0, b.x0) + 1;
  const int iy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0) + 1;
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.width()) * a.height() + static_cast<double>(b.width()) * b.height() - inter;
  return inter / uni;
}

bool intersects(const Proposal& a, const Proposal& b) {
  return a.x0 <= b.x1 && b.x0 <= a.x1 && a.y0 <= b.y1 && b.y0 <= a.y1;
}

std::vector<Proposal> scan_proposals(const Image& image, const ProposalConfig& cfg) {
  cfg.validate();
  std::vector<Spot> spots;
  std::vector<std::size_t> first_on_line;  // index of the first spot of each scanline

  int line = 0;
  for (int x = 0; x < image.width; x += cfg.spacing, ++line) {
    first_on_line.push_back(spots.size());
    int run_start = -1;
    for (int y = 0; y <= image.height; ++y) {
      const bool green = y == image.height || is_green(image.at(x, y), cfg.green);
      if (!green && run_start < 0) run_start = y;
      if (green && run_start >= 0) {
        if (y - run_start > cfg.min_run) spots.push_back({line, x, run_start, y - 1});
        run_start = -1;
      }
    }
  }
  first_on_line.push_back(spots.size());

  // Spots on neighbouring scanlines with overlapping rows join one cluster.
  DisjointSets sets(spots.size());
  for (int l = 0; l + 1 < line; ++l) {
    for (std::size_t a = first_on_line[static_cast<std::size_t>(l)]; a < first_on_line[static_cast<std::size_t>(l) + 1]; ++a) {
      for (std::size_t b = first_on_line[static_cast<std::size_t>(l) + 1]; b < first_on_line[static_cast<std::size_t>(l) + 2]; ++b) {
        if (spots[a].y0 <= spots[b].y1 && spots[b].y0 <= spots[a].y1) sets.unite(a, b);
      }
    }
  }

  std::vector<Proposal> boxes(spots.size());
  std::vector<bool> used(spots.size(), false);
  for (std::size_t i = 0; i < spots.size(); ++i) {
    const Spot& s = spots[i];
    // The object may reach past the scanline; walk sideways through non-green
    // pixels, at most one scanline gap each way.
    int left = s.x, right = s.x;
    for (int y = s.y0; y <= s.y1; ++y) {
      int xl = s.x;
      while (xl - 1 >= 0 && s.x - (xl - 1) <= cfg.spacing && !is_green(image.at(xl - 1, y), cfg.green)) --xl;
      int xr = s.x;
      while (xr + 1 < image.width && (xr + 1) - s.x <= cfg.spacing && !is_green(image.at(xr + 1, y), cfg.green)) ++xr;
      left = std::min(left, xl);
      right = std::max(right, xr);
    }
    const std::size_t root = sets.find(i);
    Proposal p{left, s.y0, right, s.y1};
    if (!used[root]) {
      boxes[root] = p;
      used[root] = true;
    } else {
      Proposal& b = boxes[root];
      b = {std::min(b.x0, p.x0), std::min(b.y0, p.y0), std::max(b.x1, p.x1), std::max(b.y1, p.y1)};
    }
  }

  std::vector<Proposal> out;
  for (std::size_t i = 0; i < spots.size(); ++i) {
    if (!used[i]) continue;
    Proposal b = boxes[i];
    b.x0 = std::max(0, b.x0 - cfg.margin_px);
    b.y0 = std::max(0, b.y0 - cfg.margin_px);
    b.x1 = std::min(image.width - 1, b.x1 + cfg.margin_px);
    b.y1 = std::min(image.height - 1, b.y1 + cfg.margin_px);
    if (b.width() < cfg.min_box || b.height() < cfg.min_box) continue;
    out.push_back(b);
  }
  std::sort(out.begin(), out.end(), [](const Proposal& a, const Proposal& b) {
    return std::tie(a.y0, a.x0, a.y1, a.x1) < std::tie(b.y0, b.x0, b.y1, b.x1);
  });
  return out;
}

Tensor crop_resize(const Image& image, const Proposal& box, int side) {
  if (box.x0 < 0 || box.y0 < 0 || box.x1 >= image.width || box.y1 >= image.height || box.x0 > box.x1 ||
      box.y0 > box.y1) {
    throw ShapeError("proposal lies outside the image");
  }
  const int w = box.width(), h = box.height();
  std::vector<float> data(static_cast<std::size_t>(3) * w * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Rgb& p = image.at(box.x0 + x, box.y0 + y);
      const std::size_t at = static_cast<std::size_t>(y) * w + x;
      const std::size_t plane = static_cast<std::size_t>(w) * h;
      data[at] = p.r / 255.0f;
      data[plane + at] = p.g / 255.0f;
      data[2 * plane + at] = p.b / 255.0f;
    }
  }
  return resize_bilinear(Tensor({3, h, w}, std::move(data)), side, side);
}

DetectResult detect(const Image& image, const Classifier& classify, const DetectConfig& cfg) {
  const auto start = Clock::now();
  DetectResult result;
  result.proposals = scan_proposals(image, cfg.proposals);
  result.timing.t_prop_ms = ms_since(start);
  result.timing.n_proposals = result.proposals.size();

  double inf_total = 0.0;
  for (const Proposal& p : result.proposals) {
    const auto t0 = Clock::now();
    const Tensor probs = classify(crop_resize(image, p, cfg.side), p);
    inf_total += ms_since(t0);
    if (cfg.positive_label < 0 || static_cast<std::size_t>(cfg.positive_label) >= probs.size()) {
      throw ArgumentError("positive label " + std::to_string(cfg.positive_label) + " outside classifier output");
    }
    const float conf = probs[static_cast<std::size_t>(cfg.positive_label)];
    if (conf >= cfg.threshold) result.detections.push_back({p, conf, cfg.positive_label});
  }
  result.timing.mean_t_inf_ms = result.proposals.empty() ? 0.0 : inf_total / result.proposals.size();
  result.timing.total_ms = ms_since(start);
  return result;
}

DetectResult detect(const Image& image, const InferenceModel& model, const DetectConfig& cfg) {
  const ActShape& in = model.spec().input;
  if (in.c != 3 || in.h != cfg.side || in.w != cfg.side) {
    throw ShapeError("detector network expects " + std::to_string(in.c) + "x" + std::to_string(in.h) + "x" +
                     std::to_string(in.w) + " but crops are 3x" + std::to_string(cfg.side) + "x" +
                     std::to_string(cfg.side));
  }
  return detect(image, [&](const Tensor& crop, const Proposal&) { return model.run(crop, cfg.use_binary); }, cfg);
}

std::string detections_text(const DetectResult& result) {
  std::ostringstream os;
  os << std::setprecision(6);
  for (const Detection& d : result.detections) {
    os << d.box.x0 << ' ' << d.box.y0 << ' ' << d.box.x1 << ' ' << d.box.y1 << ' ' << d.label << ' '
       << d.confidence << '\n';
  }
  return os.str();
}

std::string timing_json(const DetectTiming& timing) {
  nlohmann::ordered_json j;
  j["t_prop_ms"] = timing.t_prop_ms;
  j["mean_t_inf_ms"] = timing.mean_t_inf_ms;
  j["n_proposals"] = timing.n_proposals;
  j["total_ms"] = timing.total_ms;
  return j.dump();
}

double total_time(const TimingModel& m) { return m.t_prop_ms + m.avg_proposals * m.t_inf_ms; }

}  // namespace bitconv
