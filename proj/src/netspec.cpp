#include "bitconv/netspec.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "bitconv/error.hpp"

namespace bitconv {

namespace {

struct KindEntry {
  std::string_view name;
  LayerKind kind;
};

constexpr KindEntry kKinds[] = {
    {"conv", LayerKind::Conv},       {"fire", LayerKind::Fire},
    {"maxpool", LayerKind::MaxPool}, {"prelu", LayerKind::PRelu},
    {"relu", LayerKind::Relu},       {"fc", LayerKind::FullyConnected},
    {"softmax", LayerKind::Softmax},
};

std::vector<std::string_view> split_words(std::string_view line) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) words.push_back(line.substr(i, j - i));
    i = j;
  }
  return words;
}

std::optional<int> to_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<float> to_float(std::string_view s) {
  float v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string format_float(float v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Options of one layer line: key=value pairs plus bare flags.
class LineOptions {
 public:
  LineOptions(int line, std::span<const std::string_view> words) : line_(line) {
    for (std::string_view w : words) {
      const auto eq = w.find('=');
      if (eq == std::string_view::npos) {
        if (!flags_.emplace(std::string(w), false).second) fail("duplicate flag '" + std::string(w) + "'");
      } else {
        std::string key(w.substr(0, eq));
        if (!values_.emplace(key, std::make_pair(std::string(w.substr(eq + 1)), false)).second) {
          fail("duplicate option '" + key + "'");
        }
      }
    }
  }

  int integer(const std::string& key, std::optional<int> fallback = std::nullopt) {
    auto it = values_.find(key);
    if (it == values_.end()) {
      if (!fallback) fail("missing hyperparameter '" + key + "'");
      return *fallback;
    }
    it->second.second = true;
    auto v = to_int(it->second.first);
    if (!v) fail("option '" + key + "' expects an integer, got '" + it->second.first + "'");
    return *v;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  float real(const std::string& key, float fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    it->second.second = true;
    auto v = to_float(it->second.first);
    if (!v) fail("option '" + key + "' expects a number, got '" + it->second.first + "'");
    return *v;
  }

  bool flag(const std::string& name) {
    auto it = flags_.find(name);
    if (it == flags_.end()) return false;
    it->second = true;
    return true;
  }

  /// Rejects anything the layer did not consume.
  void finish(std::string_view kind) const {
    for (const auto& [key, v] : values_) {
      if (!v.second) fail("unknown option '" + key + "' for " + std::string(kind));
    }
    for (const auto& [name, used] : flags_) {
      if (!used) fail("unknown flag '" + name + "' for " + std::string(kind));
    }
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_, msg); }

 private:
  int line_;
  std::map<std::string, std::pair<std::string, bool>> values_;
  std::map<std::string, bool> flags_;
};

void require_positive(const LineOptions& opts, std::string_view what, int v) {
  if (v < 1) opts.fail(std::string(what) + " must be >= 1, got " + std::to_string(v));
}

LayerSpec parse_layer(int line, std::string_view kind_word, std::span<const std::string_view> rest) {
  LineOptions opts(line, rest);
  LayerSpec layer;
  layer.line = line;

  const KindEntry* entry = nullptr;
  for (const auto& k : kKinds) {
    if (k.name == kind_word) entry = &k;
  }
  if (!entry) opts.fail("unknown layer kind '" + std::string(kind_word) + "'");
  layer.kind = entry->kind;

  switch (layer.kind) {
    case LayerKind::Conv:
      layer.out = opts.integer("out");
      layer.kernel = opts.integer("k");
      layer.stride = opts.integer("s", 1);
      layer.pad = opts.integer("pad", layer.kernel / 2);
      require_positive(opts, "out", layer.out);
      if (layer.kernel != 1 && layer.kernel != 3 && layer.kernel != 5) {
        opts.fail("conv kernel must be 1, 3 or 5, got " + std::to_string(layer.kernel));
      }
      require_positive(opts, "s", layer.stride);
      if (layer.pad < 0) opts.fail("pad must be >= 0");
      break;
    case LayerKind::Fire:
      layer.squeeze = opts.integer("s");
      layer.expand1 = opts.integer("e1");
      layer.expand3 = opts.integer("e3");
      require_positive(opts, "s", layer.squeeze);
      require_positive(opts, "e1", layer.expand1);
      require_positive(opts, "e3", layer.expand3);
      if (opts.has("e5")) {
        layer.kind = LayerKind::ExtendedFire;
        layer.expand5 = opts.integer("e5");
        require_positive(opts, "e5", layer.expand5);
      }
      layer.fire_prelu = opts.flag("prelu");
      break;
    case LayerKind::MaxPool:
      layer.kernel = opts.integer("k");
      layer.stride = opts.integer("s");
      require_positive(opts, "k", layer.kernel);
      require_positive(opts, "s", layer.stride);
      break;
    case LayerKind::PRelu:
      layer.slope_init = opts.real("init", 0.25f);
      break;
    case LayerKind::FullyConnected:
      layer.out = opts.integer("out");
      require_positive(opts, "out", layer.out);
      break;
    case LayerKind::Relu:
    case LayerKind::Softmax:
    case LayerKind::ExtendedFire:
      break;
  }

  const bool binary = opts.flag("binary");
  const bool noscale = opts.flag("noscale");
  if (binary && !layer.conv_bearing()) opts.fail("binary flag is only valid on conv and fire layers");
  if (noscale && !binary) opts.fail("noscale requires binary");
  layer.binary = binary;
  layer.input_scaling = !noscale;
  opts.finish(kind_word);
  return layer;
}

}  // namespace

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Fire: return "fire";
    case LayerKind::ExtendedFire: return "extended_fire";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::PRelu: return "prelu";
    case LayerKind::Relu: return "relu";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

bool LayerSpec::operator==(const LayerSpec& o) const {
  return kind == o.kind && out == o.out && kernel == o.kernel && stride == o.stride && pad == o.pad &&
         squeeze == o.squeeze && expand1 == o.expand1 && expand3 == o.expand3 &&
         expand5 == o.expand5 && fire_prelu == o.fire_prelu && slope_init == o.slope_init &&
         binary == o.binary && input_scaling == o.input_scaling;
}

std::string layer_label(const NetworkSpec& spec, std::size_t index) {
  std::string s = "layer " + std::to_string(index) + " (" + std::string(kind_name(spec.layers[index].kind));
  if (spec.layers[index].line > 0) s += ", line " + std::to_string(spec.layers[index].line);
  return s + ")";
}

NetworkSpec parse_netspec(std::string_view text) {
  NetworkSpec spec;
  bool have_input = false;
  bool have_classes = false;
  int line_no = 0;
  int last_line = 0;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    // Semicolons separate statements on one line.
    std::size_t stmt_pos = 0;
    while (stmt_pos <= line.size()) {
      std::size_t stmt_end = line.find(';', stmt_pos);
      if (stmt_end == std::string_view::npos) stmt_end = line.size();
      const auto words = split_words(line.substr(stmt_pos, stmt_end - stmt_pos));
      stmt_pos = stmt_end + 1;
      if (words.empty()) continue;
      last_line = line_no;

      if (words[0] == "input") {
        if (have_input) throw ParseError(line_no, "duplicate input declaration");
        if (!spec.layers.empty()) throw ParseError(line_no, "input must precede all layers");
        if (words.size() != 2) throw ParseError(line_no, "expected 'input CxHxW'");
        std::string_view dims = words[1];
        int parsed[3];
        for (int d = 0; d < 3; ++d) {
          const auto x = dims.find('x');
          if ((d < 2) == (x == std::string_view::npos)) throw ParseError(line_no, "expected 'input CxHxW'");
          auto v = to_int(d < 2 ? dims.substr(0, x) : dims);
          if (!v || *v < 1) throw ParseError(line_no, "input extents must be positive integers");
          parsed[d] = *v;
          if (d < 2) dims = dims.substr(x + 1);
        }
        spec.input = {parsed[0], parsed[1], parsed[2]};
        have_input = true;
      } else if (words[0] == "classes") {
        if (have_classes) throw ParseError(line_no, "duplicate classes declaration");
        auto v = words.size() == 2 ? to_int(words[1]) : std::nullopt;
        if (!v || *v < 1) throw ParseError(line_no, "expected 'classes N' with N >= 1");
        spec.classes = *v;
        have_classes = true;
      } else {
        if (!have_input) throw ParseError(line_no, "missing 'input CxHxW' before first layer");
        spec.layers.push_back(parse_layer(line_no, words[0], std::span(words).subspan(1)));
      }
    }
    if (end == text.size()) break;
  }

  if (!have_input) throw ParseError(std::max(last_line, 1), "missing 'input CxHxW'");
  if (spec.layers.empty()) throw ParseError(std::max(last_line, 1), "network has no layers");

  if (!have_classes) {
    // Without an explicit count the final layer's output size defines it.
    NetworkSpec probe = spec;
    probe.classes = -1;
    spec.classes = static_cast<int>(propagate_shapes(probe).back().size());
  }
  validate(spec);
  return spec;
}

NetworkSpec load_netspec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read netspec '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_netspec(ss.str());
}

std::string to_text(const NetworkSpec& spec) {
  std::ostringstream os;
  os << "input " << spec.input.c << 'x' << spec.input.h << 'x' << spec.input.w << '\n';
  os << "classes " << spec.classes << '\n';
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        os << "conv out=" << l.out << " k=" << l.kernel << " s=" << l.stride << " pad=" << l.pad;
        break;
      case LayerKind::Fire:
      case LayerKind::ExtendedFire:
        os << "fire s=" << l.squeeze << " e1=" << l.expand1 << " e3=" << l.expand3;
        if (l.kind == LayerKind::ExtendedFire) os << " e5=" << l.expand5;
        if (l.fire_prelu) os << " prelu";
        break;
      case LayerKind::MaxPool:
        os << "maxpool k=" << l.kernel << " s=" << l.stride;
        break;
      case LayerKind::PRelu:
        os << "prelu init=" << format_float(l.slope_init);
        break;
      case LayerKind::Relu:
        os << "relu";
        break;
      case LayerKind::FullyConnected:
        os << "fc out=" << l.out;
        break;
      case LayerKind::Softmax:
        os << "softmax";
        break;
    }
    if (l.binary) os << " binary";
    if (l.binary && !l.input_scaling) os << " noscale";
    os << '\n';
  }
  return os.str();
}

std::vector<ConvGeometry> layer_convs(const LayerSpec& l, int in_channels) {
  switch (l.kind) {
    case LayerKind::Conv:
      return {ConvGeometry{in_channels, l.out, l.kernel, l.stride, l.pad}};
    case LayerKind::Fire:
    case LayerKind::ExtendedFire: {
      std::vector<ConvGeometry> g{
          {in_channels, l.squeeze, 1, 1, 0},
          {l.squeeze, l.expand1, 1, 1, 0},
          {l.squeeze, l.expand3, 3, 1, 1},
      };
      if (l.kind == LayerKind::ExtendedFire) g.push_back({l.squeeze, l.expand5, 5, 1, 2});
      return g;
    }
    default:
      return {};
  }
}

std::vector<ActShape> propagate_shapes(const NetworkSpec& spec) {
  if (spec.layers.empty()) throw ShapeError("network has no layers");
  std::vector<ActShape> shapes;
  shapes.reserve(spec.layers.size());
  ActShape cur = spec.input;

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    auto fail = [&](const std::string& msg) -> void {
      if (l.line > 0) throw ShapeError("line " + std::to_string(l.line) + ": " + layer_label(spec, i) + ": " + msg);
      throw ShapeError(layer_label(spec, i) + ": " + msg);
    };
    try {
      switch (l.kind) {
        case LayerKind::Conv: {
          const ConvGeometry g{cur.c, l.out, l.kernel, l.stride, l.pad};
          cur = {l.out, g.output_extent(cur.h), g.output_extent(cur.w)};
          break;
        }
        case LayerKind::Fire:
        case LayerKind::ExtendedFire:
          cur.c = l.expand1 + l.expand3 + (l.kind == LayerKind::ExtendedFire ? l.expand5 : 0);
          break;
        case LayerKind::MaxPool: {
          if (l.kernel > cur.h || l.kernel > cur.w) {
            fail("pool window " + std::to_string(l.kernel) + " exceeds input " + std::to_string(cur.h) +
                 "x" + std::to_string(cur.w));
          }
          const ConvGeometry g{1, 1, l.kernel, l.stride, 0};
          cur = {cur.c, g.output_extent(cur.h), g.output_extent(cur.w)};
          break;
        }
        case LayerKind::FullyConnected:
          cur = {l.out, 1, 1};
          break;
        case LayerKind::Softmax:
          if (i + 1 != spec.layers.size()) fail("softmax must be the final layer");
          break;
        case LayerKind::PRelu:
        case LayerKind::Relu:
          break;
      }
    } catch (const ShapeError& e) {
      const std::string what = e.what();
      if (what.rfind("line ", 0) == 0 || what.rfind("layer ", 0) == 0) throw;
      fail(what);
    }
    shapes.push_back(cur);
  }

  if (spec.classes >= 0 && shapes.back().size() != static_cast<std::size_t>(spec.classes)) {
    const std::size_t last = spec.layers.size() - 1;
    const std::string msg = "network produces " + std::to_string(shapes.back().size()) +
                            " outputs but declares " + std::to_string(spec.classes) + " classes";
    if (spec.layers[last].line > 0) {
      throw ShapeError("line " + std::to_string(spec.layers[last].line) + ": " + msg);
    }
    throw ShapeError(msg);
  }
  return shapes;
}

void validate(const NetworkSpec& spec) {
  if (spec.input.c < 1 || spec.input.h < 1 || spec.input.w < 1) throw ShapeError("input extents must be positive");
  if (spec.classes < 1) throw ShapeError("class count must be positive");
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const auto bad = [&](const std::string& msg) { throw ShapeError(layer_label(spec, i) + ": " + msg); };
    if (l.binary && !l.conv_bearing()) bad("binary flag on a layer without convolutions");
    switch (l.kind) {
      case LayerKind::Conv:
        if (l.out < 1 || l.stride < 1 || l.pad < 0) bad("invalid conv hyperparameters");
        if (l.kernel != 1 && l.kernel != 3 && l.kernel != 5) bad("conv kernel must be 1, 3 or 5");
        break;
      case LayerKind::Fire:
        if (l.squeeze < 1 || l.expand1 < 1 || l.expand3 < 1) bad("fire filter counts must be >= 1");
        if (l.expand5 != 0) bad("plain fire carries no 5x5 branch");
        break;
      case LayerKind::ExtendedFire:
        if (l.squeeze < 1 || l.expand1 < 1 || l.expand3 < 1 || l.expand5 < 1) {
          bad("extended fire filter counts must be >= 1");
        }
        break;
      case LayerKind::MaxPool:
        if (l.kernel < 1 || l.stride < 1) bad("invalid pool window");
        break;
      case LayerKind::FullyConnected:
        if (l.out < 1) bad("fc out must be >= 1");
        break;
      default:
        break;
    }
  }
  propagate_shapes(spec);
}

std::vector<std::string> validate_binarization(const NetworkSpec& spec) {
  std::vector<std::size_t> conv_layers;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].conv_bearing()) conv_layers.push_back(i);
  }
  std::vector<std::string> warnings;
  if (conv_layers.empty()) return warnings;
  const std::size_t first = conv_layers.front();
  const std::size_t last = conv_layers.back();
  if (spec.layers[first].binary) {
    warnings.push_back(layer_label(spec, first) +
                       ": binary flag on the first convolution layer loses too much input information");
  }
  if (last != first && spec.layers[last].binary) {
    warnings.push_back(layer_label(spec, last) +
                       ": binary flag on the last convolution layer loses too much information");
  }
  return warnings;
}

std::vector<std::vector<Shape>> param_shapes(const NetworkSpec& spec) {
  const auto shapes = propagate_shapes(spec);
  std::vector<std::vector<Shape>> out(spec.layers.size());
  ActShape in = spec.input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    auto& p = out[i];
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::Fire:
      case LayerKind::ExtendedFire: {
        const auto convs = layer_convs(l, in.c);
        for (const auto& g : convs) p.push_back({g.out_channels, g.in_channels, g.kernel, g.kernel});
        for (const auto& g : convs) p.push_back({g.out_channels});
        if (l.is_fire() && l.fire_prelu) {
          p.push_back({l.squeeze});
          p.push_back({shapes[i].c});
        }
        break;
      }
      case LayerKind::PRelu:
        p.push_back({in.c});
        break;
      case LayerKind::FullyConnected:
        p.push_back({l.out, static_cast<int>(in.size())});
        p.push_back({l.out});
        break;
      default:
        break;
    }
    in = shapes[i];
  }
  return out;
}

std::int64_t count_params(const NetworkSpec& spec) {
  std::int64_t total = 0;
  for (const auto& layer : param_shapes(spec)) {
    for (const Shape& s : layer) total += static_cast<std::int64_t>(checked_element_count(s));
  }
  return total;
}

std::int64_t estimate_macs(const NetworkSpec& spec) {
  const auto shapes = propagate_shapes(spec);
  std::int64_t total = 0;
  ActShape in = spec.input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.conv_bearing()) {
      ActShape cur = in;
      for (const auto& g : layer_convs(l, in.c)) {
        // Fire branches all read the squeeze output at the input resolution.
        const std::int64_t oh = g.output_extent(cur.h), ow = g.output_extent(cur.w);
        total += static_cast<std::int64_t>(g.out_channels) * oh * ow * g.in_channels * g.kernel * g.kernel;
      }
    } else if (l.kind == LayerKind::FullyConnected) {
      total += static_cast<std::int64_t>(l.out) * static_cast<std::int64_t>(in.size());
    }
    in = shapes[i];
  }
  return total;
}

}  // namespace bitconv
