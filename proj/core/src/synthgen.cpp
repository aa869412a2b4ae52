#include "nsod/synthgen.hpp"

#include "nsod/geometry.hpp"
#include "nsod/io.hpp"
#include "nsod/parallel.hpp"
#include "nsod/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace nsod {

namespace {

enum class Shape { Triangle, Square, Circle, Diamond, Cross, Ring, HBar };

struct Rgb {
  std::uint8_t r, g, b;
};

struct Combo {
  Shape shape;
  Rgb color;
  std::string name;
};

// Channel values sit near histogram-bin centers so moderate pixel noise
// rarely moves a color across a bin boundary.
const Rgb kRed{224, 32, 32};
const Rgb kBlue{32, 32, 224};
const Rgb kGreen{32, 224, 32};
const Rgb kYellow{224, 224, 32};
const Rgb kMagenta{224, 32, 224};
const Rgb kCyan{32, 224, 224};
const Rgb kGray{96, 96, 96};
const Rgb kOrange{224, 128, 32};

std::vector<Combo> known_combos() {
  return {
      {Shape::Triangle, kRed, "red-triangle"},
      {Shape::Square, kBlue, "blue-square"},
      {Shape::Circle, kGreen, "green-circle"},
      {Shape::Diamond, kYellow, "yellow-diamond"},
      {Shape::Cross, kMagenta, "magenta-cross"},
      {Shape::Ring, kCyan, "cyan-ring"},
      {Shape::HBar, kOrange, "orange-hbar"},
      {Shape::Triangle, kCyan, "cyan-triangle"},
      {Shape::Square, kOrange, "orange-square"},
      {Shape::Circle, kMagenta, "magenta-circle"},
  };
}

// Distractor content: shape/color pairs disjoint from every known class.
// Up to five known classes, shapes and colors are both unused by the known
// set; beyond that, gray (never a known color) keeps the pairs disjoint.
std::vector<Combo> unknown_combos(int known_classes) {
  if (known_classes <= 5) {
    return {
        {Shape::Ring, kGray, "unknown-gray-ring"},
        {Shape::HBar, kGray, "unknown-gray-hbar"},
        {Shape::Ring, kCyan, "unknown-cyan-ring"},
        {Shape::HBar, kCyan, "unknown-cyan-hbar"},
    };
  }
  return {
      {Shape::Ring, kGray, "unknown-gray-ring"},
      {Shape::HBar, kGray, "unknown-gray-hbar"},
      {Shape::Diamond, kGray, "unknown-gray-diamond"},
  };
}

bool inside_shape(Shape s, double cx, double cy, double half, double px,
                  double py) {
  const double dx = px - cx;
  const double dy = py - cy;
  switch (s) {
    case Shape::Triangle: {
      // Apex at the top center, base along the bottom edge.
      const double t = (dy + half) / (2.0 * half);  // 0 at apex row
      return dy >= -half && dy <= half && std::abs(dx) <= t * half;
    }
    case Shape::Square:
      return std::abs(dx) <= half && std::abs(dy) <= half;
    case Shape::Circle:
      return dx * dx + dy * dy <= half * half;
    case Shape::Diamond:
      return std::abs(dx) + std::abs(dy) <= half;
    case Shape::Cross:
      return (std::abs(dx) <= half / 3.0 && std::abs(dy) <= half) ||
             (std::abs(dy) <= half / 3.0 && std::abs(dx) <= half);
    case Shape::Ring: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= half * half && d2 >= (half * 0.55) * (half * 0.55);
    }
    case Shape::HBar:
      return std::abs(dx) <= half && std::abs(dy) <= half / 3.0;
  }
  return false;
}

void draw_instance(Image& img, Shape shape, Rgb color, const Box& box) {
  const double cx = 0.5 * (box.x1 + box.x2);
  const double cy = 0.5 * (box.y1 + box.y2);
  const double half = 0.5 * static_cast<double>(box.x2 - box.x1);
  for (int y = box.y1; y < box.y2; ++y) {
    for (int x = box.x1; x < box.x2; ++x) {
      if (inside_shape(shape, cx, cy, half, x + 0.5, y + 0.5)) {
        img.at(x, y, 0) = color.r;
        img.at(x, y, 1) = color.g;
        img.at(x, y, 2) = color.b;
      }
    }
  }
}

void add_noise(Image& img, double level, Rng& rng) {
  if (level <= 0.0) return;
  const double amp = level * 127.0;
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    const double v = img.rgb[i] + rng.uniform(-amp, amp);
    img.rgb[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
}

// Instances may occlude each other up to this fraction of the smaller box.
constexpr double kMaxOverlap = 0.30;

bool placement_ok(const Box& candidate, const std::vector<Box>& placed) {
  for (const auto& other : placed) {
    const double inter = static_cast<double>(intersection_area(candidate, other));
    const double smaller =
        static_cast<double>(std::min(candidate.area(), other.area()));
    if (inter / smaller > kMaxOverlap) return false;
  }
  return true;
}

struct StyleParams {
  int min_size;
  int max_size;
  std::uint8_t bg;        // background base intensity
  double noise;           // background noise amplitude
};

StyleParams cluttered_style(const CorpusSpec& spec) {
  const int c = std::min(spec.canvas_width, spec.canvas_height);
  StyleParams p;
  p.min_size = std::max(12, static_cast<int>(std::lround(c * 0.22)));
  p.max_size = std::max(p.min_size + 2, static_cast<int>(std::lround(c * 0.41)));
  p.bg = 128;
  p.noise = spec.noise_level;
  return p;
}

/// Draws one image with `count` instances of combos chosen by `pick`.
/// Throws when placement cannot satisfy the overlap constraint.
SynthImage render_image(const CorpusSpec& spec, const std::string& id,
                        Split split, bool distractor, int count,
                        const std::vector<Combo>& pool,
                        const StyleParams& style, Rng& rng,
                        bool record_gt) {
  SynthImage out;
  out.image = Image(spec.canvas_width, spec.canvas_height, style.bg);
  out.record.image_id = id;
  out.record.path = "images/" + id + ".png";
  out.record.width = spec.canvas_width;
  out.record.height = spec.canvas_height;
  out.record.split = split;
  out.record.is_distractor = distractor;

  std::vector<Box> placed;
  for (int i = 0; i < count; ++i) {
    const auto& combo = pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
    Box box;
    bool ok = false;
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int size = static_cast<int>(
          rng.uniform_int(style.min_size, style.max_size));
      const int x1 = static_cast<int>(
          rng.uniform_int(0, spec.canvas_width - size));
      const int y1 = static_cast<int>(
          rng.uniform_int(0, spec.canvas_height - size));
      box = Box{x1, y1, x1 + size, y1 + size};
      if (placement_ok(box, placed)) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ValidationError(
          "canvas too small to place instance " + std::to_string(i + 1) +
          " of " + std::to_string(count) + " in image '" + id + "'");
    }
    placed.push_back(box);
    draw_instance(out.image, combo.shape, combo.color, box);
    if (record_gt) {
      const int cls = static_cast<int>(&combo - pool.data());
      out.gt.push_back({box, cls});
    }
  }
  add_noise(out.image, style.noise, rng);
  return out;
}

std::string zero_pad(int n, int width) {
  std::string s = std::to_string(n);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

void CorpusSpec::validate() const {
  if (classes < 2) throw ValidationError("corpus spec: classes must be >= 2");
  if (classes > static_cast<int>(known_combos().size()))
    throw ValidationError("corpus spec: at most " +
                          std::to_string(known_combos().size()) +
                          " classes are supported");
  if (canvas_width < 64 || canvas_height < 64)
    throw ValidationError("corpus spec: canvas must be at least 64 pixels");
  if (instances_min < 1 || instances_max > 5 || instances_min > instances_max)
    throw ValidationError(
        "corpus spec: instances range must satisfy 1 <= min <= max <= 5");
  if (k_support < 1) throw ValidationError("corpus spec: k_support must be >= 1");
  if (n_unlabeled < 0 || n_test < 0 || distractor_count < 0)
    throw ValidationError("corpus spec: negative image count");
  if (noise_level < 0.0 || noise_level > 1.0)
    throw ValidationError("corpus spec: noise_level must be in [0,1]");
}

void ProposalScheme::validate(int canvas_width, int canvas_height) const {
  if (scales.empty()) throw ValidationError("proposal scheme: no scales");
  for (int s : scales) {
    if (s < 1 || s >= std::min(canvas_width, canvas_height))
      throw ValidationError("proposal scheme: scale " + std::to_string(s) +
                            " does not fit the canvas");
  }
  if (stride < 1) throw ValidationError("proposal scheme: stride must be >= 1");
  if (random_extra < 0)
    throw ValidationError("proposal scheme: negative random_extra");
}

ClassCatalog shapes_catalog(int classes) {
  const auto combos = known_combos();
  if (classes < 2 || classes > static_cast<int>(combos.size()))
    throw ValidationError("shapes catalog supports 2.." +
                          std::to_string(combos.size()) + " classes");
  ClassCatalog catalog;
  for (int j = 0; j < classes; ++j) catalog.names.push_back(combos[j].name);
  return catalog;
}

std::vector<SynthImage> generate_support(const CorpusSpec& spec) {
  spec.validate();
  const auto combos = known_combos();
  std::vector<SynthImage> out;
  out.resize(static_cast<std::size_t>(spec.classes) * spec.k_support);
  // Clean style: flat near-white background, one large centered instance.
  const int canvas = std::min(spec.canvas_width, spec.canvas_height);
  const int size = static_cast<int>(std::lround(canvas * 0.56));
  parallel_for(out.size(), [&](std::size_t idx) {
    const int j = static_cast<int>(idx) / spec.k_support;
    const int i = static_cast<int>(idx) % spec.k_support;
    const std::string id =
        "support_" + zero_pad(j, 2) + "_" + zero_pad(i, 3);
    Rng rng(derive_seed(spec.seed, "support", idx));
    SynthImage img;
    img.image = Image(spec.canvas_width, spec.canvas_height, 232);
    img.record.image_id = id;
    img.record.path = "images/" + id + ".png";
    img.record.width = spec.canvas_width;
    img.record.height = spec.canvas_height;
    img.record.split = Split::Support;
    img.record.support_label = j;
    // Small centering jitter keeps supports from being k identical files.
    const int jx = static_cast<int>(rng.uniform_int(-3, 3));
    const int jy = static_cast<int>(rng.uniform_int(-3, 3));
    const int x1 = (spec.canvas_width - size) / 2 + jx;
    const int y1 = (spec.canvas_height - size) / 2 + jy;
    const Box box{x1, y1, x1 + size, y1 + size};
    draw_instance(img.image, combos[j].shape, combos[j].color, box);
    img.gt.push_back({box, j});
    out[idx] = std::move(img);
  });
  return out;
}

std::vector<SynthImage> generate_main(const CorpusSpec& spec) {
  spec.validate();
  const auto known = known_combos();
  const std::vector<Combo> pool(known.begin(), known.begin() + spec.classes);
  const auto unknown = unknown_combos(spec.classes);
  const StyleParams style = cluttered_style(spec);

  struct Slot {
    std::string id;
    Split split;
    bool distractor;
  };
  std::vector<Slot> slots;
  for (int i = 0; i < spec.n_unlabeled; ++i)
    slots.push_back({"unlabeled_" + zero_pad(i, 4), Split::Unlabeled, false});
  for (int i = 0; i < spec.distractor_count; ++i)
    slots.push_back({"distractor_" + zero_pad(i, 4), Split::Unlabeled, true});
  for (int i = 0; i < spec.n_test; ++i)
    slots.push_back({"test_" + zero_pad(i, 4), Split::Test, false});

  std::vector<SynthImage> out(slots.size());
  parallel_for(slots.size(), [&](std::size_t idx) {
    const Slot& slot = slots[idx];
    Rng rng(derive_seed(spec.seed, "main", fnv1a64(slot.id)));
    const int count = static_cast<int>(
        rng.uniform_int(spec.instances_min, spec.instances_max));
    out[idx] = render_image(spec, slot.id, slot.split, slot.distractor, count,
                            slot.distractor ? unknown : pool, style, rng,
                            /*record_gt=*/!slot.distractor);
  });
  return out;
}

std::vector<Box> generate_proposals(int width, int height,
                                    const ProposalScheme& scheme) {
  scheme.validate(width, height);
  std::vector<Box> boxes;
  for (int s : scheme.scales) {
    for (int y = 0; y + s <= height; y += scheme.stride) {
      for (int x = 0; x + s <= width; x += scheme.stride) {
        boxes.push_back({x, y, x + s, y + s});
      }
    }
  }
  if (scheme.random_extra > 0) {
    const int min_scale = *std::min_element(scheme.scales.begin(),
                                            scheme.scales.end());
    const int max_scale = *std::max_element(scheme.scales.begin(),
                                            scheme.scales.end());
    // Jitter stream depends only on (scheme, image size): proposal
    // generation stays a pure function of its declared inputs.
    Rng rng(derive_seed(scheme.seed, "proposal-jitter",
                        (static_cast<std::uint64_t>(width) << 32) |
                            static_cast<std::uint64_t>(height)));
    for (int i = 0; i < scheme.random_extra; ++i) {
      const int w = static_cast<int>(rng.uniform_int(min_scale, max_scale));
      const int h = static_cast<int>(rng.uniform_int(min_scale, max_scale));
      const int x1 = static_cast<int>(rng.uniform_int(0, width - w));
      const int y1 = static_cast<int>(rng.uniform_int(0, height - h));
      boxes.push_back({x1, y1, x1 + w, y1 + h});
    }
  }
  if (boxes.empty())
    throw ValidationError("proposal scheme produced zero boxes");
  return boxes;
}

Manifest generate_dataset(const CorpusSpec& spec, const ProposalScheme& scheme,
                          const std::string& out_dir, int workers) {
  spec.validate();
  scheme.validate(spec.canvas_width, spec.canvas_height);
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");

  auto support = generate_support(spec);
  auto main_images = generate_main(spec);

  Manifest manifest;
  manifest.classes = shapes_catalog(spec.classes);

  std::vector<const SynthImage*> all;
  for (const auto& s : support) all.push_back(&s);
  for (const auto& m : main_images) all.push_back(&m);

  std::vector<GroundTruth> gt;
  std::vector<ProposalSet> proposals;
  for (const auto* img : all) {
    manifest.images.push_back(img->record);
    gt.push_back({img->record.image_id, img->gt});
    proposals.push_back({img->record.image_id,
                         generate_proposals(img->record.width,
                                            img->record.height, scheme)});
  }

  parallel_for(all.size(), [&](std::size_t i) {
    write_png((fs::path(out_dir) / all[i]->record.path).string(),
              all[i]->image);
  }, workers);

  write_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
  write_ground_truth((fs::path(out_dir) / "gt.jsonl").string(), gt);
  write_proposals((fs::path(out_dir) / "proposals.jsonl").string(), proposals);
  return manifest;
}

}  // namespace nsod
