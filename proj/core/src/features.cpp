#include "nsod/features.hpp"

#include "nsod/io.hpp"
#include "nsod/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace nsod {

void FeaturizerConfig::validate() const {
  if (grid < 1 || grid > 8)
    throw ValidationError("featurizer: grid must be in [1,8]");
  if (color_bins < 2 || color_bins > 32)
    throw ValidationError("featurizer: color_bins must be in [2,32]");
  if (orientation_bins < 2 || orientation_bins > 36)
    throw ValidationError("featurizer: orientation_bins must be in [2,36]");
  if (patch < 8 || patch % grid != 0)
    throw ValidationError(
        "featurizer: patch must be >= 8 and divisible by grid");
}

Featurizer::Featurizer(FeaturizerConfig config) : config_(config) {
  config_.validate();
}

std::vector<float> Featurizer::describe(const ImageF& patch) const {
  const int g = config_.grid;
  const int cb = config_.color_bins;
  const int ob = config_.orientation_bins;
  const int cell_px = config_.patch / g;
  const int per_cell = 3 * cb + ob;
  std::vector<float> desc(static_cast<std::size_t>(g) * g * per_cell, 0.0f);

  // Color histograms, one per channel per cell.
  for (int y = 0; y < config_.patch; ++y) {
    const int cy = y / cell_px;
    for (int x = 0; x < config_.patch; ++x) {
      const int cx = x / cell_px;
      float* cell = desc.data() + (static_cast<std::size_t>(cy) * g + cx) * per_cell;
      for (int c = 0; c < 3; ++c) {
        const float v = patch.at(x, y, c);
        int bin = static_cast<int>(v * cb / 256.0f);
        bin = std::clamp(bin, 0, cb - 1);
        cell[c * cb + bin] += 1.0f;
      }
    }
  }
  // Each channel histogram sums to 1 within its cell.
  const float inv_cell_count = 1.0f / static_cast<float>(cell_px * cell_px);
  for (int cell = 0; cell < g * g; ++cell) {
    float* base = desc.data() + static_cast<std::size_t>(cell) * per_cell;
    for (int i = 0; i < 3 * cb; ++i) base[i] *= inv_cell_count;
  }

  // Gradient orientation histograms over luma, magnitude-weighted.
  std::vector<float> luma(static_cast<std::size_t>(config_.patch) *
                          config_.patch);
  for (int y = 0; y < config_.patch; ++y) {
    for (int x = 0; x < config_.patch; ++x) {
      luma[static_cast<std::size_t>(y) * config_.patch + x] =
          0.299f * patch.at(x, y, 0) + 0.587f * patch.at(x, y, 1) +
          0.114f * patch.at(x, y, 2);
    }
  }
  auto lum = [&](int x, int y) {
    x = std::clamp(x, 0, config_.patch - 1);
    y = std::clamp(y, 0, config_.patch - 1);
    return luma[static_cast<std::size_t>(y) * config_.patch + x];
  };
  std::vector<double> orient_sums(static_cast<std::size_t>(g) * g, 0.0);
  for (int y = 0; y < config_.patch; ++y) {
    const int cy = y / cell_px;
    for (int x = 0; x < config_.patch; ++x) {
      const int cx = x / cell_px;
      const float gx = 0.5f * (lum(x + 1, y) - lum(x - 1, y));
      const float gy = 0.5f * (lum(x, y + 1) - lum(x, y - 1));
      const float mag = std::sqrt(gx * gx + gy * gy);
      if (mag <= 1e-6f) continue;
      const float angle = std::atan2(gy, gx);  // (-pi, pi]
      int bin = static_cast<int>((angle + std::numbers::pi_v<float>) *
                                 static_cast<float>(ob) /
                                 (2.0f * std::numbers::pi_v<float>));
      bin = std::clamp(bin, 0, ob - 1);
      const std::size_t cell = static_cast<std::size_t>(cy) * g + cx;
      desc[cell * per_cell + 3 * cb + bin] += mag;
      orient_sums[cell] += mag;
    }
  }
  for (int cell = 0; cell < g * g; ++cell) {
    if (orient_sums[cell] <= 0.0) continue;
    const float inv = static_cast<float>(1.0 / orient_sums[cell]);
    float* base =
        desc.data() + static_cast<std::size_t>(cell) * per_cell + 3 * cb;
    for (int i = 0; i < ob; ++i) base[i] *= inv;
  }

  // Whole-vector L2 normalization. The color block guarantees a non-zero
  // norm even for a constant patch.
  double norm2 = 0.0;
  for (float v : desc) norm2 += static_cast<double>(v) * v;
  const float inv_norm = static_cast<float>(1.0 / std::sqrt(norm2));
  for (float& v : desc) v *= inv_norm;
  return desc;
}

std::vector<float> Featurizer::extract_global(const Image& image) const {
  if (image.width <= 0 || image.height <= 0)
    throw ValidationError("extract_global: empty image");
  return extract_region(image, Box{0, 0, image.width, image.height});
}

std::vector<float> Featurizer::extract_region(const Image& image,
                                              const Box& box) const {
  if (!box.valid())
    throw ValidationError("extract_region: degenerate box");
  if (box.x2 > image.width || box.y2 > image.height)
    throw ValidationError("extract_region: box exceeds image bounds");
  const Image patch = crop(image, box);
  return describe(resize_bilinear(patch, config_.patch, config_.patch));
}

double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size())
    throw ValidationError("cosine: dimension mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  if (nu == 0.0 || nv == 0.0)
    throw ValidationError("undefined cosine: zero vector");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

void SupportBank::validate() const {
  if (classes < 2 || k < 1)
    throw ValidationError("support bank: needs >= 2 classes and k >= 1");
  if (rows.rows != classes * k || rows.cols < 1)
    throw ValidationError("support bank: row count does not match classes*k");
  for (int r = 0; r < rows.rows; ++r) {
    double norm2 = 0.0;
    for (float v : rows.row(r)) norm2 += static_cast<double>(v) * v;
    if (std::abs(norm2 - 1.0) > 1e-4)
      throw ValidationError("support bank: row " + std::to_string(r) +
                            " is not L2-normalized");
  }
}

namespace {

void l2_normalize_row(std::span<float> row) {
  double norm2 = 0.0;
  for (float v : row) norm2 += static_cast<double>(v) * v;
  if (norm2 == 0.0)
    throw ValidationError("support bank: zero feature vector");
  const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
  for (float& v : row) v *= inv;
}

}  // namespace

SupportBank build_support_bank(int classes, const MatF& features,
                               const std::vector<int>& labels) {
  if (features.rows != static_cast<int>(labels.size()))
    throw ValidationError("support bank: features/labels size mismatch");
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < features.rows; ++i) {
    const int j = labels[i];
    if (j < 0 || j >= classes)
      throw ValidationError("support bank: label out of range");
    by_class[j].push_back(i);
  }
  for (int j = 0; j < classes; ++j) {
    if (!by_class.count(j))
      throw ValidationError("support bank: class " + std::to_string(j) +
                            " has zero support images");
  }
  const int k = static_cast<int>(by_class.begin()->second.size());
  for (const auto& [j, rows] : by_class) {
    if (static_cast<int>(rows.size()) != k)
      throw ValidationError(
          "support bank: unequal k across classes (class " +
          std::to_string(j) + " has " + std::to_string(rows.size()) +
          ", class " + std::to_string(by_class.begin()->first) + " has " +
          std::to_string(k) + ")");
  }

  SupportBank bank;
  bank.classes = classes;
  bank.k = k;
  bank.rows = MatF(classes * k, features.cols);
  for (int j = 0; j < classes; ++j) {
    for (int i = 0; i < k; ++i) {
      const auto src = features.row(by_class.at(j)[i]);
      auto dst = bank.rows.row(j * k + i);
      std::copy(src.begin(), src.end(), dst.begin());
      l2_normalize_row(dst);
    }
  }
  return bank;
}

SupportBank build_support_bank(const Featurizer& featurizer,
                               const ClassCatalog& catalog,
                               const std::vector<ImageRecord>& support_records,
                               const std::string& images_root,
                               int workers) {
  if (support_records.empty())
    throw ValidationError("support bank: no support records");
  MatF features(static_cast<int>(support_records.size()), featurizer.dim());
  std::vector<int> labels(support_records.size());
  parallel_for(support_records.size(), [&](std::size_t i) {
    const auto& rec = support_records[i];
    if (rec.split != Split::Support || !rec.support_label.has_value())
      throw ValidationError("support bank: record '" + rec.image_id +
                            "' is not a labeled support record");
    const Image img = read_png(images_root + "/" + rec.path);
    const auto f = featurizer.extract_global(img);
    std::copy(f.begin(), f.end(), features.row(static_cast<int>(i)).begin());
    labels[i] = *rec.support_label;
  }, workers);
  return build_support_bank(catalog.size(), features, labels);
}

void save_support_bank(const std::string& path, const SupportBank& bank) {
  std::string out;
  out.append("NSODBANK", 8);
  detail::append_u32le(out, static_cast<std::uint32_t>(bank.classes));
  detail::append_u32le(out, static_cast<std::uint32_t>(bank.k));
  detail::append_u32le(out, static_cast<std::uint32_t>(bank.rows.cols));
  for (float v : bank.rows.data) detail::append_f32le(out, v);
  detail::write_file_bytes(path, out);
}

SupportBank load_support_bank(const std::string& path) {
  const std::string in = detail::read_file_bytes(path);
  std::size_t pos = 0;
  detail::expect_magic(in, pos, "NSODBANK", path, "support bank file");
  SupportBank bank;
  bank.classes = static_cast<int>(detail::take_u32le(in, pos, path));
  bank.k = static_cast<int>(detail::take_u32le(in, pos, path));
  const int dim = static_cast<int>(detail::take_u32le(in, pos, path));
  if (bank.classes < 2 || bank.k < 1 || dim < 1)
    throw ValidationError(path + ": degenerate support bank header");
  bank.rows = MatF(bank.classes * bank.k, dim);
  for (float& v : bank.rows.data) v = detail::take_f32le(in, pos, path);
  if (pos != in.size())
    throw ValidationError(path + ": trailing bytes after bank payload");
  return bank;
}

}  // namespace nsod
