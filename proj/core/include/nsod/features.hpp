#pragma once

#include "nsod/image.hpp"
#include "nsod/matrix.hpp"
#include "nsod/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace nsod {

/// Descriptor layout. Per spatial grid cell: one histogram per color
/// channel plus one gradient-orientation histogram, concatenated and
/// L2-normalized as a whole.
struct FeaturizerConfig {
  int grid = 3;              // grid x grid spatial cells
  int color_bins = 4;        // bins per color channel
  int orientation_bins = 8;  // signed gradient orientation bins
  int patch = 32;            // canonical patch side in pixels

  int dim() const { return grid * grid * (3 * color_bins + orientation_bins); }
  void validate() const;

  friend bool operator==(const FeaturizerConfig&,
                         const FeaturizerConfig&) = default;
};

/// Deterministic hand-crafted feature extractor. Stateless and shareable;
/// stands in for a pretrained backbone behind the same interface.
class Featurizer {
 public:
  explicit Featurizer(FeaturizerConfig config = {});

  const FeaturizerConfig& config() const { return config_; }
  int dim() const { return config_.dim(); }

  /// Descriptor of the whole image, resampled to the canonical patch.
  std::vector<float> extract_global(const Image& image) const;

  /// Descriptor of the cropped window, resampled to the canonical patch.
  /// With the full-image box this equals extract_global exactly.
  std::vector<float> extract_region(const Image& image, const Box& box) const;

 private:
  std::vector<float> describe(const ImageF& patch) const;

  FeaturizerConfig config_;
};

/// Cosine similarity in [-1, 1]. Throws on a zero vector.
double cosine(std::span<const float> u, std::span<const float> v);

/// Global features of the k support images per class, rows L2-normalized,
/// stored class-major (class j occupies rows [j*k, (j+1)*k)).
struct SupportBank {
  int classes = 0;
  int k = 0;
  MatF rows;

  std::span<const float> row(int class_index, int support_index) const {
    return rows.row(class_index * k + support_index);
  }
  void validate() const;
};

/// Builds the bank from support records. Every class must contribute the
/// same number k of images; images are loaded relative to images_root.
SupportBank build_support_bank(const Featurizer& featurizer,
                               const ClassCatalog& catalog,
                               const std::vector<ImageRecord>& support_records,
                               const std::string& images_root,
                               int workers = 0);

/// Bank built from precomputed global features (labels[i] pairs with
/// features row i). Same validation as the image-loading overload.
SupportBank build_support_bank(int classes, const MatF& features,
                               const std::vector<int>& labels);

/// Binary codec: magic "NSODBANK", u32 classes, u32 k, u32 dim, then
/// classes*k rows of float32, class-major.
void save_support_bank(const std::string& path, const SupportBank& bank);
SupportBank load_support_bank(const std::string& path);

}  // namespace nsod
