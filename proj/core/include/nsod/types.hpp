#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsod {

/// Raised for malformed inputs: bad config files, manifest violations,
/// dimension mismatches. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box with half-open pixel extents [x1,x2) x [y1,y2).
/// Area is (x2-x1)*(y2-y1); a valid box has x1 < x2 and y1 < y2.
struct Box {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  bool valid() const { return x1 < x2 && y1 < y2 && x1 >= 0 && y1 >= 0; }
  std::int64_t width() const { return x2 - x1; }
  std::int64_t height() const { return y2 - y1; }
  std::int64_t area() const { return width() * height(); }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Lexicographic (x1, y1, x2, y2). Used for deterministic tie-breaks.
bool box_less(const Box& a, const Box& b);

enum class Split { Support, Unlabeled, Test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

/// Ordered list of class names; all vectors and matrices index classes
/// by position in this catalog.
struct ClassCatalog {
  std::vector<std::string> names;

  int size() const { return static_cast<int>(names.size()); }
  int index_of(const std::string& name) const;  // -1 if absent
  void validate() const;
};

struct ImageRecord {
  std::string image_id;
  std::string path;  // relative to the manifest's directory
  int width = 0;
  int height = 0;
  Split split = Split::Unlabeled;
  std::optional<int> support_label;  // present iff split == Support
  bool is_distractor = false;        // evaluation bookkeeping only
};

struct ProposalSet {
  std::string image_id;
  std::vector<Box> boxes;
};

struct GtInstance {
  Box box;
  int class_index = 0;
};

/// Per-image ground truth. Lives in a file separate from the manifest;
/// training stages must never read it (see AccessLog).
struct GroundTruth {
  std::string image_id;
  std::vector<GtInstance> instances;  // empty for pure distractor images
};

using ClassScoreVector = std::vector<double>;

struct PseudoLabelRecord {
  std::string image_id;
  ClassScoreVector sigma_s;                 // stage-1 voting scores
  std::optional<ClassScoreVector> sigma_a;  // teacher region-vote scores
  ClassScoreVector q_hat;                   // fused scores, basis for y_hat
  int cway = 0;                             // argmax of sigma_s
  std::vector<int> y_hat;                   // binary multi-class label
};

struct Detection {
  std::string image_id;
  Box box;
  int class_index = 0;
  double score = 0.0;
};

struct Manifest {
  ClassCatalog classes;
  std::vector<ImageRecord> images;
};

}  // namespace nsod
