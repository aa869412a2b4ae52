#pragma once

#include "nsod/image.hpp"
#include "nsod/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nsod {

/// Knobs for the synthetic shapes corpus. Identical specs produce
/// byte-identical datasets.
struct CorpusSpec {
  int classes = 5;
  int canvas_width = 128;
  int canvas_height = 128;
  int instances_min = 1;
  int instances_max = 3;
  int n_unlabeled = 600;
  int n_test = 200;
  int k_support = 5;
  int distractor_count = 0;
  double noise_level = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Multi-scale grid plus seeded random jitter boxes. A deterministic,
/// ground-truth-independent proposal source.
struct ProposalScheme {
  std::vector<int> scales = {28, 34, 40, 48, 58};
  int stride = 12;
  int random_extra = 60;
  std::uint64_t seed = 0;

  void validate(int canvas_width, int canvas_height) const;
};

/// One generated image with its manifest record and ground truth.
struct SynthImage {
  ImageRecord record;
  Image image;
  std::vector<GtInstance> gt;
};

/// Class names for the shapes corpus: "<color>-<shape>" pairs. Distractor
/// content is drawn from shape/color pools disjoint from all known classes.
ClassCatalog shapes_catalog(int classes);

/// Support images: k per class, one large centered instance on a clean
/// background.
std::vector<SynthImage> generate_support(const CorpusSpec& spec);

/// Unlabeled + test + distractor images: 1..n instances of known classes
/// on a noisy background (distractors carry only unknown-class shapes and
/// empty ground-truth lists).
std::vector<SynthImage> generate_main(const CorpusSpec& spec);

/// Grid + jitter boxes for an image of the given size. Pure function of
/// (dimensions, scheme); never sees pixel data or ground truth.
std::vector<Box> generate_proposals(int width, int height,
                                    const ProposalScheme& scheme);

/// Runs the full generator and writes manifest.json, gt.jsonl,
/// proposals.jsonl and images/*.png under out_dir. Returns the manifest.
Manifest generate_dataset(const CorpusSpec& spec, const ProposalScheme& scheme,
                          const std::string& out_dir, int workers = 0);

}  // namespace nsod
