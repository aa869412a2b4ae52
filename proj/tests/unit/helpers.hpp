#pragma once

#include "nsod/image.hpp"
#include "nsod/matrix.hpp"
#include "nsod/rng.hpp"
#include "nsod/synthgen.hpp"
#include "nsod/types.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace testutil {

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("nsod-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline nsod::ScoreMatrix random_matrix(nsod::Rng& rng, int rows, int cols,
                                       double lo = -5.0, double hi = 5.0) {
  nsod::ScoreMatrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

inline nsod::MatF random_features(nsod::Rng& rng, int rows, int cols) {
  nsod::MatF m(rows, cols);
  for (float& v : m.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return m;
}

/// Small flat-color test image with an optional filled rectangle.
inline nsod::Image test_image(int w, int h, std::uint8_t bg = 200) {
  return nsod::Image(w, h, bg);
}

inline void fill_rect(nsod::Image& img, const nsod::Box& box, std::uint8_t r,
                      std::uint8_t g, std::uint8_t b) {
  for (int y = box.y1; y < box.y2; ++y) {
    for (int x = box.x1; x < box.x2; ++x) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  }
}

/// Tiny corpus spec for fast pipeline tests.
inline nsod::CorpusSpec tiny_corpus(int classes = 3, int n_unlabeled = 24,
                                    int n_test = 8, int k_support = 2) {
  nsod::CorpusSpec spec;
  spec.classes = classes;
  spec.canvas_width = 96;
  spec.canvas_height = 96;
  spec.n_unlabeled = n_unlabeled;
  spec.n_test = n_test;
  spec.k_support = k_support;
  spec.instances_min = 1;
  spec.instances_max = 2;
  spec.noise_level = 0.25;
  spec.seed = 7;
  return spec;
}

inline nsod::ProposalScheme tiny_scheme() {
  nsod::ProposalScheme scheme;
  scheme.scales = {24, 32, 44};
  scheme.stride = 16;
  scheme.random_extra = 20;
  scheme.seed = 7;
  return scheme;
}

}  // namespace testutil
