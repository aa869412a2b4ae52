#include "nsod/voting.hpp"

#include <algorithm>
#include <cmath>

namespace nsod {

ScoreMatrix similarity_matrix(const MatF& region_features,
                              const SupportBank& bank) {
  if (region_features.cols != bank.rows.cols)
    throw ValidationError("similarity_matrix: feature dimension " +
                          std::to_string(region_features.cols) +
                          " does not match bank dimension " +
                          std::to_string(bank.rows.cols));
  if (region_features.rows < 1)
    throw ValidationError("similarity_matrix: no regions");

  const int R = region_features.rows;
  const int C = bank.classes;
  const int D = region_features.cols;

  ScoreMatrix s(R, C);
  std::vector<double> inv_norm(R);
  for (int i = 0; i < R; ++i) {
    double n2 = 0.0;
    for (float v : region_features.row(i)) n2 += static_cast<double>(v) * v;
    if (n2 == 0.0)
      throw ValidationError("similarity_matrix: zero region feature row " +
                            std::to_string(i));
    inv_norm[i] = 1.0 / std::sqrt(n2);
  }

  // Bank rows are unit-norm, so the mean cosine over G_j reduces to mean
  // dot products against the normalized region vector.
  for (int i = 0; i < R; ++i) {
    const auto r = region_features.row(i);
    for (int j = 0; j < C; ++j) {
      double acc = 0.0;
      for (int t = 0; t < bank.k; ++t) {
        const auto g = bank.row(j, t);
        double dot = 0.0;
        for (int d = 0; d < D; ++d) dot += static_cast<double>(r[d]) * g[d];
        acc += dot;
      }
      s.at(i, j) = acc * inv_norm[i] / static_cast<double>(bank.k);
    }
  }
  return s;
}

DualSoftmax dual_softmax(const ScoreMatrix& m) {
  const int R = m.rows;
  const int C = m.cols;
  DualSoftmax out{ScoreMatrix(R, C), ScoreMatrix(R, C)};

  for (int i = 0; i < R; ++i) {
    double mx = m.at(i, 0);
    for (int j = 1; j < C; ++j) mx = std::max(mx, m.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < C; ++j) {
      const double e = std::exp(m.at(i, j) - mx);
      out.cls.at(i, j) = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < C; ++j) out.cls.at(i, j) *= inv;
  }

  for (int j = 0; j < C; ++j) {
    double mx = m.at(0, j);
    for (int i = 1; i < R; ++i) mx = std::max(mx, m.at(i, j));
    double sum = 0.0;
    for (int i = 0; i < R; ++i) {
      const double e = std::exp(m.at(i, j) - mx);
      out.det.at(i, j) = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < R; ++i) out.det.at(i, j) *= inv;
  }
  return out;
}

ClassScoreVector image_scores(const ScoreMatrix& m) {
  const DualSoftmax ds = dual_softmax(m);
  ClassScoreVector scores(m.cols, 0.0);
  for (int j = 0; j < m.cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < m.rows; ++i) acc += ds.cls.at(i, j) * ds.det.at(i, j);
    scores[j] = acc;
  }
  return scores;
}

ClassScoreVector fuse_scores(const ClassScoreVector& a,
                             const ClassScoreVector& b, double weight) {
  if (a.size() != b.size())
    throw ValidationError("fuse_scores: length mismatch");
  if (weight < 0.0 || weight > 1.0)
    throw ValidationError("fuse_scores: weight must be in [0,1]");
  ClassScoreVector out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j)
    out[j] = weight * a[j] + (1.0 - weight) * b[j];
  return out;
}

int to_cway_label(const ClassScoreVector& scores) {
  if (scores.empty()) throw ValidationError("to_cway_label: empty scores");
  int best = 0;
  for (int j = 1; j < static_cast<int>(scores.size()); ++j) {
    if (scores[j] > scores[best]) best = j;
  }
  return best;
}

std::vector<int> to_multiclass_label(const ClassScoreVector& q_hat,
                                     double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw ValidationError("to_multiclass_label: tau must be in (0,1)");
  std::vector<int> y(q_hat.size(), 0);
  for (std::size_t j = 0; j < q_hat.size(); ++j) {
    y[j] = q_hat[j] > tau ? 1 : 0;
  }
  return y;
}

}  // namespace nsod
