#pragma once

#include "nsod/features.hpp"
#include "nsod/matrix.hpp"
#include "nsod/types.hpp"

namespace nsod {

/// Region-vs-class similarity: entry (i, j) is the mean cosine similarity
/// between region feature i and the k support features of class j.
ScoreMatrix similarity_matrix(const MatF& region_features,
                              const SupportBank& bank);

struct DualSoftmax {
  ScoreMatrix cls;  // row softmax: competition over classes per region
  ScoreMatrix det;  // column softmax: competition over regions per class
};

/// Row and column softmax of the same matrix, max-stabilized.
DualSoftmax dual_softmax(const ScoreMatrix& m);

/// Image-level class scores: elementwise product of the two softmaxes,
/// sum-pooled over regions. Each entry lies strictly in (0, 1).
ClassScoreVector image_scores(const ScoreMatrix& m);

/// Weighted average of two score vectors (default: plain mean).
ClassScoreVector fuse_scores(const ClassScoreVector& a,
                             const ClassScoreVector& b, double weight = 0.5);

/// Argmax class; ties break toward the lowest index.
int to_cway_label(const ClassScoreVector& scores);

/// Elementwise threshold, strict: y_j = 1 iff q_j > tau. All-negative
/// outputs are valid (and are how distractor images drop out).
std::vector<int> to_multiclass_label(const ClassScoreVector& q_hat,
                                     double tau = 0.5);

}  // namespace nsod
