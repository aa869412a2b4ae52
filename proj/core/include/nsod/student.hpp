#pragma once

#include "nsod/features.hpp"
#include "nsod/matrix.hpp"
#include "nsod/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nsod {

struct StudentHyperparams {
  int steps = 5000;
  double learning_rate = 1e-2;
  double decay_factor = 0.1;
  int decay_step = 3500;       // same 70% decay point as the reference schedule
  int refine_branches = 3;     // K
  double refine_iou = 0.5;
  double score_floor = 1e-3;
  double nms_iou = 0.3;
  double init_std = 0.01;
  double clamp_eps = 1e-6;
  std::uint64_t seed = 0;
};

/// Two-stream MIL head (classification / detection) plus K refinement
/// branches over C+1 outputs (index C is background). The backbone is the
/// frozen featurizer; only these linear heads train.
struct StudentModel {
  int classes = 0;
  int dim = 0;
  int branches = 0;
  std::vector<double> w_cls, b_cls;  // C x D, C
  std::vector<double> w_det, b_det;  // C x D, C
  std::vector<std::vector<double>> w_ref;  // K of (C+1) x D
  std::vector<std::vector<double>> b_ref;  // K of (C+1)
  FeaturizerConfig featurizer;
};

/// One image's training payload: region features, region boxes and the
/// multi-class pseudo-label. Support images join with one-hot labels and
/// loss weight 1.
struct TrainingExample {
  std::string image_id;
  MatF features;           // R x D
  std::vector<Box> boxes;  // R
  std::vector<int> y;      // C binary
  double loss_weight = 1.0;
};

struct MilForward {
  ScoreMatrix proposal_scores;   // R x C, dual-softmax product
  ClassScoreVector image_scores; // C, sum-pooled and clamped to [eps, 1-eps]
};

/// Forward pass of the base head: row softmax of the classification
/// stream times column softmax of the detection stream, sum-pooled.
MilForward mil_forward(const StudentModel& model, const MatF& features,
                       double clamp_eps = 1e-6);

/// Per-class binary cross-entropy against the multi-class label, scaled
/// by the example's loss weight.
double mil_loss(const ClassScoreVector& image_scores, const std::vector<int>& y,
                double loss_weight, double clamp_eps = 1e-6);

/// Per-proposal supervision for one refinement branch, derived from the
/// previous branch's scores. For each positive class the top proposal
/// seeds its neighborhood (IoU >= threshold); everything unassigned is
/// background. Conflicts go to the highest-IoU seed.
struct RefineTargets {
  std::vector<int> labels;      // R values in [0..C], C = background
  std::vector<double> weights;  // R
};
RefineTargets refine_targets(const ScoreMatrix& prev_scores,
                             const std::vector<int>& y, const MatD& iou_matrix,
                             double iou_threshold = 0.5);

/// Row softmax over C+1 outputs of refinement branch k.
ScoreMatrix refine_forward(const StudentModel& model, const MatF& features,
                           int branch);

/// Mean over proposals of weight_i * cross-entropy(row_i, label_i).
double refine_loss(const ScoreMatrix& branch_probs,
                   const RefineTargets& targets);

/// Supervision chain for one example with the current parameters: branch 1
/// is seeded from the base head, branch k from branch k-1. Targets are
/// constants with respect to the parameters.
std::vector<RefineTargets> refine_target_chain(const StudentModel& model,
                                               const TrainingExample& example,
                                               double refine_iou,
                                               double clamp_eps);

/// Total loss (MIL + refinement branches) for fixed targets.
double student_loss(const StudentModel& model, const TrainingExample& example,
                    const std::vector<RefineTargets>& targets,
                    double clamp_eps);

/// Analytic gradients of student_loss. The finite-difference oracle in the
/// test suite checks these entry by entry.
struct StudentGradients {
  double loss = 0.0;
  std::vector<double> gw_cls, gb_cls, gw_det, gb_det;
  std::vector<std::vector<double>> gw_ref, gb_ref;
};
StudentGradients student_loss_gradients(const StudentModel& model,
                                        const TrainingExample& example,
                                        const std::vector<RefineTargets>& targets,
                                        double clamp_eps);

struct StudentTrainResult {
  StudentModel model;
  double first_loss = 0.0;
  double last_loss = 0.0;
  /// Training-set composition: (image_id, loss_weight) per example.
  std::vector<std::pair<std::string, double>> example_log;
};

StudentModel init_student(int classes, int dim, const StudentHyperparams& hp,
                          const FeaturizerConfig& featurizer = {});

/// Seeded SGD, one image per step. Deterministic given the seed; requires
/// at least one positive label across the set.
StudentTrainResult train_student(const std::vector<TrainingExample>& examples,
                                 int classes, const StudentHyperparams& hp,
                                 const FeaturizerConfig& featurizer = {});

/// Per-proposal class scores: mean over branches of the foreground softmax
/// entries. Proposals above the floor go through per-class NMS; the result
/// is sorted by descending score.
std::vector<Detection> detect(const StudentModel& model, const MatF& features,
                              const std::vector<Box>& boxes,
                              const std::string& image_id,
                              double score_floor = 1e-3, double nms_iou = 0.3);

/// Same, extracting region features from the image on the fly.
std::vector<Detection> detect(const StudentModel& model, const Image& image,
                              const std::vector<Box>& proposals,
                              const std::string& image_id,
                              double score_floor = 1e-3, double nms_iou = 0.3);

/// Greedy NMS over same-class detections: keep the highest score, drop
/// overlaps above the threshold, repeat. Deterministic tie order
/// (score, then box coordinates).
std::vector<Detection> nms(std::vector<Detection> detections,
                           double iou_threshold = 0.3);

/// Binary codec: magic "NSODSTDT", u32 classes, u32 dim, u32 branches,
/// float32 parameter blocks (w_cls, b_cls, w_det, b_det, then per branch
/// w_ref and b_ref).
void save_student(const std::string& path, const StudentModel& model);
StudentModel load_student(const std::string& path,
                          const FeaturizerConfig& featurizer = {});

}  // namespace nsod
