#pragma once

#include "nsod/features.hpp"
#include "nsod/matrix.hpp"
#include "nsod/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nsod {

enum class LrSchedule { Cosine, Constant };

struct TeacherHyperparams {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-2;
  LrSchedule schedule = LrSchedule::Cosine;
  double init_std = 0.01;  // 0 selects zero initialization
  std::uint64_t seed = 0;
};

/// C-way linear softmax head over frozen features.
struct TeacherModel {
  int classes = 0;
  int dim = 0;
  std::vector<double> weights;  // classes x dim, row-major
  std::vector<double> bias;     // classes
  FeaturizerConfig featurizer;

  double weight(int c, int d) const {
    return weights[static_cast<std::size_t>(c) * dim + d];
  }
};

struct TeacherTrainResult {
  TeacherModel model;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;  // mean cross-entropy per epoch
};

/// Randomly initialized model (Gaussian weights, zero bias).
TeacherModel init_teacher(int classes, int dim, const TeacherHyperparams& hp,
                          const FeaturizerConfig& featurizer = {});

/// Mini-batch gradient descent on mean cross-entropy against C-way labels.
/// Deterministic given the seed; epochs = 0 returns the initialized model.
TeacherTrainResult train_teacher(const MatF& features,
                                 const std::vector<int>& labels, int classes,
                                 const TeacherHyperparams& hp,
                                 const FeaturizerConfig& featurizer = {});

/// Mean cross-entropy and its analytic gradient over the given rows.
/// Exposed so finite-difference oracles can check the gradient directly.
struct TeacherGradients {
  double loss = 0.0;
  std::vector<double> grad_weights;
  std::vector<double> grad_bias;
};
TeacherGradients teacher_loss_gradients(const TeacherModel& model,
                                        const MatF& features,
                                        const std::vector<int>& labels,
                                        const std::vector<int>& rows);

/// Softmax prediction for one feature vector; sums to 1.
ClassScoreVector teacher_predict(const TeacherModel& model,
                                 std::span<const float> feature);

/// Prediction on a whole image via the model's featurizer.
ClassScoreVector predict_image(const TeacherModel& model, const Image& image);

/// Row i = softmax prediction for proposal i's feature.
ScoreMatrix region_prob_matrix(const TeacherModel& model,
                               const MatF& region_features);

/// Same, extracting region features from the image on the fly.
ScoreMatrix region_prob_matrix(const TeacherModel& model, const Image& image,
                               const std::vector<Box>& proposals);

/// Binary codec: magic "NSODTCHR", u32 classes, u32 dim, float32 weights
/// row-major, then float32 bias.
void save_teacher(const std::string& path, const TeacherModel& model);
TeacherModel load_teacher(const std::string& path,
                          const FeaturizerConfig& featurizer = {});

}  // namespace nsod
