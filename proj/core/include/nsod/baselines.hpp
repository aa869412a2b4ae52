#pragma once

#include "nsod/features.hpp"
#include "nsod/matrix.hpp"
#include "nsod/student.hpp"
#include "nsod/teacher.hpp"
#include "nsod/types.hpp"

#include <string>
#include <vector>

namespace nsod {

/// NS-FT: a teacher fine-tuned on the support set alone (true labels),
/// predicting a C-way pseudo-label per unlabeled image. y_hat is the
/// one-hot of the predicted class.
struct NsFtResult {
  std::vector<PseudoLabelRecord> records;
  TeacherModel teacher;
};
NsFtResult ns_ft(const MatF& support_features,
                 const std::vector<int>& support_labels,
                 const std::vector<std::string>& unlabeled_ids,
                 const MatF& unlabeled_features, int classes,
                 const TeacherHyperparams& hp);

/// NS-NN: each unlabeled image takes the class of its nearest support
/// image by cosine over global features. Ties break toward the lowest
/// class index, then the lowest support row.
std::vector<PseudoLabelRecord> ns_nn(const SupportBank& bank,
                                     const std::vector<std::string>& unlabeled_ids,
                                     const MatF& unlabeled_features);

/// NS-Base: the student trained on support examples only (one-hot labels,
/// loss weight 1). Rejects examples that are not support-labeled.
StudentModel ns_base(const std::vector<TrainingExample>& support_examples,
                     int classes, const StudentHyperparams& hp,
                     const FeaturizerConfig& featurizer = {});

}  // namespace nsod
