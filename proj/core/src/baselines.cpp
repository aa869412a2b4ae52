#include "nsod/baselines.hpp"

#include "nsod/voting.hpp"

#include <cmath>

namespace nsod {

namespace {

PseudoLabelRecord one_hot_record(const std::string& id,
                                 const ClassScoreVector& provenance,
                                 int cway, int classes) {
  PseudoLabelRecord rec;
  rec.image_id = id;
  rec.sigma_s = provenance;
  rec.cway = cway;
  rec.q_hat.assign(classes, 0.0);
  rec.q_hat[cway] = 1.0;
  rec.y_hat.assign(classes, 0);
  rec.y_hat[cway] = 1;
  return rec;
}

}  // namespace

NsFtResult ns_ft(const MatF& support_features,
                 const std::vector<int>& support_labels,
                 const std::vector<std::string>& unlabeled_ids,
                 const MatF& unlabeled_features, int classes,
                 const TeacherHyperparams& hp) {
  if (support_features.rows == 0)
    throw ValidationError("ns_ft: empty support set");
  NsFtResult result;
  auto trained = train_teacher(support_features, support_labels, classes, hp);
  result.teacher = std::move(trained.model);

  result.records.reserve(unlabeled_ids.size());
  for (std::size_t i = 0; i < unlabeled_ids.size(); ++i) {
    const auto probs = teacher_predict(
        result.teacher, unlabeled_features.row(static_cast<int>(i)));
    const int cway = to_cway_label(probs);
    result.records.push_back(
        one_hot_record(unlabeled_ids[i], probs, cway, classes));
  }
  return result;
}

std::vector<PseudoLabelRecord> ns_nn(const SupportBank& bank,
                                     const std::vector<std::string>& unlabeled_ids,
                                     const MatF& unlabeled_features) {
  if (unlabeled_features.rows != static_cast<int>(unlabeled_ids.size()))
    throw ValidationError("ns_nn: ids/features size mismatch");
  if (unlabeled_features.cols != bank.rows.cols)
    throw ValidationError("ns_nn: feature dimension mismatch");

  std::vector<PseudoLabelRecord> records;
  records.reserve(unlabeled_ids.size());
  for (std::size_t i = 0; i < unlabeled_ids.size(); ++i) {
    const auto f = unlabeled_features.row(static_cast<int>(i));
    int best_class = 0;
    double best_cos = -2.0;
    ClassScoreVector per_class_best(bank.classes, 0.0);
    for (int j = 0; j < bank.classes; ++j) {
      double class_best = -2.0;
      for (int t = 0; t < bank.k; ++t) {
        const double c = cosine(f, bank.row(j, t));
        // Strict comparisons keep the lowest class index, then the lowest
        // support row, on exact ties.
        if (c > class_best) class_best = c;
        if (c > best_cos) {
          best_cos = c;
          best_class = j;
        }
      }
      per_class_best[j] = 0.5 * (class_best + 1.0);  // map [-1,1] into [0,1]
    }
    records.push_back(one_hot_record(unlabeled_ids[i], per_class_best,
                                     best_class, bank.classes));
  }
  return records;
}

StudentModel ns_base(const std::vector<TrainingExample>& support_examples,
                     int classes, const StudentHyperparams& hp,
                     const FeaturizerConfig& featurizer) {
  if (support_examples.empty())
    throw ValidationError("ns_base: empty support set");
  for (const auto& ex : support_examples) {
    int positives = 0;
    for (int y : ex.y) positives += y;
    if (positives != 1)
      throw ValidationError("ns_base: example '" + ex.image_id +
                            "' must carry exactly one positive label");
  }
  return train_student(support_examples, classes, hp, featurizer).model;
}

}  // namespace nsod
