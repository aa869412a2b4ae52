#pragma once

#include "nsod/features.hpp"
#include "nsod/matrix.hpp"
#include "nsod/metrics.hpp"
#include "nsod/student.hpp"
#include "nsod/synthgen.hpp"
#include "nsod/teacher.hpp"
#include "nsod/types.hpp"
#include "nsod/voting.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nsod {

enum class FusionMode { GOnly, XOnly, Fused };
enum class BaselineStrategy { None, NsFt, NsNn, NsBase };

std::string fusion_name(FusionMode mode);
FusionMode fusion_from_name(const std::string& name);
std::string baseline_name(BaselineStrategy s);
BaselineStrategy baseline_from_name(const std::string& name);

/// Either a generator spec (corpus + proposal scheme) or paths to an
/// existing dataset in the documented formats.
struct DatasetConfig {
  std::optional<CorpusSpec> corpus;
  ProposalScheme scheme;
  std::string manifest_path;
  std::string gt_path;
  std::string proposals_path;
};

struct VotingConfig {
  double threshold = 0.5;
  FusionMode fusion = FusionMode::Fused;
  double fuse_weight = 0.5;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir;
  int workers = 0;
  DatasetConfig dataset;
  FeaturizerConfig featurizer;
  VotingConfig voting;
  TeacherHyperparams teacher;
  StudentHyperparams student;
  BaselineStrategy baseline = BaselineStrategy::None;
};

/// Strict parser: unknown keys anywhere are errors, defaults fill missing
/// keys, component seeds default to the top-level seed.
RunConfig parse_run_config(const std::string& path);
RunConfig run_config_from_json(const std::string& text,
                               const std::string& where);

/// gen-data spec file: CorpusSpec fields at the top level plus an optional
/// "proposals" section with the ProposalScheme fields.
std::pair<CorpusSpec, ProposalScheme> parse_corpus_file(
    const std::string& path);

/// Fully-resolved canonical form (all defaults materialized, sorted keys).
std::string canonical_config_json(const RunConfig& config);

/// Hex digest of the canonical form; changes iff the config changes.
std::string config_digest(const RunConfig& config);

/// The deterministic benchmark configuration used throughout the test
/// suites: 5 classes, 600 unlabeled + 200 test images, k support images
/// per class, seed 0.
RunConfig shapes_v1_config(const std::string& out_dir, int k_support = 5,
                           int distractor_count = 0);

// ---------------------------------------------------------------------------
// Feature store layout: <dir>/globals.bin (manifest order),
// <dir>/regions/<id>.bin, <dir>/bank.bin.
// ---------------------------------------------------------------------------

class FeatureStore {
 public:
  explicit FeatureStore(std::string dir) : dir_(std::move(dir)) {}
  const std::string& dir() const { return dir_; }
  std::string globals_path() const { return dir_ + "/globals.bin"; }
  std::string regions_path(const std::string& image_id) const {
    return dir_ + "/regions/" + image_id + ".bin";
  }
  std::string bank_path() const { return dir_ + "/bank.bin"; }

  MatF globals() const;
  MatF regions(const std::string& image_id) const;
  SupportBank bank() const;

 private:
  std::string dir_;
};

// ---------------------------------------------------------------------------
// Pipeline stages. Each stage reads its inputs from artifact files (so the
// access log sees the full read closure) and returns in-memory results the
// caller persists.
// ---------------------------------------------------------------------------

/// Extracts global + region features for all images and builds the support
/// bank. Writes globals.bin, regions/<id>.bin and bank.bin under
/// features_dir.
void stage_featurize(const Manifest& manifest, const std::string& images_root,
                     const std::vector<ProposalSet>& proposals,
                     const FeaturizerConfig& config,
                     const std::string& features_dir, int workers);

/// Stage 1: dual-softmax voting against the support bank for every
/// unlabeled-split image. q_hat = sigma_s at this stage.
std::vector<PseudoLabelRecord> stage_vote(const Manifest& manifest,
                                          const FeatureStore& store,
                                          double threshold, int workers);

/// Stage 2: teacher trained on global features with stage-1 C-way labels.
TeacherTrainResult stage_train_teacher(const Manifest& manifest,
                                       const FeatureStore& store,
                                       const std::vector<PseudoLabelRecord>& pseudo,
                                       const TeacherHyperparams& hp,
                                       const FeaturizerConfig& featurizer);

/// Stage 3: teacher region votes, fused with stage-1 scores according to
/// the fusion mode; rewrites q_hat and y_hat (cway stays argmax sigma_s).
std::vector<PseudoLabelRecord> stage_relabel(
    const Manifest& manifest, const FeatureStore& store,
    const TeacherModel& teacher, const std::vector<PseudoLabelRecord>& stage1,
    FusionMode mode, double fuse_weight, double threshold, int workers);

/// Stage 4: student trained on unlabeled images with multi-class
/// pseudo-labels plus support images with one-hot labels, loss weight 1.
StudentTrainResult stage_train_student(const Manifest& manifest,
                                       const FeatureStore& store,
                                       const std::vector<ProposalSet>& proposals,
                                       const std::vector<PseudoLabelRecord>& pseudo,
                                       const StudentHyperparams& hp,
                                       const FeaturizerConfig& featurizer);

/// Student training set for support images only (NS-Base).
std::vector<TrainingExample> support_examples(const Manifest& manifest,
                                              const FeatureStore& store,
                                              const std::vector<ProposalSet>& proposals);

/// Detection over every image of the split, in manifest order.
std::vector<Detection> stage_detect(const Manifest& manifest,
                                    const FeatureStore& store,
                                    const std::vector<ProposalSet>& proposals,
                                    const StudentModel& student, Split split,
                                    double score_floor, double nms_iou,
                                    int workers);

// ---------------------------------------------------------------------------
// End-to-end runs
// ---------------------------------------------------------------------------

struct RunRecord {
  std::string digest;
  std::map<std::string, std::string> artifacts;
  std::map<std::string, double> metrics;
  std::map<std::string, double> timings_sec;
  int audit_violations = 0;
  std::string results_path;
};

/// Full pipeline: generate/load data, featurize, vote, distill, train the
/// student, detect and evaluate. Writes all artifacts plus results.json
/// under config.out_dir. Fails (exception) on any ground-truth read inside
/// a training stage.
RunRecord run_all(const RunConfig& config);

struct SweepRow {
  std::string value;
  bool ok = false;
  std::string error;
  std::map<std::string, double> metrics;
};
struct SweepResult {
  std::vector<SweepRow> rows;
  std::string csv_path;
  std::string svg_path;
};

/// One run per axis value ("k", "distractor_count" or "fusion_mode").
/// Failures are recorded per row and do not stop the sweep.
SweepResult sweep(const RunConfig& base, const std::string& axis,
                  const std::vector<std::string>& values,
                  const std::string& out_dir);

}  // namespace nsod
