// nsod: nano-supervised object detection pipeline driver.
//
// Subcommands cover the individual stages (gen-data, featurize, vote,
// train-teacher, relabel, train-student, detect, evaluate, baseline), the
// end-to-end runner (run-all), ablation sweeps (sweep) and report printing
// (report). Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include "nsod/access_log.hpp"
#include "nsod/baselines.hpp"
#include "nsod/io.hpp"
#include "nsod/metrics.hpp"
#include "nsod/pipeline.hpp"
#include "nsod/synthgen.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct TeacherFlags {
  nsod::TeacherHyperparams hp;
  std::string schedule = "cosine";
  void add(CLI::App* cmd) {
    cmd->add_option("--epochs", hp.epochs, "Training epochs");
    cmd->add_option("--batch", hp.batch_size, "Mini-batch size");
    cmd->add_option("--lr", hp.learning_rate, "Initial learning rate");
    cmd->add_option("--schedule", schedule, "Learning-rate schedule")
        ->check(CLI::IsMember({"cosine", "constant"}));
    cmd->add_option("--init-std", hp.init_std,
                    "Weight init stddev (0 = zeros)");
    cmd->add_option("--seed", hp.seed, "Training seed");
  }
  nsod::TeacherHyperparams resolve() {
    hp.schedule = schedule == "cosine" ? nsod::LrSchedule::Cosine
                                       : nsod::LrSchedule::Constant;
    return hp;
  }
};

struct StudentFlags {
  nsod::StudentHyperparams hp;
  void add(CLI::App* cmd) {
    cmd->add_option("--steps", hp.steps, "SGD steps (one image per step)");
    cmd->add_option("--lr", hp.learning_rate, "Initial learning rate");
    cmd->add_option("--decay-step", hp.decay_step, "Step of the lr decay");
    cmd->add_option("--decay-factor", hp.decay_factor, "Lr decay factor");
    cmd->add_option("--branches", hp.refine_branches, "Refinement branches");
    cmd->add_option("--refine-iou", hp.refine_iou, "Seed expansion IoU");
    cmd->add_option("--floor", hp.score_floor, "Detection score floor");
    cmd->add_option("--nms", hp.nms_iou, "NMS IoU threshold");
    cmd->add_option("--init-std", hp.init_std,
                    "Weight init stddev (0 = zeros)");
    cmd->add_option("--seed", hp.seed, "Training seed");
  }
};

struct FeaturizerFlags {
  nsod::FeaturizerConfig cfg;
  void add(CLI::App* cmd) {
    cmd->add_option("--grid", cfg.grid, "Spatial grid cells per side");
    cmd->add_option("--color-bins", cfg.color_bins, "Color bins per channel");
    cmd->add_option("--orientation-bins", cfg.orientation_bins,
                    "Gradient orientation bins");
    cmd->add_option("--patch", cfg.patch, "Canonical patch side in pixels");
  }
};

void print_report(const nsod::MetricsReport& report) {
  std::printf("%s (%s)\n", report.metric.c_str(), report.dataset.c_str());
  for (std::size_t i = 0; i < report.class_names.size(); ++i) {
    if (!report.class_defined.empty() && !report.class_defined[i]) {
      std::printf("  %-20s    n/a\n", report.class_names[i].c_str());
    } else {
      std::printf("  %-20s %6.1f\n", report.class_names[i].c_str(),
                  100.0 * report.per_class[i]);
    }
  }
  std::printf("  %-20s %6.1f\n", "mean", 100.0 * report.mean);
  for (const auto& w : report.warnings)
    std::printf("  warning: %s\n", w.c_str());
}

void report_to_csv(const nsod::MetricsReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create CSV: " + path);
  out << "class," << report.metric << "\n";
  for (std::size_t i = 0; i < report.class_names.size(); ++i) {
    out << report.class_names[i] << ",";
    if (report.class_defined.empty() || report.class_defined[i])
      out << report.per_class[i];
    out << "\n";
  }
  out << "mean," << report.mean << "\n";
}

std::map<std::string, std::vector<nsod::GtInstance>> load_split_gt(
    const std::string& gt_path, const std::string& manifest_path,
    nsod::Split split) {
  const auto gt = nsod::gt_by_image(nsod::read_ground_truth(gt_path));
  const auto manifest = nsod::read_manifest(manifest_path);
  std::map<std::string, std::vector<nsod::GtInstance>> out;
  for (const auto& rec : manifest.images) {
    if (rec.split != split) continue;
    const auto it = gt.find(rec.image_id);
    out[rec.image_id] =
        it == gt.end() ? std::vector<nsod::GtInstance>{} : it->second;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nano-supervised object detection pipeline"};
  app.require_subcommand(1);
  std::function<void()> action;

  int workers = 0;
  app.add_option("--workers", workers,
                 "Worker threads (0 = hardware; NSOD_WORKERS caps)");

  // --- gen-data ---
  {
    auto* cmd = app.add_subcommand("gen-data",
                                   "Generate the synthetic shapes corpus");
    auto spec_path = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    cmd->add_option("--spec", *spec_path, "Corpus spec JSON")->required();
    cmd->add_option("--out", *out_dir, "Output directory")->required();
    cmd->callback([=, &action, &workers] {
      action = [=, &workers] {
        const auto [spec, scheme] = nsod::parse_corpus_file(*spec_path);
        const auto manifest =
            nsod::generate_dataset(spec, scheme, *out_dir, workers);
        std::printf("wrote %zu images (%d classes) under %s\n",
                    manifest.images.size(), manifest.classes.size(),
                    out_dir->c_str());
      };
    });
  }

  // --- featurize ---
  {
    auto* cmd = app.add_subcommand(
        "featurize", "Extract global/region features and the support bank");
    auto manifest_path = std::make_shared<std::string>();
    auto proposals_path = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto flags = std::make_shared<FeaturizerFlags>();
    cmd->add_option("--manifest", *manifest_path, "Manifest JSON")->required();
    cmd->add_option("--proposals", *proposals_path, "Proposals JSONL")
        ->required();
    cmd->add_option("--out", *out_dir, "Feature directory")->required();
    flags->add(cmd);
    cmd->callback([=, &action, &workers] {
      action = [=, &workers] {
        const auto manifest = nsod::read_manifest(*manifest_path);
        const auto proposals = nsod::read_proposals(*proposals_path);
        const std::string root = fs::path(*manifest_path).parent_path().string();
        nsod::AccessLog::Scope scope("featurize", {nsod::kGroundTruthTag});
        nsod::stage_featurize(manifest, root.empty() ? "." : root, proposals,
                              flags->cfg, *out_dir, workers);
        std::printf("featurized %zu images into %s\n", manifest.images.size(),
                    out_dir->c_str());
      };
    });
  }

  // --- vote ---
  {
    auto* cmd = app.add_subcommand(
        "vote", "Stage 1: dual-softmax voting against the support bank");
    auto manifest_path = std::make_shared<std::string>();
    auto features_dir = std::make_shared<std::string>();
    auto bank_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto threshold = std::make_shared<double>(0.5);
    cmd->add_option("--manifest", *manifest_path, "Manifest JSON")->required();
    cmd->add_option("--features", *features_dir, "Feature directory")
        ->required();
    cmd->add_option("--bank", *bank_path,
                    "Support bank (default: <features>/bank.bin)");
    cmd->add_option("--out", *out_path, "Pseudo-label JSONL")->required();
    cmd->add_option("--threshold", *threshold, "Multi-class threshold tau");
    cmd->callback([=, &action, &workers] {
      action = [=, &workers] {
        const auto manifest = nsod::read_manifest(*manifest_path);
        nsod::FeatureStore store(*features_dir);
        nsod::AccessLog::Scope scope("vote", {nsod::kGroundTruthTag});
        // A non-default bank path is honored by copying through the store
        // layout; the stage reads <features>/bank.bin.
        if (!bank_path->empty() && *bank_path != store.bank_path()) {
          nsod::save_support_bank(store.bank_path(),
                                  nsod::load_support_bank(*bank_path));
        }
        const auto records =
            nsod::stage_vote(manifest, store, *threshold, workers);
        nsod::write_pseudo_labels(*out_path, records);
        std::printf("voted %zu pseudo-labels into %s\n", records.size(),
                    out_path->c_str());
      };
    });
  }

  // --- train-teacher ---
  {
    auto* cmd = app.add_subcommand(
        "train-teacher", "Stage 2: C-way classifier on stage-1 pseudo-labels");
    auto manifest_path = std::make_shared<std::string>();
    auto pseudo_path = std::make_shared<std::string>();
    auto features_dir = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto flags = std::make_shared<TeacherFlags>();
    auto feat_flags = std::make_shared<FeaturizerFlags>();
    cmd->add_option("--manifest", *manifest_path, "Manifest JSON")->required();
    cmd->add_option("--pseudo", *pseudo_path, "Stage-1 pseudo-labels")
        ->required();
    cmd->add_option("--features", *features_dir, "Feature directory")
        ->required();
    cmd->add_option("--out", *out_path, "Teacher model file")->required();
    flags->add(cmd);
    feat_flags->add(cmd);
    cmd->callback([=, &action] {
      action = [=] {
        const auto manifest = nsod::read_manifest(*manifest_path);
        nsod::FeatureStore store(*features_dir);
        nsod::AccessLog::Scope scope("train-teacher", {nsod::kGroundTruthTag});
        const auto pseudo = nsod::read_pseudo_labels(*pseudo_path);
        const auto result = nsod::stage_train_teacher(
            manifest, store, pseudo, flags->resolve(), feat_flags->cfg);
        nsod::save_teacher(*out_path, result.model);
        std::printf("teacher trained (final loss %.4f) -> %s\n",
                    result.final_loss, out_path->c_str());
      };
    });
  }

  // --- relabel ---
  {
    auto* cmd = app.add_subcommand(
        "relabel", "Stage 3: teacher region votes fused into final labels");
    auto manifest_path = std::make_shared<std::string>();
    auto teacher_path = std::make_shared<std::string>();
    auto features_dir = std::make_shared<std::string>();
    auto pseudo_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto mode = std::make_shared<std::string>("fused");
    auto fuse_weight = std::make_shared<double>(0.5);
    auto threshold = std::make_shared<double>(0.5);
    auto feat_flags = std::make_shared<FeaturizerFlags>();
    cmd->add_option("--manifest", *manifest_path, "Manifest JSON")->required();
    cmd->add_option("--teacher", *teacher_path, "Teacher model")->required();
    cmd->add_option("--features", *features_dir, "Feature directory")
        ->required();
    cmd->add_option("--pseudo", *pseudo_path, "Stage-1 pseudo-labels")
        ->required();
    cmd->add_option("--out", *out_path, "Final pseudo-label JSONL")->required();
    cmd->add_option("--mode", *mode, "Fusion mode")
        ->check(CLI::IsMember({"fused", "x-only"}));
    cmd->add_option("--fuse-weight", *fuse_weight,
                    "Weight of sigma_S in the fusion");
    cmd->add_option("--threshold", *threshold, "Multi-class threshold tau");
    feat_flags->add(cmd);
    cmd->callback([=, &action, &workers] {
      action = [=, &workers] {
        const auto manifest = nsod::read_manifest(*manifest_path);
        nsod::FeatureStore store(*features_dir);
        nsod::AccessLog::Scope scope("relabel", {nsod::kGroundTruthTag});
        const auto teacher = nsod::load_teacher(*teacher_path, feat_flags->cfg);
        const auto stage1 = nsod::read_pseudo_labels(*pseudo_path);
        const auto records = nsod::stage_relabel(
            manifest, store, teacher, stage1, nsod::fusion_from_name(*mode),
            *fuse_weight, *threshold, workers);
        nsod::write_pseudo_labels(*out_path, records);
        std::printf("relabeled %zu records into %s\n", records.size(),
                    out_path->c_str());
      };
    });
  }

  // --- train-student ---
  {
    auto* cmd = app.add_subcommand(
        "train-student", "Stage 4: MIL detector on multi-class pseudo-labels");
    auto manifest_path = std::make_shared<std::string>();
    auto pseudo_path = std::make_shared<std::string>();
    auto features_dir = std::make_shared<std::string>();
    auto proposals_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto flags = std::make_shared<StudentFlags>();
    auto feat_flags = std::make_shared<FeaturizerFlags>();
    cmd->add_option("--manifest", *manifest_path, "Manifest JSON")->required();
    cmd->add_option("--pseudo", *pseudo_path, "Final pseudo-labels")
        ->required();
    cmd->add_option("--features", *features_dir, "Feature directory")
        ->required();
    cmd->add_option("--proposals", *proposals_path, "Proposals JSONL")
        ->required();
    cmd->add_option("--out", *out_path, "Student model file")->required();
    flags->add(cmd);
    feat_flags->add(cmd);
    cmd->callback([=, &action] {
      action = [=] {
        const auto manifest = nsod::read_manifest(*manifest_path);
        nsod::FeatureStore store(*features_dir);
        nsod::AccessLog::Scope scope("train-student", {nsod::kGroundTruthTag});
        const auto proposals = nsod::read_proposals(*proposals_path);
        const auto pseudo = nsod::read_pseudo_labels(*pseudo_path);
        const auto result = nsod::stage_train_student(
            manifest, store, proposals, pseudo, flags->hp, feat_flags->cfg);
        nsod::save_student(*out_path, result.model);
        std::printf("student trained (loss %.4f -> %.4f) -> %s\n",
                    result.first_loss, result.last_loss, out_path->c_str());
      };
    });
  }

  // --- detect ---
  {
    auto* cmd = app.add_subcommand("detect", "Run the student detector");
    auto model_path = std::make_shared<std::string>();
    auto manifest_path = std::make_shared<std::string>();
    auto proposals_path = std::make_shared<std::string>();
    auto features_dir = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("test");
    auto floor = std::make_shared<double>(1e-3);
    auto nms_iou = std::make_shared<double>(0.3);
    cmd->add_option("--model", *model_path, "Student model")->required();
    cmd->add_option("--manifest", *manifest_path, "Manifest JSON")->required();
    cmd->add_option("--proposals", *proposals_path, "Proposals JSONL")
        ->required();
    cmd->add_option("--features", *features_dir, "Feature directory")
        ->required();
    cmd->add_option("--out", *out_path, "Detections JSONL")->required();
    cmd->add_option("--split", *split, "Image split to detect on")
        ->check(CLI::IsMember({"support", "unlabeled", "test"}));
    cmd->add_option("--floor", *floor, "Score floor");
    cmd->add_option("--nms", *nms_iou, "NMS IoU threshold");
    cmd->callback([=, &action, &workers] {
      action = [=, &workers] {
        const auto manifest = nsod::read_manifest(*manifest_path);
        nsod::FeatureStore store(*features_dir);
        nsod::AccessLog::Scope scope("detect", {nsod::kGroundTruthTag});
        const auto proposals = nsod::read_proposals(*proposals_path);
        const auto model = nsod::load_student(*model_path);
        const auto detections = nsod::stage_detect(
            manifest, store, proposals, model, nsod::split_from_name(*split),
            *floor, *nms_iou, workers);
        nsod::write_detections(*out_path, detections);
        std::printf("wrote %zu detections to %s\n", detections.size(),
                    out_path->c_str());
      };
    });
  }

  // --- evaluate ---
  {
    auto* cmd = app.add_subcommand("evaluate", "Metrics over run artifacts");
    auto metric = std::make_shared<std::string>();
    auto gt_path = std::make_shared<std::string>();
    auto det_path = std::make_shared<std::string>();
    auto pseudo_path = std::make_shared<std::string>();
    auto proposals_path = std::make_shared<std::string>();
    auto manifest_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto csv_path = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>();
    auto iou_thr = std::make_shared<double>(0.5);
    cmd->add_option("--metric", *metric, "Metric to compute")
        ->check(CLI::IsMember({"map", "corloc", "clsmap", "macc", "recall"}))
        ->required();
    cmd->add_option("--gt", *gt_path, "Ground-truth JSONL")->required();
    cmd->add_option("--manifest", *manifest_path, "Manifest JSON")->required();
    cmd->add_option("--det", *det_path, "Detections JSONL (map, corloc)");
    cmd->add_option("--pseudo", *pseudo_path,
                    "Pseudo-label JSONL (clsmap, macc)");
    cmd->add_option("--proposals", *proposals_path, "Proposals JSONL (recall)");
    cmd->add_option("--out", *out_path, "Report JSON")->required();
    cmd->add_option("--csv", *csv_path, "Optional per-class CSV");
    cmd->add_option("--split", *split,
                    "Split to evaluate (default: test for map, unlabeled "
                    "otherwise)");
    cmd->add_option("--iou", *iou_thr, "IoU threshold");
    cmd->callback([=, &action] {
      action = [=] {
        const auto manifest = nsod::read_manifest(*manifest_path);
        const nsod::Split eval_split = nsod::split_from_name(
            split->empty() ? (*metric == "map" ? "test" : "unlabeled")
                           : *split);
        const auto gt = load_split_gt(*gt_path, *manifest_path, eval_split);
        nsod::MetricsReport report;
        if (*metric == "map" || *metric == "corloc") {
          if (det_path->empty())
            throw nsod::ValidationError("evaluate: --det is required for " +
                                        *metric);
          const auto det = nsod::read_detections(*det_path);
          report = *metric == "map"
                       ? nsod::detection_map(det, gt, manifest.classes, *iou_thr)
                       : nsod::corloc(det, gt, manifest.classes, *iou_thr);
        } else if (*metric == "clsmap" || *metric == "macc") {
          if (pseudo_path->empty())
            throw nsod::ValidationError("evaluate: --pseudo is required for " +
                                        *metric);
          const auto pseudo = nsod::read_pseudo_labels(*pseudo_path);
          std::vector<std::string> ids;
          std::vector<nsod::ClassScoreVector> scores;
          std::vector<int> cway;
          for (const auto& p : pseudo) {
            ids.push_back(p.image_id);
            scores.push_back(p.q_hat);
            cway.push_back(p.cway);
          }
          const auto labels =
              nsod::multi_labels_from_gt(ids, gt, manifest.classes.size());
          report = *metric == "clsmap"
                       ? nsod::classification_map(ids, scores, labels,
                                                  manifest.classes)
                       : nsod::top1_macc(ids, cway, labels, manifest.classes);
        } else {
          if (proposals_path->empty())
            throw nsod::ValidationError(
                "evaluate: --proposals is required for recall");
          const auto props = nsod::proposals_by_image(
              nsod::read_proposals(*proposals_path));
          const double recall = nsod::proposal_recall(props, gt, *iou_thr);
          report.metric = "proposal_recall";
          report.class_names = {"all"};
          report.per_class = {recall};
          report.class_defined = {true};
          report = nsod::finalize_report(std::move(report));
        }
        report.dataset = nsod::split_name(eval_split);
        nsod::write_report(*out_path, report);
        print_report(report);
        if (!csv_path->empty()) report_to_csv(report, *csv_path);
      };
    });
  }

  // --- baseline ---
  {
    auto* cmd = app.add_subcommand(
        "baseline", "NS-FT / NS-NN pseudo-labels or the NS-Base student");
    auto strategy = std::make_shared<std::string>();
    auto manifest_path = std::make_shared<std::string>();
    auto features_dir = std::make_shared<std::string>();
    auto proposals_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto teacher_flags = std::make_shared<TeacherFlags>();
    auto student_flags = std::make_shared<StudentFlags>();
    cmd->add_option("--strategy", *strategy, "Baseline strategy")
        ->check(CLI::IsMember({"ns-ft", "ns-nn", "ns-base"}))
        ->required();
    cmd->add_option("--manifest", *manifest_path, "Manifest JSON")->required();
    cmd->add_option("--features", *features_dir, "Feature directory")
        ->required();
    cmd->add_option("--proposals", *proposals_path,
                    "Proposals JSONL (ns-base only)");
    cmd->add_option("--out", *out_path,
                    "Output (pseudo JSONL for ns-ft/ns-nn, model for ns-base)")
        ->required();
    teacher_flags->add(cmd);
    student_flags->add(cmd);
    cmd->callback([=, &action] {
      action = [=] {
        const auto manifest = nsod::read_manifest(*manifest_path);
        nsod::FeatureStore store(*features_dir);
        if (*strategy == "ns-base") {
          if (proposals_path->empty())
            throw nsod::ValidationError(
                "baseline: ns-base needs --proposals");
          nsod::AccessLog::Scope scope("baseline-ns-base",
                                       {nsod::kGroundTruthTag});
          const auto proposals = nsod::read_proposals(*proposals_path);
          const auto examples =
              nsod::support_examples(manifest, store, proposals);
          const auto model = nsod::ns_base(examples, manifest.classes.size(),
                                           student_flags->hp);
          nsod::save_student(*out_path, model);
          std::printf("ns-base student (%zu support examples) -> %s\n",
                      examples.size(), out_path->c_str());
          return;
        }
        nsod::AccessLog::Scope scope(
            "baseline-" + *strategy,
            {nsod::kGroundTruthTag, nsod::kProposalsTag});
        const nsod::MatF globals = store.globals();
        std::vector<std::string> unlabeled_ids;
        nsod::MatF support_features(0, globals.cols);
        nsod::MatF unlabeled_features(0, globals.cols);
        std::vector<int> support_labels;
        for (std::size_t i = 0; i < manifest.images.size(); ++i) {
          const auto& rec = manifest.images[i];
          const auto row = globals.row(static_cast<int>(i));
          if (rec.split == nsod::Split::Unlabeled) {
            unlabeled_ids.push_back(rec.image_id);
            unlabeled_features.data.insert(unlabeled_features.data.end(),
                                           row.begin(), row.end());
            ++unlabeled_features.rows;
          } else if (rec.split == nsod::Split::Support) {
            support_features.data.insert(support_features.data.end(),
                                         row.begin(), row.end());
            ++support_features.rows;
            support_labels.push_back(*rec.support_label);
          }
        }
        std::vector<nsod::PseudoLabelRecord> records;
        if (*strategy == "ns-ft") {
          auto result = nsod::ns_ft(support_features, support_labels,
                                    unlabeled_ids, unlabeled_features,
                                    manifest.classes.size(),
                                    teacher_flags->resolve());
          records = std::move(result.records);
        } else {
          records = nsod::ns_nn(store.bank(), unlabeled_ids,
                                unlabeled_features);
        }
        nsod::write_pseudo_labels(*out_path, records);
        std::printf("%s wrote %zu pseudo-labels to %s\n", strategy->c_str(),
                    records.size(), out_path->c_str());
      };
    });
  }

  // --- run-all ---
  {
    auto* cmd = app.add_subcommand("run-all", "End-to-end pipeline run");
    auto config_path = std::make_shared<std::string>();
    auto out_override = std::make_shared<std::string>();
    cmd->add_option("--config", *config_path, "Run config JSON")->required();
    cmd->add_option("--out", *out_override, "Override the config's out_dir");
    cmd->callback([=, &action, &workers] {
      action = [=, &workers] {
        nsod::RunConfig config = nsod::parse_run_config(*config_path);
        if (!out_override->empty()) config.out_dir = *out_override;
        if (workers > 0) config.workers = workers;
        const auto record = nsod::run_all(config);
        std::printf("run %s complete\n", record.digest.c_str());
        for (const auto& [k, v] : record.metrics)
          std::printf("  %-32s %8.4f\n", k.c_str(), v);
        std::printf("  results: %s\n", record.results_path.c_str());
      };
    });
  }

  // --- sweep ---
  {
    auto* cmd = app.add_subcommand("sweep", "Ablation sweep over one axis");
    auto config_path = std::make_shared<std::string>();
    auto axis = std::make_shared<std::string>();
    auto values = std::make_shared<std::vector<std::string>>();
    auto out_dir = std::make_shared<std::string>();
    cmd->add_option("--config", *config_path, "Base run config JSON")
        ->required();
    cmd->add_option("--axis", *axis, "Sweep axis")
        ->check(CLI::IsMember({"k", "distractor_count", "fusion_mode"}))
        ->required();
    cmd->add_option("--values", *values, "Axis values")
        ->required()
        ->delimiter(',');
    cmd->add_option("--out", *out_dir, "Sweep output directory")->required();
    cmd->callback([=, &action, &workers] {
      action = [=, &workers] {
        nsod::RunConfig config = nsod::parse_run_config(*config_path);
        if (workers > 0) config.workers = workers;
        const auto result = nsod::sweep(config, *axis, *values, *out_dir);
        std::printf("sweep over %s: %zu runs\n", axis->c_str(),
                    result.rows.size());
        for (const auto& row : result.rows) {
          if (row.ok) {
            const auto it = row.metrics.find("detection_map_test");
            std::printf("  %s=%s  detection mAP %.4f\n", axis->c_str(),
                        row.value.c_str(),
                        it == row.metrics.end() ? 0.0 : it->second);
          } else {
            std::printf("  %s=%s  FAILED: %s\n", axis->c_str(),
                        row.value.c_str(), row.error.c_str());
          }
        }
        std::printf("  table: %s\n  plot:  %s\n", result.csv_path.c_str(),
                    result.svg_path.c_str());
      };
    });
  }

  // --- report ---
  {
    auto* cmd = app.add_subcommand("report", "Print a run's metric reports");
    auto run_dir = std::make_shared<std::string>();
    auto csv_path = std::make_shared<std::string>();
    cmd->add_option("--run", *run_dir, "Run directory (with results.json)")
        ->required();
    cmd->add_option("--csv", *csv_path, "Dump all per-class rows as CSV");
    cmd->callback([=, &action] {
      action = [=] {
        const fs::path reports = fs::path(*run_dir) / "reports";
        if (!fs::exists(reports))
          throw nsod::ValidationError("no reports directory under " + *run_dir);
        std::vector<std::string> paths;
        for (const auto& entry : fs::directory_iterator(reports)) {
          if (entry.path().extension() == ".json")
            paths.push_back(entry.path().string());
        }
        std::sort(paths.begin(), paths.end());
        std::ofstream csv;
        if (!csv_path->empty()) {
          csv.open(*csv_path, std::ios::binary | std::ios::trunc);
          csv << "metric,class,value\n";
        }
        for (const auto& p : paths) {
          const auto report = nsod::read_report(p);
          print_report(report);
          if (csv.is_open()) {
            for (std::size_t i = 0; i < report.class_names.size(); ++i) {
              csv << report.metric << "," << report.class_names[i] << ",";
              if (report.class_defined.empty() || report.class_defined[i])
                csv << report.per_class[i];
              csv << "\n";
            }
            csv << report.metric << ",mean," << report.mean << "\n";
          }
        }
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    action();
  } catch (const nsod::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 2;
  }
  return 0;
}
