#include "nsod/student.hpp"

#include "nsod/geometry.hpp"
#include "nsod/io.hpp"
#include "nsod/rng.hpp"
#include "nsod/voting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nsod {

namespace {

/// logits = features * W^T + b for a C_out x D parameter block.
ScoreMatrix linear_logits(const MatF& features, const std::vector<double>& w,
                          const std::vector<double>& b, int out) {
  const int R = features.rows;
  const int D = features.cols;
  ScoreMatrix logits(R, out);
  for (int i = 0; i < R; ++i) {
    const auto f = features.row(i);
    for (int c = 0; c < out; ++c) {
      double acc = b[c];
      const double* wc = w.data() + static_cast<std::size_t>(c) * D;
      for (int d = 0; d < D; ++d) acc += wc[d] * f[d];
      logits.at(i, c) = acc;
    }
  }
  return logits;
}

ScoreMatrix row_softmax(const ScoreMatrix& m) {
  ScoreMatrix out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    double mx = m.at(i, 0);
    for (int j = 1; j < m.cols; ++j) mx = std::max(mx, m.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < m.cols; ++j) {
      const double e = std::exp(m.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < m.cols; ++j) out.at(i, j) *= inv;
  }
  return out;
}

MatD iou_matrix(const std::vector<Box>& boxes) {
  const int R = static_cast<int>(boxes.size());
  MatD m(R, R);
  for (int i = 0; i < R; ++i) {
    m.at(i, i) = 1.0;
    for (int j = i + 1; j < R; ++j) {
      const double v = iou(boxes[i], boxes[j]);
      m.at(i, j) = v;
      m.at(j, i) = v;
    }
  }
  return m;
}

void validate_example(const TrainingExample& ex, int classes) {
  if (ex.features.rows < 1)
    throw ValidationError("student: example '" + ex.image_id +
                          "' has no regions");
  if (static_cast<int>(ex.boxes.size()) != ex.features.rows)
    throw ValidationError("student: example '" + ex.image_id +
                          "' boxes/features mismatch");
  if (static_cast<int>(ex.y.size()) != classes)
    throw ValidationError("student: example '" + ex.image_id +
                          "' label length mismatch");
  if (!(ex.loss_weight > 0.0))
    throw ValidationError("student: example '" + ex.image_id +
                          "' has non-positive loss weight");
}

}  // namespace

StudentModel init_student(int classes, int dim, const StudentHyperparams& hp,
                          const FeaturizerConfig& featurizer) {
  if (classes < 2) throw ValidationError("student: needs >= 2 classes");
  if (dim < 1) throw ValidationError("student: needs dim >= 1");
  if (hp.refine_branches < 1)
    throw ValidationError("student: needs at least one refinement branch");
  StudentModel m;
  m.classes = classes;
  m.dim = dim;
  m.branches = hp.refine_branches;
  m.featurizer = featurizer;
  const std::size_t head = static_cast<std::size_t>(classes) * dim;
  const std::size_t ref = static_cast<std::size_t>(classes + 1) * dim;
  m.w_cls.assign(head, 0.0);
  m.b_cls.assign(classes, 0.0);
  m.w_det.assign(head, 0.0);
  m.b_det.assign(classes, 0.0);
  m.w_ref.assign(m.branches, std::vector<double>(ref, 0.0));
  m.b_ref.assign(m.branches, std::vector<double>(classes + 1, 0.0));
  if (hp.init_std > 0.0) {
    Rng rng(derive_seed(hp.seed, "student-init"));
    for (double& v : m.w_cls) v = rng.normal(0.0, hp.init_std);
    for (double& v : m.w_det) v = rng.normal(0.0, hp.init_std);
    for (auto& w : m.w_ref)
      for (double& v : w) v = rng.normal(0.0, hp.init_std);
  }
  return m;
}

MilForward mil_forward(const StudentModel& model, const MatF& features,
                       double clamp_eps) {
  if (features.rows < 1) throw ValidationError("mil_forward: no regions");
  if (features.cols != model.dim)
    throw ValidationError("mil_forward: feature dimension mismatch");
  const ScoreMatrix m_cls =
      linear_logits(features, model.w_cls, model.b_cls, model.classes);
  const ScoreMatrix m_det =
      linear_logits(features, model.w_det, model.b_det, model.classes);
  // Same dual-softmax machinery as the stage-1 voting; here the two
  // streams come from separate parameter sets.
  const ScoreMatrix cls = dual_softmax(m_cls).cls;
  const ScoreMatrix det = dual_softmax(m_det).det;

  MilForward out;
  out.proposal_scores = ScoreMatrix(features.rows, model.classes);
  out.image_scores.assign(model.classes, 0.0);
  for (int j = 0; j < model.classes; ++j) {
    double acc = 0.0;
    for (int i = 0; i < features.rows; ++i) {
      const double p = cls.at(i, j) * det.at(i, j);
      out.proposal_scores.at(i, j) = p;
      acc += p;
    }
    out.image_scores[j] = std::clamp(acc, clamp_eps, 1.0 - clamp_eps);
  }
  return out;
}

double mil_loss(const ClassScoreVector& image_scores, const std::vector<int>& y,
                double loss_weight, double clamp_eps) {
  if (image_scores.size() != y.size())
    throw ValidationError("mil_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double p = std::clamp(image_scores[j], clamp_eps, 1.0 - clamp_eps);
    loss -= y[j] ? std::log(p) : std::log(1.0 - p);
  }
  return loss_weight * loss;
}

RefineTargets refine_targets(const ScoreMatrix& prev_scores,
                             const std::vector<int>& y, const MatD& iou_matrix,
                             double iou_threshold) {
  const int R = prev_scores.rows;
  const int C = prev_scores.cols;
  if (static_cast<int>(y.size()) != C)
    throw ValidationError("refine_targets: label length mismatch");
  if (iou_matrix.rows != R || iou_matrix.cols != R)
    throw ValidationError("refine_targets: IoU matrix shape mismatch");

  RefineTargets out;
  out.labels.assign(R, C);  // background by default
  out.weights.assign(R, 1.0);

  struct Seed {
    int proposal;
    int cls;
    double weight;
  };
  std::vector<Seed> seeds;
  for (int j = 0; j < C; ++j) {
    if (!y[j]) continue;
    int best = 0;
    for (int i = 1; i < R; ++i) {
      if (prev_scores.at(i, j) > prev_scores.at(best, j)) best = i;
    }
    seeds.push_back({best, j, prev_scores.at(best, j)});
  }
  if (seeds.empty()) return out;  // all-negative: everything background

  double max_seed_weight = 0.0;
  for (const auto& s : seeds) max_seed_weight = std::max(max_seed_weight, s.weight);

  for (int i = 0; i < R; ++i) {
    double best_iou = -1.0;
    const Seed* best_seed = nullptr;
    for (const auto& s : seeds) {
      const double v = iou_matrix.at(i, s.proposal);
      if (v < iou_threshold) continue;
      // Highest IoU wins; the seed list is ordered by class, so strict
      // comparison keeps the lowest class index on ties.
      if (v > best_iou) {
        best_iou = v;
        best_seed = &s;
      }
    }
    if (best_seed) {
      out.labels[i] = best_seed->cls;
      out.weights[i] = best_seed->weight;
    } else {
      out.weights[i] = max_seed_weight;
    }
  }
  return out;
}

ScoreMatrix refine_forward(const StudentModel& model, const MatF& features,
                           int branch) {
  if (branch < 0 || branch >= model.branches)
    throw ValidationError("refine_forward: branch index out of range");
  return row_softmax(linear_logits(features, model.w_ref[branch],
                                   model.b_ref[branch], model.classes + 1));
}

double refine_loss(const ScoreMatrix& branch_probs,
                   const RefineTargets& targets) {
  const int R = branch_probs.rows;
  if (static_cast<int>(targets.labels.size()) != R ||
      static_cast<int>(targets.weights.size()) != R)
    throw ValidationError("refine_loss: target length mismatch");
  double loss = 0.0;
  for (int i = 0; i < R; ++i) {
    const double p = std::max(branch_probs.at(i, targets.labels[i]), 1e-300);
    loss -= targets.weights[i] * std::log(p);
  }
  return loss / static_cast<double>(R);
}

std::vector<RefineTargets> refine_target_chain(const StudentModel& model,
                                               const TrainingExample& example,
                                               double refine_iou,
                                               double clamp_eps) {
  const MatD ious = iou_matrix(example.boxes);
  std::vector<RefineTargets> targets;
  targets.reserve(model.branches);
  ScoreMatrix prev =
      mil_forward(model, example.features, clamp_eps).proposal_scores;
  for (int k = 0; k < model.branches; ++k) {
    targets.push_back(refine_targets(prev, example.y, ious, refine_iou));
    if (k + 1 < model.branches) {
      // Next branch is supervised by this branch's foreground scores.
      const ScoreMatrix probs = refine_forward(model, example.features, k);
      prev = ScoreMatrix(probs.rows, model.classes);
      for (int i = 0; i < probs.rows; ++i) {
        for (int j = 0; j < model.classes; ++j) prev.at(i, j) = probs.at(i, j);
      }
    }
  }
  return targets;
}

double student_loss(const StudentModel& model, const TrainingExample& example,
                    const std::vector<RefineTargets>& targets,
                    double clamp_eps) {
  const MilForward mil = mil_forward(model, example.features, clamp_eps);
  double loss = mil_loss(mil.image_scores, example.y, example.loss_weight,
                         clamp_eps);
  for (int k = 0; k < model.branches; ++k) {
    loss += refine_loss(refine_forward(model, example.features, k), targets[k]);
  }
  return loss;
}

StudentGradients student_loss_gradients(const StudentModel& model,
                                        const TrainingExample& example,
                                        const std::vector<RefineTargets>& targets,
                                        double clamp_eps) {
  validate_example(example, model.classes);
  if (static_cast<int>(targets.size()) != model.branches)
    throw ValidationError("student_loss_gradients: wrong target chain length");

  const MatF& F = example.features;
  const int R = F.rows;
  const int C = model.classes;
  const int D = model.dim;

  StudentGradients g;
  g.gw_cls.assign(model.w_cls.size(), 0.0);
  g.gb_cls.assign(model.b_cls.size(), 0.0);
  g.gw_det.assign(model.w_det.size(), 0.0);
  g.gb_det.assign(model.b_det.size(), 0.0);
  g.gw_ref.assign(model.branches, std::vector<double>(model.w_ref[0].size(), 0.0));
  g.gb_ref.assign(model.branches, std::vector<double>(model.b_ref[0].size(), 0.0));

  // --- MIL head ---
  const ScoreMatrix m_cls = linear_logits(F, model.w_cls, model.b_cls, C);
  const ScoreMatrix m_det = linear_logits(F, model.w_det, model.b_det, C);
  const ScoreMatrix a = dual_softmax(m_cls).cls;  // row softmax
  const ScoreMatrix b = dual_softmax(m_det).det;  // column softmax

  ClassScoreVector p_raw(C, 0.0);
  for (int j = 0; j < C; ++j) {
    for (int i = 0; i < R; ++i) p_raw[j] += a.at(i, j) * b.at(i, j);
  }

  ClassScoreVector p(C);
  std::vector<double> dl_dp(C, 0.0);
  for (int j = 0; j < C; ++j) {
    p[j] = std::clamp(p_raw[j], clamp_eps, 1.0 - clamp_eps);
    const double term = example.y[j] ? -1.0 / p[j] : 1.0 / (1.0 - p[j]);
    // The clamp saturates: no gradient flows through a clipped score.
    const bool interior = p_raw[j] > clamp_eps && p_raw[j] < 1.0 - clamp_eps;
    dl_dp[j] = interior ? example.loss_weight * term : 0.0;
    g.loss -= example.loss_weight *
              (example.y[j] ? std::log(p[j]) : std::log(1.0 - p[j]));
  }

  // dL/dP_ij = dl_dp[j]; split across the two streams.
  ScoreMatrix dl_da(R, C), dl_db(R, C);
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < C; ++j) {
      dl_da.at(i, j) = dl_dp[j] * b.at(i, j);
      dl_db.at(i, j) = dl_dp[j] * a.at(i, j);
    }
  }

  // Row softmax backward: dM_ij = a_ij (da_ij - sum_j' da_ij' a_ij').
  ScoreMatrix dm_cls(R, C);
  for (int i = 0; i < R; ++i) {
    double dot = 0.0;
    for (int j = 0; j < C; ++j) dot += dl_da.at(i, j) * a.at(i, j);
    for (int j = 0; j < C; ++j)
      dm_cls.at(i, j) = a.at(i, j) * (dl_da.at(i, j) - dot);
  }
  // Column softmax backward, per class.
  ScoreMatrix dm_det(R, C);
  for (int j = 0; j < C; ++j) {
    double dot = 0.0;
    for (int i = 0; i < R; ++i) dot += dl_db.at(i, j) * b.at(i, j);
    for (int i = 0; i < R; ++i)
      dm_det.at(i, j) = b.at(i, j) * (dl_db.at(i, j) - dot);
  }

  for (int i = 0; i < R; ++i) {
    const auto f = F.row(i);
    for (int c = 0; c < C; ++c) {
      const double dcls = dm_cls.at(i, c);
      const double ddet = dm_det.at(i, c);
      g.gb_cls[c] += dcls;
      g.gb_det[c] += ddet;
      double* gwc = g.gw_cls.data() + static_cast<std::size_t>(c) * D;
      double* gwd = g.gw_det.data() + static_cast<std::size_t>(c) * D;
      for (int d = 0; d < D; ++d) {
        gwc[d] += dcls * f[d];
        gwd[d] += ddet * f[d];
      }
    }
  }

  // --- Refinement branches: weighted softmax cross-entropy ---
  for (int k = 0; k < model.branches; ++k) {
    const ScoreMatrix probs = refine_forward(model, F, k);
    const RefineTargets& t = targets[k];
    const double inv_r = 1.0 / static_cast<double>(R);
    for (int i = 0; i < R; ++i) {
      const double p_t = std::max(probs.at(i, t.labels[i]), 1e-300);
      g.loss -= t.weights[i] * std::log(p_t) * inv_r;
      const auto f = F.row(i);
      const double scale = t.weights[i] * inv_r;
      for (int c = 0; c <= C; ++c) {
        const double delta =
            scale * (probs.at(i, c) - (c == t.labels[i] ? 1.0 : 0.0));
        g.gb_ref[k][c] += delta;
        double* gw = g.gw_ref[k].data() + static_cast<std::size_t>(c) * D;
        for (int d = 0; d < D; ++d) gw[d] += delta * f[d];
      }
    }
  }
  return g;
}

StudentTrainResult train_student(const std::vector<TrainingExample>& examples,
                                 int classes, const StudentHyperparams& hp,
                                 const FeaturizerConfig& featurizer) {
  if (examples.empty())
    throw ValidationError("train_student: empty example list");
  bool any_positive = false;
  for (const auto& ex : examples) {
    validate_example(ex, classes);
    for (int y : ex.y) any_positive = any_positive || y == 1;
  }
  if (!any_positive)
    throw ValidationError(
        "train_student: nothing to learn (no positive labels anywhere)");
  const int dim = examples[0].features.cols;
  for (const auto& ex : examples) {
    if (ex.features.cols != dim)
      throw ValidationError("train_student: inconsistent feature dimensions");
  }

  StudentTrainResult result;
  result.model = init_student(classes, dim, hp, featurizer);
  StudentModel& model = result.model;
  for (const auto& ex : examples) {
    result.example_log.emplace_back(ex.image_id, ex.loss_weight);
  }

  std::vector<int> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(hp.seed, "student-shuffle"));
  std::size_t cursor = order.size();  // forces a shuffle on the first step

  for (int step = 0; step < hp.steps; ++step) {
    if (cursor >= order.size()) {
      for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
        const int j = static_cast<int>(shuffle_rng.uniform_int(0, i));
        std::swap(order[i], order[j]);
      }
      cursor = 0;
    }
    const TrainingExample& ex = examples[order[cursor++]];

    const auto targets =
        refine_target_chain(model, ex, hp.refine_iou, hp.clamp_eps);
    const auto g = student_loss_gradients(model, ex, targets, hp.clamp_eps);
    if (!std::isfinite(g.loss))
      throw std::runtime_error("train_student: non-finite loss at step " +
                               std::to_string(step));
    if (step == 0) result.first_loss = g.loss;
    result.last_loss = g.loss;

    const double lr = hp.learning_rate *
                      (step >= hp.decay_step ? hp.decay_factor : 1.0);
    for (std::size_t i = 0; i < model.w_cls.size(); ++i)
      model.w_cls[i] -= lr * g.gw_cls[i];
    for (std::size_t i = 0; i < model.b_cls.size(); ++i)
      model.b_cls[i] -= lr * g.gb_cls[i];
    for (std::size_t i = 0; i < model.w_det.size(); ++i)
      model.w_det[i] -= lr * g.gw_det[i];
    for (std::size_t i = 0; i < model.b_det.size(); ++i)
      model.b_det[i] -= lr * g.gb_det[i];
    for (int k = 0; k < model.branches; ++k) {
      for (std::size_t i = 0; i < model.w_ref[k].size(); ++i)
        model.w_ref[k][i] -= lr * g.gw_ref[k][i];
      for (std::size_t i = 0; i < model.b_ref[k].size(); ++i)
        model.b_ref[k][i] -= lr * g.gb_ref[k][i];
    }
  }
  return result;
}

std::vector<Detection> nms(std::vector<Detection> detections,
                           double iou_threshold) {
  for (std::size_t i = 1; i < detections.size(); ++i) {
    if (detections[i].class_index != detections[0].class_index)
      throw ValidationError("nms: detections must share one class");
  }
  std::sort(detections.begin(), detections.end(),
            [](const Detection& a, const Detection& b) {
              if (a.score != b.score) return a.score > b.score;
              return box_less(a.box, b.box);
            });
  std::vector<Detection> kept;
  for (const auto& d : detections) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (iou(d.box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> detect(const StudentModel& model, const MatF& features,
                              const std::vector<Box>& boxes,
                              const std::string& image_id, double score_floor,
                              double nms_iou) {
  if (features.rows != static_cast<int>(boxes.size()))
    throw ValidationError("detect: boxes/features mismatch");
  const int R = features.rows;
  const int C = model.classes;

  // Mean foreground softmax over the refinement branches.
  ScoreMatrix scores(R, C);
  for (int k = 0; k < model.branches; ++k) {
    const ScoreMatrix probs = refine_forward(model, features, k);
    for (int i = 0; i < R; ++i) {
      for (int j = 0; j < C; ++j) scores.at(i, j) += probs.at(i, j);
    }
  }
  const double inv_k = 1.0 / static_cast<double>(model.branches);
  for (double& v : scores.data) v *= inv_k;

  std::vector<Detection> all;
  for (int j = 0; j < C; ++j) {
    std::vector<Detection> cls;
    for (int i = 0; i < R; ++i) {
      const double s = scores.at(i, j);
      if (s > score_floor) cls.push_back({image_id, boxes[i], j, s});
    }
    auto kept = nms(std::move(cls), nms_iou);
    all.insert(all.end(), kept.begin(), kept.end());
  }
  std::sort(all.begin(), all.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.class_index != b.class_index) return a.class_index < b.class_index;
    return box_less(a.box, b.box);
  });
  return all;
}

std::vector<Detection> detect(const StudentModel& model, const Image& image,
                              const std::vector<Box>& proposals,
                              const std::string& image_id, double score_floor,
                              double nms_iou) {
  if (proposals.empty()) throw ValidationError("detect: empty proposal set");
  const Featurizer featurizer(model.featurizer);
  MatF features(static_cast<int>(proposals.size()), featurizer.dim());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto f = featurizer.extract_region(image, proposals[i]);
    std::copy(f.begin(), f.end(), features.row(static_cast<int>(i)).begin());
  }
  return detect(model, features, proposals, image_id, score_floor, nms_iou);
}

void save_student(const std::string& path, const StudentModel& model) {
  std::string out;
  out.append("NSODSTDT", 8);
  detail::append_u32le(out, static_cast<std::uint32_t>(model.classes));
  detail::append_u32le(out, static_cast<std::uint32_t>(model.dim));
  detail::append_u32le(out, static_cast<std::uint32_t>(model.branches));
  auto dump = [&out](const std::vector<double>& v) {
    for (double x : v) detail::append_f32le(out, static_cast<float>(x));
  };
  dump(model.w_cls);
  dump(model.b_cls);
  dump(model.w_det);
  dump(model.b_det);
  for (int k = 0; k < model.branches; ++k) {
    dump(model.w_ref[k]);
    dump(model.b_ref[k]);
  }
  detail::write_file_bytes(path, out);
}

StudentModel load_student(const std::string& path,
                          const FeaturizerConfig& featurizer) {
  const std::string in = detail::read_file_bytes(path);
  std::size_t pos = 0;
  detail::expect_magic(in, pos, "NSODSTDT", path, "student model file");
  StudentModel m;
  m.classes = static_cast<int>(detail::take_u32le(in, pos, path));
  m.dim = static_cast<int>(detail::take_u32le(in, pos, path));
  m.branches = static_cast<int>(detail::take_u32le(in, pos, path));
  if (m.classes < 2 || m.dim < 1 || m.branches < 1)
    throw ValidationError(path + ": degenerate student header");
  m.featurizer = featurizer;
  auto take = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (double& x : v) x = detail::take_f32le(in, pos, path);
  };
  const std::size_t head = static_cast<std::size_t>(m.classes) * m.dim;
  const std::size_t ref = static_cast<std::size_t>(m.classes + 1) * m.dim;
  take(m.w_cls, head);
  take(m.b_cls, m.classes);
  take(m.w_det, head);
  take(m.b_det, m.classes);
  m.w_ref.resize(m.branches);
  m.b_ref.resize(m.branches);
  for (int k = 0; k < m.branches; ++k) {
    take(m.w_ref[k], ref);
    take(m.b_ref[k], m.classes + 1);
  }
  if (pos != in.size())
    throw ValidationError(path + ": trailing bytes after student payload");
  return m;
}

}  // namespace nsod
