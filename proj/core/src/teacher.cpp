#include "nsod/teacher.hpp"

#include "nsod/io.hpp"
#include "nsod/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

namespace nsod {

namespace {

/// Softmax of w*f + b for one feature row, max-stabilized.
void softmax_logits(const TeacherModel& model, std::span<const float> feature,
                    std::vector<double>& probs) {
  const int C = model.classes;
  probs.resize(C);
  for (int c = 0; c < C; ++c) {
    double acc = model.bias[c];
    const double* w = model.weights.data() + static_cast<std::size_t>(c) * model.dim;
    for (int d = 0; d < model.dim; ++d) acc += w[d] * feature[d];
    probs[c] = acc;
  }
  const double mx = *std::max_element(probs.begin(), probs.end());
  double sum = 0.0;
  for (double& p : probs) {
    p = std::exp(p - mx);
    sum += p;
  }
  for (double& p : probs) p /= sum;
}

}  // namespace

TeacherModel init_teacher(int classes, int dim, const TeacherHyperparams& hp,
                          const FeaturizerConfig& featurizer) {
  if (classes < 2) throw ValidationError("teacher: needs >= 2 classes");
  if (dim < 1) throw ValidationError("teacher: needs dim >= 1");
  TeacherModel model;
  model.classes = classes;
  model.dim = dim;
  model.featurizer = featurizer;
  model.weights.assign(static_cast<std::size_t>(classes) * dim, 0.0);
  model.bias.assign(classes, 0.0);
  if (hp.init_std > 0.0) {
    Rng rng(derive_seed(hp.seed, "teacher-init"));
    for (double& w : model.weights) w = rng.normal(0.0, hp.init_std);
  }
  return model;
}

TeacherGradients teacher_loss_gradients(const TeacherModel& model,
                                        const MatF& features,
                                        const std::vector<int>& labels,
                                        const std::vector<int>& rows) {
  TeacherGradients g;
  g.grad_weights.assign(model.weights.size(), 0.0);
  g.grad_bias.assign(model.bias.size(), 0.0);
  if (rows.empty()) return g;

  std::vector<double> probs;
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (int row : rows) {
    const auto f = features.row(row);
    const int y = labels[row];
    softmax_logits(model, f, probs);
    g.loss -= std::log(std::max(probs[y], 1e-300)) * inv_n;
    for (int c = 0; c < model.classes; ++c) {
      const double delta = (probs[c] - (c == y ? 1.0 : 0.0)) * inv_n;
      g.grad_bias[c] += delta;
      double* gw = g.grad_weights.data() + static_cast<std::size_t>(c) * model.dim;
      for (int d = 0; d < model.dim; ++d) gw[d] += delta * f[d];
    }
  }
  return g;
}

TeacherTrainResult train_teacher(const MatF& features,
                                 const std::vector<int>& labels, int classes,
                                 const TeacherHyperparams& hp,
                                 const FeaturizerConfig& featurizer) {
  if (features.rows == 0) throw ValidationError("train_teacher: empty training set");
  if (features.rows != static_cast<int>(labels.size()))
    throw ValidationError("train_teacher: features/labels size mismatch");
  std::set<int> present;
  for (int y : labels) {
    if (y < 0 || y >= classes)
      throw ValidationError("train_teacher: label out of range");
    present.insert(y);
  }
  if (hp.batch_size < 1) throw ValidationError("train_teacher: batch_size >= 1");
  if (hp.epochs < 0) throw ValidationError("train_teacher: negative epochs");

  TeacherTrainResult result;
  result.model = init_teacher(classes, features.cols, hp, featurizer);
  TeacherModel& model = result.model;

  const int n = features.rows;
  const int batches_per_epoch = (n + hp.batch_size - 1) / hp.batch_size;
  const std::int64_t total_steps =
      static_cast<std::int64_t>(hp.epochs) * batches_per_epoch;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(hp.seed, "teacher-shuffle"));

  std::int64_t step = 0;
  std::vector<int> batch;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    // Fisher-Yates with the deterministic RNG.
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.uniform_int(0, i));
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    for (int b = 0; b < batches_per_epoch; ++b) {
      batch.clear();
      for (int i = b * hp.batch_size;
           i < std::min(n, (b + 1) * hp.batch_size); ++i) {
        batch.push_back(order[i]);
      }
      const auto g = teacher_loss_gradients(model, features, labels, batch);
      double lr = hp.learning_rate;
      if (hp.schedule == LrSchedule::Cosine && total_steps > 0) {
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi *
                                    static_cast<double>(step) /
                                    static_cast<double>(total_steps)));
      }
      for (std::size_t i = 0; i < model.weights.size(); ++i)
        model.weights[i] -= lr * g.grad_weights[i];
      for (std::size_t i = 0; i < model.bias.size(); ++i)
        model.bias[i] -= lr * g.grad_bias[i];
      epoch_loss += g.loss * batch.size();
      if (!std::isfinite(g.loss))
        throw std::runtime_error("train_teacher: non-finite loss at step " +
                                 std::to_string(step));
      ++step;
    }
    result.epoch_losses.push_back(epoch_loss / n);
  }

  // Final loss over the whole set with the trained parameters.
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  result.final_loss = teacher_loss_gradients(model, features, labels, all).loss;
  return result;
}

ClassScoreVector teacher_predict(const TeacherModel& model,
                                 std::span<const float> feature) {
  if (static_cast<int>(feature.size()) != model.dim)
    throw ValidationError("teacher_predict: feature dimension mismatch");
  std::vector<double> probs;
  softmax_logits(model, feature, probs);
  return probs;
}

ClassScoreVector predict_image(const TeacherModel& model, const Image& image) {
  const Featurizer featurizer(model.featurizer);
  const auto f = featurizer.extract_global(image);
  return teacher_predict(model, f);
}

ScoreMatrix region_prob_matrix(const TeacherModel& model,
                               const MatF& region_features) {
  if (region_features.rows < 1)
    throw ValidationError("region_prob_matrix: empty proposal set");
  ScoreMatrix a(region_features.rows, model.classes);
  std::vector<double> probs;
  for (int i = 0; i < region_features.rows; ++i) {
    softmax_logits(model, region_features.row(i), probs);
    for (int c = 0; c < model.classes; ++c) a.at(i, c) = probs[c];
  }
  return a;
}

ScoreMatrix region_prob_matrix(const TeacherModel& model, const Image& image,
                               const std::vector<Box>& proposals) {
  if (proposals.empty())
    throw ValidationError("region_prob_matrix: empty proposal set");
  const Featurizer featurizer(model.featurizer);
  MatF features(static_cast<int>(proposals.size()), featurizer.dim());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto f = featurizer.extract_region(image, proposals[i]);
    std::copy(f.begin(), f.end(), features.row(static_cast<int>(i)).begin());
  }
  return region_prob_matrix(model, features);
}

void save_teacher(const std::string& path, const TeacherModel& model) {
  std::string out;
  out.append("NSODTCHR", 8);
  detail::append_u32le(out, static_cast<std::uint32_t>(model.classes));
  detail::append_u32le(out, static_cast<std::uint32_t>(model.dim));
  for (double w : model.weights)
    detail::append_f32le(out, static_cast<float>(w));
  for (double b : model.bias) detail::append_f32le(out, static_cast<float>(b));
  detail::write_file_bytes(path, out);
}

TeacherModel load_teacher(const std::string& path,
                          const FeaturizerConfig& featurizer) {
  const std::string in = detail::read_file_bytes(path);
  std::size_t pos = 0;
  detail::expect_magic(in, pos, "NSODTCHR", path, "teacher model file");
  TeacherModel model;
  model.classes = static_cast<int>(detail::take_u32le(in, pos, path));
  model.dim = static_cast<int>(detail::take_u32le(in, pos, path));
  if (model.classes < 2 || model.dim < 1)
    throw ValidationError(path + ": degenerate teacher header");
  model.featurizer = featurizer;
  model.weights.resize(static_cast<std::size_t>(model.classes) * model.dim);
  model.bias.resize(model.classes);
  for (double& w : model.weights) w = detail::take_f32le(in, pos, path);
  for (double& b : model.bias) b = detail::take_f32le(in, pos, path);
  if (pos != in.size())
    throw ValidationError(path + ": trailing bytes after teacher payload");
  return model;
}

}  // namespace nsod
