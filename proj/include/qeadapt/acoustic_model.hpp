#pragma once

#include "qeadapt/common.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qea {

struct Layer {
  Matrix weights; // out x in
  std::vector<double> bias;
  bool operator==(const Layer &) const = default;
};

/// Affine map on the final pre-softmax activations, used for oDLR adaptation.
struct OutputTransform {
  Matrix weights; // I x I, identity at initialisation
  std::vector<double> bias;
  bool operator==(const OutputTransform &) const = default;
};

struct Layout {
  int feature_dim = 8;
  int context = 2; // frames on each side; input = feature_dim * (2 * context + 1)
  std::vector<int> hidden = {64};
  int outputs = 0;
  int input_dim() const { return feature_dim * (2 * context + 1); }
};

/// Feed-forward frame classifier: sigmoid hidden layers, softmax output over
/// the I HMM states.
struct AcousticModel {
  std::vector<Layer> layers;
  int feature_dim = 0;
  int context = 0;
  std::optional<OutputTransform> odlr;

  int outputs() const { return static_cast<int>(layers.back().bias.size()); }
  int input_dim() const { return static_cast<int>(layers.front().weights.cols); }
  std::size_t num_parameters() const;
  /// FNV-1a over all parameter bytes.
  std::uint64_t fingerprint() const;
  bool operator==(const AcousticModel &) const = default;
};

AcousticModel init_model(std::uint64_t seed, const Layout &layout);

/// Frames spliced with +-context neighbours; edges padded by replication.
Matrix splice(const Matrix &frames, int context);

/// T x I state posteriors.
Matrix forward(const AcousticModel &model, const Matrix &frames);
/// Same, for already spliced input rows.
Matrix forward_spliced(const AcousticModel &model, const Matrix &input);

/// Gradient with the same shapes as the model parameters.
struct Gradient {
  std::vector<Layer> layers;
  std::optional<OutputTransform> odlr;
};

enum class TrainScope { All, OutputTransformOnly };

struct LossAndGrad {
  double loss = 0.0;
  Gradient grad;
};

inline constexpr double kPosteriorFloor = 1e-12;

/// Mean cross-entropy -1/T sum_t sum_i target * log posterior, and its exact
/// gradient. `targets` is T x I with rows summing to one.
LossAndGrad ce_loss_and_grad(const AcousticModel &model, const Matrix &frames, const Matrix &targets,
                             TrainScope scope = TrainScope::All);
LossAndGrad ce_loss_and_grad_spliced(const AcousticModel &model, const Matrix &input, const Matrix &targets,
                                     TrainScope scope = TrainScope::All);

/// Flattened parameter views, in layer order (weights row-major then bias),
/// followed by the output transform when present.
std::vector<double> flatten(const AcousticModel &model);
void unflatten(AcousticModel &model, const std::vector<double> &flat);
std::vector<double> flatten(const Gradient &grad);
double l2_norm(const Gradient &grad);

struct TrainSchedule {
  double learning_rate = 0.008;
  double halve_threshold = 0.005; // relative cv frame-accuracy improvement
  double stop_threshold = 0.001;
  int max_epochs = 20;
  int batch_size = 64;
  std::uint64_t seed = 1;
};

/// One utterance worth of training material: spliced input rows and soft targets.
struct TrainItem {
  Matrix input;   // T x input_dim
  Matrix targets; // T x I
};

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double cv_frame_accuracy = 0.0;
  double train_loss = 0.0;
  bool accepted = false;
};

struct TrainResult {
  AcousticModel model;
  std::vector<EpochLog> log;
  double initial_cv_accuracy = 0.0;
};

/// Frame accuracy: argmax posterior against argmax target.
double frame_accuracy(const AcousticModel &model, const std::vector<TrainItem> &items);

/// Mini-batch SGD with the newbob schedule: an epoch is kept only when it
/// improves cv frame accuracy (a rejected epoch counts as no improvement). The
/// rate halves whenever the relative improvement is under halve_threshold;
/// after the first halving, training stops under stop_threshold.
TrainResult train(const AcousticModel &init, const std::vector<TrainItem> &data, const TrainSchedule &schedule,
                  const std::vector<TrainItem> &cv, TrainScope scope = TrainScope::All);

struct Priors {
  std::vector<double> values;
  double floor = 1e-4;
};

/// Relative state frequencies, floored and renormalised so every prior stays >= floor.
Priors estimate_priors(const std::vector<std::vector<int>> &alignments, int num_states, double floor);
Priors uniform_priors(int num_states);

/// log posterior - log prior, with the posterior floored at kPosteriorFloor.
Matrix scaled_loglik(const Matrix &posteriors, const Priors &priors);

void save_model(std::ostream &out, const AcousticModel &model);
AcousticModel load_model(std::istream &in);
void save_model(const std::string &path, const AcousticModel &model);
AcousticModel load_model(const std::string &path);
void save_priors(const std::string &path, const Priors &priors);
Priors load_priors(const std::string &path);

/// Attach an identity output transform (no-op on outputs).
AcousticModel with_identity_transform(const AcousticModel &model);

} // namespace qea
