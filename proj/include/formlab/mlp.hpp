#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "formlab/dataset.hpp"
#include "formlab/features.hpp"

namespace formlab {

enum class HeadKind { classifier, regressor, both };

std::string to_string(HeadKind h);
HeadKind head_from_string(const std::string& s);

/// Fully connected layer, weights row-major (out x in). Parameters are held in
/// single precision so checkpoints round-trip exactly; arithmetic is double.
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<float> weights;
    std::vector<float> bias;

    float& w(std::size_t o, std::size_t i) { return weights[o * in + i]; }
    float w(std::size_t o, std::size_t i) const { return weights[o * in + i]; }
};

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    std::size_t patience = 20;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainingManifest {
    std::uint64_t init_seed = 0;
    TrainConfig config;
    bool trained = false;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;  ///< 1-based epoch whose weights were kept
    std::vector<double> train_loss;       ///< mean mini-batch loss per epoch
    std::vector<double> validation_loss;  ///< full validation loss per epoch
};

/// Two-hidden-layer ReLU network with a softmax classifier head, a scalar rank
/// head, or both. Output unit order: K logits, then the rank unit.
struct MlpModel {
    std::size_t input_dim = 0;
    HeadKind head = HeadKind::classifier;
    std::vector<std::string> label_names;  ///< K = label_names.size()
    std::array<DenseLayer, 3> layers;
    Normalizer normalizer;  ///< fit on the training split, applied before layer 0
    TrainingManifest manifest;

    std::size_t classes() const { return has_classifier() ? label_names.size() : 0; }
    bool has_classifier() const { return head != HeadKind::regressor; }
    bool has_regressor() const { return head != HeadKind::classifier; }
    std::size_t rank_unit() const { return classes(); }
    std::size_t output_dim() const { return classes() + (has_regressor() ? 1 : 0); }
};

inline constexpr std::array<std::size_t, 2> kDefaultHidden = {200, 100};

/// Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights drawn layer by layer in
/// row-major order from splitmix64(seed); zero biases; identity normalizer.
MlpModel mlp_init(std::size_t input_dim, HeadKind head, std::vector<std::string> label_names, std::uint64_t seed,
                  std::array<std::size_t, 2> hidden = kDefaultHidden);

struct TrainingHistory {
    std::vector<double> train_loss;
    std::vector<double> validation_loss;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
};

/// Adam on cross-entropy (classifier) plus squared error on rank/10 (regressor),
/// mini-batches reshuffled each epoch from splitmix64(config.seed), early stop
/// after `patience` epochs without validation improvement. Returns the
/// best-validation snapshot. Deterministic given the inputs.
std::pair<MlpModel, TrainingHistory> mlp_train(const MlpModel& init, const LabeledDataset& ds, const TrainConfig& config);

/// Raw network output for one input (logits and unclamped rank/10 unit).
std::vector<double> mlp_forward(const MlpModel& m, std::span<const double> x);

/// Softmax probabilities and/or rank (10 * output, clamped to [0,10]).
Prediction mlp_predict(const MlpModel& m, std::span<const double> x);

/// Mean loss of the model over the rows of one split.
double mlp_loss(const MlpModel& m, const LabeledDataset& ds, Split side);

enum class ObjectiveKind { rank, class_probability, margin };

struct Objective {
    ObjectiveKind kind = ObjectiveKind::rank;
    int category = 0;  ///< for class_probability

    static Objective rank() { return {ObjectiveKind::rank, 0}; }
    static Objective probability(int c) { return {ObjectiveKind::class_probability, c}; }
    static Objective margin() { return {ObjectiveKind::margin, 0}; }
};

/// Scalar value of an objective at x. The rank objective is 10 * raw output
/// (before clamping); the margin is top probability minus runner-up, ties
/// resolved toward the lower label id.
double objective_value(const MlpModel& m, std::span<const double> x, Objective obj);

/// Exact gradient of objective_value with respect to the raw input x, by reverse
/// accumulation through normalizer, ReLU layers and softmax.
std::vector<double> input_gradient(const MlpModel& m, std::span<const double> x, Objective obj);

/// Checkpoint directory: manifest.txt (key = value lines) and weights.bin (f32
/// LE: W0, b0, W1, b1, W2, b2; each W row-major out x in).
void save_checkpoint(const MlpModel& m, const std::filesystem::path& dir);
MlpModel load_checkpoint(const std::filesystem::path& dir);

/// Extra key = value lines appended to manifest.txt (for example metrics).
void save_checkpoint(const MlpModel& m, const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, std::string>>& extra);

}  // namespace formlab
