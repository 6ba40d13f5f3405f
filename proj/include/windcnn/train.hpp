#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcnn/data.hpp"
#include "windcnn/model.hpp"
#include "windcnn/param_registry.hpp"
#include "windcnn/rng.hpp"

namespace windcnn {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  int epochs = 30;
  int batch_size = 4;
  double huber_delta = 1.0;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Throws ConfigError naming the violated rule.
void validate(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);

/// Mean Huber loss over all elements; differentiable with respect to both inputs.
template <typename T>
Tensor<T> huber_loss(const Tensor<T>& prediction, const Tensor<T>& target, double delta);

/// Mean Huber loss accumulated in double, without building a graph.
double huber_value(std::span<const float> prediction, std::span<const float> target, double delta);

struct AdamWOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay on decay-eligible parameters only:
///   w <- w - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * w
template <typename T>
class AdamW {
 public:
  AdamW(const ParamRegistry<T>& registry, AdamWOptions options);

  /// Applies one update from the parameters' current gradients (missing
  /// gradients count as zero). Throws NumericError, leaving every parameter
  /// and moment untouched, if any gradient is non-finite.
  void step();

  std::int64_t step_count() const { return step_; }
  const AdamWOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_step_count(std::int64_t step) { step_ = step; }

 private:
  std::vector<ParamEntry<T>> params_;
  AdamWOptions options_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t step_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

/// Stacks samples into (B,1,G,G) inputs and (B,3,G,G) targets.
void stack_batch(const std::vector<const Sample*>& batch, Tensor<float>& inputs, Tensor<float>& targets);

/// Mean per-sample Huber loss in eval mode. Samples are scored one at a time
/// and summed in sorted order, so the result does not depend on sample order.
double evaluate(Model<float>& model, const std::vector<Sample>& samples, double delta);

/// Per-channel mean of the training targets, used as a constant predictor.
std::array<double, 3> channel_means(const std::vector<Sample>& samples);
/// Loss of predicting the given per-channel constants for every pixel.
double constant_predictor_loss(const std::array<double, 3>& means, const std::vector<Sample>& samples, double delta);

/// Epoch-level training loop: seeded shuffle, mini-batch AdamW steps, then a
/// validation pass. Holds the optimizer and shuffle stream so a checkpoint
/// can resume bit-identically.
class Trainer {
 public:
  Trainer(Model<float>& model, TrainConfig config);

  /// Runs one epoch and returns its losses. Throws NumericError on a
  /// non-finite loss or gradient.
  EpochLoss run_epoch(const std::vector<Sample>& train, const std::vector<Sample>& val);

  using EpochCallback = std::function<void(const EpochLoss&)>;
  /// Trains until `config.epochs` epochs are complete (continuing from a
  /// loaded checkpoint) and returns the full history.
  std::vector<EpochLoss> fit(const std::vector<Sample>& train, const std::vector<Sample>& val,
                             const EpochCallback& on_epoch = {});

  int completed_epochs() const { return static_cast<int>(history_.size()); }
  const std::vector<EpochLoss>& history() const { return history_; }
  const TrainConfig& config() const { return config_; }
  Model<float>& model() { return model_; }
  AdamW<float>& optimizer() { return optimizer_; }
  Rng& shuffle_rng() { return shuffle_rng_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores weights, buffers, optimizer state, RNG streams and history.
  /// The model must have been built from the checkpoint's model config.
  void load_checkpoint(const std::filesystem::path& path);

 private:
  Model<float>& model_;
  TrainConfig config_;
  AdamW<float> optimizer_;
  Rng shuffle_rng_;
  std::vector<EpochLoss> history_;
};

struct CheckpointHeader {
  ModelConfig model;
  TrainConfig train;
  std::uint64_t model_seed = 0;
  int epoch = 0;
};

inline constexpr char kCheckpointMagic[8] = {'W', 'C', 'N', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Reads only the configuration block of a checkpoint.
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

/// Appends one row to a `epoch,train_loss,val_loss` CSV, writing the header
/// when the file is new.
void append_loss_csv(const std::filesystem::path& path, const EpochLoss& row);

/// Full `epoch,train_loss,val_loss` CSV text for a loss history.
std::string loss_history_csv(const std::vector<EpochLoss>& history);

struct LossSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<double> losses;
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

LossSummary summarize(std::vector<std::uint64_t> seeds, std::vector<double> losses);

/// Trains `n_seeds` models with seeds base, base+1, ... (base = train.seed)
/// and summarizes their final validation losses.
LossSummary repeat_train(const ModelConfig& model_config, const TrainConfig& train_config, int n_seeds,
                         const std::vector<Sample>& train, const std::vector<Sample>& val);

}  // namespace windcnn
