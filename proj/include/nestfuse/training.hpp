#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nestfuse/loss.hpp"
#include "nestfuse/network.hpp"

namespace nestfuse {

struct TrainConfig {
  std::filesystem::path corpus_dir;
  int image_size = 256;
  int epochs = 2;
  int batch_size = 4;
  double lambda = 100.0;
  double learning_rate = 1e-4;
  std::uint64_t seed = 1;
  bool deep_supervision = false;
  int checkpoint_every = 0;               // iterations; 0 disables periodic checkpoints
  std::filesystem::path checkpoint_path;  // required when checkpoint_every > 0

  /// Throws Error(kConfiguration) on an invalid value.
  void validate() const;
};

/// Grayscale training images, all image_size x image_size, in file-name order.
struct Corpus {
  std::vector<Image> images;
  std::vector<std::string> names;
};

/// Loads every decodable PNG/JPEG directly inside `dir` (sorted by name),
/// converts to luminance and resizes bilinearly to size x size. Undecodable
/// files are reported through `warn` and skipped.
/// Throws Error(kEmptyCorpus) when nothing decodes, Error(kIo) if `dir` is unreadable.
Corpus prepare_corpus(const std::filesystem::path& dir, int size,
                      const std::function<void(const std::string&)>& warn = {});

/// Adam with bias correction over every tensor of a NetworkState.
class Adam {
 public:
  Adam(const NetworkState& shape, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  void step(NetworkState& state, const NetworkState& grads);
  long long steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainStep {
  long long iteration = 0;  // 1-based
  int epoch = 0;            // 0-based
  LossBreakdown loss;       // batch mean, before the update
};

struct TrainResult {
  NetworkState state;
  std::vector<TrainStep> history;
};

using StepCallback = std::function<void(const TrainStep&)>;

/// Batch loss and accumulated parameter gradients for a single batch.
LossBreakdown batch_gradients(const NetworkState& state, std::span<const Image* const> batch,
                              double lambda, bool deep_supervision, NetworkState& grads);

/// Trains from a fresh init_network(seed) on `corpus`. Batches are drawn in a
/// seeded shuffled order each epoch; a trailing partial batch is dropped.
/// Throws Error(kNumerical) on a non-finite loss or gradient; any checkpoint
/// already on disk is left untouched.
TrainResult train(const TrainConfig& config, const Corpus& corpus, const StepCallback& on_step = {});

/// prepare_corpus(config.corpus_dir) followed by train().
TrainResult train(const TrainConfig& config, const StepCallback& on_step = {},
                  const std::function<void(const std::string&)>& warn = {});

/// "iteration,pixel,ssim,total" rows, full double precision.
void write_loss_csv(std::ostream& os, std::span<const TrainStep> history);

}  // namespace nestfuse
