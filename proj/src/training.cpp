#include "nestfuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "nestfuse/checkpoint.hpp"
#include "nestfuse/error.hpp"
#include "nestfuse/image_io.hpp"

namespace nestfuse {
namespace {

bool finite(const NetworkState& s) {
  for (const ConvParams& p : s.layers()) {
    for (float v : p.weight)
      if (!std::isfinite(v)) return false;
    for (float v : p.bias)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCode::kConfiguration, msg); };
  if (image_size <= 0 || image_size % topology::kSizeMultiple != 0) {
    bad("image size must be a positive multiple of 16");
  }
  if (epochs < 1) bad("epochs must be >= 1");
  if (batch_size < 1) bad("batch size must be >= 1");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) bad("lambda must be > 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad("learning rate must be >= 0");
  if (checkpoint_every < 0) bad("checkpoint interval must be >= 0");
  if (checkpoint_every > 0 && checkpoint_path.empty()) bad("periodic checkpoints need a path");
}

Corpus prepare_corpus(const std::filesystem::path& dir, int size,
                      const std::function<void(const std::string&)>& warn) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    fail(ErrorCode::kIo, dir.string() + ": not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  if (ec) fail(ErrorCode::kIo, dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  Corpus corpus;
  for (const auto& f : files) {
    try {
      corpus.images.push_back(resize_bilinear(load_image(f), size, size));
      corpus.names.push_back(f.filename().string());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDecode) throw;
      if (warn) warn("skipping " + f.string() + ": " + e.what());
    }
  }
  if (corpus.images.empty()) {
    fail(ErrorCode::kEmptyCorpus, dir.string() + ": no decodable images");
  }
  return corpus;
}

Adam::Adam(const NetworkState& shape, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  for (const ConvParams& p : shape.layers()) {
    m_.emplace_back(p.weight.size() + p.bias.size(), 0.0);
    v_.emplace_back(p.weight.size() + p.bias.size(), 0.0);
  }
}

void Adam::step(NetworkState& state, const NetworkState& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto layers = state.layers();
  const auto glayers = grads.layers();
  if (layers.size() != m_.size() || glayers.size() != m_.size()) {
    fail(ErrorCode::kTopology, "optimizer state does not match the network");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<double>& m = m_[l];
    std::vector<double>& v = v_[l];
    auto update = [&](std::vector<float>& p, const std::vector<float>& g, std::size_t base) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        double& mi = m[base + i];
        double& vi = v[base + i];
        mi = beta1_ * mi + (1.0 - beta1_) * gi;
        vi = beta2_ * vi + (1.0 - beta2_) * gi * gi;
        const double delta = lr_ * (mi / c1) / (std::sqrt(vi / c2) + eps_);
        p[i] = static_cast<float>(static_cast<double>(p[i]) - delta);
      }
    };
    update(layers[l].weight, glayers[l].weight, 0);
    update(layers[l].bias, glayers[l].bias, layers[l].weight.size());
  }
}

LossBreakdown batch_gradients(const NetworkState& state, std::span<const Image* const> batch,
                              double lambda, bool deep_supervision, NetworkState& grads) {
  const OutputMode mode = deep_supervision ? OutputMode::kDeepSupervision : OutputMode::kMain;
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<LossBreakdown> per_image;
  ForwardTrace trace;
  for (const Image* img : batch) {
    forward_train(*img, state, mode, trace);
    if (deep_supervision) {
      std::vector<FeatureMap> g;
      LossBreakdown heads[3];
      for (std::size_t q = 0; q < 3; ++q) {
        g.emplace_back(1, img->height(), img->width());
        heads[q] = total_loss_grad(trace.heads[q], *img, lambda, scale / 3.0, g.back());
      }
      per_image.push_back(mean_breakdown(heads));
      backward_train(trace, state, mode, g, grads);
    } else {
      std::vector<FeatureMap> g;
      g.emplace_back(1, img->height(), img->width());
      per_image.push_back(total_loss_grad(trace.output, *img, lambda, scale, g.back()));
      backward_train(trace, state, mode, g, grads);
    }
  }
  return mean_breakdown(per_image);
}

TrainResult train(const TrainConfig& config, const Corpus& corpus, const StepCallback& on_step) {
  config.validate();
  if (corpus.images.empty()) fail(ErrorCode::kEmptyCorpus, "training corpus is empty");
  for (const Image& img : corpus.images) {
    if (img.channels() != 1 || img.height() != config.image_size || img.width() != config.image_size) {
      fail(ErrorCode::kShapeMismatch, "corpus image " + img.shape_string() + " does not match image size " +
                                          std::to_string(config.image_size));
    }
  }
  const std::size_t per_epoch = corpus.images.size() / static_cast<std::size_t>(config.batch_size);
  if (per_epoch == 0) {
    fail(ErrorCode::kEmptyCorpus, "corpus has fewer images (" + std::to_string(corpus.images.size()) +
                                      ") than one batch");
  }

  TrainResult result;
  result.state = init_network(config.seed, config.deep_supervision);
  Adam adam(result.state, config.learning_rate);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(corpus.images.size());
  long long iteration = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      std::vector<const Image*> batch;
      for (int i = 0; i < config.batch_size; ++i) {
        batch.push_back(&corpus.images[order[b * static_cast<std::size_t>(config.batch_size) +
                                             static_cast<std::size_t>(i)]]);
      }
      NetworkState grads = NetworkState::zeros(config.deep_supervision);
      const LossBreakdown loss =
          batch_gradients(result.state, batch, config.lambda, config.deep_supervision, grads);
      ++iteration;
      if (!std::isfinite(loss.total) || !finite(grads)) {
        fail(ErrorCode::kNumerical, "non-finite loss or gradient at iteration " + std::to_string(iteration));
      }
      adam.step(result.state, grads);
      if (!finite(result.state)) {
        fail(ErrorCode::kNumerical, "non-finite weights after iteration " + std::to_string(iteration));
      }
      TrainStep step{iteration, epoch, loss};
      result.history.push_back(step);
      if (on_step) on_step(step);
      if (config.checkpoint_every > 0 && iteration % config.checkpoint_every == 0) {
        save_checkpoint(result.state, config.lambda, config.checkpoint_path);
      }
    }
  }
  return result;
}

TrainResult train(const TrainConfig& config, const StepCallback& on_step,
                  const std::function<void(const std::string&)>& warn) {
  config.validate();
  const Corpus corpus = prepare_corpus(config.corpus_dir, config.image_size, warn);
  return train(config, corpus, on_step);
}

void write_loss_csv(std::ostream& os, std::span<const TrainStep> history) {
  os << "iteration,pixel,ssim,total\n";
  char buf[128];
  for (const TrainStep& s : history) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g\n", s.iteration, s.loss.pixel, s.loss.ssim,
                  s.loss.total);
    os << buf;
  }
}

}  // namespace nestfuse
