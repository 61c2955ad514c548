#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "swarmcam/model.hpp"
#include "swarmcam/pipeline.hpp"

namespace swarmcam::train {

enum class Split { Train, Val, Test };
const char* to_string(Split s);

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

/// Samples with their split tag and source episode. Every episode lies in
/// exactly one split.
struct Dataset {
  std::vector<Sample> samples;
  std::vector<Split> split;
  std::vector<std::size_t> episode;
  std::vector<std::vector<sim::BBox>> duel_boxes;

  std::vector<std::size_t> indices(Split s) const;
};

inline constexpr std::size_t kMinEpisodesPerLabel = 5;

/// Episode-level split, stratified by label: per label the episodes are
/// shuffled and the first round(train * n) go to train, the next
/// round(val * n) to val, the rest to test.
Dataset split_dataset(const std::vector<pipeline::EpisodeSamples>& episodes, const SplitFractions& fracs,
                      std::uint64_t seed);

struct Hyperparams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  bool augment = true;  // random flip/rotation of each training sample per epoch
  bool operator==(const Hyperparams&) const = default;
};

void validate(const Hyperparams& hp);

struct EpochLoss {
  std::size_t epoch = 0;  // 0 = before any update
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  model::Checkpoint checkpoint;  // parameters of the best validation epoch
  std::vector<EpochLoss> curve;
  std::size_t best_epoch = 0;
};

/// One of the 8 symmetries of the square applied to a flow sample
/// [4, n, n] (channels u, v, u, v). Bit 0 mirrors x, bit 1 mirrors y, bit 2
/// swaps the axes (applied first). Vector components move with the grid.
ad::Tensor transform_sample(const ad::Tensor& x, unsigned op);

/// Mean binary cross-entropy of the model over a subset.
double mean_loss(const model::Model& model, const std::vector<Sample>& samples,
                 const std::vector<std::size_t>& idx);

/// Per-parameter gradients of the BCE loss for one sample, in Model::params order.
std::vector<ad::Tensor> loss_gradients(const model::Model& model, const Sample& sample, double* loss = nullptr);
std::vector<ad::Tensor> loss_gradients(const model::Model& model, const ad::Tensor& input, Label label,
                                       double* loss = nullptr);

/// Adam on shuffled mini-batches with early stopping on validation loss.
/// Epoch 0 of the curve holds full-pass losses of the initial model; later
/// train losses are means over that epoch's mini-batches. Without a
/// validation split the train loss drives early stopping.
TrainResult train(const model::Model& init, const Dataset& data, const Hyperparams& hp);

/// Same, on explicit index lists.
TrainResult train(const model::Model& init, const std::vector<Sample>& samples,
                  const std::vector<std::size_t>& train_idx, const std::vector<std::size_t>& val_idx,
                  const Hyperparams& hp);

std::string loss_curve_csv(const std::vector<EpochLoss>& curve);

}  // namespace swarmcam::train
