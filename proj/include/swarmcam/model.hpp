#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "swarmcam/flow.hpp"
#include "swarmcam/formats.hpp"
#include "swarmcam/tensor.hpp"

namespace swarmcam::model {

struct ConvStage {
  std::size_t out_channels = 8;
  std::size_t kernel = 3;
  std::size_t pad = 1;
  bool pool_after = true;  // 2x2 max pooling after the activation
  bool operator==(const ConvStage&) const = default;
};

/// Layer constants of the classifier: four conv+relu stages, then
/// flatten -> dense(hidden[0]) -> relu -> ... -> dense(1) producing the logit.
struct ModelSpec {
  std::size_t input_channels = kSampleChannels;
  std::size_t input_size = kSampleSize;
  std::vector<ConvStage> conv{{8, 3, 1, true}, {16, 3, 1, true}, {32, 3, 1, true}, {64, 3, 1, false}};
  std::vector<std::size_t> hidden{128, 32};
  std::size_t tap_layer = 3;  // conv stage whose post-relu output Grad-CAM reads

  bool operator==(const ModelSpec&) const = default;
};

inline constexpr std::size_t kConvStages = 4;

/// Throws ValidationError unless the ModelSpec describes a buildable network.
void validate(const ModelSpec& spec);

/// Spatial shape [C, H, W] of each conv stage's post-activation output.
std::vector<ad::Shape> conv_output_shapes(const ModelSpec& spec);
std::size_t parameter_count(const ModelSpec& spec);

struct NamedTensor {
  std::string name;
  ad::Tensor value;
  bool operator==(const NamedTensor&) const = default;
};

struct Model {
  ModelSpec spec;
  std::vector<NamedTensor> params;  // conv1.weight, conv1.bias, ..., fc3.bias

  const ad::Tensor& param(const std::string& name) const;
  bool operator==(const Model&) const = default;
};

/// He-normal weights (stddev sqrt(2 / fan_in)), zero biases.
Model build_model(const ModelSpec& spec, std::uint64_t seed);

/// Graph state from one forward pass, kept for Grad-CAM.
struct ForwardCache {
  std::shared_ptr<ad::Graph> graph;
  ad::NodeId logit_node = 0;
  ad::NodeId prob_node = 0;
  ad::NodeId tap_node = 0;
  std::vector<ad::NodeId> param_nodes;  // same order as Model::params
  double logit = 0.0;
  double prob = 0.5;
  ad::Tensor feature_maps;  // post-relu tap activations [K, h, w]

  ad::Var logit_var() const;
  ad::Var prob_var() const;
  ad::Var tap_var() const;
};

/// Runs the network on a [4, 64, 64] input. Parameters are graph leaves
/// that require grad; the input does not.
ForwardCache forward_with_cache(const Model& model, const ad::Tensor& input);

/// Logit only, no graph retained.
double predict_logit(const Model& model, const ad::Tensor& input);

/// y^Unstable = logit, y^Stable = -logit, recorded on the cache's graph.
ad::Var class_score(const ForwardCache& cache, Label cls);

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
  double final_loss = 0.0;
  bool operator==(const TrainingMeta&) const = default;
};

struct Checkpoint {
  Model model;
  TrainingMeta meta;
  bool operator==(const Checkpoint&) const = default;
};

inline constexpr char kCheckpointMagic[4] = {'S', 'W', 'L', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

io::Bytes encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace swarmcam::model
