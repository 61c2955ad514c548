#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "swarmcam/flow.hpp"
#include "swarmcam/gradcam.hpp"
#include "swarmcam/model.hpp"
#include "swarmcam/pipeline.hpp"
#include "swarmcam/simulator.hpp"
#include "swarmcam/train.hpp"

namespace swarmcam::config {

enum class GateScope { Sample, Run };

struct ExplainConfig {
  double top_frac = gradcam::kDefaultTopFraction;
  Label cls = Label::Unstable;
  GateScope gate_scope = GateScope::Sample;  // threshold per sample or pooled over the run
  double dilate_r = 32.0;
  bool operator==(const ExplainConfig&) const = default;
};

struct SplitConfig {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;
  bool operator==(const SplitConfig&) const = default;
};

/// Every tunable of the pipeline. Sections: [sim], [flow], [model],
/// [train], [explain].
struct Config {
  sim::SimConfig sim;
  HornSchunckParams flow;
  pipeline::SamplingConfig sampling;
  model::ModelSpec model;
  train::Hyperparams train;
  SplitConfig split;
  ExplainConfig explain;
  bool operator==(const Config&) const = default;
};

struct KeyDoc {
  std::string section;
  std::string key;
  std::string default_value;
  std::string doc;
};

/// All recognised keys with their defaults.
std::vector<KeyDoc> documented_keys();

/// INI text: "[section]" headers, "key = value" lines, '#' or ';' comments.
/// Syntax errors and unknown sections or keys throw FormatError; values
/// outside their domain throw ValidationError.
Config parse(const std::string& text);
std::string serialize(const Config& cfg);

Config load(const std::filesystem::path& path);
void validate(const Config& cfg);

Label parse_label(const std::string& s);
const char* label_name(Label l);

}  // namespace swarmcam::config
