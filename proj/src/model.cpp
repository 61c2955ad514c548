#include "swarmcam/model.hpp"

#include <cmath>

#include "swarmcam/errors.hpp"
#include "swarmcam/rng.hpp"

namespace swarmcam::model {

void validate(const ModelSpec& spec) {
  auto fail = [](const std::string& what) { throw ValidationError("model spec: " + what); };
  if (spec.conv.size() != kConvStages) fail("exactly 4 convolutional stages are required");
  if (spec.input_channels == 0 || spec.input_size == 0) fail("input dims must be positive");
  if (spec.tap_layer >= spec.conv.size()) fail("tap_layer must index a conv stage");
  std::size_t size = spec.input_size;
  for (std::size_t i = 0; i < spec.conv.size(); ++i) {
    const auto& c = spec.conv[i];
    if (c.out_channels == 0 || c.kernel == 0) fail("conv stage " + std::to_string(i + 1) + " is empty");
    if (size + 2 * c.pad < c.kernel) fail("conv stage " + std::to_string(i + 1) + " kernel exceeds input");
    size = size + 2 * c.pad - c.kernel + 1;
    if (c.pool_after) {
      if (size % 2 != 0) fail("conv stage " + std::to_string(i + 1) + " output is not poolable");
      size /= 2;
    }
    if (size == 0) fail("spatial size collapses to zero");
  }
  for (auto h : spec.hidden)
    if (h == 0) fail("hidden layer width must be positive");
}

std::vector<ad::Shape> conv_output_shapes(const ModelSpec& spec) {
  std::vector<ad::Shape> out;
  std::size_t size = spec.input_size;
  for (const auto& c : spec.conv) {
    size = size + 2 * c.pad - c.kernel + 1;
    out.push_back({c.out_channels, size, size});
    if (c.pool_after) size /= 2;
  }
  return out;
}

namespace {

std::size_t flatten_size(const ModelSpec& spec) {
  const auto shapes = conv_output_shapes(spec);
  std::size_t n = ad::element_count(shapes.back());
  if (spec.conv.back().pool_after) n /= 4;
  return n;
}

struct ParamLayout {
  std::string name;
  ad::Shape shape;
  std::size_t fan_in;  // 0 for biases
};

std::vector<ParamLayout> layout(const ModelSpec& spec) {
  std::vector<ParamLayout> out;
  std::size_t in_ch = spec.input_channels;
  for (std::size_t i = 0; i < spec.conv.size(); ++i) {
    const auto& c = spec.conv[i];
    const std::string p = "conv" + std::to_string(i + 1);
    out.push_back({p + ".weight", {c.out_channels, in_ch, c.kernel, c.kernel}, in_ch * c.kernel * c.kernel});
    out.push_back({p + ".bias", {c.out_channels}, 0});
    in_ch = c.out_channels;
  }
  std::size_t n = flatten_size(spec);
  std::vector<std::size_t> widths = spec.hidden;
  widths.push_back(1);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string p = "fc" + std::to_string(i + 1);
    out.push_back({p + ".weight", {widths[i], n}, n});
    out.push_back({p + ".bias", {widths[i]}, 0});
    n = widths[i];
  }
  return out;
}

}  // namespace

std::size_t parameter_count(const ModelSpec& spec) {
  validate(spec);
  std::size_t n = 0;
  for (const auto& p : layout(spec)) n += ad::element_count(p.shape);
  return n;
}

const ad::Tensor& Model::param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p.value;
  throw ContractError("unknown parameter " + name);
}

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  Model m{spec, {}};
  for (const auto& p : layout(spec)) {
    ad::Tensor t(p.shape, 0.0);
    if (p.fan_in > 0) {
      const double stddev = std::sqrt(2.0 / static_cast<double>(p.fan_in));
      for (auto& v : t.data()) v = rng.normal(0.0, stddev);
    }
    m.params.push_back({p.name, std::move(t)});
  }
  return m;
}

ad::Var ForwardCache::logit_var() const { return ad::Var(*graph, logit_node); }
ad::Var ForwardCache::prob_var() const { return ad::Var(*graph, prob_node); }
ad::Var ForwardCache::tap_var() const { return ad::Var(*graph, tap_node); }

ForwardCache forward_with_cache(const Model& model, const ad::Tensor& input) {
  const ModelSpec& spec = model.spec;
  const ad::Shape want{spec.input_channels, spec.input_size, spec.input_size};
  if (input.shape() != want)
    throw ValidationError("forward: input shape " + ad::to_string(input.shape()) + ", expected " +
                          ad::to_string(want));
  if (model.params.size() != 2 * (spec.conv.size() + spec.hidden.size() + 1))
    throw ValidationError("forward: parameter list does not match the model spec");

  ForwardCache cache;
  cache.graph = std::make_shared<ad::Graph>();
  ad::Graph& g = *cache.graph;
  std::vector<ad::Var> p;
  for (const auto& np : model.params) {
    p.push_back(g.leaf(np.value, true));
    cache.param_nodes.push_back(p.back().id());
  }
  ad::Var x = g.constant(input);
  std::size_t k = 0;
  for (std::size_t i = 0; i < spec.conv.size(); ++i) {
    const auto& c = spec.conv[i];
    x = ad::relu(ad::conv2d(x, p[k], p[k + 1], 1, c.pad));
    k += 2;
    if (i == spec.tap_layer) cache.tap_node = x.id();
    if (c.pool_after) x = ad::maxpool2d(x, 2);
  }
  x = ad::flatten(x);
  for (std::size_t j = 0; j <= spec.hidden.size(); ++j) {
    x = ad::dense(x, p[k], p[k + 1]);
    k += 2;
    if (j < spec.hidden.size()) x = ad::relu(x);
  }
  cache.logit_node = x.id();
  cache.prob_node = ad::sigmoid(x).id();
  cache.logit = g.value(cache.logit_node)[0];
  cache.prob = g.value(cache.prob_node)[0];
  cache.feature_maps = g.value(cache.tap_node);
  return cache;
}

double predict_logit(const Model& model, const ad::Tensor& input) {
  return forward_with_cache(model, input).logit;
}

ad::Var class_score(const ForwardCache& cache, Label cls) {
  if (!cache.graph) throw ContractError("class_score: forward cache holds no graph");
  const ad::Var logit = cache.logit_var();
  return cls == Label::Unstable ? ad::scale(logit, 1.0) : ad::scale(logit, -1.0);
}

io::Bytes encode_checkpoint(const Checkpoint& ckpt) {
  const Model& m = ckpt.model;
  validate(m.spec);
  io::ByteWriter w;
  w.raw(std::string_view(kCheckpointMagic, 4));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(m.spec.input_channels));
  w.u32(static_cast<std::uint32_t>(m.spec.input_size));
  w.u32(static_cast<std::uint32_t>(m.spec.conv.size()));
  for (const auto& c : m.spec.conv) {
    w.u32(static_cast<std::uint32_t>(c.out_channels));
    w.u32(static_cast<std::uint32_t>(c.kernel));
    w.u32(static_cast<std::uint32_t>(c.pad));
    w.u32(c.pool_after ? 1u : 0u);
  }
  w.u32(static_cast<std::uint32_t>(m.spec.hidden.size()));
  for (auto h : m.spec.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(m.spec.tap_layer));
  w.u64(ckpt.meta.seed);
  w.u32(ckpt.meta.epochs);
  w.f64(ckpt.meta.final_loss);
  w.u32(static_cast<std::uint32_t>(m.params.size()));
  for (const auto& p : m.params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.raw(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.value.data()) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.remaining() < 4 || r.raw(4) != std::string_view(kCheckpointMagic, 4))
    throw FormatError("checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  ModelSpec& spec = ck.model.spec;
  spec.input_channels = r.u32();
  spec.input_size = r.u32();
  const auto n_conv = r.u32();
  if (n_conv > 64) throw FormatError("checkpoint: implausible conv stage count");
  spec.conv.clear();
  for (std::uint32_t i = 0; i < n_conv; ++i) {
    ConvStage c;
    c.out_channels = r.u32();
    c.kernel = r.u32();
    c.pad = r.u32();
    c.pool_after = r.u32() != 0;
    spec.conv.push_back(c);
  }
  const auto n_hidden = r.u32();
  if (n_hidden > 64) throw FormatError("checkpoint: implausible hidden layer count");
  spec.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) spec.hidden.push_back(r.u32());
  spec.tap_layer = r.u32();
  try {
    validate(spec);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  ck.meta.seed = r.u64();
  ck.meta.epochs = r.u32();
  ck.meta.final_loss = r.f64();

  const auto expected = layout(spec);
  const auto n_params = r.u32();
  if (n_params != expected.size()) throw FormatError("checkpoint: parameter count mismatch");
  for (const auto& want : expected) {
    const auto name_len = r.u32();
    if (name_len > 256) throw FormatError("checkpoint: parameter name too long");
    std::string name = r.raw(name_len);
    if (name != want.name) throw FormatError("checkpoint: expected " + want.name + ", found " + name);
    const auto rank = r.u32();
    if (rank != want.shape.size()) throw FormatError("checkpoint: rank mismatch for " + name);
    ad::Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32());
    if (shape != want.shape) throw FormatError("checkpoint: shape mismatch for " + name);
    const std::size_t n = ad::element_count(shape);
    if (r.remaining() < 8 * n) throw FormatError("checkpoint: truncated payload for " + name);
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64();
    ck.model.params.push_back({std::move(name), ad::Tensor(std::move(shape), std::move(data))});
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace swarmcam::model
