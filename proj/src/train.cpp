#include "swarmcam/train.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "swarmcam/errors.hpp"
#include "swarmcam/rng.hpp"

namespace swarmcam::train {

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

Dataset split_dataset(const std::vector<pipeline::EpisodeSamples>& episodes, const SplitFractions& fracs,
                      std::uint64_t seed) {
  if (fracs.train <= 0.0 || fracs.val < 0.0 || fracs.test < 0.0 ||
      std::fabs(fracs.train + fracs.val + fracs.test - 1.0) > 1e-9)
    throw ValidationError("split fractions must be non-negative and sum to 1");
  std::vector<std::size_t> by_label[2];
  for (std::size_t i = 0; i < episodes.size(); ++i) by_label[static_cast<int>(episodes[i].label)].push_back(i);
  for (int l = 0; l < 2; ++l)
    if (by_label[l].size() < kMinEpisodesPerLabel)
      throw ValidationError("split_dataset: need at least 5 episodes per label, got " +
                            std::to_string(by_label[l].size()) + (l == 0 ? " stable" : " unstable"));

  Rng rng(seed);
  std::vector<Split> episode_split(episodes.size(), Split::Train);
  for (auto& group : by_label) {
    rng.shuffle(std::span<std::size_t>(group));
    const double n = static_cast<double>(group.size());
    const auto n_train = static_cast<std::size_t>(std::lround(fracs.train * n));
    const auto n_val = std::min(group.size() - n_train, static_cast<std::size_t>(std::lround(fracs.val * n)));
    for (std::size_t j = 0; j < group.size(); ++j)
      episode_split[group[j]] = j < n_train ? Split::Train : j < n_train + n_val ? Split::Val : Split::Test;
  }

  Dataset d;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& ep = episodes[i];
    for (std::size_t s = 0; s < ep.samples.size(); ++s) {
      d.samples.push_back(ep.samples[s]);
      d.split.push_back(episode_split[i]);
      d.episode.push_back(ep.episode_id);
      d.duel_boxes.push_back(s < ep.duel_boxes.size() ? ep.duel_boxes[s] : std::vector<sim::BBox>{});
    }
  }
  return d;
}

void validate(const Hyperparams& hp) {
  if (!(hp.lr > 0.0)) throw ValidationError("lr must be positive");
  if (!(hp.beta1 > 0.0 && hp.beta1 < 1.0) || !(hp.beta2 > 0.0 && hp.beta2 < 1.0))
    throw ValidationError("adam betas must lie in (0, 1)");
  if (!(hp.eps > 0.0)) throw ValidationError("adam eps must be positive");
  if (hp.batch == 0 || hp.max_epochs == 0 || hp.patience == 0)
    throw ValidationError("batch, max_epochs and patience must be positive");
}

namespace {

double sample_loss(const model::Model& m, const Sample& s) {
  const auto cache = model::forward_with_cache(m, s.tensor);
  return ad::bce_loss(cache.prob_var(), static_cast<int>(s.label)).value()[0];
}

}  // namespace

double mean_loss(const model::Model& model, const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> losses(idx.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < idx.size(); ++i) losses[i] = sample_loss(model, samples[idx[i]]);
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(idx.size());
}

ad::Tensor transform_sample(const ad::Tensor& x, unsigned op) {
  if (x.rank() != 3 || x.dim(0) % 2 != 0 || x.dim(1) != x.dim(2))
    throw ShapeError("transform_sample: expected [2k, n, n], got " + ad::to_string(x.shape()));
  const std::size_t n = x.dim(1), plane = n * n;
  const bool swap = op & 4u, flip_x = op & 1u, flip_y = op & 2u;
  ad::Tensor out(x.shape());
  for (std::size_t c = 0; c < x.dim(0); c += 2) {
    const double* u = x.data().data() + c * plane;
    const double* v = u + plane;
    double* uo = out.data().data() + c * plane;
    double* vo = uo + plane;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t xx = 0; xx < n; ++xx) {
        std::size_t sy = y, sx = xx;
        double du = u[y * n + xx], dv = v[y * n + xx];
        if (swap) {
          std::swap(sy, sx);
          std::swap(du, dv);
        }
        if (flip_x) {
          sx = n - 1 - sx;
          du = -du;
        }
        if (flip_y) {
          sy = n - 1 - sy;
          dv = -dv;
        }
        uo[sy * n + sx] = du;
        vo[sy * n + sx] = dv;
      }
  }
  return out;
}

std::vector<ad::Tensor> loss_gradients(const model::Model& model, const Sample& sample, double* loss) {
  return loss_gradients(model, sample.tensor, sample.label, loss);
}

std::vector<ad::Tensor> loss_gradients(const model::Model& model, const ad::Tensor& input, Label label,
                                       double* loss) {
  const auto cache = model::forward_with_cache(model, input);
  const ad::Var l = ad::bce_loss(cache.prob_var(), static_cast<int>(label));
  if (loss) *loss = l.value()[0];
  const ad::GradStore grads = cache.graph->backward(l);
  std::vector<ad::Tensor> out;
  out.reserve(cache.param_nodes.size());
  for (std::size_t p = 0; p < cache.param_nodes.size(); ++p) {
    const ad::NodeId id = cache.param_nodes[p];
    out.push_back(grads.has(id) ? grads.at(id) : ad::Tensor(model.params[p].value.shape(), 0.0));
  }
  return out;
}

TrainResult train(const model::Model& init, const Dataset& data, const Hyperparams& hp) {
  return train(init, data.samples, data.indices(Split::Train), data.indices(Split::Val), hp);
}

TrainResult train(const model::Model& init, const std::vector<Sample>& samples,
                  const std::vector<std::size_t>& train_idx, const std::vector<std::size_t>& val_idx,
                  const Hyperparams& hp) {
  validate(hp);
  if (train_idx.empty()) throw ValidationError("train: empty training split");
  if (hp.batch > train_idx.size())
    throw ValidationError("train: batch size " + std::to_string(hp.batch) + " exceeds " +
                          std::to_string(train_idx.size()) + " training samples");
  for (std::size_t i : train_idx)
    if (samples.at(i).tensor.shape() != ad::Shape{init.spec.input_channels, init.spec.input_size, init.spec.input_size})
      throw ValidationError("train: sample shape does not match the model input");

  model::Model m = init;
  const std::size_t n_params = m.params.size();
  std::vector<std::vector<double>> adam_m(n_params), adam_v(n_params);
  for (std::size_t p = 0; p < n_params; ++p) {
    adam_m[p].assign(m.params[p].value.size(), 0.0);
    adam_v[p].assign(m.params[p].value.size(), 0.0);
  }

  auto monitor = [&](const model::Model& mm, double train_loss) {
    return val_idx.empty() ? train_loss : mean_loss(mm, samples, val_idx);
  };

  TrainResult result;
  const double init_train = mean_loss(m, samples, train_idx);
  const double init_val = val_idx.empty() ? init_train : mean_loss(m, samples, val_idx);
  result.curve.push_back({0, init_train, init_val});
  double best = init_val;
  model::Model best_model = m;
  std::size_t since_best = 0;

  Rng rng(hp.seed);
  std::vector<std::size_t> order = train_idx;
  std::uint64_t t = 0;
  double bias1 = 1.0, bias2 = 1.0;
  for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch) {
      const std::size_t end = std::min(order.size(), start + hp.batch);
      const std::size_t bs = end - start;
      std::vector<std::vector<ad::Tensor>> per_sample(bs);
      std::vector<double> losses(bs);
      std::vector<unsigned> ops(bs, 0);
      if (hp.augment)
        for (auto& op : ops) op = static_cast<unsigned>(rng.below(8));
#pragma omp parallel for schedule(dynamic)
      for (std::size_t i = 0; i < bs; ++i) {
        const Sample& s = samples[order[start + i]];
        if (ops[i] == 0) per_sample[i] = loss_gradients(m, s, &losses[i]);
        else per_sample[i] = loss_gradients(m, transform_sample(s.tensor, ops[i]), s.label, &losses[i]);
      }

      // Reduce in sample order so results do not depend on the thread count.
      for (double l : losses) epoch_loss += l;
      ++t;
      bias1 *= hp.beta1;
      bias2 *= hp.beta2;
      const double inv_bs = 1.0 / static_cast<double>(bs);
      for (std::size_t p = 0; p < n_params; ++p) {
        auto w = m.params[p].value.data();
        auto& mp = adam_m[p];
        auto& vp = adam_v[p];
        for (std::size_t j = 0; j < w.size(); ++j) {
          double g = 0.0;
          for (std::size_t i = 0; i < bs; ++i) g += per_sample[i][p][j];
          g *= inv_bs;
          mp[j] = hp.beta1 * mp[j] + (1.0 - hp.beta1) * g;
          vp[j] = hp.beta2 * vp[j] + (1.0 - hp.beta2) * g * g;
          const double mhat = mp[j] / (1.0 - bias1);
          const double vhat = vp[j] / (1.0 - bias2);
          w[j] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
        }
      }
    }
    const double train_loss = epoch_loss / static_cast<double>(order.size());
    if (!std::isfinite(train_loss))
      throw TrainingError("training diverged: loss is not finite", static_cast<int>(epoch));
    const double val_loss = monitor(m, train_loss);
    if (!std::isfinite(val_loss))
      throw TrainingError("training diverged: validation loss is not finite", static_cast<int>(epoch));
    result.curve.push_back({epoch, train_loss, val_loss});
    if (val_loss < best) {
      best = val_loss;
      best_model = m;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hp.patience) {
      break;
    }
  }
  result.checkpoint.model = std::move(best_model);
  result.checkpoint.meta.seed = hp.seed;
  result.checkpoint.meta.epochs = static_cast<std::uint32_t>(result.curve.size() - 1);
  result.checkpoint.meta.final_loss = result.curve[result.best_epoch].train_loss;
  return result;
}

std::string loss_curve_csv(const std::vector<EpochLoss>& curve) {
  std::string out = "epoch,train_loss,val_loss\n";
  char buf[96];
  for (const auto& e : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss);
    out += buf;
  }
  return out;
}

}  // namespace swarmcam::train
