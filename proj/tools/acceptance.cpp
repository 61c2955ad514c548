// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "golden_fixtures.hpp"
#include "reference_net.hpp"
#include "swarmcam/cli.hpp"
#include "swarmcam/eval.hpp"
#include "swarmcam/formats.hpp"
#include "swarmcam/gradcam.hpp"
#include "swarmcam/pipeline.hpp"
#include "swarmcam/rng.hpp"
#include "swarmcam/train.hpp"

using namespace swarmcam;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kFdEps = 1e-5;
constexpr double kFdRelTol = 1e-4;
constexpr double kFdRelFloor = 1e-6;
constexpr double kFdBudgetS = 60.0;
constexpr std::size_t kFdSamples = 5;
constexpr double kCamAlgebraTol = 1e-12;
constexpr double kCamLinearHeadTol = 1e-10;
constexpr double kBicubicConstTol = 1e-12;
constexpr double kBicubicImpulseTol = 1e-10;
constexpr double kFlowEpeMax = 0.3;
constexpr double kFlowBudgetS = 30.0;
constexpr double kAucMin = 0.90;
constexpr double kEndToEndBudgetS = 15 * 60.0;
constexpr double kPointingMin = 0.60;
constexpr double kPointingOverBaseline = 3.0;

// Duel profile of every Unstable episode below (Stable episodes ignore it).
sim::SimConfig duel_profile(double rate) {
  sim::SimConfig c;
  c.duel_rate = rate;
  c.duel_duration_min = 20.0;
  c.duel_duration_max = 40.0;
  return c;
}
constexpr double kDatasetDuelRate = 6.0;
constexpr double kDatasetInterval = 60.0;
constexpr double kLocDuelRate = 2.0;
constexpr std::uint64_t kLocSeedFirst = 100;
constexpr std::size_t kLocEpisodes = 14;
constexpr double kDecayTau = 600.0;
constexpr double kDecayEpisodeLen = 1800.0;
constexpr double kDecayInterval = 30.0;
constexpr std::uint64_t kDecaySeedFirst = 200;
constexpr std::size_t kDecayEpisodes = 3;
constexpr std::size_t kAucWindow = 10;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

ad::Tensor random_tensor(ad::Shape shape, Rng& rng) {
  ad::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

double rel_err(double a, double b) { return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), kFdRelFloor}); }

// Central difference; when either side crosses a relu or pooling kink the
// difference is retaken with the unperturbed activation pattern frozen.
template <class Eval>
double central_difference(const oracle::ReferenceNet& ref, Eval&& eval) {
  const double up = eval(kFdEps, false);
  bool kink = ref.crossed_kink();
  const double down = eval(-kFdEps, false);
  kink = kink || ref.crossed_kink();
  if (!kink) return (up - down) / (2 * kFdEps);
  return (eval(kFdEps, true) - eval(-kFdEps, true)) / (2 * kFdEps);
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const model::Model m = model::build_model(model::ModelSpec{}, 0);
  Rng rng(20240);
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;
  for (std::size_t s = 0; s < kFdSamples; ++s) {
    ad::Tensor x({kSampleChannels, kSampleSize, kSampleSize});
    for (auto& v : x.data()) v = rng.uniform(-1.0, 1.0);
    const auto cache = model::forward_with_cache(m, x);
    const auto grads = cache.graph->backward(cache.logit_var());
    const ad::Tensor tap = gradcam::feature_grads(cache, Label::Unstable);
    const oracle::ReferenceNet ref(m, {x.data().begin(), x.data().end()});
    for (std::size_t p = 0; p < ref.param_count(); ++p) {
      const ad::Tensor& g = grads.at(cache.param_nodes[p]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double fd = central_difference(ref, [&](double d, bool fr) { return ref.perturbed_logit(p, i, d, fr); });
        const double e = rel_err(g[i], fd);
        ++checked;
        if (e > worst) {
          worst = e;
          where = fmt("sample %zu %s[%zu]", s, ref.param_name(p).c_str(), i);
        }
      }
    }
    for (std::size_t i = 0; i < tap.size(); ++i) {
      const double fd = central_difference(ref, [&](double d, bool fr) { return ref.perturbed_tap_logit(i, d, fr); });
      const double e = rel_err(tap[i], fd);
      ++checked;
      if (e > worst) {
        worst = e;
        where = fmt("sample %zu tap[%zu]", s, i);
      }
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < kFdRelTol && elapsed < kFdBudgetS,
          fmt("%zu gradients, max rel err %.3g at %s (< %.0e), %.1f s (< %.0f s)", checked, worst, where.c_str(),
              kFdRelTol, elapsed, kFdBudgetS)};
}

// Cache whose head is y = sum_k w_k sum_ij f^k_ij over a free feature tensor.
model::ForwardCache linear_head_cache(const ad::Tensor& features, const std::vector<double>& w) {
  model::ForwardCache c;
  c.graph = std::make_shared<ad::Graph>();
  const ad::Var f = c.graph->leaf(features);
  ad::Tensor weights(features.shape());
  const std::size_t cells = features.dim(1) * features.dim(2);
  for (std::size_t k = 0; k < w.size(); ++k)
    for (std::size_t i = 0; i < cells; ++i) weights[k * cells + i] = w[k];
  const ad::Var y = ad::sum(ad::mul(f, c.graph->constant(weights)));
  c.tap_node = f.id();
  c.logit_node = y.id();
  c.logit = y.value()[0];
  c.feature_maps = features;
  return c;
}

Outcome gradcam_algebra() {
  Rng rng(31);
  double weights_err = 0.0, map_err = 0.0, linear_err = 0.0;
  const model::Model m = model::build_model(model::ModelSpec{}, 0);
  for (int trial = 0; trial < 20; ++trial) {
    // Gradients and features from the default model on a random input.
    const auto cache = model::forward_with_cache(m, random_tensor({kSampleChannels, kSampleSize, kSampleSize}, rng));
    const ad::Tensor g = gradcam::feature_grads(cache, trial % 2 ? Label::Stable : Label::Unstable);
    const ad::Tensor& f = cache.feature_maps;
    const std::size_t K = g.dim(0), Z = g.dim(1) * g.dim(2);
    const auto a = gradcam::channel_weights(g);
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < Z; ++i) s += g[k * Z + i];
      weights_err = std::max(weights_err, std::fabs(a.a[k] - s / static_cast<double>(Z)));
    }
    const auto map = gradcam::importance_map(a, f);
    for (std::size_t i = 0; i < Z; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += a.a[k] * f[k * Z + i];
      map_err = std::max(map_err, std::fabs(map.values[i] - std::max(0.0, s)));
    }

    // Linear head: the map must equal relu(sum_k w_k f^k).
    const ad::Tensor lf = random_tensor({8, 8, 8}, rng);
    std::vector<double> w(8);
    for (auto& v : w) v = rng.normal();
    const auto lc = linear_head_cache(lf, w);
    const auto lm = gradcam::importance_map(gradcam::channel_weights(gradcam::feature_grads(lc, Label::Unstable)),
                                            lc.feature_maps);
    for (std::size_t i = 0; i < 64; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < 8; ++k) s += w[k] * lf[k * 64 + i];
      linear_err = std::max(linear_err, std::fabs(lm.values[i] - std::max(0.0, s)));
    }
  }
  return {weights_err <= kCamAlgebraTol && map_err <= kCamAlgebraTol && linear_err <= kCamLinearHeadTol,
          fmt("channel weights err %.2g, map err %.2g (<= %.0e); linear head err %.2g (<= %.0e)", weights_err,
              map_err, kCamAlgebraTol, linear_err, kCamLinearHeadTol)};
}

gradcam::ImportanceMap make_map(std::size_t h, std::size_t w, std::vector<double> values) {
  gradcam::ImportanceMap m;
  m.height = m.source_height = h;
  m.width = m.source_width = w;
  m.values = std::move(values);
  return m;
}

Outcome gate_exactness() {
  std::vector<double> v(64);
  for (std::size_t i = 0; i < 64; ++i) v[i] = static_cast<double>(i + 1);
  const auto g = gradcam::gate_top_fraction(make_map(8, 8, v), gradcam::kDefaultTopFraction);
  std::set<double> kept;
  bool values_ok = true;
  for (std::size_t i = 0; i < 64; ++i) {
    if (g.values[i] != 0.0) {
      kept.insert(g.values[i]);
      values_ok = values_ok && g.values[i] == v[i];
    }
  }
  std::string list;
  for (double k : kept) list += fmt("%s%g", list.empty() ? "" : ",", k);
  return {values_ok && kept == std::set<double>{61, 62, 63, 64}, "kept {" + list + "}"};
}

Outcome bicubic() {
  double const_err = 0.0;
  for (double c : {0.0, 0.37, 1.0, 12.5}) {
    const auto up = gradcam::upsample_bicubic(make_map(8, 8, std::vector<double>(64, c)), 512, 512);
    for (double v : up.values) const_err = std::max(const_err, std::fabs(v - c));
  }
  double impulse_err = 0.0;
  for (std::size_t iy : {0, 3, 7})
    for (std::size_t ix : {0, 4, 7}) {
      std::vector<double> v(64, 0.0);
      v[iy * 8 + ix] = 1.0;
      const auto up = gradcam::upsample_bicubic(make_map(8, 8, v), 512, 512);
      // Edge-clamped taps fold out-of-range neighbours onto the border cell.
      auto weight = [](double s, std::size_t i) {
        const long base = static_cast<long>(std::floor(s));
        double w = 0.0;
        for (long t = base - 1; t <= base + 2; ++t)
          if (static_cast<std::size_t>(std::clamp(t, 0L, 7L)) == i) w += gradcam::catmull_rom(s - static_cast<double>(t));
        return w;
      };
      for (std::size_t Y = 0; Y < 512; ++Y) {
        const double wy = weight((static_cast<double>(Y) + 0.5) / 64.0 - 0.5, iy);
        for (std::size_t X = 0; X < 512; ++X) {
          const double wx = weight((static_cast<double>(X) + 0.5) / 64.0 - 0.5, ix);
          impulse_err = std::max(impulse_err, std::fabs(up.values[Y * 512 + X] - std::max(0.0, wy * wx)));
        }
      }
    }
  return {const_err <= kBicubicConstTol && impulse_err <= kBicubicImpulseTol,
          fmt("constant err %.2g (<= %.0e), impulse err %.2g (<= %.0e)", const_err, kBicubicConstTol, impulse_err,
              kBicubicImpulseTol)};
}

// Band-limited plaid with an 8 px period, sampled at (x - dx, y - dy).
GrayImage plaid(std::size_t n, double dx, double dy) {
  GrayImage img(n, n);
  const double k = 2.0 * std::numbers::pi / 8.0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      img.at(y, x) = 0.5 + 0.25 * (std::sin(k * (static_cast<double>(x) - dx)) +
                                   std::sin(k * (static_cast<double>(y) - dy)));
  return img;
}

Outcome flow_recovery() {
  const auto t0 = Clock::now();
  const std::size_t n = 512, border = 16;
  const GrayImage base = plaid(n, 0, 0);
  std::string detail;
  double worst = 0.0;
  for (auto [dx, dy] : {std::pair{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}}) {
    const FlowField f = horn_schunck(base, plaid(n, dx, dy));
    double epe = 0.0;
    std::size_t cnt = 0;
    for (std::size_t y = border; y + border < n; ++y)
      for (std::size_t x = border; x + border < n; ++x, ++cnt)
        epe += std::hypot(f.u[y * n + x] - dx, f.v[y * n + x] - dy);
    epe /= static_cast<double>(cnt);
    worst = std::max(worst, epe);
    detail += fmt("(%+g,%+g) EPE %.3f; ", dx, dy, epe);
  }
  const double elapsed = seconds_since(t0);
  return {worst < kFlowEpeMax && elapsed < kFlowBudgetS,
          detail + fmt("max %.3f (< %.1f), %.1f s (< %.0f s)", worst, kFlowEpeMax, elapsed, kFlowBudgetS)};
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t n) {
  std::vector<std::uint64_t> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = first + i;
  return s;
}

// State shared by the criteria that need the trained model.
struct Trained {
  train::Dataset data;
  model::Model model;
  bool ok = false;
};

Outcome end_to_end(Trained& out) {
  const auto t0 = Clock::now();
  const sim::SimConfig sim = duel_profile(kDatasetDuelRate);
  pipeline::SamplingConfig sampling;
  sampling.interval = kDatasetInterval;
  const HornSchunckParams hs;
  auto episodes = pipeline::simulate_samples(sim, Label::Stable, seed_range(0, 20), sampling, hs, 0);
  auto unstable = pipeline::simulate_samples(sim, Label::Unstable, seed_range(20, 20), sampling, hs, 20);
  episodes.insert(episodes.end(), unstable.begin(), unstable.end());
  std::size_t per_class[2] = {0, 0};
  for (const auto& e : episodes) per_class[static_cast<int>(e.label)] += e.samples.size();
  const double sim_s = seconds_since(t0);

  const train::Hyperparams hp;
  out.data = train::split_dataset(episodes, {}, hp.seed);
  const auto result = train::train(model::build_model(model::ModelSpec{}, hp.seed), out.data, hp);
  out.model = result.checkpoint.model;
  const double train_s = seconds_since(t0) - sim_s;

  const auto test = out.data.indices(train::Split::Test);
  const auto scores = eval::logits(out.model, out.data.samples, test);
  std::vector<int> labels;
  for (auto i : test) labels.push_back(static_cast<int>(out.data.samples[i].label));
  const double auc = eval::auc_roc(scores, labels);
  const double elapsed = seconds_since(t0);
  out.ok = true;
  return {auc >= kAucMin && elapsed < kEndToEndBudgetS,
          fmt("%zu Stable / %zu Unstable samples, %zu test; best epoch %zu; AUC %.4f (>= %.2f); "
              "simulate %.0f s, train %.0f s, total %.0f s (< %.0f s)",
              per_class[0], per_class[1], test.size(), result.best_epoch, auc, kAucMin, sim_s, train_s, elapsed,
              kEndToEndBudgetS)};
}

Outcome localization(const Trained& t) {
  // Held-out Unstable samples with exactly one active duel: the test split
  // plus episodes never used for training.
  std::vector<Sample> samples;
  std::vector<std::vector<sim::BBox>> boxes;
  for (auto i : t.data.indices(train::Split::Test))
    if (t.data.samples[i].label == Label::Unstable && t.data.duel_boxes[i].size() == 1) {
      samples.push_back(t.data.samples[i]);
      boxes.push_back(t.data.duel_boxes[i]);
    }
  const std::size_t from_test = samples.size();
  pipeline::SamplingConfig sampling;
  sampling.interval = kDatasetInterval;
  const auto extra = pipeline::simulate_samples(duel_profile(kLocDuelRate), Label::Unstable,
                                                seed_range(kLocSeedFirst, kLocEpisodes), sampling, {}, 1000);
  for (const auto& e : extra)
    for (std::size_t i = 0; i < e.samples.size(); ++i)
      if (e.duel_boxes[i].size() == 1) {
        samples.push_back(e.samples[i]);
        boxes.push_back(e.duel_boxes[i]);
      }
  const auto r = eval::pointing_game(t.model, samples, boxes, sim::SimConfig{}.arena);
  return {r.accuracy >= kPointingMin && r.accuracy >= kPointingOverBaseline * r.random_baseline,
          fmt("%zu samples (%zu test split, %zu extra); pointing accuracy %.3f (>= %.2f), random baseline %.3f, "
              "ratio %.1f (>= %.0f)",
              r.samples, from_test, r.samples - from_test, r.accuracy, kPointingMin, r.random_baseline,
              r.accuracy / r.random_baseline, kPointingOverBaseline)};
}

Outcome windowed(const Trained& t) {
  // Reference pool: held-out Stable samples.
  std::vector<std::size_t> ref;
  for (auto i : t.data.indices(train::Split::Test))
    if (t.data.samples[i].label == Label::Stable) ref.push_back(i);
  const auto ref_scores = eval::logits(t.model, t.data.samples, ref);

  sim::SimConfig sim = duel_profile(kDatasetDuelRate);
  sim.duel_rate_decay = kDecayTau;
  sim.episode_len = kDecayEpisodeLen;
  pipeline::SamplingConfig sampling;
  sampling.interval = kDecayInterval;
  const auto episodes =
      pipeline::simulate_samples(sim, Label::Unstable, seed_range(kDecaySeedFirst, kDecayEpisodes), sampling, {}, 2000);
  double first = 0.0, last = 0.0;
  std::size_t n_first = 0, n_last = 0, skipped = 0;
  std::string per_episode;
  for (const auto& e : episodes) {
    std::vector<std::size_t> idx(e.samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto scores = eval::logits(t.model, e.samples, idx);
    const std::vector<int> labels(scores.size(), 1);
    const auto w = eval::windowed_auc(scores, labels, ref_scores, kAucWindow);
    const std::size_t third = w.size() / 3;
    per_episode += " [";
    for (std::size_t k = 0; k < w.size(); ++k) {
      per_episode += fmt(k ? " %.2f" : "%.2f", w[k].auc);
      if (w[k].skipped) {
        ++skipped;
        continue;
      }
      if (k < third) {
        first += w[k].auc;
        ++n_first;
      } else if (k >= w.size() - third) {
        last += w[k].auc;
        ++n_last;
      }
    }
    per_episode += "]";
  }
  if (n_first == 0 || n_last == 0) return {false, "no scorable windows in a third"};
  first /= static_cast<double>(n_first);
  last /= static_cast<double>(n_last);
  return {first > last, fmt("first third %.3f > last third %.3f; %zu skipped; windows:", first, last, skipped) +
                            per_episode};
}

std::map<std::string, io::Bytes> snapshot(const fs::path& root) {
  std::map<std::string, io::Bytes> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  return files;
}

Outcome determinism_and_formats(const fs::path& work) {
  // Full CLI pipeline twice on a small configuration.
  const fs::path cfg = work / "small.ini";
  fs::create_directories(work);
  io::write_text_atomic(cfg,
                        "[sim]\nn_ants = 12\narena = 128\nepisode_len = 240\nduel_rate = 6\n"
                        "[flow]\niterations = 50\n[train]\nbatch = 4\nmax_epochs = 2\n");
  std::string failure;
  for (const char* run : {"a", "b"}) {
    const fs::path root = work / run;
    fs::remove_all(root);
    const std::string c = cfg.string();
    const std::vector<std::vector<std::string>> steps{
        {"synth", "--config", c, "--label", "stable", "--episodes", "5", "--seed", "0", "--out", (root / "frames").string()},
        {"synth", "--config", c, "--label", "unstable", "--episodes", "5", "--seed", "5", "--out", (root / "frames").string()},
        {"flow", "--config", c, "--frames", (root / "frames").string(), "--out", (root / "flows").string()},
        {"train", "--config", c, "--samples", (root / "flows").string(), "--out", (root / "model").string()},
        {"explain", "--config", c, "--checkpoint", (root / "model" / "checkpoint.swlm").string(), "--samples",
         (root / "flows").string(), "--out", (root / "maps").string()},
        {"eval", "--config", c, "--checkpoint", (root / "model" / "checkpoint.swlm").string(), "--samples",
         (root / "flows").string(), "--out", (root / "report").string()}};
    for (const auto& args : steps) {
      std::ostringstream o, e;
      if (const int code = cli::run(args, o, e); code != 0 && failure.empty())
        failure = fmt("'%s' exited %d: %s", args[0].c_str(), code, e.str().c_str());
    }
  }
  const auto a = snapshot(work / "a"), b = snapshot(work / "b");
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a) differing += !b.count(name) || b.at(name) != bytes;
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  const bool rerun_ok = failure.empty() && !a.empty() && differing == 0;

  // Golden files: encoding the fixtures reproduces them and decoding them
  // re-encodes to the same bytes.
  const fs::path golden = fs::path(SWARMCAM_SOURCE_DIR) / "tests" / "golden";
  std::vector<std::string> bad;
  auto check = [&](const std::string& name, const io::Bytes& expected, auto roundtrip) {
    const io::Bytes stored = io::read_file(golden / name);
    if (stored != expected || roundtrip(stored) != stored) bad.push_back(name);
  };
  check("field.flo", io::encode_flo(oracle::golden_flow()),
        [](const io::Bytes& b) { return io::encode_flo(io::decode_flo(b)); });
  check("image.pgm", io::encode_pgm(oracle::golden_gray()),
        [](const io::Bytes& b) { return io::encode_pgm(io::decode_pgm(b)); });
  check("image.ppm", io::encode_ppm(oracle::golden_rgb()),
        [](const io::Bytes& b) { return io::encode_ppm(io::decode_ppm(b)); });
  check("model.swlm", model::encode_checkpoint(oracle::golden_checkpoint()),
        [](const io::Bytes& b) { return model::encode_checkpoint(model::decode_checkpoint(b)); });
  std::string bad_list;
  for (const auto& n : bad) bad_list += " " + n;
  return {rerun_ok && bad.empty(),
          fmt("pipeline rerun: %zu files, %zu differ%s; golden round trip: %zu/4 ok%s", a.size(), differing,
              failure.empty() ? "" : (" (" + failure + ")").c_str(), 4 - bad.size(),
              bad.empty() ? "" : (" failed:" + bad_list).c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<std::string> only;
  std::string work = (fs::temp_directory_path() / "swarmcam_acceptance").string();
  app.add_option("--only", only, "Run only these criteria (by name)");
  app.add_option("--workdir", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  Trained trained;
  auto need_model = [&]() -> const Trained& {
    if (!trained.ok) end_to_end(trained);
    return trained;
  };
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-correctness", gradient_correctness},
      {"gradcam-algebra", gradcam_algebra},
      {"gate-exactness", gate_exactness},
      {"bicubic", bicubic},
      {"flow-recovery", flow_recovery},
      {"end-to-end-classification", [&] { return end_to_end(trained); }},
      {"localization", [&] { return localization(need_model()); }},
      {"windowed-auc", [&] { return windowed(need_model()); }},
      {"determinism-and-formats", [&] { return determinism_and_formats(work); }},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
