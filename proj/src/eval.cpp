#include "swarmcam/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "swarmcam/errors.hpp"

namespace swarmcam::eval {

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auc_roc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the Mann-Whitney U, counted over runs of tied scores: every
  // positive beats the negatives below its run and ties half of its own.
  std::uint64_t twice_u = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t run_pos = 0, run_neg = 0;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) {
      const int l = labels[order[j]];
      if (l != 0 && l != 1) throw ValidationError("auc_roc: labels must be 0 or 1");
      (l == 1 ? run_pos : run_neg) += 1;
    }
    twice_u += run_pos * (2 * n_neg + run_neg);
    n_pos += run_pos;
    n_neg += run_neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw ValidationError("auc_roc: both classes must be present");
  const std::uint64_t pairs2 = 2 * n_pos * n_neg;
  // Divide on the upper side and complement below so that swapping the
  // labels gives exactly 1 - auc.
  if (2 * twice_u >= pairs2) return static_cast<double>(twice_u) / static_cast<double>(pairs2);
  return 1.0 - static_cast<double>(pairs2 - twice_u) / static_cast<double>(pairs2);
}

double accuracy(std::span<const double> probs, std::span<const int> labels, double threshold) {
  if (probs.size() != labels.size() || probs.empty()) throw ValidationError("accuracy: bad input lengths");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) ok += (probs[i] >= threshold ? 1 : 0) == labels[i];
  return static_cast<double>(ok) / static_cast<double>(probs.size());
}

bool point_in_boxes(std::size_t x, std::size_t y, std::span<const sim::BBox> boxes, double dilate_r) {
  const double cx = static_cast<double>(x) + 0.5, cy = static_cast<double>(y) + 0.5;
  return std::any_of(boxes.begin(), boxes.end(),
                     [&](const sim::BBox& b) { return b.dilated(dilate_r).contains(cx, cy); });
}

double dilated_union_fraction(std::span<const sim::BBox> boxes, double dilate_r, std::size_t arena_h,
                              std::size_t arena_w) {
  std::size_t inside = 0;
  for (std::size_t y = 0; y < arena_h; ++y)
    for (std::size_t x = 0; x < arena_w; ++x) inside += point_in_boxes(x, y, boxes, dilate_r);
  return static_cast<double>(inside) / static_cast<double>(arena_h * arena_w);
}

PointingResult pointing_game_maps(std::span<const gradcam::ImportanceMap> maps,
                                  const std::vector<std::vector<sim::BBox>>& boxes, double dilate_r) {
  if (maps.size() != boxes.size()) throw ValidationError("pointing_game: maps and boxes differ in count");
  if (maps.empty()) throw ValidationError("pointing_game: no qualifying samples");
  PointingResult r;
  double area = 0.0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (boxes[i].empty()) throw ValidationError("pointing_game: sample without an active duel");
    const std::size_t idx = gradcam::argmax(maps[i]);
    r.hits += point_in_boxes(idx % maps[i].width, idx / maps[i].width, boxes[i], dilate_r);
    area += dilated_union_fraction(boxes[i], dilate_r, maps[i].height, maps[i].width);
  }
  r.samples = maps.size();
  r.accuracy = static_cast<double>(r.hits) / static_cast<double>(r.samples);
  r.random_baseline = area / static_cast<double>(r.samples);
  return r;
}

PointingResult pointing_game(const model::Model& model, const std::vector<Sample>& samples,
                             const std::vector<std::vector<sim::BBox>>& boxes, std::size_t arena, double dilate_r,
                             double q) {
  if (samples.size() != boxes.size()) throw ValidationError("pointing_game: samples and boxes differ in count");
  if (samples.empty()) throw ValidationError("pointing_game: no qualifying samples");
  std::vector<gradcam::ImportanceMap> maps(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < samples.size(); ++i)
    maps[i] = gradcam::explain(model, samples[i].tensor, Label::Unstable, arena, arena, q).upsampled;
  return pointing_game_maps(maps, boxes, dilate_r);
}

std::vector<WindowAuc> windowed_auc(std::span<const double> stream_scores, std::span<const int> stream_labels,
                                    std::span<const double> reference_scores, std::size_t window) {
  if (window == 0) throw ValidationError("windowed_auc: window must be positive");
  if (stream_scores.size() != stream_labels.size())
    throw ValidationError("windowed_auc: scores and labels differ in length");
  std::vector<WindowAuc> out;
  for (std::size_t start = 0, w = 0; start < stream_scores.size(); start += window, ++w) {
    const std::size_t end = std::min(stream_scores.size(), start + window);
    std::vector<double> s(reference_scores.begin(), reference_scores.end());
    std::vector<int> l(reference_scores.size(), 0);
    s.insert(s.end(), stream_scores.begin() + static_cast<std::ptrdiff_t>(start),
             stream_scores.begin() + static_cast<std::ptrdiff_t>(end));
    l.insert(l.end(), stream_labels.begin() + static_cast<std::ptrdiff_t>(start),
             stream_labels.begin() + static_cast<std::ptrdiff_t>(end));
    const auto pos = static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
    const std::size_t neg = l.size() - pos;
    WindowAuc r{w, start, 0.0, false, {}};
    if (pos < kMinPerClass || neg < kMinPerClass) {
      r.skipped = true;
      r.notice = "window " + std::to_string(w) + " skipped: " + std::to_string(pos) + " positives, " +
                 std::to_string(neg) + " negatives";
    } else {
      r.auc = auc_roc(s, l);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> logits(const model::Model& model, const std::vector<Sample>& samples,
                           const std::vector<std::size_t>& idx) {
  std::vector<double> out(idx.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = model::predict_logit(model, samples[idx[i]].tensor);
  return out;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

EvalReport evaluate(const model::Model& model, const train::Dataset& data, std::size_t arena, double dilate_r,
                    double q) {
  const auto test = data.indices(train::Split::Test);
  if (test.empty()) throw ValidationError("evaluate: empty test split");
  const auto scores = logits(model, data.samples, test);
  std::vector<int> labels;
  std::vector<double> probs;
  for (std::size_t i = 0; i < test.size(); ++i) {
    labels.push_back(static_cast<int>(data.samples[test[i]].label));
    probs.push_back(sigmoid(scores[i]));
  }
  EvalReport r;
  r.test_samples = test.size();
  r.auc = auc_roc(scores, labels);
  r.accuracy = accuracy(probs, labels);

  std::map<std::size_t, std::vector<std::size_t>> by_episode;  // positions into `test`
  for (std::size_t i = 0; i < test.size(); ++i) by_episode[data.episode[test[i]]].push_back(i);
  for (const auto& [ep, pos] : by_episode) {
    const int own = labels[pos.front()];
    std::vector<double> s;
    std::vector<int> l;
    for (std::size_t i : pos) {
      s.push_back(scores[i]);
      l.push_back(labels[i]);
    }
    for (std::size_t i = 0; i < test.size(); ++i)
      if (labels[i] != own) {
        s.push_back(scores[i]);
        l.push_back(labels[i]);
      }
    r.per_episode_auc.push_back({ep, auc_roc(s, l)});
  }

  std::vector<Sample> loc_samples;
  std::vector<std::vector<sim::BBox>> loc_boxes;
  for (std::size_t i : test)
    if (data.samples[i].label == Label::Unstable && i < data.duel_boxes.size() && data.duel_boxes[i].size() == 1) {
      loc_samples.push_back(data.samples[i]);
      loc_boxes.push_back(data.duel_boxes[i]);
    }
  if (!loc_samples.empty()) {
    const auto p = pointing_game(model, loc_samples, loc_boxes, arena, dilate_r, q);
    r.pointing_accuracy = p.accuracy;
    r.random_baseline = p.random_baseline;
    r.pointing_samples = p.samples;
  }
  return r;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["auc"] = report.auc;
  j["accuracy"] = report.accuracy;
  j["pointing_accuracy"] = report.pointing_accuracy;
  j["random_baseline"] = report.random_baseline;
  j["pointing_samples"] = report.pointing_samples;
  j["test_samples"] = report.test_samples;
  auto per = nlohmann::ordered_json::array();
  for (const auto& e : report.per_episode_auc) per.push_back({{"episode", e.episode}, {"auc", e.auc}});
  j["per_episode_auc"] = std::move(per);
  auto curve = nlohmann::ordered_json::array();
  for (const auto& e : report.loss_curve)
    curve.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  j["loss_curve"] = std::move(curve);
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.auc = j.at("auc").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.pointing_accuracy = j.at("pointing_accuracy").get<double>();
    r.random_baseline = j.at("random_baseline").get<double>();
    r.pointing_samples = j.at("pointing_samples").get<std::size_t>();
    r.test_samples = j.at("test_samples").get<std::size_t>();
    for (const auto& e : j.at("per_episode_auc"))
      r.per_episode_auc.push_back({e.at("episode").get<std::size_t>(), e.at("auc").get<double>()});
    for (const auto& e : j.at("loss_curve"))
      r.loss_curve.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                              e.at("val_loss").get<double>()});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("eval report: ") + e.what());
  }
}

}  // namespace swarmcam::eval
