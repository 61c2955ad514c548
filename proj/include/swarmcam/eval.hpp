#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "swarmcam/gradcam.hpp"
#include "swarmcam/model.hpp"
#include "swarmcam/simulator.hpp"
#include "swarmcam/train.hpp"

namespace swarmcam::eval {

/// Mann-Whitney AUC: (ordered pos/neg pairs + ties / 2) / (n_pos n_neg).
/// Throws ValidationError unless both classes are present.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of samples whose score >= 0.5 agrees with the label.
double accuracy(std::span<const double> probs, std::span<const int> labels, double threshold = 0.5);

inline constexpr double kDefaultDilation = 32.0;

struct PointingResult {
  double accuracy = 0.0;
  double random_baseline = 0.0;
  std::size_t hits = 0;
  std::size_t samples = 0;
};

/// Pixel (x, y) whose centre (x + 0.5, y + 0.5) is tested against the boxes.
bool point_in_boxes(std::size_t x, std::size_t y, std::span<const sim::BBox> boxes, double dilate_r);

/// Fraction of an arena covered by the union of the dilated boxes, counted
/// over pixel centres.
double dilated_union_fraction(std::span<const sim::BBox> boxes, double dilate_r, std::size_t arena_h,
                              std::size_t arena_w);

/// Pointing game over precomputed full-resolution maps: a hit when the
/// first row-major argmax lies in any dilated box.
PointingResult pointing_game_maps(std::span<const gradcam::ImportanceMap> maps,
                                  const std::vector<std::vector<sim::BBox>>& boxes, double dilate_r);

/// Gated (q), upsampled Unstable maps of `model` on each sample, scored by
/// pointing_game_maps. Throws ValidationError when no sample qualifies.
PointingResult pointing_game(const model::Model& model, const std::vector<Sample>& samples,
                             const std::vector<std::vector<sim::BBox>>& boxes, std::size_t arena,
                             double dilate_r = kDefaultDilation, double q = gradcam::kDefaultTopFraction);

struct WindowAuc {
  std::size_t window = 0;     // window index along the stream
  std::size_t first = 0;      // first stream position
  double auc = 0.0;
  bool skipped = false;
  std::string notice;
};

inline constexpr std::size_t kMinPerClass = 4;

/// AUC per contiguous window of `window` stream items. Positives are the
/// window's label-1 items; negatives are the reference pool plus the
/// window's label-0 items. Windows with fewer than 4 of either class are
/// marked skipped with a notice.
std::vector<WindowAuc> windowed_auc(std::span<const double> stream_scores, std::span<const int> stream_labels,
                                    std::span<const double> reference_scores, std::size_t window);

/// Model logits for each sample, computed in parallel and returned in order.
std::vector<double> logits(const model::Model& model, const std::vector<Sample>& samples,
                           const std::vector<std::size_t>& idx);

struct EpisodeAuc {
  std::size_t episode = 0;
  double auc = 0.0;
};

struct EvalReport {
  double auc = 0.0;
  double accuracy = 0.0;
  double pointing_accuracy = 0.0;
  double random_baseline = 0.0;
  std::size_t pointing_samples = 0;
  std::size_t test_samples = 0;
  std::vector<EpisodeAuc> per_episode_auc;
  std::vector<train::EpochLoss> loss_curve;
};

/// Test-split evaluation. Per-episode AUC scores each test episode's samples
/// against the test samples of the other label. Pointing uses test Unstable
/// samples with exactly one active duel; it is left at zero when none exist.
EvalReport evaluate(const model::Model& model, const train::Dataset& data, std::size_t arena,
                    double dilate_r = kDefaultDilation, double q = gradcam::kDefaultTopFraction);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

}  // namespace swarmcam::eval
