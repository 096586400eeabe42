#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pstream/box.hpp"
#include "pstream/numerics.hpp"

namespace pstream {

using Tube = std::map<std::size_t, BoundingBox>;  // frame index -> box

struct VideoScore {
  std::string video_id;
  std::optional<int> gt_label;
  int cluster = -1;
  int mapped_label = -1;
  double mean_tube_iou = 0.0;
  std::vector<double> frame_ious;
  double confidence = 0.0;  // ranking key for average precision
};

// Mean per-frame IoU over the union of frames covered by either tube; frames
// covered by only one tube contribute 0.
double tube_iou(const Tube& predicted, const Tube& truth, std::vector<double>* per_frame = nullptr);

// Video-level mean average precision. A video is a true positive for class c
// when mapped_label == gt_label == c and its tube IoU reaches sigma. Each
// class's list is ranked by descending confidence (ties by input order).
double video_map(const std::vector<VideoScore>& scores, double sigma);

// Fraction of videos whose tube IoU reaches sigma.
double average_recall(const std::vector<VideoScore>& scores, double sigma);

// Componentwise max over per-frame features.
Tensor pool_video_feature(const std::vector<Tensor>& frames);

struct KMeansResult {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centroids;
  std::vector<double> inertia_history;  // after each assignment step
  double inertia = 0.0;
  std::vector<double> margins;          // second-nearest minus nearest centroid distance
};

// Lloyd's algorithm with k-means++ seeding. Deterministic for a given seed.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iterations = 300);

// Maximum-weight assignment of rows to columns. Returns, for each row, its
// column or -1 when there are more rows than columns and it stayed unmatched.
std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weights);

// Cluster -> label mapping maximizing the total matched count. When there are
// more clusters than labels, unmatched clusters fall back to their majority
// label.
std::vector<int> hungarian_map(const std::vector<std::vector<double>>& confusion);

double homogeneity(const std::vector<std::size_t>& clusters, const std::vector<int>& labels);

struct ClusterAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centroids;
  std::vector<int> mapping;  // cluster -> label
  std::vector<double> margins;
};

enum class RankBy { kMargin, kTubeIou };

struct VideoPrediction {
  std::string video_id;
  Tube tube;
  std::vector<Tensor> features;
};

struct VideoTruth {
  std::string video_id;
  std::optional<int> label;
  Tube tube;
};

struct EvaluationOptions {
  std::optional<std::size_t> k;  // defaults to the number of ground-truth classes
  bool scan_k = false;           // pick k in [k_gt, 3 k_gt] with the best mean mAP
  RankBy rank_by = RankBy::kMargin;
  std::uint64_t seed = 0;
  std::vector<double> sigmas = {0.1, 0.2, 0.3, 0.5};
};

struct EvaluationReport {
  std::size_t k = 0;
  std::map<std::size_t, double> k_scan;  // k -> mean mAP over sigmas
  std::vector<std::pair<double, double>> map;     // (sigma, mAP)
  std::vector<std::pair<double, double>> recall;  // (sigma, recall)
  double accuracy = 0.0;
  double homogeneity = 0.0;
  std::vector<VideoScore> videos;
  std::vector<std::string> missing_ground_truth;
  std::size_t warnings = 0;
  RankBy rank_by = RankBy::kMargin;
};

EvaluationReport evaluate(const std::vector<VideoPrediction>& predictions,
                          const std::vector<VideoTruth>& truths, const EvaluationOptions& options);

}  // namespace pstream
