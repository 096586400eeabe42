#include "pstream/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "pstream/error.hpp"

namespace pstream {

double tube_iou(const Tube& predicted, const Tube& truth, std::vector<double>* per_frame) {
  std::set<std::size_t> frames;
  for (const auto& [f, _] : predicted) frames.insert(f);
  for (const auto& [f, _] : truth) frames.insert(f);
  if (per_frame) per_frame->clear();
  if (frames.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t f : frames) {
    const auto p = predicted.find(f);
    const auto t = truth.find(f);
    const double v = (p != predicted.end() && t != truth.end()) ? iou(p->second, t->second) : 0.0;
    if (per_frame) per_frame->push_back(v);
    total += v;
  }
  return total / static_cast<double>(frames.size());
}

double video_map(const std::vector<VideoScore>& scores, double sigma) {
  if (!(sigma > 0.0 && sigma <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "overlap threshold must lie in (0, 1]");
  }
  std::set<int> classes;
  for (const auto& s : scores) {
    if (s.gt_label) classes.insert(*s.gt_label);
  }
  if (classes.empty()) return 0.0;

  double sum_ap = 0.0;
  for (int c : classes) {
    std::vector<std::size_t> ranked;
    std::size_t positives = 0;
    for (std::size_t v = 0; v < scores.size(); ++v) {
      if (scores[v].gt_label == c) ++positives;
      if (scores[v].mapped_label == c) ranked.push_back(v);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
      return scores[a].confidence > scores[b].confidence;
    });
    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
      const auto& s = scores[ranked[rank]];
      if (s.gt_label == c && s.mean_tube_iou >= sigma) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
      }
    }
    sum_ap += ap / static_cast<double>(positives);
  }
  return sum_ap / static_cast<double>(classes.size());
}

double average_recall(const std::vector<VideoScore>& scores, double sigma) {
  if (scores.empty()) return 0.0;
  const auto hits = std::count_if(scores.begin(), scores.end(),
                                  [&](const VideoScore& s) { return s.mean_tube_iou >= sigma; });
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

Tensor pool_video_feature(const std::vector<Tensor>& frames) {
  if (frames.empty()) throw Error(ErrorCode::kInvalidArgument, "no frame features to pool");
  Tensor out = frames.front();
  for (std::size_t f = 1; f < frames.size(); ++f) {
    if (!frames[f].same_shape(out)) {
      throw Error(ErrorCode::kShapeMismatch, "frame features differ in length");
    }
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::max(out[k], frames[f][k]);
  }
  return out;
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// Nearest centroid, ties to the lower index.
std::size_t nearest(const std::vector<double>& p, const std::vector<std::vector<double>>& centroids,
                    double* best_d2 = nullptr) {
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_dist) {
      best_dist = d;
      best = c;
    }
  }
  if (best_d2) *best_d2 = best_dist;
  return best;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iterations) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
  if (k > points.size()) {
    throw Error(ErrorCode::kInvalidArgument, "k=" + std::to_string(k) + " exceeds the " +
                                                 std::to_string(points.size()) + " points");
  }
  const std::size_t n = points.size();
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw Error(ErrorCode::kShapeMismatch, "k-means points differ in length");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  KMeansResult out;
  out.k = k;
  out.centroids.push_back(points[std::min(n - 1, static_cast<std::size_t>(unit(rng) * n))]);
  std::vector<double> d2(n);
  while (out.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest(points[i], out.centroids, &d2[i]);
      total += d2[i];
    }
    std::size_t chosen = 0;
    if (total > 0.0) {
      double target = unit(rng) * total;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        if (target < d2[i]) {
          chosen = i;
          break;
        }
        target -= d2[i];
      }
      while (d2[chosen] <= 0.0) --chosen;
    } else {
      // All remaining points coincide with centroids; take the next unused index.
      chosen = out.centroids.size() % n;
    }
    out.centroids.push_back(points[chosen]);
  }

  out.assignments.assign(n, 0);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = iter == 0;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      const std::size_t c = nearest(points[i], out.centroids, &d);
      if (c != out.assignments[i]) changed = true;
      out.assignments[i] = c;
      inertia += d;
    }
    out.inertia_history.push_back(inertia);
    out.inertia = inertia;
    if (!changed) break;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = out.assignments[i];
      ++counts[c];
      for (std::size_t q = 0; q < dim; ++q) sums[c][q] += points[i][q];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t q = 0; q < dim; ++q) {
        out.centroids[c][q] = sums[c][q] / static_cast<double>(counts[c]);
      }
    }
  }
  // Final inertia against the final centroids.
  out.inertia = 0.0;
  out.margins.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double first = std::numeric_limits<double>::infinity();
    double second = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double d = std::sqrt(squared_distance(points[i], out.centroids[c]));
      if (d < first) {
        second = first;
        first = d;
      } else if (d < second) {
        second = d;
      }
    }
    out.inertia += first * first;
    out.margins[i] = k > 1 ? second - first : 0.0;
  }
  return out;
}

namespace {

// Minimum-cost assignment for rows <= cols (shortest augmenting path with
// potentials). Returns the column for every row.
std::vector<int> min_cost_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const std::size_t m = cost.front().size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
  }
  return row_to_col;
}

}  // namespace

std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weights) {
  if (weights.empty() || weights.front().empty()) return std::vector<int>(weights.size(), -1);
  const std::size_t rows = weights.size();
  const std::size_t cols = weights.front().size();
  for (const auto& row : weights) {
    if (row.size() != cols) throw Error(ErrorCode::kShapeMismatch, "ragged assignment matrix");
  }
  if (rows <= cols) {
    std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) cost[r][c] = -weights[r][c];
    return min_cost_assignment(cost);
  }
  std::vector<std::vector<double>> cost(cols, std::vector<double>(rows));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) cost[c][r] = -weights[r][c];
  const auto col_to_row = min_cost_assignment(cost);
  std::vector<int> out(rows, -1);
  for (std::size_t c = 0; c < cols; ++c) out[static_cast<std::size_t>(col_to_row[c])] = static_cast<int>(c);
  return out;
}

std::vector<int> hungarian_map(const std::vector<std::vector<double>>& confusion) {
  for (const auto& row : confusion) {
    for (double v : row) {
      if (!(v >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "confusion counts must be >= 0");
    }
  }
  auto mapping = max_weight_assignment(confusion);
  for (std::size_t r = 0; r < mapping.size(); ++r) {
    if (mapping[r] >= 0 || confusion[r].empty()) continue;
    const auto best = std::max_element(confusion[r].begin(), confusion[r].end());
    mapping[r] = static_cast<int>(best - confusion[r].begin());
  }
  return mapping;
}

double homogeneity(const std::vector<std::size_t>& clusters, const std::vector<int>& labels) {
  if (clusters.size() != labels.size()) {
    throw Error(ErrorCode::kShapeMismatch, "cluster and label lists differ in length");
  }
  const double n = static_cast<double>(labels.size());
  if (labels.empty()) return 1.0;
  std::map<int, double> class_count;
  std::map<std::size_t, double> cluster_count;
  std::map<std::pair<std::size_t, int>, double> joint;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    class_count[labels[i]] += 1.0;
    cluster_count[clusters[i]] += 1.0;
    joint[{clusters[i], labels[i]}] += 1.0;
  }
  double h_class = 0.0;
  for (const auto& [_, c] : class_count) h_class -= (c / n) * std::log(c / n);
  if (h_class <= 0.0) return 1.0;
  double h_cond = 0.0;
  for (const auto& [key, c] : joint) {
    h_cond -= (c / n) * std::log(c / cluster_count[key.first]);
  }
  return std::clamp(1.0 - h_cond / h_class, 0.0, 1.0);
}

namespace {

struct Clustering {
  std::vector<VideoScore> scores;
  double mean_map = 0.0;
  double homogeneity = 1.0;
};

}  // namespace

EvaluationReport evaluate(const std::vector<VideoPrediction>& predictions,
                          const std::vector<VideoTruth>& truths, const EvaluationOptions& options) {
  EvaluationReport report;
  report.rank_by = options.rank_by;

  std::map<std::string, const VideoTruth*> truth_by_id;
  for (const auto& t : truths) truth_by_id[t.video_id] = &t;

  std::vector<VideoScore> base;               // one per ground-truth video
  std::vector<std::vector<double>> points;    // pooled features of predicted videos
  std::vector<std::size_t> point_owner;       // index into base
  std::set<std::string> predicted_ids;

  for (const auto& p : predictions) {
    const auto it = truth_by_id.find(p.video_id);
    if (it == truth_by_id.end()) {
      report.missing_ground_truth.push_back(p.video_id);
      ++report.warnings;
      continue;
    }
    predicted_ids.insert(p.video_id);
    VideoScore s;
    s.video_id = p.video_id;
    s.gt_label = it->second->label;
    s.mean_tube_iou = tube_iou(p.tube, it->second->tube, &s.frame_ious);
    if (!p.features.empty()) {
      points.push_back(pool_video_feature(p.features).data());
      point_owner.push_back(base.size());
    }
    base.push_back(std::move(s));
  }
  for (const auto& t : truths) {
    if (predicted_ids.count(t.video_id)) continue;
    ++report.warnings;
    VideoScore s;
    s.video_id = t.video_id;
    s.gt_label = t.label;
    base.push_back(std::move(s));
  }
  std::sort(base.begin(), base.end(),
            [](const VideoScore& a, const VideoScore& b) { return a.video_id < b.video_id; });
  // point_owner indexes the unsorted order; rebuild it against sorted ids.
  {
    std::vector<std::string> owner_ids;
    for (const auto& p : predictions) {
      if (truth_by_id.count(p.video_id) && !p.features.empty()) owner_ids.push_back(p.video_id);
    }
    for (std::size_t q = 0; q < owner_ids.size(); ++q) {
      const auto pos = std::find_if(base.begin(), base.end(), [&](const VideoScore& s) {
        return s.video_id == owner_ids[q];
      });
      point_owner[q] = static_cast<std::size_t>(pos - base.begin());
    }
  }

  std::set<int> label_set;
  for (const auto& s : base) {
    if (s.gt_label) label_set.insert(*s.gt_label);
  }
  const std::vector<int> labels(label_set.begin(), label_set.end());
  const std::size_t k_gt = std::max<std::size_t>(1, labels.size());

  auto run = [&](std::size_t k) {
    Clustering out;
    out.scores = base;
    if (points.empty()) return out;
    k = std::min(k, points.size());
    const auto km = kmeans(points, k, options.seed);
    std::vector<std::vector<double>> confusion(k, std::vector<double>(labels.size(), 0.0));
    std::vector<std::size_t> clustered;
    std::vector<int> clustered_labels;
    for (std::size_t q = 0; q < points.size(); ++q) {
      const auto& s = out.scores[point_owner[q]];
      if (!s.gt_label) continue;
      const auto col = std::lower_bound(labels.begin(), labels.end(), *s.gt_label) - labels.begin();
      confusion[km.assignments[q]][static_cast<std::size_t>(col)] += 1.0;
      clustered.push_back(km.assignments[q]);
      clustered_labels.push_back(*s.gt_label);
    }
    const auto mapping = labels.empty() ? std::vector<int>(k, -1) : hungarian_map(confusion);
    for (std::size_t q = 0; q < points.size(); ++q) {
      auto& s = out.scores[point_owner[q]];
      s.cluster = static_cast<int>(km.assignments[q]);
      const int col = mapping[km.assignments[q]];
      s.mapped_label = col >= 0 ? labels[static_cast<std::size_t>(col)] : -1;
      s.confidence = options.rank_by == RankBy::kMargin ? km.margins[q] : s.mean_tube_iou;
    }
    double total = 0.0;
    for (double sigma : options.sigmas) total += video_map(out.scores, sigma);
    out.mean_map = options.sigmas.empty() ? 0.0 : total / static_cast<double>(options.sigmas.size());
    out.homogeneity = homogeneity(clustered, clustered_labels);
    return out;
  };

  std::size_t k = options.k.value_or(k_gt);
  Clustering best = run(k);
  if (options.scan_k) {
    report.k_scan[k] = best.mean_map;
    for (std::size_t cand = k_gt; cand <= 3 * k_gt && cand <= std::max<std::size_t>(points.size(), 1); ++cand) {
      if (report.k_scan.count(cand)) continue;
      Clustering c = run(cand);
      report.k_scan[cand] = c.mean_map;
      if (c.mean_map > best.mean_map) {
        best = std::move(c);
        k = cand;
      }
    }
  }
  report.k = points.empty() ? k : std::min(k, points.size());
  report.videos = std::move(best.scores);
  report.homogeneity = best.homogeneity;
  for (double sigma : options.sigmas) {
    report.map.emplace_back(sigma, video_map(report.videos, sigma));
    report.recall.emplace_back(sigma, average_recall(report.videos, sigma));
  }
  std::size_t labelled = 0;
  std::size_t correct = 0;
  for (const auto& s : report.videos) {
    if (!s.gt_label) continue;
    ++labelled;
    if (s.mapped_label == *s.gt_label) ++correct;
  }
  report.accuracy = labelled ? static_cast<double>(correct) / static_cast<double>(labelled) : 0.0;
  return report;
}

}  // namespace pstream
