#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pstream/evaluation.hpp"

using namespace pstream;

namespace {

VideoScore score(int gt, int mapped, double iou, double conf) {
  VideoScore s;
  s.gt_label = gt;
  s.mapped_label = mapped;
  s.mean_tube_iou = iou;
  s.confidence = conf;
  return s;
}

// Six videos, two classes. Expected values enumerated by hand from the
// ranked lists: class 0 ranks v1, v3, v5; class 1 ranks v2, v4, v6.
std::vector<VideoScore> fixture() {
  return {score(0, 0, 0.8, 0.9), score(0, 1, 0.7, 0.8), score(0, 0, 0.4, 0.7),
          score(1, 1, 0.6, 0.6), score(1, 0, 0.9, 0.5), score(1, 1, 0.2, 0.4)};
}

double total_of(const std::vector<std::vector<double>>& w, const std::vector<int>& m) {
  double t = 0.0;
  for (std::size_t r = 0; r < m.size(); ++r)
    if (m[r] >= 0) t += w[r][static_cast<std::size_t>(m[r])];
  return t;
}

Tube tube_of(std::initializer_list<std::pair<std::size_t, BoundingBox>> frames) {
  return Tube(frames.begin(), frames.end());
}

}  // namespace

TEST(TubeIou, UnionOfFramesConvention) {
  const BoundingBox a{0.5, 0.5, 0.2, 0.2, std::nullopt};
  const auto pred = tube_of({{1, a}, {2, a}});
  const auto truth = tube_of({{0, a}, {1, a}, {2, a}});
  std::vector<double> per;
  EXPECT_NEAR(tube_iou(pred, truth, &per), 2.0 / 3.0, 1e-12);
  ASSERT_EQ(per.size(), 3u);
  EXPECT_EQ(per[0], 0.0);
  EXPECT_NEAR(per[1], 1.0, 1e-12);
  EXPECT_NEAR(per[2], 1.0, 1e-12);
  EXPECT_EQ(tube_iou({}, {}), 0.0);
}

TEST(VideoMap, SingleVideo) {
  EXPECT_EQ(video_map({score(3, 3, 0.8, 1.0)}, 0.5), 1.0);
  EXPECT_EQ(video_map({score(3, 3, 0.8, 1.0)}, 0.9), 0.0);
  EXPECT_THROW(video_map({}, 0.0), Error);
  EXPECT_THROW(video_map({}, 1.5), Error);
}

TEST(VideoMap, HandEnumeratedFixture) {
  const auto s = fixture();
  EXPECT_NEAR(video_map(s, 0.1), 19.0 / 36.0, 1e-12);
  EXPECT_NEAR(video_map(s, 0.3), 5.0 / 12.0, 1e-12);
  EXPECT_NEAR(video_map(s, 0.5), 0.25, 1e-12);
  EXPECT_NEAR(video_map(s, 0.7), 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(video_map(s, 0.9), 0.0, 1e-12);
}

TEST(AverageRecall, CountsAndEdgeCases) {
  const auto s = fixture();
  EXPECT_NEAR(average_recall(s, 0.1), 1.0, 1e-12);
  EXPECT_NEAR(average_recall(s, 0.3), 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(average_recall(s, 0.5), 4.0 / 6.0, 1e-12);
  EXPECT_NEAR(average_recall(s, 0.9), 1.0 / 6.0, 1e-12);
  EXPECT_EQ(average_recall({}, 0.5), 0.0);
  std::vector<VideoScore> perfect(4, score(0, 0, 1.0, 0.0));
  for (double sigma : {0.1, 0.5, 1.0}) EXPECT_EQ(average_recall(perfect, sigma), 1.0);
}

TEST(Metrics, MonotoneInThreshold) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<VideoScore> s;
    for (int v = 0; v < 8; ++v) {
      const auto r = oracle::random_vector(rng, 2, 0.0, 1.0);
      s.push_back(score(static_cast<int>(rng() % 3), static_cast<int>(rng() % 3), r[0], r[1]));
    }
    double pm = 2.0, pr = 2.0;
    for (int k = 1; k <= 9; ++k) {
      const double m = video_map(s, k / 10.0), r = average_recall(s, k / 10.0);
      EXPECT_LE(m, pm);
      EXPECT_LE(r, pr);
      pm = m;
      pr = r;
    }
  }
}

TEST(PoolVideoFeature, ComponentwiseMax) {
  EXPECT_EQ(pool_video_feature({Tensor({2}, {1.0, 5.0}), Tensor({2}, {4.0, 2.0})}).data(),
            (std::vector<double>{4.0, 5.0}));
  const Tensor one({3}, {1.0, -2.0, 0.5});
  EXPECT_EQ(pool_video_feature({one}).data(), one.data());
  EXPECT_THROW(pool_video_feature({}), Error);

  std::mt19937_64 rng(2);
  std::vector<Tensor> frames;
  for (int f = 0; f < 10; ++f) frames.emplace_back(std::vector<std::size_t>{6}, oracle::random_vector(rng, 6));
  const auto pooled = pool_video_feature(frames);
  for (std::size_t k = 0; k < 6; ++k) {
    double m = -1e300;
    for (const auto& f : frames) m = std::max(m, f[k]);
    EXPECT_EQ(pooled[k], m);
  }
}

TEST(KMeans, SeparatesWellSeparatedClouds) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.1);
  std::vector<std::vector<double>> pts;
  for (int q = 0; q < 20; ++q) pts.push_back({n(rng) + (q < 10 ? 0.0 : 10.0), n(rng)});
  const auto r = kmeans(pts, 2, 7);
  for (int q = 1; q < 10; ++q) EXPECT_EQ(r.assignments[q], r.assignments[0]);
  for (int q = 11; q < 20; ++q) EXPECT_EQ(r.assignments[q], r.assignments[10]);
  EXPECT_NE(r.assignments[0], r.assignments[10]);
}

TEST(KMeans, OneClusterPerPoint) {
  std::mt19937_64 rng(4);
  std::vector<std::vector<double>> pts;
  for (int q = 0; q < 6; ++q) pts.push_back(oracle::random_vector(rng, 3));
  const auto r = kmeans(pts, 6, 1);
  EXPECT_EQ(r.inertia, 0.0);
  auto a = r.assignments;
  std::sort(a.begin(), a.end());
  EXPECT_EQ(std::unique(a.begin(), a.end()), a.end());
}

TEST(KMeans, BeatsRandomAssignmentsAndIsDeterministic) {
  std::mt19937_64 rng(5);
  std::vector<std::vector<double>> pts;
  for (int q = 0; q < 30; ++q) pts.push_back(oracle::random_vector(rng, 2, -5.0, 5.0));
  const auto r = kmeans(pts, 3, 11);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> assign(30);
    for (auto& a : assign) a = rng() % 3;
    double inertia = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> mean(2, 0.0);
      std::size_t count = 0;
      for (std::size_t q = 0; q < 30; ++q) {
        if (assign[q] != c) continue;
        ++count;
        for (int k = 0; k < 2; ++k) mean[k] += pts[q][k];
      }
      if (count == 0) continue;
      for (auto& m : mean) m /= static_cast<double>(count);
      for (std::size_t q = 0; q < 30; ++q) {
        if (assign[q] == c) inertia += std::pow(pts[q][0] - mean[0], 2) + std::pow(pts[q][1] - mean[1], 2);
      }
    }
    EXPECT_LE(r.inertia, inertia + 1e-9);
  }
  const auto again = kmeans(pts, 3, 11);
  EXPECT_EQ(again.assignments, r.assignments);
  EXPECT_EQ(again.centroids, r.centroids);
  for (std::size_t q = 1; q < r.inertia_history.size(); ++q) {
    EXPECT_LE(r.inertia_history[q], r.inertia_history[q - 1] + 1e-9);
  }
}

TEST(KMeans, RejectsBadK) {
  const std::vector<std::vector<double>> pts{{0.0}, {1.0}};
  EXPECT_THROW(kmeans(pts, 0, 0), Error);
  EXPECT_THROW(kmeans(pts, 3, 0), Error);
}

TEST(Hungarian, SmallExamples) {
  const std::vector<std::vector<double>> diag{{5, 1}, {0, 7}};
  const auto m = hungarian_map(diag);
  EXPECT_EQ(m, (std::vector<int>{0, 1}));
  EXPECT_EQ(total_of(diag, m), 12.0);
  const std::vector<std::vector<double>> perm{{0, 0, 9}, {8, 0, 0}, {0, 7, 1}};
  EXPECT_EQ(hungarian_map(perm), (std::vector<int>{2, 0, 1}));
}

TEST(Hungarian, MatchesPermutationSearch) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::vector<double>> w(5, std::vector<double>(5));
    for (auto& row : w)
      for (auto& v : row) v = static_cast<double>(rng() % 20);
    EXPECT_DOUBLE_EQ(total_of(w, max_weight_assignment(w)), oracle::best_assignment_total(w));
  }
}

TEST(Hungarian, RectangularAndFallback) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    const std::size_t rows = 1 + rng() % 5, cols = 1 + rng() % 5;
    std::vector<std::vector<double>> w(rows, std::vector<double>(cols));
    for (auto& row : w)
      for (auto& v : row) v = static_cast<double>(rng() % 10);
    const auto m = max_weight_assignment(w);
    EXPECT_DOUBLE_EQ(total_of(w, m), oracle::best_assignment_total(w));
    std::vector<int> used;
    for (int c : m)
      if (c >= 0) used.push_back(c);
    std::sort(used.begin(), used.end());
    EXPECT_EQ(std::unique(used.begin(), used.end()), used.end());
  }
  // Three clusters, two labels: the unmatched cluster takes its majority.
  const std::vector<std::vector<double>> conf{{4, 0}, {0, 5}, {1, 3}};
  EXPECT_EQ(hungarian_map(conf), (std::vector<int>{0, 1, 1}));
}

TEST(Hungarian, NeverBelowGreedy) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::vector<double>> w(4, std::vector<double>(4));
    for (auto& row : w)
      for (auto& v : row) v = static_cast<double>(rng() % 50);
    std::vector<bool> taken(4, false);
    double greedy = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
      int best = -1;
      for (std::size_t c = 0; c < 4; ++c)
        if (!taken[c] && (best < 0 || w[r][c] > w[r][static_cast<std::size_t>(best)])) best = static_cast<int>(c);
      taken[static_cast<std::size_t>(best)] = true;
      greedy += w[r][static_cast<std::size_t>(best)];
    }
    EXPECT_GE(total_of(w, hungarian_map(w)), greedy);
  }
}

TEST(Homogeneity, Examples) {
  EXPECT_EQ(homogeneity({0, 0, 1, 1}, {3, 3, 5, 5}), 1.0);
  EXPECT_NEAR(homogeneity({0, 0, 0, 0}, {1, 1, 2, 2}), 0.0, 1e-15);
  EXPECT_EQ(homogeneity({0, 1, 2}, {4, 4, 4}), 1.0);
  // H(C) = H(1/3, 2/3); the mixed cluster holds half the videos with the
  // same class split, so H(C|K) = H(C) / 2.
  EXPECT_NEAR(homogeneity({0, 0, 0, 1, 1, 1}, {0, 0, 1, 1, 1, 1}), 0.5, 1e-12);
  EXPECT_THROW(homogeneity({0, 1}, {0}), Error);
}

TEST(Homogeneity, RelabelInvariant) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::size_t> k(12);
    std::vector<int> c(12);
    for (auto& v : k) v = rng() % 3;
    for (auto& v : c) v = static_cast<int>(rng() % 4);
    std::vector<std::size_t> kp(12);
    std::vector<int> cp(12);
    for (std::size_t q = 0; q < 12; ++q) {
      kp[q] = (k[q] + 1) % 3;
      cp[q] = 10 - c[q];
    }
    EXPECT_NEAR(homogeneity(k, c), homogeneity(kp, cp), 1e-12);
  }
}

namespace {

struct Corpus {
  std::vector<VideoPrediction> predictions;
  std::vector<VideoTruth> truths;
};

Corpus separable_corpus(std::size_t videos_per_class, std::size_t classes, bool perfect_boxes) {
  Corpus c;
  std::mt19937_64 rng(10);
  const BoundingBox gt{0.4, 0.5, 0.2, 0.3, std::nullopt};
  const BoundingBox off{0.8, 0.1, 0.1, 0.1, std::nullopt};
  for (std::size_t cls = 0; cls < classes; ++cls) {
    for (std::size_t v = 0; v < videos_per_class; ++v) {
      const std::string id = "c" + std::to_string(cls) + "_" + std::to_string(v);
      VideoTruth t{id, static_cast<int>(cls), {}};
      VideoPrediction p{id, {}, {}};
      for (std::size_t f = 0; f < 5; ++f) {
        t.tube[f] = gt;
        p.tube[f] = perfect_boxes || v % 2 == 0 ? gt : off;
        auto feat = oracle::random_vector(rng, 3, -0.1, 0.1);
        feat[cls % 3] += 10.0 * static_cast<double>(cls + 1);
        p.features.emplace_back(std::vector<std::size_t>{3}, feat);
      }
      c.truths.push_back(t);
      c.predictions.push_back(p);
    }
  }
  return c;
}

}  // namespace

TEST(Evaluate, PerfectPredictionsScoreOne) {
  const auto c = separable_corpus(3, 2, true);
  const auto r = evaluate(c.predictions, c.truths, {});
  EXPECT_EQ(r.k, 2u);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.homogeneity, 1.0);
  for (const auto& [sigma, v] : r.map) EXPECT_EQ(v, 1.0) << sigma;
  for (const auto& [sigma, v] : r.recall) EXPECT_EQ(v, 1.0) << sigma;
  EXPECT_EQ(r.warnings, 0u);
}

TEST(Evaluate, MissingGroundTruthIsListedAndExcluded) {
  auto c = separable_corpus(2, 2, false);
  VideoPrediction stray{"zz_unknown", {}, {Tensor({3}, {0.0, 0.0, 0.0})}};
  c.predictions.push_back(stray);
  const auto r = evaluate(c.predictions, c.truths, {});
  EXPECT_EQ(r.missing_ground_truth, (std::vector<std::string>{"zz_unknown"}));
  EXPECT_GE(r.warnings, 1u);
  EXPECT_EQ(r.videos.size(), 4u);
  EXPECT_NEAR(r.recall.back().second, 0.5, 1e-12);
}

TEST(Evaluate, VideosWithoutPredictionsScoreZero) {
  auto c = separable_corpus(2, 2, true);
  c.predictions.pop_back();
  const auto r = evaluate(c.predictions, c.truths, {});
  ASSERT_EQ(r.videos.size(), 4u);
  const auto it = std::find_if(r.videos.begin(), r.videos.end(),
                               [](const VideoScore& s) { return s.cluster < 0; });
  ASSERT_NE(it, r.videos.end());
  EXPECT_EQ(it->mean_tube_iou, 0.0);
  EXPECT_NEAR(r.accuracy, 0.75, 1e-12);
}

TEST(Evaluate, KScanCoversRangeAndKeepsBest) {
  const auto c = separable_corpus(4, 2, false);
  EvaluationOptions o;
  o.scan_k = true;
  const auto r = evaluate(c.predictions, c.truths, o);
  EXPECT_EQ(r.k_scan.size(), 5u);  // k = 2..6
  double best = 0.0;
  for (const auto& [k, v] : r.k_scan) best = std::max(best, v);
  EXPECT_EQ(r.k_scan.at(r.k), best);
}

TEST(Evaluate, ClusterRelabelingDoesNotChangeAccuracy) {
  // Shuffled cluster ids only permute the confusion rows.
  std::mt19937_64 rng(11);
  for (int t = 0; t < 30; ++t) {
    std::vector<std::vector<double>> conf(4, std::vector<double>(4));
    for (auto& row : conf)
      for (auto& v : row) v = static_cast<double>(rng() % 9);
    std::vector<std::size_t> perm{0, 1, 2, 3};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<double>> shuffled(4);
    for (std::size_t r = 0; r < 4; ++r) shuffled[perm[r]] = conf[r];
    EXPECT_EQ(total_of(conf, hungarian_map(conf)), total_of(shuffled, hungarian_map(shuffled)));
  }
}

TEST(Evaluate, RankByTubeIou) {
  const auto c = separable_corpus(3, 2, false);
  EvaluationOptions o;
  o.rank_by = RankBy::kTubeIou;
  const auto r = evaluate(c.predictions, c.truths, o);
  for (const auto& v : r.videos) EXPECT_EQ(v.confidence, v.mean_tube_iou);
}
