#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

LstmOut lstm_step(const Lstm& cell, const std::vector<double>& x, const std::vector<double>& h,
                  const std::vector<double>& c) {
  const std::size_t n = cell.hid;
  const std::size_t cols = cell.in + cell.hid;
  std::vector<double> z(4 * n);
  for (std::size_t row = 0; row < 4 * n; ++row) {
    double acc = cell.b[row];
    for (std::size_t q = 0; q < cell.in; ++q) acc += cell.w[row * cols + q] * x[q];
    for (std::size_t q = 0; q < n; ++q) acc += cell.w[row * cols + cell.in + q] * h[q];
    z[row] = acc;
  }
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  LstmOut out{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t u = 0; u < n; ++u) {
    const double ig = sig(z[u]);
    const double fg = sig(z[n + u]);
    const double og = sig(z[2 * n + u]);
    const double gg = std::tanh(z[3 * n + u]);
    out.c[u] = fg * c[u] + ig * gg;
    out.h[u] = og * std::tanh(out.c[u]);
  }
  return out;
}

FeatureMap stack_unroll(const std::vector<Lstm>& layers, const std::vector<double>* proj_w,
                        const std::vector<double>* proj_b, const FeatureMap& input,
                        std::vector<LstmOut>& states) {
  FeatureMap out(input.width(), input.height(), input.channels());
  for (std::size_t j = 0; j < input.height(); ++j) {
    for (std::size_t i = 0; i < input.width(); ++i) {
      std::vector<double> x(input.channels());
      for (std::size_t k = 0; k < x.size(); ++k) x[k] = input.at(i, j, k);
      for (std::size_t l = 0; l < layers.size(); ++l) {
        states[l] = lstm_step(layers[l], x, states[l].h, states[l].c);
        x = states[l].h;
      }
      if (proj_w) {
        const std::size_t hid = x.size();
        for (std::size_t k = 0; k < input.channels(); ++k) {
          double acc = (*proj_b)[k];
          for (std::size_t q = 0; q < hid; ++q) acc += (*proj_w)[k * hid + q] * x[q];
          out.at(i, j, k) = acc;
        }
      } else {
        for (std::size_t k = 0; k < input.channels(); ++k) out.at(i, j, k) = x[k];
      }
    }
  }
  return out;
}

std::vector<double> softmax(const std::vector<double>& x) {
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> e(x.size());
  double s = 0.0;
  for (std::size_t q = 0; q < x.size(); ++q) s += e[q] = std::exp(x[q] - m);
  for (double& v : e) v /= s;
  return e;
}

std::vector<GridPick> top_k(const SpatialMap& m, std::size_t k) {
  std::vector<GridPick> all;
  for (std::size_t j = 0; j < m.height(); ++j)
    for (std::size_t i = 0; i < m.width(); ++i) all.push_back({i, j});
  std::sort(all.begin(), all.end(), [&](const GridPick& a, const GridPick& b) {
    const double va = m.at(a.i, a.j), vb = m.at(b.i, b.j);
    if (va != vb) return va > vb;
    return a.j * m.width() + a.i < b.j * m.width() + b.i;
  });
  all.resize(k);
  return all;
}

namespace {

std::size_t cell_index(double c, std::size_t n) {
  const double g = c * static_cast<double>(n);
  std::size_t idx = g <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(g));
  return std::min(idx, n - 1);
}

}  // namespace

std::vector<BoundingBox> brute_force_localize(const SpatialMap& m,
                                              const std::vector<BoundingBox>& proposals,
                                              std::size_t k, std::size_t n, bool* fallback) {
  const auto grids = top_k(m, k);
  std::vector<BoundingBox> out;
  for (const auto& g : grids) {
    std::vector<std::size_t> members;
    for (std::size_t p = 0; p < proposals.size(); ++p) {
      if (cell_index(proposals[p].cx, m.width()) == g.i &&
          cell_index(proposals[p].cy, m.height()) == g.j) {
        members.push_back(p);
      }
    }
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      const auto& pa = proposals[a];
      const auto& pb = proposals[b];
      const double sa = pa.score.value_or(0.0), sb = pb.score.value_or(0.0);
      if (sa != sb) return sa > sb;
      if (pa.area() != pb.area()) return pa.area() > pb.area();
      if (pa.cy != pb.cy) return pa.cy < pb.cy;
      if (pa.cx != pb.cx) return pa.cx < pb.cx;
      return a < b;
    });
    for (std::size_t p : members) {
      if (out.size() < n) out.push_back(proposals[p]);
    }
  }
  *fallback = out.empty();
  if (!out.empty()) return out;

  const double tx = static_cast<double>(grids[0].i) + 0.5;
  const double ty = static_cast<double>(grids[0].j) + 0.5;
  if (proposals.empty()) {
    const double w = 1.0 / static_cast<double>(m.width());
    const double h = 1.0 / static_cast<double>(m.height());
    return {BoundingBox{tx * w, ty * h, w, h, std::nullopt}};
  }
  std::size_t best = 0;
  double best_d = 1e300;
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    const double dx = proposals[p].cx * static_cast<double>(m.width()) - tx;
    const double dy = proposals[p].cy * static_cast<double>(m.height()) - ty;
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return {proposals[best]};
}

double best_assignment_total(const std::vector<std::vector<double>>& w) {
  const std::size_t rows = w.size();
  const std::size_t cols = w.front().size();
  const bool transpose = rows > cols;
  const std::size_t small = transpose ? cols : rows;
  const std::size_t big = transpose ? rows : cols;
  std::vector<std::size_t> perm(big);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1e300;
  do {
    double total = 0.0;
    for (std::size_t s = 0; s < small; ++s) {
      total += transpose ? w[perm[s]][s] : w[s][perm[s]];
    }
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

FeatureMap random_map(std::mt19937_64& rng, std::size_t w, std::size_t h, std::size_t c,
                      double lo, double hi) {
  return FeatureMap(w, h, c, random_vector(rng, w * h * c, lo, hi));
}

BoundingBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> s(0.02, 0.5);
  return {u(rng), u(rng), s(rng), s(rng), u(rng)};
}

namespace {

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

BoundingBox f32_box(std::mt19937_64& rng, bool score) {
  auto b = random_box(rng);
  b.cx = f32(b.cx);
  b.cy = f32(b.cy);
  b.w = f32(b.w);
  b.h = f32(b.h);
  if (score) {
    b.score = f32(*b.score);
  } else {
    b.score.reset();
  }
  return b;
}

}  // namespace

pstream::VideoSequence random_sequence(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  std::uniform_int_distribution<std::size_t> count(0, 4);
  pstream::VideoSequence seq;
  seq.video_id = "v" + std::to_string(rng() % 1000);
  if (rng() % 2) seq.label = static_cast<std::int32_t>(rng() % 7);
  seq.width = dim(rng);
  seq.height = dim(rng);
  seq.channels = dim(rng);
  const std::size_t frames = count(rng);
  for (std::size_t t = 0; t < frames; ++t) {
    pstream::FrameRecord f;
    f.index = t;
    auto values = random_vector(rng, seq.width * seq.height * seq.channels, -5.0, 5.0);
    for (double& v : values) v = f32(v);
    f.feature = FeatureMap(seq.width, seq.height, seq.channels, std::move(values));
    for (std::size_t q = count(rng); q > 0; --q) f.proposals.push_back(f32_box(rng, true));
    for (std::size_t q = count(rng); q > 0; --q) f.gt_boxes.push_back(f32_box(rng, false));
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

}  // namespace oracle
