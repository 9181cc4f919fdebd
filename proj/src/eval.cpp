#include "sempsf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sempsf {

namespace {

int bin_of(double v, double lo, double hi, int bins) {
  if (!(hi > lo)) return 0;
  const double t = (v - lo) / (hi - lo) * bins;
  return std::clamp(static_cast<int>(std::floor(t)), 0, bins - 1);
}

void require_same_shape(const BinaryImage2D& a, const BinaryImage2D& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(std::string(what) + ": mask dimensions differ");
}

}  // namespace

std::vector<long> histogram(const Image2D& img, int bins, double lo, double hi) {
  if (bins < 2) throw Error("histogram needs at least 2 bins");
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (Index i = 0; i < img.size(); ++i) ++counts[static_cast<std::size_t>(bin_of(img.data()[i], lo, hi, bins))];
  return counts;
}

int otsu_bin(const std::vector<long>& counts) {
  const int bins = static_cast<int>(counts.size());
  if (bins < 2) throw Error("otsu: histogram needs at least 2 bins");
  long double total = 0.0L, weighted = 0.0L;
  for (int b = 0; b < bins; ++b) {
    total += counts[b];
    weighted += static_cast<long double>(b) * counts[b];
  }
  // Between-class variance (up to the constant 1/N^2) for split k:
  //   (N S0 - n0 S)^2 / (n0 n1)
  std::vector<long double> score(static_cast<std::size_t>(bins), -1.0L);
  long double n0 = 0.0L, s0 = 0.0L, best = -1.0L;
  for (int k = 1; k < bins; ++k) {
    n0 += counts[k - 1];
    s0 += static_cast<long double>(k - 1) * counts[k - 1];
    const long double n1 = total - n0;
    if (n0 <= 0.0L || n1 <= 0.0L) continue;
    const long double num = total * s0 - n0 * weighted;
    score[k] = num * num / (n0 * n1);
    best = std::max(best, score[k]);
  }
  if (best <= 0.0L) throw Error("otsu: image has a single intensity level (threshold undefined)");
  for (int k = 1; k < bins; ++k) {
    if (score[k] >= best * (1.0L - 1e-12L)) return k;
  }
  return 1;
}

OtsuResult otsu(const Image2D& img, int bins) {
  require_finite_image(img, "otsu");
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  if (!(hi > lo)) throw Error("otsu: image has a single intensity level (threshold undefined)");
  OtsuResult r;
  r.lo = lo;
  r.hi = hi;
  r.bins = bins;
  r.bin = otsu_bin(histogram(img, bins, lo, hi));
  r.threshold = lo + (hi - lo) * r.bin / bins;
  return r;
}

double otsu_threshold(const Image2D& img, int bins) { return otsu(img, bins).threshold; }

BinaryImage2D apply_threshold(const Image2D& img, const OtsuResult& split) {
  BinaryImage2D mask(img.rows(), img.cols());
  for (Index i = 0; i < img.size(); ++i) {
    mask.data()[i] = bin_of(img.data()[i], split.lo, split.hi, split.bins) >= split.bin;
  }
  return mask;
}

BinaryImage2D otsu_segment(const Image2D& img, int bins) { return apply_threshold(img, otsu(img, bins)); }

BinaryImage2D boundary(const BinaryImage2D& mask) {
  const Index h = mask.rows(), w = mask.cols();
  BinaryImage2D out = BinaryImage2D::Constant(h, w, false);
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      if (!mask(r, c)) continue;
      const bool edge = r == 0 || c == 0 || r == h - 1 || c == w - 1 || !mask(r - 1, c) || !mask(r + 1, c) ||
                        !mask(r, c - 1) || !mask(r, c + 1);
      out(r, c) = edge;
    }
  }
  return out;
}

double recall(const BinaryImage2D& pred, const BinaryImage2D& gt) {
  require_same_shape(pred, gt, "recall");
  const long positives = gt.count();
  if (positives == 0) throw Error("recall: ground truth has no positive pixels");
  const long tp = (pred && gt).count();
  return static_cast<double>(tp) / static_cast<double>(positives);
}

Image2D squared_distance_transform(const BinaryImage2D& sites) {
  if (!sites.any()) throw Error("distance transform needs at least one site");
  const Index h = sites.rows(), w = sites.cols();
  const double inf = std::numeric_limits<double>::infinity();

  // 1D lower-envelope transform (Felzenszwalb & Huttenlocher).
  auto transform_1d = [inf](const std::vector<double>& f, std::vector<double>& d) {
    const auto n = static_cast<int>(f.size());
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = -1;
    for (int q = 0; q < n; ++q) {
      if (f[q] == inf) continue;
      while (k >= 0) {
        const double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
        if (s <= z[k]) {
          --k;
        } else {
          break;
        }
      }
      ++k;
      v[k] = q;
      z[k] = k == 0 ? -inf : ((f[q] + double(q) * q) - (f[v[k - 1]] + double(v[k - 1]) * v[k - 1])) /
                                 (2.0 * q - 2.0 * v[k - 1]);
      z[k + 1] = inf;
    }
    if (k < 0) {
      std::fill(d.begin(), d.end(), inf);
      return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
      while (z[j + 1] < q) ++j;
      const double dq = q - v[j];
      d[q] = dq * dq + f[v[j]];
    }
  };

  Image2D dist(h, w);
  std::vector<double> f, d;
  f.resize(static_cast<std::size_t>(h));
  d.resize(static_cast<std::size_t>(h));
  for (Index c = 0; c < w; ++c) {
    for (Index r = 0; r < h; ++r) f[r] = sites(r, c) ? 0.0 : inf;
    transform_1d(f, d);
    for (Index r = 0; r < h; ++r) dist(r, c) = d[r];
  }
  f.resize(static_cast<std::size_t>(w));
  d.resize(static_cast<std::size_t>(w));
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) f[c] = dist(r, c);
    transform_1d(f, d);
    for (Index c = 0; c < w; ++c) dist(r, c) = d[c];
  }
  return dist;
}

double boundary_distance_avg(const BinaryImage2D& pred, const BinaryImage2D& gt) {
  require_same_shape(pred, gt, "boundary_distance_avg");
  const BinaryImage2D pred_edge = boundary(pred);
  const BinaryImage2D gt_edge = boundary(gt);
  if (!pred_edge.any()) throw Error("boundary_distance_avg: prediction has no boundary pixels");
  if (!gt_edge.any()) throw Error("boundary_distance_avg: ground truth has no boundary pixels");
  const Image2D dist2 = squared_distance_transform(pred_edge);
  double sum = 0.0;
  long n = 0;
  for (Index i = 0; i < gt_edge.size(); ++i) {
    if (!gt_edge.data()[i]) continue;
    sum += std::sqrt(dist2.data()[i]);
    ++n;
  }
  return sum / static_cast<double>(n);
}

MetricReport evaluate_stack(const std::vector<BinaryImage2D>& pred, const std::vector<BinaryImage2D>& gt) {
  if (pred.size() != gt.size()) throw Error("evaluate: prediction and ground-truth slice counts differ");
  if (pred.empty()) throw Error("evaluate: no slices");
  MetricReport report;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    MetricReport::Slice s{recall(pred[i], gt[i]), boundary_distance_avg(pred[i], gt[i])};
    report.recall += s.recall;
    report.hausdorff_avg += s.hausdorff_avg;
    report.slices.push_back(s);
  }
  report.recall /= static_cast<double>(pred.size());
  report.hausdorff_avg /= static_cast<double>(pred.size());
  return report;
}

}  // namespace sempsf
