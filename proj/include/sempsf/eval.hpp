#pragma once

#include "sempsf/types.hpp"

#include <vector>

namespace sempsf {

struct OtsuResult {
  double threshold = 0.0;  ///< lower edge of the first foreground bin
  int bin = 0;             ///< first foreground bin, in [1, bins - 1]
  double lo = 0.0;         ///< histogram range
  double hi = 0.0;
  int bins = 256;
};

/// Histogram with `bins` equal-width bins over [min, max]; the max value
/// falls in the last bin.
std::vector<long> histogram(const Image2D& img, int bins, double lo, double hi);

/// Otsu split of a histogram: the bin k in [1, bins-1] maximizing
/// w0 w1 (m0 - m1)^2, lowest k on ties (within 1e-12 relative).
int otsu_bin(const std::vector<long>& counts);

OtsuResult otsu(const Image2D& img, int bins = 256);

/// Threshold value only. Throws on a single-valued image.
double otsu_threshold(const Image2D& img, int bins = 256);

/// Pixels whose histogram bin is >= the Otsu bin.
BinaryImage2D otsu_segment(const Image2D& img, int bins = 256);

/// Binarization consistent with an OtsuResult.
BinaryImage2D apply_threshold(const Image2D& img, const OtsuResult& split);

/// Positive pixels with at least one negative 4-neighbour (outside counts as negative).
BinaryImage2D boundary(const BinaryImage2D& mask);

/// TP / (TP + FN).
double recall(const BinaryImage2D& pred, const BinaryImage2D& gt);

/// Mean over ground-truth boundary pixels of the Euclidean distance to the
/// nearest predicted boundary pixel. Directed: not symmetric in its arguments.
double boundary_distance_avg(const BinaryImage2D& pred, const BinaryImage2D& gt);

/// Squared Euclidean distance from every pixel to the nearest true pixel
/// (exact separable transform). Requires at least one true pixel.
Image2D squared_distance_transform(const BinaryImage2D& sites);

struct MetricReport {
  struct Slice {
    double recall = 0.0;
    double hausdorff_avg = 0.0;
  };
  std::vector<Slice> slices;
  double recall = 0.0;         ///< mean over slices
  double hausdorff_avg = 0.0;  ///< mean over slices ("HD")
};

MetricReport evaluate_stack(const std::vector<BinaryImage2D>& pred, const std::vector<BinaryImage2D>& gt);

}  // namespace sempsf
