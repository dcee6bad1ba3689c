#pragma once

#include <cstdint>
#include <vector>

#include "usema/grid.hpp"

namespace usema {

// 2|P & G| / (|P| + |G|); 1 when both masks are empty.
double dsc(const Mask& pred, const Mask& gt);

// Foreground pixels with a 4-neighbour outside the mask (mask minus its
// 4-connected erosion; pixels beyond the image count as background).
Mask boundary(const Mask& mask);

// Squared Euclidean distance from every pixel to the nearest set pixel of
// `mask`; +inf everywhere for an empty mask.
std::vector<double> squared_distance_transform(const Mask& mask);

// Normalized surface distance with tolerance tau (pixels): the fraction of each
// boundary lying within tau of the other boundary, averaged over both directions.
// 1 when both masks are empty, 0 when exactly one is.
double nsd(const Mask& pred, const Mask& gt, double tau = 1.0);

// 4-connected components of a mask, labelled 1..k in raster order of first pixel.
LabelGrid connected_components(const Mask& mask);

struct InstanceMatch {
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  std::int64_t false_negatives = 0;
  double f1 = 1.0;
};

// Greedy one-to-one matching by descending IoU; pairs at or above iou_thresh
// count as true positives. Label 0 is background. F1 = 1 when both maps are empty.
InstanceMatch match_instances(const LabelGrid& pred, const LabelGrid& gt, double iou_thresh = 0.5);
double instance_f1(const LabelGrid& pred, const LabelGrid& gt, double iou_thresh = 0.5);

struct ClassMetrics {
  double dsc = 0.0;
  double nsd = 0.0;
  double f1 = 0.0;
};

struct MetricReport {
  double dsc = 0.0;
  double nsd = 0.0;
  double f1 = 0.0;
  std::vector<ClassMetrics> per_class;  // foreground classes 1..K-1
};

// Semantic maps with `classes` labels; foreground classes are scored and
// averaged. Instances are the 4-connected components of each class mask.
MetricReport evaluate_segmentation(const LabelGrid& pred, const LabelGrid& gt,
                                   std::int32_t classes, double tau = 1.0,
                                   double iou_thresh = 0.5);

// Arithmetic mean of per-sample reports, field by field.
MetricReport mean_report(const std::vector<MetricReport>& reports);

}  // namespace usema
