#pragma once

#include "cmfseg/volume.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cmfseg {

struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
};

// Exact voxel counts; both inputs must be binary on the same grid.
ConfusionCounts confusion(const Volume3D& pred, const Volume3D& gt);

// Zero-denominator convention for all five: an empty denominator means the
// masks agree on emptiness, which scores 1.
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double iou(const ConfusionCounts& c);
double dice(const ConfusionCounts& c);
double accuracy(const ConfusionCounts& c);

struct CaseMetrics {
    std::string name;
    double precision = 0, recall = 0, iou = 0, dice = 0, accuracy = 0;
};

struct BatchReport {
    std::vector<CaseMetrics> cases;
    CaseMetrics mean; // macro average: plain mean of the per-case metrics
};

struct EvalCase {
    std::string name;
    const Volume3D* pred = nullptr;
    const Volume3D* gt = nullptr;
};

BatchReport evaluate_batch(const std::vector<EvalCase>& cases);

// Tab-separated table: header, one row per case, final `mean` row.
// Columns: case, precision, recall, iou, dice, accuracy.
std::string format_batch_report(const BatchReport& report);

} // namespace cmfseg
