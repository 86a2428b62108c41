#pragma once

#include <string>
#include <vector>

#include "symsurf/common.hpp"
#include "symsurf/image.hpp"

namespace symsurf {

// Image metrics. When a mask is supplied only pixels with mask > 0.5 count;
// an empty selection yields 0 (and capped PSNR). Dimensions must match.
Scalar mse(const Image& pred, const Image& gt, const Image* mask = nullptr);

// PSNR = -10 log10(MSE), capped at 99 dB for zero MSE.
Scalar psnr(const Image& pred, const Image& gt, const Image* mask = nullptr);

// Mean absolute depth error over pixels with mask > 0.5.
Scalar depth_mae(const Image& pred, const Image& gt, const Image& mask);

// IoU of {pred >= 0.5} against {gt >= 0.5}; empty union counts as 1.
Scalar mask_iou(const Image& pred, const Image& gt);

struct FrameMetrics {
    int frame = 0;
    Scalar mse = 0.0;
    Scalar psnr = 0.0;
    Scalar depth_mae = 0.0;
    Scalar mask_iou = 0.0;
};

struct MetricsReport {
    std::vector<FrameMetrics> frames;
    // Aggregates are per-frame means.
    Scalar mse = 0.0;
    Scalar psnr = 0.0;
    Scalar depth_mae = 0.0;
    Scalar mask_iou = 0.0;

    std::string table() const;
    std::string csv() const;
};

MetricsReport aggregate_metrics(std::vector<FrameMetrics> frames);

}  // namespace symsurf
