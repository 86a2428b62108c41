#include "symsurf/metrics.hpp"

#include <cmath>
#include <sstream>

namespace symsurf {

namespace {

void check_sizes(const Image& pred, const Image& gt, const Image* mask) {
    if (pred.width != gt.width || pred.height != gt.height || pred.channels != gt.channels)
        throw Error("metrics: image dimensions do not match");
    if (mask && (mask->width != pred.width || mask->height != pred.height ||
                 mask->channels != 1))
        throw Error("metrics: mask dimensions do not match");
}

}  // namespace

Scalar mse(const Image& pred, const Image& gt, const Image* mask) {
    check_sizes(pred, gt, mask);
    Scalar sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < pred.height; ++y) {
        for (int x = 0; x < pred.width; ++x) {
            if (mask && mask->at(x, y) <= 0.5) continue;
            for (int c = 0; c < pred.channels; ++c) {
                Scalar d = pred.at(x, y, c) - gt.at(x, y, c);
                sum += d * d;
            }
            count += std::size_t(pred.channels);
        }
    }
    return count > 0 ? sum / Scalar(count) : 0.0;
}

Scalar psnr(const Image& pred, const Image& gt, const Image* mask) {
    Scalar m = mse(pred, gt, mask);
    if (m <= 0.0) return 99.0;
    return std::min(99.0, -10.0 * std::log10(m));
}

Scalar depth_mae(const Image& pred, const Image& gt, const Image& mask) {
    check_sizes(pred, gt, &mask);
    Scalar sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < pred.height; ++y) {
        for (int x = 0; x < pred.width; ++x) {
            if (mask.at(x, y) <= 0.5) continue;
            sum += std::abs(pred.at(x, y) - gt.at(x, y));
            ++count;
        }
    }
    return count > 0 ? sum / Scalar(count) : 0.0;
}

Scalar mask_iou(const Image& pred, const Image& gt) {
    check_sizes(pred, gt, nullptr);
    std::size_t inter = 0, uni = 0;
    for (int y = 0; y < pred.height; ++y) {
        for (int x = 0; x < pred.width; ++x) {
            bool p = pred.at(x, y) >= 0.5;
            bool g = gt.at(x, y) >= 0.5;
            inter += std::size_t(p && g);
            uni += std::size_t(p || g);
        }
    }
    return uni > 0 ? Scalar(inter) / Scalar(uni) : 1.0;
}

MetricsReport aggregate_metrics(std::vector<FrameMetrics> frames) {
    MetricsReport report;
    report.frames = std::move(frames);
    if (report.frames.empty()) return report;
    for (const FrameMetrics& f : report.frames) {
        report.mse += f.mse;
        report.psnr += f.psnr;
        report.depth_mae += f.depth_mae;
        report.mask_iou += f.mask_iou;
    }
    Scalar n = Scalar(report.frames.size());
    report.mse /= n;
    report.psnr /= n;
    report.depth_mae /= n;
    report.mask_iou /= n;
    return report;
}

std::string MetricsReport::table() const {
    std::ostringstream out;
    out << "frame       mse      psnr  depth_mae  mask_iou\n";
    char line[128];
    for (const FrameMetrics& f : frames) {
        std::snprintf(line, sizeof line, "%5d  %8.5f  %8.3f  %9.5f  %8.4f\n", f.frame,
                      f.mse, f.psnr, f.depth_mae, f.mask_iou);
        out << line;
    }
    std::snprintf(line, sizeof line, " mean  %8.5f  %8.3f  %9.5f  %8.4f\n", mse, psnr,
                  depth_mae, mask_iou);
    out << line;
    return out.str();
}

std::string MetricsReport::csv() const {
    std::ostringstream out;
    out.precision(10);
    out << "frame,mse,psnr,depth_mae,mask_iou\n";
    for (const FrameMetrics& f : frames)
        out << f.frame << ',' << f.mse << ',' << f.psnr << ',' << f.depth_mae << ','
            << f.mask_iou << '\n';
    out << "mean," << mse << ',' << psnr << ',' << depth_mae << ',' << mask_iou << '\n';
    return out.str();
}

}  // namespace symsurf
