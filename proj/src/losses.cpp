#include "symsurf/losses.hpp"

namespace symsurf {

Scalar colour_loss(const Vec3& predicted, const Vec3& target) {
    return (predicted - target).cwiseAbs().sum() / 3.0;
}

Scalar diffuse_render_loss(const VecX& weights, const VecX& diffuse, const MatX& albedo,
                           const Vec3& background, const Vec3& target) {
    if (weights.size() != diffuse.size() || albedo.rows() != weights.size() ||
        albedo.cols() != 3)
        throw Error("losses: diffuse render size mismatch");
    Vec3 c = albedo.transpose() * weights.cwiseProduct(diffuse);
    c += (1.0 - weights.sum()) * background;
    return colour_loss(c.cwiseMax(0.0).cwiseMin(1.0), target);
}

Scalar eikonal_loss(const MatX& gradients) {
    if (gradients.rows() < 1 || gradients.cols() != 3)
        throw Error("losses: eikonal needs N x 3 gradients");
    Scalar sum = 0.0;
    for (Eigen::Index i = 0; i < gradients.rows(); ++i) {
        Scalar d = gradients.row(i).norm() - 1.0;
        sum += d * d;
    }
    return sum / Scalar(gradients.rows());
}

LossReport total_loss(const LossTerms& terms, const LossWeights& weights,
                      const AblationSwitches& ablation) {
    weights.validate();
    LossReport report;
    for (int j = 0; j < 2; ++j) {
        Scalar factor = j == 0 ? 1.0 : weights.symmetricity;
        for (int k = 0; k < 2; ++k) {
            Scalar colour =
                ablation.colour_enabled(j, k) ? factor * terms.colour[j][k] : 0.0;
            Scalar diffuse =
                ablation.diffuse ? factor * weights.diffuse * terms.diffuse[j][k] : 0.0;
            Scalar lighting =
                ablation.lighting ? factor * weights.lighting * terms.lighting[j][k] : 0.0;
            Scalar eikonal = factor * weights.eikonal * terms.eikonal[j];
            report.weighted.colour[j][k] = colour;
            report.weighted.diffuse[j][k] = diffuse;
            report.weighted.lighting[j][k] = lighting;
            if (k == 0) report.weighted.eikonal[j] = 2.0 * eikonal;  // counted per k
            report.total += colour + diffuse + lighting + eikonal;
        }
    }
    return report;
}

}  // namespace symsurf
