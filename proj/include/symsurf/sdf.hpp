#pragma once

#include <array>
#include <memory>
#include <vector>

#include "symsurf/common.hpp"
#include "symsurf/nn.hpp"

namespace symsurf {

struct SdfEval {
    Scalar delta = 0.0;
    Vec3 normal = Vec3::Zero();  // gradient of the field, not necessarily unit
    VecX feature;
};

// ---------------------------------------------------------------------------
// Analytic fields (oracle infrastructure)

class Shape {
  public:
    virtual ~Shape() = default;
    virtual Scalar distance(const Vec3& x) const = 0;
    virtual Vec3 gradient(const Vec3& x) const = 0;
};

class SphereShape : public Shape {
  public:
    SphereShape(const Vec3& centre, Scalar radius) : centre_(centre), radius_(radius) {}
    Scalar distance(const Vec3& x) const override;
    Vec3 gradient(const Vec3& x) const override;

  private:
    Vec3 centre_;
    Scalar radius_;
};

// Axis-aligned box, optionally rounded by subtracting `rounding` from the
// exact box distance.
class BoxShape : public Shape {
  public:
    BoxShape(const Vec3& centre, const Vec3& half_extents, Scalar rounding = 0.0)
        : centre_(centre), half_(half_extents), rounding_(rounding) {}
    Scalar distance(const Vec3& x) const override;
    Vec3 gradient(const Vec3& x) const override;

  private:
    Vec3 centre_;
    Vec3 half_;
    Scalar rounding_;
};

class PlaneShape : public Shape {
  public:
    PlaneShape(Scalar height, const Vec3& up = Vec3::UnitZ()) : height_(height), up_(up) {}
    Scalar distance(const Vec3& x) const override;
    Vec3 gradient(const Vec3& x) const override;

  private:
    Scalar height_;
    Vec3 up_;
};

// Pointwise minimum; the first operand wins ties.
class UnionShape : public Shape {
  public:
    void add(std::shared_ptr<Shape> s) { parts_.push_back(std::move(s)); }
    Scalar distance(const Vec3& x) const override;
    Vec3 gradient(const Vec3& x) const override;

  private:
    const Shape* winner(const Vec3& x) const;
    std::vector<std::shared_ptr<Shape>> parts_;
};

SdfEval eval_analytic(const Shape& shape, const Vec3& x);

// ---------------------------------------------------------------------------
// Neural SDF

struct EllipsoidInit {
    Vec3 semi_axes = Vec3::Ones();
};

struct NeuralSdfConfig {
    int depth = 8;
    int width = 256;
    int skip_layer = 4;
    int feature_dim = 256;
    int num_freqs = 6;
    // Per-axis input scaling realizing the ellipsoid squash; identity until
    // geometric initialization sets it from the bounding box.
    Vec3 input_scale = Vec3::Ones();
};

// Batched evaluation results with the caches needed for the reverse pass.
struct NeuralSdfBatch {
    VecX delta;
    MatX normal;   // N x 3, input gradient of delta
    MatX feature;  // N x F
    MatX points;
    MatX scaled;
    Encoded3 encoded;
    MlpJacCache cache;
    std::array<MatX, 3> tangents;
};

class NeuralSdf {
  public:
    NeuralSdf() = default;
    NeuralSdf(const NeuralSdfConfig& config, Eigen::Index offset);

    const NeuralSdfConfig& config() const { return config_; }
    Eigen::Index parameter_count() const { return trunk_.parameter_count(); }
    void set_input_scale(const Vec3& s) { config_.input_scale = s; }

    NeuralSdfBatch forward(const VecX& params, const MatX& x) const;

    // g_normal may be empty when no adjoint flows through the normals.
    void backward(const VecX& params, const NeuralSdfBatch& batch, const VecX& g_delta,
                  const MatX& g_normal, const MatX& g_feature, VecX& grads,
                  MatX* g_points = nullptr) const;

    SdfEval eval(const VecX& params, const Vec3& x) const;

    const Mlp& trunk() const { return trunk_; }

  private:
    NeuralSdfConfig config_;
    PositionalEncoding enc_;
    Mlp trunk_;
};

// Initializes the trunk so the field approximates the signed distance to the
// ellipsoid, by a spherical weight prior plus per-axis input squashing.
void geometric_init(NeuralSdf& sdf, VecX& params, const EllipsoidInit& ellipsoid, Rng& rng);

// ---------------------------------------------------------------------------
// Joint object + ground field

struct GroundPlane {
    Scalar height = -0.5;
    Vec3 up = Vec3::UnitZ();
};

inline Scalar ground_distance(const GroundPlane& g, const Vec3& x) {
    return g.up.dot(x) - g.height;
}

// Pointwise min; the object branch wins ties. The ground branch reports the
// plane normal and the supplied feature vector.
SdfEval eval_joint(const SdfEval& object_eval, const GroundPlane& ground, const Vec3& x,
                   const VecX& ground_feature = {});

}  // namespace symsurf
