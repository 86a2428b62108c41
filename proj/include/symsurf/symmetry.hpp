#pragma once

#include <vector>

#include "symsurf/common.hpp"

namespace symsurf {

// Rigid world-to-canonical transform of a symmetry. Maps x to R*x + t.
struct RigidFrame {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Mat4 matrix() const;
    Mat4 inverse_matrix() const;

    // Throws Error if the rotation is not orthonormal with det +1 (tol 1e-9).
    void validate() const;
};

// Composes an unconstrained axis-angle increment onto the frame rotation and
// re-orthonormalizes, then adds the translation increment. This is how the
// optimizer updates frame parameters.
void apply_frame_increment(RigidFrame& frame, const Vec3& axis_angle, const Vec3& dt);

enum class SymmetryKind {
    PlanarReflection,
    LineReflection,
    PointReflection,
    Rotation,
    Spherical,
    Translation,
    Scale,
};

const char* kind_name(SymmetryKind kind);

// A parametrized coordinate transformation. The variant fields are expressed
// in the canonical coordinates defined by `frame`; the composed map is
// F^-1 o V o F with F(x) = R*x + t.
struct SymmetrySpec {
    SymmetryKind kind = SymmetryKind::PlanarReflection;

    Vec3 direction = Vec3::UnitY();  // plane normal / line direction / rotation axis
    Vec3 point = Vec3::Zero();       // centre for point reflection, rotation, spherical
    Scalar offset = 0.0;             // planar reflection plane offset
    Vec2 plane_offset = Vec2::Zero();  // line reflection offset in the plane frame
    int n_fold = 1;                  // rotation order
    Vec3 translation = Vec3::Zero();
    Scalar scale_x = 1.0;
    Scalar scale_y = 1.0;

    RigidFrame frame;

    void validate() const;

    static SymmetrySpec planar_reflection(const Vec3& normal, Scalar offset,
                                          RigidFrame frame = {});
    static SymmetrySpec line_reflection(const Vec3& dir, const Vec2& plane_offset,
                                        RigidFrame frame = {});
    static SymmetrySpec point_reflection(const Vec3& centre, RigidFrame frame = {});
    static SymmetrySpec rotation(const Vec3& centre, const Vec3& axis, int n_fold,
                                 RigidFrame frame = {});
    static SymmetrySpec spherical(const Vec3& centre, RigidFrame frame = {});
    static SymmetrySpec make_translation(const Vec3& t, RigidFrame frame = {});
    static SymmetrySpec scale(Scalar sx, Scalar sy, RigidFrame frame = {});
};

struct SymmetrySet {
    std::vector<SymmetrySpec> specs;
};

// Affine realization of a symmetry map: x -> linear*x + translation.
struct AffineMap {
    Mat3 linear = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Mat4 matrix() const;
    Vec3 point(const Vec3& x) const { return linear * x + translation; }
    // Directions ignore the translation. `renormalize` is needed for scale maps.
    Vec3 direction(const Vec3& d, bool renormalize) const;
};

// The variant map in canonical coordinates. For Rotation, `k` selects the
// fold angle theta_k = 2*pi*k/(n_fold+1); for Spherical, `alpha`/`beta` give
// the sphere angles. Deterministic variants ignore all three.
AffineMap canonical_map(const SymmetrySpec& spec, int k = 1, Scalar alpha = 0.0,
                        Scalar beta = 0.0);

// Frame-conjugated map F^-1 o V o F with fixed draw parameters.
AffineMap composed_map(const SymmetrySpec& spec, int k = 1, Scalar alpha = 0.0,
                       Scalar beta = 0.0);

// Frame-conjugated map with the randomness of the variant drawn from `rng`.
// Shared per-ray so transformed sample paths stay coherent.
AffineMap sample_map(const SymmetrySpec& spec, Rng& rng);

// Homogeneous matrix of the composed map with deterministic draw (k = 1).
Mat4 compose_canonical(const SymmetrySpec& spec);

Vec3 apply_to_point(const SymmetrySpec& spec, const Vec3& x, Rng& rng);

// Deterministic-draw direction map. Throws on zero-length input.
Vec3 apply_to_direction(const SymmetrySpec& spec, const Vec3& d);

const SymmetrySpec& sample_symmetry(const SymmetrySet& set, Rng& rng);

// Deterministic rotation with R * (0,0,1)^T = n.
Mat3 rotation_from_normal(const Vec3& n);

// Plain-text record: kind name followed by the numeric fields in declaration
// order, then the frame (rotation rows, translation).
std::string format_symmetry(const SymmetrySpec& spec);
SymmetrySpec parse_symmetry(const std::string& line);

}  // namespace symsurf
