#include "symsurf/symmetry.hpp"

#include <Eigen/Geometry>
#include <sstream>

namespace symsurf {

namespace {

constexpr Scalar kFrameTol = 1e-9;

Mat4 affine4(const Mat3& a, const Vec3& t) {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = a;
    m.topRightCorner<3, 1>() = t;
    return m;
}

void require_unit(const Vec3& v, const char* what) {
    if (std::abs(v.norm() - 1.0) > kFrameTol) {
        throw Error(std::string("symmetry: ") + what + " must be unit length");
    }
}

}  // namespace

Mat4 RigidFrame::matrix() const { return affine4(rotation, translation); }

Mat4 RigidFrame::inverse_matrix() const {
    return affine4(rotation.transpose(), -(rotation.transpose() * translation));
}

void RigidFrame::validate() const {
    if (!(rotation.transpose() * rotation - Mat3::Identity()).isZero(kFrameTol) ||
        std::abs(rotation.determinant() - 1.0) > kFrameTol) {
        throw Error("symmetry: frame rotation is not a proper orthonormal matrix");
    }
}

void apply_frame_increment(RigidFrame& frame, const Vec3& axis_angle, const Vec3& dt) {
    Scalar angle = axis_angle.norm();
    Mat3 inc = Mat3::Identity();
    if (angle > 0.0) {
        inc = Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
    }
    Eigen::Quaterniond q(inc * frame.rotation);
    q.normalize();
    frame.rotation = q.toRotationMatrix();
    frame.translation += dt;
}

const char* kind_name(SymmetryKind kind) {
    switch (kind) {
        case SymmetryKind::PlanarReflection: return "planar_reflection";
        case SymmetryKind::LineReflection: return "line_reflection";
        case SymmetryKind::PointReflection: return "point_reflection";
        case SymmetryKind::Rotation: return "rotation";
        case SymmetryKind::Spherical: return "spherical";
        case SymmetryKind::Translation: return "translation";
        case SymmetryKind::Scale: return "scale";
    }
    return "unknown";
}

void SymmetrySpec::validate() const {
    frame.validate();
    switch (kind) {
        case SymmetryKind::PlanarReflection:
        case SymmetryKind::LineReflection:
        case SymmetryKind::Rotation:
            require_unit(direction, "direction");
            break;
        default:
            break;
    }
    if (kind == SymmetryKind::Rotation && n_fold < 1) {
        throw Error("symmetry: rotation order must be >= 1");
    }
    if (kind == SymmetryKind::Scale && (scale_x <= 0.0 || scale_y <= 0.0)) {
        throw Error("symmetry: scale factors must be positive");
    }
}

SymmetrySpec SymmetrySpec::planar_reflection(const Vec3& normal, Scalar offset,
                                             RigidFrame frame) {
    SymmetrySpec s;
    s.kind = SymmetryKind::PlanarReflection;
    s.direction = normal;
    s.offset = offset;
    s.frame = frame;
    return s;
}

SymmetrySpec SymmetrySpec::line_reflection(const Vec3& dir, const Vec2& plane_offset,
                                           RigidFrame frame) {
    SymmetrySpec s;
    s.kind = SymmetryKind::LineReflection;
    s.direction = dir;
    s.plane_offset = plane_offset;
    s.frame = frame;
    return s;
}

SymmetrySpec SymmetrySpec::point_reflection(const Vec3& centre, RigidFrame frame) {
    SymmetrySpec s;
    s.kind = SymmetryKind::PointReflection;
    s.point = centre;
    s.frame = frame;
    return s;
}

SymmetrySpec SymmetrySpec::rotation(const Vec3& centre, const Vec3& axis, int n_fold,
                                    RigidFrame frame) {
    SymmetrySpec s;
    s.kind = SymmetryKind::Rotation;
    s.point = centre;
    s.direction = axis;
    s.n_fold = n_fold;
    s.frame = frame;
    return s;
}

SymmetrySpec SymmetrySpec::spherical(const Vec3& centre, RigidFrame frame) {
    SymmetrySpec s;
    s.kind = SymmetryKind::Spherical;
    s.point = centre;
    s.frame = frame;
    return s;
}

SymmetrySpec SymmetrySpec::make_translation(const Vec3& t, RigidFrame frame) {
    SymmetrySpec s;
    s.kind = SymmetryKind::Translation;
    s.translation = t;
    s.frame = frame;
    return s;
}

SymmetrySpec SymmetrySpec::scale(Scalar sx, Scalar sy, RigidFrame frame) {
    SymmetrySpec s;
    s.kind = SymmetryKind::Scale;
    s.scale_x = sx;
    s.scale_y = sy;
    s.frame = frame;
    return s;
}

Mat4 AffineMap::matrix() const { return affine4(linear, translation); }

Vec3 AffineMap::direction(const Vec3& d, bool renormalize) const {
    Vec3 out = linear * d;
    if (renormalize) {
        Scalar n = out.norm();
        if (n <= 0.0) throw Error("symmetry: direction collapsed to zero");
        out /= n;
    }
    return out;
}

AffineMap canonical_map(const SymmetrySpec& spec, int k, Scalar alpha, Scalar beta) {
    AffineMap m;
    switch (spec.kind) {
        case SymmetryKind::PlanarReflection: {
            const Vec3& n = spec.direction;
            m.linear = Mat3::Identity() - 2.0 * n * n.transpose();
            m.translation = 2.0 * spec.offset * n;
            break;
        }
        case SymmetryKind::LineReflection: {
            const Vec3& n = spec.direction;
            Mat3 r = rotation_from_normal(n);
            Vec3 p = r * Vec3(spec.plane_offset.x(), spec.plane_offset.y(), 0.0);
            m.linear = 2.0 * n * n.transpose() - Mat3::Identity();
            m.translation = p - m.linear * p;
            break;
        }
        case SymmetryKind::PointReflection:
            m.linear = -Mat3::Identity();
            m.translation = 2.0 * spec.point;
            break;
        case SymmetryKind::Rotation: {
            Scalar theta = 2.0 * kPi * Scalar(k) / Scalar(spec.n_fold + 1);
            m.linear = Eigen::AngleAxisd(theta, spec.direction).toRotationMatrix();
            m.translation = spec.point - m.linear * spec.point;
            break;
        }
        case SymmetryKind::Spherical: {
            Mat3 r = (Eigen::AngleAxisd(alpha, Vec3::UnitX()) *
                      Eigen::AngleAxisd(beta, Vec3::UnitY()))
                         .toRotationMatrix();
            m.linear = r;
            m.translation = spec.point - r * spec.point;
            break;
        }
        case SymmetryKind::Translation:
            m.translation = spec.translation;
            break;
        case SymmetryKind::Scale:
            m.linear = Vec3(spec.scale_x, spec.scale_y, 1.0).asDiagonal();
            break;
    }
    return m;
}

AffineMap composed_map(const SymmetrySpec& spec, int k, Scalar alpha, Scalar beta) {
    spec.validate();
    AffineMap v = canonical_map(spec, k, alpha, beta);
    const Mat3& r = spec.frame.rotation;
    const Vec3& t = spec.frame.translation;
    AffineMap m;
    m.linear = r.transpose() * v.linear * r;
    m.translation = r.transpose() * (v.linear * t + v.translation - t);
    return m;
}

AffineMap sample_map(const SymmetrySpec& spec, Rng& rng) {
    int k = 1;
    Scalar alpha = 0.0, beta = 0.0;
    if (spec.kind == SymmetryKind::Rotation) {
        k = std::uniform_int_distribution<int>(1, spec.n_fold)(rng);
    } else if (spec.kind == SymmetryKind::Spherical) {
        std::uniform_real_distribution<Scalar> angle(0.0, 2.0 * kPi);
        alpha = angle(rng);
        beta = angle(rng);
    }
    return composed_map(spec, k, alpha, beta);
}

Mat4 compose_canonical(const SymmetrySpec& spec) {
    return composed_map(spec).matrix();
}

Vec3 apply_to_point(const SymmetrySpec& spec, const Vec3& x, Rng& rng) {
    return sample_map(spec, rng).point(x);
}

Vec3 apply_to_direction(const SymmetrySpec& spec, const Vec3& d) {
    if (d.norm() <= 0.0) throw Error("symmetry: zero-length direction");
    return composed_map(spec).direction(d, spec.kind == SymmetryKind::Scale);
}

const SymmetrySpec& sample_symmetry(const SymmetrySet& set, Rng& rng) {
    if (set.specs.empty()) throw Error("symmetry: empty symmetry set");
    std::uniform_int_distribution<size_t> pick(0, set.specs.size() - 1);
    return set.specs[pick(rng)];
}

Mat3 rotation_from_normal(const Vec3& n) {
    if ((n - Vec3::UnitZ()).norm() < 1e-12) return Mat3::Identity();
    if ((n + Vec3::UnitZ()).norm() < 1e-12) {
        return Vec3(1.0, -1.0, -1.0).asDiagonal();  // pi about x
    }
    Vec3 v = Vec3::UnitZ().cross(n);
    Scalar s = v.norm();
    Scalar c = Vec3::UnitZ().dot(n);
    Mat3 vx;
    vx << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return Mat3::Identity() + vx + vx * vx * ((1.0 - c) / (s * s));
}

std::string format_symmetry(const SymmetrySpec& spec) {
    std::ostringstream os;
    os.precision(17);
    os << kind_name(spec.kind);
    switch (spec.kind) {
        case SymmetryKind::PlanarReflection:
            os << ' ' << spec.direction.transpose() << ' ' << spec.offset;
            break;
        case SymmetryKind::LineReflection:
            os << ' ' << spec.direction.transpose() << ' ' << spec.plane_offset.transpose();
            break;
        case SymmetryKind::PointReflection:
            os << ' ' << spec.point.transpose();
            break;
        case SymmetryKind::Rotation:
            os << ' ' << spec.point.transpose() << ' ' << spec.direction.transpose() << ' '
               << spec.n_fold;
            break;
        case SymmetryKind::Spherical:
            os << ' ' << spec.point.transpose();
            break;
        case SymmetryKind::Translation:
            os << ' ' << spec.translation.transpose();
            break;
        case SymmetryKind::Scale:
            os << ' ' << spec.scale_x << ' ' << spec.scale_y;
            break;
    }
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) os << ' ' << spec.frame.rotation(r, c);
    }
    os << ' ' << spec.frame.translation.transpose();
    return os.str();
}

SymmetrySpec parse_symmetry(const std::string& line) {
    std::istringstream is(line);
    std::string name;
    is >> name;
    SymmetrySpec s;
    auto read3 = [&is]() {
        Vec3 v;
        is >> v.x() >> v.y() >> v.z();
        return v;
    };
    if (name == "planar_reflection") {
        s.kind = SymmetryKind::PlanarReflection;
        s.direction = read3();
        is >> s.offset;
    } else if (name == "line_reflection") {
        s.kind = SymmetryKind::LineReflection;
        s.direction = read3();
        is >> s.plane_offset.x() >> s.plane_offset.y();
    } else if (name == "point_reflection") {
        s.kind = SymmetryKind::PointReflection;
        s.point = read3();
    } else if (name == "rotation") {
        s.kind = SymmetryKind::Rotation;
        s.point = read3();
        s.direction = read3();
        is >> s.n_fold;
    } else if (name == "spherical") {
        s.kind = SymmetryKind::Spherical;
        s.point = read3();
    } else if (name == "translation") {
        s.kind = SymmetryKind::Translation;
        s.translation = read3();
    } else if (name == "scale") {
        s.kind = SymmetryKind::Scale;
        is >> s.scale_x >> s.scale_y;
    } else {
        throw Error("symmetry: unknown variant '" + name + "'");
    }
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) is >> s.frame.rotation(r, c);
    }
    s.frame.translation = read3();
    if (!is) throw Error("symmetry: malformed record '" + line + "'");
    return s;
}

}  // namespace symsurf
