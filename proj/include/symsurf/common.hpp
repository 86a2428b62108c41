#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace symsurf {

using Scalar = double;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

using Rng = std::mt19937_64;

constexpr Scalar kPi = 3.14159265358979323846;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline Scalar clamp01(Scalar v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline Vec3 clamp01(const Vec3& c) {
    return Vec3(clamp01(c.x()), clamp01(c.y()), clamp01(c.z()));
}

}  // namespace symsurf
