#pragma once

#include "symsurf/common.hpp"

namespace symsurf {

// Pinhole camera: intrinsics K and a rigid world-to-camera transform.
struct Camera {
    Mat3 intrinsics = Mat3::Identity();
    Mat4 world_to_camera = Mat4::Identity();
    int width = 0;
    int height = 0;

    Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    Vec3 centre() const { return -rotation().transpose() * translation(); }
    // Camera-frame forward axis (+z) expressed in world coordinates.
    Vec3 optical_axis() const { return rotation().row(2).transpose(); }

    void validate() const {
        if (intrinsics(0, 0) <= 0.0 || intrinsics(1, 1) <= 0.0)
            throw Error("camera: focal lengths must be positive");
        Mat3 r = rotation();
        if ((r.transpose() * r - Mat3::Identity()).norm() > 1e-6 ||
            std::abs(r.determinant() - 1.0) > 1e-6)
            throw Error("camera: extrinsics must be rigid");
    }
};

}  // namespace symsurf
