#pragma once

// Rectified stereo: epipolar matching of per-view detections and pinhole
// triangulation of matched box centers.

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kiwi/core.hpp"

namespace kiwi {

struct StereoRig {
  double focal_px = 1000.0;
  double baseline_m = 0.12;
  double cx = 960.0;
  double cy = 540.0;
  int width = kDefaultWidth;
  int height = kDefaultHeight;
  double eps_row_px = 3.0;
  double d_min = 5.0;
  double d_max = 300.0;

  void validate() const;
};

// Camera-to-vehicle mounting. Camera frame: x right, y down, z forward.
// Vehicle frame: x forward, y left, z up.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  // Throws Error(config) unless the rotation is orthonormal with det = +1.
  void validate(double tol = 1e-9) const;
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  // (this ∘ other)(p) = this(other(p))
  RigidTransform compose(const RigidTransform& other) const;

  static RigidTransform rotation_z(double radians);
  // Upward-looking camera with the image top facing the direction of travel.
  static RigidTransform upward_camera(const Eigen::Vector3d& mount_offset = Eigen::Vector3d::Zero());
};

// [rig] focal_px, baseline_m, cx, cy, width, height, eps_row_px, d_min, d_max
// [extrinsic] r0, r1, r2 (rotation rows), t
struct RigConfig {
  StereoRig rig;
  RigidTransform extrinsic;
  bool has_extrinsic = false;
};

RigConfig load_rig_config(const std::filesystem::path& path);
RigConfig parse_rig_config(std::string_view text);

struct DetectionPair {
  Detection left;
  Detection right;
  double disparity = 0.0;  // u_left - u_right of box centers
};

struct FlowerTarget {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // meters
  double timestamp = 0.0;
  std::shared_ptr<const DetectionPair> source;

  double x() const { return position.x(); }
  double y() const { return position.y(); }
  double z() const { return position.z(); }
};

struct StereoMatch {
  std::vector<DetectionPair> pairs;
  std::vector<Detection> unmatched_left;
  std::vector<Detection> unmatched_right;
};

// Greedy one-to-one matching on row agreement and disparity band. Candidates
// are taken by |dv| ascending, then distance of their disparity from the
// median candidate disparity, then canonical left/right order, so the result
// does not depend on input order.
StereoMatch match_stereo(std::span<const Detection> left, std::span<const Detection> right, const StereoRig& rig);

// Camera-frame point from a matched pair. Throws Error(degenerate_geometry)
// when the disparity is not positive.
FlowerTarget triangulate(const DetectionPair& pair, const StereoRig& rig, double timestamp = 0.0);
Eigen::Vector3d triangulate_point(double u_left, double v_left, double u_right, const StereoRig& rig);

FlowerTarget to_vehicle_frame(const FlowerTarget& target, const RigidTransform& extrinsic);

// Points JSONL: {"image_id":str,"xyz":[x,y,z],"timestamp":t}
std::string to_points_jsonl(std::string_view image_id, const FlowerTarget& target);

struct PointRecord {
  std::string image_id;
  FlowerTarget target;
};
std::vector<PointRecord> read_points(const std::filesystem::path& path);

}  // namespace kiwi
