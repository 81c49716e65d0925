#include "kiwi/stereo_locator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include <Eigen/Dense>

#include "json.hpp"
#include "kiwi/config_file.hpp"
#include "kiwi/jsonl.hpp"

namespace kiwi {

void StereoRig::validate() const {
  if (!(focal_px > 0.0)) throw Error(ErrorCode::config, "rig: focal_px must be positive");
  if (!(baseline_m > 0.0)) throw Error(ErrorCode::config, "rig: baseline_m must be positive");
  if (!(d_min > 0.0 && d_min < d_max)) throw Error(ErrorCode::config, "rig: need 0 < d_min < d_max");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::config, "rig: image size must be positive");
  if (!(eps_row_px >= 0.0)) throw Error(ErrorCode::config, "rig: eps_row_px must be non-negative");
}

void RigidTransform::validate(double tol) const {
  const Eigen::Matrix3d gram = rotation * rotation.transpose();
  if (!gram.allFinite() || (gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) {
    throw Error(ErrorCode::config, "extrinsic rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > tol) {
    throw Error(ErrorCode::config, "extrinsic rotation must have determinant +1");
  }
  if (!translation.allFinite()) throw Error(ErrorCode::config, "extrinsic translation is not finite");
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  return {rotation * other.rotation, rotation * other.translation + translation};
}

RigidTransform RigidTransform::rotation_z(double radians) {
  RigidTransform t;
  const double c = std::cos(radians), s = std::sin(radians);
  t.rotation << c, -s, 0, s, c, 0, 0, 0, 1;
  return t;
}

RigidTransform RigidTransform::upward_camera(const Eigen::Vector3d& mount_offset) {
  RigidTransform t;
  // Image top faces the direction of travel: vehicle x = -camera y,
  // vehicle y = camera x, vehicle z = camera z.
  t.rotation << 0, -1, 0,
                1, 0, 0,
                0, 0, 1;
  t.translation = mount_offset;
  return t;
}

namespace {

RigConfig from_config(const ConfigFile& f) {
  RigConfig out;
  auto& r = out.rig;
  r.focal_px = f.get_double("rig", "focal_px", r.focal_px);
  r.baseline_m = f.get_double("rig", "baseline_m", r.baseline_m);
  r.cx = f.get_double("rig", "cx", r.cx);
  r.cy = f.get_double("rig", "cy", r.cy);
  r.width = static_cast<int>(f.get_int("rig", "width", r.width));
  r.height = static_cast<int>(f.get_int("rig", "height", r.height));
  r.eps_row_px = f.get_double("rig", "eps_row_px", r.eps_row_px);
  r.d_min = f.get_double("rig", "d_min", r.d_min);
  r.d_max = f.get_double("rig", "d_max", r.d_max);
  r.validate();

  if (f.has_section("extrinsic")) {
    out.has_extrinsic = true;
    auto& e = out.extrinsic;
    for (int i = 0; i < 3; ++i) {
      const std::string key = "r" + std::to_string(i);
      std::vector<double> fallback{e.rotation(i, 0), e.rotation(i, 1), e.rotation(i, 2)};
      auto row = f.get_doubles("extrinsic", key, fallback);
      if (row.size() != 3) throw Error(ErrorCode::config, "extrinsic " + key + " needs three values");
      e.rotation.row(i) << row[0], row[1], row[2];
    }
    auto t = f.get_doubles("extrinsic", "t", {0.0, 0.0, 0.0});
    if (t.size() != 3) throw Error(ErrorCode::config, "extrinsic t needs three values");
    e.translation << t[0], t[1], t[2];
    // Hand-written configs carry a few decimals; accept small rounding, then
    // snap to the nearest rotation.
    e.validate(1e-6);
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(e.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    e.rotation = svd.matrixU() * svd.matrixV().transpose();
  }
  return out;
}

struct Candidate {
  std::size_t left;
  std::size_t right;
  double dv;
  double disparity;
};

// Canonical order for detections so matching ignores input permutation.
std::vector<Detection> canonical(std::span<const Detection> dets) {
  std::vector<Detection> v(dets.begin(), dets.end());
  std::sort(v.begin(), v.end(), [](const Detection& a, const Detection& b) {
    return std::forward_as_tuple(a.bbox.center_y(), a.bbox.center_x(), a.bbox.w, a.bbox.h, a.score, a.image_id) <
           std::forward_as_tuple(b.bbox.center_y(), b.bbox.center_x(), b.bbox.w, b.bbox.h, b.score, b.image_id);
  });
  return v;
}

}  // namespace

RigConfig load_rig_config(const std::filesystem::path& path) { return from_config(ConfigFile::load(path)); }
RigConfig parse_rig_config(std::string_view text) { return from_config(ConfigFile::parse(text)); }

StereoMatch match_stereo(std::span<const Detection> left_in, std::span<const Detection> right_in,
                         const StereoRig& rig) {
  const auto left = canonical(left_in);
  const auto right = canonical(right_in);

  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < left.size(); ++i) {
    for (std::size_t j = 0; j < right.size(); ++j) {
      const double dv = std::abs(left[i].bbox.center_y() - right[j].bbox.center_y());
      const double d = left[i].bbox.center_x() - right[j].bbox.center_x();
      if (dv <= rig.eps_row_px && d >= rig.d_min && d <= rig.d_max) candidates.push_back({i, j, dv, d});
    }
  }

  double med = 0.0;
  if (!candidates.empty()) {
    std::vector<double> ds;
    ds.reserve(candidates.size());
    for (const auto& c : candidates) ds.push_back(c.disparity);
    std::sort(ds.begin(), ds.end());
    const std::size_t n = ds.size();
    med = n % 2 == 1 ? ds[n / 2] : 0.5 * (ds[n / 2 - 1] + ds[n / 2]);
  }
  std::sort(candidates.begin(), candidates.end(), [med](const Candidate& a, const Candidate& b) {
    return std::make_tuple(a.dv, std::abs(a.disparity - med), a.left, a.right) <
           std::make_tuple(b.dv, std::abs(b.disparity - med), b.left, b.right);
  });

  std::vector<char> used_left(left.size(), 0), used_right(right.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  for (const auto& c : candidates) {
    if (used_left[c.left] || used_right[c.right]) continue;
    used_left[c.left] = used_right[c.right] = 1;
    chosen.emplace_back(c.left, c.right);
  }
  std::sort(chosen.begin(), chosen.end());

  StereoMatch out;
  for (const auto& [i, j] : chosen) {
    out.pairs.push_back({left[i], right[j], left[i].bbox.center_x() - right[j].bbox.center_x()});
  }
  for (std::size_t i = 0; i < left.size(); ++i) {
    if (!used_left[i]) out.unmatched_left.push_back(left[i]);
  }
  for (std::size_t j = 0; j < right.size(); ++j) {
    if (!used_right[j]) out.unmatched_right.push_back(right[j]);
  }
  return out;
}

Eigen::Vector3d triangulate_point(double u_left, double v_left, double u_right, const StereoRig& rig) {
  const double disparity = u_left - u_right;
  if (!(disparity > 0.0)) {
    throw Error(ErrorCode::degenerate_geometry, "disparity must be positive, got " + std::to_string(disparity));
  }
  const double z = rig.focal_px * rig.baseline_m / disparity;
  return {(u_left - rig.cx) * z / rig.focal_px, (v_left - rig.cy) * z / rig.focal_px, z};
}

FlowerTarget triangulate(const DetectionPair& pair, const StereoRig& rig, double timestamp) {
  FlowerTarget t;
  t.position = triangulate_point(pair.left.bbox.center_x(), pair.left.bbox.center_y(), pair.right.bbox.center_x(), rig);
  t.timestamp = timestamp;
  t.source = std::make_shared<const DetectionPair>(pair);
  return t;
}

FlowerTarget to_vehicle_frame(const FlowerTarget& target, const RigidTransform& extrinsic) {
  extrinsic.validate();
  FlowerTarget out = target;
  out.position = extrinsic.apply(target.position);
  return out;
}

std::string to_points_jsonl(std::string_view image_id, const FlowerTarget& target) {
  nlohmann::ordered_json j;
  j["image_id"] = std::string(image_id);
  j["xyz"] = {target.x(), target.y(), target.z()};
  j["timestamp"] = target.timestamp;
  return j.dump();
}

std::vector<PointRecord> read_points(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<PointRecord> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PointRecord rec;
      rec.image_id = j.value("image_id", std::string{});
      const auto& xyz = j.at("xyz");
      if (!xyz.is_array() || xyz.size() != 3) throw Error(ErrorCode::parse, "xyz must have three values");
      rec.target.position << xyz[0].get<double>(), xyz[1].get<double>(), xyz[2].get<double>();
      rec.target.timestamp = j.value("timestamp", 0.0);
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::parse, path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace kiwi
