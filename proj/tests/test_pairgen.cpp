#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "scanfeat/core/rng.hpp"
#include "scanfeat/pairgen/real_pairs.hpp"
#include "scanfeat/pairgen/synthetic.hpp"
#include "scanfeat/projection/projection.hpp"
#include "scanfeat/sim/raycast.hpp"

using namespace scanfeat;
using namespace scanfeat::pairgen;

namespace {

constexpr double kPi = std::numbers::pi;

ScanImage random_image(int h, int w, std::uint64_t seed,
                       double valid_prob = 1.0) {
  Rng rng(seed);
  ScanImage img(h, w);
  for (std::size_t i = 0; i < img.range.size(); ++i) {
    if (rng.uniform() >= valid_prob) continue;
    img.range[i] = rng.uniform(1.0, 50.0);
    img.intensity[i] = rng.uniform();
    img.valid[i] = 1;
  }
  return img;
}

// hand-composed forward map: scale, wrap-shift, tilt applied in sequence
bool oracle_forward(const SyntheticTransformParams& p, int w, double u,
                    double v, double* ou, double* ov) {
  const double su = p.scale * u;
  const double sv = p.scale * v;
  if (su > w - 1 + 1e-12) return false;
  double wu = std::fmod(su + p.u_shift, static_cast<double>(w));
  if (wu < 0) wu += w;
  const double shear =
      w <= 1 ? 0.0 : p.tilt * (2.0 * wu / (w - 1) - 1.0);
  *ou = wu;
  *ov = sv + p.v_shift + shear;
  return true;
}

}  // namespace

TEST_CASE("synth_pair with identity params reproduces the input") {
  const ScanImage img = random_image(12, 40, 1, 0.9);
  const SyntheticPair pair = synth_pair(img, {});
  for (std::size_t i = 0; i < img.range.size(); ++i) {
    CHECK(pair.image.valid[i] == img.valid[i]);
    if (img.valid[i]) {
      CHECK(pair.image.range[i] == doctest::Approx(img.range[i]).epsilon(1e-12));
      CHECK(pair.image.intensity[i] ==
            doctest::Approx(img.intensity[i]).epsilon(1e-12));
    }
  }
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const std::size_t i = img.idx(v, u);
      CHECK(pair.flow.valid[i] == img.valid[i]);
      if (pair.flow.valid[i]) {
        CHECK(pair.flow.target_u[i] == doctest::Approx(u));
        CHECK(pair.flow.target_v[i] == doctest::Approx(v));
      }
    }
  }
}

TEST_CASE("scaling divides the range channel by s") {
  SUBCASE("single pixel, s = 2") {
    ScanImage img(8, 16);
    const std::size_t at = img.idx(2, 3);
    img.range[at] = 10.0;
    img.intensity[at] = 0.5;
    img.valid[at] = 1;
    SyntheticTransformParams p;
    p.scale = 2.0;
    const SyntheticPair pair = synth_pair(img, p);
    // source (3,2) appears at exactly (6,4) under the forward map
    const std::size_t out_at = pair.image.idx(4, 6);
    REQUIRE(pair.image.valid[out_at] == 1);
    CHECK(pair.image.range[out_at] == doctest::Approx(5.0));
    CHECK(pair.flow.is_valid(2, 3));
    CHECK(pair.flow.target_u[at] == doctest::Approx(6.0));
    CHECK(pair.flow.target_v[at] == doctest::Approx(4.0));
  }

  SUBCASE("constant image, s in {1.1, 1.25}") {
    for (double s : {1.1, 1.25}) {
      ScanImage img(16, 48);
      for (std::size_t i = 0; i < img.range.size(); ++i) {
        img.range[i] = 20.0;
        img.intensity[i] = 0.3;
        img.valid[i] = 1;
      }
      SyntheticTransformParams p;
      p.scale = s;
      const SyntheticPair pair = synth_pair(img, p);
      REQUIRE(pair.image.valid_count() > 0);
      for (std::size_t i = 0; i < pair.image.range.size(); ++i) {
        if (!pair.image.valid[i]) continue;
        CHECK(pair.image.range[i] == doctest::Approx(20.0 / s).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("full wrap u-shift is the identity") {
  const ScanImage img = random_image(10, 32, 2, 0.85);
  SyntheticTransformParams p;
  p.u_shift = img.width;
  const SyntheticPair pair = synth_pair(img, p);
  for (std::size_t i = 0; i < img.range.size(); ++i) {
    CHECK(pair.image.valid[i] == img.valid[i]);
    if (img.valid[i]) {
      CHECK(pair.image.range[i] == doctest::Approx(img.range[i]).epsilon(1e-12));
    }
  }
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      if (!pair.flow.is_valid(v, u)) continue;
      CHECK(pair.flow.target_u[pair.flow.idx(v, u)] == doctest::Approx(u));
      CHECK(pair.flow.target_v[pair.flow.idx(v, u)] == doctest::Approx(v));
    }
  }
}

TEST_CASE("flow equals the hand-composed map under random params") {
  Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const ScanImage img = random_image(20, 64, 100 + trial, 0.9);
    SyntheticParamRanges ranges;
    ranges.max_v_shift = 4;
    ranges.max_tilt = 3.0;
    ranges.max_u_shift = 20;
    const SyntheticTransformParams p = sample_params(ranges, rng);
    const SyntheticPair pair = synth_pair(img, p);
    std::size_t checked = 0;
    for (int v = 0; v < img.height; ++v) {
      for (int u = 0; u < img.width; ++u) {
        const std::size_t i = img.idx(v, u);
        if (!pair.flow.valid[i]) continue;
        double ou, ov;
        REQUIRE(oracle_forward(p, img.width, u, v, &ou, &ov));
        CHECK(pair.flow.target_u[i] == doctest::Approx(ou).epsilon(1e-12));
        CHECK(pair.flow.target_v[i] == doctest::Approx(ov).epsilon(1e-12));
        ++checked;
      }
    }
    CHECK(checked > 100);
  }
}

TEST_CASE("flow validity excludes vertically departing targets") {
  const ScanImage img = random_image(10, 24, 3);
  SyntheticTransformParams p;
  p.v_shift = 4;
  const SyntheticPair pair = synth_pair(img, p);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const bool expect = v + 4 < img.height;
      CHECK(pair.flow.is_valid(v, u) == expect);
    }
  }
}

TEST_CASE("column-rotation flow is invertible on its valid domain") {
  const ScanImage img = random_image(8, 30, 4, 0.9);
  SyntheticTransformParams fwd;
  fwd.u_shift = 7;
  SyntheticTransformParams bwd;
  bwd.u_shift = -7;
  const SyntheticPair a = synth_pair(img, fwd);
  const SyntheticPair b = synth_pair(a.image, bwd);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      if (!a.flow.is_valid(v, u)) continue;
      const int mu = static_cast<int>(
          std::llround(a.flow.target_u[a.flow.idx(v, u)]));
      const int mv = static_cast<int>(
          std::llround(a.flow.target_v[a.flow.idx(v, u)]));
      REQUIRE(b.flow.is_valid(mv, mu % img.width));
      const std::size_t j = b.flow.idx(mv, mu % img.width);
      CHECK(b.flow.target_u[j] == doctest::Approx(u));
      CHECK(b.flow.target_v[j] == doctest::Approx(v));
    }
  }
}

TEST_CASE("overlap of a cloud with itself is 1") {
  sim::ScannerSpec spec;
  spec.beams = 8;
  spec.azimuth_steps = 64;
  sim::Scene scene;
  sim::Primitive plane;
  plane.shape = sim::Shape::kPlane;
  plane.pose.translation = {0, 0, -1};
  scene.primitives.push_back(plane);
  sim::Primitive box;
  box.shape = sim::Shape::kBox;
  box.pose.translation = {4, 0, 0};
  box.size = {1, 1, 1};
  scene.primitives.push_back(box);
  const OrderedPointCloud cloud = raycast(scene, Pose{}, spec, 1);
  REQUIRE(cloud.valid_count() > 0);
  for (double d : {0.05, 0.5}) {
    CHECK(overlap(cloud, cloud, RigidTransform::identity(), d) == 1.0);
  }
}

TEST_CASE("overlap of distant clouds is 0") {
  OrderedPointCloud a(1, 10), b(1, 10);
  for (int i = 0; i < 10; ++i) {
    a.points[i] = {0.1 * i, 0, 0};
    b.points[i] = {100 + 0.1 * i, 0, 0};
    a.valid[i] = b.valid[i] = 1;
  }
  CHECK(overlap(a, b, RigidTransform::identity(), 0.5) == 0.0);
}

TEST_CASE("overlap throws on an empty first cloud") {
  OrderedPointCloud a(2, 2), b(1, 1);
  b.points[0] = {1, 0, 0};
  b.valid[0] = 1;
  CHECK_THROWS_AS(overlap(a, b, RigidTransform::identity(), 0.5),
                  EmptyCloud);
}

TEST_CASE("overlap tracks the analytic ground coverage fraction") {
  // two sensors over an infinite ground plane; each sees an annulus of beam
  // circles, and the shared fraction has a closed form per circle
  const double h = 1.5;
  sim::Scene scene;
  sim::Primitive plane;
  plane.shape = sim::Shape::kPlane;
  scene.primitives.push_back(plane);

  sim::ScannerSpec spec;
  spec.beams = 128;
  spec.azimuth_steps = 256;
  spec.elev_min = -70.0 * kPi / 180.0;
  spec.elev_max = -15.0 * kPi / 180.0;
  spec.max_range = 8.0;

  Pose pa, pb;
  pa.transform.translation = {0, 0, h};
  const double d = 5.0;
  pb.transform.translation = {d, 0, h};

  const OrderedPointCloud a = raycast(scene, pa, spec, 1);
  const OrderedPointCloud b = raycast(scene, pb, spec, 2);
  const RigidTransform t = relative_transform(pa, pb);

  const SphericalModel model = spec.spherical_model();
  const double corr = 0.25;
  // b covers a ground disk out to its widest beam ring; anything within the
  // correspondence radius of that disk counts, hence the dilation by corr
  const double rho = h / std::tan(-model.elevation_angles[0]) + corr;
  double analytic = 0.0;
  for (int r = 0; r < spec.beams; ++r) {
    const double g = h / std::tan(-model.elevation_angles[r]);
    const double c = (g * g + d * d - rho * rho) / (2.0 * g * d);
    analytic += std::acos(std::clamp(c, -1.0, 1.0)) / kPi;
  }
  analytic /= spec.beams;

  const double omega = overlap(a, b, t, corr);
  CHECK(std::abs(omega - analytic) <= 0.05);
  CHECK(omega > 0.3);
  CHECK(omega < 0.8);
}

TEST_CASE("select_real_pairs with a single pose is empty") {
  std::vector<Pose> poses(1);
  OrderedPointCloud cloud(1, 4);
  for (int i = 0; i < 4; ++i) {
    cloud.points[i] = {1.0 + i, 0, 0};
    cloud.valid[i] = 1;
  }
  const auto pairs = select_real_pairs(
      poses, [&](std::size_t) -> const OrderedPointCloud& { return cloud; },
      PairSelectionConfig{}, 1, 7);
  CHECK(pairs.empty());
}

TEST_CASE("select_real_pairs accepts a shell partner passing the gate") {
  std::vector<Pose> poses(2);
  poses[1].transform.translation = {3.0, 0, 0};  // mid-shell for [1, 5]
  OrderedPointCloud cloud(1, 16);
  for (int i = 0; i < 16; ++i) {
    // ring of points far away, so a 3 m baseline barely moves distances
    const double a = 2.0 * kPi * i / 16;
    cloud.points[i] = {100 * std::cos(a), 100 * std::sin(a), 0};
    cloud.valid[i] = 1;
  }
  // identical world geometry seen from both poses
  std::vector<OrderedPointCloud> clouds;
  clouds.push_back(cloud);
  clouds.push_back(transform_cloud(
      cloud, relative_transform(poses[0], poses[1])));
  PairSelectionConfig cfg;
  cfg.correspondence_distance = 0.5;
  const auto pairs = select_real_pairs(
      poses,
      [&](std::size_t i) -> const OrderedPointCloud& { return clouds[i]; },
      cfg, 1, 7);
  REQUIRE(pairs.size() == 2);  // both anchors accept the other
  CHECK(pairs[0].anchor == 0);
  CHECK(pairs[0].partner == 1);
}

TEST_CASE("select_real_pairs is deterministic under a fixed seed") {
  Rng rng(12);
  std::vector<Pose> poses(30);
  for (int i = 0; i < 30; ++i) {
    poses[i].transform.translation = {0.4 * i, rng.uniform(-0.2, 0.2), 0};
  }
  std::vector<OrderedPointCloud> clouds;
  OrderedPointCloud base(1, 64);
  for (int i = 0; i < 64; ++i) {
    const double a = 2.0 * kPi * i / 64;
    base.points[i] = {60 * std::cos(a), 60 * std::sin(a), 0};
    base.valid[i] = 1;
  }
  for (int i = 0; i < 30; ++i) {
    clouds.push_back(transform_cloud(
        base, relative_transform(Pose{}, poses[i])));
  }
  const CloudAccessor acc = [&](std::size_t i) -> const OrderedPointCloud& {
    return clouds[i];
  };
  PairSelectionConfig cfg;
  cfg.correspondence_distance = 0.5;
  const auto p1 = select_real_pairs(poses, acc, cfg, 3, 99);
  const auto p2 = select_real_pairs(poses, acc, cfg, 3, 99);
  REQUIRE(p1.size() == p2.size());
  CHECK_FALSE(p1.empty());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].anchor == p2[i].anchor);
    CHECK(p1[i].partner == p2[i].partner);
  }
}

TEST_CASE("pixel_flow is the identity for a self pair") {
  sim::ScannerSpec spec;
  spec.beams = 16;
  spec.azimuth_steps = 64;
  spec.elev_min = -0.5;
  spec.elev_max = 0.2;
  sim::Scene scene;
  sim::Primitive plane;
  plane.shape = sim::Shape::kPlane;
  plane.pose.translation = {0, 0, -1.2};
  scene.primitives.push_back(plane);
  const OrderedPointCloud cloud = raycast(scene, Pose{}, spec, 5);
  const ScanImage img = to_scan_image(cloud);
  const FlowMap flow = pixel_flow(cloud, img, RigidTransform::identity(),
                                  spec.spherical_model(), 0.1);
  REQUIRE(cloud.valid_count() > 0);
  for (int r = 0; r < cloud.height; ++r) {
    for (int c = 0; c < cloud.width; ++c) {
      CHECK(flow.is_valid(r, c) == cloud.is_valid(r, c));
      if (!flow.is_valid(r, c)) continue;
      CHECK(flow.target_u[flow.idx(r, c)] == doctest::Approx(c).epsilon(1e-9));
      CHECK(flow.target_v[flow.idx(r, c)] == doctest::Approx(r).epsilon(1e-9));
    }
  }
}

TEST_CASE("pixel_flow culls points hidden behind nearer surfaces") {
  // target image has a wall at 4 m; a point projecting there at 10 m with a
  // 0.5 m margin is occluded
  const SphericalModel model = SphericalModel::uniform(3, 16, -0.1, 0.1);
  ScanImage b(3, 16);
  for (std::size_t i = 0; i < b.range.size(); ++i) {
    b.range[i] = 4.0;
    b.valid[i] = 1;
  }
  OrderedPointCloud a(3, 16);
  const std::size_t at = a.idx(1, 0);
  a.points[at] = 10.0 * model.direction(1, 0);
  a.valid[at] = 1;
  const std::size_t at2 = a.idx(1, 8);
  a.points[at2] = 4.2 * model.direction(1, 8);  // within margin, kept
  a.valid[at2] = 1;

  const FlowMap flow =
      pixel_flow(a, b, RigidTransform::identity(), model, 0.5);
  CHECK_FALSE(flow.is_valid(1, 0));
  CHECK(flow.is_valid(1, 8));
}

TEST_CASE("pixel_flow matches the brute-force oracle on a simulated pair") {
  sim::ScannerSpec spec;
  spec.beams = 24;
  spec.azimuth_steps = 96;
  spec.elev_min = -0.6;
  spec.elev_max = 0.2;
  sim::Scene scene;
  sim::Primitive plane;
  plane.shape = sim::Shape::kPlane;
  plane.pose.translation = {0, 0, -1.4};
  scene.primitives.push_back(plane);
  sim::Primitive box;
  box.shape = sim::Shape::kBox;
  box.pose.translation = {5, 1, -0.2};
  box.size = {0.8, 1.2, 1.2};
  scene.primitives.push_back(box);

  Pose pa, pb;
  pb.transform.translation = {1.2, 0.4, 0.0};
  pb.transform.rotation = rotation_about_z(0.3);
  const OrderedPointCloud a = raycast(scene, pa, spec, 11);
  const OrderedPointCloud bc = raycast(scene, pb, spec, 12);
  const ScanImage b = to_scan_image(bc);
  const RigidTransform t = relative_transform(pa, pb);
  const SphericalModel model = spec.spherical_model();
  const double margin = 0.5;
  const FlowMap flow = pixel_flow(a, b, t, model, margin);

  // plain per-pixel re-derivation: transform, spherical coordinates against
  // the uniform beam table, round, then the validity and occlusion rules
  const double e_max = spec.elev_max;
  const double de = (spec.elev_max - spec.elev_min) / (spec.beams - 1);
  std::size_t valid_seen = 0;
  for (int r = 0; r < a.height; ++r) {
    for (int c = 0; c < a.width; ++c) {
      bool expect_valid = false;
      double eu = 0, ev = 0;
      if (a.is_valid(r, c)) {
        const Eigen::Vector3d p = t.rotation * a.point(r, c) + t.translation;
        const double range = p.norm();
        const double elev = std::asin(p.z() / range);
        const double row_f = (e_max - elev) / de;
        double col_f = std::atan2(p.y(), p.x()) /
                       (2.0 * kPi / spec.azimuth_steps);
        col_f = std::fmod(col_f, static_cast<double>(spec.azimuth_steps));
        if (col_f < 0) col_f += spec.azimuth_steps;
        const int trow = static_cast<int>(std::floor(row_f + 0.5));
        const int tcol = static_cast<int>(std::floor(col_f + 0.5)) %
                         spec.azimuth_steps;
        if (row_f >= -0.5 - 1e-9 && trow >= 0 && trow < spec.beams &&
            b.is_valid(trow, tcol) &&
            range <= b.range[b.idx(trow, tcol)] + margin) {
          expect_valid = true;
          eu = col_f;
          ev = row_f;
        }
      }
      REQUIRE(flow.is_valid(r, c) == expect_valid);
      if (expect_valid) {
        const std::size_t i = flow.idx(r, c);
        CHECK(std::abs(flow.target_u[i] - eu) < 1e-6);
        CHECK(std::abs(flow.target_v[i] - ev) < 1e-6);
        ++valid_seen;
      }
    }
  }
  CHECK(valid_seen > 300);
}

TEST_CASE("enlarging the occlusion margin never invalidates flow entries") {
  sim::ScannerSpec spec;
  spec.beams = 12;
  spec.azimuth_steps = 48;
  spec.elev_min = -0.5;
  spec.elev_max = 0.1;
  sim::Scene scene;
  sim::Primitive plane;
  plane.shape = sim::Shape::kPlane;
  plane.pose.translation = {0, 0, -1};
  scene.primitives.push_back(plane);
  sim::Primitive box;
  box.shape = sim::Shape::kBox;
  box.pose.translation = {3, 0, -0.5};
  box.size = {0.5, 0.9, 0.6};
  scene.primitives.push_back(box);
  Pose pa, pb;
  pb.transform.translation = {0.8, -0.5, 0};
  const OrderedPointCloud a = raycast(scene, pa, spec, 21);
  const OrderedPointCloud bc = raycast(scene, pb, spec, 22);
  const ScanImage b = to_scan_image(bc);
  const RigidTransform t = relative_transform(pa, pb);
  const SphericalModel model = spec.spherical_model();
  const FlowMap small = pixel_flow(a, b, t, model, 0.05);
  const FlowMap large = pixel_flow(a, b, t, model, 1.0);
  for (std::size_t i = 0; i < small.valid.size(); ++i) {
    if (small.valid[i]) CHECK(large.valid[i]);
  }
}

TEST_CASE("pair manifest and flow files round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "scanfeat_test_pairgen";
  fs::create_directories(dir);

  Rng rng(61);
  std::vector<PairRecord> pairs;
  for (int i = 0; i < 5; ++i) {
    PairRecord rec;
    rec.anchor = i;
    rec.partner = i + 10;
    rec.transform.rotation = rotation_about_z(rng.uniform(-1, 1));
    rec.transform.translation = {rng.uniform(-2, 2), rng.uniform(-2, 2), 0};
    pairs.push_back(rec);
  }
  const std::string mpath = (dir / "pairs.txt").string();
  save_pair_manifest(mpath, pairs);
  const auto back = load_pair_manifest(mpath);
  REQUIRE(back.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(back[i].anchor == pairs[i].anchor);
    CHECK(back[i].partner == pairs[i].partner);
    CHECK((back[i].transform.matrix() - pairs[i].transform.matrix())
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }

  FlowMap flow(4, 6);
  for (std::size_t i = 0; i < flow.valid.size(); ++i) {
    if (rng.uniform() < 0.7) {
      flow.valid[i] = 1;
      flow.target_u[i] = rng.uniform(0, 6);
      flow.target_v[i] = rng.uniform(0, 4);
    }
  }
  const std::string fpath = (dir / "flow.scni").string();
  save_flow(fpath, flow);
  const FlowMap fback = load_flow(fpath);
  REQUIRE(fback.height == flow.height);
  for (std::size_t i = 0; i < flow.valid.size(); ++i) {
    CHECK(fback.valid[i] == flow.valid[i]);
    if (flow.valid[i]) {
      CHECK(fback.target_u[i] == doctest::Approx(flow.target_u[i]).epsilon(1e-6));
      CHECK(fback.target_v[i] == doctest::Approx(flow.target_v[i]).epsilon(1e-6));
    }
  }
  fs::remove_all(dir);
}
