#pragma once

#include <string>
#include <vector>

#include "scanfeat/core/geometry.hpp"
#include "scanfeat/registration/registration.hpp"

namespace scanfeat::mapping {

struct BrokenChain : Error {
  explicit BrokenChain(const std::string& msg) : Error(msg) {}
};
struct SingularSystem : Error {
  explicit SingularSystem(const std::string& msg) : Error(msg) {}
};

enum class EdgeKind { kOdometry, kLoop };

/// Relative-pose constraint: measured pose of node j expressed in node i's
/// frame, i.e. Z ~ inverse(pose_i) * pose_j.
struct PoseGraphEdge {
  std::size_t i = 0;
  std::size_t j = 0;
  RigidTransform constraint;
  EdgeKind kind = EdgeKind::kOdometry;
  double information = 1.0;
};

struct PoseGraph {
  std::vector<RigidTransform> nodes;
  std::vector<PoseGraphEdge> edges;
};

/// SE(3) exponential/log with the rotation-vector + translation layout
/// [omega; rho], series-based near the identity.
RigidTransform se3_exp(const Eigen::Matrix<double, 6, 1>& xi);
Eigen::Matrix<double, 6, 1> se3_log(const RigidTransform& t);

/// Chains odometry (node i+1 = node i composed with odometry_i) and appends
/// converged loop edges; non-converged loops are dropped and counted.
/// Odometry results must all be converged, otherwise BrokenChain.
struct LoopConstraint {
  std::size_t i = 0;
  std::size_t j = 0;
  reg::RegistrationResult registration;  // pose of scan j in scan i's frame
};

PoseGraph build_graph(const std::vector<reg::RegistrationResult>& odometry,
                      const std::vector<LoopConstraint>& loops,
                      std::size_t* dropped_loops = nullptr);

/// Sum over edges of |se3_log(constraint^-1 * (pose_i^-1 * pose_j))|^2.
double graph_residual(const PoseGraph& graph);

struct OptimizeOptions {
  int max_iterations = 100;
  double lambda_init = 1e-4;
  double gradient_tolerance = 1e-8;
  double step_tolerance = 1e-10;
};

struct OptimizeResult {
  PoseGraph graph;
  std::vector<double> residual_log;  // total residual after each accepted step
  int iterations = 0;
};

/// Levenberg-Marquardt over a 6-dof local parameterization per free node
/// (node 0 is the gauge anchor). Accepted-step residuals are non-increasing.
OptimizeResult optimize(const PoseGraph& graph, const OptimizeOptions& options);

/// g2o-style text: VERTEX_SE3:QUAT and EDGE_SE3:QUAT lines with the 21
/// upper-triangular information entries.
PoseGraph load_graph(const std::string& path);
void save_graph(const std::string& path, const PoseGraph& graph);

}  // namespace scanfeat::mapping
