#include "scanfeat/mapping/pose_graph.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace scanfeat::mapping {

namespace {

Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

Eigen::Vector3d log_so3(const Eigen::Matrix3d& r) {
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(c);
  const Eigen::Vector3d vee(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0),
                            r(1, 0) - r(0, 1));
  if (theta < 1e-7) {
    // log(R) ~ vee/2 * (1 + theta^2/6)
    return 0.5 * vee * (1.0 + theta * theta / 6.0);
  }
  if (theta > std::numbers::pi - 1e-5) {
    // near pi the vee part vanishes; recover the axis from R + I
    const Eigen::Matrix3d b = 0.5 * (r + Eigen::Matrix3d::Identity());
    int k = 0;
    b.diagonal().maxCoeff(&k);
    Eigen::Vector3d axis;
    axis[k] = std::sqrt(std::max(b(k, k), 0.0));
    for (int j = 0; j < 3; ++j) {
      if (j != k) axis[j] = b(k, j) / axis[k];
    }
    axis.normalize();
    // fix the sign with the vee part when it is not fully degenerate
    if (vee.dot(axis) < 0.0) axis = -axis;
    return theta * axis;
  }
  return theta / (2.0 * std::sin(theta)) * vee;
}

Eigen::Matrix3d exp_so3(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d wx = hat(w);
  if (theta < 1e-9) {
    return Eigen::Matrix3d::Identity() + wx + 0.5 * wx * wx;
  }
  return Eigen::Matrix3d::Identity() + std::sin(theta) / theta * wx +
         (1.0 - std::cos(theta)) / (theta * theta) * wx * wx;
}

Eigen::Matrix3d left_jacobian(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d wx = hat(w);
  if (theta < 1e-6) {
    return Eigen::Matrix3d::Identity() + 0.5 * wx + wx * wx / 6.0;
  }
  const double t2 = theta * theta;
  return Eigen::Matrix3d::Identity() +
         (1.0 - std::cos(theta)) / t2 * wx +
         (theta - std::sin(theta)) / (t2 * theta) * wx * wx;
}

Eigen::Matrix3d left_jacobian_inv(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d wx = hat(w);
  if (theta < 1e-6) {
    return Eigen::Matrix3d::Identity() - 0.5 * wx + wx * wx / 12.0;
  }
  const double t2 = theta * theta;
  const double coeff =
      1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Eigen::Matrix3d::Identity() - 0.5 * wx + coeff * wx * wx;
}

}  // namespace

RigidTransform se3_exp(const Eigen::Matrix<double, 6, 1>& xi) {
  const Eigen::Vector3d omega = xi.head<3>();
  RigidTransform t;
  t.rotation = exp_so3(omega);
  t.translation = left_jacobian(omega) * xi.tail<3>();
  return t;
}

Eigen::Matrix<double, 6, 1> se3_log(const RigidTransform& t) {
  Eigen::Matrix<double, 6, 1> xi;
  const Eigen::Vector3d omega = log_so3(t.rotation);
  xi.head<3>() = omega;
  xi.tail<3>() = left_jacobian_inv(omega) * t.translation;
  return xi;
}

PoseGraph build_graph(const std::vector<reg::RegistrationResult>& odometry,
                      const std::vector<LoopConstraint>& loops,
                      std::size_t* dropped_loops) {
  PoseGraph graph;
  graph.nodes.push_back(RigidTransform::identity());
  for (std::size_t i = 0; i < odometry.size(); ++i) {
    if (!odometry[i].converged) {
      throw BrokenChain("odometry result " + std::to_string(i) +
                        " did not converge");
    }
    graph.nodes.push_back(
        compose(graph.nodes.back(), odometry[i].transform));
    graph.edges.push_back({i, i + 1, odometry[i].transform,
                           EdgeKind::kOdometry, 1.0});
  }
  std::size_t dropped = 0;
  for (const LoopConstraint& loop : loops) {
    if (!loop.registration.converged) {
      ++dropped;
      continue;
    }
    if (loop.i >= graph.nodes.size() || loop.j >= graph.nodes.size()) {
      throw BrokenChain("loop edge endpoint out of range");
    }
    graph.edges.push_back({loop.i, loop.j, loop.registration.transform,
                           EdgeKind::kLoop, 1.0});
  }
  if (dropped_loops) *dropped_loops = dropped;
  return graph;
}

namespace {

Eigen::Matrix<double, 6, 1> edge_residual(const PoseGraph& graph,
                                          const PoseGraphEdge& e) {
  const RigidTransform rel =
      compose(graph.nodes[e.i].inverse(), graph.nodes[e.j]);
  return se3_log(compose(e.constraint.inverse(), rel));
}

}  // namespace

double graph_residual(const PoseGraph& graph) {
  double total = 0.0;
  for (const PoseGraphEdge& e : graph.edges) {
    total += e.information * edge_residual(graph, e).squaredNorm();
  }
  return total;
}

OptimizeResult optimize(const PoseGraph& input,
                        const OptimizeOptions& options) {
  OptimizeResult out;
  out.graph = input;
  const std::size_t n = input.nodes.size();
  if (n <= 1 || input.edges.empty()) {
    out.residual_log.push_back(graph_residual(out.graph));
    return out;
  }
  const std::size_t m = 6 * (n - 1);  // node 0 is the gauge anchor

  double cost = graph_residual(out.graph);
  out.residual_log.push_back(cost);
  double lambda = options.lambda_init;
  constexpr double kFd = 1e-7;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    for (const PoseGraphEdge& e : input.edges) {
      const Eigen::Matrix<double, 6, 1> r = edge_residual(out.graph, e);
      // numeric Jacobians of the residual in the two nodes' local frames
      Eigen::Matrix<double, 6, 6> ji = Eigen::Matrix<double, 6, 6>::Zero();
      Eigen::Matrix<double, 6, 6> jj = ji;
      for (int k = 0; k < 6; ++k) {
        Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
        d[k] = kFd;
        for (int node_sel = 0; node_sel < 2; ++node_sel) {
          const std::size_t node = node_sel == 0 ? e.i : e.j;
          if (node == 0) continue;
          PoseGraph& g = out.graph;
          const RigidTransform saved = g.nodes[node];
          g.nodes[node] = compose(saved, se3_exp(d));
          const Eigen::Matrix<double, 6, 1> rp = edge_residual(g, e);
          g.nodes[node] = compose(saved, se3_exp(-d));
          const Eigen::Matrix<double, 6, 1> rm = edge_residual(g, e);
          g.nodes[node] = saved;
          const Eigen::Matrix<double, 6, 1> col = (rp - rm) / (2.0 * kFd);
          if (node_sel == 0) {
            ji.col(k) = col;
          } else {
            jj.col(k) = col;
          }
        }
      }
      const double w = e.information;
      if (e.i != 0) {
        const std::size_t oi = 6 * (e.i - 1);
        h.block<6, 6>(oi, oi) += w * ji.transpose() * ji;
        b.segment<6>(oi) -= w * ji.transpose() * r;
      }
      if (e.j != 0) {
        const std::size_t oj = 6 * (e.j - 1);
        h.block<6, 6>(oj, oj) += w * jj.transpose() * jj;
        b.segment<6>(oj) -= w * jj.transpose() * r;
      }
      if (e.i != 0 && e.j != 0) {
        const std::size_t oi = 6 * (e.i - 1);
        const std::size_t oj = 6 * (e.j - 1);
        h.block<6, 6>(oi, oj) += w * ji.transpose() * jj;
        h.block<6, 6>(oj, oi) += w * jj.transpose() * ji;
      }
    }
    if (b.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) break;

    bool accepted = false;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      Eigen::MatrixXd damped = h;
      damped.diagonal().array() += lambda;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
      if (ldlt.info() != Eigen::Success) {
        throw SingularSystem("damped normal equations unsolvable");
      }
      const Eigen::VectorXd delta = ldlt.solve(b);
      if (!delta.allFinite()) {
        throw SingularSystem("non-finite step in pose graph solve");
      }
      if (delta.norm() < options.step_tolerance) {
        out.iterations = iter;
        return out;
      }
      PoseGraph trial = out.graph;
      for (std::size_t node = 1; node < n; ++node) {
        trial.nodes[node] = compose(
            trial.nodes[node], se3_exp(delta.segment<6>(6 * (node - 1))));
        trial.nodes[node] = orthonormalized(trial.nodes[node]);
      }
      const double trial_cost = graph_residual(trial);
      if (trial_cost <= cost) {
        out.graph = std::move(trial);
        cost = trial_cost;
        out.residual_log.push_back(cost);
        lambda = std::max(lambda * 0.5, 1e-12);
        accepted = true;
      } else {
        lambda *= 4.0;
      }
    }
    out.iterations = iter + 1;
    if (!accepted) break;  // damping exhausted
  }
  return out;
}

namespace {

void write_transform(std::ostream& out, const RigidTransform& t) {
  Eigen::Quaterniond q(t.rotation);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  out << t.translation.x() << ' ' << t.translation.y() << ' '
      << t.translation.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z()
      << ' ' << q.w();
}

}  // namespace

void save_graph(const std::string& path, const PoseGraph& graph) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write graph file: " + path);
  out.precision(17);
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    out << "VERTEX_SE3:QUAT " << i << ' ';
    write_transform(out, graph.nodes[i]);
    out << '\n';
  }
  for (const PoseGraphEdge& e : graph.edges) {
    out << "EDGE_SE3:QUAT " << e.i << ' ' << e.j << ' ';
    write_transform(out, e.constraint);
    // upper-triangular 6x6 information, diagonal weights
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) {
        out << ' ' << (r == c ? e.information : 0.0);
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

PoseGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph file: " + path);
  PoseGraph graph;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag.empty() || tag[0] == '#') continue;
    if (tag == "VERTEX_SE3:QUAT") {
      std::size_t id;
      double tx, ty, tz, qx, qy, qz, qw;
      if (!(ss >> id >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
        throw IoError("malformed vertex at " + path + ":" +
                      std::to_string(lineno));
      }
      if (id != graph.nodes.size()) {
        throw IoError("non-contiguous vertex ids in " + path);
      }
      RigidTransform t;
      t.translation = {tx, ty, tz};
      t.rotation = Eigen::Quaterniond(qw, qx, qy, qz)
                       .normalized()
                       .toRotationMatrix();
      graph.nodes.push_back(orthonormalized(t));
    } else if (tag == "EDGE_SE3:QUAT") {
      PoseGraphEdge e;
      double tx, ty, tz, qx, qy, qz, qw;
      if (!(ss >> e.i >> e.j >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
        throw IoError("malformed edge at " + path + ":" +
                      std::to_string(lineno));
      }
      e.constraint.translation = {tx, ty, tz};
      e.constraint.rotation = Eigen::Quaterniond(qw, qx, qy, qz)
                                  .normalized()
                                  .toRotationMatrix();
      e.constraint = orthonormalized(e.constraint);
      double info = 1.0;
      double v;
      bool first = true;
      while (ss >> v) {
        if (first) {
          info = v;
          first = false;
        }
      }
      e.information = info;
      e.kind = e.j == e.i + 1 ? EdgeKind::kOdometry : EdgeKind::kLoop;
      graph.edges.push_back(e);
    }
  }
  for (const PoseGraphEdge& e : graph.edges) {
    if (e.i >= graph.nodes.size() || e.j >= graph.nodes.size()) {
      throw IoError("edge endpoint out of range in " + path);
    }
  }
  return graph;
}

}  // namespace scanfeat::mapping
