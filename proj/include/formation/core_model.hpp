#ifndef FORMATION_CORE_MODEL_HPP
#define FORMATION_CORE_MODEL_HPP

#include <Eigen/Dense>

#include <map>
#include <utility>
#include <vector>

#include "formation/errors.hpp"

namespace formation {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Undirected edge with 0-based endpoints, stored as i < j.
struct Edge {
  int i;
  int j;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected sensing graph on nodes 0..n-1. Edges are kept sorted so the
/// gain-variable layout derived from them is canonical.
class SensingGraph {
 public:
  SensingGraph() = default;
  SensingGraph(int n, const std::vector<std::pair<int, int>>& edges);

  static SensingGraph complete(int n);
  static SensingGraph path(int n);

  int size() const noexcept { return n_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<int>& neighbors(int i) const { return neighbors_.at(i); }
  bool has_edge(int i, int j) const;
  /// Position of {i, j} in edges(), or -1.
  int edge_index(int i, int j) const;

  friend bool operator==(const SensingGraph& a, const SensingGraph& b) {
    return a.n_ == b.n_ && a.edges_ == b.edges_;
  }

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> neighbors_;
};

/// Desired coordinates q* for n agents together with the sensing graph.
class FormationSpec {
 public:
  FormationSpec(std::vector<Vec3> coords, SensingGraph graph);

  int size() const noexcept { return static_cast<int>(coords_.size()); }
  const std::vector<Vec3>& coords() const noexcept { return coords_; }
  const SensingGraph& graph() const noexcept { return graph_; }
  /// Stacked (x1, y1, z1, x2, ...) vector in R^{3n}.
  Eigen::VectorXd aggregate() const;
  /// Desired inter-agent distance |q*_j - q*_i|.
  double desired_distance(int i, int j) const { return (coords_[j] - coords_[i]).norm(); }

 private:
  std::vector<Vec3> coords_;
  SensingGraph graph_;
};

/// Structured gain [[a, -b, 0], [b, a, 0], [0, 0, c]]: a z-rotation/scaling
/// in the horizontal plane combined with an independent z scaling.
template <typename Scalar>
struct GainBlock {
  Scalar a{0};
  Scalar b{0};
  Scalar c{0};
  friend bool operator==(const GainBlock&, const GainBlock&) = default;
};

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> materialize_block(const GainBlock<Scalar>& g) {
  Eigen::Matrix<Scalar, 3, 3> m;
  m << g.a, -g.b, Scalar(0),
       g.b, g.a, Scalar(0),
       Scalar(0), Scalar(0), g.c;
  return m;
}

using Gain = GainBlock<double>;

/// One block per direction of every sensing edge, keyed by 0-based (i, j).
class GainSet {
 public:
  GainSet() = default;
  explicit GainSet(std::map<std::pair<int, int>, Gain> blocks) : blocks_(std::move(blocks)) {}

  static GainSet zeros(const SensingGraph& graph);
  static GainSet uniform(const SensingGraph& graph, const Gain& g);

  const Gain& at(int i, int j) const;
  void set(int i, int j, const Gain& g) { blocks_[{i, j}] = g; }
  const std::map<std::pair<int, int>, Gain>& blocks() const noexcept { return blocks_; }
  std::size_t size() const noexcept { return blocks_.size(); }

  /// Throws StructuralError unless the key set is exactly both directions
  /// of each edge and every entry is finite.
  void check_matches(const SensingGraph& graph) const;

  friend bool operator==(const GainSet&, const GainSet&) = default;

 private:
  std::map<std::pair<int, int>, Gain> blocks_;
};

// Gain vector layout: for edge e = {i < j} the six entries starting at 6e are
// (a, b, c) of block (i, j) followed by (a, b, c) of block (j, i).
inline Eigen::Index gain_variable_count(const SensingGraph& graph) {
  return static_cast<Eigen::Index>(6 * graph.edge_count());
}

Eigen::VectorXd gains_to_vector(const SensingGraph& graph, const GainSet& gains);
GainSet gains_from_vector(const SensingGraph& graph, const Eigen::Ref<const Eigen::VectorXd>& g);

/// Aggregate 3n x 3n gain matrix from a gain vector in the layout above.
/// Off-diagonal block (i, j) is the materialized block, diagonal block (i, i)
/// is minus the sum of row i's off-diagonal blocks.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> assemble_aggregate(
    const SensingGraph& graph, const Eigen::MatrixBase<Derived>& g) {
  using Scalar = typename Derived::Scalar;
  if (g.size() != gain_variable_count(graph)) {
    throw StructuralError("gain vector length does not match graph edge count");
  }
  const Eigen::Index n = graph.size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> a =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(3 * n, 3 * n);
  const auto& edges = graph.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Eigen::Index base = static_cast<Eigen::Index>(6 * e);
    const int ends[2][2] = {{edges[e].i, edges[e].j}, {edges[e].j, edges[e].i}};
    for (int dir = 0; dir < 2; ++dir) {
      const GainBlock<Scalar> blk{g(base + 3 * dir), g(base + 3 * dir + 1), g(base + 3 * dir + 2)};
      const auto m = materialize_block(blk);
      const Eigen::Index r = 3 * ends[dir][0];
      const Eigen::Index c = 3 * ends[dir][1];
      a.template block<3, 3>(r, c) += m;
      a.template block<3, 3>(r, r) -= m;
    }
  }
  return a;
}

Eigen::MatrixXd assemble_aggregate(const FormationSpec& spec, const GainSet& gains);

/// Stacked constant vectors 1_n (x) e_axis, axis in {0, 1, 2}.
Eigen::VectorXd ones_along(int n, int axis);

}  // namespace formation

#endif  // FORMATION_CORE_MODEL_HPP
