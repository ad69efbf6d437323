#include "formation/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace formation {

SensingGraph::SensingGraph(int n, const std::vector<std::pair<int, int>>& edges) : n_(n) {
  if (n < 1) throw StructuralError("graph must have at least one node");
  std::set<std::pair<int, int>> seen;
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw StructuralError("edge {" + std::to_string(u + 1) + ", " + std::to_string(v + 1) +
                            "} has an endpoint outside [1, " + std::to_string(n) + "]");
    }
    if (u == v) throw StructuralError("self-loop at node " + std::to_string(u + 1));
    const auto key = std::minmax(u, v);
    if (!seen.insert(key).second) {
      throw StructuralError("duplicate edge {" + std::to_string(key.first + 1) + ", " +
                            std::to_string(key.second + 1) + "}");
    }
  }
  for (const auto& [i, j] : seen) edges_.push_back({i, j});
  neighbors_.assign(n, {});
  for (const auto& e : edges_) {
    neighbors_[e.i].push_back(e.j);
    neighbors_[e.j].push_back(e.i);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
}

SensingGraph SensingGraph::complete(int n) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  return SensingGraph(n, edges);
}

SensingGraph SensingGraph::path(int n) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return SensingGraph(n, edges);
}

bool SensingGraph::has_edge(int i, int j) const { return edge_index(i, j) >= 0; }

int SensingGraph::edge_index(int i, int j) const {
  const Edge key{std::min(i, j), std::max(i, j)};
  const auto it = std::lower_bound(edges_.begin(), edges_.end(), key, [](const Edge& a, const Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  if (it == edges_.end() || !(*it == key)) return -1;
  return static_cast<int>(it - edges_.begin());
}

FormationSpec::FormationSpec(std::vector<Vec3> coords, SensingGraph graph)
    : coords_(std::move(coords)), graph_(std::move(graph)) {
  if (coords_.size() < 2) throw StructuralError("formation needs at least two agents");
  if (static_cast<int>(coords_.size()) != graph_.size()) {
    throw StructuralError("formation has " + std::to_string(coords_.size()) +
                          " agents but graph has " + std::to_string(graph_.size()) + " nodes");
  }
  bool distinct = false;
  for (const auto& p : coords_) {
    if (!p.allFinite()) throw StructuralError("formation coordinates must be finite");
    if (p != coords_.front()) distinct = true;
  }
  if (!distinct) throw DegenerateFormationError("all formation points coincide");
}

Eigen::VectorXd FormationSpec::aggregate() const {
  Eigen::VectorXd q(3 * size());
  for (int i = 0; i < size(); ++i) q.segment<3>(3 * i) = coords_[i];
  return q;
}

GainSet GainSet::zeros(const SensingGraph& graph) { return uniform(graph, Gain{}); }

GainSet GainSet::uniform(const SensingGraph& graph, const Gain& g) {
  GainSet out;
  for (const auto& e : graph.edges()) {
    out.set(e.i, e.j, g);
    out.set(e.j, e.i, g);
  }
  return out;
}

const Gain& GainSet::at(int i, int j) const {
  const auto it = blocks_.find({i, j});
  if (it == blocks_.end()) {
    throw StructuralError("no gain block for (" + std::to_string(i + 1) + ", " +
                          std::to_string(j + 1) + ")");
  }
  return it->second;
}

void GainSet::check_matches(const SensingGraph& graph) const {
  if (blocks_.size() != 2 * graph.edge_count()) {
    throw StructuralError("gain set has " + std::to_string(blocks_.size()) + " blocks, graph needs " +
                          std::to_string(2 * graph.edge_count()));
  }
  for (const auto& [key, g] : blocks_) {
    if (key.first < 0 || key.first >= graph.size() || !graph.has_edge(key.first, key.second) ||
        key.first == key.second) {
      throw StructuralError("gain block (" + std::to_string(key.first + 1) + ", " +
                            std::to_string(key.second + 1) + ") is not a sensing edge");
    }
    if (!std::isfinite(g.a) || !std::isfinite(g.b) || !std::isfinite(g.c)) {
      throw StructuralError("gain block (" + std::to_string(key.first + 1) + ", " +
                            std::to_string(key.second + 1) + ") is not finite");
    }
  }
}

Eigen::VectorXd gains_to_vector(const SensingGraph& graph, const GainSet& gains) {
  gains.check_matches(graph);
  Eigen::VectorXd g(gain_variable_count(graph));
  const auto& edges = graph.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Gain& fwd = gains.at(edges[e].i, edges[e].j);
    const Gain& bwd = gains.at(edges[e].j, edges[e].i);
    g.segment<6>(6 * e) << fwd.a, fwd.b, fwd.c, bwd.a, bwd.b, bwd.c;
  }
  return g;
}

GainSet gains_from_vector(const SensingGraph& graph, const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (g.size() != gain_variable_count(graph)) {
    throw StructuralError("gain vector length does not match graph edge count");
  }
  GainSet out;
  const auto& edges = graph.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Eigen::Index b = static_cast<Eigen::Index>(6 * e);
    out.set(edges[e].i, edges[e].j, Gain{g(b), g(b + 1), g(b + 2)});
    out.set(edges[e].j, edges[e].i, Gain{g(b + 3), g(b + 4), g(b + 5)});
  }
  return out;
}

Eigen::MatrixXd assemble_aggregate(const FormationSpec& spec, const GainSet& gains) {
  return assemble_aggregate(spec.graph(), gains_to_vector(spec.graph(), gains));
}

Eigen::VectorXd ones_along(int n, int axis) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(3 * n);
  for (int i = 0; i < n; ++i) v(3 * i + axis) = 1.0;
  return v;
}

}  // namespace formation
