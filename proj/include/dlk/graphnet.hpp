#pragma once

// Directed multigraphs, graph morphisms, the cycle census, layered GNN message
// passing and the Net category of graphs with prescribed input/output nodes.
//
// A morphism Cₙ → G is a closed walk of length n in G, so
// |Gph(Cₙ, G)| = tr(Aⁿ) with A the arc-count adjacency matrix. A closed walk
// always contains a cycle of length at most |N_G|, so acyclicity only needs
// n = 1..|N_G|.

#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "dlk/mlp.hpp"
#include "dlk/tensor.hpp"

namespace dlk {

using BigCount = boost::multiprecision::cpp_int;

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Arc {
  std::string id;
  std::string source;
  std::string target;

  bool operator==(const Arc&) const = default;
  auto operator<=>(const Arc&) const = default;
};

class DirectedGraph {
 public:
  DirectedGraph() = default;
  DirectedGraph(const std::vector<std::string>& nodes, const std::vector<Arc>& arcs);

  void add_node(const std::string& id);
  void add_arc(const std::string& id, const std::string& source, const std::string& target);

  /// Nodes and arcs in insertion order.
  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<Arc>& arcs() const { return arcs_; }
  bool has_node(const std::string& id) const { return node_index_.count(id) != 0; }
  bool has_arc(const std::string& id) const { return arc_index_.count(id) != 0; }
  std::size_t node_index(const std::string& id) const;
  const Arc& arc(const std::string& id) const;

  /// Nodes with no incoming arc, G_in.
  std::set<std::string> in_nodes() const;
  /// Nodes with no outgoing arc, G_out.
  std::set<std::string> out_nodes() const;

  /// Entry (i, j) counts arcs from nodes()[i] to nodes()[j].
  std::vector<std::vector<std::uint64_t>> adjacency() const;

  /// Same node set and same arc set, ignoring insertion order.
  bool operator==(const DirectedGraph& other) const;

 private:
  std::vector<std::string> nodes_;
  std::vector<Arc> arcs_;
  std::map<std::string, std::size_t> node_index_;
  std::map<std::string, std::size_t> arc_index_;
};

/// f₀ on nodes and f₁ on arcs, checked against f₀∘s = s′∘f₁ and f₀∘t = t′∘f₁.
struct GraphMorphism {
  std::map<std::string, std::string> on_nodes;
  std::map<std::string, std::string> on_arcs;
};

bool is_morphism(const DirectedGraph& from, const DirectedGraph& to, const GraphMorphism& f);
/// Throws GraphError when f is not total or breaks a commuting condition.
GraphMorphism make_morphism(const DirectedGraph& from, const DirectedGraph& to, GraphMorphism f);

/// Nodes "0".."n-1", arc "a<i>" from i to i+1 mod n.
DirectedGraph cycle_graph(std::size_t n);

BigCount count_cycle_morphisms(const DirectedGraph& g, std::size_t n);
/// (tr(A¹), ..., tr(A^n_max)).
std::vector<BigCount> memory_census(const DirectedGraph& g, std::size_t n_max);
bool is_acyclic(const DirectedGraph& g);

enum class Activation { Identity, ReLU, Softmax };

Activation parse_activation(const std::string& name);

using NodeFeatures = std::map<std::string, Vector>;

/// Layers N₀..N_p over a graph. maps[arc id] is the linear map carried by the
/// arc, stored dim(target) × dim(source). activations[i] is applied when
/// layer i is produced; the default is ReLU everywhere.
struct LayeredGnn {
  DirectedGraph graph;
  std::vector<std::vector<std::string>> layers;
  std::map<std::string, std::size_t> dims;
  std::map<std::string, Matrix> maps;
  std::vector<Activation> activations;

  std::size_t depth() const { return layers.size() - 1; }
  /// Checks node membership, dimensions, map shapes and the arc condition for
  /// each step N_i → N_{i+1}, i < p. With p = 0 the single layer updates itself
  /// and that step is checked too. The wrap N_p → N₀ is checked when taken.
  void validate() const;
};

/// One step of message passing at time t, from layer r_t = t mod (p+1) to r_{t+1}.
NodeFeatures gnn_step(const LayeredGnn& gnn, std::size_t t, const NodeFeatures& features);
/// Applies gnn_step for t = 0..steps-1.
NodeFeatures gnn_run(const LayeredGnn& gnn, NodeFeatures features, std::size_t steps);

/// One node per layer ("h0".."hd") plus a constant node "one_i" per non-output
/// layer whose arc into h_{i+1} carries the bias. Hidden layers use ReLU and
/// the output layer softmax, so p = d steps reproduce the MLP forward pass.
LayeredGnn encode_mlp(const MlpState& state);
/// Runs encode_mlp's network on one input row and returns the output node.
Vector gnn_mlp_forward(const LayeredGnn& gnn, const Vector& input);

/// A morphism A → B of Net: a carrier graph whose input nodes are exactly A and
/// whose output nodes are exactly B.
struct NetMorphism {
  std::set<std::string> domain;
  std::set<std::string> codomain;
  DirectedGraph carrier;

  bool operator==(const NetMorphism&) const = default;
};

NetMorphism make_net_morphism(std::set<std::string> domain, std::set<std::string> codomain, DirectedGraph carrier);
/// Nodes A, no arcs.
NetMorphism net_identity(const std::set<std::string>& objects);
/// g ∘ f. The carriers must meet exactly in B and share no arc ids.
NetMorphism net_compose(const NetMorphism& f, const NetMorphism& g);
/// Disjoint union; f's nodes and arcs are prefixed "0." and g's "1.".
NetMorphism net_tensor(const NetMorphism& f, const NetMorphism& g);
/// Prefixes every node, arc id and boundary element.
NetMorphism net_tag(const NetMorphism& f, const std::string& prefix);

/// Edge-list text: one "source target" pair per line, a single token declares
/// an isolated node, "# layer: a b c" appends a layer, any other '#' line is a
/// comment. Arcs are named a0, a1, ... in file order.
struct EdgeList {
  DirectedGraph graph;
  std::vector<std::vector<std::string>> layers;
};

EdgeList parse_edge_list(std::istream& in);
EdgeList read_edge_list(const std::string& path);

}  // namespace dlk
