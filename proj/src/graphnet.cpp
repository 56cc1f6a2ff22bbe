#include "dlk/graphnet.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace dlk {

DirectedGraph::DirectedGraph(const std::vector<std::string>& nodes, const std::vector<Arc>& arcs) {
  for (const std::string& n : nodes) add_node(n);
  for (const Arc& a : arcs) add_arc(a.id, a.source, a.target);
}

void DirectedGraph::add_node(const std::string& id) {
  if (has_node(id)) throw GraphError(fmt::format("duplicate node '{}'", id));
  node_index_.emplace(id, nodes_.size());
  nodes_.push_back(id);
}

void DirectedGraph::add_arc(const std::string& id, const std::string& source, const std::string& target) {
  if (has_arc(id)) throw GraphError(fmt::format("duplicate arc '{}'", id));
  if (!has_node(source)) throw GraphError(fmt::format("arc '{}' leaves unknown node '{}'", id, source));
  if (!has_node(target)) throw GraphError(fmt::format("arc '{}' enters unknown node '{}'", id, target));
  arc_index_.emplace(id, arcs_.size());
  arcs_.push_back({id, source, target});
}

std::size_t DirectedGraph::node_index(const std::string& id) const {
  auto it = node_index_.find(id);
  if (it == node_index_.end()) throw GraphError(fmt::format("unknown node '{}'", id));
  return it->second;
}

const Arc& DirectedGraph::arc(const std::string& id) const {
  auto it = arc_index_.find(id);
  if (it == arc_index_.end()) throw GraphError(fmt::format("unknown arc '{}'", id));
  return arcs_[it->second];
}

std::set<std::string> DirectedGraph::in_nodes() const {
  std::set<std::string> out(nodes_.begin(), nodes_.end());
  for (const Arc& a : arcs_) out.erase(a.target);
  return out;
}

std::set<std::string> DirectedGraph::out_nodes() const {
  std::set<std::string> out(nodes_.begin(), nodes_.end());
  for (const Arc& a : arcs_) out.erase(a.source);
  return out;
}

std::vector<std::vector<std::uint64_t>> DirectedGraph::adjacency() const {
  std::vector<std::vector<std::uint64_t>> a(nodes_.size(), std::vector<std::uint64_t>(nodes_.size(), 0));
  for (const Arc& arc : arcs_) ++a[node_index(arc.source)][node_index(arc.target)];
  return a;
}

bool DirectedGraph::operator==(const DirectedGraph& other) const {
  if (nodes_.size() != other.nodes_.size() || arcs_.size() != other.arcs_.size()) return false;
  std::set<std::string> n1(nodes_.begin(), nodes_.end());
  std::set<std::string> n2(other.nodes_.begin(), other.nodes_.end());
  std::set<Arc> a1(arcs_.begin(), arcs_.end());
  std::set<Arc> a2(other.arcs_.begin(), other.arcs_.end());
  return n1 == n2 && a1 == a2;
}

namespace {

std::string morphism_problem(const DirectedGraph& from, const DirectedGraph& to, const GraphMorphism& f) {
  for (const std::string& n : from.nodes()) {
    auto it = f.on_nodes.find(n);
    if (it == f.on_nodes.end()) return fmt::format("node '{}' has no image", n);
    if (!to.has_node(it->second)) return fmt::format("node '{}' maps to unknown node '{}'", n, it->second);
  }
  for (const Arc& a : from.arcs()) {
    auto it = f.on_arcs.find(a.id);
    if (it == f.on_arcs.end()) return fmt::format("arc '{}' has no image", a.id);
    if (!to.has_arc(it->second)) return fmt::format("arc '{}' maps to unknown arc '{}'", a.id, it->second);
    const Arc& image = to.arc(it->second);
    if (f.on_nodes.at(a.source) != image.source) return fmt::format("arc '{}': source condition fails", a.id);
    if (f.on_nodes.at(a.target) != image.target) return fmt::format("arc '{}': target condition fails", a.id);
  }
  if (f.on_nodes.size() != from.nodes().size() || f.on_arcs.size() != from.arcs().size()) {
    return "map defined outside the domain graph";
  }
  return {};
}

}  // namespace

bool is_morphism(const DirectedGraph& from, const DirectedGraph& to, const GraphMorphism& f) {
  return morphism_problem(from, to, f).empty();
}

GraphMorphism make_morphism(const DirectedGraph& from, const DirectedGraph& to, GraphMorphism f) {
  const std::string problem = morphism_problem(from, to, f);
  if (!problem.empty()) throw GraphError("not a graph morphism: " + problem);
  return f;
}

DirectedGraph cycle_graph(std::size_t n) {
  if (n == 0) throw GraphError("cycle_graph: n must be at least 1");
  DirectedGraph g;
  for (std::size_t i = 0; i < n; ++i) g.add_node(std::to_string(i));
  for (std::size_t i = 0; i < n; ++i) g.add_arc(fmt::format("a{}", i), std::to_string(i), std::to_string((i + 1) % n));
  return g;
}

namespace {

using BigMatrix = std::vector<std::vector<BigCount>>;

BigMatrix big_adjacency(const DirectedGraph& g) {
  const auto a = g.adjacency();
  BigMatrix out(a.size(), std::vector<BigCount>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) out[i][j] = a[i][j];
  return out;
}

BigMatrix big_multiply(const BigMatrix& x, const BigMatrix& y) {
  const std::size_t n = x.size();
  BigMatrix out(n, std::vector<BigCount>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      if (x[i][k] == 0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i][j] += x[i][k] * y[k][j];
    }
  return out;
}

BigCount big_trace(const BigMatrix& m) {
  BigCount t = 0;
  for (std::size_t i = 0; i < m.size(); ++i) t += m[i][i];
  return t;
}

}  // namespace

BigCount count_cycle_morphisms(const DirectedGraph& g, std::size_t n) {
  if (n == 0) throw GraphError("count_cycle_morphisms: n must be at least 1");
  return memory_census(g, n).back();
}

std::vector<BigCount> memory_census(const DirectedGraph& g, std::size_t n_max) {
  std::vector<BigCount> out;
  if (g.nodes().empty()) return std::vector<BigCount>(n_max, 0);
  const BigMatrix a = big_adjacency(g);
  BigMatrix power = a;
  for (std::size_t n = 1; n <= n_max; ++n) {
    if (n > 1) power = big_multiply(power, a);
    out.push_back(big_trace(power));
  }
  return out;
}

bool is_acyclic(const DirectedGraph& g) {
  for (const BigCount& c : memory_census(g, g.nodes().size()))
    if (c != 0) return false;
  return true;
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::ReLU;
  if (name == "softmax") return Activation::Softmax;
  throw std::invalid_argument(fmt::format("unknown activation '{}'", name));
}

namespace {

Vector activate(const Vector& v, Activation act) {
  switch (act) {
    case Activation::Identity: return v;
    case Activation::ReLU: return map(v, [](double a) { return relu(a); });
    case Activation::Softmax: return softmax(v);
  }
  return v;
}

bool contains(const std::vector<std::string>& layer, const std::string& node) {
  return std::find(layer.begin(), layer.end(), node) != layer.end();
}

/// Arcs from layer `from` into `node` of layer `to`, in insertion order.
std::vector<const Arc*> incoming(const LayeredGnn& gnn, std::size_t from, const std::string& node) {
  std::vector<const Arc*> out;
  for (const Arc& a : gnn.graph.arcs())
    if (a.target == node && contains(gnn.layers[from], a.source)) out.push_back(&a);
  return out;
}

void check_step(const LayeredGnn& gnn, std::size_t from, std::size_t to) {
  for (const std::string& x : gnn.layers[to]) {
    const auto arcs = incoming(gnn, from, x);
    if (arcs.empty()) throw GraphError(fmt::format("node '{}' of layer {} has no incoming arc from layer {}", x, to, from));
    for (const Arc* a : arcs) {
      auto it = gnn.maps.find(a->id);
      if (it == gnn.maps.end()) throw GraphError(fmt::format("arc '{}' carries no linear map", a->id));
      const std::size_t rows = gnn.dims.at(a->target);
      const std::size_t cols = gnn.dims.at(a->source);
      if (it->second.rows() != rows || it->second.cols() != cols) {
        throw ShapeError(fmt::format("arc '{}' map is {}, expected ({}x{})", a->id, it->second.shape_string(), rows, cols));
      }
    }
  }
}

}  // namespace

void LayeredGnn::validate() const {
  if (layers.empty()) throw GraphError("a layered GNN needs at least one layer");
  if (activations.size() != layers.size()) {
    throw GraphError(fmt::format("{} activations for {} layers", activations.size(), layers.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].empty()) throw GraphError(fmt::format("layer {} is empty", i));
    for (const std::string& n : layers[i]) {
      if (!graph.has_node(n)) throw GraphError(fmt::format("layer {} names unknown node '{}'", i, n));
      auto d = dims.find(n);
      if (d == dims.end() || d->second == 0) throw GraphError(fmt::format("node '{}' has no feature dimension", n));
    }
  }
  if (layers.size() == 1) {
    check_step(*this, 0, 0);
  } else {
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) check_step(*this, i, i + 1);
  }
}

NodeFeatures gnn_step(const LayeredGnn& gnn, std::size_t t, const NodeFeatures& features) {
  const std::size_t period = gnn.layers.size();
  const std::size_t from = t % period;
  const std::size_t to = (t + 1) % period;
  if (to == 0 && period > 1) check_step(gnn, from, to);
  for (const std::string& y : gnn.layers[from]) {
    auto it = features.find(y);
    if (it == features.end()) throw GraphError(fmt::format("no features supplied for node '{}' of layer {}", y, from));
    if (it->second.size() != gnn.dims.at(y)) {
      throw ShapeError(fmt::format("node '{}' features have length {}, expected {}", y, it->second.size(), gnn.dims.at(y)));
    }
  }
  NodeFeatures out;
  for (const std::string& x : gnn.layers[to]) {
    const auto arcs = incoming(gnn, from, x);
    if (arcs.empty()) throw GraphError(fmt::format("node '{}' of layer {} has no incoming arc from layer {}", x, to, from));
    Vector sum(gnn.dims.at(x));
    for (const Arc* a : arcs) add_inplace(sum, matvec(gnn.maps.at(a->id), features.at(a->source)));
    out.emplace(x, activate(sum, gnn.activations[to]));
  }
  return out;
}

NodeFeatures gnn_run(const LayeredGnn& gnn, NodeFeatures features, std::size_t steps) {
  gnn.validate();
  for (std::size_t t = 0; t < steps; ++t) features = gnn_step(gnn, t, features);
  return features;
}

LayeredGnn encode_mlp(const MlpState& state) {
  if (state.depth() == 0) throw GraphError("encode_mlp: network has no layers");
  LayeredGnn gnn;
  const std::size_t d = state.depth();
  for (std::size_t i = 0; i <= d; ++i) {
    const std::string h = fmt::format("h{}", i);
    gnn.graph.add_node(h);
    gnn.dims[h] = i == 0 ? state.weights[0].rows() : state.weights[i - 1].cols();
    gnn.layers.push_back({h});
    if (i < d) {
      const std::string one = fmt::format("one_{}", i);
      gnn.graph.add_node(one);
      gnn.dims[one] = 1;
      gnn.layers.back().push_back(one);
    }
    gnn.activations.push_back(i == d ? Activation::Softmax : Activation::ReLU);
  }
  for (std::size_t i = 0; i < d; ++i) {
    const std::string w_arc = fmt::format("W{}", i + 1);
    gnn.graph.add_arc(w_arc, fmt::format("h{}", i), fmt::format("h{}", i + 1));
    gnn.maps[w_arc] = transpose(state.weights[i]);
    const std::string b_arc = fmt::format("b{}", i + 1);
    gnn.graph.add_arc(b_arc, fmt::format("one_{}", i), fmt::format("h{}", i + 1));
    gnn.maps[b_arc] = Matrix::column(state.biases[i]);
    if (i + 1 < d) {
      const std::string carry = fmt::format("one_{}_{}", i, i + 1);
      gnn.graph.add_arc(carry, fmt::format("one_{}", i), fmt::format("one_{}", i + 1));
      gnn.maps[carry] = Matrix(1, 1, 1.0);
    }
  }
  gnn.validate();
  return gnn;
}

Vector gnn_mlp_forward(const LayeredGnn& gnn, const Vector& input) {
  NodeFeatures f{{"h0", input}, {"one_0", Vector{1.0}}};
  f = gnn_run(gnn, std::move(f), gnn.depth());
  return f.at(fmt::format("h{}", gnn.depth()));
}

NetMorphism make_net_morphism(std::set<std::string> domain, std::set<std::string> codomain, DirectedGraph carrier) {
  if (carrier.in_nodes() != domain) throw GraphError("carrier input nodes differ from the domain");
  if (carrier.out_nodes() != codomain) throw GraphError("carrier output nodes differ from the codomain");
  return {std::move(domain), std::move(codomain), std::move(carrier)};
}

NetMorphism net_identity(const std::set<std::string>& objects) {
  DirectedGraph g;
  for (const std::string& n : objects) g.add_node(n);
  return {objects, objects, g};
}

NetMorphism net_compose(const NetMorphism& f, const NetMorphism& g) {
  if (f.codomain != g.domain) throw GraphError("net_compose: codomain of f differs from domain of g");
  std::set<std::string> shared;
  for (const std::string& n : f.carrier.nodes())
    if (g.carrier.has_node(n)) shared.insert(n);
  if (shared != f.codomain) throw GraphError("net_compose: carriers must meet exactly in the shared boundary");
  DirectedGraph u;
  for (const std::string& n : f.carrier.nodes()) u.add_node(n);
  for (const std::string& n : g.carrier.nodes())
    if (!u.has_node(n)) u.add_node(n);
  for (const Arc& a : f.carrier.arcs()) u.add_arc(a.id, a.source, a.target);
  for (const Arc& a : g.carrier.arcs()) {
    if (u.has_arc(a.id)) throw GraphError(fmt::format("net_compose: arc id '{}' used by both carriers", a.id));
    u.add_arc(a.id, a.source, a.target);
  }
  return make_net_morphism(f.domain, g.codomain, std::move(u));
}

NetMorphism net_tag(const NetMorphism& f, const std::string& prefix) {
  NetMorphism out;
  for (const std::string& a : f.domain) out.domain.insert(prefix + a);
  for (const std::string& b : f.codomain) out.codomain.insert(prefix + b);
  for (const std::string& n : f.carrier.nodes()) out.carrier.add_node(prefix + n);
  for (const Arc& a : f.carrier.arcs()) out.carrier.add_arc(prefix + a.id, prefix + a.source, prefix + a.target);
  return out;
}

NetMorphism net_tensor(const NetMorphism& f, const NetMorphism& g) {
  NetMorphism out = net_tag(f, "0.");
  const NetMorphism right = net_tag(g, "1.");
  out.domain.insert(right.domain.begin(), right.domain.end());
  out.codomain.insert(right.codomain.begin(), right.codomain.end());
  for (const std::string& n : right.carrier.nodes()) out.carrier.add_node(n);
  for (const Arc& a : right.carrier.arcs()) out.carrier.add_arc(a.id, a.source, a.target);
  return out;
}

EdgeList parse_edge_list(std::istream& in) {
  EdgeList out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t next_arc = 0;
  auto ensure = [&](const std::string& n) {
    if (!out.graph.has_node(n)) out.graph.add_node(n);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      const std::string body = line.substr(first + 1);
      const auto key = body.find_first_not_of(" \t");
      if (key != std::string::npos && body.compare(key, 6, "layer:") == 0) {
        std::istringstream names(body.substr(key + 6));
        std::vector<std::string> layer;
        for (std::string n; names >> n;) layer.push_back(n);
        if (layer.empty()) throw GraphError(fmt::format("line {}: empty layer annotation", line_no));
        out.layers.push_back(std::move(layer));
      }
      continue;
    }
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(t);
    if (tokens.size() == 1) {
      ensure(tokens[0]);
    } else if (tokens.size() == 2) {
      ensure(tokens[0]);
      ensure(tokens[1]);
      out.graph.add_arc(fmt::format("a{}", next_arc++), tokens[0], tokens[1]);
    } else {
      throw GraphError(fmt::format("line {}: expected 'source target', got {} fields", line_no, tokens.size()));
    }
  }
  for (std::size_t i = 0; i < out.layers.size(); ++i)
    for (const std::string& n : out.layers[i])
      if (!out.graph.has_node(n)) throw GraphError(fmt::format("layer {} names unknown node '{}'", i, n));
  return out;
}

EdgeList read_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open graph file '{}'", path));
  return parse_edge_list(in);
}

}  // namespace dlk
