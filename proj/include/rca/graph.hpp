#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace rca {

/// Directed graph over named series. Edges carry the Pearson similarity used
/// by pruning (0 until annotated). Self-loops are rejected. Edges are kept
/// sorted by (src, dst) so exports are deterministic.
struct CausalGraph {
  struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    double similarity = 0.0;
  };

  std::vector<std::string> nodes;
  std::vector<Edge> edges;

  std::size_t size() const { return nodes.size(); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i] == name) return i;
    throw std::invalid_argument("CausalGraph: unknown node '" + name + "'");
  }

  bool has_node(const std::string& name) const {
    return std::find(nodes.begin(), nodes.end(), name) != nodes.end();
  }

  void add_edge(std::size_t src, std::size_t dst, double similarity = 0.0) {
    if (src == dst) throw std::invalid_argument("CausalGraph: self-loop rejected");
    if (src >= nodes.size() || dst >= nodes.size()) {
      throw std::invalid_argument("CausalGraph: edge endpoint out of range");
    }
    edges.push_back({src, dst, similarity});
  }

  void sort_edges() {
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      return a.src != b.src ? a.src < b.src : a.dst < b.dst;
    });
  }

  std::vector<std::vector<std::size_t>> out_adjacency() const {
    std::vector<std::vector<std::size_t>> adj(nodes.size());
    for (const Edge& e : edges) adj[e.src].push_back(e.dst);
    return adj;
  }

  std::vector<std::size_t> out_degree() const {
    std::vector<std::size_t> deg(nodes.size(), 0);
    for (const Edge& e : edges) ++deg[e.src];
    return deg;
  }
};

/// Kahn's algorithm; empty result means the graph has a cycle.
inline std::vector<std::size_t> topological_order(const CausalGraph& g) {
  std::vector<std::size_t> indeg(g.size(), 0);
  for (const auto& e : g.edges) ++indeg[e.dst];
  const auto adj = g.out_adjacency();
  std::vector<std::size_t> queue;
  for (std::size_t v = 0; v < g.size(); ++v)
    if (indeg[v] == 0) queue.push_back(v);
  std::vector<std::size_t> order;
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const std::size_t v = queue[qi];
    order.push_back(v);
    for (std::size_t u : adj[v])
      if (--indeg[u] == 0) queue.push_back(u);
  }
  if (order.size() != g.size()) order.clear();
  return order;
}

inline bool is_acyclic(const CausalGraph& g) {
  return g.size() == 0 || !topological_order(g).empty();
}

/// Strongly connected components (iterative Tarjan). Returns the component id
/// of every node.
inline std::vector<std::size_t> strongly_connected_components(const CausalGraph& g) {
  const std::size_t n = g.size();
  const auto adj = g.out_adjacency();
  std::vector<std::size_t> comp(n, static_cast<std::size_t>(-1));
  std::vector<std::size_t> index(n, static_cast<std::size_t>(-1));
  std::vector<std::size_t> low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::size_t next_index = 0;
  std::size_t comp_count = 0;

  struct Frame {
    std::size_t v;
    std::size_t child;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != static_cast<std::size_t>(-1)) continue;
    std::vector<Frame> call;
    call.push_back({root, 0});
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      if (f.child < adj[f.v].size()) {
        const std::size_t u = adj[f.v][f.child++];
        if (index[u] == static_cast<std::size_t>(-1)) {
          index[u] = low[u] = next_index++;
          stack.push_back(u);
          on_stack[u] = true;
          call.push_back({u, 0});
        } else if (on_stack[u]) {
          low[f.v] = std::min(low[f.v], index[u]);
        }
      } else {
        if (low[f.v] == index[f.v]) {
          for (;;) {
            const std::size_t w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            comp[w] = comp_count;
            if (w == f.v) break;
          }
          ++comp_count;
        }
        const std::size_t v = f.v;
        call.pop_back();
        if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      }
    }
  }
  return comp;
}

namespace detail {

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

inline std::string format_similarity(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

/// DOT text; optional per-node style attributes (e.g. fill colors).
inline std::string graph_to_dot(const CausalGraph& g,
                                const std::map<std::string, std::string>& node_attrs = {}) {
  std::ostringstream os;
  os << "digraph causal {\n";
  for (const auto& name : g.nodes) {
    os << "  \"" << detail::dot_escape(name) << "\"";
    const auto it = node_attrs.find(name);
    if (it != node_attrs.end()) os << " [" << it->second << "]";
    os << ";\n";
  }
  for (const auto& e : g.edges) {
    os << "  \"" << detail::dot_escape(g.nodes[e.src]) << "\" -> \""
       << detail::dot_escape(g.nodes[e.dst]) << "\"";
    if (e.similarity != 0.0) {
      os << " [label=\"" << detail::format_similarity(e.similarity) << "\"]";
    }
    os << ";\n";
  }
  os << "}\n";
  return os.str();
}

/// Parses the DOT subset emitted by graph_to_dot: quoted node statements and
/// quoted "a" -> "b" edges, one per line, optional [label="..."].
inline CausalGraph graph_from_dot(std::istream& in) {
  CausalGraph g;
  std::map<std::string, std::size_t> ids;
  const auto intern = [&](const std::string& name) {
    auto it = ids.find(name);
    if (it != ids.end()) return it->second;
    ids.emplace(name, g.nodes.size());
    g.nodes.push_back(name);
    return g.nodes.size() - 1;
  };
  const auto read_quoted = [](const std::string& s, std::size_t& pos) -> std::string {
    pos = s.find('"', pos);
    if (pos == std::string::npos) return {};
    std::string out;
    for (++pos; pos < s.size(); ++pos) {
      if (s[pos] == '\\' && pos + 1 < s.size()) {
        out.push_back(s[++pos]);
      } else if (s[pos] == '"') {
        ++pos;
        return out;
      } else {
        out.push_back(s[pos]);
      }
    }
    throw std::runtime_error("dot parse: unterminated quote");
  };

  std::string line;
  while (std::getline(in, line)) {
    if (line.find('"') == std::string::npos) continue;
    std::size_t pos = 0;
    const std::string first = read_quoted(line, pos);
    if (first.empty() && pos == std::string::npos) continue;
    const std::size_t arrow = line.find("->", pos);
    if (arrow == std::string::npos) {
      intern(first);
      continue;
    }
    pos = arrow;
    const std::string second = read_quoted(line, pos);
    double sim = 0.0;
    const std::size_t label = line.find("label=\"", pos);
    if (label != std::string::npos) {
      std::size_t lp = label + 6;
      const std::string text = read_quoted(line, lp);
      try {
        sim = std::stod(text);
      } catch (...) {
        sim = 0.0;
      }
    }
    const std::size_t a = intern(first);
    const std::size_t b = intern(second);
    g.add_edge(a, b, sim);
  }
  g.sort_edges();
  return g;
}

inline nlohmann::json graph_to_json(const CausalGraph& g) {
  nlohmann::json j;
  j["nodes"] = g.nodes;
  auto edges = nlohmann::json::array();
  for (const auto& e : g.edges) {
    edges.push_back({{"source", g.nodes[e.src]},
                     {"target", g.nodes[e.dst]},
                     {"similarity", e.similarity}});
  }
  j["edges"] = std::move(edges);
  return j;
}

inline CausalGraph graph_from_json(const nlohmann::json& j) {
  CausalGraph g;
  g.nodes = j.at("nodes").get<std::vector<std::string>>();
  for (const auto& e : j.at("edges")) {
    g.add_edge(g.index_of(e.at("source").get<std::string>()),
               g.index_of(e.at("target").get<std::string>()),
               e.value("similarity", 0.0));
  }
  g.sort_edges();
  return g;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
}

}  // namespace rca
