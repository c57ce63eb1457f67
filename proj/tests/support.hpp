#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "multimed/dag.hpp"
#include "multimed/io.hpp"
#include "multimed/rng.hpp"

namespace testing {

inline std::string data_path(const std::string& name) { return std::string(MULTIMED_DATA_DIR) + "/" + name; }

inline multimed::CausalDag load_dag(const std::string& name) {
    return multimed::parse_dag(multimed::read_file(data_path(name)));
}

/// Plain directed graph used by the path-enumeration oracle.
struct Graph {
    std::size_t n = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<bool> blocked;  // nodes that block every path through them

    bool has_edge(std::size_t u, std::size_t v) const {
        return std::find(edges.begin(), edges.end(), std::make_pair(u, v)) != edges.end();
    }
    bool adjacent(std::size_t u, std::size_t v) const { return has_edge(u, v) || has_edge(v, u); }

    std::vector<bool> descendants_or_self(std::size_t v) const {
        std::vector<bool> seen(n, false);
        std::vector<std::size_t> stack{v};
        seen[v] = true;
        while (!stack.empty()) {
            std::size_t u = stack.back();
            stack.pop_back();
            for (auto [a, b] : edges)
                if (a == u && !seen[b]) seen[b] = true, stack.push_back(b);
        }
        return seen;
    }
};

inline Graph graph_of(const multimed::CausalDag& dag) {
    Graph g;
    g.n = dag.size();
    g.edges = dag.edges();
    g.blocked.assign(g.n, false);
    return g;
}

inline Graph graph_of(const multimed::Swig& swig) {
    Graph g;
    g.n = swig.size();
    g.edges = swig.edges();
    for (const auto& node : swig.nodes()) g.blocked.push_back(node.kind == multimed::SwigNodeKind::fixed);
    return g;
}

/// Whether a path is active given z, by the textbook rules: a collider needs
/// itself or a descendant in z, any other interior node must be outside z.
inline bool path_active(const Graph& g, const std::vector<std::size_t>& path, const std::set<std::size_t>& z) {
    for (std::size_t i = 0; i < path.size(); ++i)
        if (g.blocked[path[i]]) return false;
    for (std::size_t i = 1; i + 1 < path.size(); ++i) {
        std::size_t u = path[i - 1], v = path[i], w = path[i + 1];
        bool collider = g.has_edge(u, v) && g.has_edge(w, v);
        if (collider) {
            auto desc = g.descendants_or_self(v);
            bool open = false;
            for (std::size_t q : z) open = open || desc[q];
            if (!open) return false;
        } else if (z.count(v)) {
            return false;
        }
    }
    return true;
}

/// d-separation by enumerating every simple path of the skeleton.
inline bool oracle_separated(const Graph& g, std::size_t x, std::size_t y, const std::set<std::size_t>& z) {
    std::vector<std::size_t> path{x};
    std::vector<bool> on_path(g.n, false);
    on_path[x] = true;
    bool found = false;
    auto dfs = [&](auto&& self, std::size_t u) -> void {
        if (found) return;
        if (u == y) {
            found = path_active(g, path, z);
            return;
        }
        for (std::size_t v = 0; v < g.n; ++v) {
            if (on_path[v] || !g.adjacent(u, v)) continue;
            on_path[v] = true;
            path.push_back(v);
            self(self, v);
            path.pop_back();
            on_path[v] = false;
        }
    };
    dfs(dfs, x);
    return !found;
}

/// Random DAG over n >= 3 nodes: leading covariates, one exposure, mediators,
/// and the outcome last, with forward edges drawn independently.
inline multimed::CausalDag random_dag(multimed::rng::Stream& s, std::size_t n, double p) {
    using multimed::Role;
    std::size_t covs = static_cast<std::size_t>(s.below(n - 2));
    std::vector<multimed::Node> nodes;
    for (std::size_t i = 0; i < n; ++i) {
        Role r = i < covs ? Role::covariate : i == covs ? Role::exposure : i + 1 == n ? Role::outcome : Role::mediator;
        nodes.push_back({"N" + std::to_string(i), r});
    }
    std::vector<std::pair<std::string, std::string>> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (s.uniform() < p) edges.emplace_back(nodes[i].name, nodes[j].name);
    return multimed::CausalDag(nodes, edges);
}

}  // namespace testing
