#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "multimed/error.hpp"

namespace multimed {

enum class Role { covariate, exposure, mediator, outcome, latent };

std::string_view to_string(Role role) noexcept;
std::optional<Role> parse_role(std::string_view text) noexcept;

struct Node {
    std::string name;
    Role role;
};

/// Raised by parse_dag. Line and column are 1-based; column 0 means the
/// error concerns the whole document (cycles, role counts).
class DagParseError : public InputError {
public:
    DagParseError(const std::string& what, std::size_t line, std::size_t column);

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

/// Causal DAG with node roles. Immutable once constructed; the constructor
/// enforces acyclicity, a single exposure and outcome, at least one mediator,
/// no edges from non-covariates into covariates and no edges out of the
/// outcome. `latent` marks an unobserved node: it takes part in the graph but
/// never appears in a conditioning set or in a dataset.
class CausalDag {
public:
    CausalDag(std::vector<Node> nodes, const std::vector<std::pair<std::string, std::string>>& edges);

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const Node& node(std::size_t i) const { return nodes_.at(i); }

    /// Edges as (parent, child) index pairs in declaration order.
    const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept { return edges_; }

    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t index(std::string_view name) const;

    /// Parents and children sorted by declaration index.
    const std::vector<std::size_t>& parents(std::size_t i) const { return parents_.at(i); }
    const std::vector<std::size_t>& children(std::size_t i) const { return children_.at(i); }

    /// Topological order; ties broken by declaration order.
    const std::vector<std::size_t>& topological_order() const noexcept { return topo_; }

    std::size_t exposure() const noexcept { return exposure_; }
    std::size_t outcome() const noexcept { return outcome_; }
    /// Mediators in topological order. Mediator k (1-based) is mediators()[k-1].
    const std::vector<std::size_t>& mediators() const noexcept { return mediators_; }
    /// Observed covariates in topological order.
    const std::vector<std::size_t>& covariates() const noexcept { return covariates_; }
    std::size_t mediator_count() const noexcept { return mediators_.size(); }

    /// True if there is a directed path from `from` to `to` (from != to).
    bool is_ancestor(std::size_t from, std::size_t to) const;

private:
    std::vector<Node> nodes_;
    std::vector<std::pair<std::size_t, std::size_t>> edges_;
    std::vector<std::vector<std::size_t>> parents_;
    std::vector<std::vector<std::size_t>> children_;
    std::vector<std::size_t> topo_;
    std::vector<std::size_t> mediators_;
    std::vector<std::size_t> covariates_;
    std::size_t exposure_ = 0;
    std::size_t outcome_ = 0;
};

/// Parse the line-oriented DAG format:
///
///     # comment
///     node L covariate
///     node A exposure
///     edge L -> A
///
/// All `node` lines precede all `edge` lines.
CausalDag parse_dag(std::string_view text);

/// Canonical text: nodes in declaration order, edges sorted by (parent, child) name.
std::string serialize_dag(const CausalDag& dag);

// --- Single-world intervention graphs -------------------------------------

enum class SwigNodeKind { random, fixed, potential };

struct SwigNode {
    std::string name;
    SwigNodeKind kind;
    std::size_t origin;          // index of the source DAG node
    bool factual = false;        // observed-world copy of an intervened subgraph
};

/// Intervened node name -> value label (e.g. {"A", "a"}).
using Interventions = std::map<std::string, std::string>;

class Swig {
public:
    Swig(std::vector<SwigNode> nodes, std::vector<std::pair<std::size_t, std::size_t>> edges,
         Interventions interventions);

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<SwigNode>& nodes() const noexcept { return nodes_; }
    const SwigNode& node(std::size_t i) const { return nodes_.at(i); }
    const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept { return edges_; }
    const std::vector<std::size_t>& parents(std::size_t i) const { return parents_.at(i); }
    const std::vector<std::size_t>& children(std::size_t i) const { return children_.at(i); }
    const Interventions& interventions() const noexcept { return interventions_; }

    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t index(std::string_view name) const;

    /// Merge every split or copied node back into its origin. The result is
    /// the sorted, de-duplicated set of (parent, child) origin-index pairs.
    std::vector<std::pair<std::size_t, std::size_t>> contracted_edges() const;

private:
    std::vector<SwigNode> nodes_;
    std::vector<std::pair<std::size_t, std::size_t>> edges_;
    std::vector<std::vector<std::size_t>> parents_;
    std::vector<std::vector<std::size_t>> children_;
    Interventions interventions_;
};

/// Node-splitting SWIG construction. Each intervened node becomes a random
/// half (incoming edges) and a fixed half named by its label (outgoing
/// edges). Nodes downstream of a fixed half are potential outcomes named
/// `X(l1,l2)` with labels in topological order of the intervened nodes.
///
/// When an intervened node's random half is itself a potential outcome
/// (e.g. M_k under {A: a, M_k: m}), the observed version of it and of its
/// non-covariate ancestors is added as a factual copy carrying the plain
/// node name, so that M_k, M_k(a) and m all appear.
Swig build_swig(const CausalDag& dag, const Interventions& interventions);

struct Separation {
    bool separated = true;
    /// Lexicographically smallest d-connecting path (node names) when not separated.
    std::vector<std::string> witness;
};

/// d-separation of X and Y given Z by reachability. Fixed nodes are
/// constants: they block every path through them and may not appear in X,
/// Y or Z.
Separation d_separated(const Swig& graph, const std::vector<std::string>& x,
                       const std::vector<std::string>& y, const std::vector<std::string>& z);
Separation d_separated(const CausalDag& dag, const std::vector<std::string>& x,
                       const std::vector<std::string>& y, const std::vector<std::string>& z);

/// Whether the path (consecutive nodes adjacent in `graph`) is d-connecting
/// given z.
bool is_d_connecting(const Swig& graph, const std::vector<std::string>& path,
                     const std::vector<std::string>& z);

struct IgnorabilityReport {
    std::size_t k = 0;  // 1-based mediator index
    std::string mediator;
    bool condition_m = false;  // M_k(a) _||_ A | L
    bool condition_y = false;  // Y(a,m) _||_ A, M_k | L
    std::optional<std::vector<std::string>> witness_m;
    std::optional<std::vector<std::string>> witness_y;

    bool holds() const noexcept { return condition_m && condition_y; }
};

/// Value labels used by check_ignorability for the exposure and the mediator.
inline constexpr std::string_view exposure_label = "a";
inline constexpr std::string_view mediator_label = "m";

IgnorabilityReport check_ignorability(const CausalDag& dag, std::size_t k);

}  // namespace multimed
