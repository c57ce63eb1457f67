#include "multimed/dag.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <deque>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_map>

namespace multimed {

std::string_view to_string(Role role) noexcept {
    switch (role) {
        case Role::covariate: return "covariate";
        case Role::exposure: return "exposure";
        case Role::mediator: return "mediator";
        case Role::outcome: return "outcome";
        case Role::latent: return "latent";
    }
    return "?";
}

std::optional<Role> parse_role(std::string_view text) noexcept {
    for (Role r : {Role::covariate, Role::exposure, Role::mediator, Role::outcome, Role::latent}) {
        if (to_string(r) == text) return r;
    }
    return std::nullopt;
}

DagParseError::DagParseError(const std::string& what, std::size_t line, std::size_t column)
    : InputError(line == 0 ? what
                           : "line " + std::to_string(line) + ", column " + std::to_string(column) +
                                 ": " + what),
      line_(line),
      column_(column) {}

namespace {

bool valid_name(std::string_view s) {
    if (s.empty()) return false;
    auto head = static_cast<unsigned char>(s.front());
    if (!(std::isalpha(head) || head == '_')) return false;
    return std::all_of(s.begin() + 1, s.end(), [](char c) {
        auto u = static_cast<unsigned char>(c);
        return std::isalnum(u) || u == '_';
    });
}

bool is_exogenous_kind(Role r) { return r == Role::covariate || r == Role::latent; }

// Kahn's algorithm with the smallest declaration index taken first.
std::vector<std::size_t> kahn(std::size_t n, const std::vector<std::vector<std::size_t>>& children,
                              const std::vector<std::vector<std::size_t>>& parents) {
    std::vector<std::size_t> indeg(n);
    for (std::size_t i = 0; i < n; ++i) indeg[i] = parents[i].size();
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.insert(i);
    std::vector<std::size_t> order;
    order.reserve(n);
    while (!ready.empty()) {
        std::size_t v = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(v);
        for (std::size_t c : children[v])
            if (--indeg[c] == 0) ready.insert(c);
    }
    return order;
}

}  // namespace

CausalDag::CausalDag(std::vector<Node> nodes,
                     const std::vector<std::pair<std::string, std::string>>& edges)
    : nodes_(std::move(nodes)) {
    const std::size_t n = nodes_.size();
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
        if (!valid_name(nodes_[i].name)) throw InputError("invalid node name '" + nodes_[i].name + "'");
        if (!idx.emplace(nodes_[i].name, i).second)
            throw InputError("duplicate node name '" + nodes_[i].name + "'");
    }
    parents_.assign(n, {});
    children_.assign(n, {});
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& [p, c] : edges) {
        auto ip = idx.find(p);
        auto ic = idx.find(c);
        if (ip == idx.end()) throw InputError("edge references undeclared node '" + p + "'");
        if (ic == idx.end()) throw InputError("edge references undeclared node '" + c + "'");
        if (!seen.emplace(ip->second, ic->second).second)
            throw InputError("duplicate edge " + p + " -> " + c);
        edges_.emplace_back(ip->second, ic->second);
        parents_[ic->second].push_back(ip->second);
        children_[ip->second].push_back(ic->second);
    }
    for (auto& v : parents_) std::sort(v.begin(), v.end());
    for (auto& v : children_) std::sort(v.begin(), v.end());

    topo_ = kahn(n, children_, parents_);
    if (topo_.size() != n) {
        // Walk parent links among the unsorted remainder until a node repeats.
        std::vector<bool> placed(n, false);
        for (std::size_t v : topo_) placed[v] = true;
        std::size_t start = 0;
        while (placed[start]) ++start;
        std::vector<std::size_t> walk;
        std::vector<int> pos(n, -1);
        std::size_t v = start;
        while (pos[v] < 0) {
            pos[v] = static_cast<int>(walk.size());
            walk.push_back(v);
            for (std::size_t p : parents_[v]) {
                if (!placed[p]) {
                    v = p;
                    break;
                }
            }
        }
        std::vector<std::size_t> cycle(walk.begin() + pos[v], walk.end());
        std::reverse(cycle.begin(), cycle.end());
        // Rotate so the cycle starts at its smallest declaration index.
        std::rotate(cycle.begin(), std::min_element(cycle.begin(), cycle.end()), cycle.end());
        std::string msg = "cycle detected: ";
        for (std::size_t u : cycle) msg += nodes_[u].name + " -> ";
        msg += nodes_[cycle.front()].name;
        throw InputError(msg);
    }

    std::size_t n_exposure = 0, n_outcome = 0;
    for (std::size_t v : topo_) {
        switch (nodes_[v].role) {
            case Role::exposure: exposure_ = v; ++n_exposure; break;
            case Role::outcome: outcome_ = v; ++n_outcome; break;
            case Role::mediator: mediators_.push_back(v); break;
            case Role::covariate: covariates_.push_back(v); break;
            case Role::latent: break;
        }
    }
    if (n_exposure != 1)
        throw InputError("expected exactly one exposure node, found " + std::to_string(n_exposure));
    if (n_outcome != 1)
        throw InputError("expected exactly one outcome node, found " + std::to_string(n_outcome));
    if (mediators_.empty()) throw InputError("expected at least one mediator node, found 0");

    for (const auto& [p, c] : edges_) {
        if (is_exogenous_kind(nodes_[c].role) && !is_exogenous_kind(nodes_[p].role))
            throw InputError("edge " + nodes_[p].name + " -> " + nodes_[c].name + " points into a " +
                             std::string(to_string(nodes_[c].role)) + " from a " +
                             std::string(to_string(nodes_[p].role)));
        if (nodes_[p].role == Role::outcome)
            throw InputError("edge " + nodes_[p].name + " -> " + nodes_[c].name +
                             " leaves the outcome");
    }
}

std::optional<std::size_t> CausalDag::find(std::string_view name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].name == name) return i;
    return std::nullopt;
}

std::size_t CausalDag::index(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw InputError("unknown node '" + std::string(name) + "'");
}

bool CausalDag::is_ancestor(std::size_t from, std::size_t to) const {
    std::vector<bool> seen(size(), false);
    std::vector<std::size_t> stack{from};
    while (!stack.empty()) {
        std::size_t v = stack.back();
        stack.pop_back();
        for (std::size_t c : children_[v]) {
            if (c == to) return true;
            if (!seen[c]) {
                seen[c] = true;
                stack.push_back(c);
            }
        }
    }
    return false;
}

// --- parsing ---------------------------------------------------------------

namespace {

struct Token {
    std::string text;
    std::size_t column;
};

std::vector<Token> tokenize(std::string_view line) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
        if (std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
            continue;
        }
        if (line.compare(i, 2, "->") == 0) {
            out.push_back({"->", i + 1});
            i += 2;
            continue;
        }
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])) &&
               line.compare(j, 2, "->") != 0)
            ++j;
        out.push_back({std::string(line.substr(i, j - i)), i + 1});
        i = j;
    }
    return out;
}

}  // namespace

CausalDag parse_dag(std::string_view text) {
    std::vector<Node> nodes;
    std::vector<std::pair<std::string, std::string>> edges;
    std::unordered_map<std::string, std::size_t> declared;
    bool in_edges = false;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        ++line_no;

        auto tokens = tokenize(line);
        if (tokens.empty() || tokens.front().text.front() == '#') continue;

        const Token& kw = tokens.front();
        if (kw.text == "node") {
            if (in_edges) throw DagParseError("node declaration after edge lines", line_no, kw.column);
            if (tokens.size() != 3)
                throw DagParseError("expected 'node <name> <role>'", line_no, kw.column);
            const Token& name = tokens[1];
            if (!valid_name(name.text))
                throw DagParseError("invalid node name '" + name.text + "'", line_no, name.column);
            auto role = parse_role(tokens[2].text);
            if (!role)
                throw DagParseError("unknown role '" + tokens[2].text + "'", line_no, tokens[2].column);
            if (!declared.emplace(name.text, line_no).second)
                throw DagParseError("duplicate node name '" + name.text + "'", line_no, name.column);
            nodes.push_back({name.text, *role});
        } else if (kw.text == "edge") {
            in_edges = true;
            if (tokens.size() != 4 || tokens[2].text != "->")
                throw DagParseError("expected 'edge <parent> -> <child>'", line_no, kw.column);
            for (std::size_t t : {std::size_t{1}, std::size_t{3}}) {
                if (!valid_name(tokens[t].text))
                    throw DagParseError("invalid node name '" + tokens[t].text + "'", line_no,
                                        tokens[t].column);
                if (!declared.count(tokens[t].text))
                    throw DagParseError("edge references undeclared node '" + tokens[t].text + "'",
                                        line_no, tokens[t].column);
            }
            edges.emplace_back(tokens[1].text, tokens[3].text);
        } else {
            throw DagParseError("unknown directive '" + kw.text + "'", line_no, kw.column);
        }
    }
    try {
        return CausalDag(std::move(nodes), edges);
    } catch (const DagParseError&) {
        throw;
    } catch (const InputError& e) {
        throw DagParseError(e.what(), 0, 0);
    }
}

std::string serialize_dag(const CausalDag& dag) {
    std::ostringstream os;
    for (const auto& n : dag.nodes()) os << "node " << n.name << ' ' << to_string(n.role) << '\n';
    std::vector<std::pair<std::string, std::string>> named;
    for (const auto& [p, c] : dag.edges()) named.emplace_back(dag.node(p).name, dag.node(c).name);
    std::sort(named.begin(), named.end());
    for (const auto& [p, c] : named) os << "edge " << p << " -> " << c << '\n';
    return os.str();
}

// --- SWIG ------------------------------------------------------------------

Swig::Swig(std::vector<SwigNode> nodes, std::vector<std::pair<std::size_t, std::size_t>> edges,
           Interventions interventions)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), interventions_(std::move(interventions)) {
    parents_.assign(nodes_.size(), {});
    children_.assign(nodes_.size(), {});
    for (const auto& [p, c] : edges_) {
        parents_[c].push_back(p);
        children_[p].push_back(c);
    }
}

std::optional<std::size_t> Swig::find(std::string_view name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].name == name) return i;
    return std::nullopt;
}

std::size_t Swig::index(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw InputError("unknown node '" + std::string(name) + "'");
}

std::vector<std::pair<std::size_t, std::size_t>> Swig::contracted_edges() const {
    std::set<std::pair<std::size_t, std::size_t>> out;
    for (const auto& [p, c] : edges_) out.emplace(nodes_[p].origin, nodes_[c].origin);
    return {out.begin(), out.end()};
}

Swig build_swig(const CausalDag& dag, const Interventions& interventions) {
    const std::size_t n = dag.size();
    std::vector<std::optional<std::string>> label(n);
    std::set<std::string> labels;
    for (const auto& [name, value] : interventions) {
        std::size_t v = dag.index(name);
        Role r = dag.node(v).role;
        if (r != Role::exposure && r != Role::mediator)
            throw InputError("cannot intervene on " + std::string(to_string(r)) + " '" + name + "'");
        if (!valid_name(value)) throw InputError("invalid intervention label '" + value + "'");
        if (dag.find(value) || !labels.insert(value).second)
            throw InputError("intervention label '" + value + "' collides with another name");
        label[v] = value;
    }

    // Position of each node in the topological order, for ordering labels.
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i) rank[dag.topological_order()[i]] = i;

    // Fixed ancestors: intervened nodes reaching v through non-intervened nodes.
    std::vector<std::set<std::size_t>> fixed_anc(n);
    for (std::size_t v : dag.topological_order()) {
        for (std::size_t p : dag.parents(v)) {
            if (label[p]) {
                fixed_anc[v].insert(p);
            } else {
                fixed_anc[v].insert(fixed_anc[p].begin(), fixed_anc[p].end());
            }
        }
    }
    auto po_name = [&](std::size_t v) {
        if (fixed_anc[v].empty()) return dag.node(v).name;
        std::vector<std::size_t> anc(fixed_anc[v].begin(), fixed_anc[v].end());
        std::sort(anc.begin(), anc.end(), [&](auto x, auto y) { return rank[x] < rank[y]; });
        std::string s = dag.node(v).name + "(";
        for (std::size_t i = 0; i < anc.size(); ++i) s += (i ? "," : "") + *label[anc[i]];
        return s + ")";
    };

    std::vector<SwigNode> nodes;
    std::vector<std::size_t> main(n), fixed(n, SIZE_MAX);
    for (std::size_t v = 0; v < n; ++v) {
        main[v] = nodes.size();
        nodes.push_back({po_name(v),
                         fixed_anc[v].empty() ? SwigNodeKind::random : SwigNodeKind::potential, v});
        if (label[v]) {
            fixed[v] = nodes.size();
            nodes.push_back({*label[v], SwigNodeKind::fixed, v});
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& [p, c] : dag.edges()) edges.emplace_back(label[p] ? fixed[p] : main[p], main[c]);

    // Observed-world copies for intervened nodes whose random half is counterfactual.
    std::vector<std::size_t> factual(n, SIZE_MAX);
    for (std::size_t v = 0; v < n; ++v) {
        if (!label[v] || fixed_anc[v].empty()) continue;
        std::vector<std::size_t> members;
        for (std::size_t u : dag.topological_order()) {
            if (is_exogenous_kind(dag.node(u).role)) continue;
            if (u == v || dag.is_ancestor(u, v)) members.push_back(u);
        }
        for (std::size_t u : members) {
            if (factual[u] != SIZE_MAX) continue;
            if (fixed_anc[u].empty()) {
                factual[u] = main[u];
                continue;
            }
            factual[u] = nodes.size();
            nodes.push_back({dag.node(u).name, SwigNodeKind::random, u, true});
            for (std::size_t p : dag.parents(u)) {
                std::size_t src = is_exogenous_kind(dag.node(p).role) ? main[p] : factual[p];
                edges.emplace_back(src, factual[u]);
            }
        }
    }
    return Swig(std::move(nodes), std::move(edges), interventions);
}

// --- d-separation ------------------------------------------------------------

namespace {

struct Resolved {
    std::vector<bool> in_x, in_y, in_z;
};

Resolved resolve(const Swig& g, const std::vector<std::string>& x, const std::vector<std::string>& y,
                 const std::vector<std::string>& z) {
    Resolved r{std::vector<bool>(g.size()), std::vector<bool>(g.size()), std::vector<bool>(g.size())};
    auto mark = [&](const std::vector<std::string>& names, std::vector<bool>& set, const char* which) {
        for (const auto& s : names) {
            std::size_t i = g.index(s);
            if (g.node(i).kind == SwigNodeKind::fixed)
                throw InputError("fixed intervention node '" + s + "' cannot appear in " + which);
            set[i] = true;
        }
    };
    mark(x, r.in_x, "X");
    mark(y, r.in_y, "Y");
    mark(z, r.in_z, "Z");
    for (std::size_t i = 0; i < g.size(); ++i) {
        if ((r.in_x[i] && r.in_y[i]) || (r.in_x[i] && r.in_z[i]) || (r.in_y[i] && r.in_z[i]))
            throw InputError("node sets overlap at '" + g.node(i).name + "'");
    }
    return r;
}

std::vector<bool> ancestors_of(const Swig& g, const std::vector<bool>& set) {
    std::vector<bool> anc = set;
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (set[i]) stack.push_back(i);
    while (!stack.empty()) {
        std::size_t v = stack.back();
        stack.pop_back();
        for (std::size_t p : g.parents(v)) {
            if (!anc[p]) {
                anc[p] = true;
                stack.push_back(p);
            }
        }
    }
    return anc;
}

// Whether `mid` lets a path through prev - mid - next pass, given Z.
bool passes(const Swig& g, std::size_t prev, std::size_t mid, std::size_t next,
            const std::vector<bool>& in_z, const std::vector<bool>& anc_z) {
    if (g.node(mid).kind == SwigNodeKind::fixed) return false;
    auto is_parent = [&](std::size_t a, std::size_t b) {
        const auto& ps = g.parents(b);
        return std::find(ps.begin(), ps.end(), a) != ps.end();
    };
    bool collider = is_parent(prev, mid) && is_parent(next, mid);
    return collider ? anc_z[mid] : !in_z[mid];
}

// Reachability ("Bayes ball"): is any Y node reachable from X along an active trail?
bool reachable(const Swig& g, const Resolved& r, const std::vector<bool>& anc_z) {
    enum Dir { up = 0, down = 1 };  // up: arrived from a child; down: arrived from a parent
    std::vector<std::array<bool, 2>> visited(g.size(), {false, false});
    std::deque<std::pair<std::size_t, Dir>> queue;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (r.in_x[i]) queue.emplace_back(i, up);
    }
    while (!queue.empty()) {
        auto [v, d] = queue.front();
        queue.pop_front();
        if (visited[v][d]) continue;
        visited[v][d] = true;
        bool is_start = r.in_x[v];
        if (!is_start) {
            if (r.in_y[v] && !r.in_z[v]) return true;
            if (g.node(v).kind == SwigNodeKind::fixed) continue;
        }
        if (d == up && !r.in_z[v]) {
            for (std::size_t p : g.parents(v)) queue.emplace_back(p, up);
            for (std::size_t c : g.children(v)) queue.emplace_back(c, down);
        } else if (d == down) {
            if (!r.in_z[v])
                for (std::size_t c : g.children(v)) queue.emplace_back(c, down);
            if (anc_z[v])
                for (std::size_t p : g.parents(v)) queue.emplace_back(p, up);
        }
    }
    return false;
}

std::vector<std::size_t> neighbours_by_name(const Swig& g, std::size_t v) {
    std::vector<std::size_t> nb(g.parents(v));
    nb.insert(nb.end(), g.children(v).begin(), g.children(v).end());
    std::sort(nb.begin(), nb.end(), [&](auto a, auto b) { return g.node(a).name < g.node(b).name; });
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    return nb;
}

// Depth-first search in name order; the first complete path found is the
// lexicographically smallest d-connecting path.
std::vector<std::string> smallest_witness(const Swig& g, const Resolved& r,
                                          const std::vector<bool>& anc_z) {
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (r.in_x[i]) starts.push_back(i);
    std::sort(starts.begin(), starts.end(),
              [&](auto a, auto b) { return g.node(a).name < g.node(b).name; });

    std::vector<std::size_t> path;
    std::vector<bool> on_path(g.size(), false);
    std::function<bool()> dfs = [&]() -> bool {
        std::size_t v = path.back();
        for (std::size_t w : neighbours_by_name(g, v)) {
            if (on_path[w] || r.in_x[w]) continue;
            if (path.size() >= 2 && !passes(g, path[path.size() - 2], v, w, r.in_z, anc_z)) continue;
            if (r.in_y[w]) {
                path.push_back(w);
                return true;
            }
            path.push_back(w);
            on_path[w] = true;
            if (dfs()) return true;
            on_path[w] = false;
            path.pop_back();
        }
        return false;
    };
    for (std::size_t s : starts) {
        path.assign(1, s);
        on_path.assign(g.size(), false);
        on_path[s] = true;
        if (dfs()) {
            std::vector<std::string> names;
            for (std::size_t v : path) names.push_back(g.node(v).name);
            return names;
        }
    }
    return {};
}

Swig identity_swig(const CausalDag& dag) { return build_swig(dag, {}); }

}  // namespace

Separation d_separated(const Swig& graph, const std::vector<std::string>& x,
                       const std::vector<std::string>& y, const std::vector<std::string>& z) {
    Resolved r = resolve(graph, x, y, z);
    std::vector<bool> anc_z = ancestors_of(graph, r.in_z);
    Separation out;
    out.separated = !reachable(graph, r, anc_z);
    if (!out.separated) out.witness = smallest_witness(graph, r, anc_z);
    return out;
}

Separation d_separated(const CausalDag& dag, const std::vector<std::string>& x,
                       const std::vector<std::string>& y, const std::vector<std::string>& z) {
    return d_separated(identity_swig(dag), x, y, z);
}

bool is_d_connecting(const Swig& graph, const std::vector<std::string>& path,
                     const std::vector<std::string>& z) {
    if (path.size() < 2) return false;
    std::vector<std::size_t> idx;
    for (const auto& s : path) idx.push_back(graph.index(s));
    std::vector<bool> in_z(graph.size(), false);
    for (const auto& s : z) in_z[graph.index(s)] = true;
    std::vector<bool> anc_z = ancestors_of(graph, in_z);
    std::set<std::size_t> distinct(idx.begin(), idx.end());
    if (distinct.size() != idx.size()) return false;
    for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
        const auto& ps = graph.parents(idx[i + 1]);
        const auto& cs = graph.children(idx[i + 1]);
        bool adjacent = std::find(ps.begin(), ps.end(), idx[i]) != ps.end() ||
                        std::find(cs.begin(), cs.end(), idx[i]) != cs.end();
        if (!adjacent) return false;
    }
    for (std::size_t i = 1; i + 1 < idx.size(); ++i)
        if (!passes(graph, idx[i - 1], idx[i], idx[i + 1], in_z, anc_z)) return false;
    return true;
}

IgnorabilityReport check_ignorability(const CausalDag& dag, std::size_t k) {
    if (k < 1 || k > dag.mediator_count())
        throw InputError("mediator index " + std::to_string(k) + " out of range 1.." +
                         std::to_string(dag.mediator_count()));
    const std::string& a_name = dag.node(dag.exposure()).name;
    const std::string& m_name = dag.node(dag.mediators()[k - 1]).name;
    const std::string a(exposure_label), m(mediator_label);

    std::vector<std::string> covs;
    for (std::size_t c : dag.covariates()) covs.push_back(dag.node(c).name);

    IgnorabilityReport rep;
    rep.k = k;
    rep.mediator = m_name;

    // Counterfactual (non-factual, non-fixed) version of an original node.
    auto counterfactual = [](const Swig& g, std::size_t origin) {
        for (const auto& node : g.nodes())
            if (node.origin == origin && !node.factual && node.kind != SwigNodeKind::fixed)
                return node.name;
        throw std::logic_error("swig lost a node");
    };

    Swig g_a = build_swig(dag, {{a_name, a}});
    Separation sm = d_separated(g_a, {counterfactual(g_a, dag.mediators()[k - 1])}, {a_name}, covs);
    rep.condition_m = sm.separated;
    if (!sm.separated) rep.witness_m = sm.witness;

    Swig g_am = build_swig(dag, {{a_name, a}, {m_name, m}});
    Separation sy = d_separated(g_am, {counterfactual(g_am, dag.outcome())}, {a_name, m_name}, covs);
    rep.condition_y = sy.separated;
    if (!sy.separated) rep.witness_y = sy.witness;
    return rep;
}

}  // namespace multimed
