#pragma once

#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "coda/basis.hpp"
#include "coda/types.hpp"

namespace coda {

// Axis-aligned decision tree in a flat node store; node 0 is the root.
// Internal nodes send x[feature] <= threshold to the left child, so a tie at
// the threshold descends left. Leaves carry the action.
struct PolicyTree {
    struct Node {
        int feature = -1;        // 0-based covariate index; -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        int action = 0;

        bool operator==(const Node&) const = default;
    };
    std::vector<Node> nodes{Node{}};

    // structural equality: node-store layout (breadth-first vs preorder) does
    // not matter, only the tree reachable from the root
    bool operator==(const PolicyTree& o) const { return same_subtree(*this, 0, o, 0); }

    static PolicyTree leaf(int action) {
        PolicyTree t;
        t.nodes[0].action = action;
        return t;
    }

    // depth-1 tree: split(feature, threshold) with leaf actions
    static PolicyTree stump(int feature, double threshold, int left_action, int right_action) {
        PolicyTree t;
        t.nodes.clear();
        t.nodes.push_back({feature, threshold, 1, 2, 0});
        t.nodes.push_back({-1, 0.0, -1, -1, left_action});
        t.nodes.push_back({-1, 0.0, -1, -1, right_action});
        return t;
    }

    int apply(const Eigen::Ref<const Vector>& x) const {
        int idx = 0;
        while (nodes[std::size_t(idx)].feature >= 0) {
            const Node& nd = nodes[std::size_t(idx)];
            if (nd.feature >= x.size())
                throw ValidationError("PolicyTree::apply: feature index out of range");
            idx = (x[nd.feature] <= nd.threshold) ? nd.left : nd.right;
        }
        return nodes[std::size_t(idx)].action;
    }

    int depth() const { return depth_of(0); }

private:
    int depth_of(int idx) const {
        const Node& nd = nodes[std::size_t(idx)];
        if (nd.feature < 0) return 0;
        return 1 + std::max(depth_of(nd.left), depth_of(nd.right));
    }

    static bool same_subtree(const PolicyTree& a, int ia, const PolicyTree& b, int ib) {
        const Node& na = a.nodes[std::size_t(ia)];
        const Node& nb = b.nodes[std::size_t(ib)];
        if ((na.feature < 0) != (nb.feature < 0)) return false;
        if (na.feature < 0) return na.action == nb.action;
        return na.feature == nb.feature && na.threshold == nb.threshold &&
               same_subtree(a, na.left, b, nb.left) && same_subtree(a, na.right, b, nb.right);
    }
};

// Linear rule I{phi(x)' beta > 0}; phi is [1, basis terms], beta includes the
// constant coefficient first. Strict inequality: the boundary maps to 0.
struct LinearRule {
    Vector beta;
    BasisSpec basis;

    bool operator==(const LinearRule& o) const {
        return basis == o.basis && beta.size() == o.beta.size() && beta == o.beta;
    }

    int apply(const Eigen::Ref<const Vector>& x) const {
        Matrix row(1, x.size());
        row.row(0) = x;
        const Matrix F = expand_basis(basis, row);
        if (F.cols() + 1 != beta.size())
            throw ValidationError("LinearRule::apply: basis width mismatch");
        double acc = beta[0];
        for (Eigen::Index j = 0; j < F.cols(); ++j) acc += beta[j + 1] * F(0, j);
        return acc > 0.0 ? 1 : 0;
    }
};

using DecisionRule = std::variant<PolicyTree, LinearRule>;

inline int apply_rule(const DecisionRule& rule, const Vector& x) {
    return std::visit([&](const auto& r) { return r.apply(x); }, rule);
}

// Per-row actions for a whole covariate matrix.
inline std::vector<int> apply_rule(const DecisionRule& rule, const Matrix& X) {
    std::vector<int> actions(static_cast<std::size_t>(X.rows()));
    Vector xi;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        xi = X.row(i).transpose();
        actions[std::size_t(i)] = apply_rule(rule, xi);
    }
    return actions;
}

// === JSON round-trip ===
// Trees serialize with 1-based "feature" matching the x1..xr column naming:
// internal {"feature", "threshold", "left", "right"}, leaves {"action"}.

namespace detail {
inline nlohmann::json tree_node_json(const PolicyTree& t, int idx) {
    const auto& nd = t.nodes[std::size_t(idx)];
    if (nd.feature < 0) return nlohmann::json{{"action", nd.action}};
    return nlohmann::json{{"feature", nd.feature + 1},
                          {"threshold", nd.threshold},
                          {"left", tree_node_json(t, nd.left)},
                          {"right", tree_node_json(t, nd.right)}};
}

inline int tree_node_parse(PolicyTree& t, const nlohmann::json& j) {
    const int id = int(t.nodes.size());
    t.nodes.push_back({});
    if (j.contains("action")) {
        const int a = j.at("action").get<int>();
        if (a != 0 && a != 1) throw ValidationError("tree json: action must be 0 or 1");
        t.nodes[std::size_t(id)].action = a;
        return id;
    }
    const int feature = j.at("feature").get<int>();
    if (feature < 1) throw ValidationError("tree json: feature indices are 1-based");
    t.nodes[std::size_t(id)].feature = feature - 1;
    t.nodes[std::size_t(id)].threshold = j.at("threshold").get<double>();
    const int l = tree_node_parse(t, j.at("left"));
    const int r = tree_node_parse(t, j.at("right"));
    t.nodes[std::size_t(id)].left = l;
    t.nodes[std::size_t(id)].right = r;
    return id;
}
}  // namespace detail

inline nlohmann::json to_json(const PolicyTree& t) { return detail::tree_node_json(t, 0); }

inline PolicyTree tree_from_json(const nlohmann::json& j) {
    PolicyTree t;
    t.nodes.clear();
    detail::tree_node_parse(t, j);
    return t;
}

inline nlohmann::json to_json(const LinearRule& r) {
    nlohmann::json beta = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r.beta.size(); ++i) beta.push_back(r.beta[i]);
    return nlohmann::json{{"beta", beta},
                          {"basis",
                           {{"linear", r.basis.linear},
                            {"pairwise", r.basis.pairwise},
                            {"squares", r.basis.squares}}}};
}

inline nlohmann::json to_json(const DecisionRule& rule) {
    return std::visit([](const auto& r) { return to_json(r); }, rule);
}

inline DecisionRule rule_from_json(const nlohmann::json& j) {
    if (j.contains("beta")) {
        LinearRule r;
        const auto& beta = j.at("beta");
        r.beta.resize(Eigen::Index(beta.size()));
        for (std::size_t i = 0; i < beta.size(); ++i) r.beta[Eigen::Index(i)] = beta[i].get<double>();
        if (j.contains("basis")) {
            const auto& b = j.at("basis");
            r.basis.linear = b.value("linear", true);
            r.basis.pairwise = b.value("pairwise", true);
            r.basis.squares = b.value("squares", false);
        }
        return r;
    }
    return tree_from_json(j);
}

}  // namespace coda
