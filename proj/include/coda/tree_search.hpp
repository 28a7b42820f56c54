#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "coda/stats.hpp"
#include "coda/tree.hpp"
#include "coda/types.hpp"

namespace coda {

struct SearchResult {
    DecisionRule rule = PolicyTree::leaf(0);
    double objective = 0.0;      // sum of selected rewards, re-evaluated on the rule
    int iterations_used = 0;     // filled by the iterative searches
    bool converged = true;
    std::vector<double> trace;   // objective per iteration (iterative searches)
};

inline double evaluate_objective(const Matrix& rewards, const Matrix& X, const DecisionRule& rule) {
    const std::vector<int> actions = apply_rule(rule, X);
    KahanSum acc;
    for (Eigen::Index i = 0; i < rewards.rows(); ++i)
        acc.add(rewards(i, actions[std::size_t(i)]));
    return acc.value();
}

namespace detail {

// Max/min-prefix segment tree over fixed positions; absent positions hold 0.
// Prefixes include the empty prefix, so maxp >= 0 and minp <= 0 always.
class PrefixTree {
public:
    void init(int n) {
        size_ = 1;
        while (size_ < n) size_ <<= 1;
        sum_.assign(std::size_t(2 * size_), 0.0);
        maxp_.assign(std::size_t(2 * size_), 0.0);
        minp_.assign(std::size_t(2 * size_), 0.0);
    }

    void set(int pos, double v) {
        int i = size_ + pos;
        sum_[std::size_t(i)] = v;
        maxp_[std::size_t(i)] = std::max(0.0, v);
        minp_[std::size_t(i)] = std::min(0.0, v);
        for (i >>= 1; i >= 1; i >>= 1) {
            const std::size_t l = std::size_t(2 * i), r = std::size_t(2 * i + 1);
            sum_[std::size_t(i)] = sum_[l] + sum_[r];
            maxp_[std::size_t(i)] = std::max(maxp_[l], sum_[l] + maxp_[r]);
            minp_[std::size_t(i)] = std::min(minp_[l], sum_[l] + minp_[r]);
        }
    }

    double max_prefix() const { return maxp_[1]; }
    double min_prefix() const { return minp_[1]; }

private:
    int size_ = 1;
    std::vector<double> sum_, maxp_, minp_;
};

struct Depth1Result {
    PolicyTree tree;
    double objective = 0.0;
};

// Exact best depth-<=1 tree on a row subset. Enumeration order for ties:
// leaf(0), leaf(1), then splits by (feature, threshold ascending) with the
// left-action-0 combo before left-action-1. Strict improvement keeps the first.
inline Depth1Result best_depth1(const Matrix& rewards, const Matrix& X,
                                const std::vector<int>& rows) {
    double t0 = 0.0, t1 = 0.0;
    for (int i : rows) {
        t0 += rewards(i, 0);
        t1 += rewards(i, 1);
    }
    Depth1Result best;
    best.tree = PolicyTree::leaf(0);
    best.objective = t0;
    if (t1 > best.objective) {
        best.tree = PolicyTree::leaf(1);
        best.objective = t1;
    }
    if (rows.size() < 2) return best;

    const Eigen::Index p = X.cols();
    std::vector<std::pair<double, int>> order(rows.size());
    for (Eigen::Index f = 0; f < p; ++f) {
        for (std::size_t k = 0; k < rows.size(); ++k)
            order[k] = {X(rows[k], f), rows[k]};
        std::sort(order.begin(), order.end());
        double p0 = 0.0, p1 = 0.0;
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
            p0 += rewards(order[k].second, 0);
            p1 += rewards(order[k].second, 1);
            if (order[k].first == order[k + 1].first) continue;
            const double thr = 0.5 * (order[k].first + order[k + 1].first);
            const double left0 = p0 + (t1 - p1);   // left action 0, right action 1
            const double left1 = p1 + (t0 - p0);
            if (left0 > best.objective) {
                best.objective = left0;
                best.tree = PolicyTree::stump(int(f), thr, 0, 1);
            }
            if (left1 > best.objective) {
                best.objective = left1;
                best.tree = PolicyTree::stump(int(f), thr, 1, 0);
            }
        }
    }
    return best;
}

// Exact best depth-<=2 tree via a sweep over root thresholds. For each root
// feature the rows migrate right-to-left one distinct value group at a time;
// per side and per second feature a prefix segment tree yields the best
// depth-1 objective in O(1) after O(log N) updates.
inline Depth1Result best_depth2(const Matrix& rewards, const Matrix& X) {
    const int n = int(rewards.rows());
    const Eigen::Index p = X.cols();

    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    Depth1Result best = best_depth1(rewards, X, all);

    // per feature: sort order, and each row's distinct-value group. Prefix
    // structures are indexed by group, not row, so every prefix boundary is a
    // realizable threshold; a cut between tied values is not a tree.
    std::vector<std::vector<int>> gidx(std::size_t(p), std::vector<int>(std::size_t(n), 0));
    std::vector<std::vector<int>> ord(std::size_t(p), std::vector<int>(std::size_t(n), 0));
    std::vector<int> ngroups(std::size_t(p), 0);
    for (Eigen::Index f = 0; f < p; ++f) {
        auto& o = ord[std::size_t(f)];
        std::iota(o.begin(), o.end(), 0);
        std::sort(o.begin(), o.end(), [&](int a, int b) {
            return X(a, f) != X(b, f) ? X(a, f) < X(b, f) : a < b;
        });
        int g = 0;
        for (int k = 0; k < n; ++k) {
            if (k > 0 && X(o[std::size_t(k)], f) != X(o[std::size_t(k - 1)], f)) ++g;
            gidx[std::size_t(f)][std::size_t(o[std::size_t(k)])] = g;
        }
        ngroups[std::size_t(f)] = g + 1;
    }

    std::vector<double> d(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) d[std::size_t(i)] = rewards(i, 0) - rewards(i, 1);

    std::vector<PrefixTree> left(static_cast<std::size_t>(p)), right(static_cast<std::size_t>(p));
    std::vector<std::vector<double>> lsum(static_cast<std::size_t>(p));
    std::vector<std::vector<double>> rsum(static_cast<std::size_t>(p));
    struct Winner {
        double objective;
        int feature;
        int cut;  // rows ord[0..cut) go left
        bool found = false;
    } win{0.0, 0, 0, false};

    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index f = 0; f < p; ++f) {
            const int G = ngroups[std::size_t(f)];
            left[std::size_t(f)].init(G);
            right[std::size_t(f)].init(G);
            lsum[std::size_t(f)].assign(std::size_t(G), 0.0);
            rsum[std::size_t(f)].assign(std::size_t(G), 0.0);
            for (int i = 0; i < n; ++i)
                rsum[std::size_t(f)][std::size_t(gidx[std::size_t(f)][std::size_t(i)])] +=
                    d[std::size_t(i)];
            for (int g = 0; g < G; ++g)
                right[std::size_t(f)].set(g, rsum[std::size_t(f)][std::size_t(g)]);
        }
        double t0l = 0.0, t1l = 0.0;
        double t0r = 0.0, t1r = 0.0;
        for (int i = 0; i < n; ++i) {
            t0r += rewards(i, 0);
            t1r += rewards(i, 1);
        }

        const auto& o = ord[std::size_t(j)];
        int k = 0;
        while (k < n) {
            // move a whole group of equal root-feature values at once
            int g = k;
            while (g < n && X(o[std::size_t(g)], j) == X(o[std::size_t(k)], j)) {
                const int row = o[std::size_t(g)];
                for (Eigen::Index f = 0; f < p; ++f) {
                    const int gg = gidx[std::size_t(f)][std::size_t(row)];
                    lsum[std::size_t(f)][std::size_t(gg)] += d[std::size_t(row)];
                    rsum[std::size_t(f)][std::size_t(gg)] -= d[std::size_t(row)];
                    left[std::size_t(f)].set(gg, lsum[std::size_t(f)][std::size_t(gg)]);
                    right[std::size_t(f)].set(gg, rsum[std::size_t(f)][std::size_t(gg)]);
                }
                t0l += rewards(row, 0);
                t1l += rewards(row, 1);
                t0r -= rewards(row, 0);
                t1r -= rewards(row, 1);
                ++g;
            }
            k = g;
            if (k >= n) break;  // no rows remain on the right

            double bl = std::max(t0l, t1l);
            double br = std::max(t0r, t1r);
            for (Eigen::Index f = 0; f < p; ++f) {
                bl = std::max({bl, t1l + left[std::size_t(f)].max_prefix(),
                               t0l - left[std::size_t(f)].min_prefix()});
                br = std::max({br, t1r + right[std::size_t(f)].max_prefix(),
                               t0r - right[std::size_t(f)].min_prefix()});
            }
            const double total = bl + br;
            if (total > best.objective && (!win.found || total > win.objective)) {
                win = {total, int(j), k, true};
            }
        }
    }

    if (win.found && win.objective > best.objective) {
        const auto& o = ord[std::size_t(win.feature)];
        std::vector<int> lrows(o.begin(), o.begin() + win.cut);
        std::vector<int> rrows(o.begin() + win.cut, o.end());
        const double thr = 0.5 * (X(o[std::size_t(win.cut - 1)], win.feature) +
                                  X(o[std::size_t(win.cut)], win.feature));
        Depth1Result lbest = best_depth1(rewards, X, lrows);
        Depth1Result rbest = best_depth1(rewards, X, rrows);
        PolicyTree t;
        t.nodes.clear();
        t.nodes.push_back({win.feature, thr, -1, -1, 0});
        const int loff = 1;
        for (const auto& nd : lbest.tree.nodes) {
            PolicyTree::Node c = nd;
            if (c.feature >= 0) {
                c.left += loff;
                c.right += loff;
            }
            t.nodes.push_back(c);
        }
        const int roff = int(t.nodes.size());
        for (const auto& nd : rbest.tree.nodes) {
            PolicyTree::Node c = nd;
            if (c.feature >= 0) {
                c.left += roff;
                c.right += roff;
            }
            t.nodes.push_back(c);
        }
        t.nodes[0].left = loff;
        t.nodes[0].right = roff;
        Depth1Result out;
        out.tree = t;
        out.objective = lbest.objective + rbest.objective;
        // the sweep totals carry rounding drift from the running sums; only
        // accept the reconstructed tree when its exact objective holds up
        return out.objective >= best.objective ? out : best;
    }
    return best;
}

// Generic exact search for depth 3..4 by recursion over root splits; the
// depth-2 base uses the fast sweep. Cost grows as O((Nr)^(2^L - 1)).
inline Depth1Result best_depth_general(const Matrix& rewards, const Matrix& X,
                                       const std::vector<int>& rows, int depth);

inline Depth1Result solve_subset(const Matrix& rewards, const Matrix& X,
                                 const std::vector<int>& rows, int depth) {
    if (depth <= 1) return best_depth1(rewards, X, rows);
    if (depth == 2) {
        Matrix rsub(Eigen::Index(rows.size()), 2);
        Matrix xsub(Eigen::Index(rows.size()), X.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            rsub.row(Eigen::Index(k)) = rewards.row(rows[k]);
            xsub.row(Eigen::Index(k)) = X.row(rows[k]);
        }
        return best_depth2(rsub, xsub);
    }
    return best_depth_general(rewards, X, rows, depth);
}

inline Depth1Result best_depth_general(const Matrix& rewards, const Matrix& X,
                                       const std::vector<int>& rows, int depth) {
    Depth1Result best = solve_subset(rewards, X, rows, 2);
    const Eigen::Index p = X.cols();
    std::vector<std::pair<double, int>> order(rows.size());
    for (Eigen::Index f = 0; f < p; ++f) {
        for (std::size_t k = 0; k < rows.size(); ++k)
            order[k] = {X(rows[k], f), rows[k]};
        std::sort(order.begin(), order.end());
        for (std::size_t cut = 1; cut < order.size(); ++cut) {
            if (order[cut - 1].first == order[cut].first) continue;
            std::vector<int> lrows, rrows;
            lrows.reserve(cut);
            rrows.reserve(order.size() - cut);
            for (std::size_t k = 0; k < cut; ++k) lrows.push_back(order[k].second);
            for (std::size_t k = cut; k < order.size(); ++k) rrows.push_back(order[k].second);
            const Depth1Result lb = solve_subset(rewards, X, lrows, depth - 1);
            const Depth1Result rb = solve_subset(rewards, X, rrows, depth - 1);
            if (lb.objective + rb.objective > best.objective) {
                const double thr = 0.5 * (order[cut - 1].first + order[cut].first);
                PolicyTree t;
                t.nodes.clear();
                t.nodes.push_back({int(f), thr, -1, -1, 0});
                const int loff = 1;
                for (const auto& nd : lb.tree.nodes) {
                    PolicyTree::Node c = nd;
                    if (c.feature >= 0) {
                        c.left += loff;
                        c.right += loff;
                    }
                    t.nodes.push_back(c);
                }
                const int roff = int(t.nodes.size());
                for (const auto& nd : rb.tree.nodes) {
                    PolicyTree::Node c = nd;
                    if (c.feature >= 0) {
                        c.left += roff;
                        c.right += roff;
                    }
                    t.nodes.push_back(c);
                }
                t.nodes[0].left = loff;
                t.nodes[0].right = roff;
                best.tree = t;
                best.objective = lb.objective + rb.objective;
            }
        }
    }
    return best;
}

}  // namespace detail

// Returns a depth-<=L tree maximizing the sum of per-row selected rewards,
// exactly, over axis-aligned trees with thresholds at midpoints of observed
// values. Ties resolve to the earliest tree in deterministic enumeration
// order (leaves first, then feature index, then threshold ascending).
inline SearchResult exact_tree_search(const Matrix& rewards, const Matrix& X, int depth) {
    const Eigen::Index n = rewards.rows();
    if (n == 0) throw ValidationError("exact_tree_search: empty input");
    if (rewards.cols() != 2) throw ValidationError("exact_tree_search: rewards must be N x 2");
    if (X.rows() != n) throw ValidationError("exact_tree_search: X row mismatch");
    if (!detail::all_finite(rewards)) throw ValidationError("exact_tree_search: non-finite rewards");
    if (depth < 0 || depth > 4)
        throw ValidationError("exact_tree_search: depth must be in [0, 4]");

    detail::Depth1Result sol;
    if (depth == 0) {
        const double t0 = rewards.col(0).sum(), t1 = rewards.col(1).sum();
        sol.tree = PolicyTree::leaf(t1 > t0 ? 1 : 0);
        sol.objective = std::max(t0, t1);
    } else if (depth == 2) {
        sol = detail::best_depth2(rewards, X);
    } else {
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        sol = detail::solve_subset(rewards, X, all, depth);
    }

    SearchResult res;
    res.rule = sol.tree;
    res.objective = evaluate_objective(rewards, X, res.rule);
    res.trace = {res.objective};
    return res;
}

}  // namespace coda
