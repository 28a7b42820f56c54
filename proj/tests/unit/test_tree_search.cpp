#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "coda/rng.hpp"
#include "coda/tree_search.hpp"

using namespace coda;

namespace {

// Independent oracle: enumerate every depth-<=2 tree with thresholds at the
// midpoints of observed feature values and evaluate each one directly.
std::vector<double> midpoints(const Matrix& X, Eigen::Index f) {
    std::vector<double> v(std::size_t(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) v[std::size_t(i)] = X(i, f);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    std::vector<double> mids;
    for (std::size_t k = 0; k + 1 < v.size(); ++k) mids.push_back(0.5 * (v[k] + v[k + 1]));
    return mids;
}

std::vector<PolicyTree> all_depth1(const Matrix& X) {
    std::vector<PolicyTree> out{PolicyTree::leaf(0), PolicyTree::leaf(1)};
    for (Eigen::Index f = 0; f < X.cols(); ++f)
        for (double t : midpoints(X, f)) {
            out.push_back(PolicyTree::stump(int(f), t, 0, 1));
            out.push_back(PolicyTree::stump(int(f), t, 1, 0));
            out.push_back(PolicyTree::stump(int(f), t, 0, 0));
            out.push_back(PolicyTree::stump(int(f), t, 1, 1));
        }
    return out;
}

PolicyTree graft(int feature, double thr, const PolicyTree& l, const PolicyTree& r) {
    PolicyTree t;
    t.nodes.clear();
    t.nodes.push_back({feature, thr, -1, -1, 0});
    const int loff = 1;
    for (auto nd : l.nodes) {
        if (nd.feature >= 0) {
            nd.left += loff;
            nd.right += loff;
        }
        t.nodes.push_back(nd);
    }
    const int roff = int(t.nodes.size());
    for (auto nd : r.nodes) {
        if (nd.feature >= 0) {
            nd.left += roff;
            nd.right += roff;
        }
        t.nodes.push_back(nd);
    }
    t.nodes[0].left = loff;
    t.nodes[0].right = roff;
    return t;
}

double brute_best_depth2(const Matrix& rewards, const Matrix& X) {
    const std::vector<PolicyTree> subs = all_depth1(X);
    double best = -1e300;
    for (const auto& t : subs) best = std::max(best, evaluate_objective(rewards, X, t));
    for (Eigen::Index f = 0; f < X.cols(); ++f)
        for (double thr : midpoints(X, f))
            for (const auto& l : subs)
                for (const auto& r : subs) {
                    const PolicyTree t = graft(int(f), thr, l, r);
                    best = std::max(best, evaluate_objective(rewards, X, t));
                }
    return best;
}

}  // namespace

TEST_CASE("depth-2 search separates the matching-sign quadrants") {
    // reward favors arm 1 exactly when x1 and x2 share a sign
    Matrix X(8, 2);
    X << -2, -1, -1, -2, -2, 1, -1, 2, 1, -2, 2, -1, 1, 1, 2, 2;
    Matrix rewards(8, 2);
    for (Eigen::Index i = 0; i < 8; ++i) {
        const bool same = X(i, 0) * X(i, 1) > 0;
        rewards(i, 0) = same ? 0.0 : 1.0;
        rewards(i, 1) = same ? 1.0 : 0.0;
    }
    const SearchResult res = exact_tree_search(rewards, X, 2);
    REQUIRE(res.objective == 8.0);
    const auto& t = std::get<PolicyTree>(res.rule);
    REQUIRE(t.depth() == 2);
    for (Eigen::Index i = 0; i < 8; ++i) {
        const Vector xi = X.row(i).transpose();
        REQUIRE(apply_rule(res.rule, xi) == int(rewards(i, 1) > rewards(i, 0)));
    }
}

TEST_CASE("search collapses to a leaf when one arm dominates") {
    Matrix X(5, 2);
    X.setRandom();
    Matrix rewards(5, 2);
    rewards.col(0).setConstant(2.0);
    rewards.col(1).setConstant(1.0);
    const SearchResult res = exact_tree_search(rewards, X, 2);
    REQUIRE(res.objective == 10.0);
    REQUIRE(std::get<PolicyTree>(res.rule) == PolicyTree::leaf(0));
}

TEST_CASE("all-equal rewards tie-break to the all-control leaf") {
    Matrix X(6, 2);
    X.setRandom();
    const Matrix rewards = Matrix::Ones(6, 2);
    const SearchResult res = exact_tree_search(rewards, X, 2);
    REQUIRE(std::get<PolicyTree>(res.rule) == PolicyTree::leaf(0));
    REQUIRE(res.objective == 6.0);
}

TEST_CASE("depth-0 search picks the better arm total") {
    Matrix X(3, 1);
    X << 1, 2, 3;
    Matrix rewards(3, 2);
    rewards << 0, 1, 0, 1, 5, 0;
    SearchResult res = exact_tree_search(rewards, X, 0);
    REQUIRE(std::get<PolicyTree>(res.rule) == PolicyTree::leaf(0));
    REQUIRE(res.objective == 5.0);
    rewards(2, 0) = 0.0;
    res = exact_tree_search(rewards, X, 0);
    REQUIRE(std::get<PolicyTree>(res.rule) == PolicyTree::leaf(1));
}

TEST_CASE("depth-1 search finds the best single split") {
    Matrix X(6, 1);
    X << 1, 2, 3, 4, 5, 6;
    Matrix rewards(6, 2);
    // arm 1 pays off only for x > 3.5
    rewards << 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1;
    const SearchResult res = exact_tree_search(rewards, X, 1);
    REQUIRE(res.objective == 6.0);
    const auto& t = std::get<PolicyTree>(res.rule);
    REQUIRE(t.depth() == 1);
    REQUIRE(t.nodes[0].threshold == 3.5);
}

TEST_CASE("deeper trees are admitted only when the depth budget allows") {
    // alternating preference along one feature: a perfect fit needs 8 leaves
    Matrix X(8, 1);
    Matrix rewards(8, 2);
    for (Eigen::Index i = 0; i < 8; ++i) {
        X(i, 0) = double(i);
        rewards(i, 0) = (i % 2 == 0) ? 1.0 : 0.0;
        rewards(i, 1) = (i % 2 == 1) ? 1.0 : 0.0;
    }
    REQUIRE(exact_tree_search(rewards, X, 2).objective == 6.0);
    REQUIRE(exact_tree_search(rewards, X, 3).objective == 8.0);
    REQUIRE(exact_tree_search(rewards, X, 4).objective == 8.0);
}

TEST_CASE("reported objective equals a fresh evaluation of the rule") {
    Rng rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::Index n = 30;
        Matrix X(n, 3), rewards(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < 3; ++j) X(i, j) = rng.uniform(-1, 1);
            rewards(i, 0) = rng.normal();
            rewards(i, 1) = rng.normal();
        }
        for (int depth : {0, 1, 2}) {
            const SearchResult res = exact_tree_search(rewards, X, depth);
            REQUIRE(res.objective == evaluate_objective(rewards, X, res.rule));
        }
    }
}

TEST_CASE("depth-2 sweep matches exhaustive tree enumeration") {
    Rng rng(77);
    for (int rep = 0; rep < 120; ++rep) {
        const Eigen::Index n = 4 + Eigen::Index(rng.below(7));  // 4..10 rows
        const Eigen::Index p = 1 + Eigen::Index(rng.below(2));
        Matrix X(n, p), rewards(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < p; ++j)
                X(i, j) = double(rng.below(5));  // ties on purpose
            rewards(i, 0) = rng.normal();
            rewards(i, 1) = rng.normal();
        }
        const SearchResult res = exact_tree_search(rewards, X, 2);
        const double oracle = brute_best_depth2(rewards, X);
        REQUIRE(res.objective == Catch::Approx(oracle).epsilon(0.0).margin(1e-9));
    }
}

TEST_CASE("duplicate covariate rows never split apart") {
    Matrix X(4, 1);
    X << 1, 1, 1, 1;
    Matrix rewards(4, 2);
    rewards << 1, 0, 0, 1, 1, 0, 0, 1;
    const SearchResult res = exact_tree_search(rewards, X, 2);
    // no threshold exists between equal values, so the best is a single leaf
    REQUIRE(res.objective == 2.0);
    REQUIRE(std::get<PolicyTree>(res.rule).depth() == 0);
}

TEST_CASE("tree search validates its inputs") {
    Matrix X(2, 1), rewards(2, 2);
    X << 1, 2;
    rewards.setOnes();
    REQUIRE_THROWS_AS(exact_tree_search(rewards, X, 5), ValidationError);
    REQUIRE_THROWS_AS(exact_tree_search(rewards, X, -1), ValidationError);
    REQUIRE_THROWS_AS(exact_tree_search(Matrix(0, 2), Matrix(0, 1), 2), ValidationError);
    Matrix bad = rewards;
    bad(0, 0) = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(exact_tree_search(bad, X, 2), ValidationError);
    REQUIRE_THROWS_AS(exact_tree_search(rewards, Matrix(3, 1), 2), ValidationError);
    REQUIRE_THROWS_AS(exact_tree_search(Matrix(2, 3), X, 2), ValidationError);
}
