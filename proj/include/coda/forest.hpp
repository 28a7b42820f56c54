#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "coda/rng.hpp"
#include "coda/types.hpp"

namespace coda {

// Random-forest binary classifier: bootstrap resampling, per-split feature
// subsampling (sqrt(p)), exact gini splits, trees grown until leaves are pure
// or featureless. predict_proba averages per-tree leaf class-1 fractions.
//
// Used as the default posterior-sampling-probability estimator; predictions at
// the training rows are deliberately in-sample, mirroring the common plug-in
// usage where nuisances are fit and evaluated on the full joint sample.
class ForestClassifier {
public:
    struct Node {
        int feature = -1;          // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;        // leaf: fraction of class-1 training rows
    };

    void fit(const Matrix& F, const Vector& y, std::uint64_t seed, int n_trees = 100) {
        const Eigen::Index n = F.rows();
        if (y.size() != n) throw ValidationError("forest: label length mismatch");
        if (n < 2) throw ValidationError("forest: need at least two rows");
        if (!detail::is_binary(y)) throw ValidationError("forest: labels must be 0/1");
        const double ybar = y.mean();
        if (ybar == 0.0 || ybar == 1.0) throw ValidationError("forest: single-class labels");

        n_features_ = int(F.cols());
        mtry_ = std::max(1, int(std::sqrt(double(n_features_))));
        trees_.clear();
        trees_.resize(std::size_t(n_trees));
        for (int t = 0; t < n_trees; ++t) {
            Rng rng = Rng::stream(seed, std::uint64_t(t));
            std::vector<int> rows(static_cast<std::size_t>(n));
            for (auto& rix : rows) rix = int(rng.below(std::uint64_t(n)));
            build(trees_[std::size_t(t)], F, y, rows, 0, int(rows.size()), rng);
        }
    }

    double predict1(const Eigen::Ref<const Vector>& x) const {
        double acc = 0.0;
        for (const auto& tree : trees_) {
            int idx = 0;
            while (tree[std::size_t(idx)].feature >= 0) {
                const auto& nd = tree[std::size_t(idx)];
                idx = (x[nd.feature] <= nd.threshold) ? nd.left : nd.right;
            }
            acc += tree[std::size_t(idx)].value;
        }
        return acc / double(trees_.size());
    }

    Vector predict(const Matrix& F) const {
        if (int(F.cols()) != n_features_) throw ValidationError("forest: feature width mismatch");
        Vector out(F.rows());
        for (Eigen::Index i = 0; i < F.rows(); ++i) out[i] = predict1(F.row(i));
        return out;
    }

    int tree_count() const { return int(trees_.size()); }

private:
    using Tree = std::vector<Node>;

    // Builds the subtree over rows[lo, hi) (bootstrap indices), returns node id.
    int build(Tree& tree, const Matrix& F, const Vector& y, std::vector<int>& rows, int lo,
              int hi, Rng& rng) {
        const int id = int(tree.size());
        tree.push_back({});
        const int sz = hi - lo;
        int ones = 0;
        for (int i = lo; i < hi; ++i) ones += (y[rows[std::size_t(i)]] == 1.0);
        if (ones == 0 || ones == sz) {
            tree[std::size_t(id)].value = (ones == sz) ? 1.0 : 0.0;
            return id;
        }

        // sample mtry distinct features, then take the best gini split among them
        std::vector<int> feats(static_cast<std::size_t>(n_features_));
        std::iota(feats.begin(), feats.end(), 0);
        for (int j = 0; j < mtry_; ++j) {
            const int k = j + int(rng.below(std::uint64_t(n_features_ - j)));
            std::swap(feats[std::size_t(j)], feats[std::size_t(k)]);
        }

        int best_feat = -1;
        double best_thr = 0.0;
        double best_score = -1.0;  // impurity decrease, any valid split beats -1
        std::vector<std::pair<double, int>> order;
        for (int j = 0; j < mtry_; ++j) {
            const int f = feats[std::size_t(j)];
            order.clear();
            order.reserve(std::size_t(sz));
            for (int i = lo; i < hi; ++i)
                order.emplace_back(F(rows[std::size_t(i)], f), rows[std::size_t(i)]);
            std::sort(order.begin(), order.end());
            int left_ones = 0;
            for (int i = 0; i + 1 < sz; ++i) {
                left_ones += (y[order[std::size_t(i)].second] == 1.0);
                if (order[std::size_t(i)].first == order[std::size_t(i + 1)].first) continue;
                const double nl = double(i + 1), nr = double(sz - i - 1);
                const double pl = double(left_ones) / nl;
                const double pr = double(ones - left_ones) / nr;
                const double p0 = double(ones) / double(sz);
                const double score = 2.0 * p0 * (1.0 - p0) -
                                     (nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)) /
                                         double(sz);
                if (score > best_score) {
                    best_score = score;
                    best_feat = f;
                    best_thr = 0.5 * (order[std::size_t(i)].first +
                                      order[std::size_t(i + 1)].first);
                }
            }
        }
        if (best_feat < 0) {
            // all sampled features constant on this node
            tree[std::size_t(id)].value = double(ones) / double(sz);
            return id;
        }

        auto mid = std::stable_partition(
            rows.begin() + lo, rows.begin() + hi,
            [&](int rix) { return F(rix, best_feat) <= best_thr; });
        const int cut = int(mid - rows.begin());
        if (cut == lo || cut == hi) {
            tree[std::size_t(id)].value = double(ones) / double(sz);
            return id;
        }
        tree[std::size_t(id)].feature = best_feat;
        tree[std::size_t(id)].threshold = best_thr;
        const int l = build(tree, F, y, rows, lo, cut, rng);
        const int r = build(tree, F, y, rows, cut, hi, rng);
        tree[std::size_t(id)].left = l;
        tree[std::size_t(id)].right = r;
        return id;
    }

    std::vector<Tree> trees_;
    int n_features_ = 0;
    int mtry_ = 1;
};

}  // namespace coda
