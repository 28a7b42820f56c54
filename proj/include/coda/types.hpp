#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace coda {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;

// Thrown for contract violations: bad shapes, non-finite inputs, invalid config.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a numeric routine cannot produce a usable result.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Sample with the outcome of interest observed on every row.
struct PrimarySample {
    Matrix X;   // N_E x r baseline covariates
    Vector A;   // treatment, entries 0/1
    Matrix M;   // N_E x s intermediate outcomes
    Vector Y;   // outcome of interest, larger is better

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index r() const { return X.cols(); }
    Eigen::Index s() const { return M.cols(); }
};

// Sample sharing covariates, treatment and intermediate outcomes, but no outcome.
struct AuxiliarySample {
    Matrix X;   // N_U x r
    Vector A;
    Matrix M;   // N_U x s

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index r() const { return X.cols(); }
    Eigen::Index s() const { return M.cols(); }
};

// Primary-first stack of both samples. Row order is part of the contract:
// rows [0, n_e) carry R=1 and an observed outcome, rows [n_e, n) carry R=0.
struct JointSample {
    Matrix X;
    Vector A;
    Matrix M;
    Vector R;                    // 1 = primary row
    std::optional<Vector> Y;     // length n_e, aligned with the primary block
    Eigen::Index n_e = 0;
    Eigen::Index n_u = 0;

    Eigen::Index n() const { return n_e + n_u; }
    Eigen::Index r() const { return X.cols(); }
    Eigen::Index s() const { return M.cols(); }
};

inline JointSample make_joint(const PrimarySample& e, const AuxiliarySample& u) {
    JointSample j;
    j.n_e = e.n();
    j.n_u = u.n();
    j.X.resize(j.n(), e.r());
    j.X << e.X, u.X;
    j.A.resize(j.n());
    j.A << e.A, u.A;
    j.M.resize(j.n(), e.s());
    j.M << e.M, u.M;
    j.R = Vector::Zero(j.n());
    j.R.head(j.n_e).setOnes();
    j.Y = e.Y;
    return j;
}

enum class Mode { HO, HE, Auto };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::HO: return "HO";
        case Mode::HE: return "HE";
        default: return "auto";
    }
}

// Feature map used by the regression models: optional groups of terms over the
// raw columns. 'linear' is the identity block, 'pairwise' all distinct products
// x_j*x_k, 'squares' all x_j^2. The intercept is handled by the fitters.
struct BasisSpec {
    bool linear = true;
    bool pairwise = true;
    bool squares = false;

    bool operator==(const BasisSpec&) const = default;
};

enum class SamplingModelKind {
    Forest,    // random-forest classifier fit on the stacked (X, A, M) -> R
    Logistic,  // logistic-linear model on the same features
    Frozen,    // constant, fixed at n_e/n unless overridden; used for diagnostics
};

inline std::string to_string(SamplingModelKind k) {
    switch (k) {
        case SamplingModelKind::Forest: return "forest";
        case SamplingModelKind::Logistic: return "logistic";
        default: return "frozen";
    }
}

// Shared knobs. Defaults match the reference study setup.
struct Config {
    int depth = 2;                  // policy tree depth L, capped at 4
    int max_iterations = 1;         // calibrated-search iterations K
    double param_tol = 1e-4;        // parametric-search stopping |beta_k - beta_{k-1}|
    double clip_lo = 0.01;          // probability clip bounds (positivity)
    double clip_hi = 0.99;
    double ridge_eps = 1e-8;        // covariance ridge scale, applied on ill-conditioning
    double alpha = 0.05;            // CI level: two-sided 1 - alpha
    Mode mode = Mode::Auto;
    std::uint64_t seed = 0;
    BasisSpec basis;                // mean-model basis
    SamplingModelKind sampling_model = SamplingModelKind::Forest;
    double frozen_r = -1.0;         // Frozen sampling value; <0 means n_e/n
    int forest_trees = 100;
    int threads = 1;                // worker threads for replication studies

    void validate() const {
        if (depth < 0 || depth > 4) throw ValidationError("config: depth must be in [0, 4]");
        if (max_iterations < 0) throw ValidationError("config: max_iterations must be >= 0");
        if (!(clip_lo > 0.0 && clip_lo < clip_hi && clip_hi < 1.0))
            throw ValidationError("config: need 0 < clip_lo < clip_hi < 1");
        if (ridge_eps < 0.0) throw ValidationError("config: ridge_eps must be >= 0");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("config: alpha must be in (0, 1)");
        if (forest_trees < 1) throw ValidationError("config: forest_trees must be >= 1");
        if (threads < 1) throw ValidationError("config: threads must be >= 1");
    }
};

namespace detail {

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline bool is_binary(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (v[i] != 0.0 && v[i] != 1.0) return false;
    return true;
}

}  // namespace detail

}  // namespace coda
