#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace hp::reg {

/// Categorical column recoded to dense levels 0..levels-1 (sorted raw codes).
struct Factor {
    std::string name;
    std::vector<int> codes;
    int levels = 0;
};

Factor make_factor(std::string name, std::span<const int> raw);

/// Intersection factor (one level per observed combination).
Factor intersect(const Factor& a, const Factor& b);

class DataFrame {
public:
    explicit DataFrame(std::size_t rows) : rows_(rows) {}

    void add(std::string name, Eigen::VectorXd column);
    void add_factor(std::string name, std::span<const int> raw);

    std::size_t rows() const { return rows_; }
    bool has_column(std::string_view name) const;
    bool has_factor(std::string_view name) const;
    const Eigen::VectorXd& column(std::string_view name) const;
    const Factor& factor(std::string_view name) const;

private:
    std::size_t rows_;
    std::vector<std::pair<std::string, Eigen::VectorXd>> columns_;
    std::vector<Factor> factors_;
};

struct DesignSpec {
    std::string outcome;
    std::vector<std::string> regressors;
    std::vector<std::string> absorb;   // factor names
    std::vector<std::string> cluster;  // factor names; empty -> HC1
    std::optional<std::string> weights;
    bool intercept = true;  // only used when nothing is absorbed
};

struct WithinOptions {
    double tol = 1e-10;
    int max_sweeps = 10000;
};

struct WithinResult {
    Eigen::MatrixXd data;
    int sweeps = 0;
    bool converged = false;
};

/**
 * Alternating (weighted) group demeaning over every absorbed factor until the
 * largest per-sweep change falls below tol. A balanced two-way grid is exact
 * after the first sweep. Columns constant within groups come back as zeros;
 * callers that need variation check for that themselves.
 */
WithinResult within_transform(const Eigen::MatrixXd& data, std::span<const Factor> absorb,
                              const Eigen::VectorXd* weights = nullptr, WithinOptions options = {});

struct FitResult {
    std::vector<std::string> names;
    Eigen::VectorXd coef;
    Eigen::MatrixXd vcov;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd design;   // regressors after absorption (rows = observations)
    Eigen::MatrixXd bread;    // (X'WX)^-1
    Eigen::VectorXd weights;  // empty when unweighted
    int n_obs = 0;
    int dof = 0;
    int absorbed_dof = 0;
    std::map<std::string, int> cluster_counts;
    std::map<std::string, int> absorbed_groups;
    std::string vcov_type;
    int ref_df = 0;  // clustered fits: t reference with (fewest clusters - 1) dof; 0 = normal
    std::vector<std::string> flags;

    std::size_t index(std::string_view name) const;
    double se(std::size_t i) const;
    double t_stat(std::size_t i) const { return coef(static_cast<Eigen::Index>(i)) / se(i); }
    double p_value(std::size_t i) const;  // two-sided against t(ref_df), or normal when ref_df = 0
    double critical_value(double level = 0.95) const;
};

/**
 * Least squares on the within-transformed data. Errors: NoVariation (a
 * regressor is absorbed by the fixed effects), RankDeficient (collinear
 * regressors, named in the message), SingleCluster.
 */
FitResult ols_fit(const DesignSpec& spec, const DataFrame& data, WithinOptions options = {});

/// Per-observation score contributions x_i * w_i * e_i (n x k).
Eigen::MatrixXd scores(const FitResult& fit);

struct CgmResult {
    Eigen::MatrixXd vcov;
    Eigen::MatrixXd raw;   // before the eigenvalue floor
    bool floored = false;  // negative eigenvalues were clipped to zero
    std::vector<int> cluster_counts;
};

/**
 * Multiway cluster-robust covariance by inclusion-exclusion over the cluster
 * dimensions; each term is a sandwich scaled by
 *   G/(G-1) * (n-1)/(n-k)
 * with G the number of clusters in that (intersected) dimension and k the
 * number of estimated coefficients.
 */
CgmResult cgm_vcov(const FitResult& fit, std::span<const Factor> clusters);

/// HC1 heteroskedasticity-robust sandwich.
Eigen::MatrixXd hc1_vcov(const FitResult& fit);

struct LogitOptions {
    double tol = 1e-8;
    int max_iter = 100;
};

struct LogitResult {
    Eigen::VectorXd coef;
    Eigen::VectorXd fitted;  // p(X) in (0, 1)
    double log_likelihood = 0.0;
    int iterations = 0;
};

/// Newton-Raphson logistic regression; X carries its own intercept column.
/// Errors: Separation, NonConvergence.
LogitResult logit_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, LogitOptions options = {});

struct WaldResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int df = 0;
};

/// W = (Rb - r)'(R V R')^-1 (Rb - r) against chi-square(rank R).
/// Errors: SingularRVR. A restriction that holds exactly returns W = 0, p = 1.
WaldResult wald_test(const Eigen::VectorXd& coef, const Eigen::MatrixXd& vcov, const Eigen::MatrixXd& r_matrix,
                     const Eigen::VectorXd& r_value);
WaldResult wald_test(const FitResult& fit, const Eigen::MatrixXd& r_matrix, const Eigen::VectorXd& r_value);

double normal_two_sided_p(double z);
double student_two_sided_p(double t, double df);
double chi2_survival(double x, double df);
double f_survival(double f, double df1, double df2);
double normal_quantile(double p);

}  // namespace hp::reg
