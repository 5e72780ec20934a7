#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hp::synth {

enum class PredictorMode { OutcomePath, Covariates };

/**
 * @brief One treated series against a donor pool.
 *
 * Rows of y0 are years, columns donors. Pre-period years are those <= t0.
 * With OutcomePath predictors X is the pre-period outcome block; with
 * Covariates predictors x1/x0 hold caller-supplied pre-period summaries.
 */
struct ScmProblem {
    std::string treated;
    std::vector<std::string> donors;
    std::vector<int> years;
    int t0 = 0;
    Eigen::VectorXd y1;
    Eigen::MatrixXd y0;
    PredictorMode mode = PredictorMode::OutcomePath;
    std::vector<std::string> predictor_names;
    Eigen::VectorXd x1;
    Eigen::MatrixXd x0;

    std::size_t n_pre() const;
    std::size_t n_donors() const { return static_cast<std::size_t>(y0.cols()); }
    /// Throws ConfigError BadProblem / TooFewDonors.
    void validate() const;
};

ScmProblem outcome_problem(std::string treated, std::vector<std::string> donors, std::vector<int> years, int t0,
                           Eigen::VectorXd y1, Eigen::MatrixXd y0);

ScmProblem covariate_problem(std::string treated, std::vector<std::string> donors, std::vector<int> years, int t0,
                             Eigen::VectorXd y1, Eigen::MatrixXd y0, std::vector<std::string> predictor_names,
                             Eigen::VectorXd x1, Eigen::MatrixXd x0);

struct WeightFit {
    Eigen::VectorXd w;
    double objective = 0.0;
    int iterations = 0;
};

/**
 * Minimizes (X1 - X0 w)' V (X1 - X0 w) over the unit simplex with a primal
 * active-set method started from the best single donor. Among equal optima
 * the support with the smallest donor indices is kept.
 * @throws Error DegenerateV
 */
WeightFit fit_weights(const Eigen::VectorXd& x1, const Eigen::MatrixXd& x0, const Eigen::VectorXd& v);

struct VSelection {
    Eigen::VectorXd v;
    double validation_mspe = 0.0;
    bool uniform = true;
};

struct VOptions {
    int multistarts = 20;
    std::uint64_t seed = 1;
    int max_evaluations = 2000;
};

/**
 * Chooses diagonal predictor weights. Outcome-path predictors get uniform
 * V. Covariate predictors: Nelder-Mead over the simplex minimizing outcome
 * MSPE on the later half of the pre-period; the uniform start is replaced
 * only by a strict improvement.
 * @throws Error TooFewPrePeriods
 */
VSelection select_v(const ScmProblem& problem, const VOptions& options = {});

struct ScmFit {
    Eigen::VectorXd w;
    Eigen::VectorXd v;
    std::vector<int> years;
    Eigen::VectorXd gaps;  // Y1 - Y0 w, all years
    double atet = 0.0;     // mean post-period gap
    double pre_rmspe = 0.0;
    double post_rmspe = 0.0;
    double objective = 0.0;
    double ratio() const;  // post / pre RMSPE
};

ScmFit synth_fit(const ScmProblem& problem, const VOptions& options = {});

/// Gap series and summaries for given weights.
ScmFit scm_gaps(const ScmProblem& problem, const Eigen::VectorXd& w, const Eigen::VectorXd& v);

enum class PlaceboMode { InSpaceFull, RandomSample };

struct PlaceboOptions {
    PlaceboMode mode = PlaceboMode::InSpaceFull;
    int samples = 1000;  // random mode; capped at 10000
    int group_size = 1;  // random mode: donors averaged into one placebo unit
    std::uint64_t seed = 1;
    int threads = 1;
    VOptions v;
};

struct PlaceboResult {
    PlaceboMode mode = PlaceboMode::InSpaceFull;
    double treated_ratio = 0.0;
    std::vector<double> ratios;  // one per placebo fit
    std::vector<std::string> labels;
    double p_value = 1.0;
    std::vector<int> post_years;
    std::vector<double> p_by_year;
    std::vector<std::string> warnings;
};

/**
 * Permutation inference. In-space mode refits with each donor as the
 * treated unit and the remaining donors as its pool (J fits). Random mode
 * draws `samples` donor subsets of `group_size`, averages them into one
 * placebo series and uses the rest of the pool as donors.
 * p = (1 + #placebo ratios >= treated ratio) / (placebos + 1).
 */
PlaceboResult placebo_inference(const ScmProblem& problem, const ScmFit& fit, const PlaceboOptions& options = {});

}  // namespace hp::synth
