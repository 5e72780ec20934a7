#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "histpanel/did.hpp"

namespace hp::gsynth {

using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Y_it = mu + unit_i + time_t + Z_i theta_t + loadings_i . factors_t + e_it
struct FactorModel {
    int r = 0;
    double mu = 0.0;
    Eigen::VectorXd unit_effects;  // N
    Eigen::VectorXd time_effects;  // T
    Eigen::MatrixXd factors;       // T x r, factors'factors / T = I
    Eigen::MatrixXd loadings;      // N x r
    Eigen::MatrixXd theta;         // T x p, empty without Z
    Eigen::MatrixXd fitted;        // N x T
    double sigma2 = 0.0;           // mean squared residual over observed cells
    int iterations = 0;
    bool converged = false;
};

struct FitOptions {
    double tol = 1e-8;
    int max_iter = 1000;
    double fe_tol = 1e-13;  // r = 0 fixed-effects solver
};

/**
 * @brief Interactive fixed effects over the observed cells of `y`.
 *
 * Missing cells (mask false) are filled by EM: complete with the current fit,
 * double-demean, extract the top r principal directions, repeat until the
 * filled values move less than tol. Without factors or Z the model is the
 * additive two-way fit solved directly.
 * @throws Error RankDeficient when N or T does not exceed r
 */
FactorModel fit_factor_model(const Eigen::MatrixXd& y, const Mask& observed, int r,
                             const Eigen::MatrixXd* z = nullptr, const FitOptions& options = {});

struct CvResult {
    int r = 0;
    std::vector<double> mspe;  // index = r
};

/**
 * Leave-one-out over treated pre-treatment cells: factors from controls only,
 * treated intercept and loadings by least squares on the remaining pre cells.
 * Ties go to the smaller r.
 * @throws Error TooFewPrePeriods
 */
CvResult cross_validate_r(const did::DidData& data, int r_max, const FitOptions& options = {});

struct YearAtt {
    int year = 0;
    double att = 0.0;
    double se = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    int n_treated = 0;
};

struct GsynthOptions {
    int r = -1;  // negative: choose by cross-validation
    int r_max = 5;
    FitOptions fit;
    did::BootstrapOptions bootstrap;
    std::optional<Eigen::MatrixXd> z;  // N x p unit covariates
};

struct GsynthResult {
    FactorModel model;
    int r = 0;
    std::vector<double> cv_mspe;
    Eigen::MatrixXd counterfactual;  // N x T
    std::vector<YearAtt> by_year;    // post-period calendar years with treated cells
    YearAtt overall;                 // mean over treated cells; year = 0
    int bootstrap_reps = 0;
    std::vector<std::string> flags;
};

/**
 * Imputes Y(0) for treated cells from a factor model fitted on untreated
 * cells. Standard errors and 95% bands come from a parametric bootstrap:
 * control cities are resampled and treated cities rebuilt as fitted
 * counterfactual plus the residual path of a random control city.
 */
GsynthResult gsynth_att(const did::DidData& data, const GsynthOptions& options = {});

}  // namespace hp::gsynth
