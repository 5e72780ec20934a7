#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "histpanel/regression.hpp"

namespace hp::pvar {

/**
 * Forward orthogonal deviations:
 * x~_t = sqrt((T-t)/(T-t+1)) (x_t - mean(x_{t+1..T})), t = 1..T-1.
 * @throws Error TooShort for fewer than two observations
 */
std::vector<double> helmert_transform(std::span<const double> series);

struct PvarData {
    std::vector<std::string> names;
    std::vector<Eigen::MatrixXd> series;  // one N x T matrix per variable
};

struct PvarOptions {
    int instrument_lags = 1;
    double max_condition = 1e10;
};

struct PvarFit {
    std::vector<std::string> names;
    Eigen::MatrixXd a;     // a(e, k): coefficient of variable k at t-1 in equation e
    Eigen::MatrixXd vcov;  // over vec of a by equation: index e*m + k
    std::vector<Eigen::VectorXd> residuals;  // per equation, transformed scale
    int n_obs = 0;
    int n_cities = 0;
    double condition = 0.0;
    std::string instruments;

    double se(std::size_t equation, std::size_t variable) const;
};

/**
 * First-order panel VAR. Each equation is estimated by two-step GMM on
 * Helmert-transformed data with untransformed lagged levels as instruments;
 * identity first-step weights, city-clustered second step. The joint
 * covariance stacks the per-equation influence functions by city.
 * @throws Error TooShort, RankDeficient, WeakInstruments
 */
PvarFit pvar1_fit(const PvarData& data, const PvarOptions& options = {});

/// Wald test that `cause` at t-1 does not enter the equation of `effect`.
reg::WaldResult granger_wald(const PvarFit& fit, std::string_view cause, std::string_view effect);

}  // namespace hp::pvar
