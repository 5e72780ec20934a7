#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "histpanel/panel.hpp"
#include "histpanel/treatment.hpp"

namespace hp::sim {

struct CohortShare {
    int year = 0;
    double share = 0.0;
};

/// Knobs of the data-generating process. Defaults mimic the historical grid.
struct SimulationConfig {
    std::uint64_t seed = 1;
    int n_cities = 200;
    int first_year = 800;
    int n_years = 11;
    int t0 = 1200;
    std::vector<CohortShare> cohorts{{1300, 0.2}, {1400, 0.2}, {1500, 0.2}};
    double intercept = 3.0;
    double unit_sd = 0.5;
    double time_sd = 0.2;
    double tau = 0.0;        // effect at onset
    double tau_slope = 0.0;  // added per period since onset
    double sigma = 0.1;
    int factors = 0;
    double loading_sd = 1.0;
    double factor_sd = 1.0;
    double loading_shift = 0.0;  // added to treated cities' loadings
    double x_effect = 0.0;       // beta on the covariate level
    double x_trend = 0.0;        // coefficient on x_i * period index
    double x_noise = 0.0;        // within-city variation of x
    double select_on_x = 0.0;
    double select_on_loading = 0.0;

    /// Throws ConfigError InvalidConfig.
    void validate() const;
};

/// Everything drawn for one panel, kept for oracles.
struct SimulationTruth {
    SimulationConfig config;
    std::vector<int> years;
    std::vector<int> cohort;
    Eigen::VectorXd unit_fe;
    Eigen::VectorXd time_fe;
    Eigen::MatrixXd factors;   // T x r
    Eigen::MatrixXd loadings;  // N x r
    Eigen::MatrixXd x;         // N x T
    Eigen::MatrixXd tau;       // N x T, zero on untreated cells
    Eigen::MatrixXd y0;        // untreated potential outcome, log scale
};

struct SimulatedPanel {
    panel::BalancedPanel panel;  // population = exp(Y); x in foreign_urban_potential
    panel::InstitutionPanel institutions;
    panel::TreatmentSchedule schedule;
    Eigen::MatrixXd y;  // N x T log outcome
    SimulationTruth truth;
};

/**
 * @brief Draws a panel from the interactive-effects DGP
 *
 * Y = intercept + unit + time + beta x + trend x.t + loadings.factors + tau D + sigma e.
 * Treated cities are Islamic (North Africa) with madrasas from their cohort
 * year; never-treated cities are Western European. Cities are ranked by a
 * selection score and the top shares become treated. Deterministic per seed.
 */
SimulatedPanel simulate_panel(const SimulationConfig& config);

struct OracleCell {
    int cohort = 0;
    int time = 0;
    double estimate = 0.0;  // never-treated contrast against Y_{g-1}
    double truth = 0.0;     // mean true effect in the cohort at time
};

/// Group-mean arithmetic over enumerated cells, written with plain loops.
std::vector<OracleCell> brute_force_att(const std::vector<std::vector<double>>& y, const std::vector<int>& years,
                                        const std::vector<int>& cohort,
                                        const std::vector<std::vector<double>>* tau = nullptr);

std::vector<OracleCell> brute_force_att(const SimulatedPanel& sim);

}  // namespace hp::sim
