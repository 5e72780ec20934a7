#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "histpanel/panel.hpp"
#include "histpanel/regression.hpp"
#include "histpanel/treatment.hpp"

namespace hp::did {

/// Outcome, adoption and exposure arrays shared by every estimator.
struct DidData {
    Eigen::MatrixXd y;  // N x T, already transformed
    std::vector<int> years;
    std::vector<int> cohort;    // grid year or panel::kNeverTreated
    Eigen::MatrixXd group;      // N x T
    Eigen::MatrixXd exposure;   // N x T
    int t0 = 0;
    panel::Covariates covariates;  // may be empty
    std::vector<std::string> city_ids;

    std::size_t n_cities() const { return static_cast<std::size_t>(y.rows()); }
    std::size_t n_years() const { return years.size(); }
    /// Throws ConfigError YearOffGrid.
    std::size_t year_index(int year) const;
    /// Distinct finite cohorts in increasing order.
    std::vector<int> cohorts() const;
    bool untreated(std::size_t i, std::size_t t) const { return years[t] < cohort[i]; }
};

/// Covariates constant over the whole panel are dropped.
DidData make_did_data(const panel::BalancedPanel& panel, const panel::TreatmentSchedule& schedule,
                      panel::OutcomeTransform transform, bool with_covariates);
DidData make_did_data(Eigen::MatrixXd y, const panel::TreatmentSchedule& schedule, panel::Covariates covariates = {});

/// Rows reordered/duplicated by `rows` (cluster bootstrap draw).
DidData resample(const DidData& data, const std::vector<std::size_t>& rows);

inline double percent_effect(double lambda) { return std::expm1(lambda); }

enum class ControlGroup { NeverTreated, NotYetTreated };
std::string_view to_string(ControlGroup control);
ControlGroup control_from_string(std::string_view text);

struct BootstrapOptions {
    int reps = 1000;
    std::uint64_t seed = 20240601;
    int threads = 1;
};

// ---------------------------------------------------------------- regressions

struct DddResult {
    reg::FitResult fit;
    std::string term;  // name of the triple interaction
    double lambda = 0.0;
    double se = 0.0;
    double p_value = 1.0;
    std::vector<std::string> dropped;  // lower-order terms absorbed or collinear
    double city_fe_p = 1.0;  // nested F test of the city effects
    double year_fe_p = 1.0;  // nested F test of the year effects
    double percent() const { return percent_effect(lambda); }
};

/**
 * @brief Static triple differences with city and year fixed effects.
 *
 * Regresses Y on group x post x exposure, the lower-order interactions that
 * survive absorption, and the covariates. Standard errors are two-way
 * clustered by city and year.
 * @throws Error NoTreatedUnits, RankDeficient
 */
DddResult ddd_static(const DidData& data);

struct EventStudy {
    std::vector<int> rel_times;  // includes the reference period -1
    Eigen::VectorXd coef;        // aligned with rel_times; reference is exactly 0
    Eigen::VectorXd se;
    Eigen::MatrixXd vcov;        // aligned with rel_times; reference row/column zero
    std::vector<int> dropped;    // relative times not estimable
    reg::FitResult fit;
    /// Static intensity coefficient (triple interaction) reported alongside.
    double intensity = 0.0;
    double intensity_se = 0.0;
    std::size_t index(int rel_time) const;
};

/**
 * Binary-onset event study: one dummy per relative period G_i + r except
 * r = -1, with city and year fixed effects and two-way clustering. When no
 * city is never treated the earliest lead is dropped as well.
 * @throws Error NoTreatedUnits
 */
EventStudy ddd_dynamic(const DidData& data);

/// Joint Wald test that all estimated leads (r <= -2) are zero.
reg::WaldResult pretrend_test(const EventStudy& event);

struct TwfeResult {
    reg::FitResult fit;
    double beta = 0.0;
    double se = 0.0;
    double p_value = 1.0;
};

/// Y on the onset indicator D_it with city and year FE and two-way clustering.
TwfeResult twfe(const DidData& data);

// --------------------------------------------------------- staggered adoption

struct AttGt {
    int cohort = 0;
    int time = 0;
    double estimate = 0.0;
    double se = 0.0;
    int n_treated = 0;
    int n_control = 0;
};

struct Aggregate {
    int key = 0;  // cohort year, event time or horizon
    double estimate = 0.0;
    double se = 0.0;
    double weight = 0.0;
    double percent() const { return percent_effect(estimate); }
};

struct AttResult {
    std::string estimator;
    ControlGroup control = ControlGroup::NeverTreated;
    std::vector<AttGt> cells;
    std::vector<Aggregate> by_cohort;
    std::vector<Aggregate> by_event;
    std::vector<Aggregate> placebo;  // switcher estimator only
    Aggregate overall;
    int n_switchers = 0;
    int bootstrap_reps = 0;
    std::vector<std::string> flags;
};

struct CsOptions {
    ControlGroup control = ControlGroup::NeverTreated;
    BootstrapOptions bootstrap;
};

/**
 * @brief Group-time effects by the sample analogue of the cohort contrast.
 *
 * lambda(g,t) compares Y_t - Y_{g-1} between cohort g and the control group
 * for every t != g-1. Aggregations weight cells by the number of treated
 * cities. Standard errors come from a city-level bootstrap.
 * @throws Error EmptyControl
 */
AttResult cs_att(const DidData& data, const CsOptions& options = {});

/// Propensity-weighted contrast; propensities from a logit on covariates at
/// g-1, trimmed to [0.01, 0.99]. Errors: Separation.
AttResult ipw_did(const DidData& data, const CsOptions& options = {});

/// IPW augmented with an outcome regression fitted on the control group.
AttResult dr_did(const DidData& data, const CsOptions& options = {});

struct ImputationOptions {
    BootstrapOptions bootstrap;
    double tol = 1e-13;
    int max_sweeps = 100000;
};

/**
 * Fits city and year effects (plus covariates) on untreated cells only and
 * imputes Y(0) for treated cells. Treated cells whose city or year has no
 * untreated observation are dropped and flagged.
 * @throws Error UnidentifiedFE when no treated cell can be imputed
 */
AttResult imputation_att(const DidData& data, const ImputationOptions& options = {});

struct SwitcherOptions {
    int horizon = 5;
    int placebos = 1;
    BootstrapOptions bootstrap;
};

/**
 * Effects of switching at g, l periods later, against cities not yet treated
 * at g+l; cohorts weighted by size. Placebo l compares Y_{g-1-l} - Y_{g-1}.
 * overall holds the l = 0 effect.
 * @throws Error NoSwitchers
 */
AttResult switcher_did(const DidData& data, const SwitcherOptions& options = {});

/// Long-format rows (cohort, time, estimate, se) for CSV output.
std::vector<AttGt> long_format(const AttResult& result);

// ------------------------------------------------------------------- helpers

struct TwoWayFit {
    Eigen::VectorXd unit;  // NaN where unidentified
    Eigen::VectorXd time;  // NaN where unidentified
    Eigen::VectorXd beta;  // covariate coefficients
    std::vector<std::string> beta_names;
    int sweeps = 0;
    bool converged = false;
};

/**
 * Least-squares fit of Y = unit + time (+ X beta) over the cells with
 * mask(i,t) true, by alternating projections. `covariates` may be empty;
 * degenerate covariate columns are dropped.
 */
TwoWayFit fit_two_way(const Eigen::MatrixXd& y, const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask,
                      const panel::Covariates& covariates, double tol = 1e-13, int max_sweeps = 100000);

using PointFn = std::function<AttResult(const DidData&)>;

/// Fills every se field of `point` with the bootstrap standard deviation.
/// Replicates where a quantity is undefined are skipped.
void bootstrap_se(AttResult& point, const DidData& data, const PointFn& fn, const BootstrapOptions& options);

}  // namespace hp::did
