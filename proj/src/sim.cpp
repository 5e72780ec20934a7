#include "histpanel/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "histpanel/error.hpp"
#include "histpanel/rng.hpp"

namespace hp::sim {

namespace {

constexpr const char* kModule = "sim";

}  // namespace

void SimulationConfig::validate() const {
    auto bad = [](const std::string& msg) { throw_config(kModule, "InvalidConfig", msg); };
    if (n_cities < 2) bad("n_cities must be at least 2");
    if (n_years < 2) bad("n_years must be at least 2");
    if (factors < 0) bad("factors must be non-negative");
    if (sigma < 0 || unit_sd < 0 || time_sd < 0 || loading_sd < 0 || factor_sd < 0 || x_noise < 0)
        bad("standard deviations must be non-negative");
    const int last = first_year + panel::YearGrid::kStep * (n_years - 1);
    double total = 0.0;
    for (const auto& c : cohorts) {
        if (c.share < 0) bad("cohort shares must be non-negative");
        if (c.year <= t0 || c.year > last || (c.year - first_year) % panel::YearGrid::kStep != 0)
            bad("cohort " + std::to_string(c.year) + " must be a grid year after t0");
        if (c.year == first_year) bad("cohorts need a pre-period");
        total += c.share;
    }
    if (total > 1.0 + 1e-12) bad("cohort shares sum above 1");
}

SimulatedPanel simulate_panel(const SimulationConfig& config) {
    config.validate();
    const int n = config.n_cities;
    const int t_count = config.n_years;
    const int r = config.factors;
    Rng rng(config.seed);

    SimulationTruth truth;
    truth.config = config;
    const panel::YearGrid grid{config.first_year, t_count};
    truth.years = grid.years();

    // Draw order is part of the contract: unit effects, x, loadings, time
    // effects, factors, selection noise, cohort order, coordinates, noise.
    truth.unit_fe.resize(n);
    for (int i = 0; i < n; ++i) truth.unit_fe(i) = rng.normal(0.0, config.unit_sd);
    Eigen::VectorXd x_base(n);
    for (int i = 0; i < n; ++i) x_base(i) = rng.normal();
    truth.loadings.resize(n, r);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < r; ++k) truth.loadings(i, k) = rng.normal(0.0, config.loading_sd);
    truth.time_fe.resize(t_count);
    for (int t = 0; t < t_count; ++t) truth.time_fe(t) = rng.normal(0.0, config.time_sd);
    truth.factors.resize(t_count, r);
    for (int t = 0; t < t_count; ++t)
        for (int k = 0; k < r; ++k) truth.factors(t, k) = rng.normal(0.0, config.factor_sd);

    std::vector<double> score(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        score[static_cast<std::size_t>(i)] = rng.normal() + config.select_on_x * x_base(i) +
                                             (r > 0 ? config.select_on_loading * truth.loadings(i, 0) : 0.0);
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)]; });
    std::vector<int> slots;
    for (const auto& c : config.cohorts) {
        const auto count = static_cast<int>(std::floor(c.share * n + 1e-9));
        for (int k = 0; k < count && static_cast<int>(slots.size()) < n; ++k) slots.push_back(c.year);
    }
    // Shuffle cohort labels among the selected cities.
    for (std::size_t k = slots.size(); k > 1; --k) std::swap(slots[k - 1], slots[rng.below(k)]);
    truth.cohort.assign(static_cast<std::size_t>(n), panel::kNeverTreated);
    for (std::size_t k = 0; k < slots.size(); ++k) truth.cohort[static_cast<std::size_t>(order[k])] = slots[k];
    if (r > 0 && config.loading_shift != 0.0)
        for (int i = 0; i < n; ++i)
            if (!panel::never_treated(truth.cohort[static_cast<std::size_t>(i)])) truth.loadings(i, 0) += config.loading_shift;

    std::vector<panel::CityRecord> records;
    for (int i = 0; i < n; ++i) {
        panel::CityRecord c;
        const bool treated = !panel::never_treated(truth.cohort[static_cast<std::size_t>(i)]);
        c.city_id = "C" + std::to_string(1000 + i);
        c.name = "City " + std::to_string(i + 1);
        c.region = treated ? panel::Region::NorthAfrica : panel::Region::WesternEurope;
        c.latitude = treated ? 28.0 + 8.0 * rng.uniform() : 40.0 + 15.0 * rng.uniform();
        c.longitude = treated ? -8.0 + 38.0 * rng.uniform() : -5.0 + 25.0 * rng.uniform();
        c.islamic_rule.assign(static_cast<std::size_t>(t_count), treated);
        records.push_back(std::move(c));
    }

    truth.x.resize(n, t_count);
    truth.tau = Eigen::MatrixXd::Zero(n, t_count);
    truth.y0.resize(n, t_count);
    Eigen::MatrixXd y(n, t_count);
    std::vector<panel::PanelObservation> obs;
    panel::InstitutionPanel inst{Eigen::MatrixXd::Zero(n, t_count), Eigen::MatrixXd::Zero(n, t_count),
                                 Eigen::MatrixXd::Zero(n, t_count)};
    for (int i = 0; i < n; ++i) {
        const int g = truth.cohort[static_cast<std::size_t>(i)];
        for (int t = 0; t < t_count; ++t) {
            const double x = x_base(i) + (config.x_noise > 0 ? rng.normal(0.0, config.x_noise) : 0.0);
            truth.x(i, t) = x;
            double level = config.intercept + truth.unit_fe(i) + truth.time_fe(t) + config.x_effect * x +
                           config.x_trend * x_base(i) * t;
            for (int k = 0; k < r; ++k) level += truth.loadings(i, k) * truth.factors(t, k);
            const double noise = config.sigma > 0 ? config.sigma * rng.normal() : 0.0;
            truth.y0(i, t) = level + noise;
            const int year = truth.years[static_cast<std::size_t>(t)];
            if (year >= g) {
                const double periods = (year - g) / static_cast<double>(panel::YearGrid::kStep);
                truth.tau(i, t) = config.tau + config.tau_slope * periods;
                inst.madrasa_count(i, t) = 1.0;
            }
            y(i, t) = truth.y0(i, t) + truth.tau(i, t);
            panel::PanelObservation o;
            o.city_id = records[static_cast<std::size_t>(i)].city_id;
            o.year = year;
            o.population = std::exp(y(i, t));
            o.covariates.foreign_urban_potential = x;
            obs.push_back(o);
        }
    }

    auto built = panel::build_panel(records, obs, grid);
    // Work on the exact log of the stored populations so estimators fed from
    // the panel and from `y` see the same numbers.
    y = panel::transform_outcome(built, panel::OutcomeTransform::Log);
    auto schedule = panel::schedule_from_cohorts(truth.years, truth.cohort, config.t0);
    return SimulatedPanel{std::move(built), std::move(inst), std::move(schedule), std::move(y), std::move(truth)};
}

std::vector<OracleCell> brute_force_att(const std::vector<std::vector<double>>& y, const std::vector<int>& years,
                                        const std::vector<int>& cohort,
                                        const std::vector<std::vector<double>>* tau) {
    std::vector<int> cohorts;
    for (int g : cohort)
        if (g != panel::kNeverTreated && std::find(cohorts.begin(), cohorts.end(), g) == cohorts.end()) cohorts.push_back(g);
    std::sort(cohorts.begin(), cohorts.end());
    std::vector<OracleCell> out;
    for (int g : cohorts) {
        std::size_t gi = 0;
        while (gi < years.size() && years[gi] != g) ++gi;
        if (gi == 0 || gi == years.size()) continue;
        const std::size_t base = gi - 1;
        for (std::size_t t = 0; t < years.size(); ++t) {
            if (t == base) continue;
            double treated_sum = 0.0, control_sum = 0.0, tau_sum = 0.0;
            int treated_n = 0, control_n = 0;
            for (std::size_t i = 0; i < y.size(); ++i) {
                const double change = y[i][t] - y[i][base];
                if (cohort[i] == g) {
                    treated_sum += change;
                    if (tau != nullptr) tau_sum += (*tau)[i][t];
                    ++treated_n;
                } else if (cohort[i] == panel::kNeverTreated) {
                    control_sum += change;
                    ++control_n;
                }
            }
            if (control_n == 0) continue;
            OracleCell c;
            c.cohort = g;
            c.time = years[t];
            c.estimate = treated_sum / treated_n - control_sum / control_n;
            c.truth = tau_sum / treated_n;
            out.push_back(c);
        }
    }
    return out;
}

std::vector<OracleCell> brute_force_att(const SimulatedPanel& sim) {
    const auto n = static_cast<std::size_t>(sim.y.rows());
    const auto t = static_cast<std::size_t>(sim.y.cols());
    std::vector<std::vector<double>> y(n, std::vector<double>(t)), tau(n, std::vector<double>(t));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < t; ++s) {
            y[i][s] = sim.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s));
            tau[i][s] = sim.truth.tau(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s));
        }
    return brute_force_att(y, sim.truth.years, sim.truth.cohort, &tau);
}

}  // namespace hp::sim
