#include <algorithm>
#include <cmath>
#include <limits>

#include "histpanel/did.hpp"
#include "histpanel/error.hpp"
#include "histpanel/rng.hpp"

namespace hp::did {

namespace {

constexpr const char* kModule = "did";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> flatten(const AttResult& r) {
    std::vector<double> v;
    for (const auto& c : r.cells) v.push_back(c.estimate);
    for (const auto& a : r.by_cohort) v.push_back(a.estimate);
    for (const auto& a : r.by_event) v.push_back(a.estimate);
    for (const auto& a : r.placebo) v.push_back(a.estimate);
    v.push_back(r.overall.estimate);
    return v;
}

void assign_se(AttResult& r, const std::vector<double>& se) {
    std::size_t k = 0;
    for (auto& c : r.cells) c.se = se[k++];
    for (auto& a : r.by_cohort) a.se = se[k++];
    for (auto& a : r.by_event) a.se = se[k++];
    for (auto& a : r.placebo) a.se = se[k++];
    r.overall.se = se[k];
}

}  // namespace

std::size_t DidData::year_index(int year) const {
    const auto it = std::find(years.begin(), years.end(), year);
    if (it == years.end()) throw_config(kModule, "YearOffGrid", "year " + std::to_string(year) + " is not on the grid");
    return static_cast<std::size_t>(it - years.begin());
}

std::vector<int> DidData::cohorts() const {
    std::vector<int> out;
    for (int g : cohort)
        if (!panel::never_treated(g)) out.push_back(g);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

DidData make_did_data(Eigen::MatrixXd y, const panel::TreatmentSchedule& schedule, panel::Covariates covariates) {
    const auto n = static_cast<Eigen::Index>(schedule.n_cities());
    const auto t = static_cast<Eigen::Index>(schedule.years.size());
    if (y.rows() != n || y.cols() != t)
        throw_config(kModule, "ShapeMismatch", "outcome matrix does not match the treatment schedule");
    if (!y.allFinite()) throw_data(kModule, "NonFinite", "outcome contains non-finite values");
    if (!covariates.empty() && static_cast<Eigen::Index>(covariates.by_year.size()) != t)
        throw_config(kModule, "ShapeMismatch", "covariates do not match the year grid");
    DidData d;
    d.y = std::move(y);
    d.years = schedule.years;
    d.cohort = schedule.cohort;
    d.group = schedule.group;
    d.exposure = schedule.intensity;
    d.t0 = schedule.t0;
    d.covariates = std::move(covariates);
    for (Eigen::Index i = 0; i < n; ++i) d.city_ids.push_back("city" + std::to_string(i + 1));
    return d;
}

DidData make_did_data(const panel::BalancedPanel& panel, const panel::TreatmentSchedule& schedule,
                      panel::OutcomeTransform transform, bool with_covariates) {
    panel::Covariates cov;
    if (with_covariates) {
        const auto all = panel::covariate_panel(panel);
        std::vector<Eigen::Index> keep;
        for (std::size_t j = 0; j < all.size(); ++j) {
            const double ref = all.by_year[0](0, static_cast<Eigen::Index>(j));
            bool varies = false;
            for (const auto& m : all.by_year)
                varies = varies || (m.col(static_cast<Eigen::Index>(j)).array() != ref).any();
            if (varies) keep.push_back(static_cast<Eigen::Index>(j));
        }
        for (auto j : keep) cov.names.push_back(all.names[static_cast<std::size_t>(j)]);
        for (const auto& m : all.by_year) cov.by_year.push_back(m(Eigen::all, keep));
        if (cov.names.empty()) cov.by_year.clear();
    }
    auto d = make_did_data(panel::transform_outcome(panel, transform), schedule, std::move(cov));
    for (std::size_t i = 0; i < panel.n_cities(); ++i) d.city_ids[i] = panel.cities()[i].city_id;
    return d;
}

DidData resample(const DidData& data, const std::vector<std::size_t>& rows) {
    DidData d;
    std::vector<Eigen::Index> idx(rows.begin(), rows.end());
    d.y = data.y(idx, Eigen::all);
    d.years = data.years;
    d.group = data.group(idx, Eigen::all);
    d.exposure = data.exposure(idx, Eigen::all);
    d.t0 = data.t0;
    d.covariates.names = data.covariates.names;
    for (const auto& m : data.covariates.by_year) d.covariates.by_year.push_back(m(idx, Eigen::all));
    for (auto r : rows) {
        d.cohort.push_back(data.cohort[r]);
        d.city_ids.push_back(data.city_ids[r]);
    }
    return d;
}

std::string_view to_string(ControlGroup control) {
    return control == ControlGroup::NeverTreated ? "never" : "notyet";
}

ControlGroup control_from_string(std::string_view text) {
    if (text == "never") return ControlGroup::NeverTreated;
    if (text == "notyet") return ControlGroup::NotYetTreated;
    throw_config(kModule, "UnknownControl", "control group must be 'never' or 'notyet'");
}

TwoWayFit fit_two_way(const Eigen::MatrixXd& y, const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask,
                      const panel::Covariates& covariates, double tol, int max_sweeps) {
    const Eigen::Index n_units = y.rows();
    const Eigen::Index n_times = y.cols();
    std::vector<int> unit_code;
    std::vector<int> time_code;
    for (Eigen::Index i = 0; i < n_units; ++i)
        for (Eigen::Index t = 0; t < n_times; ++t)
            if (mask(i, t)) {
                unit_code.push_back(static_cast<int>(i));
                time_code.push_back(static_cast<int>(t));
            }
    const auto n = static_cast<Eigen::Index>(unit_code.size());
    TwoWayFit out;
    out.unit = Eigen::VectorXd::Constant(n_units, kNaN);
    out.time = Eigen::VectorXd::Constant(n_times, kNaN);
    if (n == 0) return out;

    Eigen::VectorXd yv(n);
    for (Eigen::Index r = 0; r < n; ++r) yv(r) = y(unit_code[static_cast<std::size_t>(r)], time_code[static_cast<std::size_t>(r)]);
    const double scale = std::max(1.0, yv.cwiseAbs().maxCoeff());

    Eigen::VectorXd resid = yv;
    if (!covariates.empty()) {
        const auto k = static_cast<Eigen::Index>(covariates.size());
        Eigen::MatrixXd stacked(n, k + 1);
        stacked.col(0) = yv;
        for (Eigen::Index r = 0; r < n; ++r)
            stacked.block(r, 1, 1, k) =
                covariates.by_year[static_cast<std::size_t>(time_code[static_cast<std::size_t>(r)])].row(unit_code[static_cast<std::size_t>(r)]);
        std::vector<reg::Factor> absorb;
        absorb.push_back(reg::make_factor("unit", unit_code));
        absorb.push_back(reg::make_factor("time", time_code));
        const auto within = reg::within_transform(stacked, absorb, nullptr, {tol * scale, max_sweeps});
        // Greedy selection of covariates with residual variation.
        std::vector<Eigen::Index> keep;
        Eigen::MatrixXd basis(n, 0);
        for (Eigen::Index j = 0; j < k; ++j) {
            Eigen::VectorXd v = within.data.col(j + 1);
            const double norm0 = stacked.col(j + 1).norm();
            for (int pass = 0; pass < 2 && basis.cols() > 0; ++pass) v -= basis * (basis.transpose() * v);
            if (v.norm() > 1e-9 * std::max(1.0, norm0)) {
                keep.push_back(j);
                basis.conservativeResize(n, basis.cols() + 1);
                basis.col(basis.cols() - 1) = v / v.norm();
            }
        }
        out.beta = Eigen::VectorXd::Zero(k);
        if (!keep.empty()) {
            Eigen::MatrixXd xs(n, static_cast<Eigen::Index>(keep.size()));
            for (std::size_t c = 0; c < keep.size(); ++c) xs.col(static_cast<Eigen::Index>(c)) = within.data.col(keep[c] + 1);
            const Eigen::VectorXd b = xs.colPivHouseholderQr().solve(within.data.col(0));
            for (std::size_t c = 0; c < keep.size(); ++c) out.beta(keep[c]) = b(static_cast<Eigen::Index>(c));
            resid -= stacked.rightCols(k) * out.beta;
        }
        out.beta_names = covariates.names;
    }

    Eigen::VectorXd unit = Eigen::VectorXd::Zero(n_units);
    Eigen::VectorXd time = Eigen::VectorXd::Zero(n_times);
    Eigen::VectorXd unit_n = Eigen::VectorXd::Zero(n_units);
    Eigen::VectorXd time_n = Eigen::VectorXd::Zero(n_times);
    for (Eigen::Index r = 0; r < n; ++r) {
        unit_n(unit_code[static_cast<std::size_t>(r)]) += 1.0;
        time_n(time_code[static_cast<std::size_t>(r)]) += 1.0;
    }
    Eigen::VectorXd sums_u(n_units);
    Eigen::VectorXd sums_t(n_times);
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        sums_u.setZero();
        for (Eigen::Index r = 0; r < n; ++r) sums_u(unit_code[static_cast<std::size_t>(r)]) += resid(r);
        for (Eigen::Index i = 0; i < n_units; ++i) sums_u(i) = unit_n(i) > 0 ? sums_u(i) / unit_n(i) : 0.0;
        for (Eigen::Index r = 0; r < n; ++r) resid(r) -= sums_u(unit_code[static_cast<std::size_t>(r)]);
        unit += sums_u;
        sums_t.setZero();
        for (Eigen::Index r = 0; r < n; ++r) sums_t(time_code[static_cast<std::size_t>(r)]) += resid(r);
        for (Eigen::Index t = 0; t < n_times; ++t) sums_t(t) = time_n(t) > 0 ? sums_t(t) / time_n(t) : 0.0;
        for (Eigen::Index r = 0; r < n; ++r) resid(r) -= sums_t(time_code[static_cast<std::size_t>(r)]);
        time += sums_t;
        out.sweeps = sweep;
        const double change = std::max(sums_u.cwiseAbs().maxCoeff(), sums_t.cwiseAbs().maxCoeff());
        if (sweep > 1 && change < tol * scale) {
            out.converged = true;
            break;
        }
    }
    for (Eigen::Index i = 0; i < n_units; ++i) out.unit(i) = unit_n(i) > 0 ? unit(i) : kNaN;
    for (Eigen::Index t = 0; t < n_times; ++t) out.time(t) = time_n(t) > 0 ? time(t) : kNaN;
    return out;
}

void bootstrap_se(AttResult& point, const DidData& data, const PointFn& fn, const BootstrapOptions& options) {
    const auto reference = flatten(point);
    const std::size_t k = reference.size();
    point.bootstrap_reps = options.reps;
    if (options.reps < 2) {
        assign_se(point, std::vector<double>(k, kNaN));
        return;
    }
    const std::size_t n = data.n_cities();
    std::vector<std::vector<double>> draws(static_cast<std::size_t>(options.reps));
    parallel_for(draws.size(), options.threads, [&](std::size_t b) {
        Rng rng(derive_seed(options.seed, b));
        std::vector<std::size_t> rows(n);
        for (auto& r : rows) r = rng.below(n);
        try {
            auto v = flatten(fn(resample(data, rows)));
            if (v.size() != k) v.assign(k, kNaN);
            draws[b] = std::move(v);
        } catch (const Error&) {
            draws[b].assign(k, kNaN);
        }
    });
    std::vector<double> se(k, kNaN);
    bool short_column = false;
    for (std::size_t j = 0; j < k; ++j) {
        double sum = 0.0;
        double sum_sq = 0.0;
        int m = 0;
        for (const auto& d : draws)
            if (std::isfinite(d[j])) {
                sum += d[j];
                ++m;
            }
        if (m < 2) {
            short_column = true;
            continue;
        }
        const double mean = sum / m;
        for (const auto& d : draws)
            if (std::isfinite(d[j])) sum_sq += (d[j] - mean) * (d[j] - mean);
        se[j] = std::sqrt(sum_sq / (m - 1));
    }
    if (short_column) point.flags.emplace_back("bootstrap_se_undefined");
    assign_se(point, se);
}

std::vector<AttGt> long_format(const AttResult& result) {
    std::vector<AttGt> rows = result.cells;
    std::sort(rows.begin(), rows.end(),
              [](const AttGt& a, const AttGt& b) { return a.cohort != b.cohort ? a.cohort < b.cohort : a.time < b.time; });
    return rows;
}

}  // namespace hp::did
