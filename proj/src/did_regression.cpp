#include <algorithm>
#include <cmath>
#include <limits>

#include "histpanel/did.hpp"
#include "histpanel/error.hpp"

namespace hp::did {

namespace {

constexpr const char* kModule = "did";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct LongFrame {
    reg::DataFrame frame;
    std::vector<int> city;
    std::vector<int> year;
};

LongFrame long_frame(const DidData& d) {
    const std::size_t n = d.n_cities();
    const std::size_t t = d.n_years();
    LongFrame out{reg::DataFrame(n * t), {}, {}};
    Eigen::VectorXd y(static_cast<Eigen::Index>(n * t));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < t; ++s) {
            y(static_cast<Eigen::Index>(i * t + s)) = d.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s));
            out.city.push_back(static_cast<int>(i));
            out.year.push_back(static_cast<int>(s));
        }
    out.frame.add("y", std::move(y));
    out.frame.add_factor("city", out.city);
    out.frame.add_factor("year", out.year);
    for (std::size_t j = 0; j < d.covariates.size(); ++j) {
        Eigen::VectorXd x(static_cast<Eigen::Index>(n * t));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t s = 0; s < t; ++s)
                x(static_cast<Eigen::Index>(i * t + s)) =
                    d.covariates.by_year[s](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        out.frame.add(d.covariates.names[j], std::move(x));
    }
    return out;
}

// Keeps candidates (in order) that retain variation after absorbing city and
// year effects and are not spanned by earlier kept terms.
std::vector<std::string> select_terms(const reg::DataFrame& frame, const std::vector<std::string>& candidates,
                                      std::vector<std::string>& dropped) {
    const auto n = static_cast<Eigen::Index>(frame.rows());
    Eigen::MatrixXd raw(n, static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t j = 0; j < candidates.size(); ++j) raw.col(static_cast<Eigen::Index>(j)) = frame.column(candidates[j]);
    const std::vector<reg::Factor> absorb{frame.factor("city"), frame.factor("year")};
    const auto within = reg::within_transform(raw, absorb);
    std::vector<std::string> kept;
    Eigen::MatrixXd basis(n, 0);
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        Eigen::VectorXd v = within.data.col(static_cast<Eigen::Index>(j));
        const double norm0 = raw.col(static_cast<Eigen::Index>(j)).norm();
        for (int pass = 0; pass < 2 && basis.cols() > 0; ++pass) v -= basis * (basis.transpose() * v);
        if (v.norm() > 1e-9 * std::max(1.0, norm0)) {
            kept.push_back(candidates[j]);
            basis.conservativeResize(n, basis.cols() + 1);
            basis.col(basis.cols() - 1) = v / v.norm();
        } else {
            dropped.push_back(candidates[j]);
        }
    }
    return kept;
}

reg::FitResult fit_clustered(const reg::DataFrame& frame, std::vector<std::string> regressors) {
    reg::DesignSpec spec;
    spec.outcome = "y";
    spec.regressors = std::move(regressors);
    spec.absorb = {"city", "year"};
    spec.cluster = {"city", "year"};
    return reg::ols_fit(spec, frame);
}

// Nested F test dropping one absorbed dimension; NaN when the restricted fit fails.
double fe_f_test(const reg::DataFrame& frame, const std::vector<std::string>& regressors, const reg::FitResult& full,
                 const std::string& keep) {
    try {
        reg::DesignSpec spec;
        spec.outcome = "y";
        spec.regressors = regressors;
        spec.absorb = {keep};
        const auto restricted = reg::ols_fit(spec, frame);
        const double rss_u = full.residuals.squaredNorm();
        const double rss_r = restricted.residuals.squaredNorm();
        const double q = restricted.dof - full.dof;
        if (q <= 0 || full.dof <= 0) return kNaN;
        if (rss_u <= 0.0) return rss_r > 0.0 ? 0.0 : 1.0;
        return reg::f_survival(((rss_r - rss_u) / q) / (rss_u / full.dof), q, full.dof);
    } catch (const Error&) {
        return kNaN;
    }
}

std::string event_name(int r) { return "event_" + std::to_string(r); }

}  // namespace

DddResult ddd_static(const DidData& data) {
    auto lf = long_frame(data);
    const std::size_t n = data.n_cities();
    const std::size_t t = data.n_years();
    const auto rows = static_cast<Eigen::Index>(n * t);
    Eigen::VectorXd e(rows), g(rows), p(rows);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < t; ++s) {
            const auto r = static_cast<Eigen::Index>(i * t + s);
            e(r) = data.exposure(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s));
            g(r) = data.group(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s));
            p(r) = data.years[s] > data.t0 ? 1.0 : 0.0;
        }
    const Eigen::VectorXd triple = g.cwiseProduct(p).cwiseProduct(e);
    if (triple.cwiseAbs().maxCoeff() == 0.0)
        throw_estimator(kModule, "NoTreatedUnits", "no city has post-break exposure in the treated group");

    DddResult out;
    out.term = "group_x_post_x_exposure";
    lf.frame.add(out.term, triple);
    lf.frame.add("exposure", e);
    lf.frame.add("group", g);
    lf.frame.add("group_x_post", g.cwiseProduct(p));
    lf.frame.add("exposure_x_post", e.cwiseProduct(p));
    lf.frame.add("group_x_exposure", g.cwiseProduct(e));
    std::vector<std::string> candidates{out.term, "exposure", "group", "group_x_post", "exposure_x_post",
                                        "group_x_exposure"};
    for (const auto& name : data.covariates.names) candidates.push_back(name);

    auto kept = select_terms(lf.frame, candidates, out.dropped);
    if (kept.empty() || kept.front() != out.term)
        throw_estimator(kModule, "RankDeficient", "triple interaction is absorbed by the fixed effects");
    out.fit = fit_clustered(lf.frame, kept);
    if (!out.dropped.empty()) out.fit.flags.emplace_back("terms_dropped");
    out.lambda = out.fit.coef(0);
    out.se = out.fit.se(0);
    out.p_value = out.fit.p_value(0);
    out.city_fe_p = fe_f_test(lf.frame, kept, out.fit, "year");
    out.year_fe_p = fe_f_test(lf.frame, kept, out.fit, "city");
    return out;
}

std::size_t EventStudy::index(int rel_time) const {
    const auto it = std::find(rel_times.begin(), rel_times.end(), rel_time);
    if (it == rel_times.end()) throw_config(kModule, "UnknownRelTime", "no relative period " + std::to_string(rel_time));
    return static_cast<std::size_t>(it - rel_times.begin());
}

EventStudy ddd_dynamic(const DidData& data) {
    const std::size_t n = data.n_cities();
    const std::size_t t = data.n_years();
    std::vector<int> onset(n, -1);
    bool any_never = false;
    std::vector<int> rels;
    for (std::size_t i = 0; i < n; ++i) {
        if (panel::never_treated(data.cohort[i])) {
            any_never = true;
            continue;
        }
        onset[i] = static_cast<int>(data.year_index(data.cohort[i]));
        for (std::size_t s = 0; s < t; ++s) rels.push_back(static_cast<int>(s) - onset[i]);
    }
    if (rels.empty()) throw_estimator(kModule, "NoTreatedUnits", "no city is ever treated");
    std::sort(rels.begin(), rels.end());
    rels.erase(std::unique(rels.begin(), rels.end()), rels.end());

    EventStudy out;
    std::vector<int> estimated;
    for (int r : rels)
        if (r != -1) estimated.push_back(r);
    if (!any_never && !estimated.empty() && estimated.front() < -1) {
        out.dropped.push_back(estimated.front());
        estimated.erase(estimated.begin());
    }

    auto lf = long_frame(data);
    std::vector<std::string> candidates;
    for (int r : estimated) {
        Eigen::VectorXd col = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n * t));
        for (std::size_t i = 0; i < n; ++i)
            if (onset[i] >= 0 && onset[i] + r >= 0 && onset[i] + r < static_cast<int>(t))
                col(static_cast<Eigen::Index>(i * t + static_cast<std::size_t>(onset[i] + r))) = 1.0;
        lf.frame.add(event_name(r), std::move(col));
        candidates.push_back(event_name(r));
    }
    for (const auto& name : data.covariates.names) candidates.push_back(name);
    std::vector<std::string> dropped_names;
    const auto kept = select_terms(lf.frame, candidates, dropped_names);
    for (int r : estimated)
        if (std::find(dropped_names.begin(), dropped_names.end(), event_name(r)) != dropped_names.end())
            out.dropped.push_back(r);
    std::sort(out.dropped.begin(), out.dropped.end());
    bool any_event = false;
    for (const auto& k : kept) any_event = any_event || k.rfind("event_", 0) == 0;
    if (!any_event) throw_estimator(kModule, "RankDeficient", "no event-time dummy is identified");
    out.fit = fit_clustered(lf.frame, kept);

    for (int r : rels)
        if (std::find(out.dropped.begin(), out.dropped.end(), r) == out.dropped.end()) out.rel_times.push_back(r);
    const auto m = static_cast<Eigen::Index>(out.rel_times.size());
    out.coef = Eigen::VectorXd::Zero(m);
    out.vcov = Eigen::MatrixXd::Zero(m, m);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> map;  // event slot -> fit slot
    for (Eigen::Index a = 0; a < m; ++a) {
        const int r = out.rel_times[static_cast<std::size_t>(a)];
        if (r == -1) continue;
        map.emplace_back(a, static_cast<Eigen::Index>(out.fit.index(event_name(r))));
    }
    for (const auto& [a, fa] : map) {
        out.coef(a) = out.fit.coef(fa);
        for (const auto& [b, fb] : map) out.vcov(a, b) = out.fit.vcov(fa, fb);
    }
    out.se = out.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();

    try {
        const auto stat = ddd_static(data);
        out.intensity = stat.lambda;
        out.intensity_se = stat.se;
    } catch (const Error&) {
        out.intensity = kNaN;
        out.intensity_se = kNaN;
        out.fit.flags.emplace_back("intensity_unidentified");
    }
    return out;
}

reg::WaldResult pretrend_test(const EventStudy& event) {
    std::vector<Eigen::Index> leads;
    for (std::size_t a = 0; a < event.rel_times.size(); ++a)
        if (event.rel_times[a] <= -2) leads.push_back(static_cast<Eigen::Index>(a));
    if (leads.empty()) throw_config(kModule, "NoLeads", "event study has no lead coefficients");
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(leads.size()), event.coef.size());
    for (std::size_t q = 0; q < leads.size(); ++q) r(static_cast<Eigen::Index>(q), leads[q]) = 1.0;
    return reg::wald_test(event.coef, event.vcov, r, Eigen::VectorXd::Zero(r.rows()));
}

TwfeResult twfe(const DidData& data) {
    auto lf = long_frame(data);
    const std::size_t n = data.n_cities();
    const std::size_t t = data.n_years();
    Eigen::VectorXd dcol(static_cast<Eigen::Index>(n * t));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < t; ++s)
            dcol(static_cast<Eigen::Index>(i * t + s)) = data.untreated(i, s) ? 0.0 : 1.0;
    if (dcol.sum() == 0.0) throw_estimator(kModule, "NoTreatedUnits", "no city is ever treated");
    lf.frame.add("treated", std::move(dcol));
    std::vector<std::string> candidates{"treated"};
    for (const auto& name : data.covariates.names) candidates.push_back(name);
    std::vector<std::string> dropped;
    const auto kept = select_terms(lf.frame, candidates, dropped);
    if (kept.empty() || kept.front() != "treated")
        throw_estimator(kModule, "RankDeficient", "treatment indicator is absorbed by the fixed effects");
    TwfeResult out;
    out.fit = fit_clustered(lf.frame, kept);
    out.beta = out.fit.coef(0);
    out.se = out.fit.se(0);
    out.p_value = out.fit.p_value(0);
    return out;
}

}  // namespace hp::did
