#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "histpanel/did.hpp"
#include "histpanel/error.hpp"

namespace hp::did {

namespace {

constexpr const char* kModule = "did";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Index = std::vector<std::size_t>;

struct CellContext {
    const DidData& data;
    const Index& treated;
    const Index& control;
    std::size_t base;
    std::size_t time;
    std::vector<std::string>& flags;
};

using CellFn = std::function<double(const CellContext&)>;

double mean_change(const DidData& d, const Index& rows, std::size_t base, std::size_t t) {
    double s = 0.0;
    for (auto i : rows) s += d.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) -
                              d.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(base));
    return s / static_cast<double>(rows.size());
}

Index control_rows(const DidData& d, ControlGroup control, int g, std::size_t t) {
    Index rows;
    const int horizon = std::max(d.years[t], g - 1);
    for (std::size_t i = 0; i < d.n_cities(); ++i) {
        const int c = d.cohort[i];
        if (panel::never_treated(c)) {
            rows.push_back(i);
        } else if (control == ControlGroup::NotYetTreated && c != g && c > horizon) {
            rows.push_back(i);
        }
    }
    return rows;
}

void aggregate(AttResult& r, const DidData& d, const std::vector<int>& cohorts) {
    std::map<int, double> n_g;
    for (const auto& c : r.cells) n_g[c.cohort] = std::max(n_g[c.cohort], static_cast<double>(c.n_treated));
    double total_n = 0.0;
    for (int g : cohorts) total_n += n_g[g];

    double num = 0.0, den = 0.0;
    std::map<int, std::pair<double, double>> by_event;
    std::map<int, std::pair<double, double>> by_cohort;
    for (int g : cohorts) by_cohort[g] = {0.0, 0.0};
    for (const auto& c : r.cells) {
        const int e = static_cast<int>(d.year_index(c.time)) - static_cast<int>(d.year_index(c.cohort));
        auto& ev = by_event[e];
        if (!std::isfinite(c.estimate) || c.n_treated == 0) continue;
        ev.first += c.n_treated * c.estimate;
        ev.second += c.n_treated;
        if (e >= 0) {
            num += c.n_treated * c.estimate;
            den += c.n_treated;
            by_cohort[c.cohort].first += c.n_treated * c.estimate;
            by_cohort[c.cohort].second += c.n_treated;
        }
    }
    r.by_cohort.clear();
    for (int g : cohorts) {
        const auto& [s, w] = by_cohort[g];
        r.by_cohort.push_back({g, w > 0 ? s / w : kNaN, 0.0, total_n > 0 ? n_g[g] / total_n : kNaN});
    }
    r.by_event.clear();
    for (const auto& [e, sw] : by_event) r.by_event.push_back({e, sw.second > 0 ? sw.first / sw.second : kNaN, 0.0, sw.second});
    r.overall = {0, den > 0 ? num / den : kNaN, 0.0, den};
}

std::vector<int> fixed_cohorts(const DidData& d, std::vector<std::string>& flags) {
    std::vector<int> out;
    for (int g : d.cohorts()) {
        if (d.year_index(g) == 0) {
            flags.push_back("cohort_without_base:" + std::to_string(g));
            continue;
        }
        out.push_back(g);
    }
    return out;
}

AttResult group_time(const DidData& d, const std::vector<int>& cohorts, ControlGroup control, bool strict,
                     const std::string& name, const CellFn& cell) {
    AttResult r;
    r.estimator = name;
    r.control = control;
    for (int g : cohorts) {
        Index treated;
        for (std::size_t i = 0; i < d.n_cities(); ++i)
            if (d.cohort[i] == g) treated.push_back(i);
        const std::size_t base = d.year_index(g) - 1;
        for (std::size_t t = 0; t < d.n_years(); ++t) {
            if (t == base) continue;
            const Index ctrl = control_rows(d, control, g, t);
            AttGt c;
            c.cohort = g;
            c.time = d.years[t];
            c.n_treated = static_cast<int>(treated.size());
            c.n_control = static_cast<int>(ctrl.size());
            if (ctrl.empty() && strict && !treated.empty())
                throw_estimator(kModule, "EmptyControl",
                                "no control cities for cohort " + std::to_string(g) + " at " + std::to_string(d.years[t]));
            c.estimate = (treated.empty() || ctrl.empty()) ? kNaN : cell({d, treated, ctrl, base, t, r.flags});
            r.cells.push_back(c);
        }
    }
    aggregate(r, d, cohorts);
    return r;
}

void mark_singletons(AttResult& r) {
    std::map<int, int> sizes;
    for (const auto& c : r.cells) sizes[c.cohort] = c.n_treated;
    for (const auto& [g, n] : sizes) {
        if (n != 1) continue;
        r.flags.push_back("SingletonCohort:" + std::to_string(g));
        for (auto& c : r.cells)
            if (c.cohort == g) c.se = kNaN;
        for (auto& a : r.by_cohort)
            if (a.key == g) a.se = kNaN;
    }
}

// Design [1, X] at the base year over treated then control rows, keeping only
// covariate columns with variation that are not spanned by earlier ones.
Eigen::MatrixXd base_design(const CellContext& c) {
    const auto n = static_cast<Eigen::Index>(c.treated.size() + c.control.size());
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(n, 1);
    if (c.data.covariates.empty()) return x;
    const auto& xb = c.data.covariates.by_year[c.base];
    Eigen::MatrixXd basis = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
    for (Eigen::Index j = 0; j < xb.cols(); ++j) {
        Eigen::VectorXd col(n);
        Eigen::Index r = 0;
        for (auto i : c.treated) col(r++) = xb(static_cast<Eigen::Index>(i), j);
        for (auto i : c.control) col(r++) = xb(static_cast<Eigen::Index>(i), j);
        Eigen::VectorXd v = col;
        for (int pass = 0; pass < 2; ++pass) v -= basis * (basis.transpose() * v);
        if (v.norm() <= 1e-9 * std::max(1.0, col.norm())) continue;
        basis.conservativeResize(n, basis.cols() + 1);
        basis.col(basis.cols() - 1) = v / v.norm();
        x.conservativeResize(n, x.cols() + 1);
        x.col(x.cols() - 1) = col;
    }
    return x;
}

Eigen::VectorXd changes(const CellContext& c) {
    Eigen::VectorXd dy(static_cast<Eigen::Index>(c.treated.size() + c.control.size()));
    Eigen::Index r = 0;
    auto change = [&](std::size_t i) {
        return c.data.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c.time)) -
               c.data.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c.base));
    };
    for (auto i : c.treated) dy(r++) = change(i);
    for (auto i : c.control) dy(r++) = change(i);
    return dy;
}

// Control odds weights p/(1-p) from a logit of treatment on the base design.
Eigen::VectorXd odds_weights(const CellContext& c, const Eigen::MatrixXd& x) {
    const auto n1 = static_cast<Eigen::Index>(c.treated.size());
    const auto n0 = static_cast<Eigen::Index>(c.control.size());
    if (x.cols() == 1) return Eigen::VectorXd::Ones(n0);
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n1 + n0);
    d.head(n1).setOnes();
    const auto fit = reg::logit_fit(d, x);
    Eigen::VectorXd w(n0);
    int trimmed = 0;
    for (Eigen::Index r = 0; r < n0; ++r) {
        double p = fit.fitted(n1 + r);
        if (p < 0.01 || p > 0.99) {
            ++trimmed;
            p = std::clamp(p, 0.01, 0.99);
        }
        w(r) = p / (1.0 - p);
    }
    for (Eigen::Index r = 0; r < n1; ++r)
        if (fit.fitted(r) < 0.01 || fit.fitted(r) > 0.99) ++trimmed;
    if (trimmed > 0) c.flags.push_back("ExtremePropensity:" + std::to_string(trimmed));
    return w;
}

double ipw_cell(const CellContext& c) {
    const Eigen::MatrixXd x = base_design(c);
    const Eigen::VectorXd dy = changes(c);
    const auto n1 = static_cast<Eigen::Index>(c.treated.size());
    const auto n0 = static_cast<Eigen::Index>(c.control.size());
    const Eigen::VectorXd w = odds_weights(c, x);
    return dy.head(n1).mean() - w.dot(dy.tail(n0)) / w.sum();
}

double dr_cell(const CellContext& c) {
    const Eigen::MatrixXd x = base_design(c);
    const Eigen::VectorXd dy = changes(c);
    const auto n1 = static_cast<Eigen::Index>(c.treated.size());
    const auto n0 = static_cast<Eigen::Index>(c.control.size());
    const Eigen::MatrixXd x0 = x.bottomRows(n0);
    if (n0 <= x.cols()) throw_estimator(kModule, "RankDeficient", "too few controls for the outcome regression");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x0);
    if (qr.rank() < x0.cols()) throw_estimator(kModule, "RankDeficient", "control covariates are collinear");
    const Eigen::VectorXd beta = qr.solve(dy.tail(n0));
    const Eigen::VectorXd resid = dy - x * beta;
    const Eigen::VectorXd w = odds_weights(c, x);
    return resid.head(n1).mean() - w.dot(resid.tail(n0)) / w.sum();
}

AttResult cs_point(const DidData& d, const std::vector<int>& cohorts, ControlGroup control, bool strict) {
    return group_time(d, cohorts, control, strict, "cs", [](const CellContext& c) {
        return mean_change(c.data, c.treated, c.base, c.time) - mean_change(c.data, c.control, c.base, c.time);
    });
}

AttResult run_with_bootstrap(const DidData& data, const BootstrapOptions& boot,
                             const std::function<AttResult(const DidData&, bool)>& point) {
    AttResult r = point(data, true);
    bootstrap_se(r, data, [&](const DidData& b) { return point(b, false); }, boot);
    mark_singletons(r);
    return r;
}

void dedupe_flags(AttResult& r) {
    std::sort(r.flags.begin(), r.flags.end());
    r.flags.erase(std::unique(r.flags.begin(), r.flags.end()), r.flags.end());
}

void require_treated(const std::vector<int>& cohorts) {
    if (cohorts.empty()) throw_estimator(kModule, "NoTreatedUnits", "no adoption cohort with a pre-period");
}

}  // namespace

AttResult cs_att(const DidData& data, const CsOptions& options) {
    std::vector<std::string> flags;
    const auto cohorts = fixed_cohorts(data, flags);
    require_treated(cohorts);
    auto r = run_with_bootstrap(data, options.bootstrap, [&](const DidData& d, bool strict) {
        return cs_point(d, cohorts, options.control, strict);
    });
    r.flags.insert(r.flags.end(), flags.begin(), flags.end());
    dedupe_flags(r);
    return r;
}

AttResult ipw_did(const DidData& data, const CsOptions& options) {
    std::vector<std::string> flags;
    const auto cohorts = fixed_cohorts(data, flags);
    require_treated(cohorts);
    auto r = run_with_bootstrap(data, options.bootstrap, [&](const DidData& d, bool strict) {
        return group_time(d, cohorts, options.control, strict, "ipw", ipw_cell);
    });
    r.flags.insert(r.flags.end(), flags.begin(), flags.end());
    dedupe_flags(r);
    return r;
}

AttResult dr_did(const DidData& data, const CsOptions& options) {
    std::vector<std::string> flags;
    const auto cohorts = fixed_cohorts(data, flags);
    require_treated(cohorts);
    auto r = run_with_bootstrap(data, options.bootstrap, [&](const DidData& d, bool strict) {
        return group_time(d, cohorts, options.control, strict, "dr", dr_cell);
    });
    r.flags.insert(r.flags.end(), flags.begin(), flags.end());
    dedupe_flags(r);
    return r;
}

AttResult imputation_att(const DidData& data, const ImputationOptions& options) {
    const auto cohorts = data.cohorts();
    if (cohorts.empty()) throw_estimator(kModule, "NoTreatedUnits", "no city is ever treated");
    auto point = [&](const DidData& d, bool strict) {
        const auto n = static_cast<Eigen::Index>(d.n_cities());
        const auto t = static_cast<Eigen::Index>(d.n_years());
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(n, t);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index s = 0; s < t; ++s)
                mask(i, s) = d.untreated(static_cast<std::size_t>(i), static_cast<std::size_t>(s));
        const auto fe = fit_two_way(d.y, mask, d.covariates, options.tol, options.max_sweeps);

        AttResult r;
        r.estimator = "imputation";
        if (!fe.converged) r.flags.emplace_back("fixed_effects_not_converged");
        std::vector<std::string> unidentified;
        for (int g : cohorts) {
            const std::size_t gi = d.year_index(g);
            for (std::size_t s = gi; s < d.n_years(); ++s) {
                AttGt c;
                c.cohort = g;
                c.time = d.years[s];
                double sum = 0.0;
                for (std::size_t i = 0; i < d.n_cities(); ++i) {
                    if (d.cohort[i] != g) continue;
                    const auto ii = static_cast<Eigen::Index>(i);
                    const auto ss = static_cast<Eigen::Index>(s);
                    if (!std::isfinite(fe.unit(ii))) {
                        unidentified.push_back("UnidentifiedFE(city:" + d.city_ids[i] + ")");
                        continue;
                    }
                    if (!std::isfinite(fe.time(ss))) {
                        unidentified.push_back("UnidentifiedFE(year:" + std::to_string(d.years[s]) + ")");
                        continue;
                    }
                    double y0 = fe.unit(ii) + fe.time(ss);
                    if (fe.beta.size() > 0) y0 += d.covariates.by_year[s].row(ii).dot(fe.beta);
                    sum += d.y(ii, ss) - y0;
                    ++c.n_treated;
                }
                c.estimate = c.n_treated > 0 ? sum / c.n_treated : kNaN;
                r.cells.push_back(c);
            }
        }
        aggregate(r, d, cohorts);
        if (strict && !std::isfinite(r.overall.estimate))
            throw_estimator(kModule, "UnidentifiedFE", "no treated cell has identified fixed effects");
        r.flags.insert(r.flags.end(), unidentified.begin(), unidentified.end());
        dedupe_flags(r);
        return r;
    };
    auto r = run_with_bootstrap(data, options.bootstrap, point);
    dedupe_flags(r);
    return r;
}

AttResult switcher_did(const DidData& data, const SwitcherOptions& options) {
    if (options.horizon < 0 || options.placebos < 0)
        throw_config(kModule, "BadHorizon", "horizon and placebo counts must be non-negative");
    std::vector<std::string> flags;
    const auto cohorts = fixed_cohorts(data, flags);
    if (cohorts.empty()) throw_estimator(kModule, "NoSwitchers", "NoSwitchers(0): no city switches into treatment");

    // Horizons actually reachable on the grid; fixed so replicates align.
    int max_l = -1;
    for (int l = 0; l <= options.horizon; ++l) {
        bool any = false;
        for (int g : cohorts) {
            const std::size_t gi = data.year_index(g);
            if (gi + static_cast<std::size_t>(l) >= data.n_years()) continue;
            const int target = data.years[gi + static_cast<std::size_t>(l)];
            for (std::size_t i = 0; i < data.n_cities(); ++i) any = any || data.cohort[i] > target;
        }
        if (!any) {
            if (l == 0) throw_estimator(kModule, "NoSwitchers", "NoSwitchers(0): no comparison cities at the switch");
            flags.push_back("NoSwitchers(" + std::to_string(l) + ")");
            break;
        }
        max_l = l;
    }

    auto point = [&](const DidData& d, bool strict) {
        AttResult r;
        r.estimator = "switcher";
        r.control = ControlGroup::NotYetTreated;
        auto contrast = [&](int g, std::size_t from, std::size_t to, int ctrl_after, int& n_sw, double& value) {
            Index sw, ctrl;
            for (std::size_t i = 0; i < d.n_cities(); ++i) {
                if (d.cohort[i] == g) sw.push_back(i);
                else if (d.cohort[i] > ctrl_after) ctrl.push_back(i);
            }
            n_sw = static_cast<int>(sw.size());
            if (sw.empty() || ctrl.empty()) {
                value = kNaN;
                return;
            }
            value = mean_change(d, sw, from, to) - mean_change(d, ctrl, from, to);
        };
        for (int l = 0; l <= max_l; ++l) {
            double num = 0.0, den = 0.0;
            for (int g : cohorts) {
                const std::size_t gi = d.year_index(g);
                const std::size_t target = gi + static_cast<std::size_t>(l);
                if (target >= d.n_years()) continue;
                int n_sw = 0;
                double v = kNaN;
                contrast(g, gi - 1, target, d.years[target], n_sw, v);
                AttGt c;
                c.cohort = g;
                c.time = d.years[target];
                c.estimate = v;
                c.n_treated = n_sw;
                r.cells.push_back(c);
                if (std::isfinite(v)) {
                    num += n_sw * v;
                    den += n_sw;
                }
            }
            r.by_event.push_back({l, den > 0 ? num / den : kNaN, 0.0, den});
            if (l == 0) r.n_switchers = static_cast<int>(den);
        }
        for (int l = 1; l <= options.placebos; ++l) {
            double num = 0.0, den = 0.0;
            for (int g : cohorts) {
                const std::size_t gi = d.year_index(g);
                if (gi < 1 + static_cast<std::size_t>(l)) continue;
                int n_sw = 0;
                double v = kNaN;
                contrast(g, gi - 1, gi - 1 - static_cast<std::size_t>(l), g, n_sw, v);
                if (std::isfinite(v)) {
                    num += n_sw * v;
                    den += n_sw;
                }
            }
            r.placebo.push_back({l, den > 0 ? num / den : kNaN, 0.0, den});
        }
        r.overall = r.by_event.front();
        if (strict && !std::isfinite(r.overall.estimate))
            throw_estimator(kModule, "NoSwitchers", "NoSwitchers(0): no usable switcher contrast");
        return r;
    };
    auto r = run_with_bootstrap(data, options.bootstrap, point);
    for (const auto& p : r.placebo)
        if (!std::isfinite(p.estimate)) r.flags.push_back("placebo_unavailable:" + std::to_string(p.key));
    r.flags.insert(r.flags.end(), flags.begin(), flags.end());
    dedupe_flags(r);
    return r;
}

}  // namespace hp::did
