#include "histpanel/gsynth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "histpanel/error.hpp"
#include "histpanel/rng.hpp"

namespace hp::gsynth {

namespace {

constexpr const char* kModule = "gsynth";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Mask untreated_mask(const did::DidData& d) {
    Mask m(static_cast<Eigen::Index>(d.n_cities()), static_cast<Eigen::Index>(d.n_years()));
    for (std::size_t i = 0; i < d.n_cities(); ++i)
        for (std::size_t t = 0; t < d.n_years(); ++t)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = d.untreated(i, t);
    return m;
}

struct AttSummary {
    std::vector<YearAtt> by_year;
    YearAtt overall;
    int dropped = 0;
};

AttSummary summarize(const did::DidData& d, const Eigen::MatrixXd& counterfactual) {
    AttSummary s;
    double total = 0.0;
    int cells = 0;
    for (std::size_t t = 0; t < d.n_years(); ++t) {
        YearAtt ya;
        ya.year = d.years[t];
        double sum = 0.0;
        for (std::size_t i = 0; i < d.n_cities(); ++i) {
            if (d.untreated(i, t)) continue;
            const double cf = counterfactual(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
            if (!std::isfinite(cf)) {
                ++s.dropped;
                continue;
            }
            sum += d.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) - cf;
            ++ya.n_treated;
        }
        if (ya.n_treated == 0) continue;
        ya.att = sum / ya.n_treated;
        total += sum;
        cells += ya.n_treated;
        s.by_year.push_back(ya);
    }
    s.overall.n_treated = cells;
    s.overall.att = cells > 0 ? total / cells : kNaN;
    return s;
}

void orient(Eigen::MatrixXd& factors, Eigen::MatrixXd& loadings) {
    for (Eigen::Index k = 0; k < factors.cols(); ++k) {
        Eigen::Index at = 0;
        factors.col(k).cwiseAbs().maxCoeff(&at);
        if (factors(at, k) < 0) {
            factors.col(k) *= -1.0;
            loadings.col(k) *= -1.0;
        }
    }
}

}  // namespace

FactorModel fit_factor_model(const Eigen::MatrixXd& y, const Mask& observed, int r, const Eigen::MatrixXd* z,
                             const FitOptions& options) {
    const Eigen::Index n = y.rows();
    const Eigen::Index t = y.cols();
    if (observed.rows() != n || observed.cols() != t) throw_config(kModule, "ShapeMismatch", "mask does not match outcomes");
    if (r < 0) throw_config(kModule, "BadRank", "number of factors must be non-negative");
    if (r > 0 && (n <= r || t <= r))
        throw_estimator(kModule, "RankDeficient", "need more units and periods than factors");
    if (z != nullptr && z->rows() != n) throw_config(kModule, "ShapeMismatch", "Z rows do not match units");

    FactorModel m;
    m.r = r;
    const auto fe = did::fit_two_way(y, observed, {}, options.fe_tol, 100000);
    m.unit_effects = fe.unit;
    m.time_effects = fe.time;
    m.factors = Eigen::MatrixXd::Zero(t, r);
    m.loadings = Eigen::MatrixXd::Zero(n, r);
    m.fitted.resize(n, t);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index s = 0; s < t; ++s) m.fitted(i, s) = fe.unit(i) + fe.time(s);

    const bool use_z = z != nullptr && z->cols() > 0;
    if (r == 0 && !use_z) {
        m.iterations = fe.sweeps;
        m.converged = fe.converged;
    } else {
        if (!m.fitted.allFinite())
            throw_estimator(kModule, "RankDeficient", "a unit or period has no observed cells");
        Eigen::MatrixXd zc;
        Eigen::MatrixXd zz_inv;
        if (use_z) {
            zc = z->rowwise() - z->colwise().mean();
            const Eigen::MatrixXd zz = zc.transpose() * zc;
            Eigen::FullPivLU<Eigen::MatrixXd> lu(zz);
            if (lu.rank() < zz.rows()) throw_estimator(kModule, "RankDeficient", "Z columns are collinear or constant");
            zz_inv = lu.inverse();
        }
        Eigen::MatrixXd w = y;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index s = 0; s < t; ++s)
                if (!observed(i, s)) w(i, s) = m.fitted(i, s);
        const bool any_missing = (observed.array() == false).any();
        for (int it = 1; it <= options.max_iter; ++it) {
            m.iterations = it;
            m.mu = w.mean();
            const Eigen::VectorXd a = w.rowwise().mean().array() - m.mu;
            const Eigen::RowVectorXd xi = w.colwise().mean().array() - m.mu;
            Eigen::MatrixXd resid = w;
            resid.array() -= m.mu;
            resid.colwise() -= a;
            resid.rowwise() -= xi;
            Eigen::MatrixXd fitted = Eigen::MatrixXd::Zero(n, t);
            if (use_z) {
                m.theta = (zz_inv * zc.transpose() * resid).transpose();
                const Eigen::MatrixXd zpart = zc * m.theta.transpose();
                resid -= zpart;
                fitted += zpart;
            }
            if (r > 0) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(resid.transpose() * resid);
                const Eigen::MatrixXd v = eig.eigenvectors().rightCols(r).rowwise().reverse();
                m.factors = std::sqrt(static_cast<double>(t)) * v;
                m.loadings = resid * m.factors / static_cast<double>(t);
                fitted += m.loadings * m.factors.transpose();
            }
            fitted.array() += m.mu;
            fitted.colwise() += a;
            fitted.rowwise() += xi;
            m.unit_effects = a;
            m.time_effects = xi.transpose();
            double change = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index s = 0; s < t; ++s)
                    if (!observed(i, s)) {
                        change = std::max(change, std::abs(fitted(i, s) - w(i, s)));
                        w(i, s) = fitted(i, s);
                    }
            m.fitted = std::move(fitted);
            if (!any_missing || change < options.tol) {
                m.converged = true;
                break;
            }
        }
        orient(m.factors, m.loadings);
    }

    double ss = 0.0;
    int cells = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index s = 0; s < t; ++s)
            if (observed(i, s) && std::isfinite(m.fitted(i, s))) {
                ss += (y(i, s) - m.fitted(i, s)) * (y(i, s) - m.fitted(i, s));
                ++cells;
            }
    m.sigma2 = cells > 0 ? ss / cells : 0.0;
    return m;
}

CvResult cross_validate_r(const did::DidData& data, int r_max, const FitOptions& options) {
    if (r_max < 0) throw_config(kModule, "BadRank", "r_max must be non-negative");
    std::vector<Eigen::Index> controls, treated;
    for (std::size_t i = 0; i < data.n_cities(); ++i)
        (panel::never_treated(data.cohort[i]) ? controls : treated).push_back(static_cast<Eigen::Index>(i));
    if (treated.empty()) throw_estimator(kModule, "NoTreatedUnits", "no city is ever treated");
    if (controls.size() < 2) throw_estimator(kModule, "EmptyControl", "need at least two never-treated cities");

    std::vector<std::vector<Eigen::Index>> pre(treated.size());
    std::size_t min_pre = data.n_years();
    for (std::size_t k = 0; k < treated.size(); ++k) {
        for (std::size_t s = 0; s < data.n_years(); ++s)
            if (data.untreated(static_cast<std::size_t>(treated[k]), s)) pre[k].push_back(static_cast<Eigen::Index>(s));
        min_pre = std::min(min_pre, pre[k].size());
    }
    if (min_pre < 3) throw_estimator(kModule, "TooFewPrePeriods", "cross-validation needs three pre-treatment years");
    const int limit = std::min({r_max, static_cast<int>(min_pre) - 2, static_cast<int>(controls.size()) - 1,
                                static_cast<int>(data.n_years()) - 1});

    const Eigen::MatrixXd yc = data.y(controls, Eigen::all);
    const Mask all = Mask::Constant(yc.rows(), yc.cols(), true);
    CvResult out;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r <= limit; ++r) {
        const auto m = fit_factor_model(yc, all, r, nullptr, options);
        const Eigen::VectorXd g = m.time_effects.array() + m.mu;
        double ss = 0.0;
        int count = 0;
        for (std::size_t k = 0; k < treated.size(); ++k) {
            const auto& p = pre[k];
            for (std::size_t hold = 0; hold < p.size(); ++hold) {
                const auto rows = static_cast<Eigen::Index>(p.size() - 1);
                Eigen::MatrixXd x(rows, r + 1);
                Eigen::VectorXd target(rows);
                Eigen::Index row = 0;
                for (std::size_t q = 0; q < p.size(); ++q) {
                    if (q == hold) continue;
                    x(row, 0) = 1.0;
                    if (r > 0) x.block(row, 1, 1, r) = m.factors.row(p[q]);
                    target(row) = data.y(treated[k], p[q]) - g(p[q]);
                    ++row;
                }
                const Eigen::VectorXd b = x.completeOrthogonalDecomposition().solve(target);
                double pred = b(0) + g(p[hold]);
                if (r > 0) pred += m.factors.row(p[hold]).dot(b.tail(r));
                const double e = data.y(treated[k], p[hold]) - pred;
                ss += e * e;
                ++count;
            }
        }
        const double mspe = ss / count;
        out.mspe.push_back(mspe);
        if (mspe < best * (1.0 - 1e-10)) {
            best = mspe;
            out.r = r;
        }
    }
    return out;
}

GsynthResult gsynth_att(const did::DidData& data, const GsynthOptions& options) {
    GsynthResult out;
    const Mask mask = untreated_mask(data);
    if ((mask.array() == true).all()) throw_estimator(kModule, "NoTreatedUnits", "no treated cells");
    const Eigen::MatrixXd* z = options.z ? &*options.z : nullptr;

    out.r = options.r;
    if (out.r < 0) {
        const auto cv = cross_validate_r(data, options.r_max, options.fit);
        out.r = cv.r;
        out.cv_mspe = cv.mspe;
    }
    out.model = fit_factor_model(data.y, mask, out.r, z, options.fit);
    if (!out.model.converged) out.flags.emplace_back("NonConvergence");
    out.counterfactual = out.model.fitted;
    const auto point = summarize(data, out.counterfactual);
    if (point.dropped > 0) out.flags.push_back("unidentified_cells:" + std::to_string(point.dropped));
    if (!std::isfinite(point.overall.att))
        throw_estimator(kModule, "RankDeficient", "no treated cell has an identified counterfactual");
    out.by_year = point.by_year;
    out.overall = point.overall;

    std::vector<std::size_t> controls, treated;
    for (std::size_t i = 0; i < data.n_cities(); ++i)
        (panel::never_treated(data.cohort[i]) ? controls : treated).push_back(i);
    const int reps = options.bootstrap.reps;
    out.bootstrap_reps = reps;
    if (reps < 2 || controls.size() < 2) {
        if (reps >= 2) out.flags.emplace_back("bootstrap_needs_two_controls");
        for (auto& y : out.by_year) y.se = y.lower = y.upper = kNaN;
        out.overall.se = out.overall.lower = out.overall.upper = kNaN;
        return out;
    }

    const Eigen::MatrixXd resid = data.y - out.counterfactual;
    std::vector<std::vector<double>> draws(static_cast<std::size_t>(reps));
    const std::size_t slots = out.by_year.size() + 1;
    parallel_for(draws.size(), options.bootstrap.threads, [&](std::size_t b) {
        Rng rng(derive_seed(options.bootstrap.seed, b));
        std::vector<std::size_t> rows;
        for (std::size_t k = 0; k < controls.size(); ++k) rows.push_back(controls[rng.below(controls.size())]);
        for (auto i : treated) rows.push_back(i);
        did::DidData boot = did::resample(data, rows);
        for (std::size_t k = 0; k < treated.size(); ++k) {
            const auto row = static_cast<Eigen::Index>(controls.size() + k);
            const auto donor = static_cast<Eigen::Index>(controls[rng.below(controls.size())]);
            boot.y.row(row) = out.counterfactual.row(static_cast<Eigen::Index>(treated[k])) + resid.row(donor);
        }
        std::optional<Eigen::MatrixXd> zb;
        if (z != nullptr) {
            std::vector<Eigen::Index> idx(rows.begin(), rows.end());
            zb = (*z)(idx, Eigen::all);
        }
        std::vector<double> v(slots, kNaN);
        try {
            const auto m = fit_factor_model(boot.y, untreated_mask(boot), out.r, zb ? &*zb : nullptr, options.fit);
            const auto s = summarize(boot, m.fitted);
            for (std::size_t q = 0; q < out.by_year.size(); ++q)
                for (const auto& ya : s.by_year)
                    if (ya.year == out.by_year[q].year) v[q] = ya.att;
            v.back() = s.overall.att;
        } catch (const Error&) {
        }
        draws[b] = std::move(v);
    });

    auto fill = [&](YearAtt& target, std::size_t slot) {
        std::vector<double> col;
        for (const auto& d : draws)
            if (std::isfinite(d[slot])) col.push_back(d[slot]);
        if (col.size() < 2) {
            target.se = target.lower = target.upper = kNaN;
            return;
        }
        double mean = 0.0;
        for (double x : col) mean += x;
        mean /= static_cast<double>(col.size());
        double ss = 0.0;
        for (double x : col) ss += (x - mean) * (x - mean);
        target.se = std::sqrt(ss / static_cast<double>(col.size() - 1));
        target.lower = target.att - quantile(col, 0.975);
        target.upper = target.att - quantile(col, 0.025);
    };
    for (std::size_t q = 0; q < out.by_year.size(); ++q) fill(out.by_year[q], q);
    fill(out.overall, slots - 1);
    return out;
}

}  // namespace hp::gsynth
