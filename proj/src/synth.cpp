#include "histpanel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "histpanel/error.hpp"
#include "histpanel/rng.hpp"

namespace hp::synth {

namespace {

constexpr const char* kModule = "synth";
constexpr double kInf = std::numeric_limits<double>::infinity();

// min ||b - A_P z|| subject to sum(z) = 1, minimum-norm in the null space.
Eigen::VectorXd affine_ls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const std::vector<Eigen::Index>& support) {
    const auto m = static_cast<Eigen::Index>(support.size());
    Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
    z(0) = 1.0;
    if (m == 1) return z;
    const Eigen::VectorXd first = a.col(support[0]);
    Eigen::MatrixXd diff(a.rows(), m - 1);
    for (Eigen::Index j = 1; j < m; ++j) diff.col(j - 1) = a.col(support[static_cast<std::size_t>(j)]) - first;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(diff);
    cod.setThreshold(1e-12);
    const Eigen::VectorXd u = cod.solve(b - first);
    z(0) = 1.0 - u.sum();
    z.tail(m - 1) = u;
    return z;
}

double ratio_of(double post, double pre) {
    if (pre > 0.0) return post / pre;
    return post > 0.0 ? kInf : 0.0;
}

double permutation_p(double treated, const std::vector<double>& placebos) {
    std::size_t at_least = 0;
    for (double r : placebos) at_least += r >= treated ? 1 : 0;
    return static_cast<double>(1 + at_least) / static_cast<double>(placebos.size() + 1);
}

ScmProblem sub_problem(const ScmProblem& p, const std::vector<Eigen::Index>& treated_cols, std::string label) {
    std::vector<Eigen::Index> rest;
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(p.n_donors()); ++j)
        if (std::find(treated_cols.begin(), treated_cols.end(), j) == treated_cols.end()) rest.push_back(j);
    ScmProblem q;
    q.treated = std::move(label);
    for (auto j : rest) q.donors.push_back(p.donors[static_cast<std::size_t>(j)]);
    q.years = p.years;
    q.t0 = p.t0;
    q.mode = p.mode;
    q.predictor_names = p.predictor_names;
    q.y1 = p.y0(Eigen::all, treated_cols).rowwise().mean();
    q.y0 = p.y0(Eigen::all, rest);
    if (p.mode == PredictorMode::Covariates) {
        q.x1 = p.x0(Eigen::all, treated_cols).rowwise().mean();
        q.x0 = p.x0(Eigen::all, rest);
    }
    return q;
}

Eigen::VectorXd predictors_treated(const ScmProblem& p) {
    return p.mode == PredictorMode::OutcomePath ? Eigen::VectorXd(p.y1.head(static_cast<Eigen::Index>(p.n_pre()))) : p.x1;
}

Eigen::MatrixXd predictors_donors(const ScmProblem& p) {
    return p.mode == PredictorMode::OutcomePath ? Eigen::MatrixXd(p.y0.topRows(static_cast<Eigen::Index>(p.n_pre()))) : p.x0;
}

// Plain Nelder-Mead; returns the best point found.
std::pair<Eigen::VectorXd, double> nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                               Eigen::VectorXd start, int max_evaluations) {
    const Eigen::Index k = start.size();
    std::vector<Eigen::VectorXd> pts{start};
    const double step = 0.5 * std::max(1e-3, start.cwiseAbs().maxCoeff());
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::VectorXd p = start;
        p(j) += step;
        pts.push_back(p);
    }
    std::vector<double> vals;
    int evals = 0;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++evals;
        return f(x);
    };
    for (const auto& p : pts) vals.push_back(eval(p));
    std::vector<std::size_t> order(pts.size());
    while (evals < max_evaluations) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
        if (std::abs(vals[worst] - vals[best]) <= 1e-12 * (1.0 + std::abs(vals[best]))) break;
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(k);
        for (std::size_t i = 0; i + 1 < order.size(); ++i) centroid += pts[order[i]];
        centroid /= static_cast<double>(k);
        const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
        const double fr = eval(xr);
        if (fr < vals[best]) {
            const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
            const double fe = eval(xe);
            if (fe < fr) {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
        } else if (fr < vals[second]) {
            pts[worst] = xr;
            vals[worst] = fr;
        } else {
            const bool outside = fr < vals[worst];
            const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                               : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
            const double fc = eval(xc);
            if (fc < std::min(fr, vals[worst])) {
                pts[worst] = xc;
                vals[worst] = fc;
            } else {
                for (std::size_t i = 1; i < order.size(); ++i) {
                    pts[order[i]] = pts[best] + 0.5 * (pts[order[i]] - pts[best]);
                    vals[order[i]] = eval(pts[order[i]]);
                }
            }
        }
    }
    const auto it = std::min_element(vals.begin(), vals.end());
    return {pts[static_cast<std::size_t>(it - vals.begin())], *it};
}

}  // namespace

std::size_t ScmProblem::n_pre() const {
    return static_cast<std::size_t>(std::count_if(years.begin(), years.end(), [&](int y) { return y <= t0; }));
}

void ScmProblem::validate() const {
    const auto t = static_cast<Eigen::Index>(years.size());
    if (y1.size() != t || y0.rows() != t) throw_config(kModule, "BadProblem", "outcome paths do not match the years");
    if (!std::is_sorted(years.begin(), years.end())) throw_config(kModule, "BadProblem", "years must be increasing");
    if (static_cast<std::size_t>(y0.cols()) != donors.size())
        throw_config(kModule, "BadProblem", "donor labels do not match the donor outcomes");
    if (y0.cols() < 2) throw_config(kModule, "TooFewDonors", "at least two donors are required");
    if (std::find(donors.begin(), donors.end(), treated) != donors.end())
        throw_config(kModule, "BadProblem", "treated unit is in its own donor pool");
    if (n_pre() < 1 || n_pre() == years.size())
        throw_config(kModule, "BadProblem", "need at least one pre-period and one post-period year");
    if (!y1.allFinite() || !y0.allFinite()) throw_data(kModule, "NonFinite", "outcomes contain non-finite values");
    if (mode == PredictorMode::Covariates) {
        if (x1.size() < 1 || x0.rows() != x1.size() || x0.cols() != y0.cols())
            throw_config(kModule, "BadProblem", "predictor matrices do not conform");
        if (!x1.allFinite() || !x0.allFinite()) throw_data(kModule, "NonFinite", "predictors contain non-finite values");
    }
}

ScmProblem outcome_problem(std::string treated, std::vector<std::string> donors, std::vector<int> years, int t0,
                           Eigen::VectorXd y1, Eigen::MatrixXd y0) {
    ScmProblem p;
    p.treated = std::move(treated);
    p.donors = std::move(donors);
    p.years = std::move(years);
    p.t0 = t0;
    p.y1 = std::move(y1);
    p.y0 = std::move(y0);
    for (std::size_t t = 0; t < p.years.size() && p.years[t] <= t0; ++t)
        p.predictor_names.push_back("y" + std::to_string(p.years[t]));
    p.validate();
    return p;
}

ScmProblem covariate_problem(std::string treated, std::vector<std::string> donors, std::vector<int> years, int t0,
                             Eigen::VectorXd y1, Eigen::MatrixXd y0, std::vector<std::string> predictor_names,
                             Eigen::VectorXd x1, Eigen::MatrixXd x0) {
    ScmProblem p;
    p.treated = std::move(treated);
    p.donors = std::move(donors);
    p.years = std::move(years);
    p.t0 = t0;
    p.y1 = std::move(y1);
    p.y0 = std::move(y0);
    p.mode = PredictorMode::Covariates;
    p.predictor_names = std::move(predictor_names);
    p.x1 = std::move(x1);
    p.x0 = std::move(x0);
    p.validate();
    return p;
}

WeightFit fit_weights(const Eigen::VectorXd& x1, const Eigen::MatrixXd& x0, const Eigen::VectorXd& v) {
    if (v.size() != x1.size() || x0.rows() != x1.size())
        throw_config(kModule, "BadProblem", "predictor weights do not match the predictors");
    if ((v.array() < 0.0).any() || !v.allFinite() || v.sum() <= 0.0)
        throw_estimator(kModule, "DegenerateV", "predictor weights must be non-negative and not all zero");
    const Eigen::VectorXd root = v.cwiseSqrt();
    const Eigen::MatrixXd a = root.asDiagonal() * x0;
    const Eigen::VectorXd b = root.cwiseProduct(x1);
    const Eigen::Index j_count = a.cols();
    auto objective = [&](const Eigen::VectorXd& w) { return (b - a * w).squaredNorm(); };

    Eigen::Index start = 0;
    double best = kInf;
    for (Eigen::Index j = 0; j < j_count; ++j) {
        const double f = (b - a.col(j)).squaredNorm();
        if (f < best) {
            best = f;
            start = j;
        }
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(j_count);
    w(start) = 1.0;
    std::vector<Eigen::Index> support{start};
    const double scale = std::max(1.0, (a.transpose() * a).diagonal().maxCoeff());
    const double tol = 1e-11 * scale;

    WeightFit out;
    const int max_iter = 50 * static_cast<int>(j_count) + 100;
    for (int it = 1; it <= max_iter; ++it) {
        out.iterations = it;
        const Eigen::VectorXd z = affine_ls(a, b, support);
        if (z.minCoeff() > 0.0) {
            w.setZero();
            for (std::size_t s = 0; s < support.size(); ++s) w(support[s]) = z(static_cast<Eigen::Index>(s));
            const Eigen::VectorXd g = a.transpose() * (a * w - b);
            const double mu = w.dot(g);
            Eigen::Index enter = -1;
            double most = -tol;
            for (Eigen::Index j = 0; j < j_count; ++j) {
                if (std::find(support.begin(), support.end(), j) != support.end()) continue;
                if (g(j) - mu < most) {
                    most = g(j) - mu;
                    enter = j;
                }
            }
            if (enter < 0) break;
            support.insert(std::upper_bound(support.begin(), support.end(), enter), enter);
            continue;
        }
        // Move toward z until a weight hits zero, then drop it from the support.
        double alpha = 1.0;
        for (std::size_t s = 0; s < support.size(); ++s) {
            const double zi = z(static_cast<Eigen::Index>(s));
            const double wi = w(support[s]);
            if (zi <= 0.0) alpha = std::min(alpha, wi / (wi - zi));
        }
        for (std::size_t s = 0; s < support.size(); ++s)
            w(support[s]) += alpha * (z(static_cast<Eigen::Index>(s)) - w(support[s]));
        std::vector<Eigen::Index> kept;
        for (auto j : support) {
            if (w(j) > 1e-15) {
                kept.push_back(j);
            } else {
                w(j) = 0.0;
            }
        }
        if (kept.empty()) kept.push_back(start);
        support = std::move(kept);
        w /= w.sum();
    }
    w = w.cwiseMax(0.0);
    w /= w.sum();
    out.w = w;
    out.objective = objective(w);
    return out;
}

VSelection select_v(const ScmProblem& problem, const VOptions& options) {
    const std::size_t n_pre = problem.n_pre();
    VSelection out;
    if (problem.mode == PredictorMode::OutcomePath) {
        out.v = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_pre), 1.0 / static_cast<double>(n_pre));
        return out;
    }
    const Eigen::Index k = problem.x1.size();
    if (n_pre < 2) throw_estimator(kModule, "TooFewPrePeriods", "need two pre-period years to split for V selection");
    const Eigen::Index n_train = static_cast<Eigen::Index>(n_pre / 2);
    const Eigen::Index n_val = static_cast<Eigen::Index>(n_pre) - n_train;
    const Eigen::VectorXd y1v = problem.y1.segment(n_train, n_val);
    const Eigen::MatrixXd y0v = problem.y0.middleRows(n_train, n_val);
    auto loss_v = [&](const Eigen::VectorXd& v) {
        const auto fit = fit_weights(problem.x1, problem.x0, v);
        return (y1v - y0v * fit.w).squaredNorm() / static_cast<double>(n_val);
    };
    out.v = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    out.validation_mspe = loss_v(out.v);
    if (k == 1) return out;

    auto to_v = [](const Eigen::VectorXd& theta) {
        Eigen::VectorXd v = theta.cwiseAbs();
        return Eigen::VectorXd(v / v.sum());
    };
    auto f = [&](const Eigen::VectorXd& theta) {
        const double s = theta.cwiseAbs().sum();
        if (!(s > 0.0) || !std::isfinite(s)) return kInf;
        return loss_v(to_v(theta));
    };
    for (int s = 0; s < options.multistarts; ++s) {
        Eigen::VectorXd start = Eigen::VectorXd::Ones(k);
        if (s > 0) {
            Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(s)));
            for (Eigen::Index j = 0; j < k; ++j) start(j) = 1.0 - rng.uniform();
        }
        const auto [theta, value] = nelder_mead(f, start, options.max_evaluations);
        if (value < out.validation_mspe - 1e-12 * std::max(1.0, std::abs(out.validation_mspe))) {
            out.validation_mspe = value;
            out.v = to_v(theta);
            out.uniform = false;
        }
    }
    return out;
}

double ScmFit::ratio() const { return ratio_of(post_rmspe, pre_rmspe); }

ScmFit scm_gaps(const ScmProblem& problem, const Eigen::VectorXd& w, const Eigen::VectorXd& v) {
    ScmFit out;
    out.w = w;
    out.v = v;
    out.years = problem.years;
    out.gaps = problem.y1 - problem.y0 * w;
    const auto n_pre = static_cast<Eigen::Index>(problem.n_pre());
    const Eigen::Index n_post = out.gaps.size() - n_pre;
    out.pre_rmspe = std::sqrt(out.gaps.head(n_pre).squaredNorm() / static_cast<double>(n_pre));
    out.post_rmspe = std::sqrt(out.gaps.tail(n_post).squaredNorm() / static_cast<double>(n_post));
    out.atet = out.gaps.tail(n_post).mean();
    return out;
}

ScmFit synth_fit(const ScmProblem& problem, const VOptions& options) {
    problem.validate();
    const auto sel = select_v(problem, options);
    const auto wf = fit_weights(predictors_treated(problem), predictors_donors(problem), sel.v);
    auto out = scm_gaps(problem, wf.w, sel.v);
    out.objective = wf.objective;
    return out;
}

PlaceboResult placebo_inference(const ScmProblem& problem, const ScmFit& fit, const PlaceboOptions& options) {
    problem.validate();
    const auto j_count = static_cast<Eigen::Index>(problem.n_donors());
    PlaceboResult out;
    out.mode = options.mode;
    out.treated_ratio = fit.ratio();
    if (j_count < 10) out.warnings.emplace_back("SmallDonorPool");

    std::vector<std::vector<Eigen::Index>> groups;
    if (options.mode == PlaceboMode::InSpaceFull) {
        if (j_count < 3) throw_config(kModule, "TooFewDonors", "in-space placebos need at least three donors");
        for (Eigen::Index j = 0; j < j_count; ++j) {
            groups.push_back({j});
            out.labels.push_back(problem.donors[static_cast<std::size_t>(j)]);
        }
    } else {
        const int m = options.group_size;
        if (m < 1 || m > j_count - 2)
            throw_config(kModule, "BadGroupSize", "group size must leave at least two donors");
        const int samples = std::clamp(options.samples, 1, 10000);
        for (int s = 0; s < samples; ++s) {
            Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(s)));
            std::vector<Eigen::Index> idx(static_cast<std::size_t>(j_count));
            std::iota(idx.begin(), idx.end(), 0);
            for (int c = 0; c < m; ++c) {
                const std::size_t pick = static_cast<std::size_t>(c) + rng.below(idx.size() - static_cast<std::size_t>(c));
                std::swap(idx[static_cast<std::size_t>(c)], idx[pick]);
            }
            std::vector<Eigen::Index> chosen(idx.begin(), idx.begin() + m);
            std::sort(chosen.begin(), chosen.end());
            groups.push_back(std::move(chosen));
            out.labels.push_back("sample" + std::to_string(s + 1));
        }
    }

    const auto n_pre = static_cast<Eigen::Index>(problem.n_pre());
    const Eigen::Index n_post = static_cast<Eigen::Index>(problem.years.size()) - n_pre;
    std::vector<ScmFit> fits(groups.size());
    parallel_for(groups.size(), options.threads, [&](std::size_t g) {
        auto q = sub_problem(problem, groups[g], out.labels[g]);
        VOptions vo = options.v;
        vo.seed = derive_seed(options.v.seed, g + 1);
        fits[g] = synth_fit(q, vo);
    });
    for (const auto& f : fits) out.ratios.push_back(f.ratio());
    out.p_value = permutation_p(out.treated_ratio, out.ratios);

    for (Eigen::Index t = 0; t < n_post; ++t) {
        out.post_years.push_back(problem.years[static_cast<std::size_t>(n_pre + t)]);
        const double treated = ratio_of(std::abs(fit.gaps(n_pre + t)), fit.pre_rmspe);
        std::vector<double> stats;
        for (const auto& f : fits) stats.push_back(ratio_of(std::abs(f.gaps(n_pre + t)), f.pre_rmspe));
        out.p_by_year.push_back(permutation_p(treated, stats));
    }
    return out;
}

}  // namespace hp::synth
