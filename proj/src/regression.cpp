#include "histpanel/regression.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "histpanel/error.hpp"

namespace hp::reg {

namespace {

constexpr const char* kModule = "regression";

int count_components(const Factor& a, const Factor& b) {
    std::vector<int> parent(static_cast<std::size_t>(a.levels + b.levels));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    for (std::size_t r = 0; r < a.codes.size(); ++r) {
        const int x = find(a.codes[r]);
        const int y = find(a.levels + b.codes[r]);
        if (x != y) parent[static_cast<std::size_t>(x)] = y;
    }
    int comps = 0;
    for (int i = 0; i < a.levels + b.levels; ++i) comps += find(i) == i ? 1 : 0;
    return comps;
}

// Cluster sandwich with the finite-sample factor for one (possibly intersected) dimension.
Eigen::MatrixXd cluster_meat(const Eigen::MatrixXd& s, const Factor& f) {
    const Eigen::Index k = s.cols();
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(f.levels, k);
    for (std::size_t r = 0; r < f.codes.size(); ++r) sums.row(f.codes[r]) += s.row(static_cast<Eigen::Index>(r));
    return sums.transpose() * sums;
}

}  // namespace

Factor make_factor(std::string name, std::span<const int> raw) {
    std::vector<int> sorted(raw.begin(), raw.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    Factor f;
    f.name = std::move(name);
    f.levels = static_cast<int>(sorted.size());
    f.codes.reserve(raw.size());
    for (int v : raw)
        f.codes.push_back(static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin()));
    return f;
}

Factor intersect(const Factor& a, const Factor& b) {
    std::map<std::pair<int, int>, int> ids;
    std::vector<int> raw(a.codes.size());
    for (std::size_t r = 0; r < a.codes.size(); ++r) {
        auto [it, inserted] = ids.emplace(std::make_pair(a.codes[r], b.codes[r]), static_cast<int>(ids.size()));
        raw[r] = it->second;
    }
    return make_factor(a.name + "#" + b.name, raw);
}

void DataFrame::add(std::string name, Eigen::VectorXd column) {
    if (static_cast<std::size_t>(column.size()) != rows_)
        throw_config(kModule, "BadColumn", "column '" + name + "' has wrong length");
    columns_.emplace_back(std::move(name), std::move(column));
}

void DataFrame::add_factor(std::string name, std::span<const int> raw) {
    if (raw.size() != rows_) throw_config(kModule, "BadColumn", "factor '" + name + "' has wrong length");
    factors_.push_back(make_factor(std::move(name), raw));
}

bool DataFrame::has_column(std::string_view name) const {
    return std::any_of(columns_.begin(), columns_.end(), [&](const auto& c) { return c.first == name; });
}

bool DataFrame::has_factor(std::string_view name) const {
    return std::any_of(factors_.begin(), factors_.end(), [&](const auto& f) { return f.name == name; });
}

const Eigen::VectorXd& DataFrame::column(std::string_view name) const {
    for (const auto& c : columns_)
        if (c.first == name) return c.second;
    throw_config(kModule, "UnknownColumn", "no column '" + std::string(name) + "'");
}

const Factor& DataFrame::factor(std::string_view name) const {
    for (const auto& f : factors_)
        if (f.name == name) return f;
    throw_config(kModule, "UnknownColumn", "no factor '" + std::string(name) + "'");
}

WithinResult within_transform(const Eigen::MatrixXd& data, std::span<const Factor> absorb,
                              const Eigen::VectorXd* weights, WithinOptions options) {
    WithinResult out{data, 0, true};
    if (absorb.empty()) return out;
    const Eigen::Index n = data.rows();
    const Eigen::Index c = data.cols();
    const bool weighted = weights != nullptr;

    std::vector<Eigen::VectorXd> group_weight;
    for (const auto& f : absorb) {
        if (static_cast<Eigen::Index>(f.codes.size()) != n)
            throw_config(kModule, "BadColumn", "factor '" + f.name + "' has wrong length");
        Eigen::VectorXd gw = Eigen::VectorXd::Zero(f.levels);
        for (Eigen::Index r = 0; r < n; ++r) gw(f.codes[static_cast<std::size_t>(r)]) += weighted ? (*weights)(r) : 1.0;
        group_weight.push_back(std::move(gw));
    }

    out.converged = false;
    Eigen::MatrixXd sums;
    for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (std::size_t d = 0; d < absorb.size(); ++d) {
            const auto& f = absorb[d];
            sums.setZero(f.levels, c);
            for (Eigen::Index r = 0; r < n; ++r) {
                const double w = weighted ? (*weights)(r) : 1.0;
                sums.row(f.codes[static_cast<std::size_t>(r)]) += w * out.data.row(r);
            }
            for (Eigen::Index g = 0; g < f.levels; ++g)
                if (group_weight[d](g) > 0) sums.row(g) /= group_weight[d](g);
            max_change = std::max(max_change, sums.cwiseAbs().maxCoeff());
            for (Eigen::Index r = 0; r < n; ++r) out.data.row(r) -= sums.row(f.codes[static_cast<std::size_t>(r)]);
        }
        out.sweeps = sweep;
        if (absorb.size() == 1 || max_change < options.tol) {
            out.converged = true;
            break;
        }
    }
    return out;
}

std::size_t FitResult::index(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    throw_config(kModule, "UnknownColumn", "no coefficient '" + std::string(name) + "'");
}

double FitResult::se(std::size_t i) const {
    const auto j = static_cast<Eigen::Index>(i);
    return std::sqrt(std::max(0.0, vcov(j, j)));
}

double FitResult::p_value(std::size_t i) const {
    const double s = se(i);
    if (s == 0.0) return coef(static_cast<Eigen::Index>(i)) == 0.0 ? 1.0 : 0.0;
    if (ref_df > 0) return student_two_sided_p(t_stat(i), ref_df);
    return normal_two_sided_p(t_stat(i));
}

double FitResult::critical_value(double level) const {
    const double p = 0.5 + level / 2.0;
    if (ref_df > 0) return boost::math::quantile(boost::math::students_t(static_cast<double>(ref_df)), p);
    return normal_quantile(p);
}

FitResult ols_fit(const DesignSpec& spec, const DataFrame& data, WithinOptions options) {
    const auto n = static_cast<Eigen::Index>(data.rows());
    std::vector<std::string> names;
    if (spec.absorb.empty() && spec.intercept) names.emplace_back("(Intercept)");
    for (const auto& r : spec.regressors) names.push_back(r);
    const auto k = static_cast<Eigen::Index>(names.size());
    if (k == 0) throw_config(kModule, "EmptyDesign", "no regressors");

    Eigen::MatrixXd raw(n, k + 1);
    raw.col(0) = data.column(spec.outcome);
    Eigen::Index col = 1;
    if (spec.absorb.empty() && spec.intercept) raw.col(col++).setOnes();
    for (const auto& r : spec.regressors) raw.col(col++) = data.column(r);
    if (!raw.allFinite()) throw_data(kModule, "NonFinite", "design contains non-finite values");

    std::optional<Eigen::VectorXd> weights;
    if (spec.weights) {
        weights = data.column(*spec.weights);
        if ((weights->array() <= 0.0).any()) throw_data(kModule, "BadWeights", "weights must be positive");
    }

    std::vector<Factor> absorb;
    for (const auto& a : spec.absorb) absorb.push_back(data.factor(a));
    const auto within = within_transform(raw, absorb, weights ? &*weights : nullptr, options);

    FitResult fit;
    fit.names = names;
    fit.n_obs = static_cast<int>(n);
    if (!within.converged) fit.flags.push_back("within_not_converged");

    const Eigen::VectorXd y = within.data.col(0);
    Eigen::MatrixXd x = within.data.rightCols(k);

    std::vector<std::string> vanished;
    for (Eigen::Index j = 0; j < k; ++j) {
        const double before = raw.col(j + 1).norm();
        if (x.col(j).norm() <= 1e-9 * std::max(1.0, before)) vanished.push_back(names[static_cast<std::size_t>(j)]);
    }
    if (!vanished.empty()) {
        std::string msg = "absorbed by fixed effects:";
        for (const auto& v : vanished) msg += " " + v;
        throw_estimator(kModule, "NoVariation", msg);
    }

    Eigen::VectorXd sw = Eigen::VectorXd::Ones(n);
    if (weights) sw = weights->cwiseSqrt();
    const Eigen::MatrixXd xw = sw.asDiagonal() * x;
    const Eigen::VectorXd yw = sw.asDiagonal() * y;

    // Greedy collinearity scan so the error can name offending columns.
    {
        std::vector<std::string> collinear;
        Eigen::MatrixXd basis(n, 0);
        for (Eigen::Index j = 0; j < k; ++j) {
            Eigen::VectorXd v = xw.col(j);
            const double norm0 = v.norm();
            if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
            if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
            if (v.norm() <= 1e-9 * norm0) {
                collinear.push_back(names[static_cast<std::size_t>(j)]);
            } else {
                basis.conservativeResize(n, basis.cols() + 1);
                basis.col(basis.cols() - 1) = v / v.norm();
            }
        }
        if (!collinear.empty()) {
            std::string msg = "collinear regressors:";
            for (const auto& c : collinear) msg += " " + c;
            throw_estimator(kModule, "RankDeficient", msg);
        }
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
    fit.coef = qr.solve(yw);
    fit.residuals = y - x * fit.coef;
    fit.design = std::move(x);
    if (weights) fit.weights = *weights;
    const Eigen::MatrixXd xtx = xw.transpose() * xw;
    fit.bread = xtx.ldlt().solve(Eigen::MatrixXd::Identity(k, k));

    int absorbed = 0;
    if (absorb.size() == 1) {
        absorbed = absorb[0].levels;
    } else if (absorb.size() == 2) {
        absorbed = absorb[0].levels + absorb[1].levels - count_components(absorb[0], absorb[1]);
    } else {
        for (const auto& f : absorb) absorbed += f.levels;
        absorbed -= static_cast<int>(absorb.size()) - 1;
    }
    for (const auto& f : absorb) fit.absorbed_groups[f.name] = f.levels;
    fit.absorbed_dof = absorbed;
    fit.dof = static_cast<int>(n) - static_cast<int>(k) - absorbed;

    if (spec.cluster.empty()) {
        fit.vcov = hc1_vcov(fit);
        fit.vcov_type = "hc1";
    } else {
        std::vector<Factor> clusters;
        for (const auto& c : spec.cluster) clusters.push_back(data.factor(c));
        auto cgm = cgm_vcov(fit, clusters);
        fit.vcov = std::move(cgm.vcov);
        fit.vcov_type = clusters.size() == 1 ? "cluster" : "cgm";
        int g_min = clusters.front().levels;
        for (std::size_t d = 0; d < clusters.size(); ++d) {
            fit.cluster_counts[clusters[d].name] = clusters[d].levels;
            g_min = std::min(g_min, clusters[d].levels);
        }
        fit.ref_df = g_min - 1;
        if (cgm.floored) fit.flags.push_back("vcov_eigen_floored");
    }
    return fit;
}

Eigen::MatrixXd scores(const FitResult& fit) {
    Eigen::VectorXd we = fit.residuals;
    if (fit.weights.size() > 0) we = we.cwiseProduct(fit.weights);
    return we.asDiagonal() * fit.design;
}

Eigen::MatrixXd hc1_vcov(const FitResult& fit) {
    const Eigen::MatrixXd s = scores(fit);
    const double n = static_cast<double>(s.rows());
    const double k = static_cast<double>(s.cols());
    const double c = n / std::max(1.0, n - k);
    return c * fit.bread * (s.transpose() * s) * fit.bread;
}

CgmResult cgm_vcov(const FitResult& fit, std::span<const Factor> clusters) {
    if (clusters.empty()) throw_config(kModule, "NoClusters", "at least one cluster dimension is required");
    const Eigen::MatrixXd s = scores(fit);
    const double n = static_cast<double>(s.rows());
    const double k = static_cast<double>(s.cols());
    CgmResult out;
    for (const auto& f : clusters) {
        if (static_cast<Eigen::Index>(f.codes.size()) != s.rows())
            throw_config(kModule, "BadColumn", "cluster factor '" + f.name + "' has wrong length");
        if (f.levels < 2) throw_estimator(kModule, "SingleCluster", "dimension '" + f.name + "' has one cluster");
        out.cluster_counts.push_back(f.levels);
    }
    const std::size_t d = clusters.size();
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(s.cols(), s.cols());
    for (std::size_t mask = 1; mask < (std::size_t{1} << d); ++mask) {
        Factor combined;
        int bits = 0;
        for (std::size_t j = 0; j < d; ++j) {
            if (!(mask & (std::size_t{1} << j))) continue;
            combined = bits == 0 ? clusters[j] : intersect(combined, clusters[j]);
            ++bits;
        }
        const double g = combined.levels;
        const double c = (g / (g - 1.0)) * ((n - 1.0) / (n - k));
        const double sign = (bits % 2 == 1) ? 1.0 : -1.0;
        meat += sign * c * cluster_meat(s, combined);
    }
    Eigen::MatrixXd v = fit.bread * meat * fit.bread;
    v = 0.5 * (v + v.transpose());
    out.raw = v;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v);
    if (eig.eigenvalues().minCoeff() < 0.0) {
        out.floored = true;
        const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
        v = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
    }
    out.vcov = std::move(v);
    return out;
}

LogitResult logit_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, LogitOptions options) {
    const Eigen::Index n = y.size();
    if (x.rows() != n) throw_config(kModule, "BadColumn", "logit: outcome and design lengths differ");
    const double ones = y.sum();
    if (ones <= 0.0 || ones >= static_cast<double>(n))
        throw_estimator(kModule, "Separation", "logit: outcome has no variation");

    auto loglik = [&](const Eigen::VectorXd& eta) {
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double e = eta(i);
            // log(1 + exp(e)) computed stably
            const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
            ll += y(i) * e - softplus;
        }
        return ll;
    };

    LogitResult out;
    out.coef = Eigen::VectorXd::Zero(x.cols());
    Eigen::VectorXd eta = x * out.coef;
    double ll = loglik(eta);
    for (int it = 1; it <= options.max_iter; ++it) {
        const Eigen::VectorXd p = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
        const Eigen::VectorXd grad = x.transpose() * (y - p);
        out.iterations = it - 1;
        if (grad.norm() < options.tol) {
            out.fitted = p;
            out.log_likelihood = ll;
            if ((y - p).cwiseAbs().maxCoeff() < 1e-6)
                throw_estimator(kModule, "Separation", "logit: outcome perfectly predicted");
            return out;
        }
        const Eigen::VectorXd w = p.array() * (1.0 - p.array());
        const Eigen::MatrixXd h = x.transpose() * w.asDiagonal() * x;
        const Eigen::VectorXd step = h.ldlt().solve(grad);
        if (!step.allFinite()) throw_estimator(kModule, "Separation", "logit: information matrix is singular");
        double scale = 1.0;
        Eigen::VectorXd candidate;
        double ll_new = ll;
        for (int half = 0; half < 40; ++half) {
            candidate = out.coef + scale * step;
            ll_new = loglik(x * candidate);
            if (ll_new >= ll - 1e-12 * std::abs(ll)) break;
            scale *= 0.5;
        }
        out.coef = candidate;
        eta = x * out.coef;
        ll = ll_new;
        if (out.coef.cwiseAbs().maxCoeff() > 50.0 || ll > -1e-9)
            throw_estimator(kModule, "Separation", "logit: coefficients diverge (separated data)");
    }
    throw_estimator(kModule, "NonConvergence",
                    "logit: gradient norm above tolerance after " + std::to_string(options.max_iter) + " iterations");
}

WaldResult wald_test(const Eigen::VectorXd& coef, const Eigen::MatrixXd& vcov, const Eigen::MatrixXd& r_matrix,
                     const Eigen::VectorXd& r_value) {
    if (r_matrix.cols() != coef.size() || r_matrix.rows() != r_value.size())
        throw_config(kModule, "BadRestriction", "restriction dimensions do not match the coefficient vector");
    const Eigen::Index q = r_matrix.rows();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(r_matrix);
    if (lu.rank() < q) throw_estimator(kModule, "SingularRVR", "restriction matrix lacks full row rank");

    WaldResult out;
    out.df = static_cast<int>(q);
    const Eigen::VectorXd diff = r_matrix * coef - r_value;
    const double scale = std::max(1.0, r_value.cwiseAbs().maxCoeff());
    const Eigen::MatrixXd rvr = r_matrix * vcov * r_matrix.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (rvr + rvr.transpose()));
    const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    const bool singular = top == 0.0 || eig.eigenvalues().minCoeff() <= 1e-13 * top;
    if (singular) {
        if (diff.cwiseAbs().maxCoeff() <= 1e-9 * scale) return out;
        throw_estimator(kModule, "SingularRVR", "R V R' is singular");
    }
    out.statistic = diff.dot(eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                             eig.eigenvectors().transpose() * diff);
    out.p_value = chi2_survival(out.statistic, static_cast<double>(q));
    return out;
}

WaldResult wald_test(const FitResult& fit, const Eigen::MatrixXd& r_matrix, const Eigen::VectorXd& r_value) {
    return wald_test(fit.coef, fit.vcov, r_matrix, r_value);
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double student_two_sided_p(double t, double df) {
    if (!std::isfinite(t)) return std::isnan(t) ? t : 0.0;
    return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t)));
}

double chi2_survival(double x, double df) {
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(df / 2.0, x / 2.0);
}

double f_survival(double f, double df1, double df2) {
    if (!(f > 0.0)) return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::fisher_f(df1, df2), f));
}

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

}  // namespace hp::reg
