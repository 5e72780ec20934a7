#include "histpanel/pvar.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "histpanel/error.hpp"

namespace hp::pvar {

namespace {

constexpr const char* kModule = "pvar";

std::size_t find_name(const std::vector<std::string>& names, std::string_view name) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw_config(kModule, "UnknownVariable", "no variable '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - names.begin());
}

}  // namespace

std::vector<double> helmert_transform(std::span<const double> series) {
    const std::size_t t_count = series.size();
    if (t_count < 2) throw_data(kModule, "TooShort", "Helmert transform needs at least two observations");
    std::vector<double> out(t_count - 1);
    double tail = 0.0;
    for (std::size_t s = 1; s < t_count; ++s) tail += series[s];
    for (std::size_t t = 0; t + 1 < t_count; ++t) {
        const double remaining = static_cast<double>(t_count - t - 1);
        const double mean = tail / remaining;
        out[t] = std::sqrt(remaining / (remaining + 1.0)) * (series[t] - mean);
        tail -= series[t + 1];
    }
    return out;
}

double PvarFit::se(std::size_t equation, std::size_t variable) const {
    const auto m = static_cast<Eigen::Index>(names.size());
    const auto idx = static_cast<Eigen::Index>(equation) * m + static_cast<Eigen::Index>(variable);
    return std::sqrt(std::max(0.0, vcov(idx, idx)));
}

PvarFit pvar1_fit(const PvarData& data, const PvarOptions& options) {
    const auto m = static_cast<Eigen::Index>(data.series.size());
    if (m == 0 || data.names.size() != data.series.size())
        throw_config(kModule, "BadVariables", "need one name per endogenous series");
    if (options.instrument_lags < 1) throw_config(kModule, "BadInstruments", "instrument_lags must be at least 1");
    const Eigen::Index n = data.series[0].rows();
    const Eigen::Index t_count = data.series[0].cols();
    for (const auto& s : data.series) {
        if (s.rows() != n || s.cols() != t_count)
            throw_config(kModule, "ShapeMismatch", "all series must share the city-by-year shape");
        if (!s.allFinite()) throw_data(kModule, "NonFinite", "series contain non-finite values");
    }
    const int lags = options.instrument_lags;
    // Dependent at t = lags..T-2 (0-based); FOD uses t+1..T-1.
    if (t_count < 2 + lags) throw_data(kModule, "TooShort", "panel VAR needs at least three years per city");
    const Eigen::Index per_city = t_count - 1 - lags;
    const Eigen::Index rows = n * per_city;
    const Eigen::Index q = m * lags;

    Eigen::MatrixXd dep(rows, m), reg(rows, m), inst(rows, q);
    std::vector<int> city(static_cast<std::size_t>(rows));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < m; ++k) {
            std::vector<double> level(static_cast<std::size_t>(t_count));
            for (Eigen::Index s = 0; s < t_count; ++s) level[static_cast<std::size_t>(s)] = data.series[static_cast<std::size_t>(k)](i, s);
            // Dependent positions 1..T-1 and their lags 0..T-2 share transform weights.
            const auto d = helmert_transform(std::span<const double>(level).subspan(1));
            const auto l = helmert_transform(std::span<const double>(level).first(static_cast<std::size_t>(t_count - 1)));
            for (Eigen::Index j = 0; j < per_city; ++j) {
                const Eigen::Index t = j + lags;  // dependent time index
                const Eigen::Index row = i * per_city + j;
                dep(row, k) = d[static_cast<std::size_t>(t - 1)];
                reg(row, k) = l[static_cast<std::size_t>(t - 1)];
                for (int lag = 1; lag <= lags; ++lag) inst(row, k * lags + (lag - 1)) = level[static_cast<std::size_t>(t - lag)];
                city[static_cast<std::size_t>(row)] = static_cast<int>(i);
            }
        }
    }

    PvarFit fit;
    fit.names = data.names;
    fit.n_obs = static_cast<int>(rows);
    fit.n_cities = static_cast<int>(n);
    std::ostringstream desc;
    desc << "levels lag 1";
    if (lags > 1) desc << ".." << lags;
    desc << " of " << m << " variables (" << q << " instruments)";
    fit.instruments = desc.str();

    const Eigen::MatrixXd zx = inst.transpose() * reg;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(zx);
    const auto sv = svd.singularValues();
    if (sv.size() == 0 || sv(sv.size() - 1) <= 0.0)
        throw_estimator(kModule, "RankDeficient", "instrument cross-product is singular");
    fit.condition = sv(0) / sv(sv.size() - 1);
    if (fit.condition > options.max_condition)
        throw_estimator(kModule, "WeakInstruments", "condition number of Z'X is " + std::to_string(fit.condition));

    fit.a.resize(m, m);
    Eigen::MatrixXd influence = Eigen::MatrixXd::Zero(n, m * m);
    for (Eigen::Index e = 0; e < m; ++e) {
        const Eigen::VectorXd y = dep.col(e);
        auto solve = [&](const Eigen::MatrixXd& w) {
            const Eigen::MatrixXd xzw = zx.transpose() * w;
            const Eigen::MatrixXd h = (xzw * zx).ldlt().solve(xzw);
            return std::make_pair(Eigen::VectorXd(h * (inst.transpose() * y)), h);
        };
        auto [beta, h] = solve(Eigen::MatrixXd::Identity(q, q));
        Eigen::VectorXd resid = y - reg * beta;
        Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(n, q);
        for (Eigen::Index r = 0; r < rows; ++r) scores.row(city[static_cast<std::size_t>(r)]) += resid(r) * inst.row(r);
        const Eigen::MatrixXd s = scores.transpose() * scores;
        if (q > m) {
            Eigen::FullPivLU<Eigen::MatrixXd> lu(s);
            if (lu.rank() < q) throw_estimator(kModule, "RankDeficient", "clustered moment covariance is singular");
            std::tie(beta, h) = solve(lu.inverse());
            resid = y - reg * beta;
            scores.setZero();
            for (Eigen::Index r = 0; r < rows; ++r) scores.row(city[static_cast<std::size_t>(r)]) += resid(r) * inst.row(r);
        }
        influence.middleCols(e * m, m) = scores * h.transpose();
        fit.a.row(e) = beta.transpose();
        fit.residuals.push_back(resid);
    }
    fit.vcov = influence.transpose() * influence;
    fit.vcov = 0.5 * (fit.vcov + fit.vcov.transpose());
    return fit;
}

reg::WaldResult granger_wald(const PvarFit& fit, std::string_view cause, std::string_view effect) {
    const auto k = find_name(fit.names, cause);
    const auto e = find_name(fit.names, effect);
    const auto m = static_cast<Eigen::Index>(fit.names.size());
    Eigen::VectorXd coef(m * m);
    for (Eigen::Index r = 0; r < m; ++r) coef.segment(r * m, m) = fit.a.row(r).transpose();
    Eigen::MatrixXd restriction = Eigen::MatrixXd::Zero(1, m * m);
    restriction(0, static_cast<Eigen::Index>(e) * m + static_cast<Eigen::Index>(k)) = 1.0;
    return reg::wald_test(coef, fit.vcov, restriction, Eigen::VectorXd::Zero(1));
}

}  // namespace hp::pvar
