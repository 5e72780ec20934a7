#include "histpanel/breaks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "histpanel/error.hpp"

namespace hp::breaks {

namespace {

constexpr const char* kModule = "breaks";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Quantile {
    double level;
    double value;
};

// Asymptotic distribution of the minimum t-statistic; tails from Zivot and
// Andrews (1992), interior from simulation.
constexpr std::array<Quantile, 18> kIntercept{{{0.01, -5.34},     {0.025, -5.02},    {0.05, -4.80},
                                               {0.10, -4.58},     {0.15, -4.40507},  {0.20, -4.28155},
                                               {0.25, -4.1783},   {0.30, -4.08586},  {0.40, -3.92078},
                                               {0.50, -3.77031},  {0.60, -3.62126},  {0.70, -3.46848},
                                               {0.75, -3.38533},  {0.80, -3.29112},  {0.90, -3.04165},
                                               {0.95, -2.83179},  {0.97, -2.68624},  {0.99, -2.40044}}};
constexpr std::array<Quantile, 18> kTrend{{{0.01, -4.93},    {0.025, -4.67},    {0.05, -4.42},    {0.10, -4.11},
                                           {0.15, -3.95185}, {0.20, -3.81295},  {0.25, -3.69836}, {0.30, -3.59819},
                                           {0.40, -3.41672}, {0.50, -3.25316},  {0.60, -3.09204}, {0.70, -2.92897},
                                           {0.75, -2.83614}, {0.80, -2.73893},  {0.90, -2.49611}, {0.95, -2.3082},
                                           {0.97, -2.19648}, {0.99, -1.99138}}};
constexpr std::array<Quantile, 18> kBoth{{{0.01, -5.57},    {0.025, -5.30},   {0.05, -5.08},    {0.10, -4.82},
                                          {0.15, -4.6602},  {0.20, -4.52855}, {0.25, -4.42011}, {0.30, -4.32705},
                                          {0.40, -4.158},   {0.50, -4.00489}, {0.60, -3.85577}, {0.70, -3.69794},
                                          {0.75, -3.61852}, {0.80, -3.52485}, {0.90, -3.28527}, {0.95, -3.08769},
                                          {0.97, -2.96091}, {0.99, -2.71015}}};

const std::array<Quantile, 18>& table(BreakModel model) {
    switch (model) {
        case BreakModel::Intercept: return kIntercept;
        case BreakModel::Trend: return kTrend;
        case BreakModel::Both: return kBoth;
    }
    return kIntercept;
}

struct OlsT {
    double t_alpha = kNaN;
    double t_last = kNaN;
};

// Classical OLS; returns t-statistics for column `alpha` and for the last column.
OlsT classical_t(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::Index alpha) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (n - p < 1) return {};
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) return {};
    const Eigen::VectorXd b = qr.solve(y);
    const Eigen::VectorXd e = y - x * b;
    const double s2 = e.squaredNorm() / static_cast<double>(n - p);
    const Eigen::MatrixXd xtx_inv = (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    OlsT out;
    const double va = s2 * xtx_inv(alpha, alpha);
    const double vl = s2 * xtx_inv(p - 1, p - 1);
    if (va > 0) out.t_alpha = b(alpha) / std::sqrt(va);
    if (vl > 0) out.t_last = b(p - 1) / std::sqrt(vl);
    return out;
}

int deterministic_columns(BreakModel model) { return model == BreakModel::Both ? 4 : 3; }

}  // namespace

std::string_view to_string(BreakModel model) {
    switch (model) {
        case BreakModel::Intercept: return "intercept";
        case BreakModel::Trend: return "trend";
        case BreakModel::Both: return "both";
    }
    return "intercept";
}

BreakModel model_from_string(std::string_view text) {
    if (text == "intercept") return BreakModel::Intercept;
    if (text == "trend") return BreakModel::Trend;
    if (text == "both") return BreakModel::Both;
    throw_config(kModule, "UnknownModel", "unknown break model '" + std::string(text) + "'");
}

CriticalValues critical_values(BreakModel model) {
    const auto& t = table(model);
    return {t[0].value, t[2].value, t[3].value};
}

double approximate_p_value(double statistic, BreakModel model) {
    const auto& t = table(model);
    if (statistic <= t.front().value) return t.front().level;
    if (statistic >= t.back().value) return t.back().level;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (statistic <= t[i].value) {
            const double w = (statistic - t[i - 1].value) / (t[i].value - t[i - 1].value);
            return t[i - 1].level + w * (t[i].level - t[i - 1].level);
        }
    }
    return t.back().level;
}

BreakTestResult zivot_andrews(std::span<const double> series, ZaOptions options, std::span<const double> labels) {
    if (!(options.trim > 0.0 && options.trim < 0.5))
        throw_config(kModule, "BadTrim", "trim must lie in (0, 0.5)");
    if (!labels.empty() && labels.size() != series.size())
        throw_config(kModule, "BadLabels", "labels must match the series length");
    for (double v : series)
        if (!std::isfinite(v)) throw_data(kModule, "NonFinite", "series contains non-finite values");

    const auto big_t = static_cast<int>(series.size());
    const int k = static_cast<int>(std::ceil(options.trim * big_t - 1e-12));
    const int first = k;
    const int last = big_t - 1 - k;
    const int det = deterministic_columns(options.model);

    int max_lag = options.max_lag;
    if (max_lag < 0) {
        const int schwert = static_cast<int>(std::floor(12.0 * std::pow(big_t / 100.0, 0.25)));
        max_lag = std::clamp((big_t - 1 - det - 1 - 4) / 2, 0, schwert);
    }
    // Common sample: rows t = max_lag + 1 .. T-1 (0-based), plus room for the regressors.
    const int n_rows = big_t - 1 - max_lag;
    if (last < first || n_rows - (det + 1 + max_lag) < 1)
        throw_data(kModule, "SeriesTooShort",
                   "series of length " + std::to_string(big_t) + " leaves no usable break candidates");

    Eigen::VectorXd dy(n_rows);
    Eigen::VectorXd ylag(n_rows);
    Eigen::MatrixXd dlags(n_rows, max_lag);
    for (int r = 0; r < n_rows; ++r) {
        const int t = r + max_lag + 1;
        dy(r) = series[static_cast<std::size_t>(t)] - series[static_cast<std::size_t>(t - 1)];
        ylag(r) = series[static_cast<std::size_t>(t - 1)];
        for (int j = 1; j <= max_lag; ++j)
            dlags(r, j - 1) = series[static_cast<std::size_t>(t - j)] - series[static_cast<std::size_t>(t - j - 1)];
    }

    BreakTestResult out;
    out.trim = options.trim;
    out.model = options.model;
    out.max_lag = max_lag;
    out.critical = critical_values(options.model);
    out.min_t = std::numeric_limits<double>::infinity();
    bool found = false;

    for (int b = first; b <= last; ++b) {
        Eigen::MatrixXd base(n_rows, det + 1);
        for (int r = 0; r < n_rows; ++r) {
            const int t = r + max_lag + 1;
            const double du = t >= b ? 1.0 : 0.0;
            const double dt = t >= b ? static_cast<double>(t - b + 1) : 0.0;
            int c = 0;
            base(r, c++) = 1.0;
            if (options.model != BreakModel::Trend) base(r, c++) = du;
            base(r, c++) = static_cast<double>(t);
            if (options.model != BreakModel::Intercept) base(r, c++) = dt;
            base(r, c) = ylag(r);
        }
        const Eigen::Index alpha = det;

        int chosen = 0;
        OlsT fit;
        for (int j = max_lag; j >= 0; --j) {
            Eigen::MatrixXd x(n_rows, det + 1 + j);
            x.leftCols(det + 1) = base;
            if (j > 0) x.rightCols(j) = dlags.leftCols(j);
            fit = classical_t(x, dy, alpha);
            if (j == 0 || (std::isfinite(fit.t_last) && std::abs(fit.t_last) > 1.645)) {
                chosen = j;
                break;
            }
        }
        out.candidates.push_back(static_cast<std::size_t>(b));
        out.t_stats.push_back(fit.t_alpha);
        if (std::isfinite(fit.t_alpha) && fit.t_alpha < out.min_t) {
            out.min_t = fit.t_alpha;
            out.break_index = static_cast<std::size_t>(b);
            out.lag = chosen;
            found = true;
        }
    }
    if (!found) throw_data(kModule, "SeriesTooShort", "every candidate regression was singular");

    out.break_year = labels.empty() ? static_cast<double>(out.break_index) : labels[out.break_index];
    out.p_value = approximate_p_value(out.min_t, options.model);
    if (big_t < 25) out.warnings.emplace_back("ShortSeries");
    out.warnings.emplace_back("p_value_approximate");
    return out;
}

Series aggregate_series(const panel::BalancedPanel& panel, std::span<const panel::Region> regions) {
    Series out;
    out.years = panel.years();
    out.values.assign(panel.n_years(), 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < panel.n_cities(); ++i) {
        const auto region = panel.cities()[i].region;
        if (!regions.empty() && std::find(regions.begin(), regions.end(), region) == regions.end()) continue;
        ++count;
        for (std::size_t t = 0; t < panel.n_years(); ++t) out.values[t] += panel.population(i, t);
    }
    if (count == 0) throw_data(kModule, "EmptyRegion", "no cities match the region filter");
    for (double& v : out.values) v /= static_cast<double>(count);
    return out;
}

}  // namespace hp::breaks
