#include "histpanel/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <sstream>

#include "histpanel/csv.hpp"
#include "histpanel/regression.hpp"

namespace hp::report {

namespace {

std::string city_label(const panel::BalancedPanel& panel, std::size_t i) {
    const auto& c = panel.cities()[i];
    return c.name.empty() ? c.city_id : c.name;
}

DescribeRow summarize(std::string label, const panel::BalancedPanel& panel, const Eigen::MatrixXd& values) {
    DescribeRow row;
    row.label = std::move(label);
    row.obs = values.size();
    row.mean = values.mean();
    const double n = static_cast<double>(values.size());
    row.sd = n > 1 ? std::sqrt((values.array() - row.mean).square().sum() / (n - 1.0)) : 0.0;
    Eigen::Index imin = 0, tmin = 0, imax = 0, tmax = 0;
    row.min = values.minCoeff(&imin, &tmin);
    row.max = values.maxCoeff(&imax, &tmax);
    row.min_city = city_label(panel, static_cast<std::size_t>(imin));
    row.max_city = city_label(panel, static_cast<std::size_t>(imax));
    return row;
}

std::string trim_number(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

std::string stars(double p) {
    if (!std::isfinite(p)) return "";
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.10) return "*";
    return "";
}

std::string format_number(double value, int decimals) {
    if (!std::isfinite(value)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    std::string s = buf;
    if (s.rfind("0.", 0) == 0) s.erase(0, 1);
    else if (s.rfind("-0.", 0) == 0) s.erase(1, 1);
    if (s[0] == '-' && s.find_first_not_of("-.0") == std::string::npos) s.erase(0, 1);
    return s;
}

std::string format_count(long long value) {
    std::string digits = std::to_string(value < 0 ? -value : value);
    std::string out;
    for (std::size_t k = 0; k < digits.size(); ++k) {
        if (k > 0 && (digits.size() - k) % 3 == 0) out += ',';
        out += digits[k];
    }
    return value < 0 ? "-" + out : out;
}

std::string format_coef(double estimate, double p_value) { return format_number(estimate) + stars(p_value); }

std::string format_se(double se) { return "(" + format_number(se) + ")"; }

std::string table3(const std::vector<Table3Column>& columns) {
    std::ostringstream os;
    auto row = [&](const std::string& label, auto cell) {
        os << label;
        for (std::size_t c = 0; c < columns.size(); ++c) os << '\t' << cell(c);
        os << '\n';
    };
    auto p_cell = [](double p) {
        if (!std::isfinite(p)) return std::string();
        std::ostringstream v;
        v << std::fixed << std::setprecision(3) << p;
        return "(" + v.str() + ")";
    };
    row("", [&](std::size_t c) {
        return c > 0 && columns[c - 1].sample == columns[c].sample ? std::string() : columns[c].sample;
    });
    row("", [&](std::size_t c) { return "(" + std::to_string(c + 1) + ")"; });
    row("", [&](std::size_t c) { return columns[c].variant; });
    row("Exposure", [&](std::size_t c) { return columns[c].exposure; });
    row("Treatment", [&](std::size_t c) { return columns[c].exposure; });
    row("Panel A: Dependent variable: city population (log)", [](std::size_t) { return std::string(); });
    for (std::size_t k = 0; k < columns.size(); ++k) {
        const auto& r = columns[k].result;
        row(columns[k].row_label, [&](std::size_t c) { return c == k ? format_coef(r.lambda, r.p_value) : std::string(); });
        row("", [&](std::size_t c) { return c == k ? format_se(r.se) : std::string(); });
    }
    row("# treatment-control paired observations", [&](std::size_t c) { return format_count(columns[c].result.fit.n_obs); });
    row("Structural controls", [&](std::size_t c) { return columns[c].controls_p ? "YES" : "NO"; });
    row("(p-values)", [&](std::size_t c) {
        return columns[c].controls_p ? p_cell(*columns[c].controls_p) : std::string();
    });
    row("City-fixed effects", [&](std::size_t) { return std::string("YES"); });
    row("(p-value)", [&](std::size_t c) { return p_cell(columns[c].result.city_fe_p); });
    row("Time-fixed effects (p-value)", [&](std::size_t) { return std::string("YES"); });
    row("", [&](std::size_t c) { return p_cell(columns[c].result.year_fe_p); });
    return os.str();
}

std::string table8(const std::vector<Table8Column>& columns) {
    std::ostringstream os;
    auto row = [&](const std::string& label, auto cell) {
        os << label;
        for (std::size_t c = 0; c < columns.size(); ++c) os << '\t' << cell(c);
        os << '\n';
    };
    auto p_of = [](const gsynth::YearAtt& a) {
        return a.se > 0 ? reg::normal_two_sided_p(a.att / a.se) : std::numeric_limits<double>::quiet_NaN();
    };
    row("", [&](std::size_t c) { return columns[c].label; });
    row("", [&](std::size_t c) { return "(" + std::to_string(c + 1) + ")"; });
    row("", [&](std::size_t) { return std::string("Interactive fixed-effects algorithm"); });
    row("Panel A: Overall ATT estimate", [](std::size_t) { return std::string(); });
    row("λ_1", [&](std::size_t c) {
        const auto& o = columns[c].result.overall;
        return format_coef(o.att, p_of(o)) + " " + format_se(o.se);
    });
    row("Empirical 95% confidence intervals", [&](std::size_t c) {
        const auto& o = columns[c].result.overall;
        return "(" + format_number(o.lower) + ", " + format_number(o.upper) + ")";
    });
    row("Panel B: Estimated ATT by year", [](std::size_t) { return std::string(); });
    std::vector<int> years;
    for (const auto& col : columns)
        for (const auto& y : col.result.by_year)
            if (std::find(years.begin(), years.end(), y.year) == years.end()) years.push_back(y.year);
    std::sort(years.begin(), years.end());
    for (int year : years) {
        auto find = [&](std::size_t c) -> const gsynth::YearAtt* {
            for (const auto& y : columns[c].result.by_year)
                if (y.year == year) return &y;
            return nullptr;
        };
        row("λ_{1," + std::to_string(year) + "}", [&](std::size_t c) {
            const auto* y = find(c);
            return y ? format_coef(y->att, p_of(*y)) : std::string();
        });
        row("", [&](std::size_t c) {
            const auto* y = find(c);
            return y ? format_se(y->se) : std::string();
        });
    }
    return os.str();
}

std::vector<DescribeRow> describe(const panel::BalancedPanel& panel,
                                  const std::optional<panel::InstitutionPanel>& institutions) {
    std::vector<DescribeRow> rows;
    rows.push_back(summarize("City population (in 000)", panel, panel.population_matrix()));
    if (institutions) {
        rows.push_back(summarize("Universities", panel, institutions->university));
        rows.push_back(summarize("# madrasas", panel, institutions->madrasa_count));
        rows.push_back(summarize("Law faculties", panel, institutions->law_faculty));
    }
    const auto cov = panel::covariate_panel(panel);
    const auto n = static_cast<Eigen::Index>(panel.n_cities());
    const auto t = static_cast<Eigen::Index>(panel.n_years());
    for (std::size_t j = 0; j < cov.size(); ++j) {
        Eigen::MatrixXd m(n, t);
        for (Eigen::Index s = 0; s < t; ++s) m.col(s) = cov.by_year[static_cast<std::size_t>(s)].col(static_cast<Eigen::Index>(j));
        rows.push_back(summarize(cov.names[j], panel, m));
    }
    return rows;
}

std::string table1(const std::vector<DescribeRow>& rows) {
    std::ostringstream os;
    os << "\tObs\tMean\tStd\tMin\tMax\n";
    for (const auto& r : rows) {
        char mean[64], sd[64];
        std::snprintf(mean, sizeof mean, "%.3f", r.mean);
        std::snprintf(sd, sizeof sd, "%.3f", r.sd);
        os << r.label << '\t' << format_count(r.obs) << '\t' << mean << '\t' << sd << '\t' << trim_number(r.min) << " ("
           << r.min_city << ")\t" << trim_number(r.max) << " (" << r.max_city << ")\n";
    }
    return os.str();
}

}  // namespace hp::report
