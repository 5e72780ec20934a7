#include <cmath>
#include <limits>

#include <doctest.h>

#include "helpers.hpp"
#include "histpanel/breaks.hpp"
#include "histpanel/rng.hpp"

using namespace hp;
using hp::test::error_code;
using hp::test::make_panel;

namespace {

std::vector<double> ar_with_shift(std::uint64_t seed, int n, int at, double shift) {
    Rng rng(seed);
    std::vector<double> y(static_cast<std::size_t>(n));
    double prev = 0;
    for (int t = 0; t < n; ++t) {
        prev = 0.5 * prev + rng.normal();
        y[static_cast<std::size_t>(t)] = prev + (t >= at ? shift : 0.0);
    }
    return y;
}

// Lag-0 intercept-model t statistic at candidate b via normal equations.
double oracle_t(const std::vector<double>& y, int b) {
    const int n = static_cast<int>(y.size()) - 1;
    Eigen::MatrixXd x(n, 4);
    Eigen::VectorXd dy(n);
    for (int r = 0; r < n; ++r) {
        const int t = r + 1;
        x(r, 0) = 1;
        x(r, 1) = t >= b;
        x(r, 2) = t;
        x(r, 3) = y[static_cast<std::size_t>(t - 1)];
        dy(r) = y[static_cast<std::size_t>(t)] - y[static_cast<std::size_t>(t - 1)];
    }
    const Eigen::MatrixXd inv = (x.transpose() * x).inverse();
    const Eigen::VectorXd beta = inv * x.transpose() * dy;
    const double s2 = (dy - x * beta).squaredNorm() / (n - 4);
    return beta(3) / std::sqrt(s2 * inv(3, 3));
}

}  // namespace

TEST_SUITE("breaks") {

TEST_CASE("candidate statistics match a direct regression") {
    const auto y = ar_with_shift(7, 60, 30, 3.0);
    breaks::ZaOptions opt;
    opt.max_lag = 0;
    const auto r = breaks::zivot_andrews(y, opt);
    CHECK(r.candidates.front() == 9);
    CHECK(r.candidates.back() == 50);
    for (std::size_t c = 0; c < r.candidates.size(); ++c)
        CHECK(r.t_stats[c] == doctest::Approx(oracle_t(y, static_cast<int>(r.candidates[c]))).epsilon(1e-9));
    double best = std::numeric_limits<double>::infinity();
    for (double t : r.t_stats) best = std::min(best, t);
    CHECK(r.min_t == best);
}

TEST_CASE("planted shift is located") {
    const auto y = ar_with_shift(19, 120, 60, 6.0);
    const auto r = breaks::zivot_andrews(y);
    CHECK(std::abs(static_cast<int>(r.break_index) - 60) <= 1);
    CHECK(r.min_t < r.critical.five);
    CHECK(r.p_value <= 0.05);
}

TEST_CASE("invariant to shifting and scaling the series") {
    const auto y = ar_with_shift(23, 80, 35, 4.0);
    auto z = y;
    for (double& v : z) v = 3.5 * v + 1000.0;
    const auto a = breaks::zivot_andrews(y);
    const auto b = breaks::zivot_andrews(z);
    CHECK(a.break_index == b.break_index);
    CHECK(a.lag == b.lag);
    CHECK(a.min_t == doctest::Approx(b.min_t).epsilon(1e-8));
}

TEST_CASE("labels carry through to the break year") {
    const auto y = ar_with_shift(29, 40, 20, 6.0);
    std::vector<double> labels(40);
    for (int i = 0; i < 40; ++i) labels[static_cast<std::size_t>(i)] = 1000 + 10 * i;
    const auto r = breaks::zivot_andrews(y, {}, labels);
    CHECK(r.break_year == labels[r.break_index]);
}

TEST_CASE("critical values and p values") {
    const auto cv = breaks::critical_values(breaks::BreakModel::Intercept);
    CHECK(cv.one == -5.34);
    CHECK(cv.five == -4.80);
    CHECK(cv.ten == -4.58);
    CHECK(breaks::critical_values(breaks::BreakModel::Both).five == -5.08);
    CHECK(breaks::approximate_p_value(-4.80, breaks::BreakModel::Intercept) == doctest::Approx(0.05));
    CHECK(breaks::approximate_p_value(-9.0, breaks::BreakModel::Intercept) == 0.01);
    CHECK(breaks::approximate_p_value(0.0, breaks::BreakModel::Intercept) == 0.99);
    double prev = 0;
    for (double s = -6; s < -1; s += 0.25) {
        const double p = breaks::approximate_p_value(s, breaks::BreakModel::Trend);
        CHECK(p >= prev);
        prev = p;
    }
}

TEST_CASE("short and non-finite series") {
    const std::vector<double> tiny{1, 2, 3, 4, 5};
    CHECK(error_code([&] { breaks::zivot_andrews(tiny); }) == "SeriesTooShort");
    auto bad = ar_with_shift(3, 40, 20, 1.0);
    bad[7] = std::numeric_limits<double>::quiet_NaN();
    CHECK(error_code([&] { breaks::zivot_andrews(bad); }) == "NonFinite");
    const auto eleven = ar_with_shift(5, 11, 5, 4.0);
    breaks::ZaOptions opt;
    opt.max_lag = 0;
    const auto r = breaks::zivot_andrews(eleven, opt);
    CHECK(std::find(r.warnings.begin(), r.warnings.end(), "ShortSeries") != r.warnings.end());
    CHECK(error_code([] { breaks::model_from_string("level"); }) == "UnknownModel");
}

TEST_CASE("aggregate series averages cities") {
    const auto p = make_panel({{"A", "", panel::Region::NorthAfrica}, {"B", "", panel::Region::NorthAfrica},
                               {"C", "", panel::Region::WesternEurope}},
                              [](std::size_t i, std::size_t) { return i == 0 ? 10.0 : i == 1 ? 20.0 : 99.0; });
    const std::vector<panel::Region> na{panel::Region::NorthAfrica};
    const auto s = breaks::aggregate_series(p, na);
    CHECK(s.years.size() == 11);
    for (double v : s.values) CHECK(v == 15.0);
    CHECK(breaks::aggregate_series(p).values[0] == doctest::Approx(43.0));
    const std::vector<panel::Region> none{panel::Region::Granada};
    CHECK(error_code([&] { breaks::aggregate_series(p, none); }) == "EmptyRegion");
}

}  // TEST_SUITE
