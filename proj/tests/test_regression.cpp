#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <doctest.h>

#include "helpers.hpp"
#include "histpanel/regression.hpp"
#include "histpanel/rng.hpp"

using namespace hp;
using hp::test::error_code;

namespace {

struct Unbalanced {
    std::vector<int> city, year;
    Eigen::VectorXd x, d, y;
};

// Unbalanced panel with additive fixed effects and noise.
Unbalanced unbalanced(std::uint64_t seed, int n_city = 15, int n_year = 8) {
    Rng rng(seed);
    Unbalanced u;
    std::vector<double> xs, ds, ys;
    std::vector<double> a(static_cast<std::size_t>(n_city)), b(static_cast<std::size_t>(n_year));
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    for (int i = 0; i < n_city; ++i)
        for (int t = 0; t < n_year; ++t) {
            if (rng.uniform() < 0.2) continue;
            const double x = rng.normal() + 0.3 * a[static_cast<std::size_t>(i)];
            const double d = rng.uniform() < 0.4 ? 1.0 : 0.0;
            u.city.push_back(i);
            u.year.push_back(t);
            xs.push_back(x);
            ds.push_back(d);
            ys.push_back(a[static_cast<std::size_t>(i)] + b[static_cast<std::size_t>(t)] + 1.5 * x - 0.7 * d +
                         0.5 * rng.normal());
        }
    u.x = Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    u.d = Eigen::Map<Eigen::VectorXd>(ds.data(), static_cast<Eigen::Index>(ds.size()));
    u.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    return u;
}

reg::DataFrame frame_of(const Unbalanced& u) {
    reg::DataFrame f(u.city.size());
    f.add("y", u.y);
    f.add("x", u.x);
    f.add("d", u.d);
    f.add_factor("city", u.city);
    f.add_factor("year", u.year);
    return f;
}

}  // namespace

TEST_SUITE("regression") {

TEST_CASE("two-way demeaning of a 2x2 grid") {
    const std::vector<int> c{0, 0, 1, 1}, t{0, 1, 0, 1};
    std::vector<reg::Factor> fs{reg::make_factor("c", c), reg::make_factor("t", t)};
    Eigen::MatrixXd data(4, 1);
    data << 1, 2, 3, 5;
    const auto w = reg::within_transform(data, fs);
    CHECK(w.converged);
    CHECK(w.data(0, 0) == doctest::Approx(0.25));
    CHECK(w.data(1, 0) == doctest::Approx(-0.25));
    CHECK(w.data(2, 0) == doctest::Approx(-0.25));
    CHECK(w.data(3, 0) == doctest::Approx(0.25));
}

TEST_CASE("one-way demeaning and constants") {
    const std::vector<int> g{3, 3, 7, 7, 7};
    std::vector<reg::Factor> fs{reg::make_factor("g", g)};
    CHECK(fs[0].levels == 2);
    Eigen::MatrixXd data(5, 2);
    data << 1, 4, 3, 4, 2, 9, 4, 9, 6, 9;
    const auto w = reg::within_transform(data, fs);
    CHECK(w.data(0, 0) == doctest::Approx(-1));
    CHECK(w.data(4, 0) == doctest::Approx(2));
    CHECK(w.data.col(1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("intersect builds one level per observed pair") {
    const std::vector<int> a{0, 0, 1, 1, 0}, b{5, 6, 5, 5, 5};
    const auto f = reg::intersect(reg::make_factor("a", a), reg::make_factor("b", b));
    CHECK(f.levels == 3);
    CHECK(f.codes[0] == f.codes[4]);
    CHECK(f.codes[2] == f.codes[3]);
    CHECK(f.codes[0] != f.codes[1]);
}

TEST_CASE("exact linear fit") {
    reg::DataFrame f(5);
    Eigen::VectorXd x(5);
    x << 1, 2, 3, 4, 5;
    f.add("x", x);
    f.add("y", 2.0 * x);
    reg::DesignSpec spec{"y", {"x"}, {}, {}, std::nullopt, false};
    const auto fit = reg::ols_fit(spec, f);
    CHECK(fit.coef(0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-12);
    spec.intercept = true;
    const auto fit2 = reg::ols_fit(spec, f);
    CHECK(fit2.coef(fit2.index("x")) == doctest::Approx(2.0));
}

TEST_CASE("additive grid with a treatment dummy") {
    std::vector<int> c, t;
    std::vector<double> y, d;
    for (int i = 0; i < 4; ++i)
        for (int s = 0; s < 5; ++s) {
            c.push_back(i);
            t.push_back(s);
            const double treat = (i < 2 && s >= 3) ? 1.0 : 0.0;
            d.push_back(treat);
            y.push_back(0.3 * i - 0.2 * s * s + 0.5 * treat);
        }
    reg::DataFrame f(c.size());
    f.add("y", Eigen::Map<Eigen::VectorXd>(y.data(), 20));
    f.add("D", Eigen::Map<Eigen::VectorXd>(d.data(), 20));
    f.add_factor("c", c);
    f.add_factor("t", t);
    const auto fit = reg::ols_fit({"y", {"D"}, {"c", "t"}, {"c"}, std::nullopt, true}, f);
    CHECK(fit.coef(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(fit.cluster_counts.at("c") == 4);
    CHECK(fit.ref_df == 3);
}

TEST_CASE("absorbed fit matches explicit dummies") {
    const auto u = unbalanced(11);
    auto f = frame_of(u);
    const auto absorbed = reg::ols_fit({"y", {"x", "d"}, {"city", "year"}, {}, std::nullopt, true}, f);

    std::vector<std::string> names{"x", "d"};
    for (int i = 1; i < 15; ++i) {
        Eigen::VectorXd col(static_cast<Eigen::Index>(u.city.size()));
        for (std::size_t r = 0; r < u.city.size(); ++r) col(static_cast<Eigen::Index>(r)) = u.city[r] == i;
        f.add("c" + std::to_string(i), col);
        names.push_back("c" + std::to_string(i));
    }
    for (int t = 1; t < 8; ++t) {
        Eigen::VectorXd col(static_cast<Eigen::Index>(u.year.size()));
        for (std::size_t r = 0; r < u.year.size(); ++r) col(static_cast<Eigen::Index>(r)) = u.year[r] == t;
        f.add("t" + std::to_string(t), col);
        names.push_back("t" + std::to_string(t));
    }
    const auto dummies = reg::ols_fit({"y", names, {}, {}, std::nullopt, true}, f);
    CHECK(absorbed.coef(0) == doctest::Approx(dummies.coef(dummies.index("x"))).epsilon(1e-8));
    CHECK(absorbed.coef(1) == doctest::Approx(dummies.coef(dummies.index("d"))).epsilon(1e-8));
    CHECK((absorbed.residuals - dummies.residuals).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(absorbed.coef(0) == doctest::Approx(1.5).epsilon(0.1));
}

TEST_CASE("weighted fit matches scaled least squares") {
    const auto u = unbalanced(5);
    auto f = frame_of(u);
    Rng rng(9);
    Eigen::VectorXd w(u.y.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = 0.5 + rng.uniform();
    f.add("w", w);
    const auto fit = reg::ols_fit({"y", {"x", "d"}, {}, {}, std::string("w"), true}, f);
    Eigen::MatrixXd x(u.y.size(), 3);
    x.col(0) = u.x;
    x.col(1) = u.d;
    x.col(2).setOnes();
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Eigen::VectorXd beta = (sw.asDiagonal() * x).colPivHouseholderQr().solve(sw.asDiagonal() * u.y);
    CHECK(fit.coef(fit.index("x")) == doctest::Approx(beta(0)).epsilon(1e-10));
    CHECK(fit.coef(fit.index("d")) == doctest::Approx(beta(1)).epsilon(1e-10));
}

TEST_CASE("residuals are orthogonal to the within design") {
    const auto u = unbalanced(21);
    const auto fit = reg::ols_fit({"y", {"x", "d"}, {"city", "year"}, {}, std::nullopt, true}, frame_of(u));
    const Eigen::VectorXd g = fit.design.transpose() * fit.residuals;
    CHECK(g.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("row permutation leaves the fit unchanged") {
    const auto u = unbalanced(33);
    const auto base =
        reg::ols_fit({"y", {"x", "d"}, {"city", "year"}, {"city", "year"}, std::nullopt, true}, frame_of(u));
    std::vector<std::size_t> perm(u.city.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::rotate(perm.begin(), perm.begin() + 7, perm.end());
    Unbalanced p = u;
    for (std::size_t r = 0; r < perm.size(); ++r) {
        const auto s = static_cast<Eigen::Index>(perm[r]);
        p.city[r] = u.city[perm[r]];
        p.year[r] = u.year[perm[r]];
        p.x(static_cast<Eigen::Index>(r)) = u.x(s);
        p.d(static_cast<Eigen::Index>(r)) = u.d(s);
        p.y(static_cast<Eigen::Index>(r)) = u.y(s);
    }
    const auto moved =
        reg::ols_fit({"y", {"x", "d"}, {"city", "year"}, {"city", "year"}, std::nullopt, true}, frame_of(p));
    CHECK((base.coef - moved.coef).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((base.vcov - moved.vcov).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("singleton clusters in both dimensions reduce to HC1") {
    const auto u = unbalanced(44);
    auto f = frame_of(u);
    std::vector<int> ids(u.city.size());
    std::iota(ids.begin(), ids.end(), 0);
    f.add_factor("row_a", ids);
    f.add_factor("row_b", ids);
    const auto hc = reg::ols_fit({"y", {"x", "d"}, {}, {}, std::nullopt, true}, f);
    CHECK(hc.vcov_type == "hc1");
    const auto two = reg::ols_fit({"y", {"x", "d"}, {}, {"row_a", "row_b"}, std::nullopt, true}, f);
    CHECK((two.vcov - hc.vcov).cwiseAbs().maxCoeff() < 1e-12 * hc.vcov.cwiseAbs().maxCoeff());

    // independent HC1 oracle
    const Eigen::MatrixXd& x = hc.design;
    const double n = static_cast<double>(x.rows()), k = static_cast<double>(x.cols());
    const Eigen::MatrixXd bread = (x.transpose() * x).inverse();
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(x.cols(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        meat += hc.residuals(i) * hc.residuals(i) * x.row(i).transpose() * x.row(i);
    const Eigen::MatrixXd oracle = n / (n - k) * bread * meat * bread;
    CHECK((oracle - hc.vcov).cwiseAbs().maxCoeff() < 1e-12 * oracle.cwiseAbs().maxCoeff());
}

TEST_CASE("one-way cluster variance oracle") {
    const auto u = unbalanced(55);
    const auto fit = reg::ols_fit({"y", {"x", "d"}, {}, {"city"}, std::nullopt, true}, frame_of(u));
    const Eigen::MatrixXd& x = fit.design;
    const double n = static_cast<double>(x.rows()), k = static_cast<double>(x.cols()), g = 15;
    const Eigen::MatrixXd bread = (x.transpose() * x).inverse();
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(x.cols(), x.cols());
    for (int c = 0; c < 15; ++c) {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            if (u.city[static_cast<std::size_t>(i)] == c) s += x.row(i).transpose() * fit.residuals(i);
        meat += s * s.transpose();
    }
    const Eigen::MatrixXd oracle = g / (g - 1) * (n - 1) / (n - k) * bread * meat * bread;
    CHECK((oracle - fit.vcov).cwiseAbs().maxCoeff() < 1e-12 * oracle.cwiseAbs().maxCoeff());
    CHECK(fit.ref_df == 14);
    CHECK(fit.p_value(0) == doctest::Approx(reg::student_two_sided_p(fit.t_stat(0), 14)));
}

TEST_CASE("fit errors") {
    const auto u = unbalanced(66);
    auto f = frame_of(u);
    Eigen::VectorXd city_level(u.y.size());
    for (Eigen::Index i = 0; i < city_level.size(); ++i) city_level(i) = u.city[static_cast<std::size_t>(i)] % 3;
    f.add("z", city_level);
    f.add("x2", 2.0 * u.x);
    f.add_factor("one", std::vector<int>(u.city.size(), 1));
    CHECK(error_code([&] { reg::ols_fit({"y", {"x", "z"}, {"city"}, {}, std::nullopt, true}, f); }) == "NoVariation");
    CHECK(error_code([&] { reg::ols_fit({"y", {"x", "x2"}, {}, {}, std::nullopt, true}, f); }) == "RankDeficient");
    CHECK(error_code([&] { reg::ols_fit({"y", {"x"}, {}, {"one"}, std::nullopt, true}, f); }) == "SingleCluster");
}

TEST_CASE("logit recovers its parameters") {
    Rng rng(3);
    const int n = 20000;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = rng.normal();
        const double p = 1.0 / (1.0 + std::exp(-(-0.5 + 1.0 * x(i, 1))));
        y(i) = rng.uniform() < p ? 1.0 : 0.0;
    }
    const auto fit = reg::logit_fit(y, x);
    CHECK(fit.coef(0) == doctest::Approx(-0.5).epsilon(0.1));
    CHECK(fit.coef(1) == doctest::Approx(1.0).epsilon(0.1));
    CHECK(fit.fitted.minCoeff() > 0.0);
    CHECK(fit.fitted.maxCoeff() < 1.0);
    // score equations
    const Eigen::VectorXd score = x.transpose() * (y - fit.fitted);
    CHECK(score.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("logit detects separation") {
    Eigen::MatrixXd x(6, 2);
    Eigen::VectorXd y(6);
    for (int i = 0; i < 6; ++i) {
        x(i, 0) = 1;
        x(i, 1) = i - 2.5;
        y(i) = i >= 3;
    }
    CHECK(error_code([&] { reg::logit_fit(y, x); }) == "Separation");
}

TEST_CASE("wald test") {
    Eigen::VectorXd b(2);
    b << 1.0, 3.0;
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(2, 2) * 0.25;
    Eigen::MatrixXd r(1, 2);
    r << 1, 0;
    const auto w = reg::wald_test(b, v, r, Eigen::VectorXd::Zero(1));
    CHECK(w.statistic == doctest::Approx(4.0));
    CHECK(w.df == 1);
    CHECK(w.p_value == doctest::Approx(std::erfc(2.0 / std::sqrt(2.0))).epsilon(1e-10));
    Eigen::VectorXd held(1);
    held << 1.0;
    const auto z = reg::wald_test(b, v, r, held);
    CHECK(z.statistic == 0.0);
    CHECK(z.p_value == 1.0);
    Eigen::MatrixXd r2(2, 2);
    r2 << 1, 1, 2, 2;
    CHECK(error_code([&] { reg::wald_test(b, v, r2, Eigen::VectorXd::Zero(2)); }) == "SingularRVR");
}

TEST_CASE("reference distributions") {
    CHECK(reg::normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-10));
    CHECK(reg::normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    for (double t : {0.3, 1.0, 2.5, 10.0})
        CHECK(reg::student_two_sided_p(t, 1) == doctest::Approx(1.0 - 2.0 / std::numbers::pi * std::atan(t)).epsilon(1e-12));
    for (double x : {0.1, 1.0, 5.0}) CHECK(reg::chi2_survival(x, 2) == doctest::Approx(std::exp(-x / 2)).epsilon(1e-12));
    for (double f : {0.5, 2.0, 7.0})
        CHECK(reg::f_survival(f, 2, 12) == doctest::Approx(std::pow(1.0 + 2.0 * f / 12.0, -6.0)).epsilon(1e-12));
    reg::FitResult fit;
    CHECK(fit.critical_value() == doctest::Approx(1.959963984540054).epsilon(1e-12));
    fit.ref_df = 1;
    CHECK(fit.critical_value() == doctest::Approx(std::tan(std::numbers::pi * 0.475)).epsilon(1e-10));
}

}  // TEST_SUITE
