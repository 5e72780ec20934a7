#include <sstream>

#include <doctest.h>

#include "helpers.hpp"
#include "histpanel/report.hpp"

using namespace hp;

namespace {

std::vector<std::vector<std::string>> split_tsv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, '\t')) cells.push_back(cell);
        if (!line.empty() && line.back() == '\t') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

report::Table3Column column(std::string sample, double lambda, double p) {
    report::Table3Column c;
    c.sample = std::move(sample);
    c.variant = "Isolated";
    c.exposure = "Binary";
    c.row_label = "Post × Madrasa";
    c.result.lambda = lambda;
    c.result.se = 0.1;
    c.result.p_value = p;
    c.result.fit.n_obs = 8723;
    c.result.city_fe_p = 0.0;
    c.result.year_fe_p = 0.0123;
    return c;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("numbers drop the leading zero") {
    CHECK(report::format_number(0.557) == ".557");
    CHECK(report::format_number(-0.578) == "-.578");
    CHECK(report::format_number(-2.4941) == "-2.494");
    CHECK(report::format_number(-0.0001) == ".000");
    CHECK(report::format_number(12.5, 1) == "12.5");
    CHECK(report::format_number(std::nan("")) == "NA");
    CHECK(report::format_se(0.108) == "(.108)");
}

TEST_CASE("stars and counts") {
    CHECK(report::stars(0.001) == "***");
    CHECK(report::stars(0.03) == "**");
    CHECK(report::stars(0.07) == "*");
    CHECK(report::stars(0.5).empty());
    CHECK(report::format_coef(-0.912, 0.0001) == "-.912***");
    CHECK(report::format_count(8723) == "8,723");
    CHECK(report::format_count(999) == "999");
    CHECK(report::format_count(1234567) == "1,234,567");
    CHECK(report::format_count(0) == "0");
}

TEST_CASE("static table layout") {
    auto a = column("Europe", 0.557, 0.001);
    auto b = column("Islamic countries", -0.578, 0.2);
    b.controls_p = 0.5;
    const auto rows = split_tsv(report::table3({a, b}));
    REQUIRE(rows.size() > 10);
    CHECK(rows[0] == std::vector<std::string>{"", "Europe", "Islamic countries"});
    CHECK(rows[1] == std::vector<std::string>{"", "(1)", "(2)"});
    bool coef = false, se = false, fe = false;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        if (r[0] == "Post × Madrasa" && r.size() == 3 && r[1] == ".557***") {
            coef = true;
            se = rows[k + 1][1] == "(.100)";
        }
        if (r[0] == "City-fixed effects") fe = rows[k + 1][1] == "(0.000)";
        if (r[0] == "# treatment-control paired observations") CHECK(r[1] == "8,723");
        if (r[0] == "Structural controls") CHECK(r == std::vector<std::string>{"Structural controls", "NO", "YES"});
    }
    CHECK(coef);
    CHECK(se);
    CHECK(fe);
    CHECK(rows.back()[2] == "(0.012)");
}

TEST_CASE("describe rows") {
    const auto p = hp::test::make_panel({{"A"}, {"B"}}, [](std::size_t i, std::size_t t) { return i == 0 ? 1.0 + t : 3.0; });
    const auto rows = report::describe(p, std::nullopt);
    REQUIRE(!rows.empty());
    const auto& pop = rows.front();
    CHECK(pop.obs == 22);
    CHECK(pop.mean == doctest::Approx((66.0 + 33.0) / 22.0));
    CHECK(pop.min == 1.0);
    CHECK(pop.max == 11.0);
    CHECK(pop.min_city == "A");
    const auto text = report::table1(rows);
    CHECK(text.find(pop.label) != std::string::npos);
}

}  // TEST_SUITE
