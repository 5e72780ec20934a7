#pragma once

#include <optional>
#include <string>
#include <vector>

#include "histpanel/did.hpp"
#include "histpanel/gsynth.hpp"
#include "histpanel/panel.hpp"
#include "histpanel/treatment.hpp"

namespace hp::report {

/// "***" below 1%, "**" below 5%, "*" below 10%.
std::string stars(double p);

/// Fixed decimals with the leading zero dropped: 0.557 -> ".557".
std::string format_number(double value, int decimals = 3);

/// Thousands separators: 8723 -> "8,723".
std::string format_count(long long value);

std::string format_coef(double estimate, double p_value);
std::string format_se(double se);

struct Table3Column {
    std::string sample;    // e.g. "Europe"
    std::string variant;   // "Isolated" / "Network"
    std::string exposure;  // "Binary" / "Continuous"
    std::string row_label;
    did::DddResult result;
    std::optional<double> controls_p;  // joint test on covariates
};

/// Tab-separated static DDD table, one column per specification.
std::string table3(const std::vector<Table3Column>& columns);

struct Table8Column {
    std::string label;
    gsynth::GsynthResult result;
};

/// Tab-separated interactive fixed-effects table: overall ATT, empirical
/// interval and per-year effects.
std::string table8(const std::vector<Table8Column>& columns);

struct DescribeRow {
    std::string label;
    long long obs = 0;
    double mean = 0.0;
    double sd = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::string min_city;
    std::string max_city;
};

/// Population, institutions and every covariate across all city-years.
std::vector<DescribeRow> describe(const panel::BalancedPanel& panel,
                                  const std::optional<panel::InstitutionPanel>& institutions);

std::string table1(const std::vector<DescribeRow>& rows);

}  // namespace hp::report
