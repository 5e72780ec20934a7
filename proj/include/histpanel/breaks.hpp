#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "histpanel/panel.hpp"

namespace hp::breaks {

enum class BreakModel { Intercept, Trend, Both };

std::string_view to_string(BreakModel model);
BreakModel model_from_string(std::string_view text);  // ConfigError UnknownModel

struct ZaOptions {
    double trim = 0.15;
    /// Negative means automatic: Schwert's rule capped so every candidate
    /// regression keeps a few residual degrees of freedom.
    int max_lag = -1;
    BreakModel model = BreakModel::Intercept;
};

struct CriticalValues {
    double one = 0.0;
    double five = 0.0;
    double ten = 0.0;
};

CriticalValues critical_values(BreakModel model);

/// Interpolated from the asymptotic quantile table; clamped to [0.01, 0.99].
double approximate_p_value(double statistic, BreakModel model);

struct BreakTestResult {
    std::size_t break_index = 0;  // first observation of the new regime
    double break_year = 0.0;      // labelled position; equals break_index without labels
    double min_t = 0.0;
    std::vector<std::size_t> candidates;
    std::vector<double> t_stats;  // NaN where the candidate regression was singular
    int lag = 0;                  // lag order at the chosen break
    int max_lag = 0;
    double trim = 0.15;
    BreakModel model = BreakModel::Intercept;
    CriticalValues critical;
    double p_value = 1.0;  // approximate
    std::vector<std::string> warnings;
};

/**
 * @brief Zivot-Andrews test for a unit root against a one-time break.
 *
 * Candidates run over the interior after dropping ceil(trim*T) observations
 * at each end. Lags are picked per candidate, general to specific, on a
 * common sample. Ties in the minimum go to the earliest candidate.
 * @throws Error SeriesTooShort, NonFinite
 */
BreakTestResult zivot_andrews(std::span<const double> series, ZaOptions options = {},
                              std::span<const double> labels = {});

struct Series {
    std::vector<int> years;
    std::vector<double> values;
};

/// Unweighted per-year mean population over cities in `regions` (all when empty).
Series aggregate_series(const panel::BalancedPanel& panel, std::span<const panel::Region> regions = {});

}  // namespace hp::breaks
