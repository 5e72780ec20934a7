#include "histpanel/panel.hpp"

#include <cmath>
#include <set>

#include "histpanel/error.hpp"

namespace hp::panel {

namespace {

constexpr std::array<std::string_view, 6> kRegionNames = {
    "WesternEurope", "ArabPeninsula", "Levantine", "NorthAfrica", "OttomanAnatolian", "Granada"};

bool is_binary(double v) { return v == 0.0 || v == 1.0; }
bool is_int_in(double v, int lo, int hi) { return v == std::floor(v) && v >= lo && v <= hi; }

}  // namespace

std::string_view to_string(Region region) { return kRegionNames[static_cast<std::size_t>(region)]; }

Region region_from_string(std::string_view text) {
    for (std::size_t i = 0; i < kRegionNames.size(); ++i)
        if (kRegionNames[i] == text) return static_cast<Region>(i);
    throw_data("panel_core", "UnknownRegion", "unknown region '" + std::string(text) + "'");
}

std::optional<std::size_t> YearGrid::index(int y) const {
    const int offset = y - first;
    if (offset < 0 || offset % kStep != 0) return std::nullopt;
    const int i = offset / kStep;
    if (i >= count) return std::nullopt;
    return static_cast<std::size_t>(i);
}

std::vector<int> YearGrid::years() const {
    std::vector<int> out(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = year(i);
    return out;
}

bool CityRecord::ever_islamic() const {
    for (bool b : islamic_rule)
        if (b) return true;
    return false;
}

const std::array<std::string_view, CovariateVector::kSize>& CovariateVector::field_names() {
    static const std::array<std::string_view, kSize> names = {
        "active_parliament", "political_freedom", "roman_law",     "book_production",
        "capital_city",      "bishopric",         "black_death",   "foreign_urban_potential",
        "caravan_hub",       "sea_access",        "distance_mecca", "granada"};
    return names;
}

double CovariateVector::get(std::size_t field) const {
    switch (field) {
        case 0: return active_parliament;
        case 1: return political_freedom;
        case 2: return roman_law;
        case 3: return book_production;
        case 4: return capital_city;
        case 5: return bishopric;
        case 6: return black_death;
        case 7: return foreign_urban_potential;
        case 8: return caravan_hub;
        case 9: return sea_access;
        case 10: return distance_mecca;
        case 11: return granada;
        default: throw std::out_of_range("covariate field index");
    }
}

void CovariateVector::set(std::size_t field, double value) {
    switch (field) {
        case 0: active_parliament = value; break;
        case 1: political_freedom = value; break;
        case 2: roman_law = value; break;
        case 3: book_production = value; break;
        case 4: capital_city = value; break;
        case 5: bishopric = value; break;
        case 6: black_death = value; break;
        case 7: foreign_urban_potential = value; break;
        case 8: caravan_hub = value; break;
        case 9: sea_access = value; break;
        case 10: distance_mecca = value; break;
        case 11: granada = value; break;
        default: throw std::out_of_range("covariate field index");
    }
}

void CovariateVector::validate() const {
    const auto& names = field_names();
    for (std::size_t f = 0; f < kSize; ++f) {
        if (!std::isfinite(get(f)))
            throw_data("panel_core", "CovariateOutOfRange", std::string(names[f]) + " is not finite");
    }
    auto bad = [&](std::size_t f, const char* range) {
        throw_data("panel_core", "CovariateOutOfRange",
                   std::string(names[f]) + " = " + std::to_string(get(f)) + " outside " + range);
    };
    for (std::size_t f : {0u, 1u, 4u, 5u, 8u, 9u, 11u})
        if (!is_binary(get(f))) bad(f, "{0,1}");
    if (!is_int_in(roman_law, 0, 4)) bad(2, "0..4");
    if (!is_int_in(black_death, 0, 5)) bad(6, "0..5");
    if (book_production < 0) bad(3, "[0, inf)");
    if (distance_mecca < 0) bad(10, "[0, inf)");
}

std::optional<std::size_t> BalancedPanel::city_index(std::string_view city_id) const {
    auto it = index_.find(std::string(city_id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

BalancedPanel build_panel(std::vector<CityRecord> records, const std::vector<PanelObservation>& observations,
                          YearGrid grid) {
    if (grid.count < 1) throw_data("panel_core", "YearOffGrid", "year grid must contain at least one year");
    BalancedPanel p;
    p.grid_ = grid;
    const std::size_t n_years = static_cast<std::size_t>(grid.count);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& c = records[i];
        if (!p.index_.emplace(c.city_id, i).second)
            throw_data("panel_core", "DuplicateCity", "city '" + c.city_id + "' listed twice");
        if (!(c.latitude >= -90.0 && c.latitude <= 90.0) || !(c.longitude >= -180.0 && c.longitude <= 180.0))
            throw_data("panel_core", "BadCity", "city '" + c.city_id + "' has coordinates out of range");
        if (c.islamic_rule.size() != n_years)
            throw_data("panel_core", "BadCity",
                       "city '" + c.city_id + "' must carry one islamic_rule flag per grid year");
    }
    p.cities_ = std::move(records);
    const std::size_t n = p.cities_.size();
    p.population_ = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_years),
                                              std::nan(""));
    p.covariates_.assign(n * n_years, CovariateVector{});
    std::vector<bool> seen(n * n_years, false);

    for (const auto& obs : observations) {
        auto ci = p.city_index(obs.city_id);
        if (!ci) throw_data("panel_core", "UnknownCity", "observation references unknown city '" + obs.city_id + "'");
        auto ti = grid.index(obs.year);
        if (!ti)
            throw_data("panel_core", "YearOffGrid",
                       "year " + std::to_string(obs.year) + " for city '" + obs.city_id + "' is not on the grid");
        const std::size_t cell = *ci * n_years + *ti;
        if (seen[cell])
            throw_data("panel_core", "DuplicateCell",
                       "duplicate cell (" + obs.city_id + ", " + std::to_string(obs.year) + ")");
        if (!std::isfinite(obs.population) || obs.population < 0.0)
            throw_data("panel_core", "NegativePopulation",
                       "population for (" + obs.city_id + ", " + std::to_string(obs.year) +
                           ") must be finite and non-negative");
        obs.covariates.validate();
        seen[cell] = true;
        p.population_(static_cast<Eigen::Index>(*ci), static_cast<Eigen::Index>(*ti)) = obs.population;
        p.covariates_[cell] = obs.covariates;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < n_years; ++t)
            if (!seen[i * n_years + t])
                throw_data("panel_core", "MissingCell",
                           "missing cell (" + p.cities_[i].city_id + ", " + std::to_string(grid.year(t)) + ")");
    return p;
}

OutcomeTransform transform_from_string(std::string_view text) {
    if (text == "log1p") return OutcomeTransform::Log1p;
    if (text == "log") return OutcomeTransform::Log;
    if (text == "none") return OutcomeTransform::None;
    throw_config("panel_core", "BadTransform", "outcome transform must be log1p, log or none");
}

std::string_view to_string(OutcomeTransform t) {
    switch (t) {
        case OutcomeTransform::Log1p: return "log1p";
        case OutcomeTransform::Log: return "log";
        case OutcomeTransform::None: return "none";
    }
    return "?";
}

Eigen::MatrixXd log_outcome(const BalancedPanel& panel) {
    const auto& pop = panel.population_matrix();
    if ((pop.array() < 0.0).any()) throw_data("panel_core", "NegativePopulation", "population must be >= 0");
    return pop.array().log1p().matrix();
}

double log_outcome_inverse(double value) { return std::expm1(value); }

Eigen::MatrixXd transform_outcome(const BalancedPanel& panel, OutcomeTransform transform) {
    switch (transform) {
        case OutcomeTransform::Log1p: return log_outcome(panel);
        case OutcomeTransform::Log:
            if ((panel.population_matrix().array() <= 0.0).any())
                throw_data("panel_core", "NonPositivePopulation", "log transform requires population > 0");
            return panel.population_matrix().array().log().matrix();
        case OutcomeTransform::None: return panel.population_matrix();
    }
    return panel.population_matrix();
}

Covariates covariate_panel(const BalancedPanel& panel) {
    Covariates cov;
    for (auto name : CovariateVector::field_names()) cov.names.emplace_back(name);
    const auto n = static_cast<Eigen::Index>(panel.n_cities());
    for (std::size_t t = 0; t < panel.n_years(); ++t) {
        Eigen::MatrixXd m(n, static_cast<Eigen::Index>(CovariateVector::kSize));
        for (Eigen::Index i = 0; i < n; ++i)
            for (std::size_t f = 0; f < CovariateVector::kSize; ++f)
                m(i, static_cast<Eigen::Index>(f)) = panel.covariates(static_cast<std::size_t>(i), t).get(f);
        cov.by_year.push_back(std::move(m));
    }
    return cov;
}

}  // namespace hp::panel
