#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace hp::panel {

enum class Region { WesternEurope, ArabPeninsula, Levantine, NorthAfrica, OttomanAnatolian, Granada };

std::string_view to_string(Region region);
Region region_from_string(std::string_view text);  // DataError UnknownRegion

/// Century grid. Every panel in the engine steps by exactly 100 years; the
/// historical grid is 800..1800 (11 marks).
struct YearGrid {
    static constexpr int kStep = 100;
    int first = 800;
    int count = 11;

    int year(std::size_t index) const { return first + kStep * static_cast<int>(index); }
    int last() const { return year(static_cast<std::size_t>(count - 1)); }
    std::optional<std::size_t> index(int year) const;
    std::vector<int> years() const;
};

struct CityRecord {
    std::string city_id;
    std::string name;
    Region region = Region::WesternEurope;
    double latitude = 0.0;
    double longitude = 0.0;
    std::vector<bool> islamic_rule;  // one flag per grid year

    bool ever_islamic() const;
};

/// Structural controls observed per city and century. All fields numeric so
/// they can be fed to the regression kernel directly.
struct CovariateVector {
    double active_parliament = 0;
    double political_freedom = 0;
    double roman_law = 0;
    double book_production = 0;
    double capital_city = 0;
    double bishopric = 0;
    double black_death = 0;
    double foreign_urban_potential = 0;
    double caravan_hub = 0;
    double sea_access = 0;
    double distance_mecca = 0;
    double granada = 0;

    static constexpr std::size_t kSize = 12;
    static const std::array<std::string_view, kSize>& field_names();

    double get(std::size_t field) const;
    void set(std::size_t field, double value);

    /// Throws DataError CovariateOutOfRange naming the field.
    void validate() const;
};

struct PanelObservation {
    std::string city_id;
    int year = 0;
    double population = 0.0;  // thousands of inhabitants
    CovariateVector covariates;
};

/**
 * @brief Dense city-by-century grid. Immutable once built.
 *
 * Rows of every matrix accessor are cities in ingestion order; columns are
 * grid years in increasing order.
 */
class BalancedPanel {
public:
    const std::vector<CityRecord>& cities() const { return cities_; }
    const YearGrid& grid() const { return grid_; }
    std::vector<int> years() const { return grid_.years(); }
    std::size_t n_cities() const { return cities_.size(); }
    std::size_t n_years() const { return static_cast<std::size_t>(grid_.count); }

    double population(std::size_t city, std::size_t year) const { return population_(city, year); }
    const Eigen::MatrixXd& population_matrix() const { return population_; }
    const CovariateVector& covariates(std::size_t city, std::size_t year) const {
        return covariates_[city * n_years() + year];
    }

    std::optional<std::size_t> city_index(std::string_view city_id) const;
    bool islamic(std::size_t city, std::size_t year) const { return cities_[city].islamic_rule[year]; }

private:
    friend BalancedPanel build_panel(std::vector<CityRecord>, const std::vector<PanelObservation>&, YearGrid);

    std::vector<CityRecord> cities_;
    YearGrid grid_;
    Eigen::MatrixXd population_;
    std::vector<CovariateVector> covariates_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Errors: DuplicateCell, MissingCell, YearOffGrid, UnknownCity,
/// NegativePopulation, DuplicateCity, BadCity.
BalancedPanel build_panel(std::vector<CityRecord> records, const std::vector<PanelObservation>& observations,
                          YearGrid grid = {});

enum class OutcomeTransform { Log1p, Log, None };

OutcomeTransform transform_from_string(std::string_view text);
std::string_view to_string(OutcomeTransform t);

/// ln(population + 1) per cell. Zero population maps to 0.
Eigen::MatrixXd log_outcome(const BalancedPanel& panel);
double log_outcome_inverse(double value);

Eigen::MatrixXd transform_outcome(const BalancedPanel& panel, OutcomeTransform transform);

/// Time-varying covariates laid out per year: by_year[t] is N x k.
struct Covariates {
    std::vector<std::string> names;
    std::vector<Eigen::MatrixXd> by_year;

    bool empty() const { return names.empty(); }
    std::size_t size() const { return names.size(); }
};

Covariates covariate_panel(const BalancedPanel& panel);

}  // namespace hp::panel
