#pragma once

#include <optional>
#include <string>
#include <vector>

#include "histpanel/panel.hpp"
#include "histpanel/treatment.hpp"

namespace hp::io {

/// cities.csv: city_id,name,region,lat,lon,islamic_<year> for every grid year.
std::vector<panel::CityRecord> read_cities(const std::string& path, const panel::YearGrid& grid);

/// panel.csv (city_id,year,population_thousands) joined with covariates.csv
/// (city_id,year,<CovariateVector fields>). Extra covariate columns are
/// ignored. Without a covariates file every covariate is zero.
std::vector<panel::PanelObservation> read_observations(const std::string& panel_path,
                                                       const std::optional<std::string>& covariates_path);

/// institutions.csv: city_id,year,madrasa_count,university,law_faculty.
std::vector<panel::InstitutionRecord> read_institutions(const std::string& path);

/// Reads the year grid implied by the islamic_<year> columns of cities.csv.
panel::YearGrid infer_grid(const std::string& cities_path);

struct Dataset {
    panel::BalancedPanel panel;
    std::optional<panel::InstitutionPanel> institutions;
    bool has_covariates = false;
};

/// Loads cities.csv, panel.csv and, when present, covariates.csv and
/// institutions.csv from `dir`.
Dataset load_dataset(const std::string& dir);

void write_cities(const std::string& path, const panel::BalancedPanel& panel);
void write_panel(const std::string& path, const panel::BalancedPanel& panel);
void write_covariates(const std::string& path, const panel::BalancedPanel& panel,
                      const std::vector<std::pair<std::string, Eigen::MatrixXd>>& extra = {});
void write_institutions(const std::string& path, const panel::BalancedPanel& panel,
                        const panel::InstitutionPanel& institutions);

/// Writes all four files into `dir` (created if needed).
void write_dataset(const std::string& dir, const panel::BalancedPanel& panel,
                   const std::optional<panel::InstitutionPanel>& institutions);

}  // namespace hp::io
