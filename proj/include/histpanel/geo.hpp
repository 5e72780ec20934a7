#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "histpanel/panel.hpp"

namespace hp::geo {

inline constexpr double kEarthRadiusKm = 6371.0;

struct LatLon {
    double lat = 0.0;  // degrees
    double lon = 0.0;  // degrees
};

/// Haversine distance on a sphere of radius 6371 km.
double great_circle_km(LatLon a, LatLon b);

/// Symmetric N x N matrix of pairwise city distances in km.
Eigen::MatrixXd distance_matrix(const panel::BalancedPanel& panel);

/**
 * Distance-weighted population of all other cities:
 *   omega_i = sum_{j != i} M_j / d_ij * I_ij
 * in thousands per km. `interaction` (N x N, 0/1) defaults to all pairs.
 * Distinct cities at zero distance raise CoincidentCities.
 */
Eigen::VectorXd urban_potential(const panel::BalancedPanel& panel, int year,
                                const Eigen::MatrixXd* interaction = nullptr);

/// Same computation on explicit inputs; used by urban_potential.
Eigen::VectorXd urban_potential(const Eigen::MatrixXd& distances, const Eigen::VectorXd& mass,
                                const Eigen::MatrixXd* interaction, std::span<const std::string> ids = {});

struct RadiusIndexConfig {
    double radius_km = 300.0;
    double prestige_radius_km = 1500.0;
    std::vector<std::string> prestige_cities = {"Bologna", "Paris"};
    double prestige_bonus = 1.0;
    bool include_self = false;

    void validate() const;
};

/**
 * Institutions reachable from each city: the sum of `counts` over cities
 * within radius_km (self excluded unless include_self), plus prestige_bonus
 * for every prestige city that currently holds an institution and lies
 * within prestige_radius_km. Prestige cities are matched on city_id or name.
 */
Eigen::VectorXd radius_index(const panel::BalancedPanel& panel, const Eigen::VectorXd& counts,
                             const RadiusIndexConfig& cfg);

Eigen::VectorXd radius_index(const Eigen::MatrixXd& distances, const Eigen::VectorXd& counts,
                             const std::vector<bool>& is_prestige, const RadiusIndexConfig& cfg);

}  // namespace hp::geo
