#include "histpanel/geo.hpp"

#include <cmath>
#include <numbers>

#include "histpanel/error.hpp"

namespace hp::geo {

double great_circle_km(LatLon a, LatLon b) {
    constexpr double rad = std::numbers::pi / 180.0;
    const double phi1 = a.lat * rad;
    const double phi2 = b.lat * rad;
    const double dphi = (b.lat - a.lat) * rad;
    const double dlambda = (b.lon - a.lon) * rad;
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlambda / 2.0);
    double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    h = std::min(1.0, std::max(0.0, h));
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

Eigen::MatrixXd distance_matrix(const panel::BalancedPanel& panel) {
    const auto& cities = panel.cities();
    const auto n = static_cast<Eigen::Index>(cities.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto& a = cities[static_cast<std::size_t>(i)];
            const auto& b = cities[static_cast<std::size_t>(j)];
            d(i, j) = d(j, i) = great_circle_km({a.latitude, a.longitude}, {b.latitude, b.longitude});
        }
    }
    return d;
}

Eigen::VectorXd urban_potential(const Eigen::MatrixXd& distances, const Eigen::VectorXd& mass,
                                const Eigen::MatrixXd* interaction, std::span<const std::string> ids) {
    const Eigen::Index n = mass.size();
    Eigen::VectorXd omega = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            if (interaction && (*interaction)(i, j) == 0.0) continue;
            const double d = distances(i, j);
            if (d <= 0.0) {
                std::string who = ids.empty() ? std::to_string(i) + " and " + std::to_string(j)
                                              : ids[static_cast<std::size_t>(i)] + " and " +
                                                    ids[static_cast<std::size_t>(j)];
                throw_data("geo_network", "CoincidentCities", "cities " + who + " are at zero distance");
            }
            omega(i) += mass(j) / d;
        }
    }
    return omega;
}

Eigen::VectorXd urban_potential(const panel::BalancedPanel& panel, int year, const Eigen::MatrixXd* interaction) {
    auto t = panel.grid().index(year);
    if (!t) throw_data("geo_network", "YearOffGrid", "year " + std::to_string(year) + " not on panel grid");
    std::vector<std::string> ids;
    for (const auto& c : panel.cities()) ids.push_back(c.city_id);
    const Eigen::VectorXd mass = panel.population_matrix().col(static_cast<Eigen::Index>(*t));
    return urban_potential(distance_matrix(panel), mass, interaction, ids);
}

void RadiusIndexConfig::validate() const {
    if (!(radius_km > 0.0)) throw_config("geo_network", "BadRadius", "radius_km must be positive");
    if (!(prestige_radius_km >= radius_km))
        throw_config("geo_network", "BadRadius", "prestige_radius_km must be >= radius_km");
}

Eigen::VectorXd radius_index(const Eigen::MatrixXd& distances, const Eigen::VectorXd& counts,
                             const std::vector<bool>& is_prestige, const RadiusIndexConfig& cfg) {
    cfg.validate();
    if ((counts.array() < 0.0).any())
        throw_data("geo_network", "NegativeCount", "institution counts must be non-negative");
    const Eigen::Index n = counts.size();
    Eigen::VectorXd index = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const bool self = (i == j);
            const double d = distances(i, j);
            if ((!self || cfg.include_self) && d <= cfg.radius_km) index(i) += counts(j);
            if (is_prestige[static_cast<std::size_t>(j)] && counts(j) > 0.0 && d <= cfg.prestige_radius_km &&
                (!self || cfg.include_self))
                index(i) += cfg.prestige_bonus;
        }
    }
    return index;
}

Eigen::VectorXd radius_index(const panel::BalancedPanel& panel, const Eigen::VectorXd& counts,
                             const RadiusIndexConfig& cfg) {
    std::vector<bool> prestige;
    for (const auto& c : panel.cities()) {
        bool hit = false;
        for (const auto& p : cfg.prestige_cities) hit = hit || p == c.city_id || p == c.name;
        prestige.push_back(hit);
    }
    return radius_index(distance_matrix(panel), counts, prestige, cfg);
}

}  // namespace hp::geo
