#pragma once

#include <functional>
#include <string>
#include <vector>

#include <doctest.h>

#include "histpanel/error.hpp"
#include "histpanel/panel.hpp"

namespace hp::test {

struct CitySpec {
    std::string id;
    std::string name;
    panel::Region region = panel::Region::WesternEurope;
    double lat = 45.0;
    double lon = 5.0;
    bool islamic = false;
};

/// Balanced panel on the default grid with population pop(i, t).
inline panel::BalancedPanel make_panel(const std::vector<CitySpec>& cities,
                                       const std::function<double(std::size_t, std::size_t)>& pop,
                                       panel::YearGrid grid = {}) {
    std::vector<panel::CityRecord> records;
    std::vector<panel::PanelObservation> obs;
    for (std::size_t i = 0; i < cities.size(); ++i) {
        panel::CityRecord r;
        r.city_id = cities[i].id;
        r.name = cities[i].name.empty() ? cities[i].id : cities[i].name;
        r.region = cities[i].region;
        r.latitude = cities[i].lat;
        r.longitude = cities[i].lon;
        r.islamic_rule.assign(static_cast<std::size_t>(grid.count), cities[i].islamic);
        records.push_back(r);
        for (std::size_t t = 0; t < static_cast<std::size_t>(grid.count); ++t) {
            panel::PanelObservation o;
            o.city_id = r.city_id;
            o.year = grid.year(t);
            o.population = pop(i, t);
            obs.push_back(o);
        }
    }
    return panel::build_panel(records, obs, grid);
}

/// Runs fn and returns the error code it raised ("" when nothing was thrown).
template <typename Fn>
std::string error_code(Fn&& fn) {
    try {
        fn();
    } catch (const hp::Error& e) {
        return e.code();
    }
    return "";
}

}  // namespace hp::test
