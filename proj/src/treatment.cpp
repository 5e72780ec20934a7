#include "histpanel/treatment.hpp"

#include <cmath>

#include "histpanel/error.hpp"

namespace hp::panel {

InstitutionPanel build_institutions(const BalancedPanel& panel, const std::vector<InstitutionRecord>& records) {
    const auto n = static_cast<Eigen::Index>(panel.n_cities());
    const auto t = static_cast<Eigen::Index>(panel.n_years());
    InstitutionPanel out{Eigen::MatrixXd::Zero(n, t), Eigen::MatrixXd::Zero(n, t), Eigen::MatrixXd::Zero(n, t)};
    Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(n, t);
    for (const auto& r : records) {
        auto ci = panel.city_index(r.city_id);
        if (!ci) throw_data("panel_core", "UnknownCity", "institution row references unknown city '" + r.city_id + "'");
        auto ti = panel.grid().index(r.year);
        if (!ti) throw_data("panel_core", "YearOffGrid", "institution year " + std::to_string(r.year) + " off grid");
        const auto i = static_cast<Eigen::Index>(*ci);
        const auto j = static_cast<Eigen::Index>(*ti);
        if (seen(i, j))
            throw_data("panel_core", "DuplicateCell",
                       "duplicate institution cell (" + r.city_id + ", " + std::to_string(r.year) + ")");
        if (!(r.madrasa_count >= 0 && r.university >= 0 && r.law_faculty >= 0))
            throw_data("panel_core", "NegativeCount", "institution counts must be non-negative for " + r.city_id);
        seen(i, j) = 1;
        out.madrasa_count(i, j) = r.madrasa_count;
        out.university(i, j) = r.university;
        out.law_faculty(i, j) = r.law_faculty;
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < t; ++j)
            if (!seen(i, j))
                throw_data("panel_core", "MissingCell",
                           "institution series missing (" + panel.cities()[static_cast<std::size_t>(i)].city_id +
                               ", " + std::to_string(panel.grid().year(static_cast<std::size_t>(j))) + ")");
    return out;
}

TreatmentRule rule_from_string(std::string_view text) {
    if (text == "europe" || text == "EuropePost1100LawSchool") return TreatmentRule::EuropePost1100LawSchool;
    if (text == "islam" || text == "IslamPost1200Madrasa") return TreatmentRule::IslamPost1200Madrasa;
    throw_config("panel_core", "BadRule", "treatment rule must be 'europe' or 'islam'");
}

ExposureVariant variant_from_string(std::string_view text) {
    if (text == "isolated") return ExposureVariant::Isolated;
    if (text == "radius" || text == "radius_network" || text == "network") return ExposureVariant::RadiusNetwork;
    throw_config("panel_core", "BadVariant", "exposure variant must be 'isolated' or 'radius'");
}

std::string_view to_string(TreatmentRule rule) {
    return rule == TreatmentRule::EuropePost1100LawSchool ? "EuropePost1100LawSchool" : "IslamPost1200Madrasa";
}

std::string_view to_string(ExposureVariant variant) {
    return variant == ExposureVariant::Isolated ? "isolated" : "radius_network";
}

int break_year(TreatmentRule rule) { return rule == TreatmentRule::EuropePost1100LawSchool ? 1100 : 1200; }

std::size_t TreatmentSchedule::n_treated() const {
    std::size_t k = 0;
    for (int g : cohort) k += never_treated(g) ? 0 : 1;
    return k;
}

TreatmentSchedule build_treatment(const BalancedPanel& panel, TreatmentRule rule, ExposureVariant variant,
                                  const InstitutionPanel& institutions, const geo::RadiusIndexConfig& radius) {
    const std::size_t n = panel.n_cities();
    const std::size_t nt = panel.n_years();
    const bool europe = rule == TreatmentRule::EuropePost1100LawSchool;
    const Eigen::MatrixXd& counts = europe ? institutions.university : institutions.madrasa_count;
    if (static_cast<std::size_t>(counts.rows()) != n || static_cast<std::size_t>(counts.cols()) != nt)
        throw_data("panel_core", "MissingCell", "institution series does not cover the panel grid");

    TreatmentSchedule s;
    s.rule = rule;
    s.variant = variant;
    s.t0 = break_year(rule);
    s.years = panel.years();
    s.group = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nt));

    for (std::size_t i = 0; i < n; ++i) {
        const auto& city = panel.cities()[i];
        for (std::size_t t = 0; t < nt; ++t) {
            const bool islamic = city.islamic_rule[t];
            s.group(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = (europe ? !islamic : islamic) ? 1.0 : 0.0;
            const double c = counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
            if (c <= 0.0) continue;
            if (europe && islamic)
                throw_data("panel_core", "InconsistentSeries",
                           "university recorded for " + city.city_id + " in " + std::to_string(s.years[t]) +
                               " while under Islamic rule");
            if (!europe && !city.ever_islamic())
                throw_data("panel_core", "InconsistentSeries",
                           "madrasa recorded for " + city.city_id + ", which is never under Islamic rule");
        }
    }

    if (variant == ExposureVariant::Isolated) {
        s.intensity = counts;
    } else {
        geo::RadiusIndexConfig cfg = radius;
        if (!europe) cfg.prestige_cities.clear();
        s.intensity.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nt));
        const Eigen::MatrixXd dist = geo::distance_matrix(panel);
        std::vector<bool> prestige(n, false);
        for (std::size_t i = 0; i < n; ++i)
            for (const auto& p : cfg.prestige_cities)
                prestige[i] = prestige[i] || p == panel.cities()[i].city_id || p == panel.cities()[i].name;
        for (std::size_t t = 0; t < nt; ++t)
            s.intensity.col(static_cast<Eigen::Index>(t)) =
                geo::radius_index(dist, counts.col(static_cast<Eigen::Index>(t)), prestige, cfg);
        // exposure only counts for members of the treatment population
        s.intensity = s.intensity.cwiseProduct(s.group);
    }

    s.cohort.assign(n, kNeverTreated);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < nt; ++t) {
            if (s.years[t] > s.t0 && s.intensity(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) > 0.0 &&
                s.group(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) > 0.0) {
                s.cohort[i] = s.years[t];
                break;
            }
        }
    }
    return s;
}

TreatmentSchedule schedule_from_cohorts(std::vector<int> years, std::vector<int> cohort, int t0,
                                        const Eigen::MatrixXd* group, const Eigen::MatrixXd* intensity) {
    TreatmentSchedule s;
    s.t0 = t0;
    const auto n = static_cast<Eigen::Index>(cohort.size());
    const auto nt = static_cast<Eigen::Index>(years.size());
    s.years = std::move(years);
    s.cohort = std::move(cohort);
    if (intensity) {
        s.intensity = *intensity;
    } else {
        s.intensity = Eigen::MatrixXd::Zero(n, nt);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index t = 0; t < nt; ++t)
                s.intensity(i, t) = s.years[static_cast<std::size_t>(t)] >= s.cohort[static_cast<std::size_t>(i)];
    }
    if (group) {
        s.group = *group;
    } else {
        s.group = Eigen::MatrixXd::Zero(n, nt);
        for (Eigen::Index i = 0; i < n; ++i)
            if (!never_treated(s.cohort[static_cast<std::size_t>(i)])) s.group.row(i).setOnes();
    }
    return s;
}

}  // namespace hp::panel
