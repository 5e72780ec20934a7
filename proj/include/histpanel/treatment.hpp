#pragma once

#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "histpanel/geo.hpp"
#include "histpanel/panel.hpp"

namespace hp::panel {

/// Cohort value for cities that never adopt.
inline constexpr int kNeverTreated = std::numeric_limits<int>::max();

inline bool never_treated(int cohort) { return cohort == kNeverTreated; }

struct InstitutionRecord {
    std::string city_id;
    int year = 0;
    double madrasa_count = 0;
    double university = 0;  // 0/1
    double law_faculty = 0;
};

/// Dense institution counts aligned with a panel (N x T each).
struct InstitutionPanel {
    Eigen::MatrixXd madrasa_count;
    Eigen::MatrixXd university;
    Eigen::MatrixXd law_faculty;
};

/// Errors: UnknownCity, YearOffGrid, DuplicateCell, MissingCell, NegativeCount.
InstitutionPanel build_institutions(const BalancedPanel& panel, const std::vector<InstitutionRecord>& records);

enum class TreatmentRule {
    EuropePost1100LawSchool,  // treated population: cities not under Islamic rule; T0 = 1100
    IslamPost1200Madrasa,     // treated population: cities under Islamic rule;     T0 = 1200
};

enum class ExposureVariant { Isolated, RadiusNetwork };

TreatmentRule rule_from_string(std::string_view text);
ExposureVariant variant_from_string(std::string_view text);
std::string_view to_string(TreatmentRule rule);
std::string_view to_string(ExposureVariant variant);
int break_year(TreatmentRule rule);

/**
 * @brief Adoption cohorts and exposure intensities for one treatment rule.
 *
 * cohort[i] is the first grid year after T0 with positive exposure, or
 * kNeverTreated. group(i, t) marks membership of the rule's treatment
 * population in year t (the "in Islamic" / "in Latin Europe" indicator).
 */
struct TreatmentSchedule {
    TreatmentRule rule = TreatmentRule::IslamPost1200Madrasa;
    ExposureVariant variant = ExposureVariant::Isolated;
    int t0 = 1200;
    std::vector<int> years;
    std::vector<int> cohort;
    Eigen::MatrixXd intensity;  // N x T, >= 0
    Eigen::MatrixXd group;      // N x T, 0/1

    std::size_t n_cities() const { return cohort.size(); }
    bool post(std::size_t t) const { return years[t] > t0; }
    bool treated(std::size_t i, std::size_t t) const { return years[t] >= cohort[i]; }
    std::size_t n_treated() const;
};

/**
 * Builds the schedule for `rule`. Isolated exposure is the city's own count
 * (universities for the Europe rule, madrasas for the Islam rule);
 * RadiusNetwork exposure is geo::radius_index over the same counts. The
 * prestige bonus only applies to the Europe rule.
 *
 * InconsistentSeries: madrasas recorded for a city never under Islamic rule,
 * or universities recorded for a city in a year it was under Islamic rule.
 */
TreatmentSchedule build_treatment(const BalancedPanel& panel, TreatmentRule rule, ExposureVariant variant,
                                  const InstitutionPanel& institutions, const geo::RadiusIndexConfig& radius = {});

/// Schedule assembled directly from cohorts (simulation, tests). intensity
/// defaults to the binary onset indicator 1[t >= G_i].
TreatmentSchedule schedule_from_cohorts(std::vector<int> years, std::vector<int> cohort, int t0,
                                        const Eigen::MatrixXd* group = nullptr,
                                        const Eigen::MatrixXd* intensity = nullptr);

}  // namespace hp::panel
