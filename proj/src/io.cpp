#include "histpanel/io.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <fstream>

#include "histpanel/csv.hpp"
#include "histpanel/error.hpp"

namespace hp::io {

namespace fs = std::filesystem;
using csv::format_double;

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_config("cli", "OutputError", "cannot write " + path);
    return out;
}

}  // namespace

panel::YearGrid infer_grid(const std::string& cities_path) {
    const auto table = csv::read_file(cities_path);
    std::vector<int> years;
    for (const auto& h : table.header()) {
        if (h.rfind("islamic_", 0) == 0) years.push_back(std::stoi(h.substr(8)));
    }
    if (years.empty()) throw_data("panel_core", "MissingColumn", cities_path + ": no islamic_<year> columns");
    std::sort(years.begin(), years.end());
    for (std::size_t i = 1; i < years.size(); ++i)
        if (years[i] - years[i - 1] != panel::YearGrid::kStep)
            throw_data("panel_core", "YearOffGrid", cities_path + ": islamic_<year> columns must step by 100");
    return panel::YearGrid{years.front(), static_cast<int>(years.size())};
}

std::vector<panel::CityRecord> read_cities(const std::string& path, const panel::YearGrid& grid) {
    const auto table = csv::read_file(path);
    std::vector<panel::CityRecord> out;
    for (std::size_t r = 0; r < table.size(); ++r) {
        panel::CityRecord c;
        c.city_id = table.at(r, "city_id");
        c.name = table.at(r, "name");
        c.region = panel::region_from_string(table.at(r, "region"));
        c.latitude = table.number(r, "lat");
        c.longitude = table.number(r, "lon");
        for (int y : grid.years()) {
            const auto flag = table.integer(r, "islamic_" + std::to_string(y));
            if (flag != 0 && flag != 1)
                throw_data("panel_core", "BadValue", path + ": islamic flags must be 0 or 1");
            c.islamic_rule.push_back(flag == 1);
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<panel::PanelObservation> read_observations(const std::string& panel_path,
                                                       const std::optional<std::string>& covariates_path) {
    const auto table = csv::read_file(panel_path);
    std::vector<panel::PanelObservation> out;
    out.reserve(table.size());
    std::map<std::pair<std::string, int>, std::size_t> where;
    for (std::size_t r = 0; r < table.size(); ++r) {
        panel::PanelObservation o;
        o.city_id = table.at(r, "city_id");
        o.year = static_cast<int>(table.integer(r, "year"));
        o.population = table.number(r, "population_thousands");
        where.emplace(std::make_pair(o.city_id, o.year), out.size());
        out.push_back(std::move(o));
    }
    if (covariates_path) {
        const auto cov = csv::read_file(*covariates_path);
        const auto& names = panel::CovariateVector::field_names();
        for (auto name : names) cov.column(name);
        std::vector<bool> filled(out.size(), false);
        for (std::size_t r = 0; r < cov.size(); ++r) {
            const auto key = std::make_pair(cov.at(r, "city_id"), static_cast<int>(cov.integer(r, "year")));
            auto it = where.find(key);
            if (it == where.end())
                throw_data("panel_core", "UnknownCell",
                           *covariates_path + ": covariates for (" + key.first + ", " + std::to_string(key.second) +
                               ") have no matching panel row");
            if (filled[it->second])
                throw_data("panel_core", "DuplicateCell",
                           *covariates_path + ": duplicate covariate row (" + key.first + ", " +
                               std::to_string(key.second) + ")");
            filled[it->second] = true;
            for (std::size_t f = 0; f < names.size(); ++f) out[it->second].covariates.set(f, cov.number(r, names[f]));
        }
        for (std::size_t i = 0; i < out.size(); ++i)
            if (!filled[i])
                throw_data("panel_core", "MissingCell",
                           *covariates_path + ": no covariates for (" + out[i].city_id + ", " +
                               std::to_string(out[i].year) + ")");
    }
    return out;
}

std::vector<panel::InstitutionRecord> read_institutions(const std::string& path) {
    const auto table = csv::read_file(path);
    std::vector<panel::InstitutionRecord> out;
    for (std::size_t r = 0; r < table.size(); ++r) {
        panel::InstitutionRecord rec;
        rec.city_id = table.at(r, "city_id");
        rec.year = static_cast<int>(table.integer(r, "year"));
        rec.madrasa_count = table.number(r, "madrasa_count");
        rec.university = table.number(r, "university");
        rec.law_faculty = table.number(r, "law_faculty");
        out.push_back(std::move(rec));
    }
    return out;
}

Dataset load_dataset(const std::string& dir) {
    const fs::path base(dir);
    const std::string cities = (base / "cities.csv").string();
    const std::string panel_csv = (base / "panel.csv").string();
    const std::string cov = (base / "covariates.csv").string();
    const std::string inst = (base / "institutions.csv").string();
    const auto grid = infer_grid(cities);
    std::optional<std::string> cov_path;
    if (fs::exists(cov)) cov_path = cov;
    auto records = read_cities(cities, grid);
    auto obs = read_observations(panel_csv, cov_path);
    Dataset d{panel::build_panel(std::move(records), obs, grid), std::nullopt, cov_path.has_value()};
    if (fs::exists(inst)) d.institutions = panel::build_institutions(d.panel, read_institutions(inst));
    return d;
}

void write_cities(const std::string& path, const panel::BalancedPanel& panel) {
    auto out = open_out(path);
    csv::Writer w(out);
    std::vector<std::string> header = {"city_id", "name", "region", "lat", "lon"};
    for (int y : panel.years()) header.push_back("islamic_" + std::to_string(y));
    w.row(header);
    for (const auto& c : panel.cities()) {
        std::vector<std::string> row = {c.city_id, c.name, std::string(panel::to_string(c.region)),
                                        format_double(c.latitude), format_double(c.longitude)};
        for (bool b : c.islamic_rule) row.push_back(b ? "1" : "0");
        w.row(row);
    }
}

void write_panel(const std::string& path, const panel::BalancedPanel& panel) {
    auto out = open_out(path);
    csv::Writer w(out);
    w.row({"city_id", "year", "population_thousands"});
    const auto years = panel.years();
    for (std::size_t i = 0; i < panel.n_cities(); ++i)
        for (std::size_t t = 0; t < years.size(); ++t)
            w.row({panel.cities()[i].city_id, std::to_string(years[t]), format_double(panel.population(i, t))});
}

void write_covariates(const std::string& path, const panel::BalancedPanel& panel,
                      const std::vector<std::pair<std::string, Eigen::MatrixXd>>& extra) {
    auto out = open_out(path);
    csv::Writer w(out);
    std::vector<std::string> header = {"city_id", "year"};
    for (auto name : panel::CovariateVector::field_names()) header.emplace_back(name);
    for (const auto& [name, m] : extra) header.push_back(name);
    w.row(header);
    const auto years = panel.years();
    for (std::size_t i = 0; i < panel.n_cities(); ++i) {
        for (std::size_t t = 0; t < years.size(); ++t) {
            std::vector<std::string> row = {panel.cities()[i].city_id, std::to_string(years[t])};
            const auto& c = panel.covariates(i, t);
            for (std::size_t f = 0; f < panel::CovariateVector::kSize; ++f) row.push_back(format_double(c.get(f)));
            for (const auto& [name, m] : extra)
                row.push_back(format_double(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t))));
            w.row(row);
        }
    }
}

void write_institutions(const std::string& path, const panel::BalancedPanel& panel,
                        const panel::InstitutionPanel& inst) {
    auto out = open_out(path);
    csv::Writer w(out);
    w.row({"city_id", "year", "madrasa_count", "university", "law_faculty"});
    const auto years = panel.years();
    for (std::size_t i = 0; i < panel.n_cities(); ++i) {
        for (std::size_t t = 0; t < years.size(); ++t) {
            const auto r = static_cast<Eigen::Index>(i);
            const auto c = static_cast<Eigen::Index>(t);
            w.row({panel.cities()[i].city_id, std::to_string(years[t]), format_double(inst.madrasa_count(r, c)),
                   format_double(inst.university(r, c)), format_double(inst.law_faculty(r, c))});
        }
    }
}

void write_dataset(const std::string& dir, const panel::BalancedPanel& panel,
                   const std::optional<panel::InstitutionPanel>& institutions) {
    fs::create_directories(dir);
    const fs::path base(dir);
    write_cities((base / "cities.csv").string(), panel);
    write_panel((base / "panel.csv").string(), panel);
    write_covariates((base / "covariates.csv").string(), panel);
    if (institutions) write_institutions((base / "institutions.csv").string(), panel, *institutions);
}

}  // namespace hp::io
