#include "histpanel/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "histpanel/breaks.hpp"
#include "histpanel/csv.hpp"
#include "histpanel/did.hpp"
#include "histpanel/gsynth.hpp"
#include "histpanel/io.hpp"
#include "histpanel/pvar.hpp"
#include "histpanel/report.hpp"
#include "histpanel/sim.hpp"
#include "histpanel/synth.hpp"

namespace hp::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr const char* kModule = "cli";

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json header(const std::string& command) {
    Json j;
    j["schema"] = "histpanel." + command;
    j["schema_version"] = kSchemaVersion;
    return j;
}

fs::path out_path(const RunConfig& c, const std::string& name) {
    fs::create_directories(c.out_dir);
    return fs::path(c.out_dir) / name;
}

void write_text(const RunConfig& c, const std::string& name, const std::string& text) {
    std::ofstream f(out_path(c, name), std::ios::binary);
    if (!f) throw_config(kModule, "OutputNotWritable", "cannot write " + name + " under " + c.out_dir);
    f << text;
}

void write_json(const RunConfig& c, const std::string& name, const Json& j) { write_text(c, name, j.dump(2) + "\n"); }

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t k = 0; k < parts.size(); ++k) out += (k ? sep : "") + parts[k];
    return out;
}

panel::OutcomeTransform transform_for(const RunConfig& c, panel::OutcomeTransform fallback) {
    return c.transform ? panel::transform_from_string(*c.transform) : fallback;
}

io::Dataset load(const RunConfig& c) {
    if (c.data_dir.empty()) throw_config(kModule, "MissingData", "--data is required for " + c.command);
    return io::load_dataset(c.data_dir);
}

const panel::InstitutionPanel& institutions_of(const io::Dataset& d) {
    if (!d.institutions) throw_data(kModule, "MissingInstitutions", "institutions.csv is required for treatment construction");
    return *d.institutions;
}

panel::TreatmentSchedule schedule_for(const RunConfig& c, const io::Dataset& d, panel::TreatmentRule rule,
                                      panel::ExposureVariant variant) {
    geo::RadiusIndexConfig radius;
    radius.radius_km = c.radius_km;
    return panel::build_treatment(d.panel, rule, variant, institutions_of(d), radius);
}

panel::TreatmentSchedule schedule_for(const RunConfig& c, const io::Dataset& d) {
    return schedule_for(c, d, panel::rule_from_string(c.rule), panel::variant_from_string(c.variant));
}

did::DidData did_data(const RunConfig& c, const io::Dataset& d, const panel::TreatmentSchedule& s) {
    return did::make_did_data(d.panel, s, transform_for(c, panel::OutcomeTransform::Log1p), c.covariates && d.has_covariates);
}

did::BootstrapOptions bootstrap(const RunConfig& c) { return {c.boot, c.seed, c.threads}; }

Json fit_json(const reg::FitResult& fit) {
    Json j;
    j["n_obs"] = fit.n_obs;
    j["dof"] = fit.dof;
    j["vcov"] = fit.vcov_type;
    j["reference"] = fit.ref_df > 0 ? "t(" + std::to_string(fit.ref_df) + ")" : std::string("normal");
    Json clusters = Json::object();
    for (const auto& [k, v] : fit.cluster_counts) clusters[k] = v;
    j["clusters"] = clusters;
    Json coefs = Json::array();
    for (std::size_t k = 0; k < fit.names.size(); ++k)
        coefs.push_back({{"term", fit.names[k]},
                         {"estimate", num(fit.coef(static_cast<Eigen::Index>(k)))},
                         {"se", num(fit.se(k))},
                         {"p_value", num(fit.p_value(k))}});
    j["coefficients"] = coefs;
    j["flags"] = fit.flags;
    return j;
}

Json aggregate_json(const did::Aggregate& a, const char* key) {
    Json j;
    if (key != nullptr) j[key] = a.key;
    j["estimate"] = num(a.estimate);
    j["se"] = num(a.se);
    j["percent_effect"] = num(a.percent());
    j["weight"] = num(a.weight);
    return j;
}

// ------------------------------------------------------------------ commands

void cmd_ingest(const RunConfig& c, std::ostream& log) {
    if (c.cities_file.empty() || c.panel_file.empty())
        throw_config(kModule, "MissingInput", "ingest needs --cities and --panel");
    const auto grid = io::infer_grid(c.cities_file);
    auto records = io::read_cities(c.cities_file, grid);
    std::optional<std::string> cov;
    if (!c.covariates_file.empty()) cov = c.covariates_file;
    const auto obs = io::read_observations(c.panel_file, cov);
    auto built = panel::build_panel(std::move(records), obs, grid);
    std::optional<panel::InstitutionPanel> inst;
    if (!c.institutions_file.empty())
        inst = panel::build_institutions(built, io::read_institutions(c.institutions_file));
    io::write_dataset(c.out_dir, built, inst);
    Json j = header("ingest");
    j["n_cities"] = built.n_cities();
    j["n_years"] = built.n_years();
    j["years"] = built.years();
    j["has_covariates"] = cov.has_value();
    j["has_institutions"] = inst.has_value();
    write_json(c, "ingest.json", j);
    log << "ingested " << built.n_cities() << " cities x " << built.n_years() << " years\n";
}

void cmd_describe(const RunConfig& c, std::ostream& log) {
    const auto d = load(c);
    const auto rows = report::describe(d.panel, d.institutions);
    write_text(c, "describe.tsv", report::table1(rows));
    Json j = header("describe");
    j["n_cities"] = d.panel.n_cities();
    j["n_years"] = d.panel.n_years();
    j["n_obs"] = d.panel.n_cities() * d.panel.n_years();
    Json arr = Json::array();
    for (const auto& r : rows)
        arr.push_back({{"variable", r.label}, {"obs", r.obs}, {"mean", num(r.mean)}, {"sd", num(r.sd)},
                       {"min", num(r.min)}, {"min_city", r.min_city}, {"max", num(r.max)}, {"max_city", r.max_city}});
    j["variables"] = arr;
    write_json(c, "describe.json", j);
    log << report::table1(rows);
}

void cmd_break_test(const RunConfig& c, std::ostream& log) {
    std::vector<double> values, labels;
    std::string source;
    if (!c.input.empty()) {
        const auto t = csv::read_file(c.input);
        for (std::size_t r = 0; r < t.size(); ++r) {
            labels.push_back(t.number(r, "year"));
            values.push_back(t.number(r, "value"));
        }
        source = c.input;
    } else {
        const auto d = load(c);
        std::vector<panel::Region> regions;
        for (const auto& r : c.regions) regions.push_back(panel::region_from_string(r));
        const auto s = breaks::aggregate_series(d.panel, regions);
        values = s.values;
        labels.assign(s.years.begin(), s.years.end());
        source = c.regions.empty() ? "all cities" : join(c.regions, ",");
    }
    breaks::ZaOptions opt;
    opt.trim = c.trim;
    opt.max_lag = c.max_lag;
    opt.model = breaks::model_from_string(c.model);
    const auto r = breaks::zivot_andrews(values, opt, labels);

    Json j = header("break-test");
    j["source"] = source;
    j["model"] = std::string(breaks::to_string(r.model));
    j["trim"] = r.trim;
    j["max_lag"] = r.max_lag;
    j["lag"] = r.lag;
    j["n"] = values.size();
    j["break_year"] = num(r.break_year);
    j["break_index"] = r.break_index;
    j["min_t"] = num(r.min_t);
    j["p_value_approx"] = num(r.p_value);
    j["critical_values"] = {{"1%", r.critical.one}, {"5%", r.critical.five}, {"10%", r.critical.ten}};
    j["warnings"] = r.warnings;
    std::ostringstream curve;
    csv::Writer w(curve);
    w.row({"year", "t_stat"});
    Json cands = Json::array();
    for (std::size_t k = 0; k < r.candidates.size(); ++k) {
        const double year = labels[r.candidates[k]];
        cands.push_back({{"year", year}, {"t_stat", num(r.t_stats[k])}});
        w.row({csv::format_double(year), csv::format_double(r.t_stats[k])});
    }
    j["candidates"] = cands;
    write_json(c, "break.json", j);
    write_text(c, "break_curve.csv", curve.str());
    log << "break at " << r.break_year << " (t = " << r.min_t << ")\n";
}

Json ddd_json(const did::DddResult& r, const std::string& rule, const std::string& variant) {
    Json j;
    j["rule"] = rule;
    j["variant"] = variant;
    j["term"] = r.term;
    j["lambda"] = num(r.lambda);
    j["se"] = num(r.se);
    j["p_value"] = num(r.p_value);
    j["percent_effect"] = num(r.percent());
    j["dropped_terms"] = r.dropped;
    j["fit"] = fit_json(r.fit);
    return j;
}

std::optional<double> controls_p(const did::DddResult& r, const did::DidData& d) {
    std::vector<Eigen::Index> idx;
    for (const auto& name : d.covariates.names)
        for (std::size_t k = 0; k < r.fit.names.size(); ++k)
            if (r.fit.names[k] == name) idx.push_back(static_cast<Eigen::Index>(k));
    if (idx.empty()) return std::nullopt;
    Eigen::MatrixXd rm = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(idx.size()), r.fit.coef.size());
    for (std::size_t q = 0; q < idx.size(); ++q) rm(static_cast<Eigen::Index>(q), idx[q]) = 1.0;
    try {
        return reg::wald_test(r.fit, rm, Eigen::VectorXd::Zero(rm.rows())).p_value;
    } catch (const Error&) {
        return std::nullopt;
    }
}

void cmd_ddd(const RunConfig& c, std::ostream& log) {
    const auto d = load(c);
    Json j = header("ddd");
    Json cols = Json::array();
    if (c.table3) {
        struct Spec {
            panel::TreatmentRule rule;
            panel::ExposureVariant variant;
            const char* sample;
            const char* exposure;
            const char* label;
        };
        const std::vector<Spec> specs{
            {panel::TreatmentRule::EuropePost1100LawSchool, panel::ExposureVariant::Isolated, "Europe", "Binary",
             "Post-1100 × Law School"},
            {panel::TreatmentRule::EuropePost1100LawSchool, panel::ExposureVariant::RadiusNetwork, "Europe", "Continuous",
             "Post-1100 × # law schools in 300km radius"},
            {panel::TreatmentRule::IslamPost1200Madrasa, panel::ExposureVariant::Isolated, "Islamic countries",
             "Continuous", "Post-1200 Shariatic turn × Madrasa"},
            {panel::TreatmentRule::IslamPost1200Madrasa, panel::ExposureVariant::RadiusNetwork, "Islamic countries",
             "Continuous", "Post-1200 Shariatic turn × # madrasas in 300km radius"},
        };
        std::vector<report::Table3Column> table;
        for (const auto& s : specs) {
            const auto sched = schedule_for(c, d, s.rule, s.variant);
            const auto data = did_data(c, d, sched);
            auto r = did::ddd_static(data);
            auto p = controls_p(r, data);
            cols.push_back(ddd_json(r, std::string(panel::to_string(s.rule)), std::string(panel::to_string(s.variant))));
            table.push_back({s.sample, s.variant == panel::ExposureVariant::Isolated ? "Isolated" : "Network", s.exposure,
                             s.label, std::move(r), p});
        }
        const auto text = report::table3(table);
        write_text(c, "table3.tsv", text);
        log << text;
    } else {
        const auto sched = schedule_for(c, d);
        const auto data = did_data(c, d, sched);
        const auto r = did::ddd_static(data);
        cols.push_back(ddd_json(r, c.rule, c.variant));
        log << r.term << " = " << r.lambda << " (" << r.se << ")\n";
    }
    j["columns"] = cols;
    write_json(c, "ddd.json", j);
}

void cmd_event_study(const RunConfig& c, std::ostream& log) {
    const auto d = load(c);
    const auto data = did_data(c, d, schedule_for(c, d));
    const auto es = did::ddd_dynamic(data);
    std::ostringstream os;
    csv::Writer w(os);
    w.row({"rel_time", "estimate", "se", "lower", "upper"});
    Json coefs = Json::array();
    const double crit = es.fit.critical_value(0.95);
    for (std::size_t k = 0; k < es.rel_times.size(); ++k) {
        const double b = es.coef(static_cast<Eigen::Index>(k));
        const double s = es.se(static_cast<Eigen::Index>(k));
        w.row({std::to_string(es.rel_times[k]), csv::format_double(b), csv::format_double(s),
               csv::format_double(b - crit * s), csv::format_double(b + crit * s)});
        coefs.push_back({{"rel_time", es.rel_times[k]}, {"estimate", num(b)}, {"se", num(s)},
                         {"percent_effect", num(did::percent_effect(b))}});
    }
    write_text(c, "event_study.csv", os.str());
    Json j = header("event-study");
    j["rule"] = c.rule;
    j["variant"] = c.variant;
    j["reference"] = -1;
    j["coefficients"] = coefs;
    j["dropped"] = es.dropped;
    j["intensity"] = {{"estimate", num(es.intensity)}, {"se", num(es.intensity_se)}};
    try {
        const auto w2 = did::pretrend_test(es);
        j["pretrend"] = {{"statistic", num(w2.statistic)}, {"df", w2.df}, {"p_value", num(w2.p_value)}};
    } catch (const Error& e) {
        j["pretrend"] = nullptr;
    }
    j["fit"] = fit_json(es.fit);
    write_json(c, "event_study.json", j);
    log << "event study with " << es.rel_times.size() << " relative periods\n";
}

void cmd_att_gt(const RunConfig& c, std::ostream& log) {
    const auto d = load(c);
    const auto data = did_data(c, d, schedule_for(c, d));
    Json j = header("att-gt");
    j["estimator"] = c.estimator;
    j["seed"] = c.seed;
    std::ostringstream os;
    csv::Writer w(os);
    w.row({"cohort", "time", "estimate", "se"});
    if (c.estimator == "twfe") {
        const auto r = did::twfe(data);
        j["overall"] = {{"estimate", num(r.beta)}, {"se", num(r.se)}, {"p_value", num(r.p_value)},
                        {"percent_effect", num(did::percent_effect(r.beta))}};
        j["fit"] = fit_json(r.fit);
        log << "twfe = " << r.beta << " (" << r.se << ")\n";
    } else {
        did::AttResult r;
        did::CsOptions cs{did::control_from_string(c.control), bootstrap(c)};
        if (c.estimator == "cs") {
            r = did::cs_att(data, cs);
        } else if (c.estimator == "ipw") {
            r = did::ipw_did(data, cs);
        } else if (c.estimator == "dr") {
            r = did::dr_did(data, cs);
        } else if (c.estimator == "imputation") {
            did::ImputationOptions io;
            io.bootstrap = bootstrap(c);
            r = did::imputation_att(data, io);
        } else if (c.estimator == "switcher") {
            r = did::switcher_did(data, {c.horizon, c.placebos, bootstrap(c)});
        } else {
            throw_config(kModule, "UnknownEstimator", "unknown estimator '" + c.estimator + "'");
        }
        for (const auto& cell : did::long_format(r))
            w.row({std::to_string(cell.cohort), std::to_string(cell.time), csv::format_double(cell.estimate),
                   csv::format_double(cell.se)});
        j["control"] = std::string(did::to_string(r.control));
        j["bootstrap_reps"] = r.bootstrap_reps;
        j["overall"] = aggregate_json(r.overall, nullptr);
        Json coh = Json::array(), ev = Json::array(), pl = Json::array();
        for (const auto& a : r.by_cohort) coh.push_back(aggregate_json(a, "cohort"));
        for (const auto& a : r.by_event) ev.push_back(aggregate_json(a, c.estimator == "switcher" ? "horizon" : "event_time"));
        for (const auto& a : r.placebo) pl.push_back(aggregate_json(a, "lag"));
        j["by_cohort"] = coh;
        j["by_event"] = ev;
        if (c.estimator == "switcher") {
            j["placebo"] = pl;
            j["n_switchers"] = r.n_switchers;
        }
        j["flags"] = r.flags;
        log << c.estimator << " overall = " << r.overall.estimate << " (" << r.overall.se << ")\n";
    }
    write_text(c, "att_gt.csv", os.str());
    write_json(c, "att_gt.json", j);
}

void cmd_synth(const RunConfig& c, std::ostream& log) {
    const auto d = load(c);
    if (c.treated.empty()) throw_config(kModule, "MissingTreated", "synth needs --treated");
    const auto sched = schedule_for(c, d);
    const auto y = panel::transform_outcome(d.panel, transform_for(c, panel::OutcomeTransform::None));
    const auto donor_region = panel::region_from_string(c.donor_region);
    std::vector<Eigen::Index> treated_rows, donor_rows;
    for (const auto& id : c.treated) {
        const auto idx = d.panel.city_index(id);
        if (!idx) throw_data(kModule, "UnknownCity", "unknown treated city '" + id + "'");
        treated_rows.push_back(static_cast<Eigen::Index>(*idx));
    }
    std::vector<std::string> donors;
    for (std::size_t i = 0; i < d.panel.n_cities(); ++i) {
        const auto& city = d.panel.cities()[i];
        if (city.region != donor_region || !panel::never_treated(sched.cohort[i])) continue;
        if (std::find(treated_rows.begin(), treated_rows.end(), static_cast<Eigen::Index>(i)) != treated_rows.end()) continue;
        donor_rows.push_back(static_cast<Eigen::Index>(i));
        donors.push_back(city.city_id);
    }
    const int t0 = c.t0 ? *c.t0 : sched.t0;
    const Eigen::VectorXd y1 = y(treated_rows, Eigen::all).colwise().mean().transpose();
    const Eigen::MatrixXd y0 = y(donor_rows, Eigen::all).transpose();
    const auto problem = synth::outcome_problem(join(c.treated, "+"), donors, d.panel.years(), t0, y1, y0);
    synth::VOptions vopt;
    vopt.seed = c.seed;
    const auto fit = synth::synth_fit(problem, vopt);

    std::ostringstream ws;
    csv::Writer ww(ws);
    ww.row({"donor", "weight"});
    for (std::size_t k = 0; k < donors.size(); ++k) ww.row({donors[k], csv::format_double(fit.w(static_cast<Eigen::Index>(k)))});
    write_text(c, "weights.csv", ws.str());
    std::ostringstream gs;
    csv::Writer gw(gs);
    gw.row({"year", "treated", "synthetic", "gap"});
    for (std::size_t t = 0; t < problem.years.size(); ++t) {
        const auto tt = static_cast<Eigen::Index>(t);
        gw.row({std::to_string(problem.years[t]), csv::format_double(y1(tt)), csv::format_double(y1(tt) - fit.gaps(tt)),
                csv::format_double(fit.gaps(tt))});
    }
    write_text(c, "gaps.csv", gs.str());

    Json j = header("synth");
    j["treated"] = c.treated;
    j["t0"] = t0;
    j["n_donors"] = donors.size();
    j["atet"] = num(fit.atet);
    j["pre_rmspe"] = num(fit.pre_rmspe);
    j["post_rmspe"] = num(fit.post_rmspe);
    j["ratio"] = num(fit.ratio());
    if (c.placebo == "none") {
        j["placebo"] = nullptr;
    } else {
        synth::PlaceboOptions po;
        po.seed = c.seed;
        po.threads = c.threads;
        po.v = vopt;
        if (c.placebo == "in-space") {
            po.mode = synth::PlaceboMode::InSpaceFull;
        } else if (c.placebo == "random") {
            po.mode = synth::PlaceboMode::RandomSample;
            po.samples = c.samples;
            po.group_size = c.group_size > 0 ? c.group_size : static_cast<int>(c.treated.size());
        } else {
            throw_config(kModule, "UnknownPlacebo", "placebo must be in-space, random or none");
        }
        const auto p = synth::placebo_inference(problem, fit, po);
        Json by_year = Json::array();
        for (std::size_t k = 0; k < p.post_years.size(); ++k) by_year.push_back({{"year", p.post_years[k]}, {"p_value", p.p_by_year[k]}});
        j["placebo"] = {{"mode", c.placebo}, {"n_placebos", p.ratios.size()}, {"p_value", p.p_value},
                        {"by_year", by_year}, {"warnings", p.warnings}};
    }
    write_json(c, "pvalues.json", j);
    log << "synth ATET = " << fit.atet << ", pre-RMSPE = " << fit.pre_rmspe << "\n";
}

gsynth::GsynthResult run_gsynth(const RunConfig& c, const did::DidData& all, const std::vector<std::size_t>& treated) {
    std::vector<std::size_t> rows = treated;
    for (std::size_t i = 0; i < all.n_cities(); ++i)
        if (panel::never_treated(all.cohort[i])) rows.push_back(i);
    const auto data = did::resample(all, rows);
    gsynth::GsynthOptions opt;
    if (c.factors != "auto") {
        try {
            opt.r = std::stoi(c.factors);
        } catch (const std::exception&) {
            throw_config(kModule, "BadFactors", "--r must be 'auto' or a count");
        }
    }
    opt.r_max = c.r_max;
    opt.bootstrap = bootstrap(c);
    return gsynth::gsynth_att(data, opt);
}

Json gsynth_json(const gsynth::GsynthResult& r) {
    Json j;
    j["r"] = r.r;
    j["cv_mspe"] = Json::array();
    for (double v : r.cv_mspe) j["cv_mspe"].push_back(num(v));
    auto ya = [](const gsynth::YearAtt& a) {
        return Json{{"year", a.year},   {"att", num(a.att)},           {"se", num(a.se)},
                    {"lower", num(a.lower)}, {"upper", num(a.upper)}, {"n_treated", a.n_treated},
                    {"percent_effect", num(did::percent_effect(a.att))}};
    };
    j["overall"] = ya(r.overall);
    j["overall"].erase("year");
    Json by = Json::array();
    for (const auto& a : r.by_year) by.push_back(ya(a));
    j["by_year"] = by;
    j["bootstrap_reps"] = r.bootstrap_reps;
    j["flags"] = r.flags;
    return j;
}

void cmd_gsynth(const RunConfig& c, std::ostream& log) {
    const auto d = load(c);
    const auto all = did_data(c, d, schedule_for(c, d));
    std::vector<std::size_t> treated;
    std::vector<std::string> labels;
    if (c.treated.empty()) {
        for (std::size_t i = 0; i < all.n_cities(); ++i)
            if (!panel::never_treated(all.cohort[i])) treated.push_back(i);
    } else {
        for (const auto& id : c.treated) {
            const auto idx = d.panel.city_index(id);
            if (!idx) throw_data(kModule, "UnknownCity", "unknown treated city '" + id + "'");
            if (panel::never_treated(all.cohort[*idx]))
                throw_data(kModule, "NotTreated", "city '" + id + "' is never treated under this rule");
            treated.push_back(*idx);
        }
    }
    if (treated.empty()) throw_estimator(kModule, "NoTreatedUnits", "no treated cities");

    const auto pooled = run_gsynth(c, all, treated);
    std::ostringstream os;
    csv::Writer w(os);
    w.row({"year", "att", "se", "lower", "upper", "n_treated"});
    for (const auto& a : pooled.by_year)
        w.row({std::to_string(a.year), csv::format_double(a.att), csv::format_double(a.se), csv::format_double(a.lower),
               csv::format_double(a.upper), std::to_string(a.n_treated)});
    write_text(c, "att.csv", os.str());

    std::vector<report::Table8Column> table;
    Json j = header("gsynth");
    j["seed"] = c.seed;
    j["treated"] = Json::array();
    for (auto i : treated) j["treated"].push_back(d.panel.cities()[i].city_id);
    j["pooled"] = gsynth_json(pooled);
    if (c.per_city && treated.size() > 1) {
        Json per = Json::array();
        for (auto i : treated) {
            auto r = run_gsynth(c, all, {i});
            Json e = gsynth_json(r);
            e["city"] = d.panel.cities()[i].city_id;
            per.push_back(e);
            const auto& city = d.panel.cities()[i];
            table.push_back({city.name.empty() ? city.city_id : city.name, std::move(r)});
        }
        j["per_city"] = per;
    } else {
        std::string label = treated.size() == 1 ? d.panel.cities()[treated[0]].name : "Pooled treated cities";
        table.push_back({label, pooled});
    }
    const auto text = report::table8(table);
    write_text(c, "table8.tsv", text);
    write_json(c, "gsynth.json", j);
    log << text;
}

Eigen::MatrixXd pvar_series(const io::Dataset& d, const std::string& name, panel::OutcomeTransform transform) {
    if (name == "log_pop" || name == "population") return panel::transform_outcome(d.panel, transform);
    if (name == "madrasas") return institutions_of(d).madrasa_count;
    if (name == "universities") return institutions_of(d).university;
    if (name == "law_schools") return institutions_of(d).law_faculty;
    const auto& fields = panel::CovariateVector::field_names();
    for (std::size_t f = 0; f < fields.size(); ++f) {
        if (fields[f] != name) continue;
        Eigen::MatrixXd m(static_cast<Eigen::Index>(d.panel.n_cities()), static_cast<Eigen::Index>(d.panel.n_years()));
        for (std::size_t i = 0; i < d.panel.n_cities(); ++i)
            for (std::size_t t = 0; t < d.panel.n_years(); ++t)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = d.panel.covariates(i, t).get(f);
        return m;
    }
    throw_config(kModule, "UnknownVariable", "unknown pvar variable '" + name + "'");
}

void cmd_pvar(const RunConfig& c, std::ostream& log) {
    const auto d = load(c);
    if (c.vars.size() < 2) throw_config(kModule, "BadVariables", "pvar needs at least two --vars");
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < d.panel.n_cities(); ++i) {
        const bool islamic = d.panel.cities()[i].ever_islamic();
        if (c.sample == "all" || (c.sample == "islam" && islamic) || (c.sample == "europe" && !islamic))
            rows.push_back(static_cast<Eigen::Index>(i));
        else if (c.sample != "islam" && c.sample != "europe")
            throw_config(kModule, "BadSample", "sample must be all, islam or europe");
    }
    if (rows.empty()) throw_data(kModule, "EmptySample", "no cities in the requested sample");
    pvar::PvarData pd;
    const auto transform = transform_for(c, panel::OutcomeTransform::Log1p);
    for (const auto& v : c.vars) {
        pd.names.push_back(v);
        pd.series.push_back(pvar_series(d, v, transform)(rows, Eigen::all));
    }
    const auto fit = pvar::pvar1_fit(pd, {c.instrument_lags});
    Json j = header("pvar");
    j["sample"] = c.sample;
    j["n_obs"] = fit.n_obs;
    j["n_cities"] = fit.n_cities;
    j["instruments"] = fit.instruments;
    j["condition_number"] = num(fit.condition);
    j["weights"] = {{"initial", "identity"}, {"gmm", "robust"}};
    Json eqs = Json::array();
    for (std::size_t e = 0; e < pd.names.size(); ++e) {
        Json coefs = Json::array();
        for (std::size_t k = 0; k < pd.names.size(); ++k) {
            const double b = fit.a(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(k));
            const double s = fit.se(e, k);
            coefs.push_back({{"variable", pd.names[k] + "_lag1"},
                             {"estimate", num(b)},
                             {"se", num(s)},
                             {"p_value", num(s > 0 ? reg::normal_two_sided_p(b / s) : 1.0)}});
        }
        eqs.push_back({{"dependent", pd.names[e]}, {"coefficients", coefs}});
    }
    j["equations"] = eqs;
    if (c.granger) {
        Json g = Json::array();
        for (const auto& effect : pd.names)
            for (const auto& cause : pd.names) {
                if (cause == effect) continue;
                const auto wt = pvar::granger_wald(fit, cause, effect);
                g.push_back({{"equation", effect}, {"excluded", cause}, {"chi2", num(wt.statistic)}, {"df", wt.df},
                             {"p_value", num(wt.p_value)}});
            }
        j["granger"] = g;
    }
    write_json(c, "pvar.json", j);
    log << "pvar on " << fit.n_obs << " observations\n";
}

sim::SimulationConfig sim_config(const RunConfig& c) {
    sim::SimulationConfig s;
    s.seed = c.seed;
    if (c.config_path.empty()) return s;
    std::ifstream f(c.config_path);
    if (!f) throw_data(kModule, "FileNotFound", "cannot open " + c.config_path);
    Json j;
    try {
        j = Json::parse(f);
    } catch (const std::exception& e) {
        throw_data(kModule, "MalformedJson", c.config_path + ": " + e.what());
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("seed", s.seed);
        get("n_cities", s.n_cities);
        get("first_year", s.first_year);
        get("n_years", s.n_years);
        get("t0", s.t0);
        get("intercept", s.intercept);
        get("unit_sd", s.unit_sd);
        get("time_sd", s.time_sd);
        get("tau", s.tau);
        get("tau_slope", s.tau_slope);
        get("sigma", s.sigma);
        get("factors", s.factors);
        get("loading_sd", s.loading_sd);
        get("factor_sd", s.factor_sd);
        get("loading_shift", s.loading_shift);
        get("x_effect", s.x_effect);
        get("x_trend", s.x_trend);
        get("x_noise", s.x_noise);
        get("select_on_x", s.select_on_x);
        get("select_on_loading", s.select_on_loading);
        if (j.contains("cohorts")) {
            s.cohorts.clear();
            for (const auto& e : j.at("cohorts")) s.cohorts.push_back({e.at("year").get<int>(), e.at("share").get<double>()});
        }
        for (const auto& [key, value] : j.items()) {
            static const std::vector<std::string> known{
                "seed",   "n_cities", "first_year",  "n_years",       "t0",       "intercept",   "unit_sd",
                "time_sd", "tau",     "tau_slope",   "sigma",         "factors",  "loading_sd",  "factor_sd",
                "loading_shift", "x_effect", "x_trend", "x_noise", "select_on_x", "select_on_loading", "cohorts"};
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw_config(kModule, "InvalidConfig", "unknown simulation key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw_config(kModule, "InvalidConfig", std::string("bad simulation config: ") + e.what());
    }
    return s;
}

void cmd_simulate(const RunConfig& c, std::ostream& log) {
    const auto cfg = sim_config(c);
    const auto s = sim::simulate_panel(cfg);
    io::write_dataset(c.out_dir, s.panel, s.institutions);
    Json j = header("simulate");
    Json conf;
    conf["seed"] = cfg.seed;
    conf["n_cities"] = cfg.n_cities;
    conf["first_year"] = cfg.first_year;
    conf["n_years"] = cfg.n_years;
    conf["t0"] = cfg.t0;
    conf["cohorts"] = Json::array();
    for (const auto& ch : cfg.cohorts) conf["cohorts"].push_back({{"year", ch.year}, {"share", ch.share}});
    conf["intercept"] = cfg.intercept;
    conf["unit_sd"] = cfg.unit_sd;
    conf["time_sd"] = cfg.time_sd;
    conf["tau"] = cfg.tau;
    conf["tau_slope"] = cfg.tau_slope;
    conf["sigma"] = cfg.sigma;
    conf["factors"] = cfg.factors;
    conf["loading_sd"] = cfg.loading_sd;
    conf["factor_sd"] = cfg.factor_sd;
    conf["loading_shift"] = cfg.loading_shift;
    conf["x_effect"] = cfg.x_effect;
    conf["x_trend"] = cfg.x_trend;
    conf["x_noise"] = cfg.x_noise;
    conf["select_on_x"] = cfg.select_on_x;
    conf["select_on_loading"] = cfg.select_on_loading;
    j["config"] = conf;
    j["outcome"] = "population = exp(Y); analyse with --transform log";
    Json cities = Json::array();
    for (std::size_t i = 0; i < s.panel.n_cities(); ++i) {
        const int g = s.truth.cohort[i];
        cities.push_back({{"city_id", s.panel.cities()[i].city_id},
                          {"cohort", panel::never_treated(g) ? Json(nullptr) : Json(g)},
                          {"unit_fe", s.truth.unit_fe(static_cast<Eigen::Index>(i))}});
    }
    j["cities"] = cities;
    Json cells = Json::array();
    double sum = 0.0;
    int count = 0;
    for (const auto& cell : sim::brute_force_att(s)) {
        cells.push_back({{"cohort", cell.cohort}, {"time", cell.time}, {"true_att", cell.truth}});
        if (cell.time >= cell.cohort) {
            int n = 0;
            for (int g : s.truth.cohort) n += g == cell.cohort ? 1 : 0;
            sum += n * cell.truth;
            count += n;
        }
    }
    j["att_gt"] = cells;
    j["overall_att"] = num(count > 0 ? sum / count : 0.0);
    write_json(c, "truth.json", j);
    log << "simulated " << s.panel.n_cities() << " cities into " << c.out_dir << "\n";
}

}  // namespace

std::vector<std::string> commands() {
    return {"ingest", "describe", "break-test", "ddd", "event-study", "att-gt", "synth", "gsynth", "pvar", "simulate"};
}

void run(const RunConfig& config, std::ostream& log) {
    if (config.threads < 1) throw_config(kModule, "BadThreads", "--threads must be at least 1");
    const auto& cmd = config.command;
    if (cmd == "ingest") return cmd_ingest(config, log);
    if (cmd == "describe") return cmd_describe(config, log);
    if (cmd == "break-test") return cmd_break_test(config, log);
    if (cmd == "ddd") return cmd_ddd(config, log);
    if (cmd == "event-study") return cmd_event_study(config, log);
    if (cmd == "att-gt") return cmd_att_gt(config, log);
    if (cmd == "synth") return cmd_synth(config, log);
    if (cmd == "gsynth") return cmd_gsynth(config, log);
    if (cmd == "pvar") return cmd_pvar(config, log);
    if (cmd == "simulate") return cmd_simulate(config, log);
    throw_config(kModule, "UnknownCommand", "unknown command '" + cmd + "'");
}

std::string error_json(const Error& error) {
    const char* category = error.category() == ErrorCategory::Estimator ? "estimator"
                           : error.category() == ErrorCategory::Data    ? "data"
                                                                         : "config";
    Json j;
    j["error"] = {{"category", category}, {"module", error.module()}, {"code", error.code()}, {"message", error.what()}};
    j["exit_code"] = error.exit_code();
    return j.dump();
}

}  // namespace hp::cli
