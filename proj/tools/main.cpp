#include <iostream>

#include <CLI11.hpp>

#include "histpanel/cli.hpp"

namespace {

void add_common(CLI::App* sub, hp::cli::RunConfig& c, bool needs_data) {
    auto* data = sub->add_option("--data", c.data_dir, "Dataset directory (cities.csv, panel.csv, ...)");
    if (needs_data) data->required();
    sub->add_option("--transform", c.transform, "Outcome transform: log1p, log or none");
}

void add_treatment(CLI::App* sub, hp::cli::RunConfig& c) {
    sub->add_option("--rule", c.rule, "Treatment rule: islam or europe");
    sub->add_option("--variant", c.variant, "Exposure variant: isolated or radius");
    sub->add_option("--radius-km", c.radius_km, "Radius for the network exposure");
    sub->add_flag("--covariates", c.covariates, "Include geographic covariates");
}

}  // namespace

int main(int argc, char** argv) {
    hp::cli::RunConfig c;
    CLI::App app{"histpanel: panel causal inference for historical city data"};
    app.require_subcommand(1);
    app.add_option("--out", c.out_dir, "Output directory")->capture_default_str();
    app.add_option("--seed", c.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", c.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    auto* ingest = app.add_subcommand("ingest", "Validate raw CSV files and write a canonical dataset");
    ingest->add_option("--cities", c.cities_file, "City attributes CSV")->required();
    ingest->add_option("--panel", c.panel_file, "Population observations CSV")->required();
    ingest->add_option("--covariates-file", c.covariates_file, "Covariate CSV");
    ingest->add_option("--institutions", c.institutions_file, "Institution founding CSV");

    auto* describe = app.add_subcommand("describe", "Descriptive statistics table");
    add_common(describe, c, true);

    auto* brk = app.add_subcommand("break-test", "Zivot-Andrews endogenous break test");
    add_common(brk, c, false);
    auto* input = brk->add_option("--input", c.input, "CSV with year,value columns");
    brk->add_option("--regions", c.regions, "Regions to average when reading --data")->delimiter(',')->excludes(input);
    brk->add_option("--trim", c.trim, "Trimming fraction")->capture_default_str();
    brk->add_option("--model", c.model, "intercept, trend or both")->capture_default_str();
    brk->add_option("--max-lag", c.max_lag, "Maximum augmentation lag (-1: automatic)");

    auto* ddd = app.add_subcommand("ddd", "Static triple-difference regression");
    add_common(ddd, c, true);
    add_treatment(ddd, c);
    ddd->add_flag("--table3", c.table3, "Run the four standard columns and write table3.tsv");

    auto* es = app.add_subcommand("event-study", "Dynamic triple-difference event study");
    add_common(es, c, true);
    add_treatment(es, c);

    auto* att = app.add_subcommand("att-gt", "Heterogeneity-robust staggered DID");
    add_common(att, c, true);
    add_treatment(att, c);
    att->add_option("--estimator", c.estimator, "cs, ipw, dr, imputation, switcher or twfe")->capture_default_str();
    att->add_option("--control", c.control, "never or notyet")->capture_default_str();
    att->add_option("--boot", c.boot, "Bootstrap replications")->capture_default_str();
    att->add_option("--horizon", c.horizon, "Switcher horizon")->capture_default_str();
    att->add_option("--placebos", c.placebos, "Switcher placebo lags")->capture_default_str();

    auto* syn = app.add_subcommand("synth", "Synthetic control with placebo inference");
    add_common(syn, c, true);
    add_treatment(syn, c);
    syn->add_option("--treated", c.treated, "Treated city ids (averaged when several)")->delimiter(',')->required();
    syn->add_option("--donors", c.donor_region, "Donor region")->capture_default_str();
    syn->add_option("--t0", c.t0, "Last pre-treatment year");
    syn->add_option("--placebo", c.placebo, "in-space, random or none")->capture_default_str();
    syn->add_option("--samples", c.samples, "Random placebo draws")->capture_default_str();
    syn->add_option("--group-size", c.group_size, "Donors per random placebo (0: number treated)");

    auto* gs = app.add_subcommand("gsynth", "Interactive fixed-effects counterfactuals");
    add_common(gs, c, true);
    add_treatment(gs, c);
    gs->add_option("--treated", c.treated, "Treated city ids (default: all treated)")->delimiter(',');
    gs->add_option("--r", c.factors, "Number of factors or 'auto'")->capture_default_str();
    gs->add_option("--r-max", c.r_max, "Largest r tried by cross-validation")->capture_default_str();
    gs->add_option("--boot", c.boot, "Bootstrap replications")->capture_default_str();
    gs->add_flag("--per-city", c.per_city, "Also fit each treated city separately");

    auto* pv = app.add_subcommand("pvar", "First-order panel VAR by GMM");
    add_common(pv, c, true);
    pv->add_option("--vars", c.vars, "Variables")->delimiter(',');
    pv->add_option("--sample", c.sample, "all, europe or islam")->capture_default_str();
    pv->add_option("--instrument-lags", c.instrument_lags, "Lagged levels used as instruments")->capture_default_str();
    pv->add_flag("--granger", c.granger, "Granger causality Wald tests");

    auto* sim = app.add_subcommand("simulate", "Simulate a panel with known effects");
    sim->add_option("--config", c.config_path, "JSON simulation config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 3;
    }
    c.command = app.get_subcommands().front()->get_name();

    try {
        hp::cli::run(c, std::cerr);
    } catch (const hp::Error& e) {
        std::cerr << hp::cli::error_json(e) << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":{\"category\":\"config\",\"message\":\"" << e.what() << "\"}}\n";
        return 3;
    }
    return 0;
}
