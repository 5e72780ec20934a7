#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "histpanel/error.hpp"

namespace hp::cli {

inline constexpr int kSchemaVersion = 1;

/// Everything a subcommand needs. Seeds are always explicit.
struct RunConfig {
    std::string command;
    std::string data_dir;
    std::string out_dir = ".";
    std::uint64_t seed = 20240601;
    int threads = 1;
    std::optional<std::string> transform;  // per-command default when unset
    std::string rule = "islam";
    std::string variant = "isolated";
    double radius_km = 300.0;
    bool covariates = false;

    // ingest
    std::string cities_file;
    std::string panel_file;
    std::string covariates_file;
    std::string institutions_file;

    // break-test
    std::string input;
    std::vector<std::string> regions;
    double trim = 0.15;
    std::string model = "both";
    int max_lag = -1;

    // ddd
    bool table3 = false;

    // att-gt
    std::string estimator = "cs";
    std::string control = "never";
    int boot = 1000;
    int horizon = 5;
    int placebos = 1;

    // synth
    std::vector<std::string> treated;
    std::string donor_region = "WesternEurope";
    std::optional<int> t0;
    std::string placebo = "in-space";
    int samples = 1000;
    int group_size = 0;  // 0: number of treated cities

    // gsynth
    std::string factors = "auto";
    int r_max = 5;
    bool per_city = false;

    // pvar
    std::vector<std::string> vars{"log_pop", "madrasas"};
    std::string sample = "all";
    int instrument_lags = 1;
    bool granger = false;

    // simulate
    std::string config_path;
};

std::vector<std::string> commands();

/// Executes one subcommand, writing artifacts under out_dir and a short
/// summary to `log`. Throws hp::Error on failure.
void run(const RunConfig& config, std::ostream& log);

/// Machine-readable error record.
std::string error_json(const Error& error);

}  // namespace hp::cli
