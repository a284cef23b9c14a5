#pragma once

// Benchmark orchestration: variant x repeat matrices, cross-variant
// validation and CSV/JSON reports.

#include "fdlab/solver.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fdlab::bench {

struct CliOptions {
    solver::RunConfig run;
    std::vector<plan::Variant> variants{plan::kAllVariants.begin(), plan::kAllVariants.end()};
    std::string power_source = "none";
    std::optional<std::filesystem::path> emit_plan;
    bool validate = false;
    std::filesystem::path out = "bench_out";
    bool help = false;
    std::string help_text;
};

// Throws UsageError on unknown flags or invalid values.
CliOptions parse_config(const std::vector<std::string>& args);
CliOptions parse_config(int argc, const char* const* argv);

struct RunRow {
    plan::Variant variant = plan::Variant::BL;
    int repeat = 0;
    int n = 0;
    std::int64_t steps = 0;
    double dt = 0.0;
    double runtime = 0.0;
    std::optional<double> energy;
    std::optional<double> mean_power;
    bool warmup = false; // first repeat of a variant
};

struct Series {
    plan::Variant variant = plan::Variant::BL;
    int repeat = 0;
    std::vector<solver::IterationRecord> records;
};

struct Aggregate {
    plan::Variant variant = plan::Variant::BL;
    double mean_runtime = 0.0;
    std::optional<double> mean_energy;
    std::optional<double> speedup;
    std::optional<double> energy_saving;
    plan::Counters counters;
    std::int64_t ops_per_timestep = 0;
};

struct BenchReport {
    CliOptions options;
    std::string power_source_description;
    std::string started_at;
    std::vector<RunRow> runs;         // sorted by variant, then repeat
    std::vector<Series> series;
    std::vector<Aggregate> aggregates;
};

struct Ratios {
    std::map<plan::Variant, double> speedup;
    std::map<plan::Variant, double> energy_saving;
};

// speedup(v) = runtime(BL) / runtime(v); energy_saving(v) = energy(BL) /
// energy(v). Throws ReportError when BL is missing.
Ratios compute_ratios(const std::map<plan::Variant, double>& runtimes,
                      const std::map<plan::Variant, double>& energies = {});

// Two decimal places, for presentation.
std::string format_ratio(double r);

// Means over repeats plus ratios when BL is part of the matrix.
std::vector<Aggregate> aggregate(const std::vector<RunRow>& runs, int n);

// Runs the matrix sequentially; per-iteration series files are streamed into
// `series_dir` when given so failed runs leave partial data.
BenchReport run_matrix(const CliOptions& options, power::PowerSource& source,
                       const std::optional<std::filesystem::path>& series_dir = std::nullopt);

struct ValidationRow {
    plan::Variant variant = plan::Variant::BL;
    std::array<double, 5> deviation{}; // relative max-norm vs BL per conserved field
};

struct ValidationReport {
    std::vector<ValidationRow> rows;
    bool pass = false;
    std::string failure; // context for a FAIL caused by an error
    double tolerance = 1e-10;
};

using PlanHook = std::function<void(plan::KernelPlan&)>;

// Advances every variant from the same initial state for options.run.steps
// steps and compares against BL. `initial` replaces the TGV state when
// given; `hook` edits each non-BL plan before execution (negative controls).
ValidationReport validate_mode(const CliOptions& options,
                               const std::function<void(grid::FieldStore&, const grid::Grid&)>& initial = {},
                               const PlanHook& hook = {});

std::string series_csv(const Series& s);
std::string summary_csv(const std::vector<Aggregate>& aggregates);
std::string runs_csv(const std::vector<RunRow>& runs);
std::string report_json(const BenchReport& report);

std::string series_file_name(plan::Variant v, int repeat);

// Writes series_<variant>_r<repeat>.csv, summary.csv, runs.csv and
// report.json under dir. Throws IoError.
void emit_reports(const BenchReport& report, const std::filesystem::path& dir);

// Writes the plan dump of every selected variant; a single variant goes to
// `path`, several go to path/plan_<variant>.json.
void emit_plans(const CliOptions& options, const std::filesystem::path& path);

// Full command-line entry point; returns the process exit code.
int main_entry(int argc, const char* const* argv);

} // namespace fdlab::bench
