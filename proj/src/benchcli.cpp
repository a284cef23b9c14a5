#include "fdlab/benchcli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numeric>
#include <thread>

namespace fdlab::bench {

using plan::Variant;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::string utc_now()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

std::string series_row(const solver::IterationRecord& r)
{
    return std::to_string(r.iteration) + "," + num(r.t) + "," + num(r.power) + "," + num(r.cumulative_energy) + "\n";
}

constexpr const char* kSeriesHeader = "iteration,t_s,power_w,cum_energy_j\n";

nlohmann::ordered_json opt_json(const std::optional<double>& v)
{
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json counters_json(const plan::Counters& c)
{
    nlohmann::ordered_json j;
    j["extra_arrays"] = c.extra_arrays;
    j["locals"] = c.locals;
    j["ops_per_point"] = c.ops_per_point;
    j["global_reads_per_point"] = c.global_reads_per_point;
    j["global_writes_per_point"] = c.global_writes_per_point;
    return j;
}

} // namespace

// ---------------------------------------------------------------------------
// parse_config
// ---------------------------------------------------------------------------
CliOptions parse_config(const std::vector<std::string>& args)
{
    std::vector<const char*> argv{"fdbench"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return parse_config(static_cast<int>(argv.size()), argv.data());
}

CliOptions parse_config(int argc, const char* const* argv)
{
    CliOptions opt;
    opt.run.workers = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));

    CLI::App app{"Finite-difference compressible flow benchmark: runs storage-policy variants on the "
                 "Taylor-Green vortex and reports runtime, energy and ratios against BL.",
                 "fdbench"};
    std::string variant = "all";
    double dt = 0.0;
    double cfl = solver::kDefaultCfl;
    std::string emit_plan;
    std::string out = opt.out.string();

    app.add_option("--variant", variant, "Variant to run: bl|rs|ss|ra|sn|sn2|all")
        ->check(CLI::IsMember({"bl", "rs", "ss", "ra", "sn", "sn2", "all"}, CLI::ignore_case))
        ->capture_default_str();
    app.add_option("--grid", opt.run.n, "Grid points per axis (>= 8)")
        ->check(CLI::Range(grid::kMinPoints, 4096))
        ->capture_default_str();
    app.add_option("--steps", opt.run.steps, "Time steps per run")->check(CLI::NonNegativeNumber)->capture_default_str();
    auto* dt_opt = app.add_option("--dt", dt, "Fixed time step")->check(CLI::PositiveNumber);
    auto* cfl_opt = app.add_option("--cfl", cfl, "CFL number (time step frozen at t=0)")
                        ->check(CLI::PositiveNumber)
                        ->capture_default_str();
    dt_opt->excludes(cfl_opt);
    app.add_option("--repeats", opt.run.repeats, "Repeats per variant")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--power-source", opt.power_source,
                   "none | mock:const=W | mock:ramp=a,b | counter:PATH[,PATH...][,max=V] | cmd:\"ARGV\"")
        ->capture_default_str();
    app.add_option("--emit-plan", emit_plan, "Write plan dumps and exit (file for one variant, directory otherwise)");
    app.add_flag("--validate", opt.validate, "Cross-variant equivalence check against BL");
    app.add_option("--out", out, "Output directory")->capture_default_str();
    app.add_option("--snapshot", opt.run.snapshot_every, "Write a field snapshot every K steps (0 = never)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--workers", opt.run.workers, "Worker threads for the kernels")->check(CLI::PositiveNumber)
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        opt.help = true;
        opt.help_text = app.help();
        return opt;
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    variant = lower(variant);
    if (variant != "all") opt.variants = {*plan::parse_variant(variant)};
    if (dt_opt->count() > 0) opt.run.dt = dt;
    opt.run.cfl = cfl;
    if (!emit_plan.empty()) opt.emit_plan = emit_plan;
    opt.out = out;
    opt.run.snapshot_dir = opt.out;
    try {
        opt.run.validate();
    } catch (const InputError& e) {
        throw UsageError(e.what());
    }
    return opt;
}

// ---------------------------------------------------------------------------
// ratios and aggregation
// ---------------------------------------------------------------------------
Ratios compute_ratios(const std::map<Variant, double>& runtimes, const std::map<Variant, double>& energies)
{
    auto bl = runtimes.find(Variant::BL);
    if (bl == runtimes.end()) {
        throw ReportError("ratios are relative to BL; include BL in the variant set (--variant all or bl)");
    }
    Ratios r;
    for (const auto& [v, t] : runtimes) r.speedup[v] = bl->second / t;
    if (!energies.empty()) {
        auto ebl = energies.find(Variant::BL);
        if (ebl == energies.end()) {
            throw ReportError("energy savings are relative to BL; include BL in the variant set");
        }
        for (const auto& [v, e] : energies) r.energy_saving[v] = ebl->second / e;
    }
    return r;
}

std::string format_ratio(double r)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", r);
    return buf;
}

std::vector<Aggregate> aggregate(const std::vector<RunRow>& runs, int n)
{
    std::vector<Aggregate> out;
    const ns::EquationSet eq = ns::build_equations({});
    const grid::Grid g(n);
    for (Variant v : plan::kAllVariants) {
        std::vector<const RunRow*> rows;
        for (const RunRow& r : runs) {
            if (r.variant == v) rows.push_back(&r);
        }
        if (rows.empty()) continue;
        Aggregate a;
        a.variant = v;
        double t = 0.0;
        double e = 0.0;
        bool all_energy = true;
        for (const RunRow* r : rows) {
            t += r->runtime;
            if (r->energy) {
                e += *r->energy;
            } else {
                all_energy = false;
            }
        }
        a.mean_runtime = t / static_cast<double>(rows.size());
        if (all_energy) a.mean_energy = e / static_cast<double>(rows.size());
        a.counters = plan::build_plan(eq, v, g.spacing()).counters;
        a.ops_per_timestep = a.counters.ops_per_timestep(n);
        out.push_back(a);
    }

    std::map<Variant, double> runtimes;
    std::map<Variant, double> energies;
    bool energies_complete = true;
    for (const Aggregate& a : out) {
        runtimes[a.variant] = a.mean_runtime;
        if (a.mean_energy) {
            energies[a.variant] = *a.mean_energy;
        } else {
            energies_complete = false;
        }
    }
    if (runtimes.contains(Variant::BL)) {
        const Ratios r = compute_ratios(runtimes, energies_complete ? energies : std::map<Variant, double>{});
        for (Aggregate& a : out) {
            a.speedup = r.speedup.at(a.variant);
            if (auto it = r.energy_saving.find(a.variant); it != r.energy_saving.end()) a.energy_saving = it->second;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// running
// ---------------------------------------------------------------------------
std::string series_file_name(Variant v, int repeat)
{
    return "series_" + lower(std::string(plan::variant_name(v))) + "_r" + std::to_string(repeat) + ".csv";
}

BenchReport run_matrix(const CliOptions& options, power::PowerSource& source,
                       const std::optional<std::filesystem::path>& series_dir)
{
    BenchReport report;
    report.options = options;
    report.power_source_description = source.describe();
    report.started_at = utc_now();
    if (series_dir) ensure_dir(*series_dir);

    for (Variant v : options.variants) {
        for (int rep = 0; rep < options.run.repeats; ++rep) {
            solver::RunConfig cfg = options.run;
            cfg.variant = v;
            std::ofstream stream;
            if (series_dir) {
                const auto path = *series_dir / series_file_name(v, rep);
                stream.open(path, std::ios::binary);
                if (!stream) throw IoError("cannot open " + path.string() + " for writing");
                stream << kSeriesHeader << std::flush;
            }
            auto sink = [&](const solver::IterationRecord& r) {
                if (stream.is_open()) stream << series_row(r) << std::flush;
            };
            solver::RunResult res = solver::run(cfg, source, sink);

            RunRow row;
            row.variant = v;
            row.repeat = rep;
            row.n = cfg.n;
            row.steps = cfg.steps;
            row.dt = res.dt;
            row.runtime = res.summary.runtime;
            row.energy = res.summary.total_energy;
            row.mean_power = res.summary.mean_power;
            row.warmup = rep == 0;
            report.runs.push_back(row);
            report.series.push_back({v, rep, std::move(res.records)});
        }
    }
    auto order = [](const auto& a, const auto& b) {
        return std::pair(static_cast<int>(a.variant), a.repeat) < std::pair(static_cast<int>(b.variant), b.repeat);
    };
    std::stable_sort(report.runs.begin(), report.runs.end(), order);
    std::stable_sort(report.series.begin(), report.series.end(), order);
    report.aggregates = aggregate(report.runs, options.run.n);
    return report;
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------
ValidationReport validate_mode(const CliOptions& options,
                               const std::function<void(grid::FieldStore&, const grid::Grid&)>& initial,
                               const PlanHook& hook)
{
    ValidationReport report;
    const grid::Grid g(options.run.n);
    const ns::EquationSet eq = ns::build_equations(options.run.params);
    std::array<grid::Array, 5> reference;
    std::array<double, 5> ref_norm{};

    for (Variant v : plan::kAllVariants) {
        ValidationRow row;
        row.variant = v;
        try {
            plan::KernelPlan kp = plan::build_plan(eq, v, g.spacing());
            if (hook && v != Variant::BL) hook(kp);
            grid::FieldStore store(g);
            if (initial) {
                initial(store, g);
                for (auto& a : store.solution) grid::halo_exchange_periodic(a, g);
            } else {
                solver::init_tgv(store, g, options.run.params);
            }
            const double dt = options.run.dt ? *options.run.dt
                                             : solver::cfl_timestep(store, g, options.run.params, options.run.cfl);
            solver::Integrator integrator(kp, g, options.run.workers);
            for (std::int64_t it = 1; it <= options.run.steps; ++it) integrator.step(store, dt, it);

            const int n = g.n();
            for (std::size_t c = 0; c < 5; ++c) {
                if (v == Variant::BL) {
                    reference[c] = store.solution[c];
                    double m = 0.0;
                    for (int k = 0; k < n; ++k)
                        for (int j = 0; j < n; ++j)
                            for (int i = 0; i < n; ++i) m = std::max(m, std::abs(reference[c][g.index(i, j, k)]));
                    ref_norm[c] = m;
                    continue;
                }
                double d = 0.0;
                for (int k = 0; k < n; ++k) {
                    for (int j = 0; j < n; ++j) {
                        for (int i = 0; i < n; ++i) {
                            const std::size_t idx = g.index(i, j, k);
                            const double diff = std::abs(store.solution[c][idx] - reference[c][idx]);
                            d = std::isnan(diff) ? diff : std::max(d, diff);
                            if (std::isnan(d)) break;
                        }
                    }
                }
                row.deviation[c] = ref_norm[c] > 0.0 ? d / ref_norm[c] : d;
            }
        } catch (const Error& e) {
            report.failure = std::string(plan::variant_name(v)) + ": " + e.what();
            report.rows.push_back(row);
            report.pass = false;
            return report;
        }
        report.rows.push_back(row);
    }
    report.pass = std::all_of(report.rows.begin(), report.rows.end(), [&](const ValidationRow& r) {
        return std::all_of(r.deviation.begin(), r.deviation.end(),
                           [&](double d) { return !std::isnan(d) && d <= report.tolerance; });
    });
    if (!report.pass) report.failure = "deviation above tolerance";
    return report;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------
std::string series_csv(const Series& s)
{
    std::string out = kSeriesHeader;
    for (const auto& r : s.records) out += series_row(r);
    return out;
}

std::string summary_csv(const std::vector<Aggregate>& aggregates)
{
    std::string out = "variant,mean_runtime_s,speedup,mean_energy_j,energy_saving,ops_per_timestep,extra_arrays,locals\n";
    for (const Aggregate& a : aggregates) {
        out += std::string(plan::variant_name(a.variant)) + "," + num(a.mean_runtime) + "," + num(a.speedup) + "," +
               num(a.mean_energy) + "," + num(a.energy_saving) + "," + std::to_string(a.ops_per_timestep) + "," +
               std::to_string(a.counters.extra_arrays) + "," + std::to_string(a.counters.locals) + "\n";
    }
    return out;
}

std::string runs_csv(const std::vector<RunRow>& runs)
{
    std::string out = "variant,repeat,n,steps,dt,runtime_s,energy_j,mean_power_w,warmup\n";
    for (const RunRow& r : runs) {
        out += std::string(plan::variant_name(r.variant)) + "," + std::to_string(r.repeat) + "," +
               std::to_string(r.n) + "," + std::to_string(r.steps) + "," + num(r.dt) + "," + num(r.runtime) + "," +
               num(r.energy) + "," + num(r.mean_power) + "," + (r.warmup ? "1" : "0") + "\n";
    }
    return out;
}

std::string report_json(const BenchReport& report)
{
    using nlohmann::ordered_json;
    const auto& o = report.options;
    ordered_json j;
    j["tool"] = "fdbench";
    j["version"] = kVersion;
    j["versions"] = {{"compiler", __VERSION__},
                     {"cli11", CLI11_VERSION},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    j["started_at"] = report.started_at;
    ordered_json cfg;
    ordered_json variants = ordered_json::array();
    for (Variant v : o.variants) variants.push_back(plan::variant_name(v));
    cfg["variants"] = variants;
    cfg["grid"] = o.run.n;
    cfg["steps"] = o.run.steps;
    cfg["timestep_mode"] = o.run.dt ? "fixed" : "cfl";
    cfg["dt"] = opt_json(o.run.dt);
    cfg["cfl"] = o.run.cfl;
    cfg["repeats"] = o.run.repeats;
    cfg["workers"] = o.run.workers;
    cfg["power_source"] = report.power_source_description;
    cfg["flow"] = {{"reynolds", o.run.params.reynolds},
                   {"prandtl", o.run.params.prandtl},
                   {"mach", o.run.params.mach},
                   {"gamma", o.run.params.gamma}};
    j["config"] = cfg;

    ordered_json runs = ordered_json::array();
    for (const RunRow& r : report.runs) {
        runs.push_back({{"variant", plan::variant_name(r.variant)},
                        {"repeat", r.repeat},
                        {"dt", r.dt},
                        {"runtime_s", r.runtime},
                        {"energy_j", opt_json(r.energy)},
                        {"mean_power_w", opt_json(r.mean_power)},
                        {"warmup", r.warmup}});
    }
    j["runs"] = runs;

    ordered_json aggs = ordered_json::array();
    for (const Aggregate& a : report.aggregates) {
        aggs.push_back({{"variant", plan::variant_name(a.variant)},
                        {"mean_runtime_s", a.mean_runtime},
                        {"speedup", opt_json(a.speedup)},
                        {"mean_energy_j", opt_json(a.mean_energy)},
                        {"energy_saving", opt_json(a.energy_saving)},
                        {"ops_per_timestep", a.ops_per_timestep},
                        {"counters", counters_json(a.counters)}});
    }
    j["aggregates"] = aggs;
    return j.dump(2) + "\n";
}

void emit_reports(const BenchReport& report, const std::filesystem::path& dir)
{
    ensure_dir(dir);
    for (const Series& s : report.series) write_file(dir / series_file_name(s.variant, s.repeat), series_csv(s));
    write_file(dir / "summary.csv", summary_csv(report.aggregates));
    write_file(dir / "runs.csv", runs_csv(report.runs));
    write_file(dir / "report.json", report_json(report));
}

void emit_plans(const CliOptions& options, const std::filesystem::path& path)
{
    const grid::Grid g(options.run.n);
    const ns::EquationSet eq = ns::build_equations(options.run.params);
    if (options.variants.size() == 1) {
        if (path.has_parent_path()) ensure_dir(path.parent_path());
        write_file(path, plan::dump_plan(plan::build_plan(eq, options.variants[0], g.spacing()), g.n()));
        return;
    }
    ensure_dir(path);
    for (Variant v : options.variants) {
        write_file(path / ("plan_" + lower(std::string(plan::variant_name(v))) + ".json"),
                   plan::dump_plan(plan::build_plan(eq, v, g.spacing()), g.n()));
    }
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------
int main_entry(int argc, const char* const* argv)
{
    CliOptions opt;
    std::unique_ptr<power::PowerSource> source;
    try {
        opt = parse_config(argc, argv);
        if (opt.help) {
            std::cout << opt.help_text;
            return 0;
        }
        if (!opt.emit_plan && !opt.validate) source = power::parse_power_source(opt.power_source);
    } catch (const UsageError& e) {
        std::cerr << "fdbench: " << e.what() << "\nRun with --help for usage.\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "fdbench: " << e.what() << "\nRun with --help for usage.\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fdbench: " << e.what() << "\n";
        return 1;
    }

    try {
        if (opt.emit_plan) {
            emit_plans(opt, *opt.emit_plan);
            std::cout << "plan dump written to " << opt.emit_plan->string() << "\n";
            return 0;
        }
        if (opt.validate) {
            const ValidationReport r = validate_mode(opt);
            std::printf("validation: N=%d steps=%lld tolerance=%.0e\n", opt.run.n,
                        static_cast<long long>(opt.run.steps), r.tolerance);
            for (const ValidationRow& row : r.rows) {
                std::printf("  %-4s", std::string(plan::variant_name(row.variant)).c_str());
                for (double d : row.deviation) std::printf(" %.3e", d);
                std::printf("\n");
            }
            if (!r.failure.empty()) std::printf("  %s\n", r.failure.c_str());
            std::printf("%s\n", r.pass ? "PASS" : "FAIL");
            return r.pass ? 0 : 1;
        }

        const BenchReport report = run_matrix(opt, *source, opt.out);
        emit_reports(report, opt.out);
        std::printf("%-5s %14s %8s %14s %8s %16s\n", "var", "runtime_s", "speedup", "energy_j", "saving", "ops/step");
        for (const Aggregate& a : report.aggregates) {
            std::printf("%-5s %14.4f %8s %14s %8s %16lld\n", std::string(plan::variant_name(a.variant)).c_str(),
                        a.mean_runtime, a.speedup ? format_ratio(*a.speedup).c_str() : "-",
                        a.mean_energy ? num(*a.mean_energy).c_str() : "-",
                        a.energy_saving ? format_ratio(*a.energy_saving).c_str() : "-",
                        static_cast<long long>(a.ops_per_timestep));
        }
        if (std::none_of(opt.variants.begin(), opt.variants.end(), [](Variant v) { return v == Variant::BL; })) {
            std::printf("note: ratios need BL in the variant set\n");
        }
        std::printf("reports written to %s\n", opt.out.string().c_str());
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "fdbench: " << e.what() << "\n";
        return 1;
    }
}

} // namespace fdlab::bench
