#pragma once

// Low-storage RK3 time integration, Taylor-Green initialization and the
// monitored simulation driver.

#include "fdlab/gridexec.hpp"
#include "fdlab/powermeter.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace fdlab::solver {

// Two-register scheme: S <- A_k S + R, q <- q + B_k dt S.
struct RKScheme {
    static constexpr int kStages = 3;
    static constexpr std::array<double, 3> A{0.0, -5.0 / 9.0, -153.0 / 128.0};
    static constexpr std::array<double, 3> B{1.0 / 3.0, 15.0 / 16.0, 8.0 / 15.0};
};

// One step of the scheme for a scalar ODE dy/dt = f(y).
double rk3_scalar_step(double y, double dt, const std::function<double(double)>& f);

inline constexpr double kDefaultCfl = 0.4;

struct RunConfig {
    int n = 64;
    std::int64_t steps = 500;
    std::optional<double> dt;  // fixed step; CFL mode when absent
    double cfl = kDefaultCfl;
    ns::FlowParams params;
    plan::Variant variant = plan::Variant::BL;
    int repeats = 5;
    bool monitor = true;
    int workers = 1;
    std::int64_t snapshot_every = 0; // 0 disables snapshots
    std::filesystem::path snapshot_dir = ".";

    void validate() const; // throws InputError
};

// Taylor-Green vortex on the grid with T = 1; halos exchanged.
void init_tgv(grid::FieldStore& store, const grid::Grid& g, const ns::FlowParams& params);

// dt = cfl h / max(|u| + sqrt(T) / M) over the interior of the current state.
double cfl_timestep(const grid::FieldStore& store, const grid::Grid& g, const ns::FlowParams& params, double cfl);

// Owns the compiled plan and the accumulator register.
class Integrator {
public:
    Integrator(const plan::KernelPlan& plan, const grid::Grid& g, int workers = 1);

    const grid::Executor& executor() const { return exec_; }

    // Saves the state, runs the three stages and re-checks positivity.
    void step(grid::FieldStore& store, double dt, std::int64_t step_index = -1);

private:
    grid::Executor exec_;
    std::array<grid::Array, 5> accum_;
};

struct IterationRecord {
    std::int64_t iteration = 0; // 0 is the sample before the first step
    double t = 0.0;             // seconds since the first sample
    std::optional<double> power;
    std::optional<double> cumulative_energy;
};

using RecordSink = std::function<void(const IterationRecord&)>;

struct RunResult {
    grid::Grid grid;
    grid::FieldStore store;
    double dt = 0.0;
    plan::Counters counters;
    std::vector<power::PowerSample> samples;
    std::vector<IterationRecord> records;
    power::Summary summary;
};

// Initializes, then advances `steps` iterations sampling the monitor before
// the loop and after each iteration. Each record is handed to `sink` as soon
// as it is taken, so a failing run leaves its partial series behind.
RunResult run(const RunConfig& config, power::PowerSource& source, const RecordSink& sink = {});

} // namespace fdlab::solver
