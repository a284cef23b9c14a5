#include "fdlab/solver.hpp"

#include <cmath>

namespace fdlab::solver {

using grid::Array;

double rk3_scalar_step(double y, double dt, const std::function<double(double)>& f)
{
    double s = 0.0;
    for (int k = 0; k < RKScheme::kStages; ++k) {
        s = RKScheme::A[static_cast<std::size_t>(k)] * s + f(y);
        y += RKScheme::B[static_cast<std::size_t>(k)] * dt * s;
    }
    return y;
}

void RunConfig::validate() const
{
    params.validate();
    if (n < grid::kMinPoints) throw InputError("grid size must be at least " + std::to_string(grid::kMinPoints));
    if (steps < 0) throw InputError("step count must be non-negative");
    if (dt && !(*dt > 0.0)) throw InputError("dt must be positive");
    if (!dt && !(cfl > 0.0)) throw InputError("CFL number must be positive");
    if (repeats < 1) throw InputError("repeat count must be at least 1");
    if (workers < 1) throw InputError("worker count must be at least 1");
    if (snapshot_every < 0) throw InputError("snapshot interval must be non-negative");
}

void init_tgv(grid::FieldStore& store, const grid::Grid& g, const ns::FlowParams& params)
{
    const int n = g.n();
    const double gm = params.gamma_m2();
    for (int k = 0; k < n; ++k) {
        const double z = g.coord(k);
        for (int j = 0; j < n; ++j) {
            const double y = g.coord(j);
            for (int i = 0; i < n; ++i) {
                const double x = g.coord(i);
                const double u0 = std::sin(x) * std::cos(y) * std::cos(z);
                const double u1 = -std::cos(x) * std::sin(y) * std::cos(z);
                const double u2 = 0.0;
                const double p = params.inv_gamma_m2() +
                                 (std::cos(2.0 * x) + std::cos(2.0 * y)) * (2.0 + std::cos(2.0 * z)) / 16.0;
                const double temp = 1.0;
                const double rho = gm * p / temp;
                const std::size_t idx = g.index(i, j, k);
                store.solution[0][idx] = rho;
                store.solution[1][idx] = rho * u0;
                store.solution[2][idx] = rho * u1;
                store.solution[3][idx] = rho * u2;
                store.solution[4][idx] = p / (params.gamma - 1.0) + 0.5 * rho * (u0 * u0 + u1 * u1 + u2 * u2);
            }
        }
    }
    for (Array& a : store.solution) grid::halo_exchange_periodic(a, g);
}

double cfl_timestep(const grid::FieldStore& store, const grid::Grid& g, const ns::FlowParams& params, double cfl)
{
    const int n = g.n();
    double speed = 0.0;
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const std::size_t idx = g.index(i, j, k);
                const double rho = store.solution[0][idx];
                double m2 = 0.0;
                for (std::size_t c = 1; c <= 3; ++c) m2 += store.solution[c][idx] * store.solution[c][idx];
                const double usq = m2 / (rho * rho);
                const double p = (params.gamma - 1.0) * (store.solution[4][idx] - 0.5 * rho * usq);
                const double temp = params.gamma_m2() * p / rho;
                if (!(temp > 0.0)) throw StateError("non-positive temperature in the initial state");
                speed = std::max(speed, std::sqrt(usq) + std::sqrt(temp) / params.mach);
            }
        }
    }
    if (!(speed > 0.0)) throw StateError("zero signal speed; cannot form a CFL timestep");
    return cfl * g.h() / speed;
}

Integrator::Integrator(const plan::KernelPlan& plan, const grid::Grid& g, int workers) : exec_(plan, g, workers)
{
    for (Array& a : accum_) a.assign(g.padded_size(), 0.0);
}

void Integrator::step(grid::FieldStore& store, double dt, std::int64_t step_index)
{
    if (!(dt > 0.0)) throw InputError("dt must be positive");
    const grid::Grid& g = exec_.grid();
    const int n = g.n();
    for (std::size_t c = 0; c < 5; ++c) store.saved[c] = store.solution[c];

    for (int stage = 0; stage < RKScheme::kStages; ++stage) {
        exec_.execute(store, step_index);
        const double a = RKScheme::A[static_cast<std::size_t>(stage)];
        const double bdt = RKScheme::B[static_cast<std::size_t>(stage)] * dt;
        for (std::size_t c = 0; c < 5; ++c) {
            double* q = store.solution[c].data();
            double* s = accum_[c].data();
            const double* r = store.residual[c].data();
            for (int k = 0; k < n; ++k) {
                for (int j = 0; j < n; ++j) {
                    const std::size_t base = g.index(0, j, k);
                    for (std::size_t i = base; i < base + static_cast<std::size_t>(n); ++i) {
                        s[i] = a * s[i] + r[i];
                        q[i] += bdt * s[i];
                    }
                }
            }
            grid::halo_exchange_periodic(store.solution[c], g);
        }
    }

    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const std::size_t idx = g.index(i, j, k);
                const double rho = store.solution[0][idx];
                double m2 = 0.0;
                for (std::size_t c = 1; c <= 3; ++c) m2 += store.solution[c][idx] * store.solution[c][idx];
                const double internal = store.solution[4][idx] - 0.5 * m2 / rho;
                if (!(rho > 0.0) || !(internal > 0.0)) {
                    throw StateError("non-positive density or internal energy at point (" + std::to_string(i) + "," +
                                     std::to_string(j) + "," + std::to_string(k) + ") after step " +
                                     std::to_string(step_index));
                }
            }
        }
    }
}

RunResult run(const RunConfig& config, power::PowerSource& source, const RecordSink& sink)
{
    config.validate();
    const grid::Grid g(config.n);
    const ns::EquationSet eq = ns::build_equations(config.params);
    const plan::KernelPlan kp = plan::build_plan(eq, config.variant, g.spacing());

    RunResult result{g, grid::FieldStore(g), 0.0, kp.counters, {}, {}, {}};
    grid::FieldStore& store = result.store;
    init_tgv(store, g, config.params);
    result.dt = config.dt ? *config.dt : cfl_timestep(store, g, config.params, config.cfl);

    Integrator integrator(kp, g, config.workers);
    power::Monitor monitor(source);
    power::EnergyAccumulator energy;

    auto take = [&](std::int64_t iteration) {
        const power::PowerSample s = config.monitor ? monitor.sample() : power::PowerSample{source.now(), {}, {}};
        result.samples.push_back(s);
        IterationRecord r;
        r.iteration = iteration;
        r.t = s.t - result.samples.front().t;
        r.power = s.power;
        r.cumulative_energy = energy.add(s);
        result.records.push_back(r);
        if (sink) sink(r);
    };

    auto snapshot = [&](std::int64_t step) {
        if (config.snapshot_every <= 0 || step % config.snapshot_every != 0) return;
        const std::string name =
            "snapshot_" + std::string(plan::variant_name(config.variant)) + "_" + std::to_string(step) + ".bin";
        grid::write_snapshot(config.snapshot_dir / name, store, g, step);
    };

    take(0);
    snapshot(0);
    for (std::int64_t it = 1; it <= config.steps; ++it) {
        integrator.step(store, result.dt, it);
        if (config.monitor || it == config.steps) {
            take(it);
        }
        snapshot(it);
    }

    result.summary = power::summarize(result.samples, config.steps);
    return result;
}

} // namespace fdlab::solver
