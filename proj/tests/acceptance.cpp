// Acceptance checks: one PASS/FAIL line per criterion. Criterion 12 is
// informational and never affects the exit code.

#include "fdlab/benchcli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <thread>

using namespace fdlab;
using grid::Grid;
using plan::Variant;

namespace {

constexpr std::array<Variant, 6> kOrder{Variant::BL, Variant::RS, Variant::SS, Variant::RA, Variant::SN, Variant::SN2};
const double kPi = std::acos(-1.0);

const ns::EquationSet& equations()
{
    static const ns::EquationSet eq = ns::build_equations({});
    return eq;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Pointwise random periodic state with positive density and pressure.
void random_state(grid::FieldStore& s, const Grid& g, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = g.n();
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const std::size_t idx = g.index(i, j, k);
                const double rho = 1.0 + 0.2 * u(rng);
                double usq = 0.0;
                for (std::size_t c = 0; c < 3; ++c) {
                    const double v = 0.5 * u(rng);
                    s.solution[1 + c][idx] = rho * v;
                    usq += v * v;
                }
                s.solution[0][idx] = rho;
                s.solution[4][idx] = (71.4 + u(rng)) / 0.4 + 0.5 * rho * usq;
            }
        }
    }
    for (auto& a : s.solution) grid::halo_exchange_periodic(a, g);
}

template <typename F>
double interior_reduce(const grid::Array& a, const Grid& g, F f)
{
    double r = 0.0;
    const int n = g.n();
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) r = f(r, a[g.index(i, j, k)]);
    return r;
}

double abs_sum(const grid::Array& a, const Grid& g)
{
    return interior_reduce(a, g, [](double r, double v) { return r + std::abs(v); });
}

Outcome table_counts()
{
    const std::array<std::pair<int, int>, 6> expected{{{63, 0}, {9, 0}, {9, 54}, {0, 0}, {0, 63}, {0, 63}}};
    const auto h = Grid(64).spacing();
    Outcome o{true, "arrays/locals"};
    for (std::size_t i = 0; i < 6; ++i) {
        const auto c = plan::build_plan(equations(), kOrder[i], h).counters;
        o.detail += " " + std::string(plan::variant_name(kOrder[i])) + "=" + std::to_string(c.extra_arrays) + "/" +
                    std::to_string(c.locals);
        o.pass = o.pass && c.extra_arrays == expected[i].first && c.locals == expected[i].second;
    }
    return o;
}

Outcome op_ordering()
{
    const auto h = Grid(64).spacing();
    std::map<Variant, std::int64_t> ops;
    for (Variant v : kOrder) ops[v] = plan::build_plan(equations(), v, h).counters.ops_per_point;
    const double ratio = static_cast<double>(ops[Variant::RA]) / static_cast<double>(ops[Variant::BL]);
    Outcome o;
    o.pass = ops[Variant::BL] < ops[Variant::SS] && ops[Variant::SS] < ops[Variant::RS] &&
             ops[Variant::RS] <= ops[Variant::SN] && ops[Variant::SN] == ops[Variant::SN2] &&
             ops[Variant::SN] < ops[Variant::RA] && ratio >= 2.2 && ratio <= 4.0;
    for (Variant v : kOrder) o.detail += std::string(plan::variant_name(v)) + "=" + std::to_string(ops[v]) + " ";
    o.detail += "RA/BL=" + fmt("%.3f", ratio);
    return o;
}

Outcome census()
{
    const auto& ds = equations().derivatives;
    int gradients = 0;
    bool distinct = true;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        gradients += ds[i].velocity_gradient;
        for (std::size_t j = i + 1; j < ds.size(); ++j) {
            distinct = distinct && !expr::structurally_equal(ds[i].node, ds[j].node);
        }
    }
    return {ds.size() == 63 && gradients == 9 && distinct,
            std::to_string(ds.size()) + " derivatives, " + std::to_string(gradients) + " velocity gradients" +
                (distinct ? ", all distinct" : ", duplicates found")};
}

Outcome equivalence()
{
    bench::CliOptions o;
    o.run.n = 32;
    o.run.steps = 50;
    const auto r = bench::validate_mode(o);
    double worst = 0.0;
    for (const auto& row : r.rows)
        for (double d : row.deviation) worst = std::max(worst, d);
    return {r.pass, "max relative deviation " + fmt("%.3e", worst) + (r.failure.empty() ? "" : " (" + r.failure + ")")};
}

Outcome conservation()
{
    double worst_residual = 0.0;
    {
        const Grid g(16);
        for (Variant v : kOrder) {
            const grid::Executor ex(plan::build_plan(equations(), v, g.spacing()), g);
            for (std::uint64_t seed = 0; seed <= 20; ++seed) {
                grid::FieldStore s(g);
                if (seed < 20) {
                    random_state(s, g, 1000 + seed);
                } else {
                    solver::init_tgv(s, g, {});
                }
                ex.execute(s);
                for (std::size_t c = 0; c < 4; ++c) {
                    worst_residual = std::max(worst_residual,
                                              std::abs(grid::grid_sum(s.residual[c], g)) / abs_sum(s.residual[c], g));
                }
            }
        }
    }
    double worst_drift = 0.0;
    {
        const Grid g(32);
        grid::FieldStore s(g);
        solver::init_tgv(s, g, {});
        const double dt = solver::cfl_timestep(s, g, {}, solver::kDefaultCfl);
        std::array<double, 4> start{};
        for (std::size_t c = 0; c < 4; ++c) start[c] = grid::grid_sum(s.solution[c], g);
        solver::Integrator in(plan::build_plan(equations(), Variant::SN, g.spacing()), g);
        for (int it = 1; it <= 100; ++it) in.step(s, dt, it);
        for (std::size_t c = 0; c < 4; ++c) {
            // Momentum totals are zero, so drift is measured against the field magnitude.
            worst_drift = std::max(worst_drift,
                                   std::abs(grid::grid_sum(s.solution[c], g) - start[c]) / abs_sum(s.solution[c], g));
        }
    }
    return {worst_residual <= 1e-9 && worst_drift <= 1e-9,
            "residual sums " + fmt("%.2e", worst_residual) + ", 100-step drift " + fmt("%.2e", worst_drift)};
}

Outcome stencil_order()
{
    auto d1 = [](const std::function<double(double)>& f, double x0, double h) {
        expr::Bindings b;
        b.set_resolver([&](const expr::RefKey& k) -> std::optional<double> { return f(x0 + k.offset[0] * h); });
        return expr::evaluate(expr::first_derivative_stencil(expr::field(expr::Field::Rho), 0, h), b);
    };
    auto err = [&](int n) {
        const double h = 2.0 * kPi / n;
        double e = 0.0;
        for (int i = 0; i < n; ++i) {
            e = std::max(e, std::abs(d1([](double t) { return std::sin(t); }, i * h, h) - std::cos(i * h)));
        }
        return e;
    };
    Outcome o{true, "factors"};
    for (int n : {16, 32, 64}) {
        const double f = err(n) / err(2 * n);
        o.pass = o.pass && f >= 14.0 && f <= 18.0;
        o.detail += " " + fmt("%.2f", f);
    }
    double poly = 0.0;
    for (int deg = 0; deg <= 4; ++deg) {
        const double exact = deg == 0 ? 0.0 : deg * std::pow(0.8, deg - 1);
        poly = std::max(poly, std::abs(d1([deg](double x) { return std::pow(x, deg); }, 0.8, 0.37) - exact));
    }
    o.pass = o.pass && poly <= 1e-12;
    o.detail += ", polynomial error " + fmt("%.1e", poly);
    return o;
}

Outcome rk3_order()
{
    auto decay = [](double v) { return -v; };
    const double one = solver::rk3_scalar_step(1.0, 0.1, decay);
    auto error = [&](double dt) {
        double y = 1.0;
        for (long i = 0, steps = std::lround(1.0 / dt); i < steps; ++i) y = solver::rk3_scalar_step(y, dt, decay);
        return std::abs(y - std::exp(-1.0));
    };
    const double order = std::log2(error(0.1) / error(0.05));
    return {std::abs(one - 0.9048333333333333) <= 1e-12 && order >= 2.9 && order <= 3.1,
            "one step " + fmt("%.16f", one) + ", order " + fmt("%.3f", order)};
}

Outcome tgv_init()
{
    const Grid g(64);
    grid::FieldStore s(g);
    solver::init_tgv(s, g, {});
    const double u2 = interior_reduce(s.solution[3], g, [](double r, double v) { return std::max(r, std::abs(v)); });
    const std::size_t o = g.index(0, 0, 0);
    const double rho = s.solution[0][o];
    const double p = 0.4 * (s.solution[4][o] - 0.5 * s.solution[1][o] * s.solution[1][o] / rho);
    const auto d = grid::integral_diagnostics(s, g);
    return {u2 == 0.0 && std::abs(p - 71.803571428571431) <= 1e-9 && std::abs(d.mean_kinetic - 0.125) <= 0.00125 &&
                d.max_divergence <= 1e-12,
            "p0 " + fmt("%.9f", p) + ", KE " + fmt("%.6f", d.mean_kinetic) + ", max div " +
                fmt("%.2e", d.max_divergence)};
}

Outcome energy()
{
    std::vector<power::PowerSample> flat;
    std::vector<power::PowerSample> ramp;
    for (int i = 0; i <= 10; ++i) {
        flat.push_back({double(i), 100.0, std::nullopt});
        ramp.push_back({double(i), double(i), std::nullopt});
    }
    const double e_flat = power::integrate_energy(flat).back();
    const double e_ramp = power::integrate_energy(ramp).back();

    // Counter readings in uJ crossing the 2^32 - 1 wrap.
    const double max = 4294967295.0;
    std::vector<power::PowerSample> counter;
    const std::array<double, 5> raw{4293000000.0, 4294500000.0, 200000.0, 1700000.0, 3200000.0};
    for (std::size_t i = 0; i < raw.size(); ++i) counter.push_back({double(i), std::nullopt, raw[i] * 1e-6});
    const auto e_counter = power::integrate_energy(counter, max * 1e-6);
    bool increasing = true;
    for (std::size_t i = 1; i < e_counter.size(); ++i) increasing = increasing && e_counter[i] > e_counter[i - 1];

    // Null monitor cost: 101 boundary samples against a 100-step run.
    solver::RunConfig c;
    c.n = 16;
    c.steps = 100;
    power::NullSource src;
    const double runtime = solver::run(c, src).summary.runtime;
    power::Monitor m(src);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i <= c.steps; ++i) (void)m.sample();
    const double overhead = seconds_since(t0) / runtime;

    return {e_flat == 1000.0 && e_ramp == 50.0 && increasing && overhead < 0.02,
            "constant " + fmt("%g", e_flat) + " J, ramp " + fmt("%g", e_ramp) + " J, wrap " +
                (increasing ? "increasing" : "NOT increasing") + ", monitor overhead " + fmt("%.2e", overhead)};
}

Outcome ratios()
{
    struct Table {
        std::array<double, 6> runtime;
        std::array<const char*, 6> printed;
    };
    const std::array<Table, 3> tables{{
        {{1216.39, 715.51, 690.30, 558.70, 549.73, 559.86}, {"1.00", "1.70", "1.76", "2.18", "2.21", "2.17"}},
        {{739.61, 425.02, 426.05, 415.59, 410.96, 401.99}, {"1.00", "1.74", "1.74", "1.78", "1.80", "1.84"}},
        {{496.29, 255.52, 231.25, 234.29, 297.68, 220.45}, {"1.00", "1.94", "2.15", "2.12", "1.67", "2.25"}},
    }};
    int matched = 0;
    for (const Table& t : tables) {
        std::map<Variant, double> rt;
        for (std::size_t i = 0; i < 6; ++i) rt[kOrder[i]] = t.runtime[i];
        const auto r = bench::compute_ratios(rt);
        for (std::size_t i = 0; i < 6; ++i) matched += bench::format_ratio(r.speedup.at(kOrder[i])) == t.printed[i];
    }
    return {matched == 18, std::to_string(matched) + "/18 speed-ups reproduced"};
}

Outcome determinism()
{
    const Grid g(16);
    bool same = true;
    for (Variant v : kOrder) {
        const auto p1 = plan::build_plan(equations(), v, g.spacing());
        const auto p2 = plan::build_plan(equations(), v, g.spacing());
        same = same && plan::dump_plan(p1, 16) == plan::dump_plan(p2, 16);
        grid::FieldStore a(g);
        random_state(a, g, 42);
        grid::FieldStore b = a;
        grid::execute_plan(p1, a, g, 2);
        grid::execute_plan(p2, b, g, 2);
        for (std::size_t c = 0; c < 5; ++c) same = same && a.residual[c] == b.residual[c];
    }
    return {same, same ? "residuals and plan dumps identical" : "runs differ"};
}

Outcome speedup_n128()
{
    const Grid g(128);
    const int workers = std::max(1u, std::thread::hardware_concurrency());
    std::map<Variant, double> times;
    for (Variant v : {Variant::BL, Variant::RA, Variant::SN, Variant::SN2}) {
        grid::FieldStore s(g);
        solver::init_tgv(s, g, {});
        const double dt = solver::cfl_timestep(s, g, {}, solver::kDefaultCfl);
        solver::Integrator in(plan::build_plan(equations(), v, g.spacing()), g, workers);
        const auto t0 = std::chrono::steady_clock::now();
        in.step(s, dt, 1);
        times[v] = seconds_since(t0);
    }
    double best = 0.0;
    std::string detail = std::to_string(workers) + " worker(s), 1 step:";
    for (Variant v : {Variant::RA, Variant::SN, Variant::SN2}) {
        const double sp = times[Variant::BL] / times[v];
        best = std::max(best, sp);
        detail += " " + std::string(plan::variant_name(v)) + "=" + fmt("%.2f", sp);
    }
    return {best >= 1.3, detail};
}

} // namespace

int main()
{
    struct Criterion {
        const char* name;
        Outcome (*run)();
        bool gating;
    };
    const Criterion criteria[] = {
        {"storage table counts", table_counts, true},
        {"operation-count ordering", op_ordering, true},
        {"derivative census", census, true},
        {"cross-variant equivalence", equivalence, true},
        {"conservation", conservation, true},
        {"stencil order", stencil_order, true},
        {"RK3 order", rk3_order, true},
        {"TGV initialization", tgv_init, true},
        {"energy integration", energy, true},
        {"ratio arithmetic", ratios, true},
        {"determinism", determinism, true},
        {"N=128 speed-up (informational)", speedup_n128, false},
    };
    int failed = 0;
    int index = 0;
    for (const Criterion& c : criteria) {
        ++index;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        if (!o.pass && c.gating) ++failed;
        std::printf("%s %2d %s: %s%s\n", o.pass ? "PASS" : "FAIL", index, c.name, o.detail.c_str(),
                    !o.pass && !c.gating ? " (not gating)" : "");
        std::fflush(stdout);
    }
    std::printf("%d gating criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
