#include "fdlab/powermeter.hpp"
#include "fdlab/solver.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

#include <unistd.h>

using namespace fdlab;
using namespace fdlab::power;

namespace {

// Clock returning the values of `ts` in turn, then repeating the last one.
Clock scripted(std::vector<double> ts)
{
    auto i = std::make_shared<std::size_t>(0);
    return [ts = std::move(ts), i] {
        const double t = ts[std::min(*i, ts.size() - 1)];
        ++*i;
        return t;
    };
}

std::filesystem::path temp_file(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("fdlab_power_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_counter(const std::filesystem::path& p, std::uint64_t uj)
{
    std::ofstream(p) << uj << "\n";
}

std::vector<PowerSample> power_series(const std::function<double(double)>& f, int n, double dt)
{
    std::vector<PowerSample> s;
    for (int i = 0; i < n; ++i) s.push_back({i * dt, f(i * dt), std::nullopt});
    return s;
}

} // namespace

TEST(Sources, NullHasTimestampOnly)
{
    NullSource src([] { return 3.0; });
    const PowerSample s = src.read();
    EXPECT_EQ(s.t, 3.0);
    EXPECT_FALSE(s.power);
    EXPECT_FALSE(s.energy);
}

TEST(Sources, MockConstantAtOneSecond)
{
    auto src = MockSource::constant(100.0, scripted({0.0, 1.0}));
    const PowerSample s = src->read();
    EXPECT_EQ(s.t, 1.0);
    EXPECT_EQ(*s.power, 100.0);
    EXPECT_EQ(src->describe(), "mock:const=100");
}

TEST(Sources, MockRampIsRelativeToOpen)
{
    auto src = MockSource::ramp(10.0, 2.0, scripted({5.0, 8.0}));
    EXPECT_EQ(*src->read().power, 16.0);
}

TEST(Sources, CounterFileScalesAndSubtracts)
{
    const auto p = temp_file("energy_uj");
    write_counter(p, 5'000'000);
    CounterFileSource src({p.string()}, CounterFileSource::kDefaultMax, scripted({0.0, 1.0, 2.0}));
    const double e0 = *src.read().energy;
    write_counter(p, 5'750'000);
    const double e1 = *src.read().energy;
    EXPECT_DOUBLE_EQ(e1 - e0, 0.75);
}

TEST(Sources, CounterFileUnwrapsEachPath)
{
    const auto a = temp_file("pkg0");
    const auto b = temp_file("pkg1");
    const double max = 4294967295.0;
    // pkg0 wraps between the second and third reading.
    const std::vector<std::pair<std::uint64_t, std::uint64_t>> readings{
        {4'293'000'000, 100}, {4'294'900'000, 2'000'100}, {1'000'000, 4'000'100}, {3'500'000, 6'000'100}};
    CounterFileSource src({a.string(), b.string()}, max, scripted({0, 1, 2, 3}));
    std::vector<PowerSample> samples;
    for (const auto& [x, y] : readings) {
        write_counter(a, x);
        write_counter(b, y);
        samples.push_back(src.read());
    }
    for (std::size_t i = 1; i < samples.size(); ++i) EXPECT_GT(*samples[i].energy, *samples[i - 1].energy) << i;
    // pkg0: 1.9e6 + (1e6 - 4294900000 + max) + 2.5e6 uJ; pkg1: 6e6 uJ
    const double pkg0 = 1.9e6 + (1e6 - 4294900000.0 + max) + 2.5e6;
    EXPECT_NEAR(*samples.back().energy, (pkg0 + 6e6) * 1e-6, 1e-9);
    const auto series = integrate_energy(samples);
    for (std::size_t i = 1; i < series.size(); ++i) EXPECT_GT(series[i], series[i - 1]);
}

TEST(Sources, CounterFileMissingIsIoError)
{
    CounterFileSource src({"/nonexistent/energy_uj"});
    EXPECT_THROW(src.read(), IoError);
}

TEST(Sources, CommandReadsWatts)
{
    CommandSource src("echo 42", 2.0);
    const PowerSample s = src.read();
    ASSERT_TRUE(s.power);
    EXPECT_EQ(*s.power, 42.0);
    // Later reads reuse the last value once the command has finished.
    EXPECT_EQ(*src.read().power, 42.0);
}

TEST(Sources, CommandWithoutOutputIsIoError)
{
    CommandSource src("true", 2.0);
    EXPECT_THROW(src.read(), IoError);
}

TEST(Sources, CommandReadIsBoundedByTimeout)
{
    CommandSource src("sleep 5", 0.05);
    const auto start = std::chrono::steady_clock::now();
    const PowerSample s = src.read();
    const double waited = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_FALSE(s.power);
    EXPECT_LT(waited, 1.0);
}

TEST(Parse, AcceptedSpecs)
{
    EXPECT_EQ(parse_power_source("none")->describe(), "none");
    EXPECT_EQ(parse_power_source("mock:const=250")->describe(), "mock:const=250");
    EXPECT_EQ(parse_power_source("mock:ramp=100,0.5")->describe(), "mock:ramp=100,0.5");
    EXPECT_EQ(parse_power_source("counter:/a,/b,max=1000")->describe(), "counter:/a,/b,max=1000");
    EXPECT_EQ(parse_power_source("cmd:\"echo 1\"")->describe(), "cmd:echo 1");
}

TEST(Parse, RejectedSpecs)
{
    for (const char* bad : {"rapl", "mock:const=", "mock:const=abc", "mock:ramp=1", "counter:", "counter:/a,max=x",
                            "counter:/a,max=0", "cmd:"}) {
        EXPECT_THROW(parse_power_source(bad), InputError) << bad;
    }
}

TEST(Monitor, DegradesAndWarnsOnce)
{
    CounterFileSource src({"/nonexistent/energy_uj"}, CounterFileSource::kDefaultMax, scripted({1.0, 2.0}));
    Monitor m(src);
    testing::internal::CaptureStderr();
    const PowerSample a = m.sample();
    const PowerSample b = m.sample();
    const std::string err = testing::internal::GetCapturedStderr();
    EXPECT_TRUE(m.degraded());
    EXPECT_FALSE(a.energy);
    EXPECT_EQ(b.t, 2.0);
    EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1);
}

TEST(Integrate, ConstantPowerIsExact)
{
    const auto e = integrate_energy(power_series([](double) { return 100.0; }, 11, 1.0));
    ASSERT_EQ(e.size(), 11u);
    EXPECT_EQ(e.front(), 0.0);
    EXPECT_EQ(e.back(), 1000.0);
}

TEST(Integrate, LinearRampIsExact)
{
    const auto e = integrate_energy(power_series([](double t) { return t; }, 11, 1.0));
    EXPECT_EQ(e.back(), 50.0);
}

TEST(Integrate, ConstantPowerOverIrregularSteps)
{
    std::vector<PowerSample> s;
    double t = 0.0;
    for (int i = 0; i < 200; ++i) {
        s.push_back({t, 37.5, std::nullopt});
        t += 0.01 + 0.003 * (i % 7);
    }
    const double duration = s.back().t - s.front().t;
    EXPECT_NEAR(integrate_energy(s).back(), 37.5 * duration, 1e-12 * 37.5 * duration);
}

TEST(Integrate, AdditiveOverSharedEndpoint)
{
    // Dyadic times and powers keep every partial sum exact.
    const auto all = power_series([](double t) { return 64.0 + 8.0 * t * t; }, 17, 0.25);
    const std::vector<PowerSample> first(all.begin(), all.begin() + 9);
    const std::vector<PowerSample> second(all.begin() + 8, all.end());
    EXPECT_EQ(integrate_energy(first).back() + integrate_energy(second).back(), integrate_energy(all).back());
}

TEST(Integrate, EnergyReadingsUseDeltas)
{
    const std::vector<PowerSample> s{{0.0, 5.0, 10.0}, {1.0, 5.0, 12.5}, {2.0, 5.0, 20.0}};
    const auto e = integrate_energy(s);
    EXPECT_EQ(e, (std::vector<double>{0.0, 2.5, 10.0}));
}

TEST(Integrate, WrapCorrection)
{
    const double max = 4294.967295; // 2^32 - 1 uJ in J
    const std::vector<PowerSample> s{{0, {}, 4294.0}, {1, {}, 4294.9}, {2, {}, 0.5}, {3, {}, 1.5}};
    const auto e = integrate_energy(s, max);
    for (std::size_t i = 1; i < e.size(); ++i) EXPECT_GT(e[i], e[i - 1]);
    EXPECT_NEAR(e.back(), 0.9 + (0.5 - 4294.9 + max) + 1.0, 1e-9);
    EXPECT_THROW(integrate_energy(s), InputError);
}

TEST(Integrate, MissingReadingsCarryForward)
{
    const std::vector<PowerSample> s{{0.0, 10.0, {}}, {1.0, {}, {}}, {2.0, 10.0, {}}};
    const auto e = integrate_energy(s);
    EXPECT_EQ(e[1], 0.0);
    EXPECT_EQ(e[2], 20.0);
}

TEST(Integrate, Errors)
{
    EXPECT_THROW(integrate_energy({{0.0, 1.0, {}}}), InputError);
    EXPECT_THROW(integrate_energy({{1.0, 1.0, {}}, {0.5, 1.0, {}}}), InputError);
    EXPECT_THROW(integrate_energy({{0.0, {}, {}}, {1.0, {}, {}}}), InputError);
}

TEST(Summary, ConstantPowerRun)
{
    const auto s = summarize(power_series([](double) { return 200.0; }, 501, 0.5), 500);
    EXPECT_EQ(s.runtime, 250.0);
    EXPECT_EQ(*s.total_energy, 50000.0);
    EXPECT_EQ(*s.mean_power, 200.0);
    EXPECT_EQ(*s.energy_per_iteration, 100.0);
}

TEST(Summary, NullSourceHasRuntimeOnly)
{
    const std::vector<PowerSample> s{{1.0, {}, {}}, {4.0, {}, {}}};
    const auto r = summarize(s, 3);
    EXPECT_EQ(r.runtime, 3.0);
    EXPECT_FALSE(r.total_energy);
    EXPECT_FALSE(r.mean_power);
    EXPECT_FALSE(r.energy_per_iteration);
}

TEST(Summary, DvfsRampMeanBetweenFloorAndCeiling)
{
    // Rises from 150 W to 250 W over the first 20 s, then flat until 100 s.
    auto f = [](double t) { return t < 20.0 ? 150.0 + 5.0 * t : 250.0; };
    const auto r = summarize(power_series(f, 101, 1.0), 100);
    // 20 s at a mean of 200 W plus 80 s at 250 W.
    EXPECT_DOUBLE_EQ(*r.total_energy, 20.0 * 200.0 + 80.0 * 250.0);
    EXPECT_GT(*r.mean_power, 150.0);
    EXPECT_LT(*r.mean_power, 250.0);
}

TEST(Overhead, NullMonitorIsNegligible)
{
    // Cost of the 101 boundary samples relative to a 100-step run.
    solver::RunConfig c;
    c.n = 16;
    c.steps = 100;
    NullSource src;
    const double runtime = solver::run(c, src).summary.runtime;
    Monitor m(src);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i <= c.steps; ++i) (void)m.sample();
    const double cost = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(cost / runtime, 0.02);
}
