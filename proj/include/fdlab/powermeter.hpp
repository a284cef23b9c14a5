#pragma once

// Power and energy sampling at iteration boundaries.

#include "fdlab/error.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fdlab::power {

struct PowerSample {
    double t = 0.0;                // seconds, monotonic clock
    std::optional<double> power;   // W
    std::optional<double> energy;  // J, cumulative since the source was opened
};

using Clock = std::function<double()>;

// Seconds on std::chrono::steady_clock.
double steady_seconds();

class PowerSource {
public:
    explicit PowerSource(Clock clock = steady_seconds) : clock_(std::move(clock)) {}
    virtual ~PowerSource() = default;
    PowerSource(const PowerSource&) = delete;
    PowerSource& operator=(const PowerSource&) = delete;

    // Throws IoError when the backend cannot be read.
    virtual PowerSample read() = 0;
    virtual std::string describe() const = 0;

    double now() const { return clock_(); }

private:
    Clock clock_;
};

class NullSource final : public PowerSource {
public:
    using PowerSource::PowerSource;
    PowerSample read() override { return {now(), std::nullopt, std::nullopt}; }
    std::string describe() const override { return "none"; }
};

// Power as a function of time since the source was opened.
class MockSource final : public PowerSource {
public:
    MockSource(std::function<double(double)> power, std::string description, Clock clock = steady_seconds);
    PowerSample read() override;
    std::string describe() const override { return description_; }

    static std::unique_ptr<MockSource> constant(double watts, Clock clock = steady_seconds);
    // power(t) = a + b t
    static std::unique_ptr<MockSource> ramp(double a, double b, Clock clock = steady_seconds);

private:
    std::function<double(double)> power_;
    std::string description_;
    double origin_;
};

// Cumulative microjoule counters in text files, one per path, summed. Each
// counter is unwrapped on its own with (new - old + max) mod max.
class CounterFileSource final : public PowerSource {
public:
    static constexpr double kDefaultMax = 4294967295.0; // 2^32 - 1 uJ
    static constexpr double kScale = 1e-6;              // uJ -> J

    CounterFileSource(std::vector<std::string> paths, double max = kDefaultMax, Clock clock = steady_seconds);
    PowerSample read() override;
    std::string describe() const override;

private:
    std::vector<std::string> paths_;
    double max_;
    std::vector<std::optional<double>> last_;
    double total_uj_ = 0.0;
};

// Child process printing one Watt value per line. A reader thread feeds a
// bounded queue; read() waits at most `timeout` seconds for a fresh value and
// otherwise reuses the last one.
class CommandSource final : public PowerSource {
public:
    static constexpr double kDefaultTimeout = 0.05;
    static constexpr std::size_t kQueueCapacity = 64;

    explicit CommandSource(std::string command, double timeout = kDefaultTimeout, Clock clock = steady_seconds);
    ~CommandSource() override;
    PowerSample read() override;
    std::string describe() const override { return "cmd:" + command_; }

private:
    struct State;
    std::string command_;
    double timeout_;
    std::shared_ptr<State> state_;
};

// Parses none | mock:const=W | mock:ramp=a,b | counter:PATH[,PATH...][,max=V]
// | cmd:"ARGV". Throws InputError.
std::unique_ptr<PowerSource> parse_power_source(std::string_view spec, Clock clock = steady_seconds);

// Reads one sample; on failure warns once on stderr and returns a sample
// with the timestamp only.
class Monitor {
public:
    explicit Monitor(PowerSource& source) : source_(source) {}
    PowerSample sample();
    bool degraded() const { return degraded_; }

private:
    PowerSource& source_;
    bool degraded_ = false;
};

// Incremental cumulative energy. Uses energy readings when the first sample
// has one, otherwise the trapezoidal rule on power. Samples lacking the
// reading carry the previous total forward.
class EnergyAccumulator {
public:
    explicit EnergyAccumulator(std::optional<double> wrap = std::nullopt) : wrap_(wrap) {}
    // Returns the cumulative energy after this sample, absent when the
    // samples carry no readings at all.
    std::optional<double> add(const PowerSample& s);

private:
    std::optional<double> wrap_;
    bool started_ = false;
    double last_t_ = 0.0;
    bool has_reading_ = false;
    double last_reading_ = 0.0;
    double last_reading_t_ = 0.0;
    bool use_energy_ = false;
    double total_ = 0.0;
};

// Cumulative energy at each sample, first entry 0. `wrap` applies modular
// correction to decreasing energy readings. Throws InputError on fewer than
// two samples, decreasing timestamps, or samples without readings.
std::vector<double> integrate_energy(const std::vector<PowerSample>& samples,
                                     std::optional<double> wrap = std::nullopt);

struct Summary {
    double runtime = 0.0;
    std::optional<double> mean_power;
    std::optional<double> total_energy;
    std::optional<double> energy_per_iteration;
};

// runtime = last t - first t; mean power = energy / runtime.
Summary summarize(const std::vector<PowerSample>& samples, std::int64_t steps);

} // namespace fdlab::power
