#include "fdlab/powermeter.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <csignal>
#include <cstdio>
#include <deque>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

namespace fdlab::power {

namespace {

double parse_number(std::string_view text, std::string_view what)
{
    std::string s(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw InputError("invalid " + std::string(what) + ": '" + s + "'");
    }
    if (used != s.size() || !std::isfinite(v)) throw InputError("invalid " + std::string(what) + ": '" + s + "'");
    return v;
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string format_number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

} // namespace

double steady_seconds()
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------------------
// MockSource
// ---------------------------------------------------------------------------
MockSource::MockSource(std::function<double(double)> power, std::string description, Clock clock)
    : PowerSource(std::move(clock)), power_(std::move(power)), description_(std::move(description)), origin_(now())
{
}

PowerSample MockSource::read()
{
    const double t = now();
    return {t, power_(t - origin_), std::nullopt};
}

std::unique_ptr<MockSource> MockSource::constant(double watts, Clock clock)
{
    return std::make_unique<MockSource>([watts](double) { return watts; }, "mock:const=" + format_number(watts),
                                        std::move(clock));
}

std::unique_ptr<MockSource> MockSource::ramp(double a, double b, Clock clock)
{
    return std::make_unique<MockSource>([a, b](double t) { return a + b * t; },
                                        "mock:ramp=" + format_number(a) + "," + format_number(b), std::move(clock));
}

// ---------------------------------------------------------------------------
// CounterFileSource
// ---------------------------------------------------------------------------
CounterFileSource::CounterFileSource(std::vector<std::string> paths, double max, Clock clock)
    : PowerSource(std::move(clock)), paths_(std::move(paths)), max_(max), last_(paths_.size())
{
    if (paths_.empty()) throw InputError("counter source needs at least one path");
    if (!(max_ > 0.0)) throw InputError("counter wrap maximum must be positive");
}

PowerSample CounterFileSource::read()
{
    const double t = now();
    std::vector<double> raw(paths_.size());
    for (std::size_t p = 0; p < paths_.size(); ++p) {
        std::ifstream in(paths_[p]);
        long double v = -1;
        if (!(in >> v) || v < 0) throw IoError("cannot read energy counter " + paths_[p]);
        raw[p] = static_cast<double>(v);
    }
    for (std::size_t p = 0; p < paths_.size(); ++p) {
        if (last_[p]) total_uj_ += std::fmod(raw[p] - *last_[p] + max_, max_);
        last_[p] = raw[p];
    }
    return {t, std::nullopt, total_uj_ * kScale};
}

std::string CounterFileSource::describe() const
{
    std::string s = "counter:";
    for (const auto& p : paths_) s += p + ",";
    return s + "max=" + format_number(max_);
}

// ---------------------------------------------------------------------------
// CommandSource
// ---------------------------------------------------------------------------
struct CommandSource::State {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<double> queue;
    bool eof = false;
    std::optional<double> last;
    pid_t pid = -1;
    int fd = -1;
    std::thread reader;
};

CommandSource::CommandSource(std::string command, double timeout, Clock clock)
    : PowerSource(std::move(clock)), command_(std::move(command)), timeout_(timeout), state_(std::make_shared<State>())
{
    if (command_.empty()) throw InputError("sampler command is empty");
    int fds[2];
    if (pipe(fds) != 0) throw IoError("cannot create pipe for sampler command");
    const pid_t pid = fork();
    if (pid < 0) {
        close(fds[0]);
        close(fds[1]);
        throw IoError("cannot start sampler command");
    }
    if (pid == 0) {
        dup2(fds[1], STDOUT_FILENO);
        close(fds[0]);
        close(fds[1]);
        execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(fds[1]);
    state_->pid = pid;
    state_->fd = fds[0];

    state_->reader = std::thread([st = state_] {
        FILE* f = fdopen(st->fd, "r");
        if (f != nullptr) {
            char line[256];
            while (std::fgets(line, sizeof line, f) != nullptr) {
                char* end = nullptr;
                const double v = std::strtod(line, &end);
                if (end == line || !std::isfinite(v)) continue;
                std::lock_guard lock(st->mu);
                if (st->queue.size() == kQueueCapacity) st->queue.pop_front();
                st->queue.push_back(v);
                st->cv.notify_all();
            }
            std::fclose(f);
        }
        std::lock_guard lock(st->mu);
        st->eof = true;
        st->cv.notify_all();
    });
}

CommandSource::~CommandSource()
{
    if (state_->pid > 0) kill(state_->pid, SIGTERM);
    if (state_->reader.joinable()) state_->reader.join();
    if (state_->pid > 0) waitpid(state_->pid, nullptr, 0);
}

PowerSample CommandSource::read()
{
    std::unique_lock lock(state_->mu);
    state_->cv.wait_for(lock, std::chrono::duration<double>(timeout_),
                        [&] { return !state_->queue.empty() || state_->eof; });
    if (!state_->queue.empty()) {
        state_->last = state_->queue.back();
        state_->queue.clear();
    } else if (state_->eof && !state_->last) {
        throw IoError("sampler command ended without output: " + command_);
    }
    return {now(), state_->last, std::nullopt};
}

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------
std::unique_ptr<PowerSource> parse_power_source(std::string_view spec, Clock clock)
{
    if (spec == "none" || spec.empty()) return std::make_unique<NullSource>(std::move(clock));
    if (spec.starts_with("mock:const=")) {
        return MockSource::constant(parse_number(spec.substr(11), "mock power"), std::move(clock));
    }
    if (spec.starts_with("mock:ramp=")) {
        const auto parts = split(spec.substr(10), ',');
        if (parts.size() != 2) throw InputError("mock:ramp expects two values a,b");
        return MockSource::ramp(parse_number(parts[0], "ramp offset"), parse_number(parts[1], "ramp slope"),
                                std::move(clock));
    }
    if (spec.starts_with("counter:")) {
        std::vector<std::string> paths;
        double max = CounterFileSource::kDefaultMax;
        for (const auto& part : split(spec.substr(8), ',')) {
            if (part.starts_with("max=")) {
                max = parse_number(std::string_view(part).substr(4), "counter maximum");
            } else if (!part.empty()) {
                paths.push_back(part);
            }
        }
        return std::make_unique<CounterFileSource>(std::move(paths), max, std::move(clock));
    }
    if (spec.starts_with("cmd:")) {
        std::string_view cmd = spec.substr(4);
        if (cmd.size() >= 2 && cmd.front() == '"' && cmd.back() == '"') cmd = cmd.substr(1, cmd.size() - 2);
        return std::make_unique<CommandSource>(std::string(cmd), CommandSource::kDefaultTimeout, std::move(clock));
    }
    throw InputError("unknown power source '" + std::string(spec) +
                     "' (expected none, mock:const=W, mock:ramp=a,b, counter:PATH[,...][,max=V] or cmd:\"ARGV\")");
}

// ---------------------------------------------------------------------------
// monitoring and integration
// ---------------------------------------------------------------------------
PowerSample Monitor::sample()
{
    try {
        return source_.read();
    } catch (const std::exception& e) {
        if (!degraded_) {
            std::cerr << "warning: power source " << source_.describe() << " failed (" << e.what()
                      << "); continuing without power readings\n";
            degraded_ = true;
        }
        return {source_.now(), std::nullopt, std::nullopt};
    }
}

std::optional<double> EnergyAccumulator::add(const PowerSample& s)
{
    if (started_ && s.t < last_t_) throw InputError("sample timestamps are not monotonic");
    const bool first = !started_;
    started_ = true;
    last_t_ = s.t;
    if (first) use_energy_ = s.energy.has_value();
    const std::optional<double> reading = use_energy_ ? s.energy : s.power;
    if (!reading) {
        if (!has_reading_) return std::nullopt;
        return total_;
    }
    if (has_reading_) {
        if (use_energy_) {
            double delta = *reading - last_reading_;
            if (delta < 0.0) {
                if (!wrap_) throw InputError("cumulative energy decreased without a wrap maximum");
                delta = std::fmod(delta + *wrap_, *wrap_);
            }
            total_ += delta;
        } else {
            total_ += 0.5 * (*reading + last_reading_) * (s.t - last_reading_t_);
        }
    }
    has_reading_ = true;
    last_reading_ = *reading;
    last_reading_t_ = s.t;
    return total_;
}

std::vector<double> integrate_energy(const std::vector<PowerSample>& samples, std::optional<double> wrap)
{
    if (samples.size() < 2) throw InputError("energy integration needs at least two samples");
    EnergyAccumulator acc(wrap);
    std::vector<double> out;
    out.reserve(samples.size());
    for (const PowerSample& s : samples) {
        const auto e = acc.add(s);
        if (!e) throw InputError("samples carry neither power nor energy readings");
        out.push_back(*e);
    }
    return out;
}

Summary summarize(const std::vector<PowerSample>& samples, std::int64_t steps)
{
    Summary s;
    if (samples.empty()) return s;
    s.runtime = samples.back().t - samples.front().t;
    if (samples.size() < 2) return s;
    EnergyAccumulator acc;
    std::optional<double> total;
    try {
        for (const PowerSample& p : samples) total = acc.add(p);
    } catch (const InputError&) {
        total.reset();
    }
    if (!total) return s;
    s.total_energy = total;
    if (s.runtime > 0.0) s.mean_power = *total / s.runtime;
    if (steps > 0) s.energy_per_iteration = *total / static_cast<double>(steps);
    return s;
}

} // namespace fdlab::power
