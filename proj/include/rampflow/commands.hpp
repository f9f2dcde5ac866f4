#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rampflow/calibration.hpp"
#include "rampflow/digest.hpp"
#include "rampflow/error.hpp"
#include "rampflow/report.hpp"
#include "rampflow/scenario.hpp"
#include "rampflow/sim.hpp"
#include "rampflow/trajectory.hpp"

#ifndef RAMPFLOW_VERSION
#define RAMPFLOW_VERSION "0.1.0"
#endif

namespace rampflow {

enum class LogLevel { quiet = 0, warn = 1, info = 2, debug = 3 };

/// Verbosity from RAMPFLOW_LOG (quiet|warn|info|debug); warn by default.
[[nodiscard]] inline LogLevel log_level_from_env() {
    const char* v = std::getenv("RAMPFLOW_LOG");
    if (!v) return LogLevel::warn;
    const std::string s(v);
    if (s == "quiet" || s == "0") return LogLevel::quiet;
    if (s == "info" || s == "2") return LogLevel::info;
    if (s == "debug" || s == "3") return LogLevel::debug;
    return LogLevel::warn;
}

class Logger {
public:
    explicit Logger(std::ostream& sink, LogLevel level = log_level_from_env()) : sink_(sink), level_(level) {}
    void error(const std::string& m) const { sink_ << "error: " << m << '\n'; }
    void warn(const std::string& m) const { emit(LogLevel::warn, "warning: ", m); }
    void info(const std::string& m) const { emit(LogLevel::info, "", m); }
    void debug(const std::string& m) const { emit(LogLevel::debug, "debug: ", m); }

private:
    void emit(LogLevel l, const char* prefix, const std::string& m) const {
        if (static_cast<int>(level_) >= static_cast<int>(l)) sink_ << prefix << m << '\n';
    }
    std::ostream& sink_;
    LogLevel level_;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNumerical = 2;

[[nodiscard]] inline int exit_code_for(const Error& e) noexcept {
    return e.category() == ErrorCategory::input ? kExitInput : kExitNumerical;
}

/// key=value provenance written next to every output set.
struct RunManifest {
    std::string command;
    std::string scenario;
    std::string input;
    std::string output;
    std::optional<std::uint64_t> seed;
    std::string args;
    double wall_clock_s{0.0};
    std::vector<std::string> files;  // relative to the output directory

    void write(const std::filesystem::path& dir) const {
        std::ofstream out(dir / "manifest.txt", std::ios::binary);
        if (!out) throw ValidationError("cannot write manifest in '" + dir.string() + "'");
        out << "command=" << command << '\n';
        out << "scenario=" << scenario << '\n';
        out << "input=" << input << '\n';
        out << "output=" << output << '\n';
        out << "seed=" << (seed ? std::to_string(*seed) : std::string()) << '\n';
        out << "version=" << RAMPFLOW_VERSION << '\n';
        out << "args=" << args << '\n';
        out << "wall_clock_s=" << csv::format_fixed(wall_clock_s, 3) << '\n';
        for (const auto& f : files) out << "sha256." << f << '=' << sha256_file(dir / f) << '\n';
    }
};

namespace detail {

class Stopwatch {
public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_{std::chrono::steady_clock::now()};
};

/// Runs a command body and maps library errors onto exit codes.
template <typename Body>
int guarded(const Logger& log, Body&& body) {
    try {
        return body();
    } catch (const Error& e) {
        log.error(e.what());
        return exit_code_for(e);
    } catch (const std::filesystem::filesystem_error& e) {
        log.error(e.what());
        return kExitInput;
    }
}

}  // namespace detail

struct CalibrateOptions {
    std::string input;     // trajectory CSV
    std::string scenario{"stock-ramp"};  // geometry and default beta
    std::string out_dir;
    double window{10.0};   // s
    std::string args;
};

/// Writes calibration.csv and manifest.txt into out_dir.
inline int cmd_calibrate(const CalibrateOptions& o, const Logger& log) {
    return detail::guarded(log, [&] {
        detail::Stopwatch clock;
        const auto sc = load_scenario(o.scenario);
        const auto ds = load_trajectories(o.input, sc.geometry);
        log.info("loaded " + std::to_string(ds.sample_count()) + " samples of " + std::to_string(ds.vehicle_count()) +
                 " vehicles");
        const auto cal = calibrate(ds, sc.geometry, o.window, sc.beta);
        if (!cal.beta_estimated) log.warn("beta not estimated (" + cal.beta_note + "); default written and flagged");
        std::filesystem::create_directories(o.out_dir);
        {
            std::ofstream out(std::filesystem::path(o.out_dir) / "calibration.csv", std::ios::binary);
            if (!out) throw ValidationError("cannot write calibration.csv in '" + o.out_dir + "'");
            write_calibration(out, cal);
        }
        RunManifest m{"calibrate", o.scenario, o.input, o.out_dir, std::nullopt, o.args, clock.seconds(),
                      {"calibration.csv"}};
        m.write(o.out_dir);
        return kExitOk;
    });
}

struct SimulateOptions {
    std::string scenario{"stock-ramp"};
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<CarFollowingModel> model;
    std::string calibration;  // optional calibration.csv overriding diagrams and beta
    std::string args;
};

/// Writes trajectories.csv, events.csv and manifest.txt into out_dir.
inline int cmd_simulate(const SimulateOptions& o, const Logger& log) {
    return detail::guarded(log, [&] {
        detail::Stopwatch clock;
        auto sc = load_scenario(o.scenario);
        if (o.seed) sc.seed = *o.seed;
        if (o.model) sc.inside_model = *o.model;
        if (!o.calibration.empty()) {
            const auto cal = load_calibration(o.calibration);
            sc.fds = cal.fds;
            sc.beta = cal.beta;
        }
        sc.validate();
        log.info("simulating " + csv::format(sc.duration) + " s with the " + std::string(to_string(sc.inside_model)) +
                 " model, seed " + std::to_string(sc.seed));
        const auto result = run(sc);
        log.info("injected " + std::to_string(result.injected) + ", exited " + std::to_string(result.exited));

        const std::filesystem::path dir(o.out_dir);
        std::filesystem::create_directories(dir);
        {
            std::ofstream out(dir / "trajectories.csv", std::ios::binary);
            if (!out) throw ValidationError("cannot write trajectories.csv in '" + o.out_dir + "'");
            write_trajectories(out, result.trajectories);
        }
        {
            std::ofstream out(dir / "events.csv", std::ios::binary);
            if (!out) throw ValidationError("cannot write events.csv in '" + o.out_dir + "'");
            write_events(out, result.events);
        }
        RunManifest m{"simulate", o.scenario, o.calibration, o.out_dir, sc.seed, o.args, clock.seconds(),
                      {"trajectories.csv", "events.csv"}};
        m.write(dir);
        return kExitOk;
    });
}

struct EvaluateOptions {
    std::string input;  // trajectory CSV
    std::string scenario{"stock-ramp"};
    std::string events;  // optional event CSV for exact lane-change positions
    std::string out_dir;
    bool svg{false};
    std::string args;
};

inline int cmd_evaluate(const EvaluateOptions& o, const Logger& log) {
    return detail::guarded(log, [&] {
        detail::Stopwatch clock;
        const auto sc = load_scenario(o.scenario);
        const auto ds = load_trajectories(o.input, sc.geometry);
        std::optional<std::vector<SimEvent>> events;
        if (!o.events.empty()) {
            std::ifstream in(o.events);
            if (!in) throw ValidationError("cannot open event file '" + o.events + "'");
            events = load_events(in);
        }
        const auto e = events ? evaluate(ds, sc.geometry, std::span<const SimEvent>(*events))
                              : evaluate(ds, sc.geometry);
        log.info(std::to_string(conflict_section_count(e.mttc_combined)) + " conflict sections, " +
                 std::to_string(e.lane_change_positions.size()) + " lane changes");
        const auto files = write_evaluation(e, sc.geometry, o.out_dir, o.svg);
        RunManifest m{"evaluate", o.scenario, o.input, o.out_dir, std::nullopt, o.args, clock.seconds(), files};
        m.write(o.out_dir);
        return kExitOk;
    });
}

struct CompareOptions {
    std::string run_a;  // evaluate output directories
    std::string run_b;
    std::string out_dir;
    std::string args;
};

inline int cmd_compare(const CompareOptions& o, const Logger& log) {
    return detail::guarded(log, [&] {
        detail::Stopwatch clock;
        const auto a = load_evaluation_summary(o.run_a);
        const auto b = load_evaluation_summary(o.run_b);
        std::ostringstream table;
        write_comparison(table, a, b);
        const std::filesystem::path dir(o.out_dir);
        std::filesystem::create_directories(dir);
        {
            std::ofstream out(dir / "comparison.csv", std::ios::binary);
            if (!out) throw ValidationError("cannot write comparison.csv in '" + o.out_dir + "'");
            out << table.str();
        }
        RunManifest m{"compare", "", o.run_a + ";" + o.run_b, o.out_dir, std::nullopt, o.args, clock.seconds(),
                      {"comparison.csv"}};
        m.write(dir);
        return kExitOk;
    });
}

}  // namespace rampflow
