#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "rampflow/config.hpp"
#include "rampflow/csv.hpp"
#include "rampflow/error.hpp"
#include "rampflow/geometry.hpp"
#include "rampflow/macro.hpp"
#include "rampflow/micro.hpp"

namespace rampflow {

enum class CarFollowingModel { flow_based, idm };

[[nodiscard]] constexpr std::string_view to_string(CarFollowingModel m) noexcept {
    return m == CarFollowingModel::flow_based ? "flow_based" : "idm";
}

enum class ArrivalProcess { poisson, uniform };

/// One explicitly scheduled vehicle.
struct DemandEntry {
    double t{0.0};
    int lane{1};
    VehicleClass vehicle_class{VehicleClass::car};
    double speed{25.0};
};

/// Stochastic (or evenly spaced) arrivals on one lane.
struct LaneDemand {
    double rate{0.0};    // veh/s
    double speed{25.0};  // entry speed, m/s
};

struct Scenario {
    RampGeometry geometry{};
    std::array<FundamentalDiagram, 3> fds{FundamentalDiagram{25.0, 0.15}, FundamentalDiagram{33.0, 0.45},
                                          FundamentalDiagram{33.0, 0.45}};
    double beta{0.3};

    // Model inside [x_start, x_exit]; outside the stretch vehicles always follow the IDM.
    CarFollowingModel inside_model{CarFollowingModel::flow_based};
    FvdmParams fvdm{};
    IdmParams idm{};
    GapAcceptanceParams gap{};
    double lane_change_duration{2.0};  // s

    std::array<VehicleDimensions, 4> vehicles{default_dimensions(VehicleClass::car),
                                              default_dimensions(VehicleClass::van),
                                              default_dimensions(VehicleClass::truck),
                                              default_dimensions(VehicleClass::bus)};

    std::vector<DemandEntry> schedule;  // sorted by t
    std::vector<LaneDemand> lane_demand;  // one per lane, may be empty
    ArrivalProcess arrivals{ArrivalProcess::poisson};
    std::array<double, 4> class_mix{1.0, 0.0, 0.0, 0.0};

    double dt{0.1};
    double dt_log{0.2};
    double duration{900.0};
    std::uint64_t seed{1};
    double upstream_length{150.0};   // IDM lead-in before x_start
    double downstream_length{100.0}; // IDM lead-out after x_exit
    double min_entry_gap{2.0};       // net gap required to inject, m
    double v_clamp{50.0};            // global speed ceiling, m/s

    [[nodiscard]] const FundamentalDiagram& fd(SegmentId s) const noexcept {
        return fds[static_cast<std::size_t>(segment_number(s) - 1)];
    }
    [[nodiscard]] const VehicleDimensions& dims(VehicleClass c) const noexcept {
        return vehicles[static_cast<std::size_t>(c)];
    }
    [[nodiscard]] MergePriority priority() const { return MergePriority(beta); }
    [[nodiscard]] double road_start() const noexcept { return geometry.x_start - upstream_length; }
    [[nodiscard]] double road_end() const noexcept { return geometry.x_exit + downstream_length; }
    [[nodiscard]] std::int64_t steps_per_log() const noexcept { return std::llround(dt_log / dt); }
    [[nodiscard]] std::int64_t total_steps() const noexcept { return std::llround(duration / dt); }

    /// Throws ValidationError listing every offending key.
    void validate() const {
        std::vector<std::string> errors;
        auto check = [&](bool ok, const std::string& key, const std::string& msg) {
            if (!ok) errors.push_back(key + ": " + msg);
        };
        try {
            geometry.validate();
        } catch (const Error& e) {
            errors.push_back(std::string("geometry: ") + e.what());
        }
        for (int s = 1; s <= 3; ++s) {
            const auto& f = fds[static_cast<std::size_t>(s - 1)];
            const auto key = "fd.segment" + std::to_string(s);
            check(f.v_max > 0.0, key + ".v_max", "must be positive");
            check(f.rho_max > 0.0, key + ".rho_max", "must be positive");
        }
        check(beta > 0.0 && beta < 1.0, "junction.beta", "must lie in (0, 1)");
        auto param_check = [&](auto&& fn, const std::string& key) {
            try {
                fn();
            } catch (const Error& e) {
                errors.push_back(key + ": " + e.what());
            }
        };
        param_check([&] { fvdm.validate(); }, "model.flow_based");
        param_check([&] { idm.validate(); }, "model.idm");
        param_check([&] { gap.validate(); }, "model.lane_change");
        check(lane_change_duration > 0.0, "model.lane_change.duration", "must be positive");
        for (auto c : kVehicleClasses) {
            const auto& d = dims(c);
            const auto key = "vehicle." + std::string(to_string(c));
            check(d.length > 0.0, key + ".length", "must be positive");
            check(d.width > 0.0, key + ".width", "must be positive");
            check(d.max_speed > 0.0, key + ".max_speed", "must be positive");
        }

        check(dt > 0.0, "sim.dt", "must be positive");
        check(duration > 0.0, "sim.duration", "must be positive");
        check(v_clamp > 0.0, "sim.v_clamp", "must be positive");
        check(upstream_length >= 0.0, "sim.upstream_length", "must be non-negative");
        check(downstream_length >= 0.0, "sim.downstream_length", "must be non-negative");
        check(min_entry_gap >= 0.0, "sim.min_entry_gap", "must be non-negative");
        if (dt > 0.0) {
            const double m = dt_log / dt;
            check(dt_log > 0.0 && m >= 1.0 - 1e-9 && std::abs(m - std::round(m)) < 1e-9 * std::max(1.0, m),
                  "sim.dt_log", "must be a positive integer multiple of sim.dt");
            double shortest = std::min({geometry.x_junction - geometry.x_start,
                                        geometry.x_ramp_end - geometry.x_junction,
                                        geometry.x_exit - geometry.x_junction});
            double fastest = std::max({fds[0].v_max, fds[1].v_max, fds[2].v_max});
            check(fastest * dt < shortest, "sim.dt", "v_max * dt must be shorter than the shortest section");
            const double ratio = lane_change_duration / dt;
            check(std::abs(ratio - std::round(ratio)) < 1e-9 * std::max(1.0, ratio),
                  "model.lane_change.duration", "must be an integer multiple of sim.dt");
        }

        for (std::size_t lane = 0; lane < lane_demand.size(); ++lane) {
            const auto key = "demand.lane" + std::to_string(lane);
            check(static_cast<int>(lane) < geometry.lane_count(), key, "lane does not exist");
            check(lane_demand[lane].rate >= 0.0, key + ".rate", "must be non-negative");
            check(lane_demand[lane].speed >= 0.0, key + ".speed", "must be non-negative");
        }
        double mix = 0.0;
        for (double w : class_mix) {
            check(w >= 0.0, "demand.class_mix", "weights must be non-negative");
            mix += w;
        }
        check(mix > 0.0, "demand.class_mix", "weights must not all be zero");
        for (const auto& e : schedule) {
            check(e.lane >= 0 && e.lane < geometry.lane_count(), "demand.file", "scheduled lane out of range");
            check(e.t >= 0.0 && e.speed >= 0.0, "demand.file", "scheduled time and speed must be non-negative");
        }

        if (!errors.empty()) {
            std::string msg = "invalid scenario:";
            for (const auto& e : errors) msg += "\n  " + e;
            throw ValidationError(msg);
        }
    }
};

/// Reads `t,lane,class,speed` rows.
inline std::vector<DemandEntry> load_demand_schedule(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("demand.file: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || csv::split(line) != std::vector<std::string_view>{"t", "lane", "class", "speed"}) {
        throw SchemaError("demand.file: header must be 't,lane,class,speed'");
    }
    std::vector<DemandEntry> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        auto f = csv::split(line);
        auto t = f.size() == 4 ? csv::parse_double(f[0]) : std::nullopt;
        auto lane = f.size() == 4 ? csv::parse_int(f[1]) : std::nullopt;
        auto cls = f.size() == 4 ? parse_vehicle_class(f[2]) : std::nullopt;
        auto speed = f.size() == 4 ? csv::parse_double(f[3]) : std::nullopt;
        if (!t || !lane || !cls || !speed) {
            throw SchemaError("demand.file: malformed row at line " + std::to_string(line_no));
        }
        out.push_back({*t, static_cast<int>(*lane), *cls, *speed});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    return out;
}

/// Builds a scenario from configuration text. Relative demand files resolve
/// against base_dir. Unknown keys are rejected.
inline Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir = {}) {
    const auto cfg = KeyValueConfig::parse(text);
    Scenario sc;
    std::vector<std::string> errors;

    auto& g = sc.geometry;
    cfg.read("geometry.x_start", g.x_start, errors);
    cfg.read("geometry.x_junction", g.x_junction, errors);
    cfg.read("geometry.x_ramp_end", g.x_ramp_end, errors);
    cfg.read("geometry.x_exit", g.x_exit, errors);
    cfg.read_int("geometry.n_through_lanes", g.n_through_lanes, errors);
    if (cfg.has("geometry.n_through_lanes") && !cfg.has("geometry.lane_widths")) {
        g.lane_widths.assign(static_cast<std::size_t>(g.n_through_lanes + 1), 3.0);
    }
    cfg.read_list("geometry.lane_widths", g.lane_widths, errors);

    for (int s = 1; s <= 3; ++s) {
        const auto key = "fd.segment" + std::to_string(s);
        auto& f = sc.fds[static_cast<std::size_t>(s - 1)];
        cfg.read(key + ".v_max", f.v_max, errors);
        cfg.read(key + ".rho_max", f.rho_max, errors);
    }
    cfg.read("junction.beta", sc.beta, errors);

    if (const auto* m = cfg.raw("model.inside")) {
        if (*m == "flow_based") {
            sc.inside_model = CarFollowingModel::flow_based;
        } else if (*m == "idm") {
            sc.inside_model = CarFollowingModel::idm;
        } else {
            errors.push_back("model.inside: expected 'flow_based' or 'idm'");
        }
    }
    cfg.read("model.flow_based.lambda", sc.fvdm.lambda, errors);
    cfg.read("model.flow_based.tau_default", sc.fvdm.tau_default, errors);
    cfg.read("model.flow_based.tau_min", sc.fvdm.tau_min, errors);
    cfg.read("model.flow_based.tau_max", sc.fvdm.tau_max, errors);
    cfg.read("model.flow_based.a_min", sc.fvdm.a_min, errors);
    cfg.read("model.flow_based.a_max", sc.fvdm.a_max, errors);
    cfg.read("model.idm.v0", sc.idm.v0, errors);
    cfg.read("model.idm.T_hw", sc.idm.T_hw, errors);
    cfg.read("model.idm.s0", sc.idm.s0, errors);
    cfg.read("model.idm.a_max", sc.idm.a_max, errors);
    cfg.read("model.idm.b_comf", sc.idm.b_comf, errors);
    cfg.read("model.idm.delta", sc.idm.delta, errors);
    cfg.read("model.idm.b_emergency", sc.idm.b_emergency, errors);
    cfg.read("model.lane_change.g_lead_min", sc.gap.g_lead_min, errors);
    cfg.read("model.lane_change.g_lag_min", sc.gap.g_lag_min, errors);
    cfg.read("model.lane_change.k_lead", sc.gap.k_lead, errors);
    cfg.read("model.lane_change.k_lag", sc.gap.k_lag, errors);
    cfg.read("model.lane_change.d_force", sc.gap.d_force, errors);
    cfg.read("model.lane_change.floor_lead", sc.gap.floor_lead, errors);
    cfg.read("model.lane_change.floor_lag", sc.gap.floor_lag, errors);
    cfg.read("model.lane_change.duration", sc.lane_change_duration, errors);

    for (auto c : kVehicleClasses) {
        const auto key = "vehicle." + std::string(to_string(c));
        auto& d = sc.vehicles[static_cast<std::size_t>(c)];
        cfg.read(key + ".length", d.length, errors);
        cfg.read(key + ".width", d.width, errors);
        cfg.read(key + ".max_speed", d.max_speed, errors);
    }

    for (int lane = 0; lane < 16; ++lane) {
        const auto key = "demand.lane" + std::to_string(lane);
        if (!cfg.has(key + ".rate") && !cfg.has(key + ".speed")) continue;
        if (sc.lane_demand.size() <= static_cast<std::size_t>(lane)) {
            sc.lane_demand.resize(static_cast<std::size_t>(lane) + 1);
        }
        auto& d = sc.lane_demand[static_cast<std::size_t>(lane)];
        cfg.read(key + ".rate", d.rate, errors);
        cfg.read(key + ".speed", d.speed, errors);
    }
    if (const auto* p = cfg.raw("demand.process")) {
        if (*p == "poisson") {
            sc.arrivals = ArrivalProcess::poisson;
        } else if (*p == "uniform") {
            sc.arrivals = ArrivalProcess::uniform;
        } else {
            errors.push_back("demand.process: expected 'poisson' or 'uniform'");
        }
    }
    if (const auto* mix = cfg.raw("demand.class_mix")) {
        sc.class_mix = {0.0, 0.0, 0.0, 0.0};
        for (auto item : csv::split(*mix)) {
            auto colon = item.find(':');
            auto cls = colon == std::string_view::npos ? std::nullopt : parse_vehicle_class(csv::trim(item.substr(0, colon)));
            auto w = colon == std::string_view::npos ? std::nullopt : csv::parse_double(item.substr(colon + 1));
            if (!cls || !w) {
                errors.push_back("demand.class_mix: expected 'class:weight' items");
                break;
            }
            sc.class_mix[static_cast<std::size_t>(*cls)] = *w;
        }
    }
    if (const auto* file = cfg.raw("demand.file")) {
        std::filesystem::path p(*file);
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        try {
            sc.schedule = load_demand_schedule(p.string());
        } catch (const Error& e) {
            errors.push_back(e.what());
        }
    }

    cfg.read("sim.dt", sc.dt, errors);
    cfg.read("sim.dt_log", sc.dt_log, errors);
    cfg.read("sim.duration", sc.duration, errors);
    cfg.read_int("sim.seed", sc.seed, errors);
    cfg.read("sim.upstream_length", sc.upstream_length, errors);
    cfg.read("sim.downstream_length", sc.downstream_length, errors);
    cfg.read("sim.min_entry_gap", sc.min_entry_gap, errors);
    cfg.read("sim.v_clamp", sc.v_clamp, errors);

    for (const auto& key : cfg.unused_keys()) errors.push_back(key + ": unknown key");
    if (!errors.empty()) {
        std::string msg = "invalid scenario:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ValidationError(msg);
    }
    sc.validate();
    return sc;
}

/// Bundled on-ramp layout: a 300 m stretch with three through lanes and an
/// entry lane, 44 veh/min in total.
inline constexpr std::string_view kStockRampScenario = R"(# stock-ramp: motorway on-ramp, 3 through lanes + entry lane
geometry.x_start = 0
geometry.x_junction = 100
geometry.x_ramp_end = 250
geometry.x_exit = 300
geometry.n_through_lanes = 3
geometry.lane_widths = 3.0, 3.0, 3.0, 2.6

fd.segment1.v_max = 25
fd.segment1.rho_max = 0.15
fd.segment2.v_max = 33
fd.segment2.rho_max = 0.45
fd.segment3.v_max = 33
fd.segment3.rho_max = 0.45
junction.beta = 0.3

model.inside = flow_based

# 44 veh/min across all lanes
demand.process = poisson
demand.lane0.rate = 0.15
demand.lane0.speed = 22
demand.lane1.rate = 0.25
demand.lane1.speed = 27
demand.lane2.rate = 0.2
demand.lane2.speed = 30
demand.lane3.rate = 0.133333
demand.lane3.speed = 32
demand.class_mix = car:0.8, van:0.1, truck:0.08, bus:0.02

sim.dt = 0.1
sim.dt_log = 0.2
sim.duration = 900
sim.seed = 42
)";

inline Scenario load_scenario(const std::string& path_or_name) {
    if (path_or_name == "stock-ramp") return parse_scenario(kStockRampScenario);
    std::ifstream in(path_or_name);
    if (!in) throw ValidationError("cannot open scenario file '" + path_or_name + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), std::filesystem::path(path_or_name).parent_path());
}

}  // namespace rampflow
