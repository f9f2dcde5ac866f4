#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rampflow/csv.hpp"
#include "rampflow/geometry.hpp"
#include "rampflow/macro.hpp"
#include "rampflow/micro.hpp"
#include "rampflow/scenario.hpp"
#include "rampflow/trajectory.hpp"

namespace rampflow {

// ─── Macro coupling helpers ──────────────────────────────────────────────────

/// Vehicles whose center lies in the segment, all lanes pooled, per metre.
/// Intervals are half-open, so x_junction belongs to the downstream segment.
[[nodiscard]] inline double segment_density(std::span<const MicroVehicle> population, const RampGeometry& geometry,
                                            SegmentId segment) noexcept {
    int count = 0;
    for (const auto& v : population) {
        auto [lo, hi] = geometry.segment_bounds(segment);
        if (v.x < lo || v.x >= hi) continue;
        const bool on_ramp = v.lane == 0;
        if ((segment == SegmentId::ramp) == on_ramp) ++count;
    }
    return count / geometry.segment_length(segment);
}

/// Per-lane flow seen by a vehicle. In the combined context (entry lane or
/// adjacent through lane before the ramp end) the two lanes' flows add up.
[[nodiscard]] inline SegmentFlow per_lane_flow(const CouplingFluxes& f, const RampGeometry& geometry, int lane,
                                               double x, bool combined) noexcept {
    const double n = geometry.n_through_lanes;
    if (combined && (lane == 0 || lane == 1) && x < geometry.x_ramp_end) return {f.f1 + f.f2 / n};
    if (lane == 0) return {f.f1};
    return {(x < geometry.x_junction ? f.f2 : f.f3) / n};
}

/// Lateral position during a lane change: linear between lane centers.
[[nodiscard]] inline double lateral_transition(const RampGeometry& geometry, int from_lane, int to_lane,
                                               double t_since_change, double duration) {
    const double s = std::clamp(t_since_change / duration, 0.0, 1.0);
    const double y0 = geometry.lane_center(from_lane);
    const double y1 = geometry.lane_center(to_lane);
    return y0 + (y1 - y0) * s;
}

// ─── Simulation state ────────────────────────────────────────────────────────

enum class ModelKind { none, flow_based, idm };

struct LaneChange {
    int from{0};
    int to{1};
    std::int64_t steps{0};  // steps since the change was committed
    bool switched{false};   // lane index already moved to the target
};

struct SimVehicle {
    MicroVehicle state;
    std::optional<LaneChange> change;
    ModelKind last_model{ModelKind::none};
    double x_at_eval{0.0};  // position when last_model was chosen
};

enum class EventType { injection, exit, lane_change, collision };

[[nodiscard]] constexpr std::string_view to_string(EventType e) noexcept {
    switch (e) {
        case EventType::injection: return "inject";
        case EventType::exit: return "exit";
        case EventType::lane_change: return "lane_change";
        case EventType::collision: return "collision";
    }
    return "inject";
}

struct SimEvent {
    double t{0.0};
    EventType type{EventType::injection};
    VehicleId vehicle{0};
    int lane_from{0};
    int lane_to{0};
    double x{0.0};

    friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

struct PendingVehicle {
    double t_due{0.0};
    VehicleClass vehicle_class{VehicleClass::car};
    double speed{0.0};
};

/// Portable random source: the engine is fully specified by the standard,
/// the distributions below are derived by hand so runs match across
/// standard-library implementations.
class SimRng {
public:
    explicit SimRng(std::uint64_t seed = 1) : engine_(seed) {}
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    friend bool operator==(const SimRng&, const SimRng&) = default;

private:
    std::mt19937_64 engine_;
};

struct SimState {
    std::int64_t step_index{0};
    std::vector<SimVehicle> population;  // sorted by id
    std::vector<std::deque<PendingVehicle>> queues;  // per lane
    std::vector<double> next_arrival;                 // per lane
    std::size_t next_scheduled{0};
    VehicleId next_id{1};
    std::vector<SimEvent> events;
    std::set<std::pair<VehicleId, VehicleId>> overlapping;  // (follower, leader)
    SimRng rng{};
    std::uint64_t injected{0};
    std::uint64_t exited{0};
    CouplingFluxes fluxes{};
    std::array<double, 3> densities{};

    [[nodiscard]] std::vector<MicroVehicle> snapshot() const {
        std::vector<MicroVehicle> out;
        out.reserve(population.size());
        for (const auto& v : population) out.push_back(v.state);
        return out;
    }
};

/// Clock value of a step count, rounded to the nanosecond so that logged
/// times print cleanly.
[[nodiscard]] inline double clock_of(std::int64_t step, double dt) noexcept {
    return std::round(static_cast<double>(step) * dt * 1e9) / 1e9;
}

namespace detail {

inline VehicleClass draw_class(SimRng& rng, const std::array<double, 4>& mix) {
    double total = 0.0;
    for (double w : mix) total += w;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        if (mix[i] <= 0.0) continue;
        if (u < mix[i]) return kVehicleClasses[i];
        u -= mix[i];
    }
    for (std::size_t i = mix.size(); i-- > 0;) {
        if (mix[i] > 0.0) return kVehicleClasses[i];
    }
    return VehicleClass::car;
}

inline double next_gap(SimRng& rng, const Scenario& sc, double rate) {
    return sc.arrivals == ArrivalProcess::uniform ? 1.0 / rate : rng.exponential(rate);
}

/// Lane a vehicle is treated as occupying for merging purposes.
inline bool occupies_lane(const SimVehicle& v, int lane) noexcept {
    return v.state.lane == lane || (v.change && v.change->to == lane);
}

inline const FundamentalDiagram& fd_for(const Scenario& sc, const MicroVehicle& v) noexcept {
    if (v.lane == 0 && v.x < sc.geometry.x_ramp_end) return sc.fd(SegmentId::ramp);
    return sc.fd(v.x < sc.geometry.x_junction ? SegmentId::upstream : SegmentId::downstream);
}

/// Largest speed whose IDM desired gap s* still fits into `gap` behind a
/// leader moving at v_leader. Injection happens in the IDM lead-in.
inline double idm_entry_speed(const IdmParams& p, double gap, double v_leader) noexcept {
    if (!(gap > p.s0)) return 0.0;
    const double c = 1.0 / (2.0 * std::sqrt(p.a_max * p.b_comf));
    const double b = p.T_hw - v_leader * c;
    return std::max(0.0, (-b + std::sqrt(b * b + 4.0 * c * (gap - p.s0))) / (2.0 * c));
}

}  // namespace detail

[[nodiscard]] inline SimState initial_state(const Scenario& sc) {
    SimState st;
    st.rng = SimRng(sc.seed);
    const auto lanes = static_cast<std::size_t>(sc.geometry.lane_count());
    st.queues.resize(lanes);
    st.next_arrival.assign(lanes, std::numeric_limits<double>::infinity());
    for (std::size_t lane = 0; lane < lanes && lane < sc.lane_demand.size(); ++lane) {
        const double rate = sc.lane_demand[lane].rate;
        if (rate > 0.0) st.next_arrival[lane] = sc.arrivals == ArrivalProcess::uniform ? 0.0 : st.rng.exponential(rate);
    }
    return st;
}

/// Places a vehicle directly into the state (tests and warm starts).
inline void add_vehicle(SimState& st, const Scenario& sc, MicroVehicle v) {
    v.id = st.next_id++;
    v.y = sc.geometry.lane_center(v.lane);
    st.population.push_back(SimVehicle{v, std::nullopt, ModelKind::none, v.x});
    ++st.injected;
}

/// Acceleration of one vehicle against an immutable snapshot.
[[nodiscard]] inline std::pair<double, ModelKind> compute_acceleration(const MicroVehicle& me, bool changing,
                                                                       std::span<const MicroVehicle> snapshot,
                                                                       const CouplingFluxes& fluxes,
                                                                       const Scenario& sc) {
    const auto& g = sc.geometry;
    const bool inside = me.x >= g.x_start && me.x <= g.x_exit;
    if (inside && sc.inside_model == CarFollowingModel::flow_based) {
        const auto* leader = find_leader(me, snapshot, g, true);
        const bool combined = in_combined_lane(me, g);
        const auto flow = per_lane_flow(fluxes, g, me.lane, me.x, combined);
        const double v_cap = detail::fd_for(sc, me).v_max;
        const double tau = me.lane == 0 ? adaptation_time(me.x, me.v, g, sc.fvdm) : sc.fvdm.tau_default;
        double v_model = v_cap;
        double v_leader = me.v;  // leaderless: no speed-difference term
        if (leader) {
            v_model = flow_target_speed(net_spacing(*leader, me), flow, v_cap);
            v_leader = leader->v;
        }
        return {fvdm_accel(v_model, me.v, v_leader, tau, sc.fvdm), ModelKind::flow_based};
    }

    const auto* leader = find_leader(me, snapshot, g, false);
    double gap = std::numeric_limits<double>::infinity();
    double dv = 0.0;
    if (leader) {
        gap = net_spacing(*leader, me);
        dv = me.v - leader->v;
    }
    // The end of the entry lane acts as a standing obstacle.
    if (me.lane == 0 && !changing && me.x < g.x_ramp_end) {
        const double end_gap = g.x_ramp_end - me.x - 0.5 * me.length;
        if (end_gap < gap) {
            gap = end_gap;
            dv = me.v;
        }
    }
    IdmParams p = sc.idm;
    p.v0 = std::min(p.v0, sc.dims(me.vehicle_class).max_speed);
    return {idm_accel(p, me.v, dv, gap), ModelKind::idm};
}

/// Advances the state by one time step in place.
inline void advance(SimState& st, const Scenario& sc) {
    const auto& g = sc.geometry;
    const double dt = sc.dt;
    const double t_next = clock_of(st.step_index + 1, dt);
    const auto lc_steps = std::llround(sc.lane_change_duration / dt);

    // (1)-(2) macroscopic coupling from the current traffic state.
    const auto snapshot = st.snapshot();
    for (int s = 1; s <= 3; ++s) {
        const auto seg = static_cast<SegmentId>(s);
        st.densities[static_cast<std::size_t>(s - 1)] =
            std::min(segment_density(snapshot, g, seg), sc.fd(seg).rho_max);
    }
    st.fluxes = merge_riemann(st.densities[0], st.densities[1], st.densities[2], sc.fds[0], sc.fds[1], sc.fds[2],
                              sc.priority());

    // (3)-(4) accelerations against the snapshot.
    std::vector<double> accel(st.population.size());
    for (std::size_t i = 0; i < st.population.size(); ++i) {
        auto& veh = st.population[i];
        auto [a, kind] = compute_acceleration(veh.state, veh.change.has_value(), snapshot, st.fluxes, sc);
        veh.last_model = kind;
        veh.x_at_eval = veh.state.x;
        accel[i] = a;
    }

    // (5) kinematic update with speed ceilings and the ramp-end hold.
    for (std::size_t i = 0; i < st.population.size(); ++i) {
        auto& veh = st.population[i];
        const double v_top = std::min(sc.v_clamp, sc.dims(veh.state.vehicle_class).max_speed);
        double a = accel[i];
        if (veh.state.v + a * dt > v_top) a = (v_top - veh.state.v) / dt;
        const double v_before = veh.state.v;
        veh.state = kinematic_update(veh.state, a, dt);
        const double front_limit = g.x_ramp_end - 0.5 * veh.state.length;
        if (veh.state.lane == 0 && !veh.change && veh.state.x > front_limit && veh.x_at_eval <= front_limit) {
            veh.state.x = front_limit;
            veh.state.v = 0.0;
            veh.state.a = -v_before / dt;
        }
    }

    // (6) gap acceptance on the entry lane, committed in id order.
    for (auto& veh : st.population) {
        const auto& me = veh.state;
        if (me.lane != 0 || veh.change || me.x < g.x_junction || me.x > g.x_ramp_end) continue;
        const MicroVehicle* lead = nullptr;
        const MicroVehicle* lag = nullptr;
        for (const auto& other : st.population) {
            if (other.state.id == me.id || !detail::occupies_lane(other, 1)) continue;
            const auto& o = other.state;
            if (o.x >= me.x) {
                if (!lead || o.x < lead->x) lead = &o;
            } else if (!lag || o.x > lag->x) {
                lag = &o;
            }
        }
        if (gap_acceptance(me, lead, lag, sc.gap, g)) veh.change = LaneChange{0, 1, 0, false};
    }

    // (7) lateral transitions; the lane index flips at the midpoint.
    for (auto& veh : st.population) {
        if (!veh.change) continue;
        auto& lc = *veh.change;
        ++lc.steps;
        const double elapsed = static_cast<double>(lc.steps) * dt;
        veh.state.y = lateral_transition(g, lc.from, lc.to, elapsed, sc.lane_change_duration);
        if (!lc.switched && 2 * lc.steps >= lc_steps) {
            lc.switched = true;
            veh.state.lane = lc.to;
            st.events.push_back({t_next, EventType::lane_change, veh.state.id, lc.from, lc.to, veh.state.x});
        }
        if (lc.steps >= lc_steps) {
            veh.state.y = g.lane_center(lc.to);
            veh.change.reset();
        }
    }

    // (8) demand: queue due arrivals, inject at most one vehicle per lane.
    const double t_eps = 1e-9;
    while (st.next_scheduled < sc.schedule.size() && sc.schedule[st.next_scheduled].t <= t_next + t_eps) {
        const auto& e = sc.schedule[st.next_scheduled++];
        st.queues[static_cast<std::size_t>(e.lane)].push_back({e.t, e.vehicle_class, e.speed});
    }
    for (std::size_t lane = 0; lane < st.queues.size(); ++lane) {
        if (lane < sc.lane_demand.size()) {
            const auto& d = sc.lane_demand[lane];
            while (st.next_arrival[lane] <= t_next + t_eps) {
                st.queues[lane].push_back({st.next_arrival[lane], detail::draw_class(st.rng, sc.class_mix), d.speed});
                st.next_arrival[lane] += detail::next_gap(st.rng, sc, d.rate);
            }
        }
        if (st.queues[lane].empty()) continue;
        const auto& pending = st.queues[lane].front();
        const auto dims = sc.dims(pending.vehicle_class);
        MicroVehicle nv;
        nv.vehicle_class = pending.vehicle_class;
        nv.lane = static_cast<int>(lane);
        nv.x = sc.road_start();
        nv.y = g.lane_center(nv.lane);
        nv.length = dims.length;
        nv.width = dims.width;
        const MicroVehicle* ahead = nullptr;
        for (const auto& other : st.population) {
            if (!detail::occupies_lane(other, nv.lane) || other.state.x < nv.x) continue;
            if (!ahead || other.state.x < ahead->x) ahead = &other.state;
        }
        double speed = std::min(pending.speed, dims.max_speed);
        if (ahead) {
            const double spacing = net_spacing(*ahead, nv);
            if (spacing < sc.min_entry_gap) continue;  // blocked: retry next step
            const auto flow = per_lane_flow(st.fluxes, g, nv.lane, g.x_start, false);
            if (flow.q > 0.0) speed = std::min(speed, flow_target_speed(spacing, flow, speed));
            speed = std::min(speed, detail::idm_entry_speed(sc.idm, spacing, ahead->v));
        }
        nv.v = speed;
        nv.id = st.next_id++;
        st.queues[lane].pop_front();
        st.population.push_back(SimVehicle{nv, std::nullopt, ModelKind::none, nv.x});
        ++st.injected;
        st.events.push_back({t_next, EventType::injection, nv.id, nv.lane, nv.lane, nv.x});
    }

    // (9) exits.
    std::erase_if(st.population, [&](const SimVehicle& v) {
        if (v.state.x <= sc.road_end()) return false;
        st.events.push_back({t_next, EventType::exit, v.state.id, v.state.lane, v.state.lane, v.state.x});
        ++st.exited;
        return true;
    });

    // (10) overlaps are logged once at onset; dynamics are left untouched.
    std::set<std::pair<VehicleId, VehicleId>> now_overlapping;
    for (int lane = 0; lane < g.lane_count(); ++lane) {
        std::vector<const MicroVehicle*> on_lane;
        for (const auto& v : st.population) {
            if (v.state.lane == lane) on_lane.push_back(&v.state);
        }
        std::sort(on_lane.begin(), on_lane.end(), [](const MicroVehicle* a, const MicroVehicle* b) {
            return a->x < b->x || (a->x == b->x && a->id < b->id);
        });
        for (std::size_t i = 1; i < on_lane.size(); ++i) {
            const auto& follower = *on_lane[i - 1];
            const auto& leader = *on_lane[i];
            if (net_spacing(leader, follower) >= 0.0) continue;
            auto key = std::make_pair(follower.id, leader.id);
            now_overlapping.insert(key);
            if (!st.overlapping.contains(key)) {
                st.events.push_back({t_next, EventType::collision, follower.id, lane, lane, follower.x});
            }
        }
    }
    st.overlapping = std::move(now_overlapping);

    ++st.step_index;
}

[[nodiscard]] inline SimState step(SimState state, const Scenario& sc) {
    advance(state, sc);
    return state;
}

struct SimResult {
    TrajectoryDataset trajectories;
    std::vector<SimEvent> events;
    std::uint64_t injected{0};
    std::uint64_t exited{0};
};

inline void log_state(const SimState& st, const Scenario& sc, std::vector<TrajectorySample>& out) {
    const auto& g = sc.geometry;
    const double t = clock_of(st.step_index, sc.dt);
    for (const auto& veh : st.population) {
        const auto& v = veh.state;
        if (v.x < g.x_start - v.length || v.x > g.x_exit + v.length) continue;
        out.push_back(TrajectorySample{t, std::to_string(v.id), v.vehicle_class, v.lane, v.x, v.y, v.v, v.a,
                                       v.length, v.width});
    }
}

/// Runs the scenario to completion, logging every dt_log.
[[nodiscard]] inline SimResult run(const Scenario& sc) {
    sc.validate();
    auto st = initial_state(sc);
    const auto per_log = sc.steps_per_log();
    const auto total = sc.total_steps();
    std::vector<TrajectorySample> samples;
    log_state(st, sc, samples);
    for (std::int64_t k = 0; k < total; ++k) {
        advance(st, sc);
        if (st.step_index % per_log == 0) log_state(st, sc, samples);
    }
    SimResult r;
    r.trajectories = TrajectoryDataset::from_samples(std::move(samples), &sc.geometry, "simulation");
    r.events = std::move(st.events);
    r.injected = st.injected;
    r.exited = st.exited;
    return r;
}

inline constexpr std::string_view kEventHeader = "t,event_type,vehicle_id,lane_from,lane_to,x";

inline void write_events(std::ostream& out, std::span<const SimEvent> events) {
    out << kEventHeader << '\n';
    for (const auto& e : events) {
        out << csv::format(e.t) << ',' << to_string(e.type) << ',' << e.vehicle << ',' << e.lane_from << ','
            << e.lane_to << ',' << csv::format(e.x) << '\n';
    }
}

/// Reads an event CSV back; only the fields needed for evaluation matter.
inline std::vector<SimEvent> load_events(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != kEventHeader) {
        throw SchemaError("event file header must be '" + std::string(kEventHeader) + "'");
    }
    std::vector<SimEvent> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        auto f = csv::split(line);
        if (f.size() != 6) throw SchemaError("event file: malformed row at line " + std::to_string(line_no));
        SimEvent e;
        auto t = csv::parse_double(f[0]);
        auto id = csv::parse_int(f[2]);
        auto from = csv::parse_int(f[3]);
        auto to = csv::parse_int(f[4]);
        auto x = csv::parse_double(f[5]);
        std::optional<EventType> type;
        for (auto candidate : {EventType::injection, EventType::exit, EventType::lane_change, EventType::collision}) {
            if (to_string(candidate) == f[1]) type = candidate;
        }
        if (!t || !id || !from || !to || !x || !type) {
            throw SchemaError("event file: malformed row at line " + std::to_string(line_no));
        }
        out.push_back({*t, *type, static_cast<VehicleId>(*id), static_cast<int>(*from), static_cast<int>(*to), *x});
    }
    return out;
}

}  // namespace rampflow
