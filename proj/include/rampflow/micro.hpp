#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

#include "rampflow/error.hpp"
#include "rampflow/geometry.hpp"

namespace rampflow {

using VehicleId = std::uint64_t;

/// Longitudinal state of one simulated vehicle; x is the vehicle center.
struct MicroVehicle {
    VehicleId id{0};
    VehicleClass vehicle_class{VehicleClass::car};
    int lane{1};
    double x{0.0};
    double y{0.0};
    double v{0.0};
    double a{0.0};
    double length{4.5};
    double width{1.8};

    friend bool operator==(const MicroVehicle&, const MicroVehicle&) = default;
};

/// Relaxation parameters of the flow-based model.
struct FvdmParams {
    double lambda{0.4};       // 1/s, leader speed-difference sensitivity
    double tau_default{2.0};  // s, adaptation time on through lanes
    double tau_min{0.5};      // s
    double tau_max{15.0};     // s
    double a_min{-8.0};       // m/s^2, lower acceleration clamp
    double a_max{4.0};        // m/s^2, upper acceleration clamp

    void validate() const {
        if (!(lambda >= 0.0) || !(tau_default > 0.0) || !(tau_min > 0.0) || !(tau_max > 0.0)) {
            throw ParameterError("flow-based parameters must be positive");
        }
        if (!(tau_min <= tau_default && tau_default <= tau_max)) {
            throw ParameterError("flow-based model needs tau_min <= tau_default <= tau_max");
        }
        if (!(a_min < 0.0 && a_max > 0.0)) throw ParameterError("acceleration clamps must bracket zero");
    }
};

struct IdmParams {
    double v0{33.3};         // desired speed, m/s
    double T_hw{1.5};        // desired time headway, s
    double s0{2.0};          // minimum gap, m
    double a_max{1.5};       // m/s^2
    double b_comf{2.0};      // m/s^2
    double delta{4.0};
    double b_emergency{8.0}; // m/s^2, magnitude of the lower clamp

    void validate() const {
        if (!(v0 > 0.0 && T_hw > 0.0 && s0 > 0.0 && a_max > 0.0 && b_comf > 0.0 && delta > 0.0 &&
              b_emergency > 0.0)) {
            throw ParameterError("IDM parameters must be positive");
        }
    }
};

/// Flow per lane handed to the car-following law, veh/s.
struct SegmentFlow {
    double q{0.0};
};

struct GapAcceptanceParams {
    double g_lead_min{2.0};  // m
    double g_lag_min{2.0};   // m
    double k_lead{0.5};      // s
    double k_lag{0.5};       // s
    double d_force{50.0};    // m before the ramp end where thresholds shrink
    double floor_lead{0.5};  // m
    double floor_lag{0.5};   // m

    void validate() const {
        if (g_lead_min < 0.0 || g_lag_min < 0.0 || k_lead < 0.0 || k_lag < 0.0 || floor_lead < 0.0 ||
            floor_lag < 0.0 || !(d_force > 0.0)) {
            throw ParameterError("gap-acceptance parameters must be non-negative (d_force positive)");
        }
    }
};

/// Bumper-to-bumper distance; negative when the vehicles overlap.
[[nodiscard]] inline double net_spacing(const MicroVehicle& leader, const MicroVehicle& follower) noexcept {
    return leader.x - follower.x - 0.5 * (leader.length + follower.length);
}

/// Target speed from spacing and macroscopic flow, capped at v_cap.
[[nodiscard]] inline double flow_target_speed(double spacing, SegmentFlow flow, double v_cap) noexcept {
    return std::min(v_cap, std::max(0.0, spacing) * flow.q);
}

/// FVDM acceleration before clamping.
[[nodiscard]] inline double fvdm_accel_raw(double v_model, double v_follower, double v_leader, double tau,
                                           const FvdmParams& params) {
    if (!(tau > 0.0)) throw ParameterError("adaptation time must be positive");
    return (v_model - v_follower) / tau - params.lambda * (v_follower - v_leader);
}

[[nodiscard]] inline double fvdm_accel(double v_model, double v_follower, double v_leader, double tau,
                                       const FvdmParams& params) {
    return std::clamp(fvdm_accel_raw(v_model, v_follower, v_leader, tau, params), params.a_min, params.a_max);
}

/// Remaining travel time to the end of the entry lane, clamped to [tau_min, tau_max].
[[nodiscard]] inline double adaptation_time(double x_follower, double v_follower, const RampGeometry& geometry,
                                            const FvdmParams& params) noexcept {
    const double raw = v_follower > 0.0 ? (geometry.x_ramp_end - x_follower) / v_follower
                                        : std::numeric_limits<double>::infinity();
    return std::clamp(raw, params.tau_min, params.tau_max);
}

/// Trapezoidal update; speed never drops below zero.
[[nodiscard]] inline MicroVehicle kinematic_update(const MicroVehicle& vehicle, double accel, double dt) noexcept {
    MicroVehicle next = vehicle;
    next.v = std::max(0.0, vehicle.v + accel * dt);
    next.x = vehicle.x + 0.5 * (vehicle.v + next.v) * dt;
    next.a = accel;
    return next;
}

/// True when the subject belongs to the virtual lane formed by the entry
/// lane and the adjacent through lane.
[[nodiscard]] inline bool in_combined_lane(const MicroVehicle& v, const RampGeometry& geometry) noexcept {
    return (v.lane == 0 || v.lane == 1) && v.x < geometry.x_ramp_end;
}

/// Nearest vehicle strictly ahead. With merge_zone_active, a subject on the
/// entry lane or the adjacent through lane looks at both lanes.
[[nodiscard]] inline const MicroVehicle* find_leader(const MicroVehicle& subject,
                                                     std::span<const MicroVehicle> population,
                                                     const RampGeometry& geometry, bool merge_zone_active) noexcept {
    const bool combined = merge_zone_active && in_combined_lane(subject, geometry);
    const MicroVehicle* best = nullptr;
    for (const auto& other : population) {
        if (other.id == subject.id || !(other.x > subject.x)) continue;
        const bool lane_ok = combined ? (other.lane == 0 || other.lane == 1) : other.lane == subject.lane;
        if (!lane_ok) continue;
        if (!best || other.x < best->x || (other.x == best->x && other.id < best->id)) best = &other;
    }
    return best;
}

/// Intelligent Driver Model; dv = v_follower - v_leader.
[[nodiscard]] inline double idm_accel(const IdmParams& p, double v, double dv, double gap) noexcept {
    if (!(gap > 0.0)) return -p.b_emergency;
    const double s_star = p.s0 + v * p.T_hw + v * dv / (2.0 * std::sqrt(p.a_max * p.b_comf));
    const double interaction = std::isinf(gap) ? 0.0 : (s_star / gap) * (s_star / gap);
    const double a = p.a_max * (1.0 - std::pow(v / p.v0, p.delta) - interaction);
    return std::clamp(a, -p.b_emergency, p.a_max);
}

/// Net gap in front of and behind the subject on the target lane, and the
/// thresholds they are checked against.
struct GapCheck {
    double lead_gap{std::numeric_limits<double>::infinity()};
    double lag_gap{std::numeric_limits<double>::infinity()};
    double lead_threshold{0.0};
    double lag_threshold{0.0};
    [[nodiscard]] bool accepted() const noexcept { return lead_gap >= lead_threshold && lag_gap >= lag_threshold; }
};

[[nodiscard]] inline GapCheck evaluate_gap(const MicroVehicle& subject, const MicroVehicle* target_leader,
                                           const MicroVehicle* target_follower, const GapAcceptanceParams& p,
                                           const RampGeometry& geometry) noexcept {
    GapCheck c;
    if (target_leader) c.lead_gap = net_spacing(*target_leader, subject);
    if (target_follower) c.lag_gap = net_spacing(subject, *target_follower);
    const double full_lead = p.g_lead_min + p.k_lead * subject.v;
    const double full_lag = p.g_lag_min + (target_follower ? p.k_lag * target_follower->v : 0.0);
    // Linear schedule from the full threshold at d_force before the ramp end to the floor at the end.
    const double w = std::clamp((geometry.x_ramp_end - subject.x) / p.d_force, 0.0, 1.0);
    c.lead_threshold = p.floor_lead + (full_lead - p.floor_lead) * w;
    c.lag_threshold = p.floor_lag + (full_lag - p.floor_lag) * w;
    return c;
}

[[nodiscard]] inline bool gap_acceptance(const MicroVehicle& subject, const MicroVehicle* target_leader,
                                         const MicroVehicle* target_follower, const GapAcceptanceParams& p,
                                         const RampGeometry& geometry) noexcept {
    return evaluate_gap(subject, target_leader, target_follower, p, geometry).accepted();
}

}  // namespace rampflow
