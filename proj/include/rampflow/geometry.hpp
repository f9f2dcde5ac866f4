#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rampflow/error.hpp"

namespace rampflow {

enum class VehicleClass { car, van, truck, bus };

inline constexpr std::array<VehicleClass, 4> kVehicleClasses{
    VehicleClass::car, VehicleClass::van, VehicleClass::truck, VehicleClass::bus};

[[nodiscard]] constexpr std::string_view to_string(VehicleClass c) noexcept {
    switch (c) {
        case VehicleClass::car: return "car";
        case VehicleClass::van: return "van";
        case VehicleClass::truck: return "truck";
        case VehicleClass::bus: return "bus";
    }
    return "car";
}

[[nodiscard]] inline std::optional<VehicleClass> parse_vehicle_class(std::string_view s) noexcept {
    for (auto c : kVehicleClasses) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

/// Physical defaults per class; overridable from the scenario file.
struct VehicleDimensions {
    double length{4.5};     // m
    double width{1.8};      // m
    double max_speed{50.0}; // m/s
};

[[nodiscard]] constexpr VehicleDimensions default_dimensions(VehicleClass c) noexcept {
    switch (c) {
        case VehicleClass::car: return {4.5, 1.8, 50.0};
        case VehicleClass::van: return {5.5, 2.0, 44.0};
        case VehicleClass::truck: return {12.0, 2.5, 25.0};
        case VehicleClass::bus: return {12.0, 2.55, 28.0};
    }
    return {};
}

/// The three macroscopic segments of an on-ramp: ramp lane, mainline
/// upstream of the junction, mainline downstream of the junction.
enum class SegmentId { ramp = 1, upstream = 2, downstream = 3 };

[[nodiscard]] constexpr int segment_number(SegmentId s) noexcept { return static_cast<int>(s); }

[[nodiscard]] inline SegmentId segment_from_number(int n) {
    if (n < 1 || n > 3) throw GeometryError("segment must be 1, 2 or 3, got " + std::to_string(n));
    return static_cast<SegmentId>(n);
}

/// Longitudinal layout of an on-ramp. Lane 0 is the entry lane; lanes
/// 1..n_through_lanes are through lanes numbered leftwards. Lateral
/// coordinate y = 0 lies on the right edge of the entry lane.
struct RampGeometry {
    double x_start{0.0};
    double x_junction{100.0};
    double x_ramp_end{250.0};
    double x_exit{300.0};
    int n_through_lanes{3};
    // Index 0 is the entry lane, the last entry the leftmost through lane.
    std::vector<double> lane_widths{3.0, 3.0, 3.0, 2.6};

    [[nodiscard]] int lane_count() const noexcept { return n_through_lanes + 1; }
    [[nodiscard]] double length() const noexcept { return x_exit - x_start; }

    void validate() const {
        if (!(x_start < x_junction && x_junction < x_ramp_end && x_ramp_end < x_exit)) {
            throw GeometryError("geometry requires x_start < x_junction < x_ramp_end < x_exit");
        }
        if (n_through_lanes < 1) throw GeometryError("geometry needs at least one through lane");
        if (static_cast<int>(lane_widths.size()) != lane_count()) {
            throw GeometryError("lane_widths must list " + std::to_string(lane_count()) +
                                " widths (entry lane first)");
        }
        for (double w : lane_widths) {
            if (!(w > 0.0)) throw GeometryError("lane widths must be positive");
        }
    }

    [[nodiscard]] std::pair<double, double> lane_bounds(int lane) const {
        if (lane < 0 || lane >= lane_count()) {
            throw GeometryError("lane index out of range: " + std::to_string(lane));
        }
        double lo = 0.0;
        for (int i = 0; i < lane; ++i) lo += lane_widths[static_cast<std::size_t>(i)];
        return {lo, lo + lane_widths[static_cast<std::size_t>(lane)]};
    }

    [[nodiscard]] double lane_center(int lane) const {
        auto [lo, hi] = lane_bounds(lane);
        return 0.5 * (lo + hi);
    }

    /// Lane whose center is closest to y; ties resolve to the lower index.
    [[nodiscard]] int nearest_lane(double y) const {
        int best = 0;
        double best_d = std::abs(y - lane_center(0));
        for (int lane = 1; lane < lane_count(); ++lane) {
            double d = std::abs(y - lane_center(lane));
            if (d < best_d) {
                best = lane;
                best_d = d;
            }
        }
        return best;
    }

    /// Longitudinal extent [lo, hi) of a segment.
    [[nodiscard]] std::pair<double, double> segment_bounds(SegmentId s) const noexcept {
        switch (s) {
            case SegmentId::ramp: return {x_start, x_ramp_end};
            case SegmentId::upstream: return {x_start, x_junction};
            case SegmentId::downstream: return {x_junction, x_exit};
        }
        return {x_start, x_exit};
    }

    [[nodiscard]] double segment_length(SegmentId s) const noexcept {
        auto [lo, hi] = segment_bounds(s);
        return hi - lo;
    }

    [[nodiscard]] int segment_lane_count(SegmentId s) const noexcept {
        return s == SegmentId::ramp ? 1 : n_through_lanes;
    }

    friend bool operator==(const RampGeometry&, const RampGeometry&) = default;
};

/// Segment of a point; lane 0 past the end of the entry lane has no segment.
[[nodiscard]] inline std::optional<SegmentId> try_segment_of(const RampGeometry& g, double x,
                                                             int lane) noexcept {
    if (x < g.x_start || x > g.x_exit || lane < 0 || lane >= g.lane_count()) return std::nullopt;
    if (lane == 0) {
        if (x < g.x_ramp_end) return SegmentId::ramp;
        return std::nullopt;
    }
    return x < g.x_junction ? SegmentId::upstream : SegmentId::downstream;
}

[[nodiscard]] inline SegmentId segment_of(const RampGeometry& g, double x, int lane) {
    if (x < g.x_start || x > g.x_exit) {
        throw GeometryError("position " + std::to_string(x) + " outside [x_start, x_exit]");
    }
    if (lane < 0 || lane >= g.lane_count()) {
        throw GeometryError("lane index out of range: " + std::to_string(lane));
    }
    auto s = try_segment_of(g, x, lane);
    if (!s) throw GeometryError("entry lane ends at x_ramp_end; no segment at x = " + std::to_string(x));
    return *s;
}

}  // namespace rampflow
