#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "rampflow/trajectory.hpp"

namespace rampflow::test {

inline TrajectorySample sample(double t, std::string id, int lane, double x, double v, double a = 0.0,
                               double length = 4.5, double width = 1.8, double y = -1.0,
                               VehicleClass cls = VehicleClass::car) {
    TrajectorySample s;
    s.t = t;
    s.vehicle_id = std::move(id);
    s.vehicle_class = cls;
    s.lane = lane;
    s.x = x;
    s.y = y;
    s.v = v;
    s.a = a;
    s.length = length;
    s.width = width;
    return s;
}

/// Places y on the lane center when the caller left it unset.
inline TrajectoryDataset dataset(std::vector<TrajectorySample> samples, const RampGeometry& g) {
    for (auto& s : samples) {
        if (s.y < 0.0) s.y = g.lane_center(s.lane);
    }
    return TrajectoryDataset::from_samples(std::move(samples), &g, "test");
}

inline TrajectoryDataset parse(const std::string& text, const RampGeometry& g) {
    std::istringstream in(text);
    return load_trajectories(in, &g, "test");
}

}  // namespace rampflow::test
