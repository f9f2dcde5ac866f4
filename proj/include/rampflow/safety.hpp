#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "rampflow/error.hpp"
#include "rampflow/geometry.hpp"
#include "rampflow/sim.hpp"
#include "rampflow/trajectory.hpp"

namespace rampflow {

/// Pair minima above this value do not count as conflicts.
inline constexpr double kMttcThreshold = 3.0;
inline constexpr double kProfileSectionLength = 5.0;
inline constexpr double kConflictSectionLength = 20.0;

/// Modified time-to-collision for net distance D, speed difference
/// v_d = v_follower - v_leader and acceleration difference a_d. Empty when
/// the pair never closes the gap under constant accelerations.
[[nodiscard]] inline std::optional<double> mttc(double distance, double v_d, double a_d) {
    if (!(distance >= 0.0)) throw DomainError("MTTC needs a non-negative net distance");
    if (a_d == 0.0) {
        if (v_d > 0.0) return distance / v_d;
        return std::nullopt;
    }
    // Roots of (a_d / 2) t^2 + v_d t - D = 0, evaluated without cancellation.
    const double disc = v_d * v_d + 2.0 * a_d * distance;
    if (disc < 0.0) return std::nullopt;
    const double q = -0.5 * (v_d + std::copysign(std::sqrt(disc), v_d));
    std::optional<double> best;
    auto consider = [&](double r) {
        if (std::isfinite(r) && r > 0.0 && (!best || r < *best)) best = r;
    };
    if (q != 0.0) {
        consider(q / (0.5 * a_d));
        consider(-distance / q);
    }
    return best;
}

/// Lanes whose lateral extent overlaps the vehicle's footprint (open
/// intervals, so touching a marking does not count). The entry lane is not
/// available past its end.
[[nodiscard]] inline std::vector<int> footprint_lanes(const TrajectorySample& s, const RampGeometry& g) {
    const double lo = s.y - 0.5 * s.width;
    const double hi = s.y + 0.5 * s.width;
    std::vector<int> lanes;
    for (int lane = 0; lane < g.lane_count(); ++lane) {
        if (lane == 0 && s.x >= g.x_ramp_end) continue;
        auto [l_lo, l_hi] = g.lane_bounds(lane);
        if (lo < l_hi && hi > l_lo) lanes.push_back(lane);
    }
    if (lanes.empty() && s.lane >= 0 && s.lane < g.lane_count()) lanes.push_back(s.lane);
    return lanes;
}

struct ConflictObservation {
    double t{0.0};
    std::string leader;
    std::string follower;
    int lane{0};
    double distance{0.0};  // net, m
    double v_d{0.0};       // follower minus leader, m/s
    double a_d{0.0};       // follower minus leader, m/s^2
    double follower_x{0.0};
    std::optional<double> mttc;

    friend bool operator==(const ConflictObservation&, const ConflictObservation&) = default;
};

/// Adjacent leader/follower pairs per lane at every sampling instant. A
/// vehicle whose corner has crossed a marking takes part on both lanes.
/// Longitudinally overlapping pairs (side by side) carry no MTTC.
[[nodiscard]] inline std::vector<ConflictObservation> conflict_pairs(const TrajectoryDataset& ds,
                                                                     const RampGeometry& g) {
    std::map<std::int64_t, std::vector<const TrajectorySample*>> by_instant;
    for (const auto& tr : ds.tracks()) {
        for (const auto& s : tr.samples) by_instant[ds.instant_index(s.t)].push_back(&s);
    }
    std::vector<ConflictObservation> out;
    for (const auto& [instant, samples] : by_instant) {
        std::vector<std::vector<const TrajectorySample*>> lanes(static_cast<std::size_t>(g.lane_count()));
        for (const auto* s : samples) {
            for (int lane : footprint_lanes(*s, g)) lanes[static_cast<std::size_t>(lane)].push_back(s);
        }
        for (std::size_t lane = 0; lane < lanes.size(); ++lane) {
            auto& on_lane = lanes[lane];
            std::sort(on_lane.begin(), on_lane.end(), [](const TrajectorySample* a, const TrajectorySample* b) {
                if (a->x != b->x) return a->x < b->x;
                return natural_id_less(a->vehicle_id, b->vehicle_id);
            });
            for (std::size_t i = 1; i < on_lane.size(); ++i) {
                const auto& f = *on_lane[i - 1];
                const auto& l = *on_lane[i];
                ConflictObservation o;
                o.t = f.t;
                o.leader = l.vehicle_id;
                o.follower = f.vehicle_id;
                o.lane = static_cast<int>(lane);
                o.distance = l.x - f.x - 0.5 * (l.length + f.length);
                o.v_d = f.v - l.v;
                o.a_d = f.a - l.a;
                o.follower_x = f.x;
                if (o.distance >= 0.0) o.mttc = mttc(o.distance, o.v_d, o.a_d);
                out.push_back(std::move(o));
            }
        }
    }
    return out;
}

/// Equal-length sections tiling [x_start, x_exit); the last may be short.
struct SectionGrid {
    double x_start{0.0};
    double x_exit{300.0};
    double length{20.0};

    SectionGrid(const RampGeometry& g, double section_length)
        : x_start(g.x_start), x_exit(g.x_exit), length(section_length) {
        if (!(section_length > 0.0)) throw ParameterError("section length must be positive");
    }

    [[nodiscard]] std::size_t count() const noexcept {
        return static_cast<std::size_t>(std::ceil((x_exit - x_start) / length - 1e-9));
    }
    [[nodiscard]] std::optional<std::size_t> index_of(double x) const noexcept {
        if (x < x_start || x >= x_exit) return std::nullopt;
        auto i = static_cast<std::size_t>(std::floor((x - x_start) / length));
        return std::min(i, count() - 1);
    }
    [[nodiscard]] double start(std::size_t i) const noexcept { return x_start + static_cast<double>(i) * length; }
};

enum class ProfileQuantity { speed, acceleration };

struct SectionValue {
    int lane{0};  // -1 when lanes are pooled
    double section_start{0.0};
    std::optional<double> value;  // empty: no data (or SAFE for MTTC)

    friend bool operator==(const SectionValue&, const SectionValue&) = default;
};

/// Mean speed or acceleration per (lane, section), lane by the sample's
/// lane index.
[[nodiscard]] inline std::vector<SectionValue> section_profile(const TrajectoryDataset& ds, const RampGeometry& g,
                                                               ProfileQuantity quantity,
                                                               double section_length = kProfileSectionLength) {
    const SectionGrid grid(g, section_length);
    const auto n_lanes = static_cast<std::size_t>(g.lane_count());
    std::vector<double> sum(n_lanes * grid.count(), 0.0);
    std::vector<std::int64_t> cnt(n_lanes * grid.count(), 0);
    for (const auto& tr : ds.tracks()) {
        for (const auto& s : tr.samples) {
            auto sec = grid.index_of(s.x);
            if (!sec || s.lane < 0 || s.lane >= g.lane_count()) continue;
            const auto k = static_cast<std::size_t>(s.lane) * grid.count() + *sec;
            sum[k] += quantity == ProfileQuantity::speed ? s.v : s.a;
            ++cnt[k];
        }
    }
    std::vector<SectionValue> out;
    for (std::size_t lane = 0; lane < n_lanes; ++lane) {
        for (std::size_t sec = 0; sec < grid.count(); ++sec) {
            const auto k = lane * grid.count() + sec;
            SectionValue v{static_cast<int>(lane), grid.start(sec), std::nullopt};
            if (cnt[k] > 0) v.value = sum[k] / static_cast<double>(cnt[k]);
            out.push_back(v);
        }
    }
    return out;
}

/// Position of the first entry-to-main lane change of every vehicle in a
/// recorded dataset: the first sample whose nearest lane center switches
/// from the entry lane to lane 1 and stays off the entry lane for at least
/// `persistence` seconds.
[[nodiscard]] inline std::vector<double> detect_lane_changes(const TrajectoryDataset& ds, const RampGeometry& g,
                                                             double persistence = 1.0) {
    std::vector<double> positions;
    constexpr double eps = 1e-9;
    for (const auto& tr : ds.tracks()) {
        const auto& s = tr.samples;
        std::vector<int> lane(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) lane[i] = g.nearest_lane(s[i].y);
        for (std::size_t j = 1; j < s.size(); ++j) {
            if (lane[j - 1] != 0 || lane[j] != 1) continue;
            const double until = s[j].t + persistence;
            if (s.back().t + eps < until) break;  // track ends before the change is confirmed
            bool held = true;
            for (std::size_t k = j; k < s.size() && s[k].t <= until + eps; ++k) {
                if (lane[k] == 0) {
                    held = false;
                    break;
                }
            }
            if (held) {
                positions.push_back(s[j].x);
                break;
            }
        }
    }
    return positions;
}

/// Entry-to-main lane changes logged by the simulator.
[[nodiscard]] inline std::vector<double> lane_change_positions(std::span<const SimEvent> events) {
    std::vector<double> positions;
    for (const auto& e : events) {
        if (e.type == EventType::lane_change && e.lane_from == 0 && e.lane_to == 1) positions.push_back(e.x);
    }
    return positions;
}

[[nodiscard]] inline std::vector<int> lane_change_histogram(std::span<const double> positions, const RampGeometry& g,
                                                            double section_length = kConflictSectionLength) {
    const SectionGrid grid(g, section_length);
    std::vector<int> counts(grid.count(), 0);
    for (double x : positions) {
        if (auto sec = grid.index_of(x)) ++counts[*sec];
    }
    return counts;
}

[[nodiscard]] inline std::vector<int> lane_change_histogram(const TrajectoryDataset& ds, const RampGeometry& g,
                                                            double section_length = kConflictSectionLength) {
    const auto positions = detect_lane_changes(ds, g);
    return lane_change_histogram(positions, g, section_length);
}

[[nodiscard]] inline std::vector<int> lane_change_histogram(std::span<const SimEvent> events, const RampGeometry& g,
                                                            double section_length = kConflictSectionLength) {
    const auto positions = lane_change_positions(events);
    return lane_change_histogram(positions, g, section_length);
}

/// Per section, the average of per-pair minimum MTTC values that are at
/// most 3 s; empty (SAFE) when no pair qualifies. Observations are placed
/// by the follower's position. With pool_lanes, all lanes share one row
/// (lane = -1) and a pair is identified by its vehicles alone.
[[nodiscard]] inline std::vector<SectionValue> sectioned_mttc(std::span<const ConflictObservation> observations,
                                                              const RampGeometry& g, bool pool_lanes = false,
                                                              double section_length = kConflictSectionLength) {
    const SectionGrid grid(g, section_length);
    using PairKey = std::tuple<int, std::size_t, std::string, std::string>;  // lane, section, leader, follower
    std::map<PairKey, std::optional<double>> pair_min;
    for (const auto& o : observations) {
        auto sec = grid.index_of(o.follower_x);
        if (!sec) continue;
        PairKey key{pool_lanes ? -1 : o.lane, *sec, o.leader, o.follower};
        auto& m = pair_min[key];
        if (o.mttc && (!m || *o.mttc < *m)) m = o.mttc;
    }

    const int n_rows = pool_lanes ? 1 : g.lane_count();
    std::vector<double> sum(static_cast<std::size_t>(n_rows) * grid.count(), 0.0);
    std::vector<int> cnt(sum.size(), 0);
    for (const auto& [key, m] : pair_min) {
        if (!m || *m > kMttcThreshold) continue;
        const int row = pool_lanes ? 0 : std::get<0>(key);
        const auto k = static_cast<std::size_t>(row) * grid.count() + std::get<1>(key);
        sum[k] += *m;
        ++cnt[k];
    }
    std::vector<SectionValue> out;
    for (int row = 0; row < n_rows; ++row) {
        for (std::size_t sec = 0; sec < grid.count(); ++sec) {
            const auto k = static_cast<std::size_t>(row) * grid.count() + sec;
            SectionValue v{pool_lanes ? -1 : row, grid.start(sec), std::nullopt};
            if (cnt[k] > 0) v.value = sum[k] / cnt[k];
            out.push_back(v);
        }
    }
    return out;
}

inline constexpr std::array<const char*, 5> kMttcBinLabels{"0-1.5", "1.5-2", "2-2.5", "2.5-3", "above3_or_SAFE"};

/// Histogram of section averages: [0,1.5), [1.5,2), [2,2.5), [2.5,3], above 3 or SAFE.
[[nodiscard]] inline std::array<int, 5> mttc_interval_counts(std::span<const SectionValue> sections) {
    std::array<int, 5> bins{};
    for (const auto& s : sections) {
        if (!s.value || *s.value > kMttcThreshold) {
            ++bins[4];
        } else if (*s.value < 1.5) {
            ++bins[0];
        } else if (*s.value < 2.0) {
            ++bins[1];
        } else if (*s.value < 2.5) {
            ++bins[2];
        } else {
            ++bins[3];
        }
    }
    return bins;
}

/// Sections whose average MTTC is at most 3 s.
[[nodiscard]] inline int conflict_section_count(std::span<const SectionValue> sections) {
    return static_cast<int>(std::count_if(sections.begin(), sections.end(), [](const SectionValue& s) {
        return s.value && *s.value <= kMttcThreshold;
    }));
}

}  // namespace rampflow
