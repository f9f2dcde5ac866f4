#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rampflow/csv.hpp"
#include "rampflow/error.hpp"
#include "rampflow/geometry.hpp"

namespace rampflow {

struct TrajectorySample {
    double t{0.0};
    std::string vehicle_id;
    VehicleClass vehicle_class{VehicleClass::car};
    int lane{0};
    double x{0.0};
    double y{0.0};
    double v{0.0};
    double a{0.0};
    double length{4.5};
    double width{1.8};

    friend bool operator==(const TrajectorySample&, const TrajectorySample&) = default;
};

struct VehicleTrack {
    std::string id;
    std::vector<TrajectorySample> samples;  // strictly increasing t

    friend bool operator==(const VehicleTrack&, const VehicleTrack&) = default;
};

/// Orders ids numerically when both are integers, lexicographically otherwise.
[[nodiscard]] inline bool natural_id_less(std::string_view a, std::string_view b) noexcept {
    auto ia = csv::parse_int(a);
    auto ib = csv::parse_int(b);
    if (ia && ib) return *ia < *ib;
    if (ia != ib && (ia || ib)) return ia.has_value();  // numbers before names
    return a < b;
}

inline constexpr std::string_view kTrajectoryHeader = "t,vehicle_id,class,lane,x,y,v,a,length,width";

/// Immutable, validated collection of per-vehicle tracks.
class TrajectoryDataset {
public:
    TrajectoryDataset() = default;

    /// Groups and validates samples. Per-vehicle order must already be
    /// chronological; a geometry, when given, bounds the positions.
    static TrajectoryDataset from_samples(std::vector<TrajectorySample> samples,
                                          const RampGeometry* geometry = nullptr,
                                          std::string source = {}) {
        TrajectoryDataset ds;
        ds.source_ = std::move(source);

        std::map<std::string, std::size_t> index;
        for (auto& s : samples) {
            if (!(s.t >= 0.0)) throw RangeError("negative time for vehicle " + s.vehicle_id);
            if (!(s.v >= 0.0)) throw RangeError("negative speed for vehicle " + s.vehicle_id);
            if (!(s.length > 0.0)) throw RangeError("non-positive length for vehicle " + s.vehicle_id);
            if (!(s.width > 0.0)) throw RangeError("non-positive width for vehicle " + s.vehicle_id);
            if (geometry) {
                if (s.lane < 0 || s.lane >= geometry->lane_count()) {
                    throw RangeError("lane " + std::to_string(s.lane) + " out of range for vehicle " +
                                     s.vehicle_id);
                }
                if (s.x < geometry->x_start - s.length || s.x > geometry->x_exit + s.length) {
                    throw RangeError("vehicle " + s.vehicle_id + " at x = " + csv::format(s.x) +
                                     " lies outside the geometry");
                }
            }
            auto [it, inserted] = index.try_emplace(s.vehicle_id, ds.tracks_.size());
            if (inserted) ds.tracks_.push_back(VehicleTrack{s.vehicle_id, {}});
            auto& track = ds.tracks_[it->second];
            if (!track.samples.empty() && !(s.t > track.samples.back().t)) {
                throw IntegrityError("non-monotone time for vehicle " + s.vehicle_id + " at t = " +
                                     csv::format(s.t));
            }
            track.samples.push_back(std::move(s));
        }
        std::sort(ds.tracks_.begin(), ds.tracks_.end(),
                  [](const VehicleTrack& a, const VehicleTrack& b) { return natural_id_less(a.id, b.id); });
        ds.finalize();
        return ds;
    }

    [[nodiscard]] const std::vector<VehicleTrack>& tracks() const noexcept { return tracks_; }
    [[nodiscard]] std::size_t vehicle_count() const noexcept { return tracks_.size(); }
    [[nodiscard]] std::size_t sample_count() const noexcept {
        std::size_t n = 0;
        for (const auto& tr : tracks_) n += tr.samples.size();
        return n;
    }
    [[nodiscard]] bool empty() const noexcept { return tracks_.empty(); }

    /// Global sampling period; 0 when no vehicle has two samples.
    [[nodiscard]] double sample_period() const noexcept { return dt_rec_; }
    [[nodiscard]] double t_min() const noexcept { return t_min_; }
    [[nodiscard]] double t_max() const noexcept { return t_max_; }
    [[nodiscard]] double duration() const noexcept { return t_max_ - t_min_; }
    [[nodiscard]] const std::string& source() const noexcept { return source_; }

    /// Index of the sampling instant closest to t, counted from t_min.
    [[nodiscard]] std::int64_t instant_index(double t) const noexcept {
        if (dt_rec_ <= 0.0) return 0;
        return std::llround((t - t_min_) / dt_rec_);
    }

    friend bool operator==(const TrajectoryDataset& a, const TrajectoryDataset& b) {
        return a.tracks_ == b.tracks_ && a.dt_rec_ == b.dt_rec_;
    }

private:
    void finalize() {
        if (tracks_.empty()) return;
        t_min_ = tracks_.front().samples.front().t;
        t_max_ = t_min_;
        double dt = 0.0;
        for (const auto& tr : tracks_) {
            t_min_ = std::min(t_min_, tr.samples.front().t);
            t_max_ = std::max(t_max_, tr.samples.back().t);
            for (std::size_t i = 1; i < tr.samples.size(); ++i) {
                double d = tr.samples[i].t - tr.samples[i - 1].t;
                if (dt == 0.0 || d < dt) dt = d;
            }
        }
        // Gaps are allowed but must fall on the common sampling grid.
        if (dt > 0.0) {
            for (const auto& tr : tracks_) {
                for (std::size_t i = 1; i < tr.samples.size(); ++i) {
                    double m = (tr.samples[i].t - tr.samples[i - 1].t) / dt;
                    if (std::abs(m - std::round(m)) > 1e-6 * std::max(1.0, m)) {
                        throw IntegrityError("vehicle " + tr.id + " breaks the sampling period " +
                                             csv::format(dt) + " s");
                    }
                }
            }
        }
        dt_rec_ = dt;
    }

    std::vector<VehicleTrack> tracks_;
    double dt_rec_{0.0};
    double t_min_{0.0};
    double t_max_{0.0};
    std::string source_;
};

inline TrajectoryDataset load_trajectories(std::istream& in, const RampGeometry* geometry,
                                           std::string source = "stream") {
    static constexpr std::array<std::string_view, 10> kColumns{
        "t", "vehicle_id", "class", "lane", "x", "y", "v", "a", "length", "width"};

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("missing header line");
    auto header = csv::split(line);
    std::array<int, kColumns.size()> pos{};
    pos.fill(-1);
    for (std::size_t i = 0; i < header.size(); ++i) {
        auto it = std::find(kColumns.begin(), kColumns.end(), header[i]);
        if (it == kColumns.end()) throw SchemaError("unexpected column '" + std::string(header[i]) + "'");
        auto k = static_cast<std::size_t>(it - kColumns.begin());
        if (pos[k] >= 0) throw SchemaError("duplicate column '" + std::string(header[i]) + "'");
        pos[k] = static_cast<int>(i);
    }
    for (std::size_t k = 0; k < kColumns.size(); ++k) {
        if (pos[k] < 0) throw SchemaError("missing column '" + std::string(kColumns[k]) + "'");
    }

    std::vector<TrajectorySample> samples;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        auto f = csv::split(line);
        if (f.size() != kColumns.size()) {
            throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(kColumns.size()) + " fields, got " + std::to_string(f.size()));
        }
        auto field = [&](std::size_t k) { return f[static_cast<std::size_t>(pos[k])]; };
        auto number = [&](std::size_t k) {
            auto v = csv::parse_double(field(k));
            if (!v) {
                throw SchemaError("line " + std::to_string(line_no) + ": column '" + std::string(kColumns[k]) +
                                  "' is not a number");
            }
            return *v;
        };
        TrajectorySample s;
        s.t = number(0);
        s.vehicle_id = std::string(field(1));
        if (s.vehicle_id.empty()) throw SchemaError("line " + std::to_string(line_no) + ": empty vehicle_id");
        auto cls = parse_vehicle_class(field(2));
        if (!cls) {
            throw SchemaError("line " + std::to_string(line_no) + ": unknown class '" + std::string(field(2)) + "'");
        }
        s.vehicle_class = *cls;
        auto lane = csv::parse_int(field(3));
        if (!lane) throw SchemaError("line " + std::to_string(line_no) + ": column 'lane' is not an integer");
        s.lane = static_cast<int>(*lane);
        s.x = number(4);
        s.y = number(5);
        s.v = number(6);
        s.a = number(7);
        s.length = number(8);
        s.width = number(9);
        samples.push_back(std::move(s));
    }
    return TrajectoryDataset::from_samples(std::move(samples), geometry, std::move(source));
}

inline TrajectoryDataset load_trajectories(const std::string& path, const RampGeometry& geometry) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open trajectory file '" + path + "'");
    return load_trajectories(in, &geometry, path);
}

inline void write_sample(std::ostream& out, const TrajectorySample& s) {
    out << csv::format(s.t) << ',' << s.vehicle_id << ',' << to_string(s.vehicle_class) << ',' << s.lane << ','
        << csv::format(s.x) << ',' << csv::format(s.y) << ',' << csv::format(s.v) << ',' << csv::format(s.a)
        << ',' << csv::format(s.length) << ',' << csv::format(s.width) << '\n';
}

/// Writes rows in time-major order, vehicles in dataset order within an instant.
inline void write_trajectories(std::ostream& out, const TrajectoryDataset& ds) {
    out << kTrajectoryHeader << '\n';
    std::vector<const TrajectorySample*> rows;
    rows.reserve(ds.sample_count());
    for (const auto& tr : ds.tracks()) {
        for (const auto& s : tr.samples) rows.push_back(&s);
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const TrajectorySample* a, const TrajectorySample* b) { return a->t < b->t; });
    for (const auto* s : rows) write_sample(out, *s);
}

struct DensitySpeedSample {
    double density{0.0};     // veh/m, all lanes of the segment pooled
    double mean_speed{0.0};  // m/s
};

/// Time-windowed density and mean speed inside a fixed control volume.
/// Only complete windows are reported; windows without vehicles are dropped.
inline std::vector<DensitySpeedSample> control_volume_samples(const TrajectoryDataset& ds,
                                                              const RampGeometry& geometry, SegmentId segment,
                                                              double x_a, double x_b, double window) {
    auto [lo, hi] = geometry.segment_bounds(segment);
    if (!(x_a < x_b) || x_a < lo || x_b > hi) {
        throw GeometryError("control volume [" + csv::format(x_a) + ", " + csv::format(x_b) +
                            ") lies outside segment " + std::to_string(segment_number(segment)));
    }
    const double dt = ds.sample_period();
    if (ds.empty() || dt <= 0.0) return {};
    const double m_real = window / dt;
    const auto per_window = static_cast<std::int64_t>(std::llround(m_real));
    if (per_window < 1 || std::abs(m_real - static_cast<double>(per_window)) > 1e-6 * m_real) {
        throw DomainError("window " + csv::format(window) + " s is not a multiple of the sampling period " +
                          csv::format(dt) + " s");
    }

    const std::int64_t n_instants = ds.instant_index(ds.t_max()) + 1;
    const std::int64_t n_windows = n_instants / per_window;
    std::vector<double> counts(static_cast<std::size_t>(n_windows), 0.0);
    std::vector<double> speed_sums(static_cast<std::size_t>(n_windows), 0.0);

    for (const auto& tr : ds.tracks()) {
        for (const auto& s : tr.samples) {
            if (s.x < x_a || s.x >= x_b) continue;
            auto seg = try_segment_of(geometry, s.x, s.lane);
            if (!seg || *seg != segment) continue;
            auto k = ds.instant_index(s.t) / per_window;
            if (k >= n_windows) continue;
            counts[static_cast<std::size_t>(k)] += 1.0;
            speed_sums[static_cast<std::size_t>(k)] += s.v;
        }
    }

    std::vector<DensitySpeedSample> out;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] == 0.0) continue;
        out.push_back({counts[k] / static_cast<double>(per_window) / (x_b - x_a), speed_sums[k] / counts[k]});
    }
    return out;
}

}  // namespace rampflow
