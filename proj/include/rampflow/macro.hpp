#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "rampflow/csv.hpp"
#include "rampflow/error.hpp"
#include "rampflow/geometry.hpp"
#include "rampflow/trajectory.hpp"

namespace rampflow {

/// Greenshields parameters of one segment. Densities are pooled over all
/// lanes of the segment.
struct FundamentalDiagram {
    double v_max{30.0};    // m/s
    double rho_max{0.12};  // veh/m

    [[nodiscard]] double critical_density() const noexcept { return 0.5 * rho_max; }
    [[nodiscard]] double capacity() const noexcept { return 0.25 * v_max * rho_max; }

    void validate() const {
        if (!(v_max > 0.0) || !(rho_max > 0.0)) {
            throw ParameterError("fundamental diagram needs v_max > 0 and rho_max > 0");
        }
    }

    friend bool operator==(const FundamentalDiagram&, const FundamentalDiagram&) = default;
};

namespace detail {
inline void check_density(const FundamentalDiagram& fd, double rho) {
    if (!(rho >= 0.0 && rho <= fd.rho_max)) {
        throw DomainError("density " + csv::format(rho) + " outside [0, " + csv::format(fd.rho_max) + "]");
    }
}
}  // namespace detail

[[nodiscard]] inline double greenshields_speed(const FundamentalDiagram& fd, double rho) {
    detail::check_density(fd, rho);
    return fd.v_max * (1.0 - rho / fd.rho_max);
}

[[nodiscard]] inline double flux(const FundamentalDiagram& fd, double rho) {
    return rho * greenshields_speed(fd, rho);
}

/// Largest flow a segment at density rho can send downstream.
[[nodiscard]] inline double demand(const FundamentalDiagram& fd, double rho) {
    detail::check_density(fd, rho);
    return rho <= fd.critical_density() ? flux(fd, rho) : fd.capacity();
}

/// Largest flow a segment at density rho can receive from upstream.
[[nodiscard]] inline double supply(const FundamentalDiagram& fd, double rho) {
    detail::check_density(fd, rho);
    return rho <= fd.critical_density() ? fd.capacity() : flux(fd, rho);
}

/// Least-squares fit of v = v_max - (v_max / rho_max) * rho.
[[nodiscard]] inline FundamentalDiagram fit_greenshields(std::span<const DensitySpeedSample> samples) {
    if (samples.size() < 2) throw RankError("need at least two samples to fit a fundamental diagram");
    const auto n = static_cast<double>(samples.size());
    double mean_rho = 0.0;
    double mean_v = 0.0;
    for (const auto& s : samples) {
        mean_rho += s.density;
        mean_v += s.mean_speed;
    }
    mean_rho /= n;
    mean_v /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (const auto& s : samples) {
        const double dr = s.density - mean_rho;
        sxx += dr * dr;
        sxy += dr * (s.mean_speed - mean_v);
    }
    const double min_rho = std::min_element(samples.begin(), samples.end(), [](auto& a, auto& b) {
                               return a.density < b.density;
                           })->density;
    const double max_rho = std::max_element(samples.begin(), samples.end(), [](auto& a, auto& b) {
                               return a.density < b.density;
                           })->density;
    if (!(max_rho > min_rho) || !(sxx > 0.0)) {
        throw RankError("fit needs at least two distinct densities");
    }
    const double slope = sxy / sxx;
    const double intercept = mean_v - slope * mean_rho;
    if (!(slope < 0.0) || !(intercept > 0.0)) {
        throw FitError("non-physical Greenshields fit (intercept " + csv::format(intercept) + ", slope " +
                       csv::format(slope) + ")");
    }
    return FundamentalDiagram{intercept, intercept / -slope};
}

/// Share of downstream supply granted to the ramp under congestion.
class MergePriority {
public:
    explicit MergePriority(double beta) : beta_(beta) {
        if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("priority beta must lie in (0, 1)");
    }
    [[nodiscard]] double beta() const noexcept { return beta_; }

private:
    double beta_;
};

/// Junction fluxes: ramp (f1), upstream mainline (f2), downstream mainline (f3).
struct CouplingFluxes {
    double f1{0.0};
    double f2{0.0};
    double f3{0.0};

    friend bool operator==(const CouplingFluxes&, const CouplingFluxes&) = default;
};

/// Flow-maximising 2-in/1-out merge for given demands and supply.
[[nodiscard]] inline CouplingFluxes merge_fluxes(double d1, double d2, double s3, MergePriority priority) {
    if (d1 + d2 <= s3) return {d1, d2, d1 + d2};
    // Congested: take the maximiser closest to the priority split beta * s3.
    const double f1 = std::min(d1, std::max(priority.beta() * s3, s3 - d2));
    const double f2 = s3 - f1;
    return {f1, f2, f1 + f2};
}

[[nodiscard]] inline CouplingFluxes merge_riemann(double rho1, double rho2, double rho3,
                                                  const FundamentalDiagram& fd1, const FundamentalDiagram& fd2,
                                                  const FundamentalDiagram& fd3, MergePriority priority) {
    return merge_fluxes(demand(fd1, rho1), demand(fd2, rho2), supply(fd3, rho3), priority);
}

/// Cell-averaged densities on a uniform grid.
struct MacroSegmentState {
    std::vector<double> density;
    double dx{10.0};
    FundamentalDiagram fd{};

    [[nodiscard]] double mass() const noexcept {
        return std::accumulate(density.begin(), density.end(), 0.0) * dx;
    }
    [[nodiscard]] double max_stable_dt() const noexcept { return dx / fd.v_max; }
    /// Default standalone step: 0.9 of the CFL limit.
    [[nodiscard]] double default_dt() const noexcept { return 0.9 * max_stable_dt(); }
};

/// Downstream boundary: the flow the road beyond the last cell can accept.
struct OutflowBoundary {
    double supply{std::numeric_limits<double>::infinity()};

    static OutflowBoundary closed() noexcept { return {0.0}; }
    static OutflowBoundary free() noexcept { return {}; }
};

/// One Godunov step with demand/supply interface fluxes.
[[nodiscard]] inline MacroSegmentState godunov_step(const MacroSegmentState& state, double dt, double inflow,
                                                    OutflowBoundary outflow) {
    if (!(dt > 0.0)) throw StabilityError("time step must be positive");
    if (dt > state.max_stable_dt() * (1.0 + 1e-12)) {
        throw StabilityError("CFL violated: dt = " + csv::format(dt) + " s exceeds dx / v_max = " +
                             csv::format(state.max_stable_dt()) + " s");
    }
    if (inflow < 0.0) throw DomainError("inflow must be non-negative");
    const auto& fd = state.fd;
    const std::size_t n = state.density.size();
    if (n == 0) return state;

    // interface[i] is the flux through the left edge of cell i; interface[n] the outflow.
    std::vector<double> interface(n + 1);
    interface[0] = std::min(inflow, supply(fd, state.density[0]));
    for (std::size_t i = 1; i < n; ++i) {
        interface[i] = std::min(demand(fd, state.density[i - 1]), supply(fd, state.density[i]));
    }
    interface[n] = std::min(demand(fd, state.density[n - 1]), std::max(0.0, outflow.supply));

    MacroSegmentState next = state;
    const double ratio = dt / state.dx;
    for (std::size_t i = 0; i < n; ++i) {
        next.density[i] = std::clamp(state.density[i] - ratio * (interface[i + 1] - interface[i]), 0.0, fd.rho_max);
    }
    return next;
}

/// Ramp share of junction throughput, averaged over congested windows.
/// A window is congested when the mean downstream speed falls below half
/// of the downstream free-flow speed.
[[nodiscard]] inline MergePriority estimate_beta(const TrajectoryDataset& ds, const RampGeometry& geometry,
                                                 const FundamentalDiagram& downstream, double window = 10.0) {
    const double dt = ds.sample_period();
    if (ds.empty() || dt <= 0.0) throw EstimationError("dataset has no sampled motion to estimate beta from");
    const auto per_window = std::max<std::int64_t>(1, std::llround(window / dt));
    const auto n_windows = static_cast<std::size_t>(ds.instant_index(ds.t_max()) / per_window + 1);

    std::vector<double> speed_sum(n_windows, 0.0);
    std::vector<double> speed_count(n_windows, 0.0);
    std::vector<double> ramp_count(n_windows, 0.0);
    std::vector<double> main_count(n_windows, 0.0);
    auto window_of = [&](double t) { return static_cast<std::size_t>(ds.instant_index(t) / per_window); };

    for (const auto& tr : ds.tracks()) {
        for (std::size_t i = 0; i < tr.samples.size(); ++i) {
            const auto& s = tr.samples[i];
            const auto k = window_of(s.t);
            if (try_segment_of(geometry, s.x, s.lane) == SegmentId::downstream) {
                speed_sum[k] += s.v;
                speed_count[k] += 1.0;
            }
            if (i == 0) continue;
            const auto& p = tr.samples[i - 1];
            if (p.lane == 0 && s.lane >= 1) {
                ramp_count[k] += 1.0;
            } else if (p.lane >= 1 && s.lane >= 1 && p.x < geometry.x_junction && s.x >= geometry.x_junction) {
                main_count[k] += 1.0;
            }
        }
    }

    double ratio_sum = 0.0;
    int congested = 0;
    for (std::size_t k = 0; k < n_windows; ++k) {
        if (speed_count[k] == 0.0) continue;
        if (!(speed_sum[k] / speed_count[k] < 0.5 * downstream.v_max)) continue;
        const double total = ramp_count[k] + main_count[k];
        if (total == 0.0) continue;
        ratio_sum += ramp_count[k] / total;
        ++congested;
    }
    if (congested == 0) throw EstimationError("no congested interval found to estimate beta");
    return MergePriority(std::clamp(ratio_sum / congested, 0.05, 0.95));
}

}  // namespace rampflow
