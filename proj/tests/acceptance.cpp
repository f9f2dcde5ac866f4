// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
// below. Criteria listed in kKnownDeviations are reported as FAIL but do
// not fail the process; any other failure, or a known deviation that
// starts passing, makes the process exit non-zero so the list is kept
// honest.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rampflow/digest.hpp"
#include "rampflow/macro.hpp"
#include "rampflow/report.hpp"
#include "rampflow/safety.hpp"
#include "rampflow/sim.hpp"
#include "support.hpp"

using namespace rampflow;
using rampflow::test::sample;

namespace {

// Criterion 9 is directionally reversed on the stock scenario; see the
// README section on known deviations.
const std::set<int> kKnownDeviations{9};

constexpr double kMassDriftTol = 1e-12;
constexpr double kMergeGrid = 1e-4;
constexpr double kFitExactTol = 1e-9;
constexpr double kFitNoisyRelTol = 0.05;
constexpr double kMttcTol = 2e-3;
constexpr double kFixedPointAccelTol = 1e-9;
constexpr double kClosureRelTol = 0.05;
constexpr double kTransient = 60.0;

struct Verdict {
    bool pass{false};
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

Verdict godunov_conservation() {
    const FundamentalDiagram fd{30.0, 0.12};
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, fd.rho_max);
    MacroSegmentState s{std::vector<double>(100), 10.0, fd};
    for (auto& r : s.density) r = u(rng);
    const double m0 = s.mass();
    const auto t0 = Clock::now();
    for (int k = 0; k < 10000; ++k) s = godunov_step(s, s.default_dt(), 0.0, OutflowBoundary::closed());
    const double runtime = seconds_since(t0);
    const double drift = std::abs(s.mass() - m0) / m0;
    return {drift < kMassDriftTol && runtime < 1.0, "drift " + fmt(drift) + ", runtime " + fmt(runtime) + " s"};
}

Verdict merge_optimality() {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const FundamentalDiagram fd1{25.0, 0.15}, fd2{33.0, 0.45}, fd3{33.0, 0.45};
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double r1 = u(rng) * fd1.rho_max, r2 = u(rng) * fd2.rho_max, r3 = u(rng) * fd3.rho_max;
        const double beta = 0.01 + 0.98 * u(rng);
        const auto f = merge_riemann(r1, r2, r3, fd1, fd2, fd3, MergePriority(beta));
        const auto g = rampflow::test::brute_force_merge(demand(fd1, r1), demand(fd2, r2), supply(fd3, r3), beta,
                                                         kMergeGrid);
        worst = std::max(worst, std::abs(f.f3 - g.total));
    }
    int violations = 0;
    for (int i = 0; i < 10000; ++i) {
        const double r1 = u(rng) * fd1.rho_max, r2 = u(rng) * fd2.rho_max, r3 = u(rng) * fd3.rho_max;
        const auto f = merge_riemann(r1, r2, r3, fd1, fd2, fd3, MergePriority(0.01 + 0.98 * u(rng)));
        const double slack = 1e-15;
        if (f.f1 + f.f2 != f.f3 || f.f1 < 0.0 || f.f2 < 0.0 || f.f1 > demand(fd1, r1) + slack ||
            f.f2 > demand(fd2, r2) + slack || f.f3 > supply(fd3, r3) + slack) {
            ++violations;
        }
    }
    return {worst <= kMergeGrid && violations == 0,
            "max |f3 - grid| " + fmt(worst) + ", Kirchhoff/bound violations " + std::to_string(violations)};
}

Verdict fd_fit() {
    const FundamentalDiagram truth{30.0, 0.12};
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> rho(0.005, 0.115);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<DensitySpeedSample> exact, noisy;
    for (int i = 0; i < 100; ++i) {
        const double r = rho(rng);
        exact.push_back({r, greenshields_speed(truth, r)});
        noisy.push_back({r, greenshields_speed(truth, r) + noise(rng)});
    }
    const auto a = fit_greenshields(exact);
    const auto b = fit_greenshields(noisy);
    const double e_exact = std::max(std::abs(a.v_max - truth.v_max), std::abs(a.rho_max - truth.rho_max));
    const double e_noisy =
        std::max(std::abs(b.v_max / truth.v_max - 1.0), std::abs(b.rho_max / truth.rho_max - 1.0));
    return {e_exact < kFitExactTol && e_noisy < kFitNoisyRelTol,
            "noiseless error " + fmt(e_exact) + ", noisy relative error " + fmt(e_noisy)};
}

Verdict mttc_oracle() {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> dist(0.5, 40.0);
    std::uniform_real_distribution<double> vel(-10.0, 10.0);
    std::uniform_real_distribution<double> acc(-4.0, 4.0);
    const double horizon = 60.0;
    int checked = 0, mismatches = 0, constant_speed = 0, two_roots = 0, no_root = 0, one_root = 0;
    double worst = 0.0;
    while (checked < 1000) {
        const double d = dist(rng);
        const double v = vel(rng);
        const double a = checked % 8 == 0 ? 0.0 : acc(rng);
        const double disc = v * v + 2.0 * a * d;
        if (a != 0.0 && std::abs(disc) < 0.5) continue;  // near-tangent: ill-posed for a 1 ms march
        const auto got = mttc(d, v, a);
        if (got && *got > horizon - 1.0) continue;
        std::optional<double> march;
        for (long k = 1; k * 1e-3 <= horizon; ++k) {
            const double t = k * 1e-3;
            if (d - v * t - 0.5 * a * t * t <= 0.0) {
                march = t;
                break;
            }
        }
        ++checked;
        if (got.has_value() != march.has_value()) {
            ++mismatches;
            continue;
        }
        if (got) worst = std::max(worst, std::abs(*got - *march));
        if (a == 0.0 && v > 0.0) ++constant_speed;
        if (!got) ++no_root;
        if (a < 0.0 && v > 0.0 && disc > 0.0) ++two_roots;  // both roots positive, smallest chosen
        if (a > 0.0 && got) ++one_root;
    }
    const bool coverage = constant_speed > 0 && two_roots > 0 && no_root > 0 && one_root > 0;
    return {mismatches == 0 && worst <= kMttcTol && coverage,
            "max deviation " + fmt(worst * 1e3) + " ms, mismatches " + std::to_string(mismatches) +
                ", branches (const/two-root/one-root/none) " + std::to_string(constant_speed) + "/" +
                std::to_string(two_roots) + "/" + std::to_string(one_root) + "/" + std::to_string(no_root)};
}

double fixed_point_max_accel() {
    Scenario sc;
    sc.geometry.x_junction = 1000.0;
    sc.geometry.x_ramp_end = 1005.0;
    sc.geometry.x_exit = 1010.0;
    sc.geometry.n_through_lanes = 1;
    sc.geometry.lane_widths = {3.0, 3.0};
    sc.downstream_length = 1000.0;
    MicroVehicle follower, leader;
    follower.lane = leader.lane = 1;
    follower.x = 500.0;
    leader.x = 1020.0;  // past the stretch: IDM cruising at its desired speed
    std::vector<MicroVehicle> both{follower, leader};
    const auto& g = sc.geometry;
    const auto f = merge_riemann(segment_density(both, g, SegmentId::ramp), segment_density(both, g, SegmentId::upstream),
                                 segment_density(both, g, SegmentId::downstream), sc.fds[0], sc.fds[1], sc.fds[2],
                                 sc.priority());
    const double v = flow_target_speed(net_spacing(leader, follower), per_lane_flow(f, g, 1, follower.x, true),
                                       sc.fds[1].v_max);
    follower.v = leader.v = v;
    sc.idm.v0 = v;
    auto st = initial_state(sc);
    add_vehicle(st, sc, follower);
    add_vehicle(st, sc, leader);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        advance(st, sc);
        for (const auto& veh : st.population) worst = std::max(worst, std::abs(veh.state.a));
    }
    return worst;
}

Verdict equilibrium() {
    const auto t0 = Clock::now();
    const double a_fixed = fixed_point_max_accel();

    // Steady single-lane demand on a long homogeneous stretch.
    Scenario sc;
    sc.geometry.x_junction = 1000.0;
    sc.geometry.x_ramp_end = 1010.0;
    sc.geometry.x_exit = 1020.0;
    sc.geometry.n_through_lanes = 1;
    sc.geometry.lane_widths = {3.0, 3.0};
    const double q_in = 0.2;
    sc.lane_demand = {LaneDemand{0.0, 25.0}, LaneDemand{q_in, 30.0}};
    sc.arrivals = ArrivalProcess::uniform;
    sc.duration = 300.0;
    const auto r = run(sc);
    // The transient is counted from the moment the stretch is first filled,
    // i.e. the first vehicle reaches its end; before that the road is not
    // yet homogeneous.
    double t_filled = sc.duration;
    for (const auto& tr : r.trajectories.tracks()) {
        for (const auto& s : tr.samples) {
            if (s.x >= sc.geometry.x_exit) t_filled = std::min(t_filled, s.t);
        }
    }
    const double t_measure = t_filled + kTransient;

    std::map<std::int64_t, std::vector<const TrajectorySample*>> by_instant;
    for (const auto& tr : r.trajectories.tracks()) {
        for (const auto& s : tr.samples) by_instant[r.trajectories.instant_index(s.t)].push_back(&s);
    }
    double v_sum = 0.0, s_sum = 0.0;
    int n = 0;
    for (auto& [k, samples] : by_instant) {
        if (samples.front()->t < t_measure) continue;
        std::sort(samples.begin(), samples.end(), [](auto* a, auto* b) { return a->x < b->x; });
        for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
            const auto& f = *samples[i];
            const auto& l = *samples[i + 1];
            if (f.x < 200.0 || f.x >= 800.0) continue;  // interior of the upstream segment
            v_sum += f.v;
            s_sum += l.x - f.x - 0.5 * (l.length + f.length);
            ++n;
        }
    }
    const double runtime = seconds_since(t0);
    if (n == 0) return {false, "no interior samples"};
    const double v_bar = v_sum / n;
    const double s_bar = s_sum / n;
    const double closure = std::abs(v_bar - s_bar * q_in) / v_bar;
    return {a_fixed < kFixedPointAccelTol && closure < kClosureRelTol && runtime < 10.0,
            "fixed-point |a| " + fmt(a_fixed) + ", v " + fmt(v_bar) + " m/s, S_net*Q " + fmt(s_bar * q_in) +
                " m/s, closure " + fmt(100.0 * closure) + " % from t = " + fmt(t_measure) + " s, runtime " + fmt(runtime) + " s"};
}

Verdict adaptation_time_behaviour() {
    RampGeometry g;
    FvdmParams p;
    p.tau_min = 0.7;
    p.tau_max = 9.0;
    bool monotone = true;
    double prev = adaptation_time(g.x_start, 12.0, g, p);
    for (double x = g.x_start; x <= g.x_ramp_end; x += 0.5) {
        const double t = adaptation_time(x, 12.0, g, p);
        monotone = monotone && t <= prev;
        prev = t;
    }
    const double v = 10.0;
    const bool clamps = adaptation_time(g.x_ramp_end, v, g, p) == p.tau_min &&
                        adaptation_time(g.x_ramp_end - 0.69 * v, v, g, p) == p.tau_min &&
                        adaptation_time(g.x_ramp_end - 0.71 * v, v, g, p) > p.tau_min &&
                        adaptation_time(g.x_ramp_end - 2.0 * v, v, g, p) == 2.0 &&
                        adaptation_time(g.x_ramp_end - 8.99 * v, v, g, p) < p.tau_max &&
                        adaptation_time(g.x_ramp_end - 9.01 * v, v, g, p) == p.tau_max &&
                        adaptation_time(g.x_start, 0.0, g, p) == p.tau_max;
    return {monotone && clamps, std::string("monotone ") + (monotone ? "yes" : "no") + ", clamps " +
                                    (clamps ? "exact" : "wrong")};
}

std::string trajectories_csv(const SimResult& r) {
    std::ostringstream out;
    write_trajectories(out, r.trajectories);
    return out.str();
}

std::string events_csv(const SimResult& r) {
    std::ostringstream out;
    write_events(out, r.events);
    return out.str();
}

Verdict determinism(const Scenario& sc) {
    const auto a = run(sc);
    const auto b = run(sc);
    const bool same = sha256_hex(trajectories_csv(a)) == sha256_hex(trajectories_csv(b)) &&
                      sha256_hex(events_csv(a)) == sha256_hex(events_csv(b));
    return {same, "trajectory sha256 " + sha256_hex(trajectories_csv(a)).substr(0, 16) + "..."};
}

struct ModelRun {
    int conflict_sections{0};
    int sections{0};
    std::vector<double> lane_changes;
    double runtime{0.0};
    std::uint64_t injected{0};
};

ModelRun simulate_and_evaluate(Scenario sc, CarFollowingModel m) {
    sc.inside_model = m;
    const auto t0 = Clock::now();
    const auto r = run(sc);
    ModelRun out;
    out.runtime = seconds_since(t0);
    const auto e = evaluate(r.trajectories, sc.geometry, std::span<const SimEvent>(r.events));
    out.conflict_sections = conflict_section_count(e.mttc_combined);
    out.sections = static_cast<int>(e.mttc_combined.size());
    out.lane_changes = e.lane_change_positions;
    out.injected = r.injected;
    return out;
}

double mean(const std::vector<double>& v) {
    return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Verdict safety_direction(const ModelRun& fb, const ModelRun& idm) {
    const bool pass = fb.conflict_sections >= idm.conflict_sections && idm.conflict_sections < 0.5 * idm.sections &&
                      fb.runtime < 120.0 && idm.runtime < 120.0;
    return {pass, "conflict sections flow-based " + std::to_string(fb.conflict_sections) + ", IDM " +
                      std::to_string(idm.conflict_sections) + " of " + std::to_string(idm.sections) + ", runtimes " +
                      fmt(fb.runtime) + " / " + fmt(idm.runtime) + " s"};
}

Verdict lane_change_shift(const ModelRun& fb, const ModelRun& idm) {
    const double a = mean(fb.lane_changes);
    const double b = mean(idm.lane_changes);
    return {a > b, "mean lane-change position flow-based " + fmt(a) + " m (" + std::to_string(fb.lane_changes.size()) +
                       "), IDM " + fmt(b) + " m (" + std::to_string(idm.lane_changes.size()) + ")"};
}

Verdict hand_built_evaluation() {
    const RampGeometry g;
    // A follows B on lane 1 at constant speeds; C moves from the entry lane
    // to lane 1 at x = 134 and stays there.
    std::vector<TrajectorySample> s;
    for (int k = 0; k < 7; ++k) {
        const double t = 0.2 * k;
        s.push_back(sample(t, "A", 1, 22.0 + 5.0 * k, 25.0));
        s.push_back(sample(t, "B", 1, 40.0 + 4.0 * k, 20.0));
        s.push_back(sample(t, "C", k == 0 ? 0 : 1, 130.0 + 4.0 * k, 20.0));
    }
    const auto ds = rampflow::test::dataset(s, g);

    std::map<std::pair<int, double>, double> speed_expected{
        {{1, 20}, 25.0}, {{1, 25}, 25.0}, {{1, 30}, 25.0}, {{1, 35}, 25.0},
        {{1, 40}, (25.0 + 20.0 + 20.0) / 3.0}, {{1, 45}, 22.5}, {{1, 50}, 22.5}, {{1, 55}, 20.0}, {{1, 60}, 20.0},
        {{0, 130}, 20.0}, {{1, 130}, 20.0}, {{1, 135}, 20.0}, {{1, 140}, 20.0}, {{1, 145}, 20.0}, {{1, 150}, 20.0},
    };
    bool profile_ok = true;
    for (const auto& v : section_profile(ds, g, ProfileQuantity::speed)) {
        auto it = speed_expected.find({v.lane, v.section_start});
        if (it == speed_expected.end()) {
            profile_ok = profile_ok && !v.value;
        } else {
            profile_ok = profile_ok && v.value && *v.value == it->second;
        }
    }

    auto hist = lane_change_histogram(ds, g);
    std::vector<int> hist_expected(15, 0);
    hist_expected[6] = 1;  // [120, 140)
    const bool hist_ok = hist == hist_expected;

    // A's MTTC to B is D / 5 with D = 13.5 - k; minima per 20 m section of
    // A's position: 2.1 in [20, 40), 1.5 in [40, 60).
    const auto sections = sectioned_mttc(conflict_pairs(ds, g), g);
    bool mttc_ok = true;
    for (const auto& v : sections) {
        if (v.lane == 1 && v.section_start == 20.0) {
            mttc_ok = mttc_ok && v.value && *v.value == 2.1;
        } else if (v.lane == 1 && v.section_start == 40.0) {
            mttc_ok = mttc_ok && v.value && *v.value == 1.5;
        } else {
            mttc_ok = mttc_ok && !v.value;
        }
    }
    return {profile_ok && hist_ok && mttc_ok, std::string("profile ") + (profile_ok ? "ok" : "mismatch") +
                                                  ", histogram " + (hist_ok ? "ok" : "mismatch") + ", MTTC " +
                                                  (mttc_ok ? "ok" : "mismatch")};
}

}  // namespace

int main() {
    std::map<int, Verdict> results;
    auto record = [&](int id, const std::function<Verdict()>& fn) {
        try {
            results[id] = fn();
        } catch (const std::exception& e) {
            results[id] = {false, std::string("exception: ") + e.what()};
        }
        const auto& v = results[id];
        std::printf("criterion %2d: %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
        std::fflush(stdout);
    };

    const auto stock = load_scenario("stock-ramp");
    record(1, godunov_conservation);
    record(2, merge_optimality);
    record(3, fd_fit);
    record(4, mttc_oracle);
    record(5, equilibrium);
    record(6, adaptation_time_behaviour);
    record(7, [&] { return determinism(stock); });
    ModelRun fb, idm;
    bool runs_ok = true;
    try {
        fb = simulate_and_evaluate(stock, CarFollowingModel::flow_based);
        idm = simulate_and_evaluate(stock, CarFollowingModel::idm);
    } catch (const std::exception& e) {
        runs_ok = false;
        std::printf("stock runs failed: %s\n", e.what());
    }
    record(8, [&] { return runs_ok ? safety_direction(fb, idm) : Verdict{false, "no runs"}; });
    record(9, [&] { return runs_ok ? lane_change_shift(fb, idm) : Verdict{false, "no runs"}; });
    record(10, hand_built_evaluation);

    int unexpected = 0;
    for (const auto& [id, v] : results) {
        const bool known = kKnownDeviations.contains(id);
        if (v.pass == known) {
            ++unexpected;
            std::printf("criterion %2d: %s\n", id,
                        known ? "listed as a known deviation but passed; update the list" : "unexpected failure");
        }
    }
    std::printf("%zu criteria, %zu known deviation(s), %d unexpected result(s)\n", results.size(),
                kKnownDeviations.size(), unexpected);
    return unexpected == 0 ? 0 : 1;
}
