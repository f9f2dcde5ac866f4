#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rampflow/safety.hpp"
#include "support.hpp"

using namespace rampflow;
using rampflow::test::sample;

namespace {

/// First 1 ms grid time at which the constant-acceleration gap
/// D - v_d t - a_d t^2 / 2 reaches zero, if any within the horizon.
std::optional<double> collision_time_by_marching(double d, double v_d, double a_d, double horizon) {
    const double h = 1e-3;
    for (long k = 1; k * h <= horizon; ++k) {
        const double t = k * h;
        if (d - v_d * t - 0.5 * a_d * t * t <= 0.0) return t;
    }
    return std::nullopt;
}

ConflictObservation obs(std::string leader, std::string follower, int lane, double x, std::optional<double> m) {
    ConflictObservation o;
    o.leader = std::move(leader);
    o.follower = std::move(follower);
    o.lane = lane;
    o.follower_x = x;
    o.mttc = m;
    return o;
}

std::optional<double> section_value(const std::vector<SectionValue>& v, int lane, double start) {
    for (const auto& s : v) {
        if (s.lane == lane && s.section_start == start) return s.value;
    }
    ADD_FAILURE() << "no section " << lane << "/" << start;
    return std::nullopt;
}

const RampGeometry kG{};

}  // namespace

TEST(Mttc, Examples) {
    EXPECT_DOUBLE_EQ(*mttc(20.0, 5.0, 0.0), 4.0);
    EXPECT_NEAR(*mttc(20.0, 0.0, 2.0), std::sqrt(20.0), 1e-12);
    EXPECT_FALSE(mttc(20.0, -5.0, -1.0).has_value());
    EXPECT_FALSE(mttc(20.0, 0.0, 0.0).has_value());
    EXPECT_FALSE(mttc(20.0, -1.0, 0.0).has_value());
    EXPECT_THROW((void)mttc(-1.0, 1.0, 0.0), DomainError);
}

TEST(Mttc, MatchesKinematicMarching) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> dist(0.5, 50.0);
    std::uniform_real_distribution<double> vel(-10.0, 10.0);
    std::uniform_real_distribution<double> acc(-4.0, 4.0);
    const double horizon = 60.0;
    int with_value = 0;
    int without_value = 0;
    for (int i = 0; i < 1000; ++i) {
        const double d = dist(rng);
        const double v = vel(rng);
        const double a = i % 10 == 0 ? 0.0 : acc(rng);
        // Near-tangent trajectories are ill-conditioned for a 1 ms march.
        if (a != 0.0 && std::abs(v * v + 2.0 * a * d) < 0.5) continue;
        const auto expected = collision_time_by_marching(d, v, a, horizon);
        const auto got = mttc(d, v, a);
        if (got && *got > horizon - 1.0) continue;
        ASSERT_EQ(got.has_value(), expected.has_value()) << d << " " << v << " " << a;
        if (got) {
            EXPECT_NEAR(*got, *expected, 2e-3);
            ++with_value;
        } else {
            ++without_value;
        }
    }
    EXPECT_GT(with_value, 100);
    EXPECT_GT(without_value, 100);
}

TEST(Mttc, ConstantSpeedBranchIsExact) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 50.0);
    for (int i = 0; i < 1000; ++i) {
        const double d = u(rng), v = u(rng);
        EXPECT_EQ(*mttc(d, v, 0.0), d / v);
    }
}

TEST(Mttc, ScaleCovariant) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> dist(0.5, 50.0);
    std::uniform_real_distribution<double> vel(-10.0, 10.0);
    std::uniform_real_distribution<double> acc(-4.0, 4.0);
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    for (int i = 0; i < 1000; ++i) {
        const double d = dist(rng), v = vel(rng), a = acc(rng), k = scale(rng);
        const auto base = mttc(d, v, a);
        const auto scaled = mttc(k * d, k * v, k * a);
        ASSERT_EQ(base.has_value(), scaled.has_value());
        if (base) {
            EXPECT_NEAR(*scaled, *base, 1e-9 * *base);
        }
    }
}

TEST(Footprint, Examples) {
    auto centered = sample(0, "1", 1, 50, 10, 0, 4.5, 1.8, 4.5);
    EXPECT_EQ(footprint_lanes(centered, kG), std::vector<int>{1});
    auto crossing = sample(0, "1", 1, 50, 10, 0, 4.5, 1.8, 3.8);
    EXPECT_EQ(footprint_lanes(crossing, kG), (std::vector<int>{0, 1}));
    auto exact = sample(0, "1", 1, 50, 10, 0, 4.5, 3.0, 4.5);
    EXPECT_EQ(footprint_lanes(exact, kG), std::vector<int>{1});
}

TEST(Footprint, EntryLaneUnavailablePastItsEnd) {
    auto s = sample(0, "1", 1, kG.x_ramp_end + 10.0, 10, 0, 4.5, 1.8, 3.8);
    EXPECT_EQ(footprint_lanes(s, kG), std::vector<int>{1});
}

TEST(ConflictPairs, OnePairPerInstant) {
    std::vector<TrajectorySample> s;
    for (int k = 0; k < 3; ++k) {
        s.push_back(sample(0.2 * k, "a", 1, 50 + 4 * k, 20, 0.5));
        s.push_back(sample(0.2 * k, "b", 1, 80 + 4 * k, 18, -0.5));
    }
    auto pairs = conflict_pairs(rampflow::test::dataset(s, kG), kG);
    ASSERT_EQ(pairs.size(), 3u);
    for (const auto& p : pairs) {
        EXPECT_EQ(p.leader, "b");
        EXPECT_EQ(p.follower, "a");
        EXPECT_NEAR(p.distance, 30.0 - 4.5, 1e-12);
        EXPECT_DOUBLE_EQ(p.v_d, 2.0);
        EXPECT_DOUBLE_EQ(p.a_d, 1.0);
        EXPECT_EQ(p.mttc, mttc(p.distance, 2.0, 1.0));
    }
}

TEST(ConflictPairs, StraddlingVehicleAppearsOnBothLanes) {
    std::vector<TrajectorySample> s{
        sample(0, "m", 0, 150, 15, 0, 4.5, 1.8, 3.0),
        sample(0, "r", 0, 170, 15),
        sample(0, "t", 1, 175, 20),
    };
    auto pairs = conflict_pairs(rampflow::test::dataset(s, kG), kG);
    ASSERT_EQ(pairs.size(), 2u);
    std::vector<int> lanes;
    for (const auto& p : pairs) {
        EXPECT_EQ(p.follower, "m");
        lanes.push_back(p.lane);
    }
    std::sort(lanes.begin(), lanes.end());
    EXPECT_EQ(lanes, (std::vector<int>{0, 1}));
}

TEST(ConflictPairs, SingleVehicleHasNone) {
    std::vector<TrajectorySample> s{sample(0, "1", 1, 50, 10), sample(0.2, "1", 1, 52, 10)};
    EXPECT_TRUE(conflict_pairs(rampflow::test::dataset(s, kG), kG).empty());
}

TEST(SectionProfile, Examples) {
    // One vehicle at 20 m/s inside [10, 15).
    std::vector<TrajectorySample> one{sample(0, "1", 2, 11, 20), sample(0.2, "1", 2, 14.9, 20)};
    auto p1 = section_profile(rampflow::test::dataset(one, kG), kG, ProfileQuantity::speed);
    EXPECT_EQ(section_value(p1, 2, 10.0), 20.0);
    EXPECT_FALSE(section_value(p1, 2, 15.0).has_value());

    std::vector<TrajectorySample> two{sample(0, "1", 2, 11, 18), sample(0, "2", 2, 13, 22)};
    auto p2 = section_profile(rampflow::test::dataset(two, kG), kG, ProfileQuantity::speed);
    EXPECT_EQ(section_value(p2, 2, 10.0), 20.0);
}

TEST(SectionProfile, HandEnumeratedThreeVehicles) {
    // Sections [0,5) and [5,10) on lane 1, plus one vehicle on lane 2.
    std::vector<TrajectorySample> s{
        sample(0.0, "a", 1, 1.0, 10, 1.0),  sample(0.2, "a", 1, 3.0, 12, 2.0), sample(0.4, "a", 1, 6.0, 14, 0.0),
        sample(0.0, "b", 1, 5.0, 8, -1.0),  sample(0.2, "b", 1, 7.0, 6, -3.0),
        sample(0.2, "c", 2, 4.0, 30, 0.5),
    };
    auto ds = rampflow::test::dataset(s, kG);
    auto speed = section_profile(ds, kG, ProfileQuantity::speed);
    auto accel = section_profile(ds, kG, ProfileQuantity::acceleration);
    EXPECT_DOUBLE_EQ(*section_value(speed, 1, 0.0), 11.0);
    EXPECT_DOUBLE_EQ(*section_value(speed, 1, 5.0), (14.0 + 8.0 + 6.0) / 3.0);
    EXPECT_DOUBLE_EQ(*section_value(speed, 2, 0.0), 30.0);
    EXPECT_DOUBLE_EQ(*section_value(accel, 1, 0.0), 1.5);
    EXPECT_DOUBLE_EQ(*section_value(accel, 1, 5.0), -4.0 / 3.0);
    EXPECT_FALSE(section_value(speed, 0, 0.0).has_value());
}

TEST(SectionProfile, InvariantUnderRelabelingAndReordering) {
    std::vector<TrajectorySample> s;
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 30.0);
    for (int id = 0; id < 10; ++id) {
        for (int k = 0; k < 20; ++k) s.push_back(sample(0.2 * k, std::to_string(id), 1 + id % 3, 10 * id + k, u(rng)));
    }
    auto a = section_profile(rampflow::test::dataset(s, kG), kG, ProfileQuantity::speed);
    for (auto& x : s) x.vehicle_id = "v" + std::to_string(99 - std::stoi(x.vehicle_id));
    // Interleave vehicles differently while keeping each track in time order.
    std::shuffle(s.begin(), s.end(), rng);
    std::stable_sort(s.begin(), s.end(), [](const auto& x, const auto& y) { return x.t < y.t; });
    auto b = section_profile(rampflow::test::dataset(s, kG), kG, ProfileQuantity::speed);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].value.has_value(), b[i].value.has_value());
        if (a[i].value) {
            EXPECT_NEAR(*a[i].value, *b[i].value, 1e-12);
        }
    }
}

TEST(LaneChangeHistogram, Examples) {
    std::vector<double> none;
    auto h0 = lane_change_histogram(none, kG);
    EXPECT_EQ(h0.size(), 15u);
    EXPECT_TRUE(std::all_of(h0.begin(), h0.end(), [](int c) { return c == 0; }));
    std::vector<double> one{130.0};
    auto h1 = lane_change_histogram(one, kG);
    EXPECT_EQ(h1[6], 1);
    EXPECT_EQ(std::accumulate(h1.begin(), h1.end(), 0), 1);
}

TEST(LaneChangeHistogram, EventsCountOnlyEntryToMain) {
    std::vector<SimEvent> events{{1.0, EventType::lane_change, 1, 0, 1, 130.0},
                                 {2.0, EventType::injection, 2, 0, 0, -150.0},
                                 {3.0, EventType::lane_change, 3, 1, 2, 140.0}};
    auto h = lane_change_histogram(std::span<const SimEvent>(events), kG);
    EXPECT_EQ(h[6], 1);
    EXPECT_EQ(std::accumulate(h.begin(), h.end(), 0), 1);
}

TEST(LaneChangeDetection, CompletedChangeCountedOnce) {
    std::vector<TrajectorySample> s;
    for (int k = 0; k < 30; ++k) {
        const double y = k < 10 ? 1.5 : (k < 20 ? 1.5 + 0.3 * (k - 9) : 4.5);
        s.push_back(sample(0.2 * k, "1", y < 3.0 ? 0 : 1, 100 + 3 * k, 15, 0, 4.5, 1.8, y));
    }
    auto ds = rampflow::test::dataset(s, kG);
    auto pos = detect_lane_changes(ds, kG);
    ASSERT_EQ(pos.size(), 1u);
    EXPECT_DOUBLE_EQ(pos[0], 100 + 3 * 15);  // first sample nearer lane 1
}

TEST(LaneChangeDetection, OscillationAndBriefExcursionDoNotCount) {
    std::vector<TrajectorySample> s;
    for (int k = 0; k < 30; ++k) {
        const double y = k % 2 == 0 ? 2.0 : 2.9;  // corner crosses, center stays nearer lane 0
        s.push_back(sample(0.2 * k, "osc", 0, 100 + 3 * k, 15, 0, 4.5, 1.8, y));
        const double y2 = (k >= 10 && k < 13) ? 4.0 : 1.5;  // 0.6 s on lane 1, then back
        s.push_back(sample(0.2 * k, "brief", y2 < 3.0 ? 0 : 1, 50 + 3 * k, 15, 0, 4.5, 1.8, y2));
    }
    auto ds = rampflow::test::dataset(s, kG);
    EXPECT_TRUE(detect_lane_changes(ds, kG).empty());
}

TEST(SectionedMttc, AverageOfQualifyingMinima) {
    std::vector<ConflictObservation> o{
        obs("l1", "f1", 1, 25, 2.5), obs("l1", "f1", 1, 28, 2.0),  // pair minimum 2.0
        obs("l2", "f2", 1, 30, 4.0),                                 // above threshold
        obs("l3", "f3", 1, 70, std::nullopt),                        // never closes
    };
    auto sec = sectioned_mttc(o, kG);
    EXPECT_EQ(section_value(sec, 1, 20.0), 2.0);
    EXPECT_FALSE(section_value(sec, 1, 60.0).has_value());
    EXPECT_FALSE(section_value(sec, 1, 0.0).has_value());
}

TEST(SectionedMttc, BoundaryThreeIsIncluded) {
    std::vector<ConflictObservation> o{obs("a", "b", 2, 45, 1.0), obs("c", "d", 2, 46, 2.0),
                                       obs("e", "f", 2, 47, 3.0)};
    auto sec = sectioned_mttc(o, kG);
    EXPECT_DOUBLE_EQ(*section_value(sec, 2, 40.0), 2.0);
}

TEST(SectionedMttc, PooledLanesShareOneRow) {
    std::vector<ConflictObservation> o{obs("a", "b", 1, 45, 1.0), obs("c", "d", 2, 46, 2.0)};
    auto sec = sectioned_mttc(o, kG, true);
    EXPECT_EQ(sec.size(), 15u);
    EXPECT_DOUBLE_EQ(*section_value(sec, -1, 40.0), 1.5);
}

TEST(SectionedMttc, InvariantUnderReorderingAndRelabeling) {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> x(0.0, 300.0);
    std::uniform_real_distribution<double> m(0.2, 6.0);
    std::vector<ConflictObservation> o;
    for (int i = 0; i < 500; ++i) {
        o.push_back(obs("l" + std::to_string(i % 37), "f" + std::to_string(i % 41), i % 4, x(rng), m(rng)));
    }
    auto a = sectioned_mttc(o, kG);
    for (auto& ob : o) {
        ob.leader = "L" + ob.leader;
        ob.follower = "F" + ob.follower;
    }
    std::shuffle(o.begin(), o.end(), rng);
    auto b = sectioned_mttc(o, kG);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].value.has_value(), b[i].value.has_value());
        if (a[i].value) {
            EXPECT_NEAR(*a[i].value, *b[i].value, 1e-12);
        }
    }
}

TEST(MttcBins, Examples) {
    std::vector<SectionValue> safe(5);
    EXPECT_EQ(mttc_interval_counts(safe), (std::array<int, 5>{0, 0, 0, 0, 5}));
    std::vector<SectionValue> v{{-1, 0, 1.0}, {-1, 20, 1.7}, {-1, 40, 2.9}, {-1, 60, std::nullopt}};
    EXPECT_EQ(mttc_interval_counts(v), (std::array<int, 5>{1, 1, 0, 1, 1}));
    std::vector<SectionValue> edge{{-1, 0, 1.5}, {-1, 20, 3.0}, {-1, 40, 3.01}};
    EXPECT_EQ(mttc_interval_counts(edge), (std::array<int, 5>{0, 1, 0, 1, 1}));
    EXPECT_EQ(conflict_section_count(edge), 2);
}
