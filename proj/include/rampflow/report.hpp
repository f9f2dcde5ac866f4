#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rampflow/csv.hpp"
#include "rampflow/error.hpp"
#include "rampflow/geometry.hpp"
#include "rampflow/safety.hpp"
#include "rampflow/sim.hpp"
#include "rampflow/trajectory.hpp"

namespace rampflow {

struct LaneSummary {
    int lane{0};
    std::int64_t samples{0};
    std::optional<double> mean_speed;
    std::optional<double> mean_abs_accel;
};

/// Everything `evaluate` derives from one dataset.
struct Evaluation {
    std::vector<SectionValue> speed;
    std::vector<SectionValue> accel;
    std::vector<SectionValue> mttc_lanes;
    std::vector<SectionValue> mttc_combined;
    std::vector<double> lane_change_positions;
    std::vector<int> lane_changes;
    std::array<int, 5> mttc_bins{};
    std::vector<LaneSummary> lanes;
};

[[nodiscard]] inline std::vector<LaneSummary> lane_summaries(const TrajectoryDataset& ds, const RampGeometry& g) {
    std::vector<LaneSummary> out;
    std::vector<double> v_sum(static_cast<std::size_t>(g.lane_count()), 0.0);
    std::vector<double> a_sum(v_sum.size(), 0.0);
    std::vector<std::int64_t> n(v_sum.size(), 0);
    for (const auto& tr : ds.tracks()) {
        for (const auto& s : tr.samples) {
            if (s.x < g.x_start || s.x >= g.x_exit || s.lane < 0 || s.lane >= g.lane_count()) continue;
            const auto k = static_cast<std::size_t>(s.lane);
            v_sum[k] += s.v;
            a_sum[k] += std::abs(s.a);
            ++n[k];
        }
    }
    for (std::size_t k = 0; k < n.size(); ++k) {
        LaneSummary s{static_cast<int>(k), n[k], std::nullopt, std::nullopt};
        if (n[k] > 0) {
            s.mean_speed = v_sum[k] / static_cast<double>(n[k]);
            s.mean_abs_accel = a_sum[k] / static_cast<double>(n[k]);
        }
        out.push_back(s);
    }
    return out;
}

/// Lane changes come from the event log when one is supplied, otherwise
/// they are detected from lateral positions.
[[nodiscard]] inline Evaluation evaluate(const TrajectoryDataset& ds, const RampGeometry& g,
                                         std::optional<std::span<const SimEvent>> events = std::nullopt) {
    Evaluation e;
    e.speed = section_profile(ds, g, ProfileQuantity::speed);
    e.accel = section_profile(ds, g, ProfileQuantity::acceleration);
    const auto obs = conflict_pairs(ds, g);
    e.mttc_lanes = sectioned_mttc(obs, g, false);
    e.mttc_combined = sectioned_mttc(obs, g, true);
    e.lane_change_positions = events ? lane_change_positions(*events) : detect_lane_changes(ds, g);
    e.lane_changes = lane_change_histogram(e.lane_change_positions, g);
    e.mttc_bins = mttc_interval_counts(e.mttc_combined);
    e.lanes = lane_summaries(ds, g);
    return e;
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + p.string() + "'");
    return out;
}

inline std::string value_or(const std::optional<double>& v, const char* missing) {
    return v ? csv::format(*v) : std::string(missing);
}

}  // namespace detail

inline void write_profile(std::ostream& out, std::span<const SectionValue> values) {
    out << "lane,section_start_m,mean_value\n";
    for (const auto& v : values) {
        out << v.lane << ',' << csv::format(v.section_start) << ',' << detail::value_or(v.value, "NA") << '\n';
    }
}

inline void write_mttc_sections(std::ostream& out, std::span<const SectionValue> values) {
    out << "lane,section_start_m,avg_mttc_s_or_SAFE\n";
    for (const auto& v : values) {
        out << v.lane << ',' << csv::format(v.section_start) << ',' << detail::value_or(v.value, "SAFE") << '\n';
    }
}

inline void write_mttc_combined(std::ostream& out, std::span<const SectionValue> values) {
    out << "section_start_m,avg_mttc_s_or_SAFE\n";
    for (const auto& v : values) out << csv::format(v.section_start) << ',' << detail::value_or(v.value, "SAFE") << '\n';
}

inline void write_lane_changes(std::ostream& out, std::span<const int> counts, const RampGeometry& g) {
    const SectionGrid grid(g, kConflictSectionLength);
    out << "section_start_m,count\n";
    for (std::size_t i = 0; i < counts.size(); ++i) out << csv::format(grid.start(i)) << ',' << counts[i] << '\n';
}

inline void write_mttc_bins(std::ostream& out, const std::array<int, 5>& bins) {
    out << "bin,count\n";
    for (std::size_t i = 0; i < bins.size(); ++i) out << kMttcBinLabels[i] << ',' << bins[i] << '\n';
}

inline void write_lane_summary(std::ostream& out, std::span<const LaneSummary> lanes) {
    out << "lane,samples,mean_speed_mps,mean_abs_accel_mps2\n";
    for (const auto& l : lanes) {
        out << l.lane << ',' << l.samples << ',' << detail::value_or(l.mean_speed, "NA") << ','
            << detail::value_or(l.mean_abs_accel, "NA") << '\n';
    }
}

// ---- SVG heatmaps -------------------------------------------------------

enum class HeatmapScale { sequential, mttc };

/// One row per lane (highest lane on top), one cell per section. Empty
/// cells are drawn grey.
inline void write_heatmap_svg(std::ostream& out, std::span<const SectionValue> values, const RampGeometry& g,
                              double section_length, const std::string& title, HeatmapScale scale) {
    const SectionGrid grid(g, section_length);
    const int lanes = g.lane_count();
    const double cell_w = std::max(4.0, 600.0 / static_cast<double>(grid.count()));
    constexpr double cell_h = 28.0;
    constexpr double left = 60.0;
    constexpr double top = 30.0;
    const double width = left + cell_w * static_cast<double>(grid.count()) + 20.0;
    const double height = top + cell_h * lanes + 40.0;

    double lo = 0.0;
    double hi = kMttcThreshold;
    if (scale == HeatmapScale::sequential) {
        bool any = false;
        for (const auto& v : values) {
            if (!v.value) continue;
            lo = any ? std::min(lo, *v.value) : *v.value;
            hi = any ? std::max(hi, *v.value) : *v.value;
            any = true;
        }
        if (!any || hi <= lo) hi = lo + 1.0;
    }
    // Blue (low) to red (high); MTTC runs red (critical) to yellow (3 s).
    auto color = [&](double v) {
        const double u = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
        int r = 0;
        int gr = 0;
        int b = 0;
        if (scale == HeatmapScale::mttc) {
            r = 215;
            gr = static_cast<int>(std::lround(40 + 180 * u));
            b = 40;
        } else {
            r = static_cast<int>(std::lround(40 + 190 * u));
            gr = static_cast<int>(std::lround(80 + 60 * (1.0 - std::abs(2 * u - 1))));
            b = static_cast<int>(std::lround(200 - 170 * u));
        }
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, gr, b);
        return std::string(buf);
    };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << csv::format_fixed(width, 0) << "\" height=\""
        << csv::format_fixed(height, 0) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<text x=\"" << left << "\" y=\"18\">" << title << "</text>\n";
    for (const auto& v : values) {
        if (v.lane < 0 || v.lane >= lanes) continue;
        const auto sec = grid.index_of(v.section_start);
        if (!sec) continue;
        const double x = left + cell_w * static_cast<double>(*sec);
        const double y = top + cell_h * static_cast<double>(lanes - 1 - v.lane);
        out << "<rect x=\"" << csv::format_fixed(x, 2) << "\" y=\"" << csv::format_fixed(y, 2) << "\" width=\""
            << csv::format_fixed(cell_w, 2) << "\" height=\"" << cell_h << "\" fill=\""
            << (v.value ? color(*v.value) : std::string("#bdbdbd")) << "\" stroke=\"#ffffff\" stroke-width=\"0.5\">"
            << "<title>lane " << v.lane << ", " << csv::format(v.section_start) << " m: "
            << detail::value_or(v.value, scale == HeatmapScale::mttc ? "SAFE" : "NA") << "</title></rect>\n";
    }
    for (int lane = 0; lane < lanes; ++lane) {
        const double y = top + cell_h * (lanes - 1 - lane) + cell_h * 0.6;
        out << "<text x=\"4\" y=\"" << csv::format_fixed(y, 2) << "\">lane " << lane << "</text>\n";
    }
    const double y_axis = top + cell_h * lanes + 14.0;
    out << "<text x=\"" << left << "\" y=\"" << y_axis << "\">" << csv::format(g.x_start) << " m</text>\n";
    out << "<text x=\"" << csv::format_fixed(width - 60.0, 2) << "\" y=\"" << y_axis << "\">" << csv::format(g.x_exit)
        << " m</text>\n";
    out << "<text x=\"" << left << "\" y=\"" << y_axis + 16.0 << "\">scale " << csv::format_fixed(lo, 2) << " .. "
        << csv::format_fixed(hi, 2) << (scale == HeatmapScale::mttc ? " s, grey = SAFE" : ", grey = no data")
        << "</text>\n";
    out << "</svg>\n";
}

/// Writes every evaluation artifact into `dir`; returns the file names written.
inline std::vector<std::string> write_evaluation(const Evaluation& e, const RampGeometry& g,
                                                 const std::filesystem::path& dir, bool svg) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    auto emit = [&](const std::string& name, auto&& writer) {
        auto out = detail::open_output(dir / name);
        writer(out);
        files.push_back(name);
    };
    emit("profile_speed.csv", [&](std::ostream& o) { write_profile(o, e.speed); });
    emit("profile_accel.csv", [&](std::ostream& o) { write_profile(o, e.accel); });
    emit("lane_changes.csv", [&](std::ostream& o) { write_lane_changes(o, e.lane_changes, g); });
    emit("mttc_sections.csv", [&](std::ostream& o) { write_mttc_sections(o, e.mttc_lanes); });
    emit("mttc_combined.csv", [&](std::ostream& o) { write_mttc_combined(o, e.mttc_combined); });
    emit("mttc_bins.csv", [&](std::ostream& o) { write_mttc_bins(o, e.mttc_bins); });
    emit("lane_summary.csv", [&](std::ostream& o) { write_lane_summary(o, e.lanes); });
    if (svg) {
        emit("heatmap_speed.svg", [&](std::ostream& o) {
            write_heatmap_svg(o, e.speed, g, kProfileSectionLength, "mean speed (m/s)", HeatmapScale::sequential);
        });
        emit("heatmap_accel.svg", [&](std::ostream& o) {
            write_heatmap_svg(o, e.accel, g, kProfileSectionLength, "mean acceleration (m/s^2)",
                              HeatmapScale::sequential);
        });
        emit("heatmap_mttc.svg", [&](std::ostream& o) {
            write_heatmap_svg(o, e.mttc_lanes, g, kConflictSectionLength, "average MTTC &lt;= 3 s", HeatmapScale::mttc);
        });
    }
    return files;
}

// ---- comparison ---------------------------------------------------------

namespace detail {

/// Rows of a small CSV keyed by header name.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_table(const std::filesystem::path& p, const std::vector<std::string>& expected_header) {
    std::ifstream in(p);
    if (!in) throw SchemaError("missing evaluation output '" + p.string() + "'");
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("'" + p.string() + "' is empty");
    for (auto f : csv::split(csv::trim(line))) t.header.emplace_back(csv::trim(f));
    if (t.header != expected_header) throw SchemaError("'" + p.string() + "' has an unexpected header");
    while (std::getline(in, line)) {
        auto body = csv::trim(line);
        if (body.empty()) continue;
        std::vector<std::string> row;
        for (auto f : csv::split(body)) row.emplace_back(csv::trim(f));
        if (row.size() != t.header.size()) throw SchemaError("'" + p.string() + "': wrong field count");
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline std::optional<double> cell_number(const std::string& s) {
    if (s == "NA" || s == "SAFE") return std::nullopt;
    auto v = csv::parse_double(s);
    if (!v) throw SchemaError("not a number: '" + s + "'");
    return v;
}

}  // namespace detail

/// Evaluation outputs reloaded from a directory, reduced to what the
/// comparison needs.
struct EvaluationSummary {
    std::vector<std::string> profile_keys;  // "lane@section" in file order
    std::vector<std::string> section_keys;  // 20 m section starts
    std::map<int, std::optional<double>> mean_speed;
    std::map<int, std::optional<double>> mean_abs_accel;
    std::vector<std::pair<std::string, int>> lane_changes;
    std::vector<std::pair<std::string, int>> bins;
    int conflict_sections{0};
};

[[nodiscard]] inline EvaluationSummary load_evaluation_summary(const std::filesystem::path& dir) {
    EvaluationSummary s;
    const auto speed = detail::read_table(dir / "profile_speed.csv", {"lane", "section_start_m", "mean_value"});
    for (const auto& r : speed.rows) s.profile_keys.push_back(r[0] + "@" + r[1]);

    const auto lanes =
        detail::read_table(dir / "lane_summary.csv", {"lane", "samples", "mean_speed_mps", "mean_abs_accel_mps2"});
    for (const auto& r : lanes.rows) {
        auto lane = csv::parse_int(r[0]);
        if (!lane) throw SchemaError("lane_summary.csv: bad lane '" + r[0] + "'");
        s.mean_speed[static_cast<int>(*lane)] = detail::cell_number(r[2]);
        s.mean_abs_accel[static_cast<int>(*lane)] = detail::cell_number(r[3]);
    }

    const auto lc = detail::read_table(dir / "lane_changes.csv", {"section_start_m", "count"});
    for (const auto& r : lc.rows) {
        auto c = csv::parse_int(r[1]);
        if (!c) throw SchemaError("lane_changes.csv: bad count '" + r[1] + "'");
        s.lane_changes.emplace_back(r[0], static_cast<int>(*c));
    }

    const auto comb = detail::read_table(dir / "mttc_combined.csv", {"section_start_m", "avg_mttc_s_or_SAFE"});
    for (const auto& r : comb.rows) {
        s.section_keys.push_back(r[0]);
        if (auto v = detail::cell_number(r[1]); v && *v <= kMttcThreshold) ++s.conflict_sections;
    }

    const auto bins = detail::read_table(dir / "mttc_bins.csv", {"bin", "count"});
    for (const auto& r : bins.rows) {
        auto c = csv::parse_int(r[1]);
        if (!c) throw SchemaError("mttc_bins.csv: bad count '" + r[1] + "'");
        s.bins.emplace_back(r[0], static_cast<int>(*c));
    }
    return s;
}

/// metric,run_a,run_b,diff table. Throws GeometryError when the two runs
/// were evaluated on different section grids.
inline void write_comparison(std::ostream& out, const EvaluationSummary& a, const EvaluationSummary& b) {
    if (a.profile_keys != b.profile_keys || a.section_keys != b.section_keys ||
        a.lane_changes.size() != b.lane_changes.size() || a.mean_speed.size() != b.mean_speed.size()) {
        throw GeometryError("runs were evaluated on different geometries (section grids differ)");
    }
    for (std::size_t i = 0; i < a.lane_changes.size(); ++i) {
        if (a.lane_changes[i].first != b.lane_changes[i].first) throw GeometryError("lane-change sections differ");
    }

    auto row = [&](const std::string& metric, const std::optional<double>& x, const std::optional<double>& y) {
        out << metric << ',' << detail::value_or(x, "NA") << ',' << detail::value_or(y, "NA") << ','
            << ((x && y) ? csv::format(*x - *y) : std::string("NA")) << '\n';
    };
    out << "metric,run_a,run_b,diff\n";
    for (const auto& [lane, v] : a.mean_speed) {
        row("lane" + std::to_string(lane) + ".mean_speed_mps", v, b.mean_speed.at(lane));
    }
    for (const auto& [lane, v] : a.mean_abs_accel) {
        row("lane" + std::to_string(lane) + ".mean_abs_accel_mps2", v, b.mean_abs_accel.at(lane));
    }
    for (std::size_t i = 0; i < a.lane_changes.size(); ++i) {
        row("lane_changes@" + a.lane_changes[i].first, a.lane_changes[i].second, b.lane_changes[i].second);
    }
    for (std::size_t i = 0; i < a.bins.size() && i < b.bins.size(); ++i) {
        row("mttc_bin." + a.bins[i].first, a.bins[i].second, b.bins[i].second);
    }
    row("conflict_sections", a.conflict_sections, b.conflict_sections);
    const char* more = a.conflict_sections > b.conflict_sections   ? "run_a"
                       : b.conflict_sections > a.conflict_sections ? "run_b"
                                                                   : "tie";
    out << "more_conflict_sections," << a.conflict_sections << ',' << b.conflict_sections << ',' << more << '\n';
}

}  // namespace rampflow
