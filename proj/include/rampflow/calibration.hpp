#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rampflow/csv.hpp"
#include "rampflow/error.hpp"
#include "rampflow/geometry.hpp"
#include "rampflow/macro.hpp"
#include "rampflow/trajectory.hpp"

namespace rampflow {

/// Fitted fundamental diagrams per segment plus the junction priority.
struct Calibration {
    std::array<FundamentalDiagram, 3> fds{};
    double beta{0.3};
    bool beta_estimated{false};
    std::string beta_note;  // why the default was used, when it was
};

/// Control volume used for a segment: the whole segment.
[[nodiscard]] inline std::pair<double, double> calibration_volume(const RampGeometry& g, SegmentId s) {
    return g.segment_bounds(s);
}

/// Fits every segment, then estimates beta against the fitted downstream
/// diagram. Fit failures propagate with the segment named; a failed beta
/// estimate falls back to `default_beta`.
[[nodiscard]] inline Calibration calibrate(const TrajectoryDataset& ds, const RampGeometry& g, double window,
                                           double default_beta) {
    if (ds.empty()) throw RankError("no samples: the trajectory dataset is empty");
    Calibration c;
    for (int n = 1; n <= 3; ++n) {
        const auto seg = segment_from_number(n);
        const auto [a, b] = calibration_volume(g, seg);
        const auto samples = control_volume_samples(ds, g, seg, a, b, window);
        const auto label = "segment " + std::to_string(n);
        try {
            c.fds[static_cast<std::size_t>(n - 1)] = fit_greenshields(samples);
        } catch (const RankError& e) {
            throw RankError(label + ": " + e.what());
        } catch (const FitError& e) {
            throw FitError(label + ": " + e.what());
        }
    }
    try {
        c.beta = estimate_beta(ds, g, c.fds[2], window).beta();
        c.beta_estimated = true;
    } catch (const EstimationError& e) {
        c.beta = default_beta;
        c.beta_note = e.what();
    }
    return c;
}

inline constexpr std::string_view kCalibrationHeader = "segment,v_max_mps,rho_max_vpm,beta,beta_source";

/// One row per segment, then a `junction` row carrying beta and whether it
/// was estimated or defaulted.
inline void write_calibration(std::ostream& out, const Calibration& c) {
    out << kCalibrationHeader << '\n';
    for (int n = 1; n <= 3; ++n) {
        const auto& fd = c.fds[static_cast<std::size_t>(n - 1)];
        out << n << ',' << csv::format(fd.v_max) << ',' << csv::format(fd.rho_max) << ",,\n";
    }
    out << "junction,,," << csv::format(c.beta) << ',' << (c.beta_estimated ? "estimated" : "default") << '\n';
}

[[nodiscard]] inline Calibration load_calibration(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != kCalibrationHeader) {
        throw SchemaError("calibration file must start with '" + std::string(kCalibrationHeader) + "'");
    }
    Calibration c;
    std::array<bool, 3> seen{};
    bool have_beta = false;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto body = csv::trim(line);
        if (body.empty()) continue;
        const auto f = csv::split(body);
        const auto where = "calibration line " + std::to_string(line_no);
        if (f.size() != 5) throw SchemaError(where + ": expected 5 fields");
        if (csv::trim(f[0]) == "junction") {
            const auto b = csv::parse_double(f[3]);
            if (!b || !(*b > 0.0 && *b < 1.0)) throw SchemaError(where + ": beta must be a number in (0, 1)");
            c.beta = *b;
            c.beta_estimated = csv::trim(f[4]) == "estimated";
            have_beta = true;
            continue;
        }
        const auto seg = csv::parse_int(f[0]);
        const auto vmax = csv::parse_double(f[1]);
        const auto rmax = csv::parse_double(f[2]);
        if (!seg || *seg < 1 || *seg > 3 || !vmax || !rmax) throw SchemaError(where + ": malformed segment row");
        if (!(*vmax > 0.0 && *rmax > 0.0)) throw SchemaError(where + ": v_max and rho_max must be positive");
        c.fds[static_cast<std::size_t>(*seg - 1)] = FundamentalDiagram{*vmax, *rmax};
        seen[static_cast<std::size_t>(*seg - 1)] = true;
    }
    if (!(seen[0] && seen[1] && seen[2])) throw SchemaError("calibration file must list segments 1, 2 and 3");
    if (!have_beta) throw SchemaError("calibration file has no junction row");
    return c;
}

[[nodiscard]] inline Calibration load_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open calibration file '" + path + "'");
    return load_calibration(in);
}

}  // namespace rampflow
