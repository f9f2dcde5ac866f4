#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "rampflow/commands.hpp"

namespace {

std::string joined_args(int argc, char** argv) {
    std::string s;
    for (int i = 1; i < argc; ++i) {
        if (i > 1) s += ' ';
        s += argv[i];
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace rampflow;
    CLI::App app{"On-ramp traffic simulation and safety evaluation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", RAMPFLOW_VERSION);
    std::string format = "csv";
    app.add_option("--format", format, "Output table format")->check(CLI::IsMember({"csv"}));

    const auto args = joined_args(argc, argv);

    CalibrateOptions cal;
    cal.args = args;
    auto* c = app.add_subcommand("calibrate", "Fit fundamental diagrams and the merge priority to trajectories");
    c->add_option("--in", cal.input, "Trajectory CSV")->required();
    c->add_option("--scenario", cal.scenario, "Scenario file or 'stock-ramp' (geometry, default beta)");
    c->add_option("--out", cal.out_dir, "Output directory")->required();
    c->add_option("--window", cal.window, "Aggregation window in seconds")->check(CLI::PositiveNumber);

    SimulateOptions sim;
    sim.args = args;
    std::uint64_t seed = 0;
    std::string model;
    auto* s = app.add_subcommand("simulate", "Run the hybrid simulation");
    s->add_option("--scenario", sim.scenario, "Scenario file or 'stock-ramp'");
    s->add_option("--out", sim.out_dir, "Output directory")->required();
    auto* seed_opt = s->add_option("--seed", seed, "Override the scenario seed");
    s->add_option("--model", model, "Override the model inside the stretch")
        ->check(CLI::IsMember({"flow_based", "idm"}));
    s->add_option("--calibration", sim.calibration, "calibration.csv overriding diagrams and beta");

    EvaluateOptions ev;
    ev.args = args;
    auto* e = app.add_subcommand("evaluate", "Compute profiles, lane changes and MTTC sections");
    e->add_option("--in", ev.input, "Trajectory CSV")->required();
    e->add_option("--scenario", ev.scenario, "Scenario file or 'stock-ramp' (geometry)");
    e->add_option("--events", ev.events, "Event CSV from simulate (exact lane-change positions)");
    e->add_option("--out", ev.out_dir, "Output directory")->required();
    e->add_flag("--svg", ev.svg, "Also render SVG heatmaps");

    CompareOptions cmp;
    cmp.args = args;
    std::vector<std::string> runs;
    auto* k = app.add_subcommand("compare", "Compare two evaluate output directories");
    k->add_option("--in", runs, "Two evaluate output directories (run A, run B)")->required()->expected(2);
    k->add_option("--out", cmp.out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitInput;
    }

    const Logger log(std::cerr);
    if (c->parsed()) return cmd_calibrate(cal, log);
    if (s->parsed()) {
        if (*seed_opt) sim.seed = seed;
        if (!model.empty()) sim.model = model == "idm" ? CarFollowingModel::idm : CarFollowingModel::flow_based;
        return cmd_simulate(sim, log);
    }
    if (e->parsed()) return cmd_evaluate(ev, log);
    cmp.run_a = runs.at(0);
    cmp.run_b = runs.at(1);
    return cmd_compare(cmp, log);
}
